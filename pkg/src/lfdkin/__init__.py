"""Deterministic phase-space solver for the Landau-Fermi-Dirac kinetic
equation with regularized Coulomb-type kernels, vanishing viscosity and
frozen-coefficient Picard iteration."""

from .grids import (PERIODIC, BOX, GridError, PhaseGrid, SpatialGrid,
                    VelocityGrid, build_phase_grid, integrate,
                    integrate_velocity)
from .fields import DensityField, FieldError, make_initial_datum
from .kernel import (CrossSectionSpec, KernelConfig, KernelError, KernelTable,
                     build_kernel_table, gamma_cross_section,
                     kernel_divergence, kernel_invariant_report,
                     kernel_matrix, kernel_sqrt, mollified_cross_section,
                     projector, projector_regularized)
from .mean_field import (CoefficientFields, EllipticityProbe, MeanFieldError,
                         coefficient_fields, ellipticity_probe,
                         lattice_convolve)
from .initial_data import (EnvelopeSpec, envelope_check, fit_envelope,
                           regularize_initial_datum)
from .evolution import (EvolutionError, FrozenOperator, PicardError,
                        SolverConfig, StepReport, advance, assemble_frozen,
                        parabolic_substep, picard_fixed_point,
                        transport_step)
from .diagnostics import (DiagnosticsRecord, conserved_moments, drift_check,
                          default_test_pack, entropy_dissipation,
                          entropy_inequality_check, quantum_entropy,
                          weak_residual, weighted_gradient_norm)
from .driver import Trajectory, run_trajectory
from .config import ConfigError, RunConfig, load_config, parse_config
from .snapshots import SnapshotError, read_snapshot, write_snapshot

__version__ = "0.1.0"
