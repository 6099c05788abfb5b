"""Trajectory driver: the deterministic time loop with per-step records.

Dissipation is evaluated every ``dissipation_stride`` steps (it is the one
quadratically expensive diagnostic); its cumulative integral is advanced
by the trapezoidal rule between evaluations and linearly interpolated at
the steps in between.  Everything else is recorded every
``diagnostics_stride`` steps.  Given the same configuration the loop is
bitwise reproducible: iteration order is fixed and all reductions are
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .diagnostics import (DiagnosticsRecord, conserved_moments,
                          entropy_dissipation, quantum_entropy,
                          weighted_gradient_norm)
from .evolution import SolverConfig, advance
from .fields import DensityField
from .initial_data import EnvelopeSpec, fit_envelope
from .kernel import KernelTable


@dataclass
class Trajectory:
    """Stored outcome of a run: records each step, optional field history."""

    initial: DensityField
    final: DensityField
    records: list
    history: list = dc_field(default_factory=list)   # (time, samples) pairs
    envelope: EnvelopeSpec | None = None
    clamp_total: float = 0.0
    transport_leak_total: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])


def run_trajectory(f0: DensityField, table: KernelTable, cfg: SolverConfig,
                   diagnostics_stride: int = 1, dissipation_stride: int = 5,
                   history_stride: int = 0, envelope: EnvelopeSpec | None = None,
                   on_step=None) -> Trajectory:
    """Advance f0 to t_end, emitting a DiagnosticsRecord per stride step.

    ``history_stride`` > 0 stores (time, samples) snapshots in memory for
    the weak-form residual; ``on_step`` is an optional callback
    (step_index, field, record_or_None), used by the CLI to stream
    snapshots to disk.
    """
    n_steps = int(round(cfg.t_end / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.t_end) > 1e-9 * max(cfg.t_end, 1.0):
        raise ValueError("t_end must be an integer number of dt steps")
    if n_steps < 1:
        raise ValueError("t_end must cover at least one step")

    if envelope is None:
        envelope = fit_envelope(f0)

    dim = f0.grid.velocity.dim
    f = f0
    records = []
    history = []
    clamp_total = 0.0
    leak_total = 0.0

    d_rate = entropy_dissipation(f, table, method=cfg.conv_method) \
        if cfg.collision_enabled else 0.0
    d_time = 0.0
    cum_d = 0.0

    def make_record(field, picard_iters, pre_min, pre_max, d_inc, cum):
        mom = conserved_moments(field)
        return DiagnosticsRecord(
            time=field.time, mass=mom["mass"], momentum=mom["momentum"],
            kinetic_energy=mom["kinetic_energy"], inertia=mom["inertia"],
            entropy=quantum_entropy(field),
            dissipation_increment=d_inc, cumulative_dissipation=cum,
            pauli_min=pre_min, pauli_max=pre_max,
            weighted_grad_norm=weighted_gradient_norm(field, envelope),
            picard_iters=picard_iters)

    rec0 = make_record(f, 0, f.pauli_min, f.pauli_max, d_rate * cfg.dt, 0.0)
    records.append(rec0)
    if history_stride:
        history.append((f.time, f.samples.copy()))
    if on_step is not None:
        on_step(0, f, rec0)

    for k in range(1, n_steps + 1):
        f, rep = advance(f, table, cfg)
        clamp_total += rep.clamped_mass
        leak_total += rep.transport_leak

        if cfg.collision_enabled and (k % dissipation_stride == 0
                                      or k == n_steps):
            d_new = entropy_dissipation(f, table, method=cfg.conv_method)
            cum_d += 0.5 * (d_rate + d_new) * (f.time - d_time)
            d_rate, d_time = d_new, f.time
            cum_here = cum_d
        else:
            cum_here = cum_d + d_rate * (f.time - d_time)

        rec = None
        if k % diagnostics_stride == 0 or k == n_steps:
            rec = make_record(f, rep.picard_iters, rep.pre_clamp_min,
                              rep.pre_clamp_max, d_rate * cfg.dt, cum_here)
            records.append(rec)
        if history_stride and (k % history_stride == 0 or k == n_steps):
            history.append((f.time, f.samples.copy()))
        if on_step is not None:
            on_step(k, f, rec)

    return Trajectory(initial=f0, final=f, records=records, history=history,
                      envelope=envelope, clamp_total=clamp_total,
                      transport_leak_total=leak_total)
