"""Occupation-density fields on a phase grid, plus the analytic datum families.

A DensityField carries the grid, the nodal samples (dimensionless
occupation numbers, Pauli-bounded to [0, 1]) and the time stamp.  Sample
arrays are shaped ``spatial_shape + velocity_shape`` (velocity only in
homogeneous mode).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grids import PhaseGrid, integrate


class FieldError(ValueError):
    """Invalid field data."""


@dataclass(frozen=True)
class DensityField:
    grid: PhaseGrid
    samples: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.grid.validate_samples(self.samples)
        if self.time < 0.0:
            raise FieldError(f"time must be >= 0, got {self.time}")

    @property
    def pauli_min(self) -> float:
        return float(self.samples.min())

    @property
    def pauli_max(self) -> float:
        return float(self.samples.max())

    def check_pauli(self, tol: float = 0.0) -> bool:
        return self.pauli_min >= -tol and self.pauli_max <= 1.0 + tol

    def mass(self) -> float:
        return integrate(self.grid, self.samples)

    def with_samples(self, samples: np.ndarray,
                     time: float | None = None) -> "DensityField":
        return DensityField(grid=self.grid, samples=samples,
                            time=self.time if time is None else time)


def phase_radius_squared(grid: PhaseGrid) -> np.ndarray:
    """|x|² + |v|² at every node (|v|² alone in homogeneous mode).

    Spatial coordinates are measured from the domain center so that the
    Gaussian envelope weights are centered on the torus/box.
    """
    v2 = grid.velocity.squared_radius()
    if grid.homogeneous:
        return v2
    xs = grid.spatial.coordinates()
    x2 = np.zeros(grid.spatial.shape)
    half = 0.5 * grid.spatial.extent
    for c in xs:
        x2 += (c - half) ** 2
    nvel = grid.velocity.dim
    return x2.reshape(x2.shape + (1,) * nvel) + v2


# ---------------------------------------------------------------------------
# analytic families
# ---------------------------------------------------------------------------

def _spatial_profile(grid: PhaseGrid, params: dict) -> np.ndarray:
    """Optional spatial modulation, 1 in homogeneous mode.

    ``x_width`` > 0 selects a Gaussian bump centered at the domain center
    (criterion runs with localized data); ``x_wave_amplitude`` adds a
    smooth cosine modulation along the first axis.
    """
    if grid.homogeneous:
        return np.ones(())
    xs = grid.spatial.coordinates()
    half = 0.5 * grid.spatial.extent
    prof = np.ones(grid.spatial.shape)
    width = params.get("x_width", 0.0)
    if width:
        x2 = np.zeros(grid.spatial.shape)
        for c in xs:
            x2 += (c - half) ** 2
        prof = prof * np.exp(-x2 / (2.0 * width ** 2))
    amp = params.get("x_wave_amplitude", 0.0)
    if amp:
        k = 2.0 * np.pi * params.get("x_wave_number", 1) / grid.spatial.extent
        prof = prof * (1.0 + amp * np.cos(k * xs[0]))
    nvel = grid.velocity.dim
    return prof.reshape(prof.shape + (1,) * nvel)


def make_initial_datum(grid: PhaseGrid, family: str,
                       params: dict | None = None) -> DensityField:
    """Build a named analytic datum: gaussian, double-gaussian,
    fermi-dirac-equilibrium, or plateau."""
    params = dict(params or {})
    v2 = grid.velocity.squared_radius()
    vcoords = grid.velocity.coordinates()

    if family == "gaussian":
        amp = params.get("amplitude", 0.5)
        alpha = params.get("alpha", 1.0)
        fv = amp * np.exp(-alpha * v2)
    elif family == "double-gaussian":
        amp = params.get("amplitude", 0.4)
        alpha = params.get("alpha", 1.0)
        shift = params.get("shift", 1.5)
        d2a = np.zeros(grid.velocity.shape)
        d2b = np.zeros(grid.velocity.shape)
        for k, c in enumerate(vcoords):
            s = shift if k == 0 else 0.0
            d2a += (c - s) ** 2
            d2b += (c + s) ** 2
        fv = amp * (np.exp(-alpha * d2a) + np.exp(-alpha * d2b))
    elif family == "fermi-dirac-equilibrium":
        a = params.get("a", 1.0)
        b = params.get("b", 1.0)
        fv = 1.0 / (1.0 + np.exp(a + b * v2))
    elif family == "plateau":
        height = params.get("height", 0.8)
        radius = params.get("radius", 2.0)
        edge = params.get("edge", 0.5)
        r = np.sqrt(v2)
        fv = height * 0.5 * (1.0 - np.tanh((r - radius) / edge))
    else:
        raise FieldError(f"unknown initial-datum family {family!r}")

    samples = fv * _spatial_profile(grid, params)
    samples = np.broadcast_to(samples, grid.shape).copy()
    if samples.min() < 0.0 or samples.max() > 1.0:
        raise FieldError("analytic datum violates the Pauli bound")
    return DensityField(grid=grid, samples=samples, time=0.0)
