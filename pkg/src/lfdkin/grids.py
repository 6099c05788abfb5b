"""Truncated uniform phase-space grids and quadrature.

Velocity space is the tensor lattice of M equispaced nodes per axis on
[-V_max, V_max], so the spacing is h = 2*V_max/(M-1) and the node set is
closed under v -> -v.  Position space (inhomogeneous mode only) is a
periodic torus of given extent with no duplicated endpoint, or a plain
truncated box.  All integrals are plain node sums times the cell volume
(trapezoidal weights degenerate to equal weights because every integrand
of interest decays to the roundoff floor well inside the box).

Node enumeration is C-order (row-major) over axes, spatial axes first,
velocity axes last.  Arrays of samples therefore have shape
``spatial_shape + velocity_shape``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PERIODIC = "periodic-torus"
BOX = "truncated-box"


class GridError(ValueError):
    """Invalid grid parameters."""


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform symmetric lattice on [-half_width, half_width]^dim."""

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"velocity dim must be 2 or 3, got {self.dim}")
        if self.points_per_axis < 4:
            raise GridError(
                f"points_per_axis must be >= 4, got {self.points_per_axis}")
        if not self.half_width > 0:
            raise GridError(f"half_width must be > 0, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width,
                           self.points_per_axis)

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def coordinates(self) -> list:
        """Meshgrid arrays of node coordinates, one per axis (ij indexing)."""
        return list(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    def squared_radius(self) -> np.ndarray:
        """|v|^2 at every node."""
        out = np.zeros(self.shape)
        for c in self.coordinates():
            out += c * c
        return out

    def displacement_axis(self) -> np.ndarray:
        """The 2M-1 displacements of the difference lattice along one axis."""
        m = self.points_per_axis
        return self.spacing * np.arange(-(m - 1), m)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform spatial lattice; periodic torus identifies node 0 and extent."""

    dim: int
    extent: float
    points_per_axis: int
    topology: str = PERIODIC

    def __post_init__(self):
        if not self.extent > 0:
            raise GridError(f"spatial extent must be > 0, got {self.extent}")
        if self.points_per_axis < 1:
            raise GridError("spatial points_per_axis must be >= 1")
        if self.topology not in (PERIODIC, BOX):
            raise GridError(f"unknown topology {self.topology!r}")

    @property
    def spacing(self) -> float:
        if self.topology == PERIODIC:
            # node `extent` is identified with node 0, no duplicate endpoint
            return self.extent / self.points_per_axis
        return self.extent / max(self.points_per_axis - 1, 1)

    @property
    def axis(self) -> np.ndarray:
        if self.topology == PERIODIC:
            return self.spacing * np.arange(self.points_per_axis)
        return np.linspace(0.0, self.extent, self.points_per_axis)

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def coordinates(self) -> list:
        return list(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))


@dataclass(frozen=True)
class PhaseGrid:
    """Velocity grid plus optional spatial grid (None marks homogeneous mode).

    Every operation in the package accepts the homogeneous mode, in which
    all fields are x-independent and sample arrays carry only the velocity
    axes.
    """

    velocity: VelocityGrid
    spatial: SpatialGrid | None = None

    @property
    def homogeneous(self) -> bool:
        return self.spatial is None

    @property
    def shape(self) -> tuple:
        if self.homogeneous:
            return self.velocity.shape
        return self.spatial.shape + self.velocity.shape

    @property
    def n_spatial_axes(self) -> int:
        return 0 if self.homogeneous else self.spatial.dim

    @property
    def quadrature_weight(self) -> float:
        """Product of axis spacings: the weight of one phase-space node."""
        w = self.velocity.cell_volume
        if not self.homogeneous:
            w *= self.spatial.cell_volume
        return w

    def validate_samples(self, samples: np.ndarray) -> None:
        if samples.shape != self.shape:
            raise GridError(
                f"sample shape {samples.shape} does not match grid {self.shape}")


def build_phase_grid(dim: int, v_max: float, points_per_axis: int,
                     spatial_extent: float | None = None,
                     spatial_points: int | None = None,
                     topology: str = PERIODIC) -> PhaseGrid:
    """Build a phase grid; omit the spatial arguments for homogeneous mode."""
    vel = VelocityGrid(dim=dim, half_width=float(v_max),
                       points_per_axis=int(points_per_axis))
    if spatial_extent is None and spatial_points is None:
        return PhaseGrid(velocity=vel, spatial=None)
    if spatial_extent is None or spatial_points is None:
        raise GridError("spatial_extent and spatial_points must both be set")
    spat = SpatialGrid(dim=dim, extent=float(spatial_extent),
                       points_per_axis=int(spatial_points), topology=topology)
    return PhaseGrid(velocity=vel, spatial=spat)


def integrate(grid: PhaseGrid, samples: np.ndarray,
              weight: np.ndarray | None = None) -> float:
    """Quadrature sum of samples (optionally times a nodal weight field)."""
    grid.validate_samples(samples)
    if weight is None:
        return float(samples.sum() * grid.quadrature_weight)
    if weight.shape != samples.shape:
        raise GridError(
            f"weight shape {weight.shape} does not match grid {grid.shape}")
    return float((samples * weight).sum() * grid.quadrature_weight)


def integrate_velocity(grid: PhaseGrid, samples: np.ndarray) -> np.ndarray:
    """Integrate over the velocity axes only; returns a field over x nodes
    (a scalar in homogeneous mode)."""
    grid.validate_samples(samples)
    axes = tuple(range(grid.n_spatial_axes, samples.ndim))
    out = samples.sum(axis=axes) * grid.velocity.cell_volume
    return out
