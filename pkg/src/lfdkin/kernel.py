"""Exact and regularized collision kernels for soft-potential interactions.

The exact kernel is a(z) = Γ(|z|) (I - z⊗z/|z|²) with the power-law cross
section Γ(s) = s^(γ+2), γ ∈ [-3, 0).  The regularized family indexed by n
replaces each factor:

    Γⁿ(z)  = (Γ * ηₙ)(z)        ηₙ = radial C∞ bump, support |z| ≤ 1/n,
                                 unit integral (normalized numerically)
    ψⁿ(z)  = exp(-|z|²/(2n²))    radial Schwartz cutoff, ψⁿ(0) = 1, ψⁿ → 1
    Pⁿ(z)  = |z|²/(|z|²+1/n) I - z⊗z/(|z|²+1/n)

    aⁿ(z)  = Γⁿ(z) ψⁿ(z) Pⁿ(z)

Pⁿ obeys the exact identity Pⁿ(z) = s(z) P(z) with s(z) = |z|²/(|z|²+1/n),
hence Pⁿ ⪯ P (NOT ⪰), and the quasi-ellipticity floor of aⁿ carries the
extra factor s(z).  Because P is a projection, the symmetric square root
and the divergences have closed radial forms:

    √aⁿ(z)        = √(Γⁿψⁿ) · |z|/√(|z|²+1/n) · P(z)
    ∂ⱼ aⁿ_ij(z)    = -(N-1) Γⁿψⁿ zᵢ / (|z|² + 1/n)
    ∂ⱼ (√aⁿ)_ij(z) = -(N-1) √(Γⁿψⁿ) zᵢ / (|z| √(|z|²+1/n))

The divergence factor -(N-1) is the one reproduced by the centered
finite-difference oracle (for radial Ψ the term (∂ⱼΨ)Pⁿ_ij vanishes since
∇Ψ ∥ z and Pⁿz = 0; the same kills the cutoff-gradient term Γⁿ Pⁿ_ij ∂ⱼψⁿ).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .grids import VelocityGrid


class KernelError(ValueError):
    """Invalid kernel parameters or evaluation outside the domain."""


# ---------------------------------------------------------------------------
# cross section
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossSectionSpec:
    """Power-law cross section Γ(s) = s^(γ+2) with its ellipticity witness.

    Parameters
    ----------
    gamma : float
        Exponent in [-3, 0); gamma = -3 is the Coulomb case.
    integrability_exponent : float, optional
        Declared exponent r > N/(N-1) for the L^r + L^∞ split of Γ.  Pure
        metadata: the solver only ever evaluates the mollified Γⁿ, which is
        bounded.  (For dim = 2, gamma = -3 no admissible r exists; the
        regularized kernel is what keeps the desk-scale problem well posed.)
    """

    gamma: float = -3.0
    integrability_exponent: float | None = None

    def __post_init__(self):
        if not (-3.0 <= self.gamma < 0.0):
            raise KernelError(
                f"gamma must lie in [-3, 0), got {self.gamma}")

    @property
    def exponent(self) -> float:
        """The radial exponent γ+2 of Γ."""
        return self.gamma + 2.0

    def ellipticity_floor(self, radius: float) -> float:
        """Witness K_R with Γ(s) ≥ K_R for 0 < s ≤ R.

        Uses K_R = Γ(2R), valid for the decreasing branch γ+2 ≤ 0 (with
        margin) and trivially for the flat case γ = -2.
        """
        if radius <= 0:
            raise KernelError("radius must be positive")
        if self.exponent > 0:
            raise KernelError(
                "K_R = Γ(2R) is a valid floor only for γ+2 <= 0")
        return (2.0 * radius) ** self.exponent

    def validate_integrability(self, dim: int) -> None:
        """Reject exponents whose singularity is not locally integrable."""
        if self.exponent <= -dim:
            raise KernelError(
                f"|z|^({self.exponent}) is not integrable in dimension {dim}")


def gamma_cross_section(s, spec: CrossSectionSpec):
    """Evaluate Γ(s) = s^(γ+2) for s > 0 (scalar or array)."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise KernelError(
            "cross section is singular at s = 0; use the mollified form")
    out = s ** spec.exponent
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# projectors
# ---------------------------------------------------------------------------

def projector(z: np.ndarray) -> np.ndarray:
    """P(z) = I - z⊗z/|z|², the projection off the z direction."""
    z = np.asarray(z, dtype=float)
    z2 = float(z @ z)
    if z2 == 0.0:
        raise KernelError("projector undefined at z = 0")
    return np.eye(len(z)) - np.outer(z, z) / z2


def projector_regularized(z: np.ndarray, n: int) -> np.ndarray:
    """Pⁿ(z) = |z|²/(|z|²+1/n) I - z⊗z/(|z|²+1/n); the zero matrix at z=0."""
    z = np.asarray(z, dtype=float)
    z2 = float(z @ z)
    den = z2 + 1.0 / n
    return (z2 / den) * np.eye(len(z)) - np.outer(z, z) / den


# ---------------------------------------------------------------------------
# mollifier / cutoff configuration
# ---------------------------------------------------------------------------

def bump(t):
    """The standard compact bump exp(-1/(1-t²)) on |t| < 1, else 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@lru_cache(maxsize=8)
def _bump_norm(dim: int) -> float:
    """1 / ∫ bump(|u|) du over R^dim (radial integral, adaptive quadrature)."""
    if dim == 2:
        val, _ = quad(lambda t: np.exp(-1.0 / (1.0 - t * t)) * t, 0.0, 1.0)
        return 1.0 / (2.0 * np.pi * val)
    if dim == 3:
        val, _ = quad(lambda t: np.exp(-1.0 / (1.0 - t * t)) * t * t, 0.0, 1.0)
        return 1.0 / (4.0 * np.pi * val)
    raise KernelError(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class KernelConfig:
    """Regularization index n with the fixed mollifier/cutoff profiles.

    ηₙ(w) = c n^dim bump(n|w|) with c chosen so ∫ηₙ = 1; support |w| ≤ 1/n.
    ψⁿ(z) = exp(-|z|²/(2n²)).
    """

    n: int
    quad_points: int = 32

    def __post_init__(self):
        if self.n < 1:
            raise KernelError(f"regularization index must be >= 1, got {self.n}")
        if self.quad_points < 4:
            raise KernelError("quad_points must be >= 4")

    @property
    def mollifier_width(self) -> float:
        return 1.0 / self.n

    def mollifier(self, r, dim: int):
        """ηₙ at radius r in dimension dim."""
        return _bump_norm(dim) * self.n ** dim * bump(np.asarray(r) * self.n)

    def mollifier_mass(self, dim: int, resolution: int = 4000) -> float:
        """∫ηₙ by an independent fine radial rule (unit-integral check)."""
        from scipy.integrate import simpson
        r = np.linspace(0.0, self.mollifier_width, resolution + 1)
        vals = self.mollifier(r, dim)
        surf = 2.0 * np.pi * r if dim == 2 else 4.0 * np.pi * r * r
        return float(simpson(vals * surf, x=r))

    def cutoff(self, z_norm):
        """ψⁿ(z), radial, positive, ψⁿ(0)=1, ψⁿ → 1 pointwise as n → ∞."""
        r = np.asarray(z_norm, dtype=float)
        return np.exp(-r * r / (2.0 * self.n ** 2))

    def cutoff_min_on_ball(self, radius: float) -> float:
        """min ψⁿ over |z| ≤ radius (attained on the boundary)."""
        return float(self.cutoff(radius))


# ---------------------------------------------------------------------------
# mollified cross section
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _polar_rule(nq: int):
    x, w = np.polynomial.legendre.leggauss(nq)
    return x, w


def mollified_cross_section(z_norm, spec: CrossSectionSpec,
                            config: KernelConfig, dim: int) -> np.ndarray:
    """Γⁿ(z) = (Γ(|·|) * ηₙ)(z), radial, by a fixed tensor quadrature.

    The convolution integral over the mollifier ball is reduced to the
    (radius, polar-angle) plane by radial symmetry (the azimuthal integral
    is exact), then evaluated with a quad_points² Gauss-Legendre rule.
    """
    spec.validate_integrability(dim)
    x, w = _polar_rule(config.quad_points)
    eps = config.mollifier_width
    rho = 0.5 * eps * (x + 1.0)                 # (0, 1/n)
    rho_w = 0.5 * eps * w
    if dim == 2:
        th = np.pi * (x + 1.0)                  # (0, 2π)
        th_w = np.pi * w
        angular = np.ones_like(th)
    else:
        th = 0.5 * np.pi * (x + 1.0)            # (0, π)
        th_w = 0.5 * np.pi * w
        angular = 2.0 * np.pi * np.sin(th)
    eta = config.mollifier(rho, dim)
    radial = eta * rho ** (dim - 1) * rho_w     # ηₙ(ρ) ρ^{d-1} dρ
    r = np.atleast_1d(np.asarray(z_norm, dtype=float))
    # |z - w|² = r² + ρ² - 2 r ρ cosθ on the quadrature slab
    R2 = (r[:, None, None] ** 2 + rho[None, :, None] ** 2
          - 2.0 * r[:, None, None] * rho[None, :, None] * np.cos(th)[None, None, :])
    dist = np.sqrt(np.maximum(R2, 1e-300))
    vals = dist ** spec.exponent
    out = np.einsum("zrt,r,t->z", vals, radial, th_w * angular)
    if np.ndim(z_norm) == 0:
        return float(out[0])
    return out


# ---------------------------------------------------------------------------
# pointwise kernel evaluations
# ---------------------------------------------------------------------------

def kernel_matrix(z: np.ndarray, spec: CrossSectionSpec,
                  config: KernelConfig) -> np.ndarray:
    """aⁿ(z) = Γⁿ(z) ψⁿ(z) Pⁿ(z); the zero matrix at z = 0."""
    z = np.asarray(z, dtype=float)
    dim = len(z)
    r = float(np.sqrt(z @ z))
    if r == 0.0:
        return np.zeros((dim, dim))
    gam = mollified_cross_section(r, spec, config, dim)
    return gam * float(config.cutoff(r)) * projector_regularized(z, config.n)


def kernel_divergence(z: np.ndarray, spec: CrossSectionSpec,
                      config: KernelConfig) -> np.ndarray:
    """∂ⱼ aⁿ_ij(z) = -(N-1) Γⁿψⁿ zᵢ/(|z|²+1/n); the zero vector at z = 0.

    The cutoff-gradient term Γⁿ Pⁿ_ij ∂ⱼψⁿ vanishes identically for the
    radial ψⁿ because ∇ψⁿ ∥ z and Pⁿ(z) z = 0.
    """
    z = np.asarray(z, dtype=float)
    dim = len(z)
    r = float(np.sqrt(z @ z))
    if r == 0.0:
        return np.zeros(dim)
    gam = mollified_cross_section(r, spec, config, dim)
    coef = -(dim - 1) * gam * float(config.cutoff(r)) / (r * r + 1.0 / config.n)
    return coef * z


def kernel_sqrt(z: np.ndarray, spec: CrossSectionSpec,
                config: KernelConfig) -> tuple:
    """(√aⁿ(z), ∂ⱼ(√aⁿ)_ij(z)); both zero at z = 0."""
    z = np.asarray(z, dtype=float)
    dim = len(z)
    r = float(np.sqrt(z @ z))
    if r == 0.0:
        return np.zeros((dim, dim)), np.zeros(dim)
    gam = mollified_cross_section(r, spec, config, dim)
    root = np.sqrt(gam * float(config.cutoff(r)))
    den = np.sqrt(r * r + 1.0 / config.n)
    mat = root * (r / den) * projector(z)
    div = -(dim - 1) * root / (r * den) * z
    return mat, div


# ---------------------------------------------------------------------------
# tabulation on the displacement lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelTable:
    """aⁿ, ∂ⱼaⁿ_ij, √aⁿ and ∂ⱼ(√aⁿ)_ij sampled at every lattice displacement.

    Arrays live on the (2M-1)^N difference lattice of the velocity grid;
    matrix samples have trailing axes (N, N), divergence samples (N,).
    Immutable after construction and safe to share between threads.
    """

    grid: VelocityGrid
    spec: CrossSectionSpec
    config: KernelConfig
    a: np.ndarray
    div: np.ndarray
    sqrt: np.ndarray
    sqrt_div: np.ndarray
    gamma_samples: np.ndarray = field(repr=False, default=None)

    @property
    def displacement_shape(self) -> tuple:
        return (2 * self.grid.points_per_axis - 1,) * self.grid.dim

    def a_component(self, i: int, j: int) -> np.ndarray:
        return self.a[..., i, j]

    def div_component(self, i: int) -> np.ndarray:
        return self.div[..., i]


def build_kernel_table(grid: VelocityGrid, spec: CrossSectionSpec,
                       config: KernelConfig) -> KernelTable:
    """Sample aⁿ, its divergence and square root on the displacement lattice.

    Γⁿ is evaluated once per distinct displacement radius (it is radial)
    and broadcast back to the lattice.
    """
    spec.validate_integrability(grid.dim)
    dim = grid.dim
    axis = grid.displacement_axis()
    coords = np.meshgrid(*([axis] * dim), indexing="ij")
    z2 = np.zeros(coords[0].shape)
    for c in coords:
        z2 += c * c
    r = np.sqrt(z2)

    r_unique, inverse = np.unique(np.round(r, 12), return_inverse=True)
    gam_unique = np.empty_like(r_unique)
    positive = r_unique > 0
    gam_unique[positive] = mollified_cross_section(
        r_unique[positive], spec, config, dim)
    if np.any(~positive):
        gam_unique[~positive] = mollified_cross_section(
            0.0, spec, config, dim)
    gam = gam_unique[inverse].reshape(r.shape)

    psi = config.cutoff(r)
    center = z2 == 0.0
    inv_den = 1.0 / (z2 + 1.0 / config.n)
    scalar = gam * psi * z2 * inv_den          # Γⁿψⁿ s(z)
    root = np.sqrt(gam * psi)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_z2 = np.where(center, 0.0, 1.0 / np.where(center, 1.0, z2))

    shape = r.shape
    a = np.zeros(shape + (dim, dim))
    sq = np.zeros(shape + (dim, dim))
    sqrt_scalar = root * np.sqrt(z2 * inv_den)
    for i in range(dim):
        for j in range(dim):
            proj = (1.0 if i == j else 0.0) - coords[i] * coords[j] * inv_z2
            a[..., i, j] = scalar * proj
            sq[..., i, j] = sqrt_scalar * proj
    # z = 0 entries: both factors vanish
    a[center] = 0.0
    sq[center] = 0.0

    div = np.zeros(shape + (dim,))
    sqdiv = np.zeros(shape + (dim,))
    div_coef = -(dim - 1) * gam * psi * inv_den
    with np.errstate(divide="ignore", invalid="ignore"):
        sq_coef = np.where(
            center, 0.0,
            -(dim - 1) * root / (np.where(center, 1.0, r)
                                 * np.sqrt(z2 + 1.0 / config.n)))
    for i in range(dim):
        div[..., i] = div_coef * coords[i]
        sqdiv[..., i] = sq_coef * coords[i]
    div[center] = 0.0
    sqdiv[center] = 0.0

    return KernelTable(grid=grid, spec=spec, config=config, a=a, div=div,
                       sqrt=sq, sqrt_div=sqdiv, gamma_samples=gam)


# ---------------------------------------------------------------------------
# invariant suite (check-kernel report)
# ---------------------------------------------------------------------------

def _fd_divergence(z, spec, config, h, which="a"):
    """Centered finite differences of the tabulated matrix field at z."""
    dim = len(z)
    out = np.zeros(dim)
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        if which == "a":
            plus = kernel_matrix(z + e, spec, config)
            minus = kernel_matrix(z - e, spec, config)
        else:
            plus = kernel_sqrt(z + e, spec, config)[0]
            minus = kernel_sqrt(z - e, spec, config)[0]
        out += (plus[:, j] - minus[:, j]) / (2.0 * h)
    return out


def divergence_fd_probe(spec: CrossSectionSpec, config: KernelConfig,
                        dim: int, n_points: int = 20, seed: int = 1234,
                        which: str = "a") -> dict:
    """Compare the closed-form divergence against centered differences.

    Returns the worst relative mismatch at the finest step and the observed
    convergence order from a log-log fit over an h-sweep.
    """
    rng = np.random.default_rng(seed)
    steps = np.array([4e-3, 2e-3, 1e-3])
    errs = np.zeros((n_points, len(steps)))
    rel = 0.0
    for k in range(n_points):
        z = rng.uniform(0.3, 2.0) * _random_unit(rng, dim)
        closed = (kernel_divergence(z, spec, config) if which == "a"
                  else kernel_sqrt(z, spec, config)[1])
        scale = max(float(np.linalg.norm(closed)), 1e-14)
        for m, h in enumerate(steps):
            fd = _fd_divergence(z, spec, config, h, which)
            errs[k, m] = np.linalg.norm(fd - closed)
        rel = max(rel, errs[k, -1] / scale)
    mean_err = errs.mean(axis=0)
    slope = np.polyfit(np.log(steps), np.log(mean_err + 1e-300), 1)[0]
    return {"max_rel_error": float(rel), "observed_order": float(slope)}


def _random_unit(rng, dim):
    u = rng.normal(size=dim)
    return u / np.linalg.norm(u)


def ellipticity_floor_probe(spec: CrossSectionSpec, config: KernelConfig,
                            dim: int, radius: float = 0.5,
                            n_samples: int = 1000, seed: int = 99) -> dict:
    """Sample the quasi-ellipticity floor η·aⁿ(z)η over random (z, η).

    The asserted bound is the identity-derived one,

        η·aⁿ(z)η ≥ K_{2R} (min_{|z|≤R} ψⁿ) · s(z) · (1 - (ẑ·η)²) |η|²,

    with s(z) = |z|²/(|z|²+1/n) evaluated at the sample (Pⁿ = s P exactly).
    The flat-constant variant with s(R) in place of s(z) is reported as
    well; it fails near z = 0 where s(z) → 0, which is why the identity
    form is the one checked.
    """
    rng = np.random.default_rng(seed)
    k2r = spec.ellipticity_floor(2.0 * radius)
    psi_min = config.cutoff_min_on_ball(radius)
    s_R = radius ** 2 / (radius ** 2 + 1.0 / config.n)
    min_margin = np.inf
    min_flat = np.inf
    for _ in range(n_samples):
        zr = radius * rng.uniform(1e-6, 1.0) ** (1.0 / dim)
        z = zr * _random_unit(rng, dim)
        eta = _random_unit(rng, dim)
        amat = kernel_matrix(z, spec, config)
        quad_form = float(eta @ amat @ eta)
        ang = 1.0 - (float(z @ eta) / zr) ** 2
        s_z = zr ** 2 / (zr ** 2 + 1.0 / config.n)
        bound = k2r * psi_min * s_z * ang
        flat_bound = k2r * psi_min * s_R * ang
        denom = max(bound, 1e-300)
        min_margin = min(min_margin, (quad_form - bound) / denom)
        min_flat = min(min_flat, (quad_form - flat_bound) / max(flat_bound, 1e-300))
    return {
        "radius": radius,
        "floor_constant": k2r * psi_min,
        "min_relative_margin": float(min_margin),
        "paper_flat_bound_min_margin": float(min_flat),
    }


def kernel_invariant_report(table: KernelTable, seed: int = 7) -> dict:
    """Run the full kernel invariant suite and return a JSON-ready report.

    Fields follow the check-kernel contract: psd_min_eigenvalue,
    max_az_residual, symmetry_residual, divergence_fd_error,
    ellipticity_floor_margin, plus the square-root residual and the
    observed finite-difference order.  ``divergence_factor_note`` records
    that the printed radial-divergence factor -(N-3) disagrees with the
    finite-difference oracle, which reproduces -(N-1).
    """
    grid, spec, config = table.grid, table.spec, table.config
    dim = grid.dim
    axis = grid.displacement_axis()
    coords = np.meshgrid(*([axis] * dim), indexing="ij")

    eigs = np.linalg.eigvalsh(table.a)
    psd_min = float(eigs.min())

    az = np.zeros(table.displacement_shape + (dim,))
    for i in range(dim):
        for j in range(dim):
            az[..., i] += table.a[..., i, j] * coords[j]
    max_az = float(np.abs(az).max())

    flipped = table.a[(slice(None, None, -1),) * dim]
    sym_res = float(np.abs(table.a - flipped).max())

    sq_sq = np.einsum("...ij,...jk->...ik", table.sqrt, table.sqrt)
    scale = np.maximum(np.abs(table.a).max(axis=(-2, -1)), 1e-300)
    sqrt_res = float((np.abs(sq_sq - table.a).max(axis=(-2, -1)) / scale).max())

    fd = divergence_fd_probe(spec, config, dim, seed=seed)
    fd_sqrt = divergence_fd_probe(spec, config, dim, seed=seed + 1,
                                  which="sqrt")
    floor = ellipticity_floor_probe(spec, config, dim, seed=seed + 2)

    return {
        "psd_min_eigenvalue": psd_min,
        "max_az_residual": max_az,
        "symmetry_residual": sym_res,
        "sqrt_square_residual": sqrt_res,
        "divergence_fd_error": fd["max_rel_error"],
        "divergence_fd_order": fd["observed_order"],
        "sqrt_divergence_fd_error": fd_sqrt["max_rel_error"],
        "sqrt_divergence_fd_order": fd_sqrt["observed_order"],
        "ellipticity_floor_margin": floor["min_relative_margin"],
        "ellipticity_paper_flat_margin": floor["paper_flat_bound_min_margin"],
        "divergence_factor_note": (
            "radial divergence uses factor -(N-1); the printed -(N-3) "
            "disagrees with the finite-difference oracle"),
        "mollifier_mass_error": abs(config.mollifier_mass(dim) - 1.0),
    }
