"""Mean-field coefficients of the collision operator and ellipticity probes.

The nonlocal coefficients are velocity convolutions against the tabulated
regularized kernel, evaluated independently at every spatial node:

    ā_ij(v)      = h^N Σ_{v*} aⁿ_ij(v - v*) G(v*)        G = f(1-f)
    b̄_i(v)       = h^N Σ_{v*} (∂ⱼaⁿ_ij)(v - v*) f(v*)
    (∂ⱼā_ij)(v)  = h^N Σ_{v*} (∂ⱼaⁿ_ij)(v - v*) G(v*)
    (∂ᵢb̄_i)(v)   = centered differences of b̄ on the lattice

Convolutions run either by direct summation (the correctness oracle) or
by FFT; both evaluate the identical lattice sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve, fftconvolve
from scipy.stats import qmc

from .fields import DensityField
from .grids import PhaseGrid
from .kernel import KernelTable
from .stencils import velocity_divergence


class MeanFieldError(ValueError):
    """Mismatched grid/table or invalid probe parameters."""


class ConvolutionPlan:
    """Cached kernel FFTs for repeated convolutions against one table.

    Every convolution in a run hits the same (2M-1)^N kernel samples, so
    their padded transforms are computed once; field transforms can be
    shared across kernel components via rfft/convolve_hat.
    """

    def __init__(self, table: KernelTable):
        from scipy.fft import next_fast_len
        self.table = table
        self.dim = table.grid.dim
        m = table.grid.points_per_axis
        self.h = table.grid.spacing
        self.full = tuple(next_fast_len(3 * m - 2) for _ in range(self.dim))
        self.out_slice = (slice(m - 1, 2 * m - 1),) * self.dim
        self._khat = {}

    def kernel_hat(self, key):
        if key not in self._khat:
            if key[0] == "a":
                arr = self.table.a[..., key[1], key[2]]
            else:
                arr = self.table.div[..., key[1]]
            from scipy.fft import rfftn
            self._khat[key] = rfftn(arr, s=self.full)
        return self._khat[key]

    def rfft(self, field: np.ndarray) -> np.ndarray:
        from scipy.fft import rfftn
        lead = field.ndim - self.dim
        axes = tuple(range(lead, field.ndim))
        return rfftn(field, s=self.full, axes=axes)

    def convolve_hat(self, key, field_hat: np.ndarray) -> np.ndarray:
        from scipy.fft import irfftn
        lead = field_hat.ndim - self.dim
        axes = tuple(range(lead, field_hat.ndim))
        out = irfftn(field_hat * self.kernel_hat(key), s=self.full, axes=axes)
        sl = (slice(None),) * lead + self.out_slice
        return (self.h ** self.dim) * out[sl]

    def convolve(self, key, field: np.ndarray) -> np.ndarray:
        return self.convolve_hat(key, self.rfft(field))


_PLANS: dict = {}


def get_plan(table: KernelTable) -> ConvolutionPlan:
    key = id(table)
    plan = _PLANS.get(key)
    if plan is None or plan.table is not table:
        plan = ConvolutionPlan(table)
        if len(_PLANS) > 8:
            _PLANS.pop(next(iter(_PLANS)))
        _PLANS[key] = plan
    return plan


def lattice_convolve(kernel: np.ndarray, field: np.ndarray, h: float,
                     n_vel_axes: int, method: str = "direct") -> np.ndarray:
    """h^N Σ_{v*} kernel(v - v*) field(v*) on the velocity lattice.

    ``kernel`` lives on the (2M-1)^N displacement lattice; ``field`` may
    carry leading spatial axes, which are broadcast.
    """
    m = field.shape[-1]
    lead = field.ndim - n_vel_axes
    sl = (slice(None),) * lead + (slice(m - 1, 2 * m - 1),) * n_vel_axes
    axes = tuple(range(lead, field.ndim))
    if method == "fft":
        out = fftconvolve(field, kernel.reshape((1,) * lead + kernel.shape),
                          mode="full", axes=axes)
    elif method == "direct":
        if lead == 0:
            out = convolve(field, kernel, mode="full", method="direct")
        else:
            flat = field.reshape((-1,) + field.shape[lead:])
            out = np.stack([convolve(fx, kernel, mode="full", method="direct")
                            for fx in flat])
            out = out.reshape(field.shape[:lead] + out.shape[1:])
            sl = (slice(None),) * lead + (slice(m - 1, 2 * m - 1),) * n_vel_axes
    else:
        raise MeanFieldError(f"unknown convolution method {method!r}")
    return (h ** n_vel_axes) * out[sl]


@dataclass(frozen=True)
class CoefficientFields:
    """ā, b̄ and their velocity derivatives at every phase node.

    a_bar has trailing axes (N, N) and is symmetric PSD at every node
    (a conic combination of PSD kernel samples with weights f(1-f) ≥ 0);
    b_bar and div_a_bar have trailing axis (N,), div_b_bar is scalar.
    """

    grid: PhaseGrid
    a_bar: np.ndarray
    b_bar: np.ndarray
    div_a_bar: np.ndarray
    div_b_bar: np.ndarray

    def quadratic_form(self, v_index: tuple, eta: np.ndarray) -> float:
        """η·ā(v)η at one velocity node (homogeneous-mode helper)."""
        mat = self.a_bar[v_index]
        return float(eta @ mat @ eta)


def coefficient_fields(f: DensityField, table: KernelTable,
                       method: str = "direct",
                       with_derivatives: bool = True) -> CoefficientFields:
    """Convolve the kernel table against f and G = f(1-f).

    ``with_derivatives=False`` skips ∂ⱼā_ij, which only the weak-form
    residual needs (operator assembly does not).
    """
    grid = f.grid
    if table.grid != grid.velocity:
        raise MeanFieldError("kernel table was built for a different grid")
    if f.pauli_min < 0.0 or f.pauli_max > 1.0:
        raise MeanFieldError("samples violate the Pauli bound [0, 1]")
    dim = grid.velocity.dim
    h = grid.velocity.spacing
    g = f.samples
    G = g * (1.0 - g)

    a_bar = np.zeros(g.shape + (dim, dim))
    b_bar = np.zeros(g.shape + (dim,))
    div_a_bar = np.zeros(g.shape + (dim,)) if with_derivatives else None

    if method == "fft":
        plan = get_plan(table)
        G_hat = plan.rfft(G)
        g_hat = plan.rfft(g)
        for i in range(dim):
            for j in range(i, dim):
                comp = plan.convolve_hat(("a", i, j), G_hat)
                a_bar[..., i, j] = comp
                if i != j:
                    a_bar[..., j, i] = comp
            b_bar[..., i] = plan.convolve_hat(("div", i), g_hat)
            if with_derivatives:
                div_a_bar[..., i] = plan.convolve_hat(("div", i), G_hat)
    else:
        for i in range(dim):
            for j in range(i, dim):
                comp = lattice_convolve(table.a_component(i, j), G, h, dim,
                                        method)
                a_bar[..., i, j] = comp
                if i != j:
                    a_bar[..., j, i] = comp
            b_bar[..., i] = lattice_convolve(table.div_component(i), g, h,
                                             dim, method)
            if with_derivatives:
                div_a_bar[..., i] = lattice_convolve(table.div_component(i),
                                                     G, h, dim, method)

    div_b_bar = velocity_divergence(
        [b_bar[..., i] for i in range(dim)], dim, h)
    return CoefficientFields(grid=grid, a_bar=a_bar, b_bar=b_bar,
                             div_a_bar=div_a_bar, div_b_bar=div_b_bar)


# ---------------------------------------------------------------------------
# quasi-ellipticity probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EllipticityProbe:
    """Angular-truncation diagnostics for the mean-field diffusion matrix.

    For each sampled pair (v, η), rho_mu is the quantum density restricted
    to the admissible set {(v-v*)/|v-v*|·η ≤ μ, |v*| ≤ (1-μ)⁻¹}; K_alpha
    marks the non-vacuum region ρ > α.  nu_estimate is the smallest
    observed ratio η·ā(v)η / (ρ_μ |η|²) on K_alpha, reported rather than
    asserted because the corresponding constant is only known to exist.
    """

    alpha_threshold: float
    mu: float
    radius: float
    radius_star: float
    rho: np.ndarray
    rho_mu: np.ndarray
    sample_v: np.ndarray
    sample_eta: np.ndarray
    k_alpha_mask: np.ndarray
    nu_estimate: float
    k_alpha_empty: bool

    def summary(self) -> dict:
        rho_flat = np.atleast_1d(self.rho).ravel()
        qs = np.quantile(rho_flat, [0.0, 0.25, 0.5, 0.75, 1.0])
        return {
            "alpha": self.alpha_threshold,
            "mu": self.mu,
            "rho_quantiles": [float(q) for q in qs],
            "nu_estimate": self.nu_estimate,
            "k_alpha_fraction": float(np.mean(self.k_alpha_mask)),
            "k_alpha_empty": bool(self.k_alpha_empty),
        }


def angular_sample_pairs(dim: int, n_samples: int, radius: float) -> tuple:
    """Deterministic low-discrepancy (v, η) sample set, |v| ≤ radius."""
    eng = qmc.Halton(d=2 * dim, scramble=False)
    eng.fast_forward(1)  # skip the degenerate all-zeros first point
    pts = eng.random(n_samples)
    ball = pts[:, :dim] * 2.0 - 1.0
    norms = np.linalg.norm(ball, axis=1)
    keep = norms > 1e-9
    ball = ball[keep]
    norms = norms[keep]
    # radial re-map to uniform-in-ball
    vs = radius * ball / norms[:, None] * (norms[:, None] ** (1.0 / dim))
    raw = pts[keep, dim:] * 2.0 - 1.0
    raw_n = np.linalg.norm(raw, axis=1)
    ok = raw_n > 1e-9
    return vs[ok], raw[ok] / raw_n[ok, None]


def truncated_density(G_field: DensityField, v: np.ndarray, eta: np.ndarray,
                      mu: float) -> np.ndarray:
    """ρ_μ = h^N Σ 1_{V(v,μ,η)}(v*) G(v*): the admissible-angle density.

    Membership: (v - v*)·η / |v - v*| ≤ μ and |v*| ≤ (1-μ)⁻¹.  Returns the
    value per spatial node (scalar array in homogeneous mode).
    """
    grid = G_field.grid
    coords = grid.velocity.coordinates()
    diff = [v[k] - coords[k] for k in range(len(coords))]
    norm = np.sqrt(sum(d * d for d in diff))
    dot = sum(d * e for d, e in zip(diff, eta))
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = np.where(norm > 0, dot / np.where(norm > 0, norm, 1.0), 0.0)
    vstar2 = grid.velocity.squared_radius()
    mask = (cosang <= mu) & (vstar2 <= (1.0 - mu) ** -2)
    h = grid.velocity.spacing
    weighted = G_field.samples * mask
    axes = tuple(range(grid.n_spatial_axes, weighted.ndim))
    return weighted.sum(axis=axes) * h ** grid.velocity.dim


def ellipticity_probe(f: DensityField, coeffs: CoefficientFields,
                      alpha: float = 0.01, mu: float = 0.9,
                      radius: float = 2.0, radius_star: float = 2.0,
                      n_samples: int = 256) -> EllipticityProbe:
    """Evaluate ρ, ρ_μ, the non-vacuum mask and the empirical ν ratio."""
    if not (0.0 <= mu < 1.0):
        raise MeanFieldError(f"mu must lie in [0, 1), got {mu}")
    if alpha <= 0.0:
        raise MeanFieldError("alpha must be positive")
    grid = f.grid
    g = f.samples
    G = DensityField(grid=grid, samples=g * (1.0 - g), time=f.time)
    h = grid.velocity.spacing
    axes = tuple(range(grid.n_spatial_axes, g.ndim))
    rho = G.samples.sum(axis=axes) * h ** grid.velocity.dim
    k_alpha = np.atleast_1d(rho) > alpha
    empty = not bool(k_alpha.any())

    vs, etas = angular_sample_pairs(grid.velocity.dim, n_samples, radius)
    rho_mu = np.empty((len(vs),) + np.atleast_1d(rho).shape)
    nu = np.inf
    axis_nodes = grid.velocity.axis
    for k, (v, eta) in enumerate(zip(vs, etas)):
        rm = truncated_density(G, v, eta, mu)
        rho_mu[k] = np.atleast_1d(rm)
        # snap the sample velocity to the nearest lattice node for ā
        idx = tuple(int(np.argmin(np.abs(axis_nodes - v[d])))
                    for d in range(grid.velocity.dim))
        if grid.homogeneous:
            quad_forms = np.atleast_1d(
                float(eta @ coeffs.a_bar[idx] @ eta))
        else:
            mats = coeffs.a_bar[(Ellipsis,) + idx + (slice(None), slice(None))]
            quad_forms = np.einsum("i,...ij,j->...", eta, mats, eta).ravel()
        rm_flat = np.atleast_1d(rm).ravel()
        sel = k_alpha.ravel() & (rm_flat > 0)
        if sel.any():
            nu = min(nu, float((quad_forms[sel] / rm_flat[sel]).min()))

    return EllipticityProbe(
        alpha_threshold=alpha, mu=mu, radius=radius, radius_star=radius_star,
        rho=rho, rho_mu=rho_mu, sample_v=vs, sample_eta=etas,
        k_alpha_mask=k_alpha, nu_estimate=float(nu) if np.isfinite(nu) else float("nan"),
        k_alpha_empty=empty)
