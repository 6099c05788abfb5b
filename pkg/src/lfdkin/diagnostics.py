"""Conserved moments, entropy, dissipation and weak-form residuals.

Quantities recorded per step:

    mass       ∫ f                     momentum   ∫ f v
    energy     ∫ f |v|²                inertia    ∫ f |x - tv|²
    entropy    S = ∫ f log f + (1-f) log(1-f)          (≤ 0 on [0,1])
    dissipation D = 4 ∬ |√aⁿ(v-v*) (√G* ∇ᵥ(arcsin√f) - √G ∇ᵥ*(arcsin√f*))|²

with G = f(1-f).  Using ∇(arcsin√f) = ∇f/(2√G), D equals the quadratic
dissipation  ∬ aⁿ G G* |∇f/G - ∇f*/G*|²  whenever f is smooth; the
prefactor 4 (not 1/4) is the one that makes the two forms agree, as the
direct-form cross-check test verifies.  The (v, v*) double sum is
evaluated exactly in reorganized form through lattice convolutions,

    D = 8 h^N Σ_v [ pᵀ(aⁿ*G)p - qᵀ(aⁿ*q) ],   p = ∇ₕ(arcsin√f), q = √G p,

which is the same sum up to floating-point reassociation (the literal
pairwise sum is kept as a test oracle).  Gradients of arcsin√f use
4th-order centered stencils: at desk resolution the 2nd-order truncation
error alone would exceed the equilibrium-dissipation acceptance floor.

The weak-form residual assembles, for smooth test functions φ,

    ∫f(T)φ(T) - ∫f₀φ(0) - ∫∫ f(∂φ/∂t + v·∇ₓφ)
      = ∫∫ (ā_ij + εδ_ij) f ∂²φ/∂vᵢ∂vⱼ + ∫∫ (∂ᵢā_ij f + b̄ⱼ f(1-f)) ∂φ/∂vⱼ

by trapezoidal time quadrature over a stored trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import DensityField
from .grids import PhaseGrid, integrate
from .initial_data import EnvelopeSpec
from .kernel import KernelTable
from .mean_field import coefficient_fields, lattice_convolve
from .stencils import velocity_gradient


# ---------------------------------------------------------------------------
# per-step record
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    time: float
    mass: float
    momentum: tuple
    kinetic_energy: float
    inertia: float
    entropy: float
    dissipation_increment: float
    cumulative_dissipation: float
    pauli_min: float
    pauli_max: float
    weighted_grad_norm: float
    picard_iters: int

    @staticmethod
    def csv_header(dim: int) -> list:
        cols = ["time", "mass"]
        cols += [f"momentum_{i}" for i in range(dim)]
        cols += ["kinetic_energy", "inertia", "entropy",
                 "dissipation_increment", "cumulative_dissipation",
                 "pauli_min", "pauli_max", "weighted_grad_norm",
                 "picard_iters"]
        return cols

    def csv_row(self) -> list:
        row = [self.time, self.mass, *self.momentum, self.kinetic_energy,
               self.inertia, self.entropy, self.dissipation_increment,
               self.cumulative_dissipation, self.pauli_min, self.pauli_max,
               self.weighted_grad_norm]
        return [format(x, ".17g") for x in row] + [str(self.picard_iters)]


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def _centered_spatial(grid: PhaseGrid) -> list:
    """Spatial coordinates measured from the domain center, broadcast to
    the full phase shape."""
    xs = grid.spatial.coordinates()
    half = 0.5 * grid.spatial.extent
    nvel = grid.velocity.dim
    return [(c - half).reshape(c.shape + (1,) * nvel) for c in xs]


def conserved_moments(f: DensityField, t: float | None = None) -> dict:
    """Mass, momentum, kinetic energy and the co-moving inertia moment."""
    grid = f.grid
    t = f.time if t is None else t
    vcoords = grid.velocity.coordinates()
    mass = integrate(grid, f.samples)
    momentum = tuple(
        integrate(grid, f.samples, np.broadcast_to(vc, grid.shape))
        for vc in vcoords)
    energy = integrate(grid, f.samples,
                       np.broadcast_to(grid.velocity.squared_radius(),
                                       grid.shape))
    if grid.homogeneous:
        # |x - tv|² with the x origin at the (absent) spatial point
        inertia = t * t * energy
    else:
        xs = _centered_spatial(grid)
        w = np.zeros(grid.shape)
        for xc, vc in zip(xs, vcoords):
            w = w + (xc - t * vc) ** 2
        inertia = integrate(grid, f.samples, w)
    return {"mass": mass, "momentum": momentum, "kinetic_energy": energy,
            "inertia": inertia}


def drift_check(records: list, epsilon: float, dim: int) -> dict:
    """Compare measured energy/inertia against the viscous drift laws.

    The εΔᵥ term injects Δᵥ|v|² = 2N per unit phase mass, so the laws are

        energy(t)  = energy(0) + 2N ε t ‖f₀‖
        inertia(t) = inertia(0) + (2N/3) ε t³ ‖f₀‖.

    (The corresponding flux-form lattice identities are exact, so the
    measured deviation sits at the solver floor.)  The drift values with
    the dimension factor N omitted are reported alongside for reference.
    Deviations are relative to the predicted drift, or to the initial
    value when ε = 0.
    """
    if not records:
        raise ValueError("drift_check needs at least one record")
    e0 = records[0].kinetic_energy
    i0 = records[0].inertia
    m0 = records[0].mass
    max_e = 0.0
    max_i = 0.0
    for rec in records[1:]:
        t = rec.time
        de_pred = 2.0 * dim * epsilon * t * m0
        di_pred = (2.0 * dim / 3.0) * epsilon * t ** 3 * m0
        if epsilon > 0:
            max_e = max(max_e, abs(rec.kinetic_energy - e0 - de_pred)
                        / de_pred)
            max_i = max(max_i, abs(rec.inertia - i0 - di_pred) / di_pred)
        else:
            max_e = max(max_e, abs(rec.kinetic_energy - e0) / max(e0, 1e-300))
            max_i = max(max_i, abs(rec.inertia - i0) / max(abs(i0), 1e-300))
    t_end = records[-1].time
    return {
        "max_energy_deviation": max_e,
        "max_inertia_deviation": max_i,
        "energy_drift_predicted": 2.0 * dim * epsilon * t_end * m0,
        "energy_drift_measured": records[-1].kinetic_energy - e0,
        "inertia_drift_predicted": (2.0 * dim / 3.0) * epsilon * t_end ** 3 * m0,
        "inertia_drift_measured": records[-1].inertia - i0,
        "dimensionless_printed_law_drift": 2.0 * epsilon * t_end * m0,
    }


# ---------------------------------------------------------------------------
# entropy and dissipation
# ---------------------------------------------------------------------------

def quantum_entropy(f: DensityField) -> float:
    """∫ f log f + (1-f) log(1-f) with the 0·log 0 = 0 convention."""
    v = f.samples
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(v > 0.0, v * np.log(np.where(v > 0.0, v, 1.0)), 0.0)
        s += np.where(v < 1.0,
                      (1.0 - v) * np.log1p(np.where(v < 1.0, -v, 0.0)), 0.0)
    return integrate(f.grid, s)


def entropy_dissipation(f: DensityField, table: KernelTable,
                        form: str = "arcsin", gradient_order: int = 4,
                        method: str = "fft") -> float:
    """Non-negative dissipation rate D(t) of the quantum entropy."""
    grid = f.grid
    dim = grid.velocity.dim
    h = grid.velocity.spacing
    g = np.clip(f.samples, 0.0, 1.0)
    G = g * (1.0 - g)
    if form == "arcsin":
        p = velocity_gradient(np.arcsin(np.sqrt(g)), dim, h, gradient_order)
    elif form == "direct":
        grads = velocity_gradient(g, dim, h, gradient_order)
        sq = np.sqrt(G)
        p = [np.where(G > 0.0, pk / np.where(G > 0.0, 2.0 * sq, 1.0), 0.0)
             for pk in grads]
    else:
        raise ValueError(f"unknown dissipation form {form!r}")
    sqG = np.sqrt(G)
    q = [sqG * pk for pk in p]

    total = np.zeros(g.shape[:grid.n_spatial_axes])
    for i in range(dim):
        for j in range(dim):
            conv_g = lattice_convolve(table.a_component(i, j), G, h, dim,
                                      method)
            conv_q = lattice_convolve(table.a_component(i, j), q[j], h, dim,
                                      method)
            term = p[i] * p[j] * conv_g - q[i] * conv_q
            axes = tuple(range(grid.n_spatial_axes, term.ndim))
            total = total + term.sum(axis=axes)
    d = 8.0 * h ** dim * total
    if not grid.homogeneous:
        d = d.sum() * grid.spatial.cell_volume
    return max(float(d), 0.0)   # sum of squares up to roundoff


def entropy_dissipation_pairwise(f: DensityField, table: KernelTable,
                                 form: str = "arcsin",
                                 gradient_order: int = 4) -> float:
    """Literal (v, v*) double sum using the tabulated √aⁿ; test oracle."""
    grid = f.grid
    if not grid.homogeneous:
        raise ValueError("pairwise oracle is homogeneous-only")
    dim = grid.velocity.dim
    h = grid.velocity.spacing
    g = np.clip(f.samples, 0.0, 1.0)
    G = g * (1.0 - g)
    if form == "arcsin":
        p = velocity_gradient(np.arcsin(np.sqrt(g)), dim, h, gradient_order)
    else:
        grads = velocity_gradient(g, dim, h, gradient_order)
        sq = np.sqrt(G)
        p = [np.where(G > 0.0, pk / np.where(G > 0.0, 2.0 * sq, 1.0), 0.0)
             for pk in grads]
    m = grid.velocity.points_per_axis
    nodes = list(np.ndindex(*grid.velocity.shape))
    sqG = np.sqrt(G)
    total = 0.0
    for a_idx in nodes:
        for b_idx in nodes:
            disp = tuple(ai - bi + m - 1 for ai, bi in zip(a_idx, b_idx))
            root = table.sqrt[disp]
            u = np.array([sqG[b_idx] * p[k][a_idx] - sqG[a_idx] * p[k][b_idx]
                          for k in range(dim)])
            w = root @ u
            total += float(w @ w)
    return 4.0 * h ** (2 * dim) * total


def entropy_inequality_check(records: list) -> dict:
    """max over records of S(t) + ∫₀ᵗ D - S(0); non-positive up to slack."""
    s0 = records[0].entropy
    worst = -np.inf
    for rec in records:
        worst = max(worst, rec.entropy + rec.cumulative_dissipation - s0)
    return {"max_slack": float(worst), "entropy_initial": s0,
            "relative_slack": float(worst / abs(s0)) if s0 != 0 else 0.0}


def weighted_gradient_norm(f: DensityField, env: EnvelopeSpec) -> float:
    """∫ e^{α(|x|²+|v|²)} |∇ᵥf|², the envelope-weighted H¹ᵥ seminorm."""
    from .fields import phase_radius_squared
    grid = f.grid
    dim = grid.velocity.dim
    h = grid.velocity.spacing
    grads = velocity_gradient(f.samples, dim, h, order=2)
    r2 = phase_radius_squared(grid)
    expo = np.minimum(env.alpha * r2, 700.0)   # floor the overflow, tails are 0
    w = np.exp(expo)
    total = sum(gk * gk for gk in grads) * w
    return float(total.sum() * grid.quadrature_weight)


# ---------------------------------------------------------------------------
# weak-form residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Separable test function τ(t)·s(x)·P(v)e^{-|v|²/2} with analytic
    derivatives (P polynomial)."""

    name: str
    tau: callable
    dtau: callable
    poly: callable          # P(vcoords) -> array
    poly_grad: list         # ∂ᵢP
    poly_hess: list         # list of rows of ∂ᵢ∂ⱼP
    x_wave: float = 0.0     # amplitude of 1 + a·cos(2π x₁ / L)

    def velocity_parts(self, grid: PhaseGrid):
        v = grid.velocity.coordinates()
        env = np.exp(-0.5 * grid.velocity.squared_radius())
        P = self.poly(v)
        g = P * env
        grad = []
        for i in range(grid.velocity.dim):
            grad.append((self.poly_grad[i](v) - v[i] * P) * env)
        hess = []
        for i in range(grid.velocity.dim):
            row = []
            for j in range(grid.velocity.dim):
                pij = self.poly_hess[i][j](v)
                term = (pij - v[j] * self.poly_grad[i](v)
                        - v[i] * self.poly_grad[j](v)
                        - (1.0 if i == j else 0.0) * P + v[i] * v[j] * P)
                row.append(term * env)
            hess.append(row)
        return g, grad, hess

    def spatial_parts(self, grid: PhaseGrid):
        if grid.homogeneous or self.x_wave == 0.0:
            one = np.ones(() if grid.homogeneous else grid.spatial.shape)
            zero = np.zeros_like(one)
            return one, [zero] * max(grid.n_spatial_axes, 1)
        xs = grid.spatial.coordinates()
        k = 2.0 * np.pi / grid.spatial.extent
        s = 1.0 + self.x_wave * np.cos(k * xs[0])
        ds = [-self.x_wave * k * np.sin(k * xs[0])]
        ds += [np.zeros_like(s)] * (grid.spatial.dim - 1)
        return s, ds


def _c(x):
    return lambda v: np.full_like(v[0], x)


def default_test_pack(dim: int) -> list:
    """The fixed, versioned five-member pack of Gaussian-times-polynomial
    test functions used by the weak-form residual."""
    zero = _c(0.0)
    one = _c(1.0)

    def hess(entries):
        full = [[zero for _ in range(dim)] for _ in range(dim)]
        for (i, j), fn in entries.items():
            full[i][j] = fn
            full[j][i] = fn
        return full

    pack = [
        TestFunction(
            name="gauss", tau=lambda t: 1.0 + 0.5 * t,
            dtau=lambda t: 0.5,
            poly=lambda v: np.ones_like(v[0]),
            poly_grad=[zero] * dim, poly_hess=hess({})),
        TestFunction(
            name="gauss_v1", tau=lambda t: 1.0 + t * t,
            dtau=lambda t: 2.0 * t,
            poly=lambda v: v[0],
            poly_grad=[one] + [zero] * (dim - 1), poly_hess=hess({})),
        TestFunction(
            name="gauss_v1v2", tau=lambda t: np.cos(t),
            dtau=lambda t: -np.sin(t),
            poly=lambda v: v[0] * v[1],
            poly_grad=[lambda v: v[1], lambda v: v[0]] + [zero] * (dim - 2),
            poly_hess=hess({(0, 1): one})),
        TestFunction(
            name="gauss_r2", tau=lambda t: 1.0 / (1.0 + t),
            dtau=lambda t: -1.0 / (1.0 + t) ** 2,
            poly=lambda v: sum(vk * vk for vk in v) - 2.0,
            poly_grad=[(lambda k: lambda v: 2.0 * v[k])(k)
                       for k in range(dim)],
            poly_hess=hess({(k, k): _c(2.0) for k in range(dim)})),
        TestFunction(
            name="gauss_aniso", tau=lambda t: 1.0 + 0.25 * np.sin(2.0 * t),
            dtau=lambda t: 0.5 * np.cos(2.0 * t),
            poly=lambda v: v[0] * v[0] - v[1] * v[1],
            poly_grad=[lambda v: 2.0 * v[0], lambda v: -2.0 * v[1]]
                      + [zero] * (dim - 2),
            poly_hess=hess({(0, 0): _c(2.0), (1, 1): _c(-2.0)}),
            x_wave=0.3),
    ]
    return pack


def weak_residual(history: list, grid: PhaseGrid, table: KernelTable,
                  epsilon: float, pack: list | None = None,
                  conv_method: str = "fft",
                  collision_enabled: bool = True) -> dict:
    """Relative weak-form residual per test function over a trajectory.

    ``history`` is a list of (time, samples) with uniform spacing covering
    [0, T]; missing snapshots are an error because the time quadrature
    needs them.
    """
    if len(history) < 2:
        raise ValueError("weak residual needs at least two snapshots")
    pack = pack or default_test_pack(grid.velocity.dim)
    dim = grid.velocity.dim
    vcoords = grid.velocity.coordinates()

    terms = {fn.name: dict(endpoint=0.0, time=0.0, transport=0.0,
                           diffusion=0.0, drift=0.0) for fn in pack}
    parts_v = {fn.name: fn.velocity_parts(grid) for fn in pack}
    parts_x = {fn.name: fn.spatial_parts(grid) for fn in pack}

    times = [t for t, _ in history]
    weights = np.gradient(np.array(times))  # trapezoid-equivalent weights
    weights[0] = 0.5 * (times[1] - times[0])
    weights[-1] = 0.5 * (times[-1] - times[-2])

    nvel = dim

    def lift(x_part):
        if grid.homogeneous:
            return x_part
        return x_part.reshape(x_part.shape + (1,) * nvel)

    for (t, samples), wt in zip(history, weights):
        f = DensityField(grid=grid, samples=samples, time=t)
        if collision_enabled:
            coeffs = coefficient_fields(f, table, method=conv_method)
        else:
            coeffs = None
        G = samples * (1.0 - samples)
        for fn in pack:
            g, grad, hess = parts_v[fn.name]
            s, ds = parts_x[fn.name]
            tau = fn.tau(t)
            dtau = fn.dtau(t)
            acc = terms[fn.name]
            # ∂φ/∂t term
            acc["time"] += wt * dtau * integrate(
                grid, samples, np.broadcast_to(lift(s) * g, grid.shape))
            # v·∇ₓφ term
            if not grid.homogeneous:
                vdx = np.zeros(grid.shape)
                for k in range(grid.spatial.dim):
                    vdx += np.broadcast_to(vcoords[k], grid.shape) \
                        * lift(ds[k]) * g
                acc["transport"] += wt * tau * integrate(grid, samples, vdx)
            # diffusion term (ā + εI) : Hess φ
            diff = np.zeros(grid.shape)
            for i in range(dim):
                for j in range(dim):
                    aij = (coeffs.a_bar[..., i, j] if coeffs is not None
                           else 0.0)
                    if i == j:
                        aij = aij + epsilon
                    diff += aij * lift(s) * hess[i][j]
            acc["diffusion"] += wt * tau * integrate(grid, samples, diff)
            # drift term (∂ᵢā_ij f + b̄ⱼ f(1-f)) ∂φ/∂vⱼ
            if coeffs is not None:
                drift = np.zeros(grid.shape)
                for j in range(dim):
                    drift += (coeffs.div_a_bar[..., j] * samples
                              + coeffs.b_bar[..., j] * G) * lift(s) * grad[j]
                acc["drift"] += wt * tau * float(
                    drift.sum() * grid.quadrature_weight)

    out = {}
    t0, s0 = history[0]
    tN, sN = history[-1]
    for fn in pack:
        g, _, _ = parts_v[fn.name]
        s, _ = parts_x[fn.name]
        phi_field = np.broadcast_to(lift(s) * g, grid.shape)
        end = (fn.tau(tN) * integrate(grid, sN, phi_field)
               - fn.tau(t0) * integrate(grid, s0, phi_field))
        acc = terms[fn.name]
        lhs = end - acc["time"] - acc["transport"]
        rhs = acc["diffusion"] + acc["drift"]
        scale = (abs(end) + abs(acc["time"]) + abs(acc["transport"])
                 + abs(acc["diffusion"]) + abs(acc["drift"]) + 1e-300)
        out[fn.name] = abs(lhs - rhs) / scale
    out["max"] = max(out.values())
    return out
