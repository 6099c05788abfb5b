"""Time evolution: transport/collision splitting with a Picard-iterated
implicit collision step.

One collision step solves the frozen-coefficient linear problem

    (f' - f)/dt = ∂ⱼ(Ā^g_ij ∂ᵢf') - b̄^g·(1-2g)∇ᵥf' - (∇·b̄^g) g (1-f')

with Ā = ā + εI, iterated on g (Picard) until the L¹ fixed-point residual
drops below tolerance.  The linear part L is discretized as flux-form
diffusion with face-averaged Ā, first-order upwind drift, and the
diagonal reaction +(∇·b̄)g; the constant part is arranged so that the
total action collapses at the fixed point f' = g to

    ε Δₕ f' + divₕ W(f')        W_i = Σⱼ [ pⱼ ā_ij - G (aⁿ_ij * pⱼ) ]

with G = f(1-f) and p = G ∇ₕ log(f/(1-f)): the pairwise collision flux in
log form, i.e.  const = divₕ W(g) + ε Δₕ g - L g.  Because every aⁿ
sample satisfies aⁿ(z)z = 0 and aⁿ(-z) = aⁿ(z), the node sums Σ W, Σ v·W
and Σ |v|-weighted W vanish to machine precision, so a converged step
conserves mass and momentum exactly and reproduces the viscous
kinetic-energy law  d/dt ∫f|v|² = 2Nε ∫f  at the solver floor.  The same
log form makes any lattice Fermi-Dirac profile 1/(1+e^{a+b|v|²}) an exact
fixed point of the collision step (centered differences are exact on the
quadratic exponent), so the Picard loop terminates there in one
iteration.

Transport is the exact-characteristic shift f(t+dt,x,v) = f(t, x-v dt, v):
a spectral phase shift on the periodic torus (default; exact for the
trigonometric interpolant, mass exact) or a convex-combination linear
remap; exact lattice multiples reduce to index rolls in both modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import DensityField
from .grids import PhaseGrid, VelocityGrid, PERIODIC, BOX
from .kernel import KernelTable
from .mean_field import CoefficientFields, coefficient_fields, lattice_convolve
from .stencils import velocity_gradient


class EvolutionError(RuntimeError):
    """Solver failure (non-convergence, invalid configuration)."""


class PicardError(EvolutionError):
    """Picard loop hit the iteration cap; carries the residual history."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.05
    dt: float = 1e-3
    t_end: float = 0.5
    picard_tol: float = 1e-10
    picard_max_iters: int = 30
    kernel_index: int = 8
    splitting: str = "strang"
    theta: float = 1.0
    conv_method: str = "fft"
    transport_interp: str = "spectral"
    collision_enabled: bool = True
    linear_residual_tol: float = 1e-10

    def __post_init__(self):
        if self.dt <= 0:
            raise EvolutionError(f"dt must be positive, got {self.dt}")
        if self.picard_tol <= 0:
            raise EvolutionError("picard_tol must be positive")
        if self.picard_max_iters < 1:
            raise EvolutionError("picard_max_iters must be >= 1")
        if self.epsilon < 0:
            raise EvolutionError("epsilon must be >= 0")
        if self.splitting not in ("strang", "lie"):
            raise EvolutionError(f"unknown splitting {self.splitting!r}")
        if not (0.0 < self.theta <= 1.0):
            raise EvolutionError("picard damping theta must lie in (0, 1]")


# ---------------------------------------------------------------------------
# static stencil templates on the velocity lattice
# ---------------------------------------------------------------------------

class VelocityStencil:
    """Precomputed sparsity pattern and value-fill templates for the frozen
    operator on one velocity grid.

    The pattern (flux-form diffusion with cross terms, upwind drift,
    reaction diagonal) is static; assembling an operator reduces to
    gathering coefficient arrays into one value vector and a bincount
    scatter into the shared CSR structure.
    """

    def __init__(self, grid: VelocityGrid):
        self.grid = grid
        dim, m = grid.dim, grid.points_per_axis
        self.h = grid.spacing
        shape = grid.shape
        self.size = grid.size
        ids = np.arange(self.size).reshape(shape)
        flat = ids.ravel()
        h = self.h

        self.face_lo = []
        self.face_up = []
        for d in range(dim):
            self.face_lo.append(ids.take(range(0, m - 1), axis=d).ravel())
            self.face_up.append(ids.take(range(1, m), axis=d).ravel())

        # one-axis difference stencils (interior centered, edges one-sided)
        self.diff_cols = []
        self.diff_w = []
        for c in range(dim):
            stride = int(np.prod(shape[c + 1:], dtype=int))
            idx_c = np.indices(shape)[c].ravel()
            cols = np.empty((self.size, 3), dtype=np.int64)
            w = np.zeros((self.size, 3))
            interior = (idx_c >= 1) & (idx_c <= m - 2)
            cols[interior, 0] = flat[interior] - stride
            cols[interior, 1] = flat[interior] + stride
            cols[interior, 2] = flat[interior]
            w[interior] = np.array([-1.0, 1.0, 0.0]) / (2 * h)
            low = idx_c == 0
            cols[low, 0] = flat[low]
            cols[low, 1] = flat[low] + stride
            cols[low, 2] = flat[low] + 2 * stride
            w[low] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
            high = idx_c == m - 1
            cols[high, 0] = flat[high]
            cols[high, 1] = flat[high] - stride
            cols[high, 2] = flat[high] - 2 * stride
            w[high] = np.array([3.0, -4.0, 1.0]) / (2 * h)
            self.diff_cols.append(cols)
            self.diff_w.append(w)

        self.strides = [int(np.prod(shape[c + 1:], dtype=int))
                        for c in range(dim)]
        self.axis_index = [np.indices(shape)[c].ravel() for c in range(dim)]
        self.flat = flat

        rows, cols = [], []
        # section A: per-axis normal diffusion (4 blocks per axis)
        for d in range(dim):
            lo, up = self.face_lo[d], self.face_up[d]
            rows += [lo, lo, up, up]
            cols += [up, lo, up, lo]
        # section B: cross diffusion (2 blocks of 6 per face per pair)
        self._cross_cols = {}
        self._cross_w = {}
        for d in range(dim):
            lo, up = self.face_lo[d], self.face_up[d]
            for c in range(dim):
                if c == d:
                    continue
                c6 = np.concatenate(
                    [self.diff_cols[c][lo], self.diff_cols[c][up]], axis=1)
                w6 = 0.5 * np.concatenate(
                    [self.diff_w[c][lo], self.diff_w[c][up]], axis=1) / h
                self._cross_cols[(d, c)] = c6
                self._cross_w[(d, c)] = w6
                rows += [np.repeat(lo, 6), np.repeat(up, 6)]
                cols += [c6.ravel(), c6.ravel()]
        # section C: upwind drift (-U·∇ goes into L with a minus sign);
        # a wall node whose upwind neighbor is outside drops the term
        self._up_pos = []
        self._up_neg = []
        for d in range(dim):
            idx = self.axis_index[d]
            stride = self.strides[d]
            pos = flat[idx >= 1]
            neg = flat[idx <= m - 2]
            self._up_pos.append(pos)
            self._up_neg.append(neg)
            rows += [pos, pos, neg, neg]
            cols += [pos, pos - stride, neg + stride, neg]
        # section D: reaction diagonal
        rows.append(flat)
        cols.append(flat)

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self._n_entries = len(rows)
        order = np.lexsort((cols, rows))
        rs, cs = rows[order], cols[order]
        new_group = np.empty(len(rs), dtype=bool)
        new_group[0] = True
        new_group[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        self._order = order
        self._group = np.cumsum(new_group) - 1
        self._nnz = int(self._group[-1]) + 1
        self._indices = cs[new_group]
        starts_rows = rs[new_group]
        self._indptr = np.zeros(self.size + 1, dtype=np.int64)
        np.add.at(self._indptr, starts_rows + 1, 1)
        self._indptr = np.cumsum(self._indptr)
        self._diag_slots = self._locate_diagonal()

        ones = {(i, j): (np.ones(shape) if i == j else np.zeros(shape))
                for i in range(dim) for j in range(dim)}
        zero_u = [np.zeros(shape)] * dim
        self.laplacian = self.assemble(ones, zero_u, np.zeros(shape))

    def _locate_diagonal(self):
        slots = np.empty(self.size, dtype=np.int64)
        for r in range(self.size):
            seg = slice(self._indptr[r], self._indptr[r + 1])
            local = np.nonzero(self._indices[seg] == r)[0]
            slots[r] = self._indptr[r] + local[0]
        return slots

    def _value_vector(self, a_comp: dict, u_comp: list,
                      react: np.ndarray) -> np.ndarray:
        dim = self.grid.dim
        h = self.h
        vals = []
        for d in range(dim):
            lo, up = self.face_lo[d], self.face_up[d]
            a_dd = a_comp[(d, d)].ravel()
            coef = 0.5 * (a_dd[lo] + a_dd[up]) / (h * h)
            vals += [coef, -coef, -coef, coef]
        for d in range(dim):
            lo, up = self.face_lo[d], self.face_up[d]
            for c in range(dim):
                if c == d:
                    continue
                a_dc = a_comp[(d, c)].ravel()
                cf = 0.5 * (a_dc[lo] + a_dc[up])
                v6 = (cf[:, None] * self._cross_w[(d, c)]).ravel()
                vals += [v6, -v6]
        for d in range(dim):
            u = u_comp[d].ravel()
            up_pos = np.maximum(u[self._up_pos[d]], 0.0) / h
            up_neg = np.minimum(u[self._up_neg[d]], 0.0) / h
            # -U·∇ contribution: pos side -(u/h)(f_i - f_{i-1}) etc.
            vals += [-up_pos, up_pos, -up_neg, up_neg]
        vals.append(react.ravel())
        return np.concatenate(vals)

    def assemble(self, a_comp: dict, u_comp: list,
                 react: np.ndarray) -> sp.csr_matrix:
        """L = divₕ(A ∇ₕ·) - U·∇ₕ + diag(react) on the static pattern."""
        entries = self._value_vector(a_comp, u_comp, react)
        data = np.bincount(self._group, weights=entries[self._order],
                           minlength=self._nnz)
        return sp.csr_matrix((data, self._indices.copy(),
                              self._indptr.copy()),
                             shape=(self.size, self.size))

    def system_matrix(self, lmat: sp.csr_matrix, dt: float) -> sp.csc_matrix:
        """I - dt·L sharing the static pattern."""
        data = -dt * lmat.data
        data[self._diag_slots] += 1.0
        return sp.csc_matrix(
            sp.csr_matrix((data, lmat.indices, lmat.indptr),
                          shape=lmat.shape))

    def divergence_of_faces(self, w_comp: list) -> np.ndarray:
        """divₕ of a node vector field via arithmetic face averages and
        zero boundary flux."""
        h = self.h
        out = np.zeros(self.grid.shape)
        for d in range(self.grid.dim):
            w = np.moveaxis(w_comp[d], d, 0)
            o = np.moveaxis(out, d, 0)
            face = 0.5 * (w[:-1] + w[1:])
            o[:-1] += face / h
            o[1:] -= face / h
        return out


@lru_cache(maxsize=8)
def _stencil_cache(grid: VelocityGrid) -> VelocityStencil:
    return VelocityStencil(grid)


# ---------------------------------------------------------------------------
# frozen operator
# ---------------------------------------------------------------------------

def _safe_logit(g: np.ndarray) -> np.ndarray:
    gc = np.clip(g, 1e-300, 1.0 - 1e-16)
    return np.log(gc) - np.log1p(-gc)


def pairwise_collision_flux(g: np.ndarray, G: np.ndarray, a_bar: np.ndarray,
                            table: KernelTable, method: str) -> list:
    """W_i = Σⱼ [ pⱼ ā_ij - G (aⁿ_ij * pⱼ) ] with p = G ∇ₕ log(g/(1-g))."""
    dim = table.grid.dim
    h = table.grid.spacing
    lg = velocity_gradient(_safe_logit(g), dim, h)
    p = [G * lgk for lgk in lg]
    if method == "fft":
        from .mean_field import get_plan
        plan = get_plan(table)
        p_hat = [plan.rfft(pj) for pj in p]
        conv = [[plan.convolve_hat(("a", i, j), p_hat[j]) for j in range(dim)]
                for i in range(dim)]
    else:
        conv = [[lattice_convolve(table.a_component(i, j), p[j], h, dim,
                                  method) for j in range(dim)]
                for i in range(dim)]
    W = []
    for i in range(dim):
        acc = np.zeros_like(g)
        for j in range(dim):
            acc += p[j] * a_bar[..., i, j]
            acc -= G * conv[i][j]
        W.append(acc)
    return W


@dataclass
class FrozenOperator:
    """Assembled linear collision operator at a frozen g, per spatial node.

    ``matrices[k]`` holds the f-dependent part L (flux-form diffusion with
    ā+εI, upwind drift, linear reaction) and ``constants[k]`` the
    f-independent source, arranged so that L g + const = ε Δₕ g + divₕ W(g)
    at the frozen state itself.
    """

    grid: PhaseGrid
    epsilon: float
    coeffs: CoefficientFields
    stencil: VelocityStencil
    matrices: list
    constants: list

    def apply(self, samples: np.ndarray) -> np.ndarray:
        """Op(f) = L f + const, for diagnostics and oracle tests."""
        vshape = self.grid.velocity.shape
        if self.grid.homogeneous:
            out = self.matrices[0] @ samples.ravel() + self.constants[0]
            return out.reshape(vshape)
        nx = int(np.prod(self.grid.spatial.shape))
        flat = samples.reshape(nx, -1)
        out = np.empty_like(flat)
        for k in range(nx):
            out[k] = self.matrices[k] @ flat[k] + self.constants[k]
        return out.reshape(samples.shape)


def assemble_frozen(g: DensityField, table: KernelTable, epsilon: float,
                    conv_method: str = "fft",
                    collision_enabled: bool = True) -> FrozenOperator:
    """Build the frozen-coefficient operator at g for every spatial node."""
    if g.pauli_min < 0.0 or g.pauli_max > 1.0:
        raise EvolutionError("frozen state violates the Pauli bound")
    grid = g.grid
    stencil = _stencil_cache(grid.velocity)
    dim = grid.velocity.dim

    if collision_enabled:
        coeffs = coefficient_fields(g, table, method=conv_method,
                                    with_derivatives=False)
    else:
        zshape = g.samples.shape
        coeffs = CoefficientFields(
            grid=grid,
            a_bar=np.zeros(zshape + (dim, dim)),
            b_bar=np.zeros(zshape + (dim,)),
            div_a_bar=np.zeros(zshape + (dim,)),
            div_b_bar=np.zeros(zshape))

    if grid.homogeneous:
        g_stack = g.samples[None, ...]
        a_stack = coeffs.a_bar[None, ...]
        b_stack = coeffs.b_bar[None, ...]
        db_stack = coeffs.div_b_bar[None, ...]
    else:
        nx = int(np.prod(grid.spatial.shape))
        vshape = grid.velocity.shape
        g_stack = g.samples.reshape((nx,) + vshape)
        a_stack = coeffs.a_bar.reshape((nx,) + vshape + (dim, dim))
        b_stack = coeffs.b_bar.reshape((nx,) + vshape + (dim,))
        db_stack = coeffs.div_b_bar.reshape((nx,) + vshape)

    matrices, constants = [], []
    for k in range(g_stack.shape[0]):
        gk = g_stack[k]
        Gk = gk * (1.0 - gk)
        a_comp = {}
        for i in range(dim):
            for j in range(dim):
                comp = a_stack[k][..., i, j]
                if i == j and epsilon > 0:
                    comp = comp + epsilon
                a_comp[(i, j)] = comp
        u_comp = [b_stack[k][..., d] * (1.0 - 2.0 * gk) for d in range(dim)]
        react = db_stack[k] * gk
        lmat = stencil.assemble(a_comp, u_comp, react)

        if collision_enabled:
            W = pairwise_collision_flux(gk, Gk, a_stack[k], table,
                                        conv_method)
            const = (stencil.divergence_of_faces(W).ravel()
                     + epsilon * (stencil.laplacian @ gk.ravel())
                     - lmat @ gk.ravel())
        else:
            const = np.zeros(stencil.size)
        matrices.append(lmat)
        constants.append(const)

    return FrozenOperator(grid=grid, epsilon=epsilon, coeffs=coeffs,
                          stencil=stencil, matrices=matrices,
                          constants=constants)


# ---------------------------------------------------------------------------
# implicit collision substep and Picard loop
# ---------------------------------------------------------------------------

@dataclass
class StepReport:
    picard_iters: int = 0
    picard_residual: float = 0.0
    contraction_ratios: list = dc_field(default_factory=list)
    # extrema defaults are neutral for min/max merging across substeps
    pre_clamp_min: float = np.inf
    pre_clamp_max: float = -np.inf
    clamped_mass: float = 0.0
    transport_leak: float = 0.0


def _neumann_solve(lmat, dt, rhs, tol=1e-13, max_iters=60):
    """Solve (I - dt L) x = rhs by the Neumann fixed point x ← rhs + dt L x.

    Converges geometrically when dt ρ(L) < 1 (the implicit step at desk
    time steps is strongly diagonally dominant); returns None otherwise so
    the caller can fall back to a direct factorization.  Deterministic.
    """
    x = rhs.copy()
    scale = max(float(np.abs(rhs).max()), 1e-300)
    prev_delta = np.inf
    for _ in range(max_iters):
        x_new = rhs + dt * (lmat @ x)
        delta = float(np.abs(x_new - x).max())
        x = x_new
        if delta <= tol * scale:
            return x
        if delta > prev_delta * 1.000001 and delta > scale:
            return None     # diverging; dt too large for the fixed point
        prev_delta = delta
    return None


def parabolic_substep(f: DensityField, op: FrozenOperator, dt: float,
                      residual_tol: float = 1e-10) -> tuple:
    """Backward-Euler solve (I - dt L) f' = f + dt·const per spatial node.

    Returns the clamped field and a report carrying the pre-clamp extrema
    and the total clamped mass.
    """
    if dt < 0:
        raise EvolutionError("dt must be >= 0")
    grid = f.grid
    if grid.homogeneous:
        stacks = [f.samples.ravel()]
    else:
        nx = int(np.prod(grid.spatial.shape))
        stacks = list(f.samples.reshape(nx, -1))

    out = []
    for k, fk in enumerate(stacks):
        if dt == 0.0:
            out.append(fk.copy())
            continue
        rhs = fk + dt * op.constants[k]
        sol = _neumann_solve(op.matrices[k], dt, rhs)
        system = None
        if sol is None:
            system = op.stencil.system_matrix(op.matrices[k], dt)
            sol = spla.splu(system).solve(rhs)
        res = np.linalg.norm(rhs + dt * (op.matrices[k] @ sol) - sol)
        scale = max(np.linalg.norm(rhs), 1e-300)
        if res > residual_tol * scale:
            if system is None:   # retry direct before giving up
                system = op.stencil.system_matrix(op.matrices[k], dt)
                sol = spla.splu(system).solve(rhs)
                res = np.linalg.norm(rhs + dt * (op.matrices[k] @ sol) - sol)
            if res > residual_tol * scale:
                raise EvolutionError(
                    f"linear solve residual {res/scale:.3e} above tolerance")
        out.append(sol)

    raw = np.stack(out).reshape(f.samples.shape)
    report = StepReport(
        pre_clamp_min=float(raw.min()),
        pre_clamp_max=float(raw.max()),
    )
    clamped = np.clip(raw, 0.0, 1.0)
    report.clamped_mass = float(
        np.abs(raw - clamped).sum() * grid.quadrature_weight)
    return f.with_samples(clamped), report


def picard_fixed_point(f_prev: DensityField, table: KernelTable,
                       cfg: SolverConfig) -> tuple:
    """Iterate the frozen solve from g = f_prev to the fixed point.

    Stops when ‖f^{k+1} - f^k‖_{L¹} < picard_tol · ‖f_prev‖_{L¹}; raises
    PicardError with the residual history at the iteration cap.
    """
    grid = f_prev.grid
    w = grid.quadrature_weight
    mass_scale = max(float(np.abs(f_prev.samples).sum() * w), 1e-300)
    g = f_prev
    residuals = []
    report = StepReport()
    for it in range(1, cfg.picard_max_iters + 1):
        op = assemble_frozen(g, table, cfg.epsilon,
                             conv_method=cfg.conv_method,
                             collision_enabled=cfg.collision_enabled)
        f_new, rep = parabolic_substep(f_prev, op, cfg.dt,
                                       residual_tol=cfg.linear_residual_tol)
        if cfg.theta < 1.0:
            mixed = cfg.theta * f_new.samples + (1.0 - cfg.theta) * g.samples
            f_new = f_new.with_samples(np.clip(mixed, 0.0, 1.0))
        res = float(np.abs(f_new.samples - g.samples).sum() * w)
        residuals.append(res)
        g = f_new
        if res < cfg.picard_tol * mass_scale:
            report.picard_iters = it
            report.picard_residual = res
            report.contraction_ratios = [
                residuals[i + 1] / residuals[i]
                for i in range(len(residuals) - 1) if residuals[i] > 0]
            report.pre_clamp_min = rep.pre_clamp_min
            report.pre_clamp_max = rep.pre_clamp_max
            report.clamped_mass = rep.clamped_mass
            return g, report
    raise PicardError(
        f"picard loop did not reach tol {cfg.picard_tol} in "
        f"{cfg.picard_max_iters} iterations (dt may be too large)",
        residuals)


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------

def _roll_fraction(shift: float) -> tuple:
    k = int(np.floor(shift))
    theta = shift - k
    if theta < 1e-12:
        return k, 0.0
    if theta > 1.0 - 1e-12:
        return k + 1, 0.0
    return k, theta


def transport_step(f: DensityField, dt: float,
                   interp: str = "spectral") -> tuple:
    """Free transport f(t+dt, x, v) = f(t, x - v dt, v).

    Homogeneous mode is the identity.  On the periodic torus the shift is
    either a spectral phase shift (exact for the trigonometric
    interpolant, mass exact) or a linear convex-combination remap that
    preserves the Pauli bound; exact lattice multiples reduce to index
    rolls in both modes.  The truncated box uses the linear remap with
    zero inflow and reports the leaked mass.  Returns (field, report).
    """
    report = StepReport()
    grid = f.grid
    if grid.homogeneous or dt == 0.0:
        return f, report
    spat = grid.spatial
    dim = spat.dim
    dx = spat.spacing
    v_axis = grid.velocity.axis
    samples = f.samples

    if spat.topology == BOX:
        interp = "linear"
    shift = v_axis * dt / dx
    all_integer = bool(np.all(np.abs(shift - np.round(shift)) < 1e-12))

    if all_integer or interp == "linear":
        out = samples.copy()
        mass_before = out.sum()
        for ax in range(dim):
            out = _linear_axis_shift(out, ax, dim, v_axis, dt, dx,
                                     spat.topology)
        if spat.topology == BOX:
            report.transport_leak = float(
                (mass_before - out.sum()) * grid.quadrature_weight)
    elif interp == "spectral":
        out = _spectral_shift(samples, dim, v_axis, dt, spat.extent,
                              spat.points_per_axis)
    else:
        raise EvolutionError(f"unknown transport interpolation {interp!r}")
    return f.with_samples(out), report


def _linear_axis_shift(samples, ax, sdim, v_axis, dt, dx, topology):
    """Shift spatial axis ax by v·dt for each matching velocity node:
    convex-combination linear remap (pure index roll on lattice multiples)."""
    out = np.empty_like(samples)
    vel_axis_pos = sdim + ax
    for iv, v in enumerate(v_axis):
        sl = [slice(None)] * samples.ndim
        sl[vel_axis_pos] = iv
        block = samples[tuple(sl)]
        k, theta = _roll_fraction(v * dt / dx)
        if topology == PERIODIC:
            rolled = np.roll(block, k, axis=ax)
            if theta != 0.0:
                rolled = (1.0 - theta) * rolled \
                    + theta * np.roll(block, k + 1, axis=ax)
            out[tuple(sl)] = rolled
        else:
            out[tuple(sl)] = _box_shift(block, ax, k, theta)
    return out


def _box_shift(block, ax, k, theta):
    """Shift with zero inflow for the truncated box."""
    def ishift(arr, kk):
        moved = np.moveaxis(np.zeros_like(arr), ax, 0)
        src = np.moveaxis(arr, ax, 0)
        n = src.shape[0]
        if kk >= 0:
            if kk < n:
                moved[kk:] = src[:n - kk]
        elif -kk < n:
            moved[:n + kk] = src[-kk:]
        return np.moveaxis(moved, 0, ax)
    out = (1.0 - theta) * ishift(block, k)
    if theta != 0.0:
        out = out + theta * ishift(block, k + 1)
    return out


def _spectral_shift(samples, sdim, v_axis, dt, extent, nx):
    """Phase-shift every spatial mode by exp(-i k·v dt)."""
    axes = tuple(range(sdim))
    spec = np.fft.fftn(samples, axes=axes)
    k = 2.0 * np.pi * np.fft.fftfreq(nx, d=extent / nx)
    ndim = samples.ndim
    for ax in range(sdim):
        kshape = [1] * ndim
        kshape[ax] = nx
        vshape = [1] * ndim
        vshape[sdim + ax] = len(v_axis)
        phase = np.exp(-1j * dt * k.reshape(kshape)
                       * v_axis.reshape(vshape))
        spec = spec * phase
    return np.real(np.fft.ifftn(spec, axes=axes))


# ---------------------------------------------------------------------------
# composed step
# ---------------------------------------------------------------------------

def _clamped_after_transport(f: DensityField, rep: StepReport) -> DensityField:
    """Clamp interpolation overshoots into [0, 1], logging the magnitude."""
    raw = f.samples
    rep.pre_clamp_min = min(rep.pre_clamp_min, float(raw.min()))
    rep.pre_clamp_max = max(rep.pre_clamp_max, float(raw.max()))
    lo, hi = float(raw.min()), float(raw.max())
    if lo >= 0.0 and hi <= 1.0:
        return f
    clamped = np.clip(raw, 0.0, 1.0)
    rep.clamped_mass += float(
        np.abs(raw - clamped).sum() * f.grid.quadrature_weight)
    return f.with_samples(clamped)


def advance(f: DensityField, table: KernelTable,
            cfg: SolverConfig) -> tuple:
    """One full step: Strang (half transport, collision, half transport)
    or Lie (transport then collision); pure collision in homogeneous mode.
    Returns (field at t+dt, report)."""
    t0 = f.time
    if f.grid.homogeneous:
        out, rep = picard_fixed_point(f, table, cfg)
        return out.with_samples(out.samples, time=t0 + cfg.dt), rep

    if cfg.splitting == "strang":
        half, rep_t1 = transport_step(f, 0.5 * cfg.dt, cfg.transport_interp)
        half = _clamped_after_transport(half, rep_t1)
        collided, rep = picard_fixed_point(half, table, cfg)
        out, rep_t2 = transport_step(collided, 0.5 * cfg.dt,
                                     cfg.transport_interp)
        out = _clamped_after_transport(out, rep_t2)
        rep.transport_leak = rep_t1.transport_leak + rep_t2.transport_leak
    else:
        moved, rep_t = transport_step(f, cfg.dt, cfg.transport_interp)
        moved = _clamped_after_transport(moved, rep_t)
        collided, rep = picard_fixed_point(moved, table, cfg)
        out, rep_t2 = collided, StepReport()
        rep.transport_leak = rep_t.transport_leak
        rep_t1 = rep_t
    rep.pre_clamp_min = min(rep.pre_clamp_min, rep_t1.pre_clamp_min,
                            rep_t2.pre_clamp_min)
    rep.pre_clamp_max = max(rep.pre_clamp_max, rep_t1.pre_clamp_max,
                            rep_t2.pre_clamp_max)
    rep.clamped_mass += rep_t1.clamped_mass + rep_t2.clamped_mass
    return out.with_samples(out.samples, time=t0 + cfg.dt), rep
