"""Executable acceptance criteria and the independent cross-check oracles.

Each criterion is a function returning a CriterionResult; the pytest
acceptance module and the ``diagnose --assert`` subcommand share these.
The oracles here are deliberately implemented as plain loops (double-loop
convolution, dense operator assembly, pairwise dissipation) so they stay
independent of the vectorized production paths they guard.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import drift_check, entropy_inequality_check
from .driver import Trajectory, run_trajectory
from .evolution import (FrozenOperator, SolverConfig, assemble_frozen,
                        picard_fixed_point)
from .fields import DensityField, make_initial_datum
from .grids import PhaseGrid, build_phase_grid
from .initial_data import regularize_initial_datum
from .kernel import (CrossSectionSpec, KernelConfig, KernelTable,
                     build_kernel_table, kernel_invariant_report)
from .mean_field import coefficient_fields
from .diagnostics import weak_residual


@dataclass
class CriterionResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: value={self.value:.6e} "
                f"threshold={self.threshold:.3e} {self.detail}".rstrip())


# ---------------------------------------------------------------------------
# canonical desk-scale setups
# ---------------------------------------------------------------------------

def default_setup(points_per_axis: int = 48, kernel_n: int = 8,
                  epsilon: float = 0.05, dt: float = 1e-3,
                  t_end: float = 0.5, family: str = "gaussian",
                  params: dict | None = None, regularize: bool = True):
    """Grid, kernel table, solver config and datum of the default run."""
    grid = build_phase_grid(2, 6.0, points_per_axis)
    spec = CrossSectionSpec(gamma=-3.0)
    kcfg = KernelConfig(n=kernel_n)
    table = build_kernel_table(grid.velocity, spec, kcfg)
    cfg = SolverConfig(epsilon=epsilon, dt=dt, t_end=t_end,
                       kernel_index=kernel_n)
    f0 = make_initial_datum(grid, family,
                            params if params is not None
                            else {"amplitude": 0.5, "alpha": 1.0})
    if regularize:
        f0 = regularize_initial_datum(f0, kernel_n)
    return grid, table, cfg, f0


def inhomogeneous_setup(spatial_points: int = 16, points_per_axis: int = 32,
                        extent: float = 10.0, epsilon: float = 0.05,
                        dt: float = 1e-3, t_end: float = 0.25,
                        kernel_n: int = 8):
    """Localized torus run for the inertia drift law."""
    grid = build_phase_grid(2, 6.0, points_per_axis,
                            spatial_extent=extent,
                            spatial_points=spatial_points)
    spec = CrossSectionSpec(gamma=-3.0)
    kcfg = KernelConfig(n=kernel_n)
    table = build_kernel_table(grid.velocity, spec, kcfg)
    cfg = SolverConfig(epsilon=epsilon, dt=dt, t_end=t_end,
                       kernel_index=kernel_n)
    f0 = make_initial_datum(grid, "gaussian",
                            {"amplitude": 0.5, "alpha": 1.0, "x_width": 1.1})
    f0 = regularize_initial_datum(f0, kernel_n)
    return grid, table, cfg, f0


# ---------------------------------------------------------------------------
# single-trajectory criteria
# ---------------------------------------------------------------------------

def crit_mass_conservation(traj: Trajectory, tol: float = 1e-8) -> CriterionResult:
    m0 = traj.records[0].mass
    dev = max(abs(r.mass - m0) for r in traj.records) / m0
    return CriterionResult("mass conservation (relative drift)", dev <= tol,
                           dev, tol)


def crit_momentum_conservation(traj: Trajectory,
                               tol: float = 1e-8) -> CriterionResult:
    m0 = traj.records[0].mass
    p0 = np.array(traj.records[0].momentum)
    dev = max(float(np.abs(np.array(r.momentum) - p0).max())
              for r in traj.records) / m0
    return CriterionResult("momentum conservation (|Δ∫fv| / mass)",
                           dev <= tol, dev, tol)


def crit_energy_drift_law(traj: Trajectory, epsilon: float, dim: int,
                          tol: float = 0.02) -> CriterionResult:
    rep = drift_check(traj.records, epsilon, dim)
    dev = abs(rep["energy_drift_measured"] - rep["energy_drift_predicted"]) \
        / rep["energy_drift_predicted"]
    return CriterionResult(
        "energy drift law 2Nεt·mass (relative deviation at T)",
        dev <= tol, dev, tol,
        detail=f"measured={rep['energy_drift_measured']:.6e} "
               f"predicted={rep['energy_drift_predicted']:.6e}")


def crit_energy_refinement(dev_coarse: float, dev_fine: float,
                           floor: float = 1e-6) -> CriterionResult:
    """Refinement must not degrade the law; both deviations sit at the
    solver floor for the conservative discretization, so 'decreases' is
    asserted up to a floor three orders below the 2% tolerance."""
    ok = dev_fine <= max(dev_coarse, floor)
    return CriterionResult(
        "energy drift law deviation under M -> 2M refinement",
        ok, dev_fine, max(dev_coarse, floor),
        detail=f"coarse={dev_coarse:.3e} fine={dev_fine:.3e}")


def crit_inertia_drift_law(traj: Trajectory, epsilon: float, dim: int,
                           tol: float = 0.05) -> CriterionResult:
    rep = drift_check(traj.records, epsilon, dim)
    dev = abs(rep["inertia_drift_measured"] - rep["inertia_drift_predicted"]) \
        / rep["inertia_drift_predicted"]
    return CriterionResult(
        "inertia drift law (2N/3)εt³·mass (relative deviation at T)",
        dev <= tol, dev, tol,
        detail=f"measured={rep['inertia_drift_measured']:.6e} "
               f"predicted={rep['inertia_drift_predicted']:.6e}")


def crit_entropy_inequality(traj: Trajectory,
                            rel_tol: float = 1e-3) -> CriterionResult:
    rep = entropy_inequality_check(traj.records)
    tol = rel_tol * abs(rep["entropy_initial"])
    return CriterionResult(
        "entropy inequality max[S(t)+∫D-S(0)]", rep["max_slack"] <= tol,
        rep["max_slack"], tol,
        detail=f"S(0)={rep['entropy_initial']:.6f}")


def crit_pauli_bound(traj: Trajectory, tol: float = 1e-8) -> CriterionResult:
    worst_low = min(r.pauli_min for r in traj.records)
    worst_high = max(r.pauli_max for r in traj.records)
    overshoot = max(-worst_low, worst_high - 1.0, 0.0)
    ok = overshoot <= tol and traj.clamp_total <= tol
    return CriterionResult(
        "Pauli bound (pre-clamp overshoot and clamped mass)", ok,
        max(overshoot, traj.clamp_total), tol,
        detail=f"min={worst_low:.3e} max-1={worst_high-1.0:.3e} "
               f"clamped={traj.clamp_total:.3e}")


def crit_equilibrium_stationarity(traj: Trajectory, dt: float,
                                  l1_tol: float = 1e-3,
                                  d_tol: float = 1e-6) -> CriterionResult:
    f0 = traj.initial
    drift = float(np.abs(traj.final.samples - f0.samples).sum()
                  / f0.samples.sum())
    d_max = max(r.dissipation_increment / dt for r in traj.records)
    ok = drift <= l1_tol and d_max <= d_tol
    return CriterionResult(
        "Fermi-Dirac equilibrium stationarity (ε=0)", ok,
        max(drift, d_max / d_tol * l1_tol), l1_tol,
        detail=f"L1 drift={drift:.3e} (tol {l1_tol:.0e}), "
               f"max D={d_max:.3e} (tol {d_tol:.0e})")


# ---------------------------------------------------------------------------
# kernel suite
# ---------------------------------------------------------------------------

def crit_kernel_suite(report: dict) -> list:
    out = [
        CriterionResult("kernel: max |aⁿ(z)z| residual",
                        report["max_az_residual"] <= 1e-12,
                        report["max_az_residual"], 1e-12),
        CriterionResult("kernel: PSD min eigenvalue",
                        report["psd_min_eigenvalue"] >= -1e-12,
                        report["psd_min_eigenvalue"], -1e-12),
        CriterionResult("kernel: symmetry aⁿ(-z)=aⁿ(z) exact",
                        report["symmetry_residual"] == 0.0,
                        report["symmetry_residual"], 0.0),
        CriterionResult("kernel: divergence FD order 2.0 ± 0.1",
                        abs(report["divergence_fd_order"] - 2.0) <= 0.1,
                        report["divergence_fd_order"], 2.0),
        CriterionResult("kernel: √aⁿ squared relative residual",
                        report["sqrt_square_residual"] <= 1e-10,
                        report["sqrt_square_residual"], 1e-10),
        CriterionResult("kernel: ellipticity floor margin (identity bound)",
                        report["ellipticity_floor_margin"] >= -1e-9,
                        report["ellipticity_floor_margin"], 0.0),
    ]
    return out


# ---------------------------------------------------------------------------
# oracle equivalence (independent loop implementations)
# ---------------------------------------------------------------------------

def coefficient_fields_loop_oracle(f: DensityField, table: KernelTable):
    """Plain double-loop evaluation of ā, b̄ and ∂ⱼā_ij (homogeneous)."""
    grid = f.grid
    dim = grid.velocity.dim
    m = grid.velocity.points_per_axis
    h = grid.velocity.spacing
    g = f.samples
    G = g * (1.0 - g)
    nodes = list(np.ndindex(*grid.velocity.shape))
    a_bar = np.zeros(grid.velocity.shape + (dim, dim))
    b_bar = np.zeros(grid.velocity.shape + (dim,))
    div_a = np.zeros(grid.velocity.shape + (dim,))
    for v_idx in nodes:
        for w_idx in nodes:
            disp = tuple(vi - wi + m - 1 for vi, wi in zip(v_idx, w_idx))
            a_bar[v_idx] += table.a[disp] * G[w_idx]
            b_bar[v_idx] += table.div[disp] * g[w_idx]
            div_a[v_idx] += table.div[disp] * G[w_idx]
    w = h ** dim
    return a_bar * w, b_bar * w, div_a * w


def dense_frozen_oracle(g: DensityField, table: KernelTable, epsilon: float):
    """Dense loop-built reference of the frozen operator (homogeneous).

    Reimplements the flux-form diffusion, upwind drift, reaction and the
    pairwise constant term entry by entry with explicit loops.
    """
    grid = g.grid
    dim = grid.velocity.dim
    m = grid.velocity.points_per_axis
    h = grid.velocity.spacing
    shape = grid.velocity.shape
    size = grid.velocity.size
    gs = g.samples
    G = gs * (1.0 - gs)

    a_bar, b_bar, _ = coefficient_fields_loop_oracle(g, table)
    # div b̄ by the same one-axis stencils
    from .stencils import velocity_divergence, velocity_gradient
    div_b = velocity_divergence([b_bar[..., d] for d in range(dim)], dim, h)

    ids = np.arange(size).reshape(shape)
    dense = np.zeros((size, size))

    def dstencil(idx, c):
        """(cols, weights) of the one-axis derivative at node idx."""
        i = idx[c]
        def shifted(k):
            j = list(idx)
            j[c] = i + k
            return ids[tuple(j)]
        if 1 <= i <= m - 2:
            return [shifted(-1), shifted(1)], [-1 / (2 * h), 1 / (2 * h)]
        if i == 0:
            return ([shifted(0), shifted(1), shifted(2)],
                    [-3 / (2 * h), 4 / (2 * h), -1 / (2 * h)])
        return ([shifted(0), shifted(-1), shifted(-2)],
                [3 / (2 * h), -4 / (2 * h), 1 / (2 * h)])

    # flux-form diffusion with Ā = ā + εI
    for d in range(dim):
        for idx in np.ndindex(*shape):
            if idx[d] >= m - 1:
                continue
            jdx = list(idx)
            jdx[d] += 1
            jdx = tuple(jdx)
            lo, up = ids[idx], ids[jdx]
            coef = 0.5 * (a_bar[idx][d, d] + a_bar[jdx][d, d]) + epsilon
            for row, sgn in ((lo, 1.0), (up, -1.0)):
                dense[row, up] += sgn * coef / h ** 2
                dense[row, lo] -= sgn * coef / h ** 2
            for c in range(dim):
                if c == d:
                    continue
                cf = 0.5 * (a_bar[idx][d, c] + a_bar[jdx][d, c])
                for node in (idx, jdx):
                    cols, ws = dstencil(node, c)
                    for col, wgt in zip(cols, ws):
                        dense[lo, col] += cf * 0.5 * wgt / h
                        dense[up, col] -= cf * 0.5 * wgt / h
    # upwind drift -U·∇
    for d in range(dim):
        for idx in np.ndindex(*shape):
            u = b_bar[idx][d] * (1.0 - 2.0 * gs[idx])
            row = ids[idx]
            if u > 0 and idx[d] >= 1:
                jdx = list(idx); jdx[d] -= 1
                dense[row, row] -= u / h
                dense[row, ids[tuple(jdx)]] += u / h
            elif u < 0 and idx[d] <= m - 2:
                jdx = list(idx); jdx[d] += 1
                dense[row, ids[tuple(jdx)]] -= u / h
                dense[row, row] += u / h
    # reaction diagonal
    for idx in np.ndindex(*shape):
        dense[ids[idx], ids[idx]] += div_b[idx] * gs[idx]

    # constant part: divₕ W(g) + ε Δₕ g - L g with the loop-built pieces
    lg = velocity_gradient(
        np.log(np.clip(gs, 1e-300, 1 - 1e-16))
        - np.log1p(-np.clip(gs, 1e-300, 1 - 1e-16)), dim, h)
    p = [G * c for c in lg]
    W = [np.zeros(shape) for _ in range(dim)]
    nodes = list(np.ndindex(*shape))
    for v_idx in nodes:
        for w_idx in nodes:
            disp = tuple(vi - wi + m - 1 for vi, wi in zip(v_idx, w_idx))
            amat = table.a[disp]
            for i in range(dim):
                for j in range(dim):
                    W[i][v_idx] += amat[i, j] * (
                        G[w_idx] * p[j][v_idx] - G[v_idx] * p[j][w_idx])
    for i in range(dim):
        W[i] *= h ** dim
    divW = np.zeros(shape)
    for d in range(dim):
        wd = np.moveaxis(W[d], d, 0)
        o = np.moveaxis(divW, d, 0)
        face = 0.5 * (wd[:-1] + wd[1:])
        o[:-1] += face / h
        o[1:] -= face / h
    lap = np.zeros(shape)
    for d in range(dim):
        gd = np.moveaxis(gs, d, 0)
        o = np.moveaxis(lap, d, 0)
        face = (gd[1:] - gd[:-1]) / h
        o[:-1] += face / h
        o[1:] -= face / h
    const = divW.ravel() + epsilon * lap.ravel() - dense @ gs.ravel()
    return dense, const


def crit_oracle_equivalence(points: int = 8,
                            tol: float = 1e-12) -> list:
    """Convolution and frozen-operator assembly against the loop oracles."""
    grid = build_phase_grid(2, 2.0, points)
    spec = CrossSectionSpec(gamma=-3.0)
    table = build_kernel_table(grid.velocity, spec, KernelConfig(n=4))
    rng = np.random.default_rng(2024)
    samples = 0.1 + 0.8 * rng.random(grid.shape)
    f = DensityField(grid=grid, samples=samples)

    coeffs = coefficient_fields(f, table, method="direct")
    a_o, b_o, diva_o = coefficient_fields_loop_oracle(f, table)
    conv_err = max(float(np.abs(coeffs.a_bar - a_o).max()),
                   float(np.abs(coeffs.b_bar - b_o).max()),
                   float(np.abs(coeffs.div_a_bar - diva_o).max()))

    eps = 0.05
    op = assemble_frozen(f, table, eps, conv_method="direct")
    dense, const_o = dense_frozen_oracle(f, table, eps)
    vec = rng.standard_normal(grid.velocity.size)
    act_err = float(np.abs(op.matrices[0] @ vec - dense @ vec).max())
    const_err = float(np.abs(op.constants[0] - const_o).max())
    scale = max(1.0, float(np.abs(dense @ vec).max()))

    return [
        CriterionResult("oracle: mean-field convolution vs double loop",
                        conv_err <= tol, conv_err, tol),
        CriterionResult("oracle: frozen operator action vs dense assembly",
                        act_err / scale <= tol, act_err / scale, tol),
        CriterionResult("oracle: frozen constant part vs dense assembly",
                        const_err <= 10 * tol, const_err, 10 * tol),
    ]


# ---------------------------------------------------------------------------
# ladder criteria
# ---------------------------------------------------------------------------

def weak_residual_ladder(t_end: float = 0.2, rungs: int = 3) -> list:
    """Max pack residual on a (dt, h)-halving ladder of homogeneous runs."""
    out = []
    for k in range(rungs):
        m = 16 * 2 ** k
        dt = 4e-3 / 2 ** k
        grid, table, cfg, f0 = default_setup(
            points_per_axis=m, kernel_n=8, dt=dt, t_end=t_end)
        traj = run_trajectory(f0, table, cfg, diagnostics_stride=10 ** 9,
                              dissipation_stride=10 ** 9, history_stride=1)
        res = weak_residual(traj.history, grid, table, cfg.epsilon)
        out.append(res["max"])
    return out


def crit_weak_residual_ladder(residuals: list,
                              band: float = 0.2) -> CriterionResult:
    ratios = [residuals[k + 1] / residuals[k]
              for k in range(len(residuals) - 1)]
    ok = all(0.5 * (1 - band) <= r <= 0.5 * (1 + band) for r in ratios)
    return CriterionResult(
        "weak-form residual halves under (dt, h) halving", ok,
        max(ratios), 0.5 * (1 + band),
        detail=f"residuals={['%.3e' % r for r in residuals]} "
               f"ratios={['%.3f' % r for r in ratios]}")


def viscosity_ladder_finals(points_per_axis: int = 48,
                            t_end: float = 0.5) -> list:
    """Final states along (εₖ, nₖ) = (0.1/2ᵏ, 4·2ᵏ), k = 0..3."""
    finals = []
    for k in range(4):
        eps_k = 0.1 / 2 ** k
        n_k = 4 * 2 ** k
        grid, table, cfg, f0 = default_setup(
            points_per_axis=points_per_axis, kernel_n=n_k, epsilon=eps_k,
            t_end=t_end)
        traj = run_trajectory(f0, table, cfg, diagnostics_stride=10 ** 9,
                              dissipation_stride=10 ** 9)
        finals.append(traj.final)
    return finals


def crit_viscosity_ladder(finals: list) -> CriterionResult:
    w = finals[0].grid.quadrature_weight
    dists = [float(np.abs(finals[k].samples - finals[k + 1].samples).sum() * w)
             for k in range(len(finals) - 1)]
    ok = all(dists[k + 1] < dists[k] for k in range(len(dists) - 1))
    return CriterionResult(
        "regularization ladder: successive L¹ distances decrease", ok,
        dists[-1], dists[0] if dists else 0.0,
        detail=f"distances={['%.4e' % d for d in dists]}")
