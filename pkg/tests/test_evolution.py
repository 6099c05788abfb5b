import numpy as np
import pytest

from lfdkin import (CrossSectionSpec, DensityField, EvolutionError,
                    KernelConfig, PicardError, SolverConfig, advance,
                    assemble_frozen, build_kernel_table, build_phase_grid,
                    conserved_moments, make_initial_datum, parabolic_substep,
                    picard_fixed_point, regularize_initial_datum,
                    transport_step)
from lfdkin.driver import run_trajectory
from lfdkin.grids import BOX


@pytest.fixture(scope="module")
def hom24():
    grid = build_phase_grid(2, 6.0, 24)
    table = build_kernel_table(grid.velocity, CrossSectionSpec(gamma=-3.0),
                               KernelConfig(n=6))
    return grid, table


def heat_kernel_2d(amplitude, sigma2, v2, t, eps):
    """Closed-form solution of f_t = ε Δ f for a centered Gaussian."""
    s = sigma2 + 2.0 * eps * t
    return amplitude * sigma2 / s * np.exp(-v2 / (2.0 * s))


class TestTransport:
    def test_homogeneous_identity(self, hom24):
        grid, _ = hom24
        f = make_initial_datum(grid, "gaussian")
        out, rep = transport_step(f, 0.1)
        assert out.samples is f.samples
        assert rep.transport_leak == 0.0

    def test_exact_lattice_shift_is_index_roll(self):
        # dt chosen so v·dt/Δx is an integer for every velocity node
        grid = build_phase_grid(2, 2.0, 5, spatial_extent=4.0,
                                spatial_points=8)
        rng = np.random.default_rng(0)
        samples = rng.uniform(0, 1, grid.shape)
        f = DensityField(grid=grid, samples=samples)
        dx = grid.spatial.spacing              # 0.5
        dt = dx / grid.velocity.spacing        # v/h integers -> shifts too
        out, _ = transport_step(f, dt, interp="spectral")
        expected = np.empty_like(samples)
        v_axis = grid.velocity.axis
        for i, vx in enumerate(v_axis):
            for j, vy in enumerate(v_axis):
                kx = int(round(vx * dt / dx))
                ky = int(round(vy * dt / dx))
                expected[:, :, i, j] = np.roll(
                    np.roll(samples[:, :, i, j], kx, axis=0), ky, axis=1)
        assert np.array_equal(out.samples, expected)
        # pure permutation: the value multiset is bitwise identical
        assert np.array_equal(np.sort(out.samples, axis=None),
                              np.sort(samples, axis=None))

    def test_sinusoid_matches_analytic_solution(self):
        # spectral shift reproduces the analytic free-transport solution of
        # a band-limited datum to roundoff
        grid = build_phase_grid(2, 2.0, 6, spatial_extent=5.0,
                                spatial_points=16)
        xs = grid.spatial.coordinates()
        k = 2.0 * np.pi / grid.spatial.extent
        base = 0.25 * (1.0 + 0.5 * np.sin(k * xs[0]))
        g = np.exp(-grid.velocity.squared_radius())
        samples = base.reshape(base.shape + (1, 1)) * g
        f = DensityField(grid=grid, samples=samples)
        n_steps, dt = 40, 0.0173
        cur = f
        for _ in range(n_steps):
            cur, _ = transport_step(cur, dt, interp="spectral")
        t = n_steps * dt
        vx = grid.velocity.coordinates()[0]
        shifted = 0.25 * (1.0 + 0.5 * np.sin(
            k * (xs[0].reshape(base.shape + (1, 1)) - t * vx)))
        exact = shifted * g
        err = np.abs(cur.samples - exact).sum() * grid.quadrature_weight
        assert err < 1e-3   # spectral: roundoff-level in practice
        assert err < 1e-10

    def test_linear_mode_is_convex_and_conservative(self):
        grid = build_phase_grid(2, 2.0, 5, spatial_extent=4.0,
                                spatial_points=12)
        rng = np.random.default_rng(1)
        samples = rng.uniform(0, 1, grid.shape)
        f = DensityField(grid=grid, samples=samples)
        out, _ = transport_step(f, 0.0137, interp="linear")
        assert out.samples.min() >= 0.0 and out.samples.max() <= 1.0
        assert out.samples.sum() == pytest.approx(samples.sum(), rel=1e-13)

    def test_box_outflow_reports_leak(self):
        grid = build_phase_grid(2, 2.0, 5, spatial_extent=4.0,
                                spatial_points=12, topology=BOX)
        samples = np.ones(grid.shape) * 0.5
        f = DensityField(grid=grid, samples=samples)
        out, rep = transport_step(f, 0.3, interp="linear")
        assert rep.transport_leak > 0.0
        lost = (samples.sum() - out.samples.sum()) * grid.quadrature_weight
        assert rep.transport_leak == pytest.approx(lost, rel=1e-12)


class TestFrozenOperator:
    def test_zero_state_reduces_to_viscous_laplacian(self, hom24):
        grid, table = hom24
        f = DensityField(grid=grid, samples=np.zeros(grid.shape))
        eps = 0.07
        op = assemble_frozen(f, table, eps)
        rng = np.random.default_rng(2)
        vec = rng.standard_normal(grid.velocity.size)
        lap = op.stencil.laplacian
        assert np.allclose(op.matrices[0] @ vec, eps * (lap @ vec),
                           atol=1e-14)
        assert np.all(op.constants[0] == 0.0)

    def test_diffusion_annihilates_constants(self, hom24):
        # flux form: the pure second-order part maps constants to zero
        grid, table = hom24
        rng = np.random.default_rng(3)
        g = DensityField(grid=grid,
                         samples=rng.uniform(0.1, 0.4, grid.shape))
        op = assemble_frozen(g, table, epsilon=0.0)
        const_vec = np.ones(grid.velocity.size)
        action = op.matrices[0] @ const_vec
        # remaining action on constants is exactly the reaction diagonal
        react = (op.coeffs.div_b_bar * g.samples).ravel()
        assert np.allclose(action, react, atol=1e-13)

    def test_fixed_point_action_is_pair_flux(self, hom24):
        # L g + const = ε Δₕ g + divₕ W(g) by construction
        grid, table = hom24
        rng = np.random.default_rng(4)
        g = DensityField(grid=grid,
                         samples=rng.uniform(0.05, 0.6, grid.shape))
        eps = 0.03
        op = assemble_frozen(g, table, eps)
        from lfdkin.evolution import pairwise_collision_flux
        G = g.samples * (1 - g.samples)
        W = pairwise_collision_flux(g.samples, G, op.coeffs.a_bar, table,
                                    "fft")
        expected = (op.stencil.divergence_of_faces(W)
                    + eps * (op.stencil.laplacian
                             @ g.samples.ravel()).reshape(grid.shape))
        got = op.apply(g.samples)
        assert np.allclose(got, expected, atol=1e-12)

    def test_collision_moments_vanish_at_fixed_point(self, hom24):
        # Σ Op(g), Σ v Op(g), Σ |v|² (Op(g) - εΔg) all at machine zero
        grid, table = hom24
        v2 = grid.velocity.squared_radius()
        g = DensityField(grid=grid, samples=0.5 * np.exp(-v2))
        op = assemble_frozen(g, table, epsilon=0.0)
        action = op.apply(g.samples)
        w = grid.quadrature_weight
        assert abs(action.sum() * w) < 1e-12
        for vc in grid.velocity.coordinates():
            assert abs((action * vc).sum() * w) < 1e-12
        assert abs((action * v2).sum() * w) < 1e-11

    def test_pauli_violation_rejected(self, hom24):
        grid, table = hom24
        f = DensityField.__new__(DensityField)
        object.__setattr__(f, "grid", grid)
        object.__setattr__(f, "samples", np.full(grid.shape, -0.2))
        object.__setattr__(f, "time", 0.0)
        with pytest.raises(EvolutionError):
            assemble_frozen(f, table, 0.05)


class TestParabolicSubstep:
    def test_dt_zero_identity(self, hom24):
        grid, table = hom24
        f = make_initial_datum(grid, "gaussian")
        op = assemble_frozen(f, table, 0.05)
        out, _ = parabolic_substep(f, op, 0.0)
        assert np.array_equal(out.samples, f.samples)

    def test_heat_step_matches_closed_form(self):
        # g ≡ 0 leaves only εΔᵥ: one implicit step vs the heat kernel
        grid = build_phase_grid(2, 6.0, 48)
        table = build_kernel_table(grid.velocity,
                                   CrossSectionSpec(gamma=-3.0),
                                   KernelConfig(n=4))
        v2 = grid.velocity.squared_radius()
        eps, sigma2 = 0.5, 1.0
        f = DensityField(grid=grid,
                         samples=heat_kernel_2d(0.5, sigma2, v2, 0.0, eps))
        zero = DensityField(grid=grid, samples=np.zeros(grid.shape))
        op = assemble_frozen(zero, table, eps)
        errs = []
        for dt in (2e-3, 1e-3):
            out, _ = parabolic_substep(f, op, dt)
            exact = heat_kernel_2d(0.5, sigma2, v2, dt, eps)
            errs.append(np.abs(out.samples - exact).max())
        # one-step error ~ a·dt² + b·h²·dt, both shrink with dt
        assert errs[0] < 5e-5
        assert errs[1] <= 0.6 * errs[0]

    def test_constant_state_is_exact_fixed_point(self, hom24):
        # at f = g the action collapses to εΔ + divW; both vanish on
        # constants, so the conservative step leaves them untouched
        grid, table = hom24
        c = 0.3
        f = DensityField(grid=grid, samples=np.full(grid.shape, c))
        op = assemble_frozen(f, table, epsilon=0.0)
        out, rep = parabolic_substep(f, op, 1e-2)
        assert np.abs(out.samples - c).max() < 1e-13

    def test_reaction_diagonal_wiring(self, hom24):
        # the linear part carries +(∇·b̄)g on the diagonal: difference of
        # actions with and without the frozen state's reaction term
        grid, table = hom24
        rng = np.random.default_rng(5)
        g = DensityField(grid=grid,
                         samples=rng.uniform(0.1, 0.5, grid.shape))
        op = assemble_frozen(g, table, 0.0)
        react = (op.coeffs.div_b_bar * g.samples).ravel()
        vec = rng.standard_normal(grid.velocity.size)
        stripped = op.matrices[0] - __import__("scipy.sparse",
                                               fromlist=["diags"]).diags(react)
        # stripped operator annihilates constants (flux form + upwind)
        ones = np.ones(grid.velocity.size)
        assert np.abs(stripped @ ones).max() < 1e-13


class TestPicard:
    def test_equilibrium_one_iteration(self, hom24):
        grid, table = hom24
        f = make_initial_datum(grid, "fermi-dirac-equilibrium",
                               {"a": 1.0, "b": 1.0})
        cfg = SolverConfig(epsilon=0.0, dt=1e-3, t_end=1e-3, kernel_index=6)
        out, rep = picard_fixed_point(f, table, cfg)
        assert rep.picard_iters == 1
        assert np.abs(out.samples - f.samples).max() < 1e-12

    def test_contraction_and_monotone_residuals(self, hom24):
        grid, table = hom24
        f = regularize_initial_datum(make_initial_datum(grid, "gaussian"), 6)
        cfg = SolverConfig(epsilon=0.05, dt=1e-3, t_end=1e-3, kernel_index=6)
        _, rep = picard_fixed_point(f, table, cfg)
        assert all(r < 1.0 for r in rep.contraction_ratios)

    def test_halving_dt_reduces_iterations(self, hom24):
        grid, table = hom24
        f = regularize_initial_datum(make_initial_datum(grid, "gaussian"), 6)
        iters = []
        for dt in (4e-3, 2e-3, 1e-3):
            cfg = SolverConfig(epsilon=0.05, dt=dt, t_end=dt, kernel_index=6)
            _, rep = picard_fixed_point(f, table, cfg)
            iters.append(rep.picard_iters)
        assert iters[0] >= iters[1] >= iters[2]

    def test_cap_raises_with_history(self, hom24):
        grid, table = hom24
        f = regularize_initial_datum(make_initial_datum(grid, "gaussian"), 6)
        cfg = SolverConfig(epsilon=0.05, dt=1e-3, t_end=1e-3, kernel_index=6,
                           picard_tol=1e-10, picard_max_iters=1)
        with pytest.raises(PicardError) as exc:
            picard_fixed_point(f, table, cfg)
        assert len(exc.value.residuals) == 1

    def test_damped_iteration_converges(self, hom24):
        grid, table = hom24
        f = regularize_initial_datum(make_initial_datum(grid, "gaussian"), 6)
        cfg = SolverConfig(epsilon=0.05, dt=1e-3, t_end=1e-3, kernel_index=6,
                           theta=0.7, picard_max_iters=60)
        out, rep = picard_fixed_point(f, table, cfg)
        assert rep.picard_residual < 1e-10 * f.mass()


class TestAdvance:
    def test_homogeneous_equals_pure_collision(self, hom24):
        grid, table = hom24
        f = regularize_initial_datum(make_initial_datum(grid, "gaussian"), 6)
        cfg = SolverConfig(epsilon=0.05, dt=1e-3, t_end=1e-3, kernel_index=6)
        out1, _ = advance(f, table, cfg)
        out2, _ = picard_fixed_point(f, table, cfg)
        assert np.array_equal(out1.samples, out2.samples)
        assert out1.time == pytest.approx(1e-3)

    def test_mass_and_momentum_per_step(self, hom24):
        grid, table = hom24
        f = make_initial_datum(grid, "double-gaussian",
                               {"amplitude": 0.35, "alpha": 1.2, "shift": 1.0})
        f = regularize_initial_datum(f, 6)
        cfg = SolverConfig(epsilon=0.05, dt=1e-3, t_end=1e-3, kernel_index=6)
        m0 = conserved_moments(f)
        out, _ = advance(f, table, cfg)
        m1 = conserved_moments(out)
        assert abs(m1["mass"] - m0["mass"]) / m0["mass"] < 1e-10
        assert max(abs(a - b) for a, b in zip(m1["momentum"],
                                              m0["momentum"])) \
            < 1e-8 * m0["mass"]

    def test_strang_vs_lie_second_order_difference(self):
        grid = build_phase_grid(2, 4.0, 12, spatial_extent=6.0,
                                spatial_points=4)
        table = build_kernel_table(grid.velocity,
                                   CrossSectionSpec(gamma=-3.0),
                                   KernelConfig(n=4))
        f0 = make_initial_datum(grid, "gaussian",
                                {"amplitude": 0.4, "alpha": 1.0,
                                 "x_width": 1.2})
        f0 = regularize_initial_datum(f0, 4)
        diffs = []
        for dt in (8e-3, 4e-3, 2e-3):
            cfg_s = SolverConfig(epsilon=0.05, dt=dt, t_end=dt,
                                 kernel_index=4, splitting="strang")
            cfg_l = SolverConfig(epsilon=0.05, dt=dt, t_end=dt,
                                 kernel_index=4, splitting="lie")
            out_s, _ = advance(f0, table, cfg_s)
            out_l, _ = advance(f0, table, cfg_l)
            diffs.append(np.abs(out_s.samples - out_l.samples).sum()
                         * grid.quadrature_weight)
        slope = np.polyfit(np.log([8e-3, 4e-3, 2e-3]), np.log(diffs), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.35)


class TestTrajectory:
    def test_single_step_run(self, hom24):
        grid, table = hom24
        f = regularize_initial_datum(make_initial_datum(grid, "gaussian"), 6)
        cfg = SolverConfig(epsilon=0.05, dt=1e-3, t_end=1e-3, kernel_index=6)
        traj = run_trajectory(f, table, cfg)
        assert len(traj.records) == 2
        assert traj.final.time == pytest.approx(1e-3)

    def test_determinism(self, hom24):
        grid, table = hom24
        f = regularize_initial_datum(make_initial_datum(grid, "gaussian"), 6)
        cfg = SolverConfig(epsilon=0.05, dt=1e-3, t_end=5e-3, kernel_index=6)
        t1 = run_trajectory(f, table, cfg)
        t2 = run_trajectory(f, table, cfg)
        assert np.array_equal(t1.final.samples, t2.final.samples)
        for r1, r2 in zip(t1.records, t2.records):
            assert r1.csv_row() == r2.csv_row()

    def test_fd_equilibrium_stationary_short(self, hom24):
        grid, table = hom24
        f = make_initial_datum(grid, "fermi-dirac-equilibrium",
                               {"a": 1.0, "b": 1.0})
        cfg = SolverConfig(epsilon=0.0, dt=1e-3, t_end=0.02, kernel_index=6)
        traj = run_trajectory(f, table, cfg, dissipation_stride=10)
        drift = np.abs(traj.final.samples - f.samples).sum() / f.samples.sum()
        assert drift < 1e-12
