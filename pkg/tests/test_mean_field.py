import numpy as np
import pytest

from lfdkin import (CrossSectionSpec, DensityField, KernelConfig,
                    MeanFieldError, build_kernel_table, build_phase_grid,
                    coefficient_fields, ellipticity_probe)
from lfdkin.acceptance import coefficient_fields_loop_oracle
from lfdkin.mean_field import truncated_density


@pytest.fixture(scope="module")
def setup8():
    grid = build_phase_grid(2, 2.0, 8)
    table = build_kernel_table(grid.velocity, CrossSectionSpec(gamma=-3.0),
                               KernelConfig(n=4))
    return grid, table


class TestCoefficientFields:
    def test_zero_field(self, setup8):
        grid, table = setup8
        f = DensityField(grid=grid, samples=np.zeros(grid.shape))
        c = coefficient_fields(f, table)
        assert np.all(c.a_bar == 0.0) and np.all(c.b_bar == 0.0)
        assert np.all(c.div_a_bar == 0.0) and np.all(c.div_b_bar == 0.0)

    def test_single_node_concentration(self, setup8):
        # f = ½ at one node: ā(v) = ¼ h^N a(v - v₀), a single-term sum
        grid, table = setup8
        samples = np.zeros(grid.shape)
        i0 = (2, 5)
        samples[i0] = 0.5
        f = DensityField(grid=grid, samples=samples)
        c = coefficient_fields(f, table)
        h = grid.velocity.spacing
        m = grid.velocity.points_per_axis
        for v_idx in ((0, 0), (3, 3), (7, 2)):
            disp = tuple(a - b + m - 1 for a, b in zip(v_idx, i0))
            expected = 0.25 * h ** 2 * table.a[disp]
            assert np.allclose(c.a_bar[v_idx], expected, atol=1e-15)

    def test_radial_bump_zero_drift_at_origin(self):
        # odd-integrand cancellation: b̄(0) vanishes for radial f (direct
        # summation oracle value is exactly 0 by lattice antisymmetry)
        grid = build_phase_grid(2, 3.0, 13)
        table = build_kernel_table(grid.velocity,
                                   CrossSectionSpec(gamma=-3.0),
                                   KernelConfig(n=4))
        v2 = grid.velocity.squared_radius()
        f = DensityField(grid=grid, samples=0.4 * np.exp(-v2))
        c = coefficient_fields(f, table)
        center = (6, 6)
        assert np.abs(c.b_bar[center]).max() < 1e-14

    def test_matches_double_loop_oracle(self, setup8):
        grid, table = setup8
        rng = np.random.default_rng(42)
        f = DensityField(grid=grid, samples=rng.uniform(0.05, 0.95,
                                                        grid.shape))
        c = coefficient_fields(f, table, method="direct")
        a_o, b_o, diva_o = coefficient_fields_loop_oracle(f, table)
        assert np.abs(c.a_bar - a_o).max() < 1e-12
        assert np.abs(c.b_bar - b_o).max() < 1e-12
        assert np.abs(c.div_a_bar - diva_o).max() < 1e-12

    def test_fft_matches_direct(self, setup8):
        grid, table = setup8
        rng = np.random.default_rng(43)
        f = DensityField(grid=grid, samples=rng.uniform(0.0, 1.0, grid.shape))
        cd = coefficient_fields(f, table, method="direct")
        cf = coefficient_fields(f, table, method="fft")
        assert np.abs(cd.a_bar - cf.a_bar).max() < 1e-12

    def test_a_bar_psd_and_monotone(self, setup8):
        grid, table = setup8
        rng = np.random.default_rng(44)
        base = rng.uniform(0.0, 0.45, grid.shape)
        f1 = DensityField(grid=grid, samples=base)
        f2 = DensityField(grid=grid, samples=base + 0.05)
        c1 = coefficient_fields(f1, table)
        c2 = coefficient_fields(f2, table)
        eig1 = np.linalg.eigvalsh(c1.a_bar)
        assert eig1.min() >= -1e-12
        # on [0, 1/2] the weight f(1-f) grows pointwise with f, so ā grows
        # in the PSD order
        diff_eigs = np.linalg.eigvalsh(c2.a_bar - c1.a_bar)
        assert diff_eigs.min() >= -1e-12

    def test_linearity_in_table(self, setup8):
        grid, table = setup8
        rng = np.random.default_rng(45)
        f = DensityField(grid=grid, samples=rng.uniform(0, 1, grid.shape))
        import dataclasses
        doubled = dataclasses.replace(table, a=2.0 * table.a,
                                      div=2.0 * table.div)
        c1 = coefficient_fields(f, table)
        c2 = coefficient_fields(f, doubled)
        assert np.allclose(c2.a_bar, 2.0 * c1.a_bar, rtol=1e-13)
        assert np.allclose(c2.b_bar, 2.0 * c1.b_bar, rtol=1e-13)

    def test_pauli_violation_rejected(self, setup8):
        grid, table = setup8
        bad = np.full(grid.shape, 1.5)
        with pytest.raises(MeanFieldError):
            coefficient_fields(DensityField(grid=grid, samples=bad), table)

    def test_grid_mismatch_rejected(self, setup8):
        _, table = setup8
        other = build_phase_grid(2, 2.0, 10)
        f = DensityField(grid=other, samples=np.zeros(other.shape))
        with pytest.raises(MeanFieldError):
            coefficient_fields(f, table)

    def test_inhomogeneous_per_x_independence(self):
        grid = build_phase_grid(2, 2.0, 6, spatial_extent=4.0,
                                spatial_points=2)
        table = build_kernel_table(grid.velocity,
                                   CrossSectionSpec(gamma=-3.0),
                                   KernelConfig(n=4))
        rng = np.random.default_rng(46)
        samples = rng.uniform(0, 1, grid.shape)
        f = DensityField(grid=grid, samples=samples)
        c = coefficient_fields(f, table)
        vgrid = build_phase_grid(2, 2.0, 6)
        for ix in np.ndindex(2, 2):
            sub = DensityField(grid=vgrid, samples=samples[ix])
            c_sub = coefficient_fields(sub, table)
            assert np.allclose(c.a_bar[ix], c_sub.a_bar, atol=1e-14)
            assert np.allclose(c.div_b_bar[ix], c_sub.div_b_bar, atol=1e-14)


def montecarlo_half_ball_oracle(mu, n=400000, seed=9):
    """MC estimate of ∫ 1_{V(0,μ,η)}(v*) (1/4) 1_{|v*|≤1} dv* for η = e₁.

    At v = 0 the membership reads (-v*)·η/|v*| ≤ μ together with the
    radius cap; the oracle integrates the indicator over the unit ball.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, size=(n, 2))
    r = np.linalg.norm(pts, axis=1)
    inside = r <= 1.0
    cos = np.where(r > 0, -pts[:, 0] / np.where(r > 0, r, 1.0), 0.0)
    member = inside & (cos <= mu)
    # |v*| ≤ (1-μ)^{-1} ≥ 1 never binds inside the unit ball
    return 4.0 * member.mean() * 0.25


class TestEllipticityProbe:
    def test_zero_field_empty_mask(self, setup8):
        grid, table = setup8
        f = DensityField(grid=grid, samples=np.zeros(grid.shape))
        c = coefficient_fields(f, table)
        probe = ellipticity_probe(f, c, alpha=0.01)
        assert probe.k_alpha_empty
        assert np.all(probe.rho == 0.0)

    def test_half_ball_indicator_against_mc_oracle(self):
        # G = ¼ · indicator of the unit ball, v = 0: ρ_μ matches the
        # Monte-Carlo membership oracle
        grid = build_phase_grid(2, 2.0, 161)
        v2 = grid.velocity.squared_radius()
        samples = np.where(v2 <= 1.0, 0.25, 0.0)
        G = DensityField(grid=grid, samples=samples)
        for mu in (0.0, 0.5):
            val = truncated_density(G, np.zeros(2), np.array([1.0, 0.0]), mu)
            oracle = montecarlo_half_ball_oracle(mu)
            # sharp indicator on the lattice: O(h) edge error dominates
            assert val == pytest.approx(oracle, rel=0.02)
        # μ = 0: the angular cut keeps exactly the half-space side of the
        # ball, value ¼·|B₁|/2 = ¼·π/2
        val0 = truncated_density(G, np.zeros(2), np.array([1.0, 0.0]), 0.0)
        assert val0 == pytest.approx(0.25 * np.pi / 2.0, rel=0.02)

    def test_rho_mu_monotone_in_mu(self, setup8):
        grid, table = setup8
        rng = np.random.default_rng(47)
        f = DensityField(grid=grid, samples=rng.uniform(0, 0.9, grid.shape))
        G = DensityField(grid=grid,
                         samples=f.samples * (1.0 - f.samples))
        v = np.array([0.3, -0.2])
        eta = np.array([1.0, 0.0])
        vals = [float(truncated_density(G, v, eta, mu))
                for mu in (0.5, 0.9, 0.99)]
        assert vals[0] <= vals[1] <= vals[2]
        rho = float(G.samples.sum() * grid.velocity.cell_volume)
        assert all(v <= rho + 1e-14 for v in vals)

    def test_lower_bound_inequality_discrete(self, setup8):
        # η·ā(v)η dominates the identity-floor-weighted truncated sum
        grid, table = setup8
        rng = np.random.default_rng(48)
        f = DensityField(grid=grid, samples=rng.uniform(0.1, 0.9, grid.shape))
        c = coefficient_fields(f, table)
        spec, kcfg = table.spec, table.config
        R = 1.0
        R_star = 1.0
        k_floor = spec.ellipticity_floor(2 * (R + R_star))
        psi_min = kcfg.cutoff_min_on_ball(R + R_star)
        coords = grid.velocity.coordinates()
        v2 = grid.velocity.squared_radius()
        axis = grid.velocity.axis
        G = f.samples * (1.0 - f.samples)
        h = grid.velocity.spacing
        for _ in range(30):
            v = rng.uniform(-R / np.sqrt(2), R / np.sqrt(2), 2)
            eta = rng.standard_normal(2)
            eta /= np.linalg.norm(eta)
            idx = tuple(int(np.argmin(np.abs(axis - v[d]))) for d in range(2))
            v_node = np.array([axis[idx[0]], axis[idx[1]]])
            quad_form = float(eta @ c.a_bar[idx] @ eta)
            z = [v_node[d] - coords[d] for d in range(2)]
            z2 = z[0] ** 2 + z[1] ** 2
            with np.errstate(invalid="ignore", divide="ignore"):
                cos2 = np.where(z2 > 0,
                                (z[0] * eta[0] + z[1] * eta[1]) ** 2
                                / np.where(z2 > 0, z2, 1.0), 1.0)
            s_z = z2 / (z2 + 1.0 / kcfg.n)
            integrand = k_floor * psi_min * s_z * (1.0 - cos2)
            bound = float((integrand * G * (v2 <= R_star ** 2)).sum()
                          * h ** 2)
            assert quad_form >= bound - 1e-12

    def test_summary_fields(self, setup8):
        grid, table = setup8
        rng = np.random.default_rng(49)
        f = DensityField(grid=grid, samples=rng.uniform(0.2, 0.8, grid.shape))
        c = coefficient_fields(f, table)
        probe = ellipticity_probe(f, c, alpha=1e-4, n_samples=64)
        s = probe.summary()
        assert set(s) == {"alpha", "mu", "rho_quantiles", "nu_estimate",
                          "k_alpha_fraction", "k_alpha_empty"}
        assert not s["k_alpha_empty"]
        assert s["nu_estimate"] > 0.0
