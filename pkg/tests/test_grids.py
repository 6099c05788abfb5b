import numpy as np
import pytest
from scipy.integrate import quad

from lfdkin import (GridError, build_phase_grid, integrate,
                    integrate_velocity)
from lfdkin.grids import SpatialGrid, VelocityGrid


def gaussian_integral_oracle(v_max, alpha=1.0):
    """Adaptive 1-D quadrature composed by tensor product: ∫ e^{-α|v|²} dv
    over [-v_max, v_max]²."""
    one_d, _ = quad(lambda t: np.exp(-alpha * t * t), -v_max, v_max,
                    epsabs=1e-14, epsrel=1e-14)
    return one_d ** 2


class TestConstruction:
    def test_spacing_arithmetic(self):
        g = build_phase_grid(2, 6.0, 49)
        assert g.velocity.spacing == pytest.approx(0.25, abs=0)
        # spacing * (M-1) = 2 * half_width exactly
        assert g.velocity.spacing * 48 == 12.0

    def test_rejects_small_m(self):
        # the M >= 4 precondition also rules out the 3-node lattice
        with pytest.raises(GridError):
            build_phase_grid(2, 1.0, 3)

    def test_rejects_bad_dim_and_extent(self):
        with pytest.raises(GridError):
            build_phase_grid(4, 6.0, 8)
        with pytest.raises(GridError):
            build_phase_grid(2, -1.0, 8)
        with pytest.raises(GridError):
            SpatialGrid(dim=2, extent=0.0, points_per_axis=4)

    def test_nodes_closed_under_negation(self):
        g = VelocityGrid(dim=2, half_width=3.0, points_per_axis=7)
        axis = g.axis
        assert np.allclose(np.sort(-axis), axis)
        # exact symmetry node by node
        assert np.all(axis + axis[::-1] == 0.0)

    def test_periodic_no_duplicate_endpoint(self):
        s = SpatialGrid(dim=2, extent=10.0, points_per_axis=16)
        assert s.axis[0] == 0.0
        assert s.axis[-1] < s.extent

    def test_homogeneous_marker(self):
        g = build_phase_grid(2, 6.0, 8)
        assert g.homogeneous
        assert g.shape == (8, 8)
        g2 = build_phase_grid(2, 6.0, 8, spatial_extent=5.0, spatial_points=4)
        assert not g2.homogeneous
        assert g2.shape == (4, 4, 8, 8)


class TestIntegrate:
    def test_constant_field(self):
        # 9 nodes * h^2 with h = 1 on the 3x3 sub-check is ruled out by
        # M >= 4; use M = 4, h = 2/3: 16 * (2/3)^2
        g = build_phase_grid(2, 1.0, 4)
        val = integrate(g, np.ones(g.shape))
        assert val == pytest.approx(16 * (2.0 / 3.0) ** 2, rel=1e-14)

    def test_zero_field(self):
        g = build_phase_grid(2, 1.0, 5)
        assert integrate(g, np.zeros(g.shape)) == 0.0

    def test_gaussian_matches_adaptive_quadrature(self):
        g = build_phase_grid(2, 6.0, 64)
        v2 = g.velocity.squared_radius()
        val = integrate(g, np.exp(-v2))
        oracle = gaussian_integral_oracle(6.0)
        assert oracle == pytest.approx(np.pi, abs=1e-12)
        assert val == pytest.approx(oracle, abs=1e-6)

    def test_shape_mismatch(self):
        g = build_phase_grid(2, 1.0, 5)
        with pytest.raises(GridError):
            integrate(g, np.ones((4, 4)))

    def test_linearity(self):
        g = build_phase_grid(2, 2.0, 6)
        rng = np.random.default_rng(0)
        a = rng.standard_normal(g.shape)
        b = rng.standard_normal(g.shape)
        for lam in (0.0, 1.0, -2.5, 0.3):
            lhs = integrate(g, a + lam * b)
            rhs = integrate(g, a) + lam * integrate(g, b)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    def test_reflection_invariance(self):
        g = build_phase_grid(2, 2.0, 9)
        rng = np.random.default_rng(1)
        field = rng.random(g.shape)
        flipped = field[::-1, ::-1]
        assert integrate(g, field) == pytest.approx(integrate(g, flipped),
                                                    rel=1e-14)

    def test_refinement_rate(self):
        # smooth compactly decaying field: error drops at least at the
        # trapezoidal rate when M doubles
        oracle = gaussian_integral_oracle(6.0)
        floor = 1e-13   # superalgebraic convergence reaches roundoff fast
        errs = []
        for m in (12, 16, 24):
            g = build_phase_grid(2, 6.0, m)
            v2 = g.velocity.squared_radius()
            errs.append(abs(integrate(g, np.exp(-v2)) - oracle))
        assert errs[1] <= max(errs[0] / 4.0, floor)
        assert errs[2] <= max(errs[1] / 4.0, floor)

    def test_integrate_velocity_inhomogeneous(self):
        g = build_phase_grid(2, 2.0, 5, spatial_extent=4.0, spatial_points=3)
        field = np.ones(g.shape)
        per_x = integrate_velocity(g, field)
        assert per_x.shape == (3, 3)
        assert per_x[0, 0] == pytest.approx(25 * g.velocity.cell_volume)
