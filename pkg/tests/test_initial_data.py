import numpy as np
import pytest

from lfdkin import (DensityField, EnvelopeSpec, FieldError, build_phase_grid,
                    envelope_check, fit_envelope, integrate,
                    make_initial_datum, regularize_initial_datum)
from lfdkin.fields import phase_radius_squared
from lfdkin.initial_data import count_excluded_nodes


@pytest.fixture(scope="module")
def grid():
    return build_phase_grid(2, 6.0, 32)


class TestRegularization:
    def test_zero_datum_floor(self, grid):
        f0 = DensityField(grid=grid, samples=np.zeros(grid.shape))
        for n in (1, 4, 16):
            fn = regularize_initial_datum(f0, n)
            center = (16, 16)   # node nearest v = 0 on the even lattice
            r2 = phase_radius_squared(grid)[center]
            assert fn.samples[center] == pytest.approx(
                np.exp(-r2) / (n + 2), rel=1e-12)

    def test_saturated_datum_strictly_below_one(self, grid):
        f0 = DensityField(grid=grid, samples=np.ones(grid.shape))
        fn = regularize_initial_datum(f0, 1)
        r2 = phase_radius_squared(grid)
        # denominator 1 + 2/n = 3 pins f¹ ≤ (e^{-r²} + 1)/3 < 1
        assert np.all(fn.samples <= (np.exp(-r2) + 1.0) / 3.0 + 1e-15)
        assert fn.pauli_max < 1.0

    def test_strictly_interior_for_all_n(self, grid):
        rng = np.random.default_rng(0)
        f0 = DensityField(grid=grid,
                          samples=rng.uniform(0.0, 1.0, grid.shape))
        for n in (1, 3, 8, 32):
            fn = regularize_initial_datum(f0, n)
            assert fn.pauli_min > 0.0
            assert fn.pauli_max < 1.0
            # explicit Gaussian floor
            floor = np.exp(-phase_radius_squared(grid)) / (n + 2)
            assert np.all(fn.samples >= floor - 1e-17)

    def test_monotone_in_datum(self, grid):
        rng = np.random.default_rng(1)
        a = rng.uniform(0.0, 0.5, grid.shape)
        b = a + rng.uniform(0.0, 0.4, grid.shape)
        fa = regularize_initial_datum(DensityField(grid=grid, samples=a), 6)
        fb = regularize_initial_datum(DensityField(grid=grid, samples=b), 6)
        assert np.all(fb.samples >= fa.samples - 1e-15)

    def test_weighted_l1_convergence_along_ladder(self, grid):
        # ∬|f₀ⁿ - f₀|(1 + |v|²) halves (or better) along n = 4, 8, 16, 32
        v2 = grid.velocity.squared_radius()
        f0 = DensityField(grid=grid, samples=0.5 * np.exp(-v2))
        weight = 1.0 + v2
        dists = []
        for n in (4, 8, 16, 32):
            fn = regularize_initial_datum(f0, n)
            dists.append(integrate(grid, np.abs(fn.samples - f0.samples),
                                   weight))
        for k in range(3):
            assert dists[k + 1] <= 0.5 * dists[k] + 1e-15

    def test_upper_envelope_with_measured_constant(self, grid):
        v2 = grid.velocity.squared_radius()
        f0 = DensityField(grid=grid, samples=0.5 * np.exp(-v2))
        n = 8
        fn = regularize_initial_datum(f0, n)
        r2 = phase_radius_squared(grid)
        # C_n: measured envelope constant of the mollified, cut-off datum
        c_n = float(np.max(f0.samples * np.exp(r2)))
        ratio = fn.samples / (1.0 - fn.samples)
        assert np.all(ratio <= (n * c_n + 1.0) * np.exp(-r2) * (1 + 1e-12))

    def test_rejects_invalid_datum(self, grid):
        # bypass the dataclass constructor to smuggle in an out-of-range field
        f = DensityField.__new__(DensityField)
        object.__setattr__(f, "grid", grid)
        object.__setattr__(f, "samples", np.full(grid.shape, 1.5))
        object.__setattr__(f, "time", 0.0)
        with pytest.raises(FieldError):
            regularize_initial_datum(f, 4)

    def test_rejects_bad_index(self, grid):
        f0 = DensityField(grid=grid, samples=np.zeros(grid.shape))
        with pytest.raises(FieldError):
            regularize_initial_datum(f0, 0)


class TestEnvelope:
    def test_lower_envelope_itself_passes(self, grid):
        env = EnvelopeSpec(alpha=1.0, c_lower=0.2, c_upper=0.9)
        r2 = phase_radius_squared(grid)
        f = DensityField(grid=grid, samples=env.lower(r2))
        rep = envelope_check(f, env)
        assert rep["lower_violations"] == 0

    def test_saturated_field_breaks_upper(self, grid):
        env = EnvelopeSpec(alpha=1.0, c_lower=0.2, c_upper=0.9)
        f = DensityField(grid=grid, samples=np.ones(grid.shape))
        rep = envelope_check(f, env)
        assert rep["upper_violations"] == int(np.prod(grid.shape))

    def test_fit_round_trip(self, grid):
        # synthetic data 0.3 e^{-2 r²}: recover α ≈ 2 and C₁ ≈ 0.3
        r2 = phase_radius_squared(grid)
        f = DensityField(grid=grid, samples=0.3 * np.exp(-2.0 * r2))
        env = fit_envelope(f)
        assert env.alpha == pytest.approx(2.0, rel=0.01)
        assert env.c_lower == pytest.approx(0.3, rel=0.01)
        rep = envelope_check(f, env)
        assert rep["lower_violations"] == 0
        assert rep["upper_violations"] == 0

    def test_fitted_spec_passes_on_own_input(self, grid):
        rng = np.random.default_rng(2)
        r2 = phase_radius_squared(grid)
        noise = rng.uniform(0.8, 1.2, grid.shape)
        f = DensityField(grid=grid,
                         samples=np.clip(0.4 * np.exp(-1.3 * r2) * noise,
                                         1e-300, 1 - 1e-9))
        env = fit_envelope(f)
        rep = envelope_check(f, env)
        assert rep["lower_violations"] == 0
        assert rep["upper_violations"] == 0

    def test_degenerate_constant_field_flagged(self, grid):
        f = DensityField(grid=grid, samples=np.full(grid.shape, 0.5))
        with pytest.raises(FieldError):
            fit_envelope(f)

    def test_boundary_nodes_excluded(self, grid):
        samples = np.full(grid.shape, 0.0)
        samples[2:30, 2:30] = 0.3 * np.exp(
            -phase_radius_squared(grid)[2:30, 2:30])
        f = DensityField(grid=grid, samples=samples)
        assert count_excluded_nodes(f) == int(np.prod(grid.shape)) - 28 * 28
        env = fit_envelope(f)   # must not raise despite zero nodes
        assert env.alpha > 0

    def test_consistency_report(self, grid):
        env = EnvelopeSpec(alpha=1.0, c_lower=0.05, c_upper=2.0)
        r2 = phase_radius_squared(grid)
        rep = env.consistency_report(r2)
        assert rep["ordered_fraction"] == 1.0
        assert rep["upper_below_one"]


class TestAnalyticFamilies:
    @pytest.mark.parametrize("family", ["gaussian", "double-gaussian",
                                        "fermi-dirac-equilibrium", "plateau"])
    def test_families_respect_pauli(self, grid, family):
        f = make_initial_datum(grid, family)
        assert 0.0 <= f.pauli_min and f.pauli_max <= 1.0

    def test_unknown_family(self, grid):
        with pytest.raises(FieldError):
            make_initial_datum(grid, "maxwellian")

    def test_fermi_dirac_values(self, grid):
        f = make_initial_datum(grid, "fermi-dirac-equilibrium",
                               {"a": 1.0, "b": 1.0})
        v2 = grid.velocity.squared_radius()
        assert np.allclose(f.samples, 1.0 / (1.0 + np.exp(1.0 + v2)))
