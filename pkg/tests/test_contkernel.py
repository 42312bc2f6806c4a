from math import erf, sqrt

import numpy as np
import pytest

from mcmclab import contkernel as ck
from mcmclab import lyapunov as ly
from mcmclab import markov_core as mc
from mcmclab.errors import (
    NotContracting,
    ParameterOutOfRange,
    SeriesDiverges,
    TailMassTooLarge,
    ValidationError,
)
from mcmclab.rng import RngStream


def std_normal_kernel():
    return ck.iid_kernel(lambda y: np.exp(-0.5 * y ** 2) / sqrt(2 * np.pi),
                         lambda x, g: g.normal(size=np.shape(x)))


@pytest.fixture(scope="module")
def ar1():
    model = ck.Ar1Model(0.5, 1.0)
    return model, ck.ar1_grid(model)


class TestDiscretize:
    def test_iid_rows_identical(self):
        grid = ck.discretize(std_normal_kernel(), 8.0, 129)
        P = grid.matrix.entries
        assert np.max(np.abs(P - P[0])) <= 1e-15

    def test_ar1_row_sums(self):
        grid = ck.discretize(ck.Ar1Model(0.5, 1.0).kernel(), 8.0, 257)
        assert np.max(grid.defects[grid.core()]) <= 1e-8

    def test_coarse_grid_worse(self):
        kernel = ck.Ar1Model(0.5, 1.0).kernel()
        coarse = ck.discretize(kernel, 8.0, 16, tail_tol=1.0)
        fine = ck.discretize(kernel, 8.0, 257)
        assert np.max(coarse.defects[coarse.core()]) > np.max(fine.defects[fine.core()])

    def test_tail_too_large(self):
        with pytest.raises(TailMassTooLarge) as err:
            ck.discretize(ck.gaussian_walk(3.0), 4.0, 65)
        assert err.value.defect > 1e-6

    def test_rows_are_laws(self, ar1):
        _, grid = ar1
        P = grid.matrix.entries
        assert np.all(P >= 0) and np.allclose(P.sum(axis=1), 1.0, atol=1e-15)

    def test_parameters(self):
        with pytest.raises(ParameterOutOfRange):
            ck.discretize(std_normal_kernel(), 8.0, 8)
        with pytest.raises(ParameterOutOfRange):
            ck.discretize(std_normal_kernel(), -1.0, 64)


class TestNstep:
    def test_one_step_is_row(self, ar1):
        _, grid = ar1
        x = 300
        assert np.allclose(ck.nstep_density(grid, x, 1) * grid.weights, grid.matrix.entries[x])

    def test_gaussian_law(self, ar1):
        model, grid = ar1
        x = int(np.argmin(np.abs(grid.nodes - 1.0)))
        law = ck.ar1_nstep_law(model, grid.nodes[x], 5)
        assert law.mean == pytest.approx(0.5 ** 5 * grid.nodes[x])
        assert law.variance == pytest.approx((1 - 0.25 ** 5) / 0.75)
        dens = ck.nstep_density(grid, x, 5)
        assert np.max(np.abs(dens - law.pdf(grid.nodes))) <= 1e-4

    def test_iid_constant(self):
        grid = ck.discretize(std_normal_kernel(), 8.0, 129)
        a = ck.nstep_density(grid, 10, 1)
        assert np.allclose(ck.nstep_density(grid, 10, 4), a, atol=1e-14)

    def test_mass(self, ar1):
        _, grid = ar1
        for n in (1, 8, 64):
            assert abs(ck.grid_integral(grid, ck.nstep_density(grid, 256, n)) - 1) <= 1e-6


class TestKilled:
    def test_everything_killed(self, ar1):
        _, grid = ar1
        K = ck.killed_kernel_powers(grid, np.arange(grid.M), 1)[0]
        assert np.all(K == 0)

    def test_monotone(self, ar1):
        _, grid = ar1
        B = (-0.5, 0.5)
        powers = ck.killed_kernel_powers(grid, B, 30)
        sums = np.array([K.sum(axis=1) for K in powers])
        assert np.all((sums >= 0) & (sums <= 1 + 1e-12))
        assert np.all(np.diff(sums, axis=0) <= 1e-15)

    def test_survival_decays(self, ar1):
        model, grid = ar1
        x = int(np.argmin(np.abs(grid.nodes - 2.0)))
        surv = ck.survival(grid, (-0.5, 0.5), x, 200)
        assert surv[-1] <= 0.01
        taus = ck.simulate_hitting_times(model.kernel(), 2.0, (-0.5, 0.5), 10 ** 5, cap=400,
                                         rng=RngStream(1))
        for n in (1, 3, 10):
            p = np.mean(taus > n)
            se = sqrt(max(p * (1 - p), 1e-4) / taus.size)
            assert abs(surv[n - 1] - p) <= 4 * se + 5e-3

    def test_potential_single_term(self, ar1):
        _, grid = ar1
        g = ck.potential_kernel(grid, np.arange(grid.M))
        assert np.all(g == 0)

    def test_mean_hitting_time(self, ar1):
        model, grid = ar1
        x = int(np.argmin(np.abs(grid.nodes - 2.0)))
        h = ck.mean_hitting_time_grid(grid, (-0.5, 0.5))
        taus = ck.simulate_hitting_times(model.kernel(), 2.0, (-0.5, 0.5), 10 ** 5, rng=RngStream(2))
        se = taus.std(ddof=1) / sqrt(taus.size)
        # Grid nodes and the target interval differ by half a mesh; allow that bias too.
        assert abs(h[x] - taus.mean()) <= 4 * se + 0.02 * h[x]

    def test_series_diverges(self):
        P = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
        grid = ck.GridChain(np.array([-1.0, 0.0, 1.0]), np.ones(3), mc.validate(P), np.zeros(3), 1.0)
        with pytest.raises(SeriesDiverges):
            ck.potential_kernel(grid, [2])

    def test_nummelin(self, ar1):
        _, grid = ar1
        f = ((grid.nodes >= 0.5) & (grid.nodes <= 1.5)).astype(float)
        lhs, rhs = ck.nummelin_check(grid, (-0.5, 0.5), f)
        assert abs(lhs - rhs) <= 1e-3


class TestAr1:
    def test_drift_constants(self):
        d = ck.ar1_drift(ck.Ar1Model(0.5, 1.0))
        assert (d.c, d.d) == (0.75, 1.0)
        d0 = ck.ar1_drift(ck.Ar1Model(0.0, 2.0))
        assert (d0.c, d0.d) == (1.0, 4.0)

    def test_drift_small_noise(self):
        model = ck.Ar1Model(0.9, 0.1)
        d = ck.ar1_drift(model)
        assert d.c == pytest.approx(0.19) and d.d == pytest.approx(0.01)
        assert ck.ar1_generator_error(model, ck.ar1_grid(model)) <= 1e-5

    def test_generator_error(self, ar1):
        model, grid = ar1
        assert ck.ar1_generator_error(model, grid) <= 1e-5

    def test_not_contracting(self):
        with pytest.raises(NotContracting):
            ck.ar1_drift(ck.Ar1Model(1.0, 1.0))
        with pytest.raises(NotContracting):
            ck.ar1_invariant(ck.Ar1Model(-1.2, 1.0))

    def test_minorization_iid(self):
        m = ck.ar1_minorization(ck.Ar1Model(0.0, 1.0), 4.0)
        assert m.alpha == pytest.approx(erf(2 / sqrt(2)), abs=1e-10)
        assert m.alpha == pytest.approx(m.alpha_closed_form, abs=1e-12)

    def test_minorization_grid(self):
        m = ck.ar1_minorization(ck.Ar1Model(0.5, 1.0), 16 / 3)
        assert 0 < m.alpha < 1
        assert m.verify_on_grid(513) <= 1e-12

    def test_minorization_level(self):
        with pytest.raises(ParameterOutOfRange):
            ck.ar1_minorization(ck.Ar1Model(0.5, 1.0), 2.0 / 0.75)

    def test_invariant(self):
        assert ck.ar1_invariant(ck.Ar1Model(0.5, 1.0)).variance == pytest.approx(4 / 3)
        assert ck.ar1_invariant(ck.Ar1Model(0.0, 1.5)).variance == pytest.approx(2.25)
        model = ck.Ar1Model(0.9, 1.0)
        assert ck.ar1_invariant(model).variance == pytest.approx(100 / 19)
        path = ck.ar1_simulate(model, 10 ** 6, rng=RngStream(3))
        assert path.var() == pytest.approx(100 / 19, rel=0.02)

    def test_grid_invariant(self, ar1):
        model, grid = ar1
        dens = ck.grid_invariant_density(grid)
        assert np.max(np.abs(dens - ck.ar1_invariant(model).pdf(grid.nodes))) <= 1e-3

    def test_simulate_reproducible(self):
        model = ck.Ar1Model(0.5, 1.0)
        a = ck.ar1_simulate(model, 1000, 2.0, RngStream(4))
        b = ck.ar1_simulate(model, 1000, 2.0, RngStream(4))
        assert np.array_equal(a, b)

    def test_rates_improve_as_a_shrinks(self):
        gaps = []
        for a in (0.0, 0.25, 0.5, 0.75, 0.9):
            m = ck.Ar1Model(a, 1.0)
            cert = ly.hairer_mattingly_constants(ck.ar1_drift(m), ck.ar1_minorization(m))
            assert cert.gamma_bar < 1
            gaps.append(1 - cert.gamma_bar)
        assert all(x > y for x, y in zip(gaps, gaps[1:]))


class TestHarris:
    def test_fast_return(self):
        rep = ck.harris_diagnostics(ck.Ar1Model(0.5, 1.0).kernel(), 3.0, (-1, 1), 10 ** 4, 10 ** 4,
                                    RngStream(5))
        assert rep.hit_fraction >= 0.999

    def test_random_walk_censoring(self):
        kernel = ck.gaussian_walk(1.0)
        short = ck.harris_diagnostics(kernel, 30.0, (-1, 1), 100, 2000, RngStream(6))
        long = ck.harris_diagnostics(kernel, 30.0, (-1, 1), 2000, 2000, RngStream(6))
        assert short.censored and long.censored
        assert long.mean_hitting_estimate > short.mean_hitting_estimate

    def test_immediate_hit(self):
        rep = ck.harris_diagnostics(ck.noisy_map("logistic", 3.7, 0.01), 0.3, (-100, 100), 50, 500,
                                    RngStream(7))
        assert rep.hit_fraction == 1.0 and rep.mean_hitting_estimate == 1.0

    def test_cap(self):
        with pytest.raises(ParameterOutOfRange):
            ck.harris_diagnostics(ck.gaussian_walk(), 0.0, (-1, 1), 0, 10)


class TestParse:
    def test_presets(self):
        assert ck.parse_kernel("ar1:a=0.3,sigma=2").params == {"a": 0.3, "sigma": 2.0}
        assert ck.parse_kernel("gaussian-walk:sigma=0.5").name == "gaussian-walk"
        assert ck.parse_kernel("noisy-map:tent,sigma=0.2").params["map"] == "tent"

    def test_errors(self):
        with pytest.raises(ValidationError):
            ck.parse_kernel("brownian")
        with pytest.raises(ValidationError):
            ck.parse_kernel("ar1:a=half")

    def test_sampler_matches_density(self):
        kernel = ck.parse_kernel("noisy-map:logistic,r=3.7,sigma=0.1")
        g = np.random.default_rng(8)
        y = kernel.sampler(np.full(200000, 0.4), g)
        grid = np.linspace(0.6, 1.3, 8)
        dens = kernel.density(np.full_like(grid, 0.4), grid)
        hist, edges = np.histogram(y, bins=400, range=(0.0, 1.5), density=True)
        centers = (edges[:-1] + edges[1:]) / 2
        assert np.max(np.abs(np.interp(grid, centers, hist) - dens)) <= 0.2
