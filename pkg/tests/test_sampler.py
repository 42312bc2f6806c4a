from math import exp, log, pi as PI

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcmclab import markov_core as mc
from mcmclab import models as md
from mcmclab import sampler as sa
from mcmclab.errors import ParameterOutOfRange, ValidationError
from mcmclab.rng import RngStream

TWO = np.array([[1 / 3, 2 / 3], [2 / 3, 1 / 3]])


class TestMetropolisMatrix:
    def test_beta_zero(self):
        H = np.array([0.0, 3.0, -1.0])
        nb = [(0, 1), (1, 0), (1, 2), (2, 1)]
        P = sa.metropolis_matrix(H, nb, 0.0, sa.AcceptanceRule("metropolis", 0.25)).entries
        assert P[0, 1] == P[1, 0] == P[1, 2] == P[2, 1] == 0.25
        assert P[0, 2] == 0.0

    def test_two_state_by_hand(self):
        rule = sa.AcceptanceRule("metropolis", 0.5)
        P = sa.metropolis_matrix([0.0, 1.0], [(0, 1), (1, 0)], 1.0, rule).entries
        assert P[0, 1] == pytest.approx(0.5 * exp(-1))
        assert P[1, 0] == pytest.approx(0.5)
        assert P[0, 1] * 1.0 == pytest.approx(exp(-1) * P[1, 0])

    def test_diagonal_negative(self):
        with pytest.raises(sa.DiagonalNegative):
            sa.metropolis_matrix([0, 0, 0], np.ones((3, 3)) - np.eye(3), 1.0,
                                 sa.AcceptanceRule("metropolis", 0.9))

    def test_asymmetric_relation(self):
        with pytest.raises(ValidationError):
            sa.metropolis_matrix([0, 0], [(0, 1)], 1.0, sa.AcceptanceRule())

    def test_gibbs_invariant(self):
        model = md.IsingModel(8, 0.5, 0.5)
        pi = mc.invariant_distribution(sa.glauber_matrix(model))
        assert np.max(np.abs(pi - md.gibbs_law(model))) <= 1e-10

    @pytest.mark.parametrize("kind", ["metropolis", "heatbath"])
    def test_ising_detailed_balance(self, kind):
        model = md.IsingModel(8, 0.8, 0.3)
        P = sa.glauber_matrix(model, sa.AcceptanceRule(kind, model.q)).entries
        w = np.exp(-model.beta * md.ising_energies(model))
        flux = w[:, None] * P
        assert np.max(np.abs(flux - flux.T)) <= 1e-12

    @pytest.mark.parametrize("kind", ["metropolis", "heatbath"])
    def test_random_graphs(self, kind):
        g = np.random.default_rng(1)
        for _ in range(50):
            n = int(g.integers(3, 12))
            A = np.triu(g.random((n, n)) < 0.4, 1)
            A = A | A.T
            H = g.normal(size=n) * 2
            q = 1.0 / max(1, A.sum(axis=1).max())
            beta = float(g.uniform(0, 3))
            P = sa.metropolis_matrix(H, A, beta, sa.AcceptanceRule(kind, q)).entries
            w = np.exp(-beta * H)
            flux = w[:, None] * P
            assert np.max(np.abs(flux - flux.T)) <= 1e-12

    def test_heatbath_large_argument(self):
        r = sa.AcceptanceRule("heatbath").ratio(1.0, np.array([-1e4, 0.0, 1e4]))
        assert np.allclose(r, [1.0, 0.5, 0.0])


class TestGlauberStep:
    def test_beta_zero_accepts_everything(self):
        model = md.IsingModel(8, 0.0, 0.5)
        g = np.random.default_rng(2)
        x = md.plus_config(8)
        for _ in range(200):
            y, accepted, dm = sa.glauber_step(model, x, rng=g)
            assert accepted
            assert np.sum(y != x) == 1
            x = y

    def test_frozen_at_low_temperature(self):
        model = md.IsingModel(8, 20.0, 0.5)
        g = np.random.default_rng(3)
        x = md.plus_config(8)
        accepted = sum(sa.glauber_step(model, x, rng=g)[1] for _ in range(1000))
        assert accepted == 0
        assert 8 * model.q * exp(-20.0 * (4 + 1.0)) < 1e-40

    def test_incremental_magnetization(self):
        model = md.IsingModel(10, 0.6, 0.4)
        g = np.random.default_rng(4)
        x = md.alternating_config(10)
        m = md.magnetization(x)
        for _ in range(10 ** 4):
            old = x
            x, accepted, dm = sa.glauber_step(model, x, rng=g)
            if accepted:
                k = int(np.nonzero(x != old)[0][0])
                assert dm == -2 * old[k] == 2 * x[k]
            m += dm
        assert m == md.magnetization(x)

    def test_one_step_law_matches_matrix(self):
        model = md.IsingModel(4, 0.7, 0.5)
        P = sa.glauber_matrix(model).entries
        x = md.config_from_index(5, 4)
        g = np.random.default_rng(5)
        reps = 40000
        counts = np.zeros(16)
        for _ in range(reps):
            counts[md.config_index(sa.glauber_step(model, x, rng=g)[0])] += 1
        p = P[5]
        se = np.sqrt(p * (1 - p) / reps)
        assert np.all(np.abs(counts / reps - p) <= 4 * se + 1e-12)


class TestGlauberRun:
    def test_matches_recomputation(self):
        model = md.IsingModel(12, 0.5, 0.5)
        run = sa.glauber_run(model, md.plus_config(12), 50000, rng=RngStream(6), trace=True)
        assert run.magnetization == md.magnetization(run.final)
        assert run.energy == pytest.approx(md.ising_energy(model, run.final), abs=1e-9)
        assert run.mtrace[-1] == run.magnetization

    def test_empirical_law(self):
        model = md.IsingModel(8, 0.5, 0.5)
        run = sa.glauber_run(model, md.plus_config(8), 10 ** 7, rng=RngStream(7), count_states=True)
        assert sa.empirical_l1(run.counts, md.gibbs_law(model)) <= 0.02

    def test_heatbath_law(self):
        model = md.IsingModel(6, 0.5, 0.5)
        rule = sa.AcceptanceRule("heatbath", model.q)
        run = sa.glauber_run(model, md.minus_config(6), 2 * 10 ** 6, rule, RngStream(8), count_states=True)
        assert sa.empirical_l1(run.counts, md.gibbs_law(model)) <= 0.02

    def test_reproducible(self):
        model = md.IsingModel(8, 0.5, 0.5)
        a = sa.glauber_run(model, md.plus_config(8), 10000, rng=RngStream(9), trace=True)
        b = sa.glauber_run(model, md.plus_config(8), 10000, rng=RngStream(9), trace=True)
        assert np.array_equal(a.mtrace, b.mtrace) and np.array_equal(a.final, b.final)


class TestKawasaki:
    def test_conserves_magnetization(self):
        model = md.IsingModel(10, 0.8, 0.5)
        g = np.random.default_rng(10)
        x = md.alternating_config(10)
        m = md.magnetization(x)
        for _ in range(10 ** 5 // 10):
            x, _ = sa.kawasaki_step(model, x, rng=g)
        assert md.magnetization(x) == m

    def test_uniform_is_identity(self):
        model = md.IsingModel(6, 1.0, 0.5)
        y, accepted = sa.kawasaki_step(model, md.plus_config(6), rng=1)
        assert not accepted and np.array_equal(y, md.plus_config(6))
        with pytest.raises(sa.NoOppositePair):
            sa.kawasaki_step(model, md.minus_config(6), rng=1, strict=True)

    def test_exchange_energy_changes(self):
        model = md.IsingModel(4, 1.0, 0.5)
        x = np.array([1, 1, -1, -1])
        for i in (0, 1):
            for j in (2, 3):
                y = x.copy()
                y[i], y[j] = y[j], y[i]
                dI = md.interfaces(y) - md.interfaces(x)
                dH = md.ising_energy(model, y) - md.ising_energy(model, x)
                assert dI in (-2, 0, 2)
                assert dH in (-4, 0, 4)
                assert sa.exchange_delta(model, x, i, j) == pytest.approx(dH)


class TestEstimator:
    def test_constant_observable(self):
        rep = sa.mcmc_estimate(TWO, [2.5, 2.5], 1000, rng=RngStream(11))
        assert rep.mean == 2.5 and rep.variance_estimate == 0.0

    def test_ehrenfest_mean(self):
        N = 10
        P = md.ehrenfest_matrix(N)
        pi = mc.invariant_distribution(P)
        m = md.magnetization_values(N).astype(float)
        rep = sa.mcmc_estimate(P, m, 200000, rng=RngStream(12), init=pi)
        assert abs(rep.mean) <= 4 * np.sqrt(rep.variance_estimate)

    def test_callable_chain(self):
        def step(x, g):
            return int(g.random() < (2 / 3 if x == 0 else 1 / 3))

        rep = sa.mcmc_estimate(step, lambda x: float(x), 20000, rng=RngStream(13))
        assert abs(rep.mean - 0.5) <= 0.03

    def test_variance_bound(self):
        reps = [sa.mcmc_estimate(TWO, [0.0, 1.0], 5000, rng=RngStream(14, i), init=[0.5, 0.5],
                                 rho=1 / 3).mean for i in range(200)]
        emp = np.var(reps, ddof=1)
        bound = sa.mcmc_variance_bound(5000, 1 / 3, 0.25)
        assert bound == pytest.approx(2 * 0.25 / 5000)
        assert emp <= bound * 1.5

    def test_reproducible(self):
        a = sa.mcmc_estimate(TWO, [0.0, 1.0], 5000, rng=RngStream(15), rho=1 / 3, delta=0.01)
        b = sa.mcmc_estimate(TWO, [0.0, 1.0], 5000, rng=RngStream(15), rho=1 / 3, delta=0.01)
        assert a == b
        assert set(a.to_dict()) == {"n", "mean", "var_est", "var_bound", "ci", "n_required"}

    def test_batch_means(self):
        assert sa.batch_means_variance(np.ones(100)) == 0.0
        g = np.random.default_rng(16)
        v = [sa.batch_means_variance(g.normal(size=1600)) for _ in range(300)]
        assert np.mean(v) == pytest.approx(1 / 1600, rel=0.15)


class TestPlanner:
    def test_round_numbers(self):
        assert sa.plan_samples(1e-4, 1e-6, 1.0) == 10 ** 14
        assert sa.plan_samples(1e-4, 1e-6, 1.0, rho=1 / 3) == 2 * 10 ** 14

    def test_delta_one(self):
        assert sa.plan_samples(1.0, 0.01, 3.0) == 300

    def test_ranges(self):
        with pytest.raises(ParameterOutOfRange):
            sa.plan_samples(0.0, 0.1)
        with pytest.raises(ParameterOutOfRange):
            sa.plan_samples(0.1, 1.0)
        with pytest.raises(ParameterOutOfRange):
            sa.plan_samples(0.1, 0.1, rho=1.0)

    @given(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0), st.floats(1e-6, 0.9), st.floats(1e-6, 0.9),
           st.floats(0.0, 10.0), st.floats(0.0, 10.0), st.floats(0.0, 0.9), st.floats(0.0, 0.9))
    @settings(max_examples=200, deadline=None)
    def test_monotone(self, d1, d2, e1, e2, v1, v2, r1, r2):
        d_lo, d_hi = sorted((d1, d2))
        e_lo, e_hi = sorted((e1, e2))
        v_lo, v_hi = sorted((v1, v2))
        r_lo, r_hi = sorted((r1, r2))
        assert sa.plan_samples(d_hi, 0.1) <= sa.plan_samples(d_lo, 0.1)
        assert sa.plan_samples(0.1, e_hi) <= sa.plan_samples(0.1, e_lo)
        assert sa.plan_samples(0.1, 0.1, v_lo) <= sa.plan_samples(0.1, 0.1, v_hi)
        assert sa.plan_samples(0.1, 0.1, 1.0, r_lo) <= sa.plan_samples(0.1, 0.1, 1.0, r_hi)

    def test_clt_heuristic(self):
        assert sa.plan_samples_clt(0.1, 0.01) == int(np.ceil(200 * log(100)))


class TestVolume:
    def test_whole_cube(self):
        rep = sa.mc_volume(3, [], 1000, RngStream(17))
        assert rep.mean == 1.0

    def test_disk(self):
        rep = sa.mc_volume(2, [sa.ball([0.5, 0.5], 0.5)], 10 ** 5, RngStream(18))
        assert abs(rep.mean - PI / 4) <= rep.ci_halfwidth
        assert rep.ci_halfwidth == pytest.approx(np.sqrt(0.25 / (10 ** 5 * 1e-3)))

    def test_half_cube(self):
        rep = sa.mc_volume(10, [sa.affine([-1] + [0] * 9, 0.5)], 10 ** 5, RngStream(19))
        assert abs(rep.mean - 0.5) <= rep.ci_halfwidth

    def test_parsed(self):
        ineq = sa.parse_inequalities('[{"type": "ball", "center": [0.5, 0.5], "radius": 0.5}]')
        a = sa.mc_volume(2, ineq, 20000, RngStream(20))
        b = sa.mc_volume(2, [sa.ball([0.5, 0.5], 0.5)], 20000, RngStream(20))
        assert a.mean == b.mean
        with pytest.raises(ValidationError):
            sa.parse_inequalities('[{"type": "cone"}]')

    def test_unbiased(self):
        est = np.array([sa.mc_volume(2, [sa.ball([0.5, 0.5], 0.5)], 10 ** 4, RngStream(21, i)).mean
                        for i in range(200)])
        assert abs(est.mean() - PI / 4) <= 4 * est.std(ddof=1) / np.sqrt(200)


class TestGenerators:
    def test_exponential_injected(self):
        assert sa.sample_exponential(2.0, u=1 - exp(-1)) == pytest.approx(0.5)

    def test_normal_pairs(self):
        z = sa.sample_normal_pairs(10 ** 6, RngStream(22))
        assert np.all(np.abs(z.mean(axis=0)) <= 4e-3)
        assert np.all((0.99 <= z.var(axis=0)) & (z.var(axis=0) <= 1.01))
        assert abs(np.corrcoef(z.T)[0, 1]) <= 4e-3

    def test_normal_pair_injected(self):
        x, y = sa.sample_normal_pair(u=1 - exp(-0.5), v=0.0)
        assert x == pytest.approx(1.0) and y == pytest.approx(0.0)

    def test_exponential_mean(self):
        e = sa.sample_exponentials(2.0, 10 ** 6, RngStream(23))
        assert abs(e.mean() - 0.5) <= 4 * 0.5 / 1e3

    def test_bad_rate(self):
        with pytest.raises(ParameterOutOfRange):
            sa.sample_exponential(0.0)


class TestSimulateChain:
    def test_deterministic_chain(self):
        P = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        path = sa.simulate_chain(P, 0, 7, RngStream(24))
        assert list(path) == [1, 2, 0, 1, 2, 0, 1]

    def test_never_visits_zero_probability(self):
        P = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        path = sa.simulate_chain(P, 0, 20000, RngStream(25))
        prev = np.concatenate(([0], path[:-1]))
        assert np.all(P[prev, path] > 0)

    def test_occupation(self):
        P = md.ehrenfest_matrix(4)
        path = sa.simulate_chain(P, 0, 200000, RngStream(26))
        freq = np.bincount(path, minlength=5) / path.size
        assert np.abs(freq - mc.invariant_distribution(P)).sum() <= 0.02
