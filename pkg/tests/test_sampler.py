"""Sampler tests: conjugate draws against analytic moments, Laplace proposals
against bisection/quadrature oracles, MH invariance, sweep determinism, and
agreement between the vectorized engine and the reference densities."""

import math

import numpy as np
import pytest

from jointnlme import (
    ErrorModel,
    FitConfig,
    GibbsSampler,
    Hyperparameters,
    Individual,
    ParameterState,
    draw_mu_x,
    draw_sigma_eps,
    draw_sigma_x,
    gibbs_sweep,
    glm_loglik,
    growth_mean,
    laplace_proposal,
    longit_loglik,
    mh_independence_step,
    run_chain,
)
from jointnlme.exceptions import ConfigError, NumericError
from jointnlme.model import mvn_logpdf
from jointnlme.sampler import default_initial_state
from jointnlme.simulation import SimDesign, TrueParameters, simulate_dataset

N_DRAWS = 100_000


class _ZeroNormalRng:
    """Stub generator whose standard normals are all zero (draw == mean)."""

    def standard_normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)


def hyper_q1(c1=0.0, c_var=1.0, df=6.0, scale=0.00498, eps_shape=3.0, eps_rate=0.01):
    return Hyperparameters(
        alpha_mean=np.zeros(2),
        alpha_cov=1000.0 * np.eye(2),
        mu_x_mean=np.array([c1]),
        mu_x_cov=np.array([[c_var]]),
        sigma_x_df=df,
        sigma_x_scale=np.array([[scale]]),
        sigma_eps_shape=eps_shape,
        sigma_eps_rate=eps_rate,
        beta_mean=np.zeros(2),
        beta_cov=1000.0 * np.eye(2),
    )


class TestDrawMuX:
    def test_posterior_formula(self):
        # m=2, X=(1,3), unit variances: precision 3, mean 4/3
        hyper = hyper_q1(c1=0.0, c_var=1.0)
        x = np.array([[1.0], [3.0]])
        draw = draw_mu_x(x, np.array([[1.0]]), hyper, _ZeroNormalRng())
        assert draw[0] == pytest.approx(4.0 / 3.0)

    def test_flat_prior_limit(self):
        hyper = hyper_q1(c1=123.0, c_var=1e12)
        x = np.array([[1.0], [3.0]])
        draw = draw_mu_x(x, np.array([[1.0]]), hyper, _ZeroNormalRng())
        assert draw[0] == pytest.approx(2.0, abs=1e-5)

    def test_moment_matching(self):
        hyper = hyper_q1(c1=0.5, c_var=2.0)
        x = np.array([[1.0], [3.0], [2.5]])
        sigma_x = np.array([[0.8]])
        prec = 3 / 0.8 + 1 / 2.0
        mean = (x.sum() / 0.8 + 0.5 / 2.0) / prec
        var = 1.0 / prec
        rng = np.random.default_rng(11)
        draws = np.array([draw_mu_x(x, sigma_x, hyper, rng)[0] for _ in range(N_DRAWS)])
        mc_se_mean = math.sqrt(var / N_DRAWS)
        mc_se_var = var * math.sqrt(2.0 / (N_DRAWS - 1))
        assert abs(draws.mean() - mean) < 4 * mc_se_mean
        assert abs(draws.var(ddof=1) - var) < 4 * mc_se_var

    def test_q2_moment_matching(self):
        hyper = Hyperparameters(
            alpha_mean=np.zeros(2), alpha_cov=np.eye(2),
            mu_x_mean=np.array([1.0, -1.0]), mu_x_cov=np.diag([2.0, 1.0]),
            sigma_x_df=6.0, sigma_x_scale=np.eye(2),
            sigma_eps_shape=3.0, sigma_eps_rate=0.01,
            beta_mean=np.zeros(3), beta_cov=np.eye(3),
        )
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 2))
        sigma_x = np.array([[0.5, 0.2], [0.2, 0.9]])
        sx_prec = np.linalg.inv(sigma_x)
        c_prec = np.linalg.inv(hyper.mu_x_cov)
        prec = 4 * sx_prec + c_prec
        cov = np.linalg.inv(prec)
        mean = cov @ (sx_prec @ x.sum(axis=0) + c_prec @ hyper.mu_x_mean)
        draws = np.array([draw_mu_x(x, sigma_x, hyper, rng) for _ in range(20_000)])
        se = np.sqrt(np.diag(cov) / 20_000)
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)


class TestDrawSigmaX:
    def test_zero_residual_prior_update(self):
        # all latents at mu: conditional is IG((df+m)/2, scale/2)
        hyper = hyper_q1(df=6.0, scale=0.5)
        x = np.full((4, 1), 2.0)
        rng = np.random.default_rng(3)
        draws = np.array([
            draw_sigma_x(x, np.array([2.0]), hyper, rng)[0, 0] for _ in range(N_DRAWS)
        ])
        shape, rate = (6.0 + 4) / 2.0, 0.5 / 2.0
        mean = rate / (shape - 1.0)
        var = rate ** 2 / ((shape - 1.0) ** 2 * (shape - 2.0))
        assert abs(draws.mean() - mean) < 4 * math.sqrt(var / N_DRAWS)

    def test_moment_matching_q1(self):
        hyper = hyper_q1(df=7.0, scale=0.3)
        x = np.array([[1.0], [2.0], [4.0], [2.5], [1.5]])
        mu = np.array([2.0])
        resid2 = float(((x[:, 0] - 2.0) ** 2).sum())
        shape, rate = (7.0 + 5) / 2.0, (0.3 + resid2) / 2.0
        mean = rate / (shape - 1.0)
        var = rate ** 2 / ((shape - 1.0) ** 2 * (shape - 2.0))
        rng = np.random.default_rng(8)
        draws = np.array([draw_sigma_x(x, mu, hyper, rng)[0, 0] for _ in range(N_DRAWS)])
        assert abs(draws.mean() - mean) < 4 * math.sqrt(var / N_DRAWS)
        sample_var = draws.var(ddof=1)
        # var of the sample variance of an IG needs the 4th moment; use a loose
        # multiple of the plug-in normal-theory standard error instead
        assert abs(sample_var - var) < 8 * var * math.sqrt(2.0 / (N_DRAWS - 1))

    def test_q2_mean_and_spd(self):
        hyper = Hyperparameters(
            alpha_mean=np.zeros(2), alpha_cov=np.eye(2),
            mu_x_mean=np.zeros(2), mu_x_cov=np.eye(2),
            sigma_x_df=8.0, sigma_x_scale=np.array([[1.0, 0.3], [0.3, 2.0]]),
            sigma_eps_shape=3.0, sigma_eps_rate=0.01,
            beta_mean=np.zeros(3), beta_cov=np.eye(3),
        )
        rng = np.random.default_rng(21)
        x = rng.normal(size=(6, 2))
        mu = x.mean(axis=0)
        dx = x - mu
        scale_n = hyper.sigma_x_scale + dx.T @ dx
        df_n = 8.0 + 6
        expected = scale_n / (df_n - 2 - 1)
        draws = np.zeros((20_000, 2, 2))
        for j in range(draws.shape[0]):
            d = draw_sigma_x(x, mu, hyper, rng)
            np.testing.assert_allclose(d, d.T)
            np.linalg.cholesky(d)
            draws[j] = d
        se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - expected) < 4 * se)


class TestDrawSigmaEps:
    @staticmethod
    def _dataset():
        t1 = np.array([2.0, 9.0, 30.0])
        t2 = np.array([5.0, 25.0])
        state = ParameterState(
            alpha=np.array([15.0, 7.0]), beta=np.zeros(2), mu_x=np.array([4.0]),
            sigma_x=np.array([[0.2]]), sigma2_eps=0.2, rho=0.0, phi=1.0,
            x=np.array([[4.1], [3.8]]),
        )
        data = [
            Individual("a", t1, growth_mean(state.alpha, 4.1, t1) + [0.1, -0.2, 0.05], 1.0),
            Individual("b", t2, growth_mean(state.alpha, 3.8, t2) + [0.3, -0.1], 0.0),
        ]
        return data, state

    def test_zero_residual_prior_draw(self):
        data, state = self._dataset()
        clean = [
            Individual(ind.id, ind.times, growth_mean(state.alpha, state.x[i], ind.times), ind.outcome)
            for i, ind in enumerate(data)
        ]
        hyper = hyper_q1(eps_shape=3.0, eps_rate=0.7)
        rng = np.random.default_rng(2)
        draws = np.array([draw_sigma_eps(clean, state, hyper, rng) for _ in range(N_DRAWS)])
        shape, rate = 3.0 + 5 / 2.0, 0.7
        mean = rate / (shape - 1.0)
        var = rate ** 2 / ((shape - 1.0) ** 2 * (shape - 2.0))
        assert abs(draws.mean() - mean) < 4 * math.sqrt(var / N_DRAWS)

    def test_independent_errors_reduce_to_squared_residuals(self):
        data, state = self._dataset()
        hyper = hyper_q1(eps_shape=4.0, eps_rate=0.5)
        rss = sum(
            float(np.sum((ind.y - growth_mean(state.alpha, state.x[i], ind.times)) ** 2))
            for i, ind in enumerate(data)
        )
        shape, rate = 4.0 + 5 / 2.0, 0.5 + rss / 2.0
        mean = rate / (shape - 1.0)
        var = rate ** 2 / ((shape - 1.0) ** 2 * (shape - 2.0))
        rng = np.random.default_rng(4)
        draws = np.array([draw_sigma_eps(data, state, hyper, rng) for _ in range(N_DRAWS)])
        assert abs(draws.mean() - mean) < 4 * math.sqrt(var / N_DRAWS)

    def test_correlated_rss_uses_whitened_residuals(self):
        data, state = self._dataset()
        state.rho = 0.8
        hyper = hyper_q1(eps_shape=4.0, eps_rate=0.5)
        rss = 0.0
        for i, ind in enumerate(data):
            corr = 0.8 ** np.abs(ind.times[:, None] - ind.times[None, :])
            resid = ind.y - growth_mean(state.alpha, state.x[i], ind.times)
            rss += resid @ np.linalg.inv(corr) @ resid
        shape, rate = 4.0 + 5 / 2.0, 0.5 + rss / 2.0
        mean = rate / (shape - 1.0)
        var = rate ** 2 / ((shape - 1.0) ** 2 * (shape - 2.0))
        rng = np.random.default_rng(4)
        draws = np.array([draw_sigma_eps(data, state, hyper, rng) for _ in range(N_DRAWS)])
        assert abs(draws.mean() - mean) < 4 * math.sqrt(var / N_DRAWS)


class TestLaplaceProposal:
    def test_gaussian_target_is_exact(self):
        mode, cov = laplace_proposal(
            lambda v: mvn_logpdf(v, np.array([3.0]), np.array([[4.0]])), np.array([0.0])
        )
        assert mode[0] == pytest.approx(3.0, abs=1e-5)
        assert cov[0, 0] == pytest.approx(4.0, abs=1e-3)

    def test_logit_posterior_against_bisection(self):
        # single Bernoulli observation (d=1) with a standard normal prior
        def target(v):
            x = float(v[0])
            return x - math.log1p(math.exp(x)) - 0.5 * x * x

        def deriv(x):
            return 1.0 - 1.0 / (1.0 + math.exp(-x)) - x

        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if deriv(mid) > 0:
                lo = mid
            else:
                hi = mid
        mode, _ = laplace_proposal(target, np.array([0.0]))
        assert mode[0] == pytest.approx(0.5 * (lo + hi), abs=1e-5)

    def test_flat_direction_takes_ridge_path(self):
        mode, cov = laplace_proposal(lambda v: 0.0 * float(v[0]), np.array([1.5]))
        assert np.isfinite(cov[0, 0]) and cov[0, 0] > 0

    def test_wrong_curvature_beyond_ridge_errors(self):
        with pytest.raises(NumericError):
            laplace_proposal(lambda v: 2e4 * float(v[0]) ** 2, np.array([0.5]))

    def test_2d_gaussian(self):
        cov_true = np.array([[2.0, 0.6], [0.6, 1.0]])
        mean_true = np.array([1.0, -2.0])
        mode, cov = laplace_proposal(
            lambda v: mvn_logpdf(v, mean_true, cov_true), np.zeros(2)
        )
        np.testing.assert_allclose(mode, mean_true, atol=1e-4)
        np.testing.assert_allclose(cov, cov_true, atol=1e-2)


class TestMhIndependenceStep:
    def test_perfect_proposal_always_accepts(self):
        mode = np.array([1.0])
        cov = np.array([[0.7]])
        target = lambda v: mvn_logpdf(v, mode, cov)
        rng = np.random.default_rng(0)
        current = np.array([0.3])
        for _ in range(500):
            current, accepted = mh_independence_step(current, target, (mode, cov), rng)
            assert accepted

    def test_nonfinite_current_raises(self):
        with pytest.raises(NumericError):
            mh_independence_step(
                np.array([-1.0]),
                lambda v: -np.inf if v[0] < 0 else 0.0,
                (np.array([0.5]), np.array([[1.0]])),
                np.random.default_rng(0),
            )

    def test_chain_matches_grid_cdf(self):
        # skewed 1-D toy posterior (logit likelihood + Gaussian prior), the
        # same shape the latent-effect conditionals take
        def target(v):
            x = float(v[0])
            return 2.0 * x - 2.0 * math.log1p(math.exp(x)) - 0.5 * (x - 1.0) ** 2

        mode, cov = laplace_proposal(target, np.array([0.0]))
        rng = np.random.default_rng(42)
        draws = np.empty(N_DRAWS)
        current = mode.copy()
        for i in range(N_DRAWS):
            current, _ = mh_independence_step(current, target, (mode, cov), rng)
            draws[i] = current[0]
        grid = np.linspace(-10.0, 10.0, 40_001)
        logd = 2.0 * grid - 2.0 * np.logaddexp(0.0, grid) - 0.5 * (grid - 1.0) ** 2
        dens = np.exp(logd - logd.max())
        cdf = np.cumsum(dens)
        cdf /= cdf[-1]
        emp_sorted = np.sort(draws)
        grid_cdf_at_draws = np.interp(emp_sorted, grid, cdf)
        ks = np.max(np.abs(grid_cdf_at_draws - (np.arange(1, N_DRAWS + 1)) / N_DRAWS))
        assert ks < 0.01

    def test_bounded_proposal_stays_in_bounds(self):
        def target(v):
            x = float(v[0])
            return 0.0 if 0.0 <= x <= 0.999 else -np.inf

        rng = np.random.default_rng(1)
        current = np.array([0.5])
        prop = (np.array([0.5]), np.array([[4.0]]))
        for _ in range(300):
            current, _ = mh_independence_step(current, target, prop, rng, bounds=(0.0, 0.999))
            assert 0.0 <= current[0] <= 0.999


# ---------------------------------------------------------------------------
# Engine-vs-reference agreement
# ---------------------------------------------------------------------------

def small_dataset(seed=123, m=6, rho=0.7):
    rng = np.random.default_rng(seed)
    design = SimDesign(
        times=[np.sort(rng.choice(np.arange(1.0, 61.0), size=n, replace=False))
               for n in rng.integers(1, 5, size=m)],
        groups=np.ones(m, int),
        truth=TrueParameters(rho=rho),
        seed=seed,
    )
    return simulate_dataset(design)


def reference_x_term(data, state, i):
    return (
        longit_loglik(data[i], state, x_index=i)
        + glm_loglik(data[i], state, x_index=i)
        + mvn_logpdf(state.x[i], state.mu_x, state.sigma_x)
    )


class TestEngineAgainstReference:
    def setup_method(self):
        self.data = small_dataset()
        self.config = FitConfig(iterations=10, burn_in=0, thin=1, seed=0)
        self.sampler = GibbsSampler(self.data, self.config)
        rng = np.random.default_rng(9)
        self.state = ParameterState(
            alpha=np.array([14.0, 6.5]), beta=np.array([-3.0, 0.8]),
            mu_x=np.array([4.1]), sigma_x=np.array([[0.25]]),
            sigma2_eps=0.3, rho=0.55, phi=1.0,
            x=rng.normal(4.0, 0.5, size=(len(self.data), 1)),
        )

    def test_x_target_matches_reference(self):
        s = self.sampler
        st = self.state
        import scipy.linalg as sla

        sx_factor = sla.cho_factor(st.sigma_x, lower=True)
        sx_prec = sla.cho_solve(sx_factor, np.eye(1))
        sx_logdet = 2.0 * np.sum(np.log(np.diag(sx_factor[0])))
        target = s._x_target(st.alpha, st.beta, st.mu_x, sx_prec, sx_logdet,
                             st.sigma2_eps, st.rho, st.phi)
        values = target(st.x)
        for i in range(len(self.data)):
            expected = reference_x_term(self.data, st, i)
            # engine drops the q*log(2*pi)/2 constant of the latent prior
            assert values[i] - 0.5 * math.log(2 * math.pi) == pytest.approx(expected, rel=1e-10, abs=1e-9)

    def _difference_check(self, build_target, reference_value, points):
        target = build_target()
        t0 = target(points[0])
        r0 = reference_value(points[0])
        for pt in points[1:]:
            assert target(pt) - t0 == pytest.approx(
                reference_value(pt) - r0, rel=1e-9, abs=1e-8
            )

    def test_alpha_target_matches_reference(self):
        s, st, data = self.sampler, self.state, self.data

        def reference(alpha_vec):
            trial = st.copy()
            trial.alpha = np.asarray(alpha_vec, float)
            ll = sum(longit_loglik(data[i], trial, x_index=i) for i in range(len(data)))
            return ll + mvn_logpdf(trial.alpha, s.hyper.alpha_mean, s.hyper.alpha_cov)

        self._difference_check(
            lambda: s._alpha_target(st.x, st.sigma2_eps, st.rho),
            reference,
            [np.array([14.0, 6.5]), np.array([15.5, 7.2]), np.array([13.0, 5.0])],
        )

    def test_beta_target_matches_reference(self):
        s, st, data = self.sampler, self.state, self.data

        def reference(beta_vec):
            trial = st.copy()
            trial.beta = np.asarray(beta_vec, float)
            ll = sum(glm_loglik(data[i], trial, x_index=i) for i in range(len(data)))
            return ll + mvn_logpdf(trial.beta, s.hyper.beta_mean, s.hyper.beta_cov)

        self._difference_check(
            lambda: s._beta_target(st.x, st.phi),
            reference,
            [np.array([-3.0, 0.8]), np.array([0.0, 0.0]), np.array([-6.0, 1.5])],
        )

    def test_rho_target_matches_reference(self):
        s, st, data = self.sampler, self.state, self.data

        def reference(rho_vec):
            trial = st.copy()
            trial.rho = float(np.atleast_1d(rho_vec)[0])
            return sum(longit_loglik(data[i], trial, x_index=i) for i in range(len(data)))

        self._difference_check(
            lambda: s._rho_target(st.x, st.alpha, st.sigma2_eps),
            reference,
            [np.array([0.55]), np.array([0.1]), np.array([0.93])],
        )


# ---------------------------------------------------------------------------
# Sweeps and chains
# ---------------------------------------------------------------------------

class TestGibbsSweep:
    def test_deterministic_given_seed(self):
        data = small_dataset()
        config = FitConfig(iterations=10, burn_in=0, thin=1, seed=7)
        state = default_initial_state(data, config)
        a = gibbs_sweep(state, data, config, np.random.default_rng(33))
        b = gibbs_sweep(state, data, config, np.random.default_rng(33))
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.alpha, b.alpha)
        assert a.sigma2_eps == b.sigma2_eps and a.rho == b.rho

    def test_rho_fixed_under_independent_errors(self):
        data = small_dataset()
        config = FitConfig(iterations=10, burn_in=0, thin=1, seed=7,
                           error_model=ErrorModel.INDEPENDENT)
        state = default_initial_state(data, config)
        rng = np.random.default_rng(1)
        for _ in range(5):
            state = gibbs_sweep(state, data, config, rng)
            assert state.rho == 0.0

    def test_prior_only_sweep_with_no_data(self):
        config = FitConfig(iterations=10, burn_in=0, thin=1, seed=7)
        state = default_initial_state([], config)
        rng = np.random.default_rng(0)
        out = gibbs_sweep(state, [], config, rng)
        out.validate()
        assert out.x.shape == (0, 1)

    def test_update_blocks_respected(self):
        data = small_dataset()
        config = FitConfig(iterations=10, burn_in=0, thin=1, seed=7,
                           update_blocks=frozenset({"x"}))
        state = default_initial_state(data, config)
        out = gibbs_sweep(state, data, config, np.random.default_rng(3))
        np.testing.assert_array_equal(out.alpha, state.alpha)
        np.testing.assert_array_equal(out.beta, state.beta)
        assert out.sigma2_eps == state.sigma2_eps
        assert not np.array_equal(out.x, state.x)


class TestRunChain:
    def test_retention_schedule(self):
        assert FitConfig().retained_count == 39_800  # 2e6 iters, 1e4 burn, thin 50
        config = FitConfig(iterations=200, burn_in=10, thin=5, seed=1)
        data = small_dataset(m=4)
        store = run_chain(data, config)
        assert len(store) == 38
        assert store.iterations[0] == 15 and store.iterations[-1] == 200

    def test_invalid_schedules_rejected(self):
        with pytest.raises(ConfigError):
            FitConfig(iterations=10, burn_in=10).validate()
        with pytest.raises(ConfigError):
            FitConfig(iterations=100, burn_in=0, thin=0).validate()
        with pytest.raises(ConfigError):
            FitConfig(iterations=5, burn_in=4, thin=10).validate()

    def test_bitwise_determinism(self):
        data = small_dataset(m=5)
        config = FitConfig(iterations=300, burn_in=50, thin=5, seed=99)
        a = run_chain(data, config)
        b = run_chain(data, config)
        for name in ("alpha", "beta", "mu_x", "sigma_x", "sigma2_eps", "rho", "phi", "x"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_retained_states_satisfy_invariants(self):
        data = small_dataset(m=6)
        config = FitConfig(iterations=400, burn_in=100, thin=3, seed=5)
        store = run_chain(data, config)
        assert np.all(store.sigma2_eps > 0)
        assert np.all((store.rho >= 0) & (store.rho < 1))
        assert np.all(store.phi > 0)
        for j in range(len(store)):
            store.state(j).validate()

    def test_acceptance_rates_strictly_inside_unit_interval(self):
        data = small_dataset(m=8)
        config = FitConfig(iterations=1000, burn_in=0, thin=10, seed=17)
        store = run_chain(data, config)
        for block in ("x", "alpha", "beta", "rho"):
            rate = store.meta[f"acceptance.{block}"]
            assert 0.0 < rate < 1.0, f"{block} acceptance {rate}"

    def test_prior_only_chain_reproduces_prior_moments(self):
        hyper = hyper_q1(c1=2.0, c_var=4.0)
        config = FitConfig(iterations=2000, burn_in=0, thin=1, seed=3, hyper=hyper)
        store = run_chain([], config)
        mu = store.mu_x[:, 0]
        se = math.sqrt(4.0 / mu.size)
        assert abs(mu.mean() - 2.0) < 4 * se
        var_se = 4.0 * math.sqrt(2.0 / (mu.size - 1))
        assert abs(mu.var(ddof=1) - 4.0) < 4 * var_se

    def test_bad_initial_state_rejected(self):
        data = small_dataset(m=4)
        config = FitConfig(iterations=100, burn_in=0, thin=1, seed=1)
        bad = default_initial_state(data, config)
        bad.x = bad.x[:2]
        with pytest.raises(ConfigError):
            run_chain(data, config.__class__(**{**config.__dict__, "init": bad}))

    def test_posterior_tracks_truth_on_easy_data(self):
        # dense, low-noise dataset: posterior mean of mu_x should land near 4
        rng = np.random.default_rng(12)
        design = SimDesign(
            times=[np.sort(rng.choice(np.arange(1.0, 81.0), size=5, replace=False))
                   for _ in range(25)],
            groups=np.ones(25, int),
            truth=TrueParameters(sigma2_eps=0.05, rho=0.0),
            seed=42,
        )
        data = simulate_dataset(design)
        config = FitConfig(iterations=3000, burn_in=500, thin=5, seed=2,
                           error_model=ErrorModel.INDEPENDENT)
        store = run_chain(data, config)
        assert abs(store.mu_x.mean() - 4.0) < 0.5
        assert abs(store.alpha[:, 0].mean() - 15.0) < 2.5
