"""Metropolis-within-Gibbs sampler for the joint model.

One sweep updates, in order: every latent effect X_i (independence MH with a
per-individual Laplace proposal), alpha (MH), beta (MH), mu_x (exact
multivariate-normal draw), sigma_x (exact inverse-Wishart draw), sigma2_eps
(exact inverse-gamma draw), rho (MH on [0, 0.999], CAR(1) only) and phi
(exact inverse-gamma draw, Gaussian outcomes only).

Laplace proposals center a Gaussian at the mode of the block's full
conditional with covariance equal to the inverse negated Hessian there.
Latent-effect proposals are rebuilt every sweep; alpha/beta/rho proposals are
refreshed every ``laplace_refresh`` sweeps from the current value.  When the
curvature at a mode cannot be ridged into positive definiteness, that block
falls back to a symmetric random-walk step for the sweep.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, ndtr, ndtri
from scipy.stats import invwishart

from ._engine import PackedData, batch_mode_hessian, spd_covariance, whitened_rss
from .exceptions import ConfigError, InvalidParameterError, NumericError
from .model import (
    ErrorModel,
    Hyperparameters,
    ParameterState,
    build_error_cov,
    get_family,
    growth_mean,
    joint_unnorm_logpost,
    longit_loglik,
)

__all__ = [
    "ALL_BLOCKS",
    "FitConfig",
    "ChainStore",
    "draw_mu_x",
    "draw_sigma_x",
    "draw_sigma_eps",
    "laplace_proposal",
    "mh_independence_step",
    "GibbsSampler",
    "gibbs_sweep",
    "run_chain",
    "default_initial_state",
]

LOG_2PI = math.log(2.0 * math.pi)

ALL_BLOCKS = frozenset({"x", "alpha", "beta", "mu_x", "sigma_x", "sigma_eps", "rho", "phi"})

RHO_MAX = 0.999
RW_SCALE = 0.1


# ---------------------------------------------------------------------------
# Configuration and chain storage
# ---------------------------------------------------------------------------

@dataclass
class FitConfig:
    """Sampler schedule and model choice.

    Defaults mirror the reference analysis: 2,000,000 iterations with a
    10,000-iteration burn-in and thinning of 50.  ``hyper`` left as None is
    resolved to :meth:`Hyperparameters.defaults` sized to the data at fit
    time; ``init`` left as None uses a data-driven starting state.
    """

    iterations: int = 2_000_000
    burn_in: int = 10_000
    thin: int = 50
    seed: int = 0
    error_model: str = ErrorModel.CAR1
    family: object = "bernoulli"
    hyper: Hyperparameters | None = None
    init: ParameterState | None = None
    mean_fn: object = growth_mean
    update_blocks: frozenset = ALL_BLOCKS
    laplace_refresh: int = 10

    def validate(self):
        if not (self.iterations > self.burn_in >= 0):
            raise ConfigError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.retained_count < 1:
            raise ConfigError("schedule retains no draws")
        if self.laplace_refresh < 1:
            raise ConfigError("laplace_refresh must be >= 1")
        unknown = set(self.update_blocks) - ALL_BLOCKS
        if unknown:
            raise ConfigError(f"unknown update blocks: {sorted(unknown)}")
        ErrorModel.validate(self.error_model)
        get_family(self.family)
        return self

    @property
    def retained_count(self):
        return (self.iterations - self.burn_in) // self.thin

    def resolved(self, data):
        """Fill in data-dependent defaults (hyperparameters)."""
        if self.hyper is not None:
            return self
        k = data[0].covariates.size if len(data) else 1
        p = self.init.alpha.size if self.init is not None else 2
        q = self.init.q if self.init is not None else 1
        return replace(self, hyper=Hyperparameters.defaults(n_covariates=k, q=q, p=p))


class ChainStore:
    """Retained post-burn-in, thinned draws plus run metadata.

    Columnar storage: one array per parameter with the retained-draw axis
    first.  ``x`` holds the latent effects (R, m, q) aligned with
    ``individual_ids``.  ``meta`` records the config echo, per-block
    acceptance rates, the seed and wall-clock time.
    """

    def __init__(self, iterations, alpha, beta, mu_x, sigma_x, sigma2_eps, rho, phi, x,
                 individual_ids, meta):
        self.iterations = np.asarray(iterations, int)
        self.alpha = np.asarray(alpha, float)
        self.beta = np.asarray(beta, float)
        self.mu_x = np.asarray(mu_x, float)
        self.sigma_x = np.asarray(sigma_x, float)
        self.sigma2_eps = np.asarray(sigma2_eps, float)
        self.rho = np.asarray(rho, float)
        self.phi = np.asarray(phi, float)
        self.x = np.asarray(x, float)
        self.individual_ids = list(individual_ids)
        self.meta = dict(meta)

    def __len__(self):
        return self.iterations.size

    @property
    def p(self):
        return self.alpha.shape[1]

    @property
    def r(self):
        return self.beta.shape[1]

    @property
    def q(self):
        return self.mu_x.shape[1]

    @property
    def n_individuals(self):
        return self.x.shape[1]

    def state(self, j):
        """Reconstruct the j-th retained draw as a ParameterState."""
        return ParameterState(
            alpha=self.alpha[j].copy(),
            beta=self.beta[j].copy(),
            mu_x=self.mu_x[j].copy(),
            sigma_x=self.sigma_x[j].copy(),
            sigma2_eps=float(self.sigma2_eps[j]),
            rho=float(self.rho[j]),
            phi=float(self.phi[j]),
            x=self.x[j].copy(),
        )

    def scalar_names(self):
        """Column names for every retained scalar parameter, in persistence order."""
        names = [f"alpha{i + 1}" for i in range(self.p)]
        names += [f"beta{i + 1}" for i in range(self.r)]
        names += ["mu_x"] if self.q == 1 else [f"mu_x{i + 1}" for i in range(self.q)]
        if self.q == 1:
            names += ["sigma2_x"]
        else:
            names += [f"sigma_x_{i + 1}_{j + 1}" for i in range(self.q) for j in range(i, self.q)]
        names += ["sigma2_eps"]
        if self.meta.get("error_model") == ErrorModel.CAR1:
            names += ["rho"]
        if self.meta.get("family_has_dispersion"):
            names += ["phi"]
        return names

    def scalar_chains(self):
        """Mapping from scalar parameter name to its retained-draw vector."""
        out = {}
        for i in range(self.p):
            out[f"alpha{i + 1}"] = self.alpha[:, i]
        for i in range(self.r):
            out[f"beta{i + 1}"] = self.beta[:, i]
        if self.q == 1:
            out["mu_x"] = self.mu_x[:, 0]
            out["sigma2_x"] = self.sigma_x[:, 0, 0]
        else:
            for i in range(self.q):
                out[f"mu_x{i + 1}"] = self.mu_x[:, i]
            for i in range(self.q):
                for j in range(i, self.q):
                    out[f"sigma_x_{i + 1}_{j + 1}"] = self.sigma_x[:, i, j]
        out["sigma2_eps"] = self.sigma2_eps
        if self.meta.get("error_model") == ErrorModel.CAR1:
            out["rho"] = self.rho
        if self.meta.get("family_has_dispersion"):
            out["phi"] = self.phi
        return out


# ---------------------------------------------------------------------------
# Conjugate draws
# ---------------------------------------------------------------------------

def _draw_inv_gamma(shape, rate, rng):
    return rate / rng.gamma(shape)


def draw_mu_x(x, sigma_x, hyper, rng):
    """Exact draw of the random-effect mean given the latents.

    The full conditional is normal with precision m*sigma_x^{-1} + C^{-1} and
    mean solving that precision against sigma_x^{-1} sum(X_i) + C^{-1} c1.
    """
    x = np.asarray(x, float)
    if x.ndim == 1:
        x = x[:, None]
    m, q = x.shape
    if m < 1:
        raise NumericError("draw_mu_x needs at least one latent vector")
    if q == 1:
        sx_prec = 1.0 / float(np.asarray(sigma_x).reshape(-1)[0])
        c_prec = 1.0 / float(hyper.mu_x_cov[0, 0])
        prec = m * sx_prec + c_prec
        mean = (sx_prec * x.sum() + c_prec * hyper.mu_x_mean[0]) / prec
        return np.array([mean + math.sqrt(1.0 / prec) * rng.standard_normal()])
    sigma_x = np.asarray(sigma_x, float)
    try:
        sx_f = cho_factor(sigma_x, lower=True, check_finite=False)
        c_f = cho_factor(hyper.mu_x_cov, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"non-positive-definite precision in mu_x draw: {exc}") from None
    eye = np.eye(q)
    sx_prec = cho_solve(sx_f, eye, check_finite=False)
    c_prec = cho_solve(c_f, eye, check_finite=False)
    prec = m * sx_prec + c_prec
    b = sx_prec @ x.sum(axis=0) + c_prec @ hyper.mu_x_mean
    prec_f = cho_factor(prec, lower=True, check_finite=False)
    mean = cho_solve(prec_f, b, check_finite=False)
    # draw: mean + L^{-T} z where L L' = precision
    z = rng.standard_normal(q)
    lower = np.linalg.cholesky(prec)
    return mean + np.linalg.solve(lower.T, z)


def draw_sigma_x(x, mu_x, hyper, rng):
    """Exact inverse-Wishart draw of the random-effect covariance.

    Conditional: IW(df + m, scale + sum (X_i - mu)(X_i - mu)').  For q = 1
    this is the inverse-gamma special case, drawn directly.
    """
    x = np.asarray(x, float)
    if x.ndim == 1:
        x = x[:, None]
    m, q = x.shape
    if m < 1:
        raise NumericError("draw_sigma_x needs at least one latent vector")
    mu_x = np.atleast_1d(np.asarray(mu_x, float))
    dx = x - mu_x
    if q == 1:
        scale = float(hyper.sigma_x_scale[0, 0]) + float(dx[:, 0] @ dx[:, 0])
        df = hyper.sigma_x_df + m
        return np.array([[_draw_inv_gamma(0.5 * df, 0.5 * scale, rng)]])
    scale = hyper.sigma_x_scale + dx.T @ dx
    scale = 0.5 * (scale + scale.T)
    try:
        draw = invwishart.rvs(df=hyper.sigma_x_df + m, scale=scale, random_state=rng)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"degenerate scale matrix in sigma_x draw: {exc}") from None
    draw = np.atleast_2d(draw)
    return 0.5 * (draw + draw.T)


def draw_sigma_eps(data, state, hyper, rng, mean_fn=growth_mean):
    """Exact inverse-gamma draw of the longitudinal error variance.

    Conditional shape is N/2 + prior shape (N = total observations); the rate
    adds half the correlation-whitened residual sum of squares.
    """
    total_n = 0
    rss = 0.0
    for i, ind in enumerate(data):
        cov = build_error_cov(1.0, state.rho, ind.times)
        resid = ind.y - mean_fn(state.alpha, state.x[i], ind.times)
        factor = cho_factor(cov, lower=True, check_finite=False)
        rss += float(resid @ cho_solve(factor, resid, check_finite=False))
        total_n += ind.n_obs
    if total_n < 1:
        raise NumericError("draw_sigma_eps needs at least one observation")
    shape = 0.5 * total_n + hyper.sigma_eps_shape
    rate = hyper.sigma_eps_rate + 0.5 * rss
    return _draw_inv_gamma(shape, rate, rng)


# ---------------------------------------------------------------------------
# Laplace proposals and MH steps
# ---------------------------------------------------------------------------

def laplace_proposal(target, init, grad_tol=1e-6, max_iter=100):
    """Mode and curvature-based covariance of a log-density.

    Runs a damped Newton iteration (finite-difference gradient/Hessian) from
    ``init`` until the gradient infinity-norm drops below ``grad_tol`` or
    ``max_iter`` iterations pass, then returns (mode, covariance) with
    covariance the ridged inverse of the negated Hessian at the mode.  Raises
    NumericError when the curvature cannot be regularized (callers fall back
    to a random-walk proposal).
    """
    init = np.atleast_1d(np.asarray(init, float))

    def batched(xb):
        return np.array([target(row) for row in xb])

    mode, hess, _, _ = batch_mode_hessian(
        batched, init[None, :], grad_tol=grad_tol, max_iter=max_iter
    )
    cov, _, fallback = spd_covariance(hess)
    if fallback[0]:
        raise NumericError("negated Hessian at mode cannot be made positive definite")
    return mode[0], cov[0]


def _truncnorm_draw(mode, sd, lo, hi, rng):
    a = ndtr((lo - mode) / sd)
    b = ndtr((hi - mode) / sd)
    if not (b - a) > 0.0:
        raise NumericError("truncated proposal has no mass inside the bounds")
    u = a + (b - a) * rng.random()
    return mode + sd * ndtri(u)


class _Proposal:
    """Independence proposal N(mode, cov) with factors precomputed once."""

    __slots__ = ("mode", "cov", "chol", "prec")

    def __init__(self, mode, cov):
        self.mode = np.atleast_1d(np.asarray(mode, float))
        self.cov = np.atleast_2d(np.asarray(cov, float))
        self.chol = np.linalg.cholesky(self.cov)
        inv_chol = np.linalg.solve(self.chol, np.eye(self.mode.size))
        self.prec = inv_chol.T @ inv_chol

    def log_kernel(self, value):
        diff = value - self.mode
        return -0.5 * float(diff @ self.prec @ diff)


def _independence_step(current, target, proposal, rng, bounds=None):
    current = np.atleast_1d(np.asarray(current, float))
    lt_cur = float(target(current))
    if not np.isfinite(lt_cur):
        raise NumericError("MH invariant violated: target non-finite at current state")
    mode = proposal.mode
    if bounds is not None:
        if mode.size != 1:
            raise ConfigError("bounded proposals are supported in one dimension only")
        sd = float(proposal.chol[0, 0])
        cand = np.array([_truncnorm_draw(float(mode[0]), sd, bounds[0], bounds[1], rng)])
    else:
        cand = mode + proposal.chol @ rng.standard_normal(mode.size)
    lq_cur = proposal.log_kernel(current)
    lq_cand = proposal.log_kernel(cand)
    lt_cand = float(target(cand))
    log_ratio = (lt_cand - lt_cur) + (lq_cur - lq_cand)
    if np.isfinite(lt_cand) and _log_uniform(rng) < log_ratio:
        return cand, True
    return current.copy(), False


def mh_independence_step(current, target, proposal, rng, bounds=None):
    """One independence Metropolis-Hastings step.

    Draws a candidate from N(mode, covariance) (truncated-renormalized to
    ``bounds`` when given, 1-D only) and accepts with probability
    min{1, [q(current)/q(candidate)] * [pi(candidate)/pi(current)]}.
    Returns (next_value, accepted).
    """
    mode, cov = proposal
    return _independence_step(current, target, _Proposal(mode, cov), rng, bounds=bounds)


def _log_uniform(rng):
    u = rng.random()
    return math.log(u) if u > 0.0 else -math.inf


def _mh_random_walk_step(current, target, rng, scale=RW_SCALE):
    """Symmetric Gaussian random-walk step (scalar or per-coordinate scale)."""
    current = np.atleast_1d(np.asarray(current, float))
    lt_cur = float(target(current))
    if not np.isfinite(lt_cur):
        raise NumericError("MH invariant violated: target non-finite at current state")
    cand = current + scale * rng.standard_normal(current.size)
    lt_cand = float(target(cand))
    if np.isfinite(lt_cand) and _log_uniform(rng) < lt_cand - lt_cur:
        return cand, True
    return current.copy(), False


# ---------------------------------------------------------------------------
# The Gibbs sampler
# ---------------------------------------------------------------------------

def _prior_precision(cov):
    factor = cho_factor(cov, lower=True, check_finite=False)
    return cho_solve(factor, np.eye(cov.shape[0]), check_finite=False)


class GibbsSampler:
    """Holds the packed data, proposal caches and RNG stream for one chain."""

    def __init__(self, data, config, rng=None):
        config = config.resolved(data)
        config.validate()
        self.config = config
        self.hyper = config.hyper
        self.family = get_family(config.family)
        self.error_model = config.error_model
        self.mean_fn = config.mean_fn
        self.packed = PackedData(data)
        self.data = list(data)
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.k = self.packed.w.shape[1] if self.packed.m else self.hyper.r - self.hyper.q
        if self.packed.m and self.k + self.hyper.q != self.hyper.r:
            raise ConfigError(
                f"beta prior has length {self.hyper.r} but data implies "
                f"{self.k} covariates + {self.hyper.q} latent effects"
            )
        for ind in self.data:
            self.family.validate_outcome(ind.outcome)
        self._alpha_prec = _prior_precision(self.hyper.alpha_cov)
        self._beta_prec = _prior_precision(self.hyper.beta_cov)
        self._sweep_count = 0
        self._cached_rho = None
        self._err_whiten = None
        self._x_mode = None
        self._proposals = {}
        self.accepts = {"x": 0, "alpha": 0, "beta": 0, "rho": 0}
        self.attempts = {"x": 0, "alpha": 0, "beta": 0, "rho": 0}

    # -- caches -------------------------------------------------------------

    def _error_cache(self, rho):
        if self._cached_rho != rho:
            self._err_whiten = self.packed.whiten(rho)
            self._cached_rho = rho
        return self._err_whiten

    # -- block targets ------------------------------------------------------

    def _x_target(self, alpha, beta, mu_x, sx_prec, sx_logdet, sigma2, rho, phi):
        packed = self.packed
        w_eta = packed.w @ beta[: self.k]
        beta1 = beta[self.k:]
        err_phi, inv_s2, logdet = self._error_cache(rho)
        d = packed.d
        family = self.family
        base = -0.5 * (packed.n * (LOG_2PI + math.log(sigma2)) + logdet + sx_logdet)
        mean_fn = self.mean_fn
        # the built-in logistic mean is separable in x: precompute the curve
        curve = expit((packed.t - alpha[0]) / alpha[1]) if mean_fn is growth_mean else None
        q = mu_x.size
        inv_sigma2 = 1.0 / sigma2
        if q == 1:
            mu0, sxp0, b1 = mu_x[0], sx_prec[0, 0], beta1[0]

        def target(xb):
            g = xb[:, 0:1] * curve if curve is not None else mean_fn(alpha, xb, packed.t)
            resid = (packed.y - g) * packed.mask
            rss = whitened_rss(resid, err_phi, inv_s2)
            if q == 1:
                x0 = xb[:, 0]
                eta = w_eta + x0 * b1
                dx = x0 - mu0
                quad = dx * dx * sxp0
            else:
                eta = w_eta + xb @ beta1
                dx = xb - mu_x
                quad = np.einsum("ij,jk,ik->i", dx, sx_prec, dx)
            ll = base - 0.5 * (rss * inv_sigma2 + quad) + family.loglik(d, eta, phi)
            return np.where(np.isfinite(ll), ll, -np.inf)

        return target

    def _alpha_target(self, x, sigma2, rho):
        packed = self.packed
        err_phi, inv_s2, logdet = self._error_cache(rho)
        prior_mean = self.hyper.alpha_mean
        prior_prec = self._alpha_prec
        base = -0.5 * (packed.total_obs * (LOG_2PI + math.log(sigma2)) + logdet.sum())

        if packed.total_obs == 0:
            def prior_target(alpha_vec):
                if not np.all(np.isfinite(alpha_vec)):
                    return -np.inf
                diff = alpha_vec - prior_mean
                return -0.5 * float(diff @ prior_prec @ diff)

            return prior_target

        fast = self.mean_fn is growth_mean
        x0 = x[:, 0:1]

        def target(alpha_vec):
            if not np.all(np.isfinite(alpha_vec)):
                return -np.inf
            if fast:
                if alpha_vec[1] == 0.0:
                    return -np.inf
                g = x0 * expit((packed.t - alpha_vec[0]) / alpha_vec[1])
            else:
                try:
                    g = self.mean_fn(alpha_vec, x, packed.t)
                except InvalidParameterError:
                    return -np.inf
            resid = (packed.y - g) * packed.mask
            rss = float(whitened_rss(resid, err_phi, inv_s2).sum())
            diff = alpha_vec - prior_mean
            ll = base - 0.5 * (rss / sigma2 + diff @ prior_prec @ diff)
            return ll if np.isfinite(ll) else -np.inf

        return target

    def _beta_target(self, x, phi):
        packed = self.packed
        prior_mean = self.hyper.beta_mean
        prior_prec = self._beta_prec
        family = self.family
        design = np.concatenate([packed.w, x], axis=1)

        def target(beta_vec):
            if not np.all(np.isfinite(beta_vec)):
                return -np.inf
            eta = design @ beta_vec
            ll = family.loglik(packed.d, eta, phi).sum()
            diff = beta_vec - prior_mean
            ll = ll - 0.5 * diff @ prior_prec @ diff
            return ll if np.isfinite(ll) else -np.inf

        return target

    def _rho_target(self, x, alpha, sigma2):
        packed = self.packed
        g = self.mean_fn(alpha, x, packed.t)
        resid = (packed.y - g) * packed.mask
        base = -0.5 * packed.total_obs * (LOG_2PI + math.log(sigma2))
        dt_prev = packed.dt_prev

        def target(rho_vec):
            r = float(np.atleast_1d(rho_vec)[0])
            if not (0.0 <= r <= RHO_MAX):
                return -np.inf
            err_phi = r ** dt_prev
            s2 = 1.0 - err_phi * err_phi
            logdet = float(np.sum(np.log(s2)))
            e = resid.copy()
            e[:, 1:] -= err_phi[:, 1:] * resid[:, :-1]
            rss = float(np.einsum("ij,ij,ij->", e, e, 1.0 / s2))
            ll = base - 0.5 * (logdet + rss / sigma2)
            return ll if np.isfinite(ll) else -np.inf

        return target

    # -- block updates ------------------------------------------------------

    def _update_x(self, state_arrays, mode_only=False):
        alpha, beta, mu_x, sigma_x, sigma2, rho, phi, x = state_arrays
        packed = self.packed
        m, q = x.shape
        if q == 1 and self.mean_fn is growth_mean:
            return self._update_x_separable(
                alpha, beta, mu_x, sigma_x, sigma2, rho, phi, x, mode_only=mode_only
            )
        sx_factor = cho_factor(sigma_x, lower=True, check_finite=False)
        sx_prec = cho_solve(sx_factor, np.eye(q), check_finite=False)
        sx_logdet = 2.0 * np.sum(np.log(np.diag(sx_factor[0])))
        target = self._x_target(alpha, beta, mu_x, sx_prec, sx_logdet, sigma2, rho, phi)

        # warm-start the mode search from the previous sweep's modes; the
        # proposal stays independent of the current latent values
        start = self._x_mode if self._x_mode is not None else x
        try:
            mode, hess, _, _ = batch_mode_hessian(target, start)
        except NumericError:
            mode, hess, _, _ = batch_mode_hessian(target, x)
        self._x_mode = mode
        if mode_only:
            return mode.copy()
        lt_cur = target(x)
        cov, prec, fallback = spd_covariance(hess)

        z = self.rng.standard_normal((m, q))
        cand = np.empty_like(x)
        lq_cur = np.zeros(m)
        lq_cand = np.zeros(m)
        lap = ~fallback
        if lap.any():
            if q == 1:
                sd = np.sqrt(cov[lap, 0, 0])
                cand[lap, 0] = mode[lap, 0] + sd * z[lap, 0]
            else:
                lower = np.linalg.cholesky(cov[lap])
                cand[lap] = mode[lap] + np.einsum("bij,bj->bi", lower, z[lap])
            d_cur = x[lap] - mode[lap]
            d_cand = cand[lap] - mode[lap]
            lq_cur[lap] = -0.5 * np.einsum("bi,bij,bj->b", d_cur, prec[lap], d_cur)
            lq_cand[lap] = -0.5 * np.einsum("bi,bij,bj->b", d_cand, prec[lap], d_cand)
        if fallback.any():
            cand[fallback] = x[fallback] + RW_SCALE * z[fallback]

        lt_cand = target(cand)
        log_ratio = (lt_cand - lt_cur) + (lq_cur - lq_cand)
        with np.errstate(divide="ignore"):
            log_u = np.log(self.rng.random(m))
        accept = np.isfinite(lt_cand) & (log_u < log_ratio)
        x_new = np.where(accept[:, None], cand, x)
        self.accepts["x"] += int(accept.sum())
        self.attempts["x"] += m
        return x_new

    def _update_x_separable(self, alpha, beta, mu_x, sigma_x, sigma2, rho, phi, x,
                            mode_only=False):
        """Latent updates for the built-in logistic mean with scalar latents.

        The mean is linear in x and whitening is linear, so the longitudinal
        term is an exact quadratic in x and the conditional mode and
        curvature come from analytic Newton iteration (no finite differences,
        no padded-array work per evaluation).  The curvature is strictly
        negative (quadratic plus prior plus concave GLM), so no ridge is
        needed.
        """
        packed = self.packed
        m = packed.m
        err_phi, inv_s2, logdet = self._error_cache(rho)
        curve = expit((packed.t - alpha[0]) / alpha[1]) * packed.mask
        # whiten the measurements and the unit curve once; rss(x) is then
        # a_quad x^2 - 2 b_quad x + c_quad per individual
        e_y = packed.y.copy()
        e_y[:, 1:] -= err_phi[:, 1:] * packed.y[:, :-1]
        e_c = curve.copy()
        e_c[:, 1:] -= err_phi[:, 1:] * curve[:, :-1]
        a_quad = np.einsum("ij,ij,ij->i", e_c, e_c, inv_s2)
        b_quad = np.einsum("ij,ij,ij->i", e_y, e_c, inv_s2)
        c_quad = np.einsum("ij,ij,ij->i", e_y, e_y, inv_s2)
        w_eta = packed.w @ beta[: self.k]
        b1 = float(beta[self.k])
        sxp = 1.0 / float(sigma_x[0, 0])
        mu0 = float(mu_x[0])
        inv_sigma2 = 1.0 / sigma2
        base = -0.5 * (
            packed.n * (LOG_2PI + math.log(sigma2)) + logdet + math.log(sigma_x[0, 0])
        )
        d = packed.d
        family = self.family

        def target(xv):
            eta = w_eta + b1 * xv
            dxv = xv - mu0
            ll = base - 0.5 * (
                (xv * (a_quad * xv - 2.0 * b_quad) + c_quad) * inv_sigma2 + sxp * dxv * dxv
            ) + family.loglik(d, eta, phi)
            return np.where(np.isfinite(ll), ll, -np.inf)

        def grad_hess(xv):
            eta = w_eta + b1 * xv
            g = (b_quad - a_quad * xv) * inv_sigma2 - sxp * (xv - mu0)
            h = -a_quad * inv_sigma2 - sxp
            if b1 != 0.0:
                g = g + b1 * family.eta_grad(d, eta, phi)
                h = h + b1 * b1 * family.eta_hess(eta, phi)
            return g, h

        start = self._x_mode[:, 0].copy() if self._x_mode is not None else x[:, 0].copy()
        fx = target(start)
        bad = ~np.isfinite(fx)
        if bad.any():
            start = np.where(bad, x[:, 0], start)
            fx = target(start)
        xm = start
        active = np.ones(m, bool)
        for _ in range(100):
            g, h = grad_hess(xm)
            with np.errstate(invalid="ignore"):
                active &= np.abs(g) >= 1e-6
            if not active.any():
                break
            step = np.where(active, g / np.maximum(-h, 1e-12), 0.0)
            step = np.where(np.isfinite(step), step, 0.0)
            lam = np.ones(m)
            cand = xm + step
            fc = target(cand)
            for _ in range(50):
                worse = active & (~np.isfinite(fc) | (fc < fx - 1e-12 * np.abs(fx)))
                if not worse.any():
                    break
                lam[worse] *= 0.5
                cand = xm + lam * step
                fc = target(cand)
            improved = active & np.isfinite(fc) & (fc >= fx - 1e-12 * np.abs(fx))
            xm = np.where(improved, cand, xm)
            fx = np.where(improved, fc, fx)
            active &= improved & (np.abs(lam * step) > 1e-12 * np.maximum(1.0, np.abs(xm)))
        mode = xm
        self._x_mode = mode[:, None].copy()
        if mode_only:
            return mode[:, None].copy()
        _, h = grad_hess(mode)
        neg_h = np.where(np.isfinite(h) & (h < 0.0), -h, sxp)
        lt_cur = target(x[:, 0])

        sd = np.sqrt(1.0 / neg_h)
        z = self.rng.standard_normal((m, 1))
        cand = mode + sd * z[:, 0]
        d_cur = x[:, 0] - mode
        d_cand = cand - mode
        lq_cur = -0.5 * d_cur * d_cur * neg_h
        lq_cand = -0.5 * d_cand * d_cand * neg_h
        lt_cand = target(cand)
        log_ratio = (lt_cand - lt_cur) + (lq_cur - lq_cand)
        log_u = np.log(self.rng.random(m))
        accept = np.isfinite(lt_cand) & (log_u < log_ratio)
        x_new = np.where(accept, cand, x[:, 0])[:, None]
        self.accepts["x"] += int(accept.sum())
        self.attempts["x"] += m
        return x_new

    def _newton_start(self, name, current):
        """State-independent starting point for the proposal mode search.

        Using a start that never depends on the block's own current value
        keeps the resulting Gaussian a genuine independence proposal (a
        function of the conditioning values only), so the Hastings ratio
        stays exact even when the optimizer stalls on a flat target.
        """
        if name == "rho":
            return np.array([0.5])
        if name == "beta":
            return np.zeros(self.hyper.r)
        if name == "alpha" and self.mean_fn is growth_mean and self.hyper.p == 2:
            if self.packed.m:
                spread = float(self.packed.t[self.packed.mask].max() - self.packed.t[self.packed.mask].min())
                return np.array([float(np.median(self.packed.t[self.packed.mask])),
                                 spread / 4.0 if spread > 0 else 1.0])
            return self.hyper.alpha_mean.copy()
        return None  # custom mean function: fall back to the current value

    def _mh_block(self, name, current, target, bounds=None):
        refresh = (
            name not in self._proposals
            or self._sweep_count % self.config.laplace_refresh == 0
        )
        if refresh:
            start = self._newton_start(name, current)
            if start is None:
                start = current
            try:
                self._proposals[name] = _Proposal(*laplace_proposal(target, start))
            except NumericError:
                self._proposals[name] = None  # random-walk fallback
        proposal = self._proposals[name]
        if proposal is None:
            new, accepted = _mh_random_walk_step(current, target, self.rng)
            self.accepts[name] += int(accepted)
            self.attempts[name] += 1
            return new
        new, accepted = _independence_step(current, target, proposal, self.rng, bounds=bounds)
        # symmetric local refinement keeps the block moving whenever the
        # cached proposal is mis-centered between refreshes
        scale = np.sqrt(np.diag(proposal.cov))
        new, accepted2 = _mh_random_walk_step(new, target, self.rng, scale=scale)
        self.accepts[name] += int(accepted) + int(accepted2)
        self.attempts[name] += 2
        return new

    # -- deterministic warm start ---------------------------------------------

    def _polish_block(self, name, current, target):
        start = self._newton_start(name, current)
        if start is None:
            start = current

        def batched(xb):
            return np.array([target(row) for row in xb])

        try:
            mode, _, f_mode, _ = batch_mode_hessian(batched, np.atleast_1d(start)[None, :])
        except NumericError:
            return current
        if np.all(np.isfinite(mode[0])) and f_mode[0] >= float(target(current)):
            return mode[0]
        return current

    def polish(self, state, rounds=2):
        """Deterministic coordinate-ascent warm start.

        Moves every updated block to (approximately) its conditional mode or
        mean so the chain starts inside each Laplace proposal's coverage; an
        independence sampler cannot leave a state its proposal assigns no
        mass to, so starting far out would freeze the block.  Consumes no
        randomness; respects config.update_blocks.
        """
        with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
            return self._polish(state, rounds)

    def _polish(self, state, rounds):
        blocks = self.config.update_blocks
        hyper = self.hyper
        packed = self.packed
        st = state.copy()
        if not packed.m:
            return st
        for _ in range(rounds):
            if "x" in blocks:
                st.x = self._update_x(
                    (st.alpha, st.beta, st.mu_x, st.sigma_x, st.sigma2_eps,
                     st.rho, st.phi, st.x),
                    mode_only=True,
                )
            if "alpha" in blocks:
                st.alpha = self._polish_block(
                    "alpha", st.alpha, self._alpha_target(st.x, st.sigma2_eps, st.rho)
                )
            if "beta" in blocks:
                st.beta = self._polish_block("beta", st.beta, self._beta_target(st.x, st.phi))
            if "mu_x" in blocks:
                q = hyper.q
                sx_factor = cho_factor(st.sigma_x, lower=True, check_finite=False)
                sx_prec = cho_solve(sx_factor, np.eye(q), check_finite=False)
                c_factor = cho_factor(hyper.mu_x_cov, lower=True, check_finite=False)
                c_prec = cho_solve(c_factor, np.eye(q), check_finite=False)
                prec = packed.m * sx_prec + c_prec
                b = sx_prec @ st.x.sum(axis=0) + c_prec @ hyper.mu_x_mean
                st.mu_x = np.linalg.solve(prec, b)
            if "sigma_x" in blocks:
                dx = st.x - st.mu_x
                scale = hyper.sigma_x_scale + dx.T @ dx
                denom = hyper.sigma_x_df + packed.m - hyper.q - 1.0
                if denom > 0:
                    st.sigma_x = scale / denom
            if "sigma_eps" in blocks and packed.total_obs:
                err_phi, inv_s2, _ = self._error_cache(st.rho)
                g = self.mean_fn(st.alpha, st.x, packed.t)
                resid = (packed.y - g) * packed.mask
                rss = float(whitened_rss(resid, err_phi, inv_s2).sum())
                shape = 0.5 * packed.total_obs + hyper.sigma_eps_shape
                st.sigma2_eps = (hyper.sigma_eps_rate + 0.5 * rss) / (shape - 1.0)
            if self.error_model == ErrorModel.CAR1 and "rho" in blocks:
                mode = self._polish_block(
                    "rho", np.array([st.rho]), self._rho_target(st.x, st.alpha, st.sigma2_eps)
                )
                st.rho = float(np.clip(mode[0], 0.0, RHO_MAX))
            if self.family.has_dispersion and "phi" in blocks:
                eta = packed.w @ st.beta[: self.k] + st.x @ st.beta[self.k:]
                ss = float(np.sum((packed.d - eta) ** 2))
                st.phi = (hyper.phi_rate + 0.5 * ss) / (hyper.phi_shape + 0.5 * packed.m - 1.0)
        return st

    # -- one sweep ------------------------------------------------------------

    def sweep(self, state):
        """One full Gibbs sweep; returns a new ParameterState."""
        with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
            return self._sweep(state)

    def _sweep(self, state):
        hyper = self.hyper
        packed = self.packed
        blocks = self.config.update_blocks
        alpha = state.alpha.copy()
        beta = state.beta.copy()
        mu_x = state.mu_x.copy()
        sigma_x = state.sigma_x.copy()
        sigma2 = float(state.sigma2_eps)
        rho = float(state.rho)
        phi = float(state.phi)
        x = state.x.copy()
        m = packed.m

        if m and "x" in blocks:
            x = self._update_x((alpha, beta, mu_x, sigma_x, sigma2, rho, phi, x))

        if "alpha" in blocks:
            alpha = self._mh_block("alpha", alpha, self._alpha_target(x, sigma2, rho))

        if "beta" in blocks:
            beta = self._mh_block("beta", beta, self._beta_target(x, phi))

        if m and "mu_x" in blocks:
            mu_x = draw_mu_x(x, sigma_x, hyper, self.rng)
        elif not m and "mu_x" in blocks:
            mu_x = hyper.mu_x_mean + np.linalg.cholesky(hyper.mu_x_cov) @ self.rng.standard_normal(hyper.q)

        if "sigma_x" in blocks:
            if m:
                sigma_x = draw_sigma_x(x, mu_x, hyper, self.rng)
            elif hyper.q == 1:
                sigma_x = np.array([[_draw_inv_gamma(
                    0.5 * hyper.sigma_x_df, 0.5 * float(hyper.sigma_x_scale[0, 0]), self.rng
                )]])
            else:
                sigma_x = np.atleast_2d(invwishart.rvs(
                    df=hyper.sigma_x_df, scale=hyper.sigma_x_scale, random_state=self.rng
                ))

        if "sigma_eps" in blocks:
            if packed.total_obs:
                err_phi, inv_s2, _ = self._error_cache(rho)
                with np.errstate(over="ignore", invalid="ignore"):
                    g = self.mean_fn(alpha, x, packed.t)
                resid = (packed.y - g) * packed.mask
                rss = float(whitened_rss(resid, err_phi, inv_s2).sum())
                shape = 0.5 * packed.total_obs + hyper.sigma_eps_shape
                rate = hyper.sigma_eps_rate + 0.5 * rss
            else:
                shape = hyper.sigma_eps_shape
                rate = hyper.sigma_eps_rate
            sigma2 = _draw_inv_gamma(shape, rate, self.rng)

        if self.error_model == ErrorModel.CAR1 and "rho" in blocks:
            if m:
                new_rho = self._mh_block(
                    "rho", np.array([rho]), self._rho_target(x, alpha, sigma2),
                    bounds=(0.0, RHO_MAX),
                )
                rho = float(new_rho[0])
            else:
                rho = float(self.rng.uniform(0.0, 1.0))

        if self.family.has_dispersion and "phi" in blocks:
            if m:
                eta = packed.w @ beta[: self.k] + x @ beta[self.k:]
                ss = float(np.sum((packed.d - eta) ** 2))
                phi = _draw_inv_gamma(
                    hyper.phi_shape + 0.5 * m, hyper.phi_rate + 0.5 * ss, self.rng
                )
            else:
                phi = _draw_inv_gamma(hyper.phi_shape, hyper.phi_rate, self.rng)

        self._sweep_count += 1
        return ParameterState(
            alpha=alpha, beta=beta, mu_x=mu_x, sigma_x=sigma_x,
            sigma2_eps=sigma2, rho=rho, phi=phi, x=x,
        )

    def acceptance_rates(self):
        out = {}
        for name, tries in self.attempts.items():
            if tries:
                out[name] = self.accepts[name] / tries
        return out


def gibbs_sweep(state, data, config, rng):
    """One full Gibbs sweep as a standalone call (fresh proposal caches)."""
    return GibbsSampler(data, config, rng=rng).sweep(state)


# ---------------------------------------------------------------------------
# Initial state and chain driver
# ---------------------------------------------------------------------------

def default_initial_state(data, config):
    """Scale-aware starting state.

    alpha starts at (median time, time range / 4) for the built-in 2-parameter
    mean (prior mean otherwise); each latent starts at the individual's
    maximum measurement (asymptote reading); variance components start at the
    matching sample variances; beta at zero; rho mid-range.
    """
    config = config.resolved(data)
    hyper = config.hyper
    family = get_family(config.family)
    p, q, r = hyper.p, hyper.q, hyper.r
    m = len(data)
    if m == 0:
        sigma_x = hyper.sigma_x_scale / max(hyper.sigma_x_df - q - 1.0, 1.0)
        sigma2 = hyper.sigma_eps_rate / max(hyper.sigma_eps_shape - 1.0, 1.0)
        return ParameterState(
            alpha=hyper.alpha_mean.copy(),
            beta=hyper.beta_mean.copy(),
            mu_x=hyper.mu_x_mean.copy(),
            sigma_x=sigma_x.copy(),
            sigma2_eps=float(sigma2),
            rho=0.5 if config.error_model == ErrorModel.CAR1 else 0.0,
            phi=1.0,
            x=np.empty((0, q)),
        )
    all_t = np.concatenate([ind.times for ind in data])
    if p == 2 and config.mean_fn is growth_mean:
        spread = float(all_t.max() - all_t.min())
        alpha0 = np.array([float(np.median(all_t)), spread / 4.0 if spread > 0 else 1.0])
    else:
        alpha0 = hyper.alpha_mean.copy()
    x0 = np.zeros((m, q))
    x0[:, 0] = [float(ind.y.max()) for ind in data]
    mu0 = x0.mean(axis=0)
    var0 = x0.var(axis=0, ddof=1) if m > 1 else np.zeros(q)
    sigma_x0 = np.diag(np.maximum(var0, 1e-2))
    resid = np.concatenate([
        ind.y - config.mean_fn(alpha0, x0[i], ind.times) for i, ind in enumerate(data)
    ])
    sigma2_0 = max(float(resid.var()), 1e-3)
    outcomes = np.array([ind.outcome for ind in data], float)
    phi0 = max(float(outcomes.var()), 1e-3) if family.has_dispersion else 1.0
    return ParameterState(
        alpha=alpha0,
        beta=np.zeros(r),
        mu_x=mu0,
        sigma_x=sigma_x0,
        sigma2_eps=sigma2_0,
        rho=0.5 if config.error_model == ErrorModel.CAR1 else 0.0,
        phi=phi0,
        x=x0,
    )


def run_chain(data, config):
    """Run the Metropolis-within-Gibbs chain and return the retained draws.

    Deterministic given (data, config.seed).  Raises ConfigError on schedule
    violations and NumericError when the initial state has a non-finite
    posterior; sweep failures abort with the iteration index attached.
    """
    data = list(data)
    config = config.resolved(data)
    config.validate()
    rng = np.random.default_rng(config.seed)
    sampler = GibbsSampler(data, config, rng=rng)
    state = config.init if config.init is not None else default_initial_state(data, config)
    state = state.copy()
    state.validate()
    if state.n_individuals != len(data):
        raise ConfigError(
            f"initial state has {state.n_individuals} latent rows for {len(data)} individuals"
        )
    if data:
        init_lp = joint_unnorm_logpost(
            data, state, config.hyper, family=config.family,
            error_model=config.error_model, mean_fn=config.mean_fn,
        )
        if not np.isfinite(init_lp):
            raise NumericError("non-finite joint posterior at the initial state")
        state = sampler.polish(state)

    retained = config.retained_count
    m, p, q, r = len(data), config.hyper.p, config.hyper.q, config.hyper.r
    out = {
        "iterations": np.zeros(retained, int),
        "alpha": np.zeros((retained, p)),
        "beta": np.zeros((retained, r)),
        "mu_x": np.zeros((retained, q)),
        "sigma_x": np.zeros((retained, q, q)),
        "sigma2_eps": np.zeros(retained),
        "rho": np.zeros(retained),
        "phi": np.zeros(retained),
        "x": np.zeros((retained, m, q)),
    }
    started = time.perf_counter()
    j = 0
    for sweep_idx in range(1, config.iterations + 1):
        try:
            state = sampler.sweep(state)
        except Exception as exc:
            raise NumericError(f"sweep {sweep_idx} failed: {exc}") from exc
        if sweep_idx > config.burn_in and (sweep_idx - config.burn_in) % config.thin == 0:
            out["iterations"][j] = sweep_idx
            out["alpha"][j] = state.alpha
            out["beta"][j] = state.beta
            out["mu_x"][j] = state.mu_x
            out["sigma_x"][j] = state.sigma_x
            out["sigma2_eps"][j] = state.sigma2_eps
            out["rho"][j] = state.rho
            out["phi"][j] = state.phi
            out["x"][j] = state.x
            j += 1
    elapsed = time.perf_counter() - started

    meta = {
        "seed": config.seed,
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "error_model": config.error_model,
        "family": get_family(config.family).name,
        "family_has_dispersion": get_family(config.family).has_dispersion,
        "wall_clock_s": elapsed,
    }
    for name, rate in sampler.acceptance_rates().items():
        meta[f"acceptance.{name}"] = rate
    return ChainStore(
        iterations=out["iterations"][:j],
        alpha=out["alpha"][:j],
        beta=out["beta"][:j],
        mu_x=out["mu_x"][:j],
        sigma_x=out["sigma_x"][:j],
        sigma2_eps=out["sigma2_eps"][:j],
        rho=out["rho"][:j],
        phi=out["phi"][:j],
        x=out["x"][:j],
        individual_ids=[ind.id for ind in data],
        meta=meta,
    )
