"""Model densities for the joint longitudinal / primary-outcome model.

The longitudinal submodel is a nonlinear mixed-effects model

    y_i = g(alpha, X_i; t_i) + eps_i,      eps_i ~ N(0, sigma2_eps * Sigma_i(rho)),

with per-individual latent effects X_i ~ N(mu_x, sigma_x) and an error
correlation matrix Sigma_i(rho) whose (a, b) entry is rho**|t_a - t_b|
(continuous-time AR(1); rho = 0 gives independent errors).  The primary
outcome D_i follows a canonical-link GLM whose linear predictor combines
fixed covariates W_i and the latent X_i:

    eta_i = beta0' W_i + beta1' X_i.

Everything here is a pure function of its inputs; the MCMC machinery lives
in :mod:`jointnlme.sampler`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, gammaln, multigammaln

from .exceptions import ConfigError, DataError, InvalidParameterError, NumericError

__all__ = [
    "Individual",
    "ParameterState",
    "Hyperparameters",
    "ErrorModel",
    "GlmFamily",
    "BERNOULLI",
    "POISSON",
    "GAUSSIAN",
    "get_family",
    "growth_mean",
    "build_error_cov",
    "longit_loglik",
    "glm_loglik",
    "joint_unnorm_logpost",
    "mvn_logpdf",
    "invgamma_logpdf",
    "invwishart_logpdf",
]

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Mean functions
# ---------------------------------------------------------------------------

def growth_mean(alpha, x, times):
    """Logistic growth curve, the built-in longitudinal mean function.

    Evaluates ``x * sigmoid((t - alpha[0]) / alpha[1])`` at each time point:
    a sigmoidal rise from 0 toward the per-individual asymptote ``x``, with
    midpoint ``alpha[0]`` and time scale ``alpha[1]`` (both in the units of
    ``times``).

    Parameters
    ----------
    alpha : array_like, shape (2,)
        Fixed effects (midpoint, scale); ``alpha[1]`` must be nonzero.
    x : scalar or array_like
        Random effect(s).  A scalar, a length-q vector (q = 1 here; only the
        first component is used), or a batch of shape (B, q) paired with
        ``times`` of shape (B, n).
    times : array_like
        Observation times, shape (n,) or (B, n).

    Returns
    -------
    ndarray with the broadcast shape of the inputs, one mean per time point.

    Custom mean functions passed to the samplers must follow the same
    contract: ``f(alpha, x, times)`` with x carrying the random effects on
    its last axis and broadcasting against ``times``.
    """
    alpha = np.asarray(alpha, float)
    a1, a2 = float(alpha[0]), float(alpha[1])
    if a2 == 0.0:
        raise InvalidParameterError("growth_mean: scale parameter alpha[1] must be nonzero")
    x = np.asarray(x, float)
    t = np.asarray(times, float)
    amp = x if x.ndim == 0 else x[..., 0]
    if amp.ndim > 0:
        amp = amp[..., None]
    return amp * expit((t - a1) / a2)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class Individual:
    """One subject: sparse longitudinal record plus primary outcome.

    times and y must have equal length n_i >= 1 with strictly increasing
    times.  covariates holds the k >= 1 fixed GLM covariates (by convention
    the first entry is the intercept constant 1).
    """

    id: str
    times: np.ndarray
    y: np.ndarray
    outcome: float
    covariates: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, float))
        self.y = np.atleast_1d(np.asarray(self.y, float))
        self.covariates = np.atleast_1d(np.asarray(self.covariates, float))
        if not str(self.id):
            raise DataError("individual id must be nonempty")
        if self.times.shape != self.y.shape or self.times.ndim != 1 or self.times.size < 1:
            raise DataError(
                f"individual {self.id!r}: times and y must be equal-length vectors, n >= 1"
            )
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.y))):
            raise DataError(f"individual {self.id!r}: non-finite time or measurement")
        if np.any(np.diff(self.times) <= 0):
            raise DataError(f"individual {self.id!r}: times must be strictly increasing")
        if self.covariates.size < 1:
            raise DataError(f"individual {self.id!r}: needs at least one covariate")

    @property
    def n_obs(self):
        return self.times.size


class ErrorModel:
    """Longitudinal error structure: independent or continuous-time AR(1)."""

    INDEPENDENT = "independent"
    CAR1 = "car1"

    _VALID = (INDEPENDENT, CAR1)

    @classmethod
    def validate(cls, kind):
        if kind not in cls._VALID:
            raise ConfigError(f"unknown error model {kind!r}; expected one of {cls._VALID}")
        return kind


@dataclass
class ParameterState:
    """One point in the joint parameter space.

    alpha : (p,) longitudinal fixed effects
    beta  : (r,) GLM coefficients, r = k + q (covariate block then latent block)
    mu_x  : (q,) random-effect mean
    sigma_x : (q, q) random-effect covariance, symmetric positive definite
    sigma2_eps : longitudinal error variance, > 0
    rho   : error autocorrelation in [0, 1); stays 0 under independent errors
    phi   : GLM dispersion, > 0 (fixed at 1 for Bernoulli/Poisson)
    x     : (m, q) latent effects, one row per individual in dataset order
    """

    alpha: np.ndarray
    beta: np.ndarray
    mu_x: np.ndarray
    sigma_x: np.ndarray
    sigma2_eps: float
    rho: float
    phi: float
    x: np.ndarray

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, float))
        self.beta = np.atleast_1d(np.asarray(self.beta, float))
        self.mu_x = np.atleast_1d(np.asarray(self.mu_x, float))
        self.sigma_x = np.atleast_2d(np.asarray(self.sigma_x, float))
        self.x = np.asarray(self.x, float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]

    @property
    def q(self):
        return self.mu_x.size

    @property
    def n_individuals(self):
        return self.x.shape[0]

    def validate(self):
        """Raise InvalidParameterError on any violated invariant."""
        q = self.q
        if self.sigma_x.shape != (q, q):
            raise InvalidParameterError(f"sigma_x must be {q}x{q}")
        if not np.allclose(self.sigma_x, self.sigma_x.T):
            raise InvalidParameterError("sigma_x must be symmetric")
        try:
            np.linalg.cholesky(self.sigma_x)
        except np.linalg.LinAlgError:
            raise InvalidParameterError("sigma_x must be positive definite") from None
        if not self.sigma2_eps > 0:
            raise InvalidParameterError("sigma2_eps must be > 0")
        if not (0.0 <= self.rho < 1.0):
            raise InvalidParameterError("rho must lie in [0, 1)")
        if not self.phi > 0:
            raise InvalidParameterError("phi must be > 0")
        if self.x.shape[1] != q:
            raise InvalidParameterError("x rows must have length q")
        return self

    def copy(self):
        return ParameterState(
            alpha=self.alpha.copy(),
            beta=self.beta.copy(),
            mu_x=self.mu_x.copy(),
            sigma_x=self.sigma_x.copy(),
            sigma2_eps=self.sigma2_eps,
            rho=self.rho,
            phi=self.phi,
            x=self.x.copy(),
        )


@dataclass(frozen=True)
class Hyperparameters:
    """Prior constants.

    alpha ~ N(alpha_mean, alpha_cov)
    mu_x ~ N(mu_x_mean, mu_x_cov)
    sigma_x ~ InverseWishart(sigma_x_df, sigma_x_scale)   [E sigma_x^{-1} = df * scale^{-1}]
    sigma2_eps ~ InverseGamma(sigma_eps_shape, rate=sigma_eps_rate)
    beta ~ N(beta_mean, beta_cov)
    phi ~ InverseGamma(phi_shape, rate=phi_rate)          [Gaussian outcomes only]
    rho ~ Uniform(0, 1)                                    [CAR(1) only]

    Inverse-gamma quantities are stored as (shape, rate), i.e. density
    proportional to x**-(shape+1) * exp(-rate / x) with mean rate/(shape-1).
    """

    alpha_mean: np.ndarray
    alpha_cov: np.ndarray
    mu_x_mean: np.ndarray
    mu_x_cov: np.ndarray
    sigma_x_df: float
    sigma_x_scale: np.ndarray
    sigma_eps_shape: float
    sigma_eps_rate: float
    beta_mean: np.ndarray
    beta_cov: np.ndarray
    phi_shape: float = 3.0
    phi_rate: float = 0.01

    def __post_init__(self):
        for name in ("alpha_mean", "mu_x_mean", "beta_mean"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))
        for name in ("alpha_cov", "mu_x_cov", "sigma_x_scale", "beta_cov"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), float)))
        self._check()

    def _check(self):
        p, q, r = self.alpha_mean.size, self.mu_x_mean.size, self.beta_mean.size
        pairs = [
            ("alpha_cov", self.alpha_cov, p),
            ("mu_x_cov", self.mu_x_cov, q),
            ("sigma_x_scale", self.sigma_x_scale, q),
            ("beta_cov", self.beta_cov, r),
        ]
        for name, mat, dim in pairs:
            if mat.shape != (dim, dim):
                raise ConfigError(f"{name} must be {dim}x{dim}, got {mat.shape}")
            try:
                np.linalg.cholesky(mat)
            except np.linalg.LinAlgError:
                raise ConfigError(f"{name} must be positive definite") from None
        if not self.sigma_x_df > q - 1:
            raise ConfigError("sigma_x_df must exceed q - 1")
        for name in ("sigma_eps_shape", "sigma_eps_rate", "phi_shape", "phi_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")

    @property
    def p(self):
        return self.alpha_mean.size

    @property
    def q(self):
        return self.mu_x_mean.size

    @property
    def r(self):
        return self.beta_mean.size

    @classmethod
    def defaults(cls, n_covariates=1, q=1, p=2):
        """Weakly informative defaults used throughout: diffuse N(0, 1000 I)
        on regression blocks, InverseWishart(6, 0.00498 I) on sigma_x and
        InverseGamma(3, rate 0.01) on variance scalars."""
        r = n_covariates + q
        return cls(
            alpha_mean=np.zeros(p),
            alpha_cov=1000.0 * np.eye(p),
            mu_x_mean=np.zeros(q),
            mu_x_cov=1000.0 * np.eye(q),
            sigma_x_df=6.0,
            sigma_x_scale=6.0 * 0.00083 * np.eye(q),
            sigma_eps_shape=3.0,
            sigma_eps_rate=0.01,
            beta_mean=np.zeros(r),
            beta_cov=1000.0 * np.eye(r),
            phi_shape=3.0,
            phi_rate=0.01,
        )


# ---------------------------------------------------------------------------
# GLM families (canonical link)
# ---------------------------------------------------------------------------

class GlmFamily:
    """Canonical-form exponential family for the primary outcome.

    loglik(d, eta, phi) evaluates log f(d | eta, phi) elementwise;
    eta_grad / eta_hess are its first and second derivatives in the linear
    predictor (used for analytic mode finding); sample(rng, eta, phi) draws
    outcomes for simulation.
    """

    def __init__(self, name, has_dispersion, loglik, eta_grad, eta_hess, sample,
                 validate_outcome=None):
        self.name = name
        self.has_dispersion = has_dispersion
        self._loglik = loglik
        self._eta_grad = eta_grad
        self._eta_hess = eta_hess
        self._sample = sample
        self._validate = validate_outcome

    def __repr__(self):
        return f"GlmFamily({self.name!r})"

    def validate_outcome(self, d):
        if self._validate is not None:
            self._validate(np.asarray(d, float))

    def loglik(self, d, eta, phi=1.0):
        return self._loglik(np.asarray(d, float), np.asarray(eta, float), phi)

    def eta_grad(self, d, eta, phi=1.0):
        return self._eta_grad(np.asarray(d, float), np.asarray(eta, float), phi)

    def eta_hess(self, eta, phi=1.0):
        return self._eta_hess(np.asarray(eta, float), phi)

    def sample(self, rng, eta, phi=1.0):
        return self._sample(rng, np.asarray(eta, float), phi)


def _bernoulli_check(d):
    if np.any((d != 0.0) & (d != 1.0)):
        raise DataError("Bernoulli outcomes must be 0 or 1")


def _bernoulli_ll(d, eta, phi):
    # d*eta - log(1 + exp(eta)), overflow-safe
    return d * eta - np.logaddexp(0.0, eta)


def _poisson_check(d):
    if np.any(d < 0) or np.any(d != np.floor(d)):
        raise DataError("Poisson outcomes must be nonnegative integers")


def _poisson_ll(d, eta, phi):
    return d * eta - np.exp(eta) - gammaln(d + 1.0)


def _gaussian_ll(d, eta, phi):
    return -0.5 * ((d - eta) ** 2 / phi + np.log(phi) + LOG_2PI)


BERNOULLI = GlmFamily(
    "bernoulli", False, _bernoulli_ll,
    lambda d, eta, phi: d - expit(eta),
    lambda eta, phi: -expit(eta) * expit(-eta),
    lambda rng, eta, phi: (rng.random(np.shape(eta)) < expit(eta)).astype(float),
    _bernoulli_check,
)
POISSON = GlmFamily(
    "poisson", False, _poisson_ll,
    lambda d, eta, phi: d - np.exp(eta),
    lambda eta, phi: -np.exp(eta),
    lambda rng, eta, phi: rng.poisson(np.exp(eta)).astype(float),
    _poisson_check,
)
GAUSSIAN = GlmFamily(
    "gaussian", True, _gaussian_ll,
    lambda d, eta, phi: (d - eta) / phi,
    lambda eta, phi: np.full(np.shape(eta), -1.0 / phi),
    lambda rng, eta, phi: rng.normal(eta, math.sqrt(phi)),
)

_FAMILIES = {f.name: f for f in (BERNOULLI, POISSON, GAUSSIAN)}


def get_family(name):
    if isinstance(name, GlmFamily):
        return name
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown GLM family {name!r}; expected one of {sorted(_FAMILIES)}") from None


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def build_error_cov(sigma2, rho, times):
    """Error covariance sigma2 * Sigma(rho) with Sigma[a, b] = rho**|t_a - t_b|.

    rho = 0 yields sigma2 * I (0**0 treated as 1 on the diagonal).  Raises for
    sigma2 <= 0, rho outside [0, 1), or duplicate times combined with rho > 0
    (which would make the matrix exactly singular).
    """
    if not np.isfinite(sigma2) or sigma2 <= 0:
        raise InvalidParameterError(f"sigma2 must be positive and finite, got {sigma2}")
    if not (0.0 <= rho < 1.0):
        raise InvalidParameterError(f"rho must lie in [0, 1), got {rho}")
    t = np.atleast_1d(np.asarray(times, float))
    if rho == 0.0:
        return sigma2 * np.eye(t.size)
    dt = np.abs(t[:, None] - t[None, :])
    off_diag = ~np.eye(t.size, dtype=bool)
    if np.any(dt[off_diag] == 0.0):
        raise NumericError("duplicate observation times make the error covariance singular")
    return sigma2 * rho ** dt


def mvn_logpdf(x, mean, cov):
    """Multivariate normal log-density via Cholesky factorization."""
    x = np.atleast_1d(np.asarray(x, float))
    mean = np.atleast_1d(np.asarray(mean, float))
    cov = np.atleast_2d(np.asarray(cov, float))
    diff = x - mean
    try:
        factor = cho_factor(cov, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"covariance factorization failed: {exc}") from None
    quad = diff @ cho_solve(factor, diff, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    return -0.5 * (diff.size * LOG_2PI + logdet + quad)


def invgamma_logpdf(x, shape, rate):
    """log density of InverseGamma(shape, rate): x**-(shape+1) exp(-rate/x)."""
    if x <= 0:
        return -np.inf
    return shape * math.log(rate) - gammaln(shape) - (shape + 1.0) * math.log(x) - rate / x


def invwishart_logpdf(s, df, scale):
    """log density of the inverse Wishart with df degrees of freedom and
    scale matrix `scale`, evaluated at the q x q SPD matrix s."""
    s = np.atleast_2d(np.asarray(s, float))
    scale = np.atleast_2d(np.asarray(scale, float))
    q = s.shape[0]
    sign_s, logdet_s = np.linalg.slogdet(s)
    sign_v, logdet_v = np.linalg.slogdet(scale)
    if sign_s <= 0:
        return -np.inf
    trace_term = np.trace(np.linalg.solve(s, scale))
    return (
        0.5 * df * logdet_v
        - 0.5 * df * q * math.log(2.0)
        - multigammaln(0.5 * df, q)
        - 0.5 * (df + q + 1.0) * logdet_s
        - 0.5 * trace_term
    )


def longit_loglik(ind, state, x_index=0, mean_fn=growth_mean):
    """Gaussian log-likelihood of one individual's longitudinal record.

    Evaluates log N(y_i; g(alpha, X_i; t_i), sigma2_eps * Sigma_i(rho)) where
    X_i = state.x[x_index].  Uses one triangular factorization of the error
    covariance; never inverts it explicitly.
    """
    cov = build_error_cov(state.sigma2_eps, state.rho, ind.times)
    g = mean_fn(state.alpha, state.x[x_index], ind.times)
    resid = ind.y - g
    try:
        factor = cho_factor(cov, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise NumericError("error covariance factorization failed", individual_id=ind.id) from None
    quad = resid @ cho_solve(factor, resid, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    return -0.5 * (ind.n_obs * LOG_2PI + logdet + quad)


def glm_loglik(ind, state, x_index=0, family=BERNOULLI):
    """Log-density of one individual's primary outcome under the GLM."""
    family = get_family(family)
    family.validate_outcome(ind.outcome)
    k = ind.covariates.size
    beta0, beta1 = state.beta[:k], state.beta[k:]
    if beta1.size != state.q:
        raise ConfigError(
            f"beta has length {state.beta.size}; expected {k} covariate "
            f"coefficients plus {state.q} latent coefficients"
        )
    eta = float(ind.covariates @ beta0 + state.x[x_index] @ beta1)
    return float(family.loglik(ind.outcome, eta, state.phi))


def joint_unnorm_logpost(
    data,
    state,
    hyper,
    family=BERNOULLI,
    error_model=ErrorModel.CAR1,
    mean_fn=growth_mean,
):
    """Unnormalized joint log-posterior over (X, alpha, beta, mu_x, sigma_x,
    sigma2_eps, rho, phi) given the data.

    Sum over individuals of longitudinal, GLM and latent-prior terms, plus the
    parameter log-priors.  With an empty dataset this reduces to the log-prior.
    """
    family = get_family(family)
    ErrorModel.validate(error_model)
    total = 0.0
    for i, ind in enumerate(data):
        total += longit_loglik(ind, state, x_index=i, mean_fn=mean_fn)
        total += glm_loglik(ind, state, x_index=i, family=family)
        total += mvn_logpdf(state.x[i], state.mu_x, state.sigma_x)
    total += mvn_logpdf(state.alpha, hyper.alpha_mean, hyper.alpha_cov)
    total += invgamma_logpdf(state.sigma2_eps, hyper.sigma_eps_shape, hyper.sigma_eps_rate)
    if error_model == ErrorModel.CAR1:
        if not (0.0 <= state.rho < 1.0):
            return -np.inf
        # uniform(0, 1) prior contributes 0
    total += mvn_logpdf(state.mu_x, hyper.mu_x_mean, hyper.mu_x_cov)
    total += invwishart_logpdf(state.sigma_x, hyper.sigma_x_df, hyper.sigma_x_scale)
    total += mvn_logpdf(state.beta, hyper.beta_mean, hyper.beta_cov)
    if family.has_dispersion:
        total += invgamma_logpdf(state.phi, hyper.phi_shape, hyper.phi_rate)
    return float(total)
