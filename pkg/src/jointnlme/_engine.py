"""Vectorized internals for the Gibbs sampler.

All per-individual quantities are packed into padded (m, nmax) arrays so the
latent-effect updates, likelihood sums and residual quadratic forms run as a
handful of batched numpy operations instead of Python loops.

The error correlation rho**|t_a - t_b| over ordered times is a Markov
(Ornstein-Uhlenbeck) kernel, so its inverse is tridiagonal and both the
log-determinant and the quadratic form reduce to an O(n) whitening recursion:

    e_1 = r_1,   e_j = r_j - rho**dt_j * r_{j-1},
    r' Sigma^{-1} r = sum_j e_j**2 / (1 - rho**(2 dt_j)),
    log|Sigma|     = sum_j log(1 - rho**(2 dt_j)),

with dt_j the gap to the previous observation (dt_1 = inf so the first term
degenerates correctly).  Padded slots carry dt = inf and zero residuals and
drop out of every sum.  The public reference implementations in
:mod:`jointnlme.model` factorize the dense covariance instead; tests pin the
two paths against each other.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import NumericError

LOG_2PI = math.log(2.0 * math.pi)

RIDGE_START = 1e-6
RIDGE_LIMIT = 1e3


class PackedData:
    """Padded-array view of a dataset.

    t, y : (m, nmax) padded with the row's last value / zeros
    mask : (m, nmax) validity flags
    dt_prev : (m, nmax) gap to the previous observation (inf at the first
              slot of each row and in padding)
    n : (m,) observation counts;  w : (m, k) covariates;  d : (m,) outcomes
    """

    def __init__(self, data):
        self.m = len(data)
        if self.m == 0:
            self.n = np.zeros(0, int)
            self.nmax = 0
            self.t = np.zeros((0, 0))
            self.y = np.zeros((0, 0))
            self.mask = np.zeros((0, 0), bool)
            self.dt_prev = np.zeros((0, 0))
            self.w = np.zeros((0, 1))
            self.d = np.zeros(0)
            self.total_obs = 0
            self.ids = []
            return
        self.n = np.array([ind.n_obs for ind in data], int)
        self.nmax = int(self.n.max())
        k = data[0].covariates.size
        self.t = np.zeros((self.m, self.nmax))
        self.y = np.zeros((self.m, self.nmax))
        self.mask = np.zeros((self.m, self.nmax), bool)
        self.dt_prev = np.full((self.m, self.nmax), np.inf)
        self.w = np.zeros((self.m, k))
        self.d = np.zeros(self.m)
        self.ids = [ind.id for ind in data]
        for i, ind in enumerate(data):
            n = ind.n_obs
            self.t[i, :n] = ind.times
            self.t[i, n:] = ind.times[-1]  # benign filler, masked out everywhere
            self.y[i, :n] = ind.y
            self.mask[i, :n] = True
            self.dt_prev[i, 1:n] = np.diff(ind.times)
            if ind.covariates.size != k:
                raise NumericError("all individuals must share the covariate dimension")
            self.w[i] = ind.covariates
            self.d[i] = ind.outcome
        self.total_obs = int(self.n.sum())

    def whiten(self, rho):
        """Whitening arrays for the correlation blocks at a given rho.

        Returns (phi, inv_s2, logdet): the lag-one regression weights
        rho**dt_prev, the reciprocal innovation variances 1/(1 - phi**2), and
        the per-individual log-determinants.  All padding-safe.
        """
        if self.m == 0:
            return np.zeros((0, 0)), np.zeros((0, 0)), np.zeros(0)
        phi = rho ** self.dt_prev  # rho**inf == 0 for rho in [0, 1)
        s2 = 1.0 - phi * phi
        if np.any(s2 <= 0.0):
            raise NumericError(f"error correlation degenerate at rho={rho}")
        logdet = np.sum(np.log(s2), axis=1)
        return phi, 1.0 / s2, logdet


def whitened_rss(resid, phi, inv_s2):
    """Per-individual r' Sigma^{-1} r from masked residuals, (m,)."""
    e = resid.copy()
    e[:, 1:] -= phi[:, 1:] * resid[:, :-1]
    return np.einsum("ij,ij,ij->i", e, e, inv_s2)


def longit_terms(packed, resid, phi, inv_s2, logdet, sigma2):
    """Per-individual Gaussian log-likelihoods from masked residuals and the
    whitening arrays of the current correlation parameter."""
    rss = whitened_rss(resid, phi, inv_s2)
    return -0.5 * (packed.n * (LOG_2PI + math.log(sigma2)) + logdet + rss / sigma2)


# ---------------------------------------------------------------------------
# Batched damped-Newton mode finding with finite-difference curvature
# ---------------------------------------------------------------------------

def _fd_grad_hess(f, x, fx, h):
    """Central finite-difference gradient and Hessian of a batched target.

    f maps (B, d) -> (B,);  h is the per-entry step, (B, d).
    """
    B, d = x.shape
    if d == 1:
        fp = f(x + h)
        fm = f(x - h)
        h0 = h[:, 0]
        grad = ((fp - fm) / (2.0 * h0))[:, None]
        hess = ((fp - 2.0 * fx + fm) / (h0 * h0))[:, None, None]
        return grad, hess
    grad = np.zeros((B, d))
    hess = np.zeros((B, d, d))
    fplus = np.zeros((B, d))
    fminus = np.zeros((B, d))
    for a in range(d):
        step = np.zeros_like(x)
        step[:, a] = h[:, a]
        fplus[:, a] = f(x + step)
        fminus[:, a] = f(x - step)
        grad[:, a] = (fplus[:, a] - fminus[:, a]) / (2.0 * h[:, a])
        hess[:, a, a] = (fplus[:, a] - 2.0 * fx + fminus[:, a]) / h[:, a] ** 2
    for a in range(d):
        for b in range(a + 1, d):
            sa = np.zeros_like(x)
            sa[:, a] = h[:, a]
            sb = np.zeros_like(x)
            sb[:, b] = h[:, b]
            fpp = f(x + sa + sb)
            fmm = f(x - sa - sb)
            cross = (
                fpp - fplus[:, a] - fplus[:, b] + 2.0 * fx - fminus[:, a] - fminus[:, b] + fmm
            ) / (2.0 * h[:, a] * h[:, b])
            hess[:, a, b] = cross
            hess[:, b, a] = cross
    return grad, hess


def _ascent_direction(grad, hess):
    """Newton ascent direction -H^{-1} g, regularized per batch item so the
    solve is always against a positive definite matrix."""
    B, d = grad.shape
    if d == 1:
        neg = -hess[:, 0, 0]
        with np.errstate(invalid="ignore"):
            denom = np.where(neg > RIDGE_START, neg, np.abs(hess[:, 0, 0]) + RIDGE_START)
            direction = grad[:, 0] / denom
        return np.where(np.isfinite(direction), direction, 0.0)[:, None]
    direction = np.zeros_like(grad)
    eye = np.eye(d)
    for i in range(B):
        if not (np.all(np.isfinite(hess[i])) and np.all(np.isfinite(grad[i]))):
            continue
        neg = -hess[i]
        tau = 0.0
        while True:
            try:
                chol = np.linalg.cholesky(neg + tau * eye)
                break
            except np.linalg.LinAlgError:
                tau = RIDGE_START if tau == 0.0 else 2.0 * tau
                if tau > RIDGE_LIMIT:
                    chol = None
                    break
        if chol is None:
            direction[i] = grad[i] / (np.abs(np.diagonal(hess[i])).max() + 1.0)
        else:
            z = np.linalg.solve(chol, grad[i])
            direction[i] = np.linalg.solve(chol.T, z)
    return direction


def batch_mode_hessian(f, x0, grad_tol=1e-6, max_iter=100, max_halvings=50, fd_scale=1e-4):
    """Find per-item modes of a batched log-target by damped Newton iteration.

    f : callable mapping (B, d) arrays to (B,) log-target values
    x0 : (B, d) starting points (must have finite targets)

    Returns (mode, hessian_at_mode, f_at_mode, f_at_start).  Iteration stops
    per item when the finite-difference gradient infinity-norm falls below
    grad_tol, the step collapses, or max_iter is reached.  A step landing on a
    non-finite target is halved, erroring after max_halvings halvings.
    """
    x = np.array(x0, float)
    if x.ndim == 1:
        x = x[None, :]
    B, d = x.shape
    fx = f(x)
    f_start = fx.copy()
    if not np.all(np.isfinite(fx)):
        raise NumericError("log-target not finite at the Laplace starting point")
    active = np.ones(B, bool)
    hess_out = None
    for _ in range(max_iter):
        h = fd_scale * np.maximum(1.0, np.abs(x))
        grad, hess = _fd_grad_hess(f, x, fx, h)
        # items that do not move afterwards keep this (current-point) Hessian
        hess_out = hess
        with np.errstate(invalid="ignore"):
            gnorm = np.max(np.abs(grad), axis=1)
            active &= gnorm >= grad_tol
        if not active.any():
            break
        direction = _ascent_direction(grad, hess)
        lam = np.ones(B)
        cand = x + lam[:, None] * direction
        fc = f(cand)
        for halving in range(max_halvings + 1):
            bad = active & ~np.isfinite(fc)
            if not bad.any():
                break
            if halving == max_halvings:
                raise NumericError(
                    "mode search failed: target non-finite after "
                    f"{max_halvings} step halvings"
                )
            lam[bad] *= 0.5
            cand = x + lam[:, None] * direction
            fc = f(cand)
        # damping: shrink steps that decrease the target (bounded backtracking)
        for _ in range(20):
            worse = active & (fc < fx - 1e-12 * np.abs(fx))
            if not worse.any():
                break
            lam[worse] *= 0.5
            cand = x + lam[:, None] * direction
            fc = f(cand)
        improved = active & np.isfinite(fc) & (fc >= fx - 1e-12 * np.abs(fx))
        exhausted = active & ~improved  # backtracked to nothing: local stall
        stalled = active & (
            np.max(np.abs(lam[:, None] * direction), axis=1)
            < 1e-10 * np.maximum(1.0, np.max(np.abs(x), axis=1))
        )
        x[improved] = cand[improved]
        fx[improved] = fc[improved]
        active &= ~(stalled | exhausted)
        if not active.any():
            break
    if hess_out is None or active.any():
        # never iterated, or some items moved on the final iteration
        h = fd_scale * np.maximum(1.0, np.abs(x))
        _, hess_out = _fd_grad_hess(f, x, fx, h)
    return x, hess_out, fx, f_start


def spd_covariance(hess):
    """Proposal covariances from negated Hessians with a doubling ridge.

    Returns (cov, prec, fallback): per-item covariance, its inverse (the
    ridged negated Hessian), and flags for items whose curvature could not be
    regularized within the ridge limit; those get a random-walk proposal
    instead of a Laplace one.
    """
    hess = np.asarray(hess, float)
    B, d, _ = hess.shape
    cov = np.zeros_like(hess)
    prec = np.zeros_like(hess)
    fallback = ~np.all(np.isfinite(hess.reshape(B, -1)), axis=1)
    if d == 1:
        neg = np.where(fallback, -1.0, -hess[:, 0, 0])
        need = neg <= 0.0
        tau = np.zeros(B)
        if need.any():
            tau[need] = RIDGE_START
            while True:
                still = neg + tau <= 0.0
                if not still.any():
                    break
                grow = still & (tau <= RIDGE_LIMIT)
                tau[grow] *= 2.0
                blown = still & (tau > RIDGE_LIMIT)
                if blown.any():
                    fallback |= blown
                    still &= ~blown
                if not still.any():
                    break
        denom = neg + tau
        ok = ~fallback
        cov[ok, 0, 0] = 1.0 / denom[ok]
        prec[ok, 0, 0] = denom[ok]
        return cov, prec, fallback
    eye = np.eye(d)
    for i in range(B):
        if fallback[i]:
            continue
        neg = -hess[i]
        tau = 0.0
        while True:
            try:
                chol = np.linalg.cholesky(neg + tau * eye)
                break
            except np.linalg.LinAlgError:
                tau = RIDGE_START if tau == 0.0 else 2.0 * tau
                if tau > RIDGE_LIMIT:
                    chol = None
                    break
        if chol is None:
            fallback[i] = True
            continue
        inv_chol = np.linalg.solve(chol, eye)
        c = inv_chol.T @ inv_chol
        cov[i] = 0.5 * (c + c.T)
        prec[i] = neg + tau * eye
    return cov, prec, fallback
