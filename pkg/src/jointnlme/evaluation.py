"""Model comparison (CPO / pseudomarginal likelihood) and classification
evaluation of the fitted joint model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .exceptions import ConfigError, DataError, NumericError
from .model import get_family, glm_loglik, growth_mean, longit_loglik, mvn_logpdf

__all__ = [
    "CpoReport",
    "ClassificationReport",
    "cpo_hat",
    "cpo_report",
    "lpml",
    "predict_outcome_prob",
    "classify",
    "roc_auc",
    "roc_points",
]


@dataclass
class CpoReport:
    """Per-individual conditional predictive ordinates and their aggregates.

    lpml_mean averages log CPO over individuals; lpml_sum totals it.  Larger
    is better under either normalization (they differ by the factor m).
    """

    ids: list
    cpo: np.ndarray
    lpml_mean: float
    lpml_sum: float


@dataclass
class ClassificationReport:
    """Confusion counts (rows: actual positive/negative; columns: predicted)
    and the derived rates.  'Positive' is outcome 1."""

    confusion: np.ndarray
    error_rate: float
    sensitivity: float
    specificity: float
    cutoff: float
    auc: float | None = None
    auc_sd: float | None = None


def _per_draw_loglik(ind, x_index, store, mean_fn, family):
    """(R,) log of f(y_i | X_i, theta) f(D_i | X_i, theta) f(X_i | theta) per draw."""
    family = get_family(family)
    R = len(store)
    out = np.empty(R)
    for r in range(R):
        state = store.state(r)
        ll = longit_loglik(ind, state, x_index=x_index, mean_fn=mean_fn)
        ll += glm_loglik(ind, state, x_index=x_index, family=family)
        ll += mvn_logpdf(state.x[x_index], state.mu_x, state.sigma_x)
        if not math.isfinite(ll):
            raise NumericError(f"non-finite log-density at retained draw {r}", individual_id=ind.id)
        out[r] = ll
    return out


def cpo_hat(ind, store, x_index=None, mean_fn=growth_mean, family="bernoulli"):
    """Monte Carlo conditional predictive ordinate for one individual.

    Harmonic mean of the per-draw joint density f(y_i|X_i,theta) f(D_i|X_i,theta)
    f(X_i|theta) over the retained draws, computed stably in log space:
    log CPO = log R - logsumexp(-loglik).
    """
    if len(store) < 1:
        raise DataError("cpo_hat needs at least one retained draw")
    if x_index is None:
        try:
            x_index = store.individual_ids.index(ind.id)
        except ValueError:
            raise DataError(f"individual {ind.id!r} not present in the chain") from None
    ll = _per_draw_loglik(ind, x_index, store, mean_fn, family)
    log_cpo = math.log(len(store)) - logsumexp(-ll)
    return float(math.exp(log_cpo))


def cpo_report(data, store, mean_fn=growth_mean, family="bernoulli"):
    """CPO for every individual plus both LPML normalizations."""
    cpos = np.array([
        cpo_hat(ind, store, x_index=i, mean_fn=mean_fn, family=family)
        for i, ind in enumerate(data)
    ])
    mean_term, sum_term = lpml(cpos)
    return CpoReport(ids=[ind.id for ind in data], cpo=cpos,
                     lpml_mean=mean_term, lpml_sum=sum_term)


def lpml(cpos):
    """Log pseudomarginal likelihood of a CPO vector.

    Returns (mean_scale, sum_scale): the average and the total of log CPO.
    Model comparisons must use matching normalizations; with equal m the
    ordering between two models is identical under both.
    """
    cpos = np.asarray(cpos, float)
    if np.any(cpos <= 0) or not np.all(np.isfinite(cpos)):
        raise DataError("CPO values must be positive and finite")
    logs = np.log(cpos)
    return float(logs.mean()), float(logs.sum())


def predict_outcome_prob(ind, store, x_index=None):
    """Posterior-mean probability of outcome 1 under the Bernoulli GLM.

    Averages the logistic probability over retained draws, pairing each
    draw's coefficients with the same draw's latent effect for the
    individual.
    """
    if store.meta.get("family", "bernoulli") != "bernoulli":
        raise ConfigError("outcome probabilities require the Bernoulli family")
    if x_index is None:
        try:
            x_index = store.individual_ids.index(ind.id)
        except ValueError:
            raise DataError(f"individual {ind.id!r} not present in the chain") from None
    k = ind.covariates.size
    eta = store.beta[:, :k] @ ind.covariates + np.einsum(
        "rq,rq->r", store.beta[:, k:], store.x[:, x_index, :]
    )
    return float(expit(eta).mean())


def classify(probs, labels, cutoff=0.5):
    """Confusion matrix and rates at a probability cutoff.

    Predicted positive iff prob >= cutoff (ties go to the positive class).
    sensitivity = correctly predicted positives / actual positives;
    specificity = correctly predicted negatives / actual negatives.
    """
    probs = np.asarray(probs, float)
    labels = np.asarray(labels, float)
    if probs.shape != labels.shape or probs.ndim != 1:
        raise DataError("probs and labels must be equal-length vectors")
    if np.any((labels != 0) & (labels != 1)):
        raise DataError("labels must be 0 or 1")
    pred = probs >= cutoff
    actual = labels == 1
    tp = int(np.sum(actual & pred))
    fn = int(np.sum(actual & ~pred))
    fp = int(np.sum(~actual & pred))
    tn = int(np.sum(~actual & ~pred))
    n_pos = tp + fn
    n_neg = fp + tn
    if n_pos == 0:
        raise DataError("sensitivity undefined: no actual positives")
    if n_neg == 0:
        raise DataError("specificity undefined: no actual negatives")
    confusion = np.array([[tp, fn], [fp, tn]])
    return ClassificationReport(
        confusion=confusion,
        error_rate=(fn + fp) / labels.size,
        sensitivity=tp / n_pos,
        specificity=tn / n_neg,
        cutoff=float(cutoff),
    )


def roc_auc(probs, labels):
    """Area under the ROC curve and its standard deviation.

    AUC by the Mann-Whitney pair-counting identity (ties count 1/2); the
    standard deviation uses the Hanley-McNeil binormal approximation, which
    is itself an approximation to the sampling SD.
    """
    probs = np.asarray(probs, float)
    labels = np.asarray(labels, float)
    pos = probs[labels == 1]
    neg = probs[labels == 0]
    n1, n0 = pos.size, neg.size
    if n1 == 0 or n0 == 0:
        raise DataError("AUC requires both classes present")
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    auc = (greater + 0.5 * ties) / (n1 * n0)
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc ** 2 / (1.0 + auc)
    var = (
        auc * (1.0 - auc)
        + (n1 - 1.0) * (q1 - auc ** 2)
        + (n0 - 1.0) * (q2 - auc ** 2)
    ) / (n1 * n0)
    return float(auc), float(math.sqrt(max(var, 0.0)))


def roc_points(probs, labels):
    """Full ROC point set for plotting: (false positive rate, true positive
    rate) pairs swept over thresholds from above-max down to below-min."""
    probs = np.asarray(probs, float)
    labels = np.asarray(labels, float)
    pos = labels == 1
    neg = ~pos
    n1 = int(pos.sum())
    n0 = int(neg.sum())
    if n1 == 0 or n0 == 0:
        raise DataError("ROC requires both classes present")
    thresholds = np.concatenate([[np.inf], np.unique(probs)[::-1]])
    points = np.empty((thresholds.size, 2))
    for j, thr in enumerate(thresholds):
        pred = probs >= thr
        points[j, 0] = np.sum(pred & neg) / n0
        points[j, 1] = np.sum(pred & pos) / n1
    return points
