"""Cressie-Read power-divergence objective and estimating functions.

The generator with index ``lam`` (valid for lam > -1) is

    phi_lam(x) = (x^(lam+1) - x - lam*(x-1)) / (lam*(lam+1))

with the lam -> 0 limit x*log(x) - x + 1 handled by a dedicated branch.
phi_lam(0) = 1/(1+lam) follows from the formula itself, matching the
zero-count convention, and phi_lam(1) = 0 for every lam.

The weighted divergence between observed cluster counts and model
probabilities is

    d(beta) = (1/tau) * sum_hi w_hi m_hi sum_s pi_his(beta)
              * phi_lam(y_his / (m_hi pi_his(beta)))

and the per-cluster estimating function is

    u_hi(beta) = (w_hi / ((lam+1) m_hi^lam))
                 * DeltaStar(pi) diag(pi)^-(lam+1) y^(lam+1) (x) x_hi

whose sum over clusters equals -tau times the gradient of d (exactly;
the generator is normalized so phi''(1) = 1, leaving 1/tau as the only
scale constant between the two).  At lam = 0 the estimating function
reduces to w_hi (y*_hi - m_hi pi*_hi) (x) x_hi termwise; the dedicated
branch computes that closed form directly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import xlogy

from .data import ClusterRecord, SurveyDataset
from .errors import DataError
from .model import link_all


def phi(lam: float, x):
    """Cressie-Read generator phi_lam evaluated elementwise at x >= 0."""
    if lam <= -1.0:
        raise DataError("lambda must be > -1")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DataError("phi is only defined for nonnegative arguments")
    if lam == 0.0:
        out = xlogy(x, x) - x + 1.0
    else:
        out = (np.power(x, lam + 1.0) - x - lam * (x - 1.0)) / (lam * (lam + 1.0))
    if out.ndim == 0:
        return float(out)
    return out


def divergence(lam: float, data: SurveyDataset, beta_mat) -> float:
    """Weighted power divergence between observed counts and model fit."""
    probs = link_all(beta_mat, data.covariates)
    ratios = data.counts / (data.sizes[:, None] * probs)
    per_cluster = np.sum(probs * phi(lam, ratios), axis=1)
    return float(np.dot(data.weights * data.sizes, per_cluster) / data.tau)


def score_matrix(lam: float, data: SurveyDataset, beta_mat) -> np.ndarray:
    """Per-cluster estimating-function rows, shape n x d(k+1)."""
    if lam <= -1.0:
        raise DataError("lambda must be > -1")
    d = data.num_categories - 1
    probs = link_all(beta_mat, data.covariates)
    if lam == 0.0:
        core = data.weights[:, None] * (
            data.counts[:, :d] - data.sizes[:, None] * probs[:, :d]
        )
    else:
        # DeltaStar(pi) diag(pi)^-(lam+1) y^(lam+1) written as
        # (pi z)* - pi* (pi'z) with z_s = (y_s/pi_s)^(lam+1); forming z
        # through the ratio keeps zero counts exact when pi underflows.
        z = np.power(data.counts / probs, lam + 1.0)
        a = probs * z
        scale = data.weights / ((lam + 1.0) * np.power(data.sizes, lam))
        core = scale[:, None] * (a[:, :d] - probs[:, :d] * a.sum(axis=1, keepdims=True))
    n = data.n_clusters
    return np.einsum("nr,nj->nrj", core, data.covariates).reshape(n, -1)


def estimating_function_cluster(lam: float, record: ClusterRecord, beta_mat) -> np.ndarray:
    """Estimating-function contribution of a single cluster."""
    mini = SurveyDataset([record])
    return score_matrix(lam, mini, beta_mat)[0]


def score_total(lam: float, data: SurveyDataset, beta_mat) -> np.ndarray:
    """Sum of the per-cluster estimating functions."""
    return score_matrix(lam, data, beta_mat).sum(axis=0)


def objective_gradient(lam: float, data: SurveyDataset, beta_mat) -> np.ndarray:
    """Gradient of the divergence objective: -score_total / tau."""
    return -score_total(lam, data, beta_mat) / data.tau
