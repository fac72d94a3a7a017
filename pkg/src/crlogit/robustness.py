"""Influence-function diagnostics for the minimum-divergence estimator.

Contaminating the distribution of one cluster (h, i) with a point mass
that puts all m_hi units in category s shifts the estimator, to first
order in the contamination fraction, by

    IF = Psi^-1 u_star
    u_star = (w m / (lambda + 1)) * pi_s^-lambda * (t_star - pi_star) (x) x
    Psi    = sum over clusters of w m Delta(pi_star) (x) x x'

where t is the indicator vector of category s and (x) is the Kronecker
product.  Psi is lambda-free and equals n times the bread matrix of the
sandwich estimator.  The quadratic (second-order) influence of the Wald
statistic for H0: M'beta = m evaluated on the null is

    IF2 = 2 IF' M (M'VM)^-1 M' IF
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SurveyDataset
from .errors import DataError, NumericalError
from .estimator import COND_LIMIT, g_hat, j_hat, sandwich
from .inference import LinearHypothesis, _constrained_covariance
from .model import beta_matrix, link


@dataclass(frozen=True)
class ContaminationPoint:
    """Target of a point-mass contamination.

    `category` is 1-based and refers to the count column y{category}.
    """

    stratum: int
    cluster: int
    category: int

    def indicator(self, num_categories: int) -> np.ndarray:
        """One-hot vector t over the d+1 categories."""
        if not 1 <= self.category <= num_categories:
            raise DataError(
                f"category must lie in 1..{num_categories}, got {self.category}"
            )
        t = np.zeros(num_categories)
        t[self.category - 1] = 1.0
        return t


@dataclass
class InfluenceReport:
    point: ContaminationPoint
    lam: float
    if_beta: np.ndarray
    psi: np.ndarray
    if2_wald: float | None


def score_perturbation(data: SurveyDataset, beta, lam: float,
                       point: ContaminationPoint) -> np.ndarray:
    """The vector u_star for the given contamination target.

    Because t is a one-hot indicator, t^(lambda+1) = t for every
    lambda, and Delta_star(pi) diag^-(lambda+1)(pi) t collapses to
    pi_s^-lambda (t_star - pi_star).
    """
    beta_mat = beta_matrix(beta, data.num_categories, data.num_covariates)
    record = data.records[data.find(point.stratum, point.cluster)]
    t = point.indicator(data.num_categories)
    s = point.category - 1
    pi = link(beta_mat, record.covariates)
    scale = record.weight * record.size / (lam + 1.0) * pi[s] ** (-lam)
    return np.kron(scale * (t[:-1] - pi[:-1]), record.covariates)


def psi_matrix(data: SurveyDataset, beta) -> np.ndarray:
    """Sensitivity matrix Psi = n * J_hat; lambda plays no role."""
    beta_mat = beta_matrix(beta, data.num_categories, data.num_covariates)
    return data.n_clusters * j_hat(data, beta_mat)


def _solve_psi(psi: np.ndarray, u_star: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(psi)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericalError(f"Psi is ill-conditioned (condition estimate {cond:.3e})")
    return np.linalg.solve(psi, u_star)


def influence_vector(data: SurveyDataset, beta, lam: float,
                     point: ContaminationPoint) -> np.ndarray:
    """First-order shift of beta_hat per unit contamination fraction."""
    if lam <= -1:
        raise DataError("lambda must be greater than -1")
    psi = psi_matrix(data, beta)
    return _solve_psi(psi, score_perturbation(data, beta, lam, point))


def influence2_wald(if_beta, hyp: LinearHypothesis, v_mat) -> float:
    """Second-order influence of the Wald statistic on the null."""
    if_beta = np.asarray(if_beta, dtype=float).ravel()
    q = hyp.M.T @ if_beta
    inner = _constrained_covariance(hyp, v_mat)
    return float(2.0 * q @ np.linalg.solve(inner, q))


def influence(data: SurveyDataset, beta, lam: float, point: ContaminationPoint,
              hyp: LinearHypothesis | None = None,
              v_mat=None) -> InfluenceReport:
    """Influence diagnostics at `beta`, optionally for a Wald test.

    When a hypothesis is supplied and no covariance is passed in, the
    sandwich covariance is recomputed from the data at `beta`.
    """
    if lam <= -1:
        raise DataError("lambda must be greater than -1")
    psi = psi_matrix(data, beta)
    if_beta = _solve_psi(psi, score_perturbation(data, beta, lam, point))
    if2 = None
    if hyp is not None:
        if v_mat is None:
            beta_mat = beta_matrix(beta, data.num_categories, data.num_covariates)
            v_mat = sandwich(j_hat(data, beta_mat), g_hat(data, beta_mat))
        if2 = influence2_wald(if_beta, hyp, v_mat)
    return InfluenceReport(point=point, lam=lam, if_beta=if_beta, psi=psi,
                           if2_wald=if2)
