"""Wald-type tests, asymptotic power, noncentrality, sample-size planning.

All chi-square and normal kernels go through the regularized incomplete
gamma and error functions; no distribution objects are involved.

The test statistic for H0: M'beta = m is

    W_n = n (M'beta_hat - m)' [M' V_hat M]^-1 (M'beta_hat - m)

which is asymptotically chi-square with r = rank(M) degrees of freedom
under H0.  For beta0 off the null, the normal power approximation and
the closed-form sample-size rule use

    ell  = (M'beta0 - m)' (M'VM)^-1 (M'beta0 - m)
    sigma_w^2 = 4 ell
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, gammainccinv, ndtr, ndtri

from .errors import DataError, NumericalError

_RANK_TOL = 1e-10


def chi2_sf(x: float, df: int) -> float:
    """Upper-tail chi-square probability P(X > x)."""
    if x < 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))

def chi2_quantile(df: int, alpha: float) -> float:
    """Upper-alpha quantile: the x with P(X > x) = alpha."""
    if not 0 < alpha < 1:
        raise DataError("alpha must lie in (0, 1)")
    return float(2.0 * gammainccinv(df / 2.0, alpha))

def normal_cdf(x: float) -> float:
    return float(ndtr(x))

def normal_quantile(q: float) -> float:
    if not 0 < q < 1:
        raise DataError("quantile argument must lie in (0, 1)")
    return float(ndtri(q))


@dataclass
class LinearHypothesis:
    """Constraint M'beta = m with M of full column rank r."""

    M: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        self.m = np.atleast_1d(np.asarray(self.m, dtype=float)).ravel()
        if self.M.shape[1] != self.m.size:
            raise DataError(
                f"M has {self.M.shape[1]} columns but m has {self.m.size} entries"
            )
        if self.M.shape[1] > self.M.shape[0]:
            raise DataError("more constraints than parameters")
        singular_values = np.linalg.svd(self.M, compute_uv=False)
        rank = int(np.sum(singular_values > _RANK_TOL * max(1.0, singular_values[0])))
        if rank != self.M.shape[1]:
            raise DataError(f"M must have full column rank {self.M.shape[1]}, got {rank}")

    @property
    def r(self) -> int:
        return self.M.shape[1]

    @classmethod
    def single_coefficient(cls, p: int, index: int, value: float):
        """H0: beta[index] = value for one flattened coordinate."""
        column = np.zeros((p, 1))
        column[index, 0] = 1.0
        return cls(M=column, m=np.array([value]))


@dataclass
class WaldReport:
    statistic: float
    df: int
    p_value: float
    reject_at: dict


def _constrained_covariance(hyp: LinearHypothesis, v_mat) -> np.ndarray:
    inner = hyp.M.T @ np.asarray(v_mat, dtype=float) @ hyp.M
    cond = np.linalg.cond(inner)
    if not np.isfinite(cond) or cond > 1e12:
        rank = int(np.linalg.matrix_rank(inner))
        raise NumericalError(
            f"M'VM is singular (rank {rank} of {hyp.r}, condition estimate {cond:.3e})"
        )
    return inner


def wald_test(fit_result, hyp: LinearHypothesis, alpha: float = 0.05) -> WaldReport:
    """Wald-type test of H0: M'beta = m from a converged fit."""
    if not getattr(fit_result, "converged", True):
        raise NumericalError("refusing to test a non-converged fit")
    if not 0 < alpha < 1:
        raise DataError("alpha must lie in (0, 1)")
    beta = np.asarray(fit_result.beta, dtype=float).ravel()
    discrepancy = hyp.M.T @ beta - hyp.m
    inner = _constrained_covariance(hyp, fit_result.V_hat)
    statistic = float(
        fit_result.n_clusters * discrepancy @ np.linalg.solve(inner, discrepancy)
    )
    statistic = max(statistic, 0.0)
    p_value = chi2_sf(statistic, hyp.r)
    reject = {alpha: statistic > chi2_quantile(hyp.r, alpha)}
    return WaldReport(statistic=statistic, df=hyp.r, p_value=p_value, reject_at=reject)


def ell_star(beta1, hyp: LinearHypothesis, v_mat) -> float:
    """Quadratic discrepancy (M'beta1 - m)'(M'VM)^-1(M'beta1 - m)."""
    beta1 = np.asarray(beta1, dtype=float).ravel()
    q = hyp.M.T @ beta1 - hyp.m
    inner = _constrained_covariance(hyp, v_mat)
    return float(max(q @ np.linalg.solve(inner, q), 0.0))


def sigma_w_sq(beta0, hyp: LinearHypothesis, v_mat) -> float:
    """Asymptotic variance slope 4 * ell_star(beta0)."""
    return 4.0 * ell_star(beta0, hyp, v_mat)


def power_from_moments(ell: float, sigma_w: float, r: int, alpha: float, n: int) -> float:
    """Normal approximation to the power at n clusters."""
    if ell <= 0 or sigma_w <= 0:
        raise NumericalError(
            "power approximation undefined at the null; use the noncentral "
            "chi-square route for local alternatives"
        )
    sqrt_n = math.sqrt(n)
    arg = (chi2_quantile(r, alpha) / sqrt_n - sqrt_n * ell) / sigma_w
    return 1.0 - normal_cdf(arg)


def approximate_power(beta0, hyp: LinearHypothesis, v_mat, n: int, alpha: float) -> float:
    """Power of the Wald-type test at beta0 strictly off the null."""
    ell = ell_star(beta0, hyp, v_mat)
    return power_from_moments(ell, math.sqrt(4.0 * ell) if ell > 0 else 0.0, hyp.r, alpha, n)


def sample_size_from_moments(
    ell: float, sigma_w: float, r: int, alpha: float, target_power: float
) -> int:
    """Closed-form minimal n with approximate power >= target."""
    if ell <= 0 or sigma_w <= 0:
        raise NumericalError("sample size undefined when beta0 satisfies the null")
    if not 0 < target_power < 1:
        raise DataError("target power must lie in (0, 1)")
    a_term = sigma_w**2 * normal_quantile(1.0 - target_power) ** 2
    b_term = 2.0 * ell * chi2_quantile(r, alpha)
    n_star = (a_term + b_term + math.sqrt(a_term * (a_term + 2.0 * b_term))) / (
        2.0 * ell**2
    )
    return int(math.floor(n_star)) + 1


def required_sample_size(
    beta0, hyp: LinearHypothesis, v_mat, alpha: float, target_power: float
) -> int:
    """Minimal cluster count for the requested power against beta0."""
    ell = ell_star(beta0, hyp, v_mat)
    if ell <= 0:
        raise NumericalError("sample size undefined when beta0 satisfies the null")
    return sample_size_from_moments(ell, math.sqrt(4.0 * ell), hyp.r, alpha, target_power)


def noncentrality(hyp: LinearHypothesis, v_mat, d_vec) -> float:
    """Noncentrality d'M (M'VM)^-1 M'd for local drifts beta0 + d/sqrt(n)."""
    d_vec = np.asarray(d_vec, dtype=float).ravel()
    q = hyp.M.T @ d_vec
    inner = _constrained_covariance(hyp, v_mat)
    return float(max(q @ np.linalg.solve(inner, q), 0.0))


def noncentrality_from_delta(hyp: LinearHypothesis, v_mat, delta) -> float:
    """Noncentrality for drifts expressed directly in constraint space.

    A drift delta on M'beta corresponds to any d with M'd = delta, and
    the noncentrality reduces to delta'(M'VM)^-1 delta.
    """
    delta = np.asarray(delta, dtype=float).ravel()
    if delta.size != hyp.r:
        raise DataError(f"delta must have length {hyp.r}")
    inner = _constrained_covariance(hyp, v_mat)
    return float(max(delta @ np.linalg.solve(inner, delta), 0.0))
