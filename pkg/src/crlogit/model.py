"""Multinomial-logit kernel: probabilities, Delta matrix, Jacobian.

Category probabilities for a cluster with covariates x and coefficient
matrix B (d rows, one per non-baseline category; k+1 columns) are

    pi_r = exp(x'B_r) / (1 + sum_l exp(x'B_l)),   r = 1..d
    pi_{d+1} = 1 / (1 + sum_l exp(x'B_l))

The flattened parameter vector beta stacks the rows of B (all
coefficients of category 1, then category 2, ...).  That row-major
layout is fixed project-wide so hypothesis matrices address coordinates
deterministically.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

# Probabilities are floored here before any log or negative power is
# taken downstream; exact zeros are impossible for finite beta but can
# underflow for extreme linear predictors.
PROB_FLOOR = 1e-300


def beta_matrix(beta, num_categories: int, num_covariates: int) -> np.ndarray:
    """Coerce a flat vector or matrix into the d x (k+1) coefficient matrix."""
    d = num_categories - 1
    arr = np.asarray(beta, dtype=float)
    if arr.ndim == 1:
        if arr.size != d * num_covariates:
            raise DataError(
                f"beta has {arr.size} entries, expected {d}*{num_covariates}"
            )
        arr = arr.reshape(d, num_covariates)
    elif arr.shape != (d, num_covariates):
        raise DataError(f"beta has shape {arr.shape}, expected ({d},{num_covariates})")
    if not np.all(np.isfinite(arr)):
        raise DataError("beta contains non-finite entries")
    return arr


def flatten_beta(beta_mat) -> np.ndarray:
    """Row-major flattening, the inverse of beta_matrix on valid input."""
    return np.asarray(beta_mat, dtype=float).ravel()


def link(beta_mat, x) -> np.ndarray:
    """Category probabilities pi(beta, x), length d+1.

    Computed with max-subtraction so large linear predictors do not
    overflow; the result is floored at PROB_FLOOR.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("covariate vector contains non-finite entries")
    beta_mat = np.asarray(beta_mat, dtype=float)
    if not np.all(np.isfinite(beta_mat)):
        raise DataError("beta contains non-finite entries")
    eta = np.concatenate((beta_mat @ x, [0.0]))
    eta -= eta.max()
    expeta = np.exp(eta)
    probs = expeta / expeta.sum()
    return np.maximum(probs, PROB_FLOOR)


def link_all(beta_mat, X) -> np.ndarray:
    """Row-wise link over an n x (k+1) covariate matrix; returns n x (d+1)."""
    eta = np.hstack((X @ beta_mat.T, np.zeros((X.shape[0], 1))))
    eta -= eta.max(axis=1, keepdims=True)
    expeta = np.exp(eta)
    probs = expeta / expeta.sum(axis=1, keepdims=True)
    return np.maximum(probs, PROB_FLOOR)


def delta_matrix(pi) -> np.ndarray:
    """Delta(pi) = diag(pi) - pi pi'; symmetric, PSD, rows sum to zero."""
    pi = np.asarray(pi, dtype=float)
    return np.diag(pi) - np.outer(pi, pi)


def delta_star(pi) -> np.ndarray:
    """First d rows of Delta(pi): (I_d, 0) Delta(pi), shape d x (d+1)."""
    return delta_matrix(pi)[:-1, :]


def dpi_dbeta(beta_mat, x) -> np.ndarray:
    """Jacobian d pi'/d beta = (I_d, 0) Delta(pi) kron x.

    Shape d(k+1) x (d+1); rows follow the row-major beta layout, columns
    index response categories.  Column sums vanish since the
    probabilities sum to one.
    """
    pi = link(beta_mat, np.asarray(x, dtype=float))
    return np.kron(delta_star(pi), np.asarray(x, dtype=float).reshape(-1, 1))
