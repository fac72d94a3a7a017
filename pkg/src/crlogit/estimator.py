"""Minimum power-divergence fitting and the sandwich covariance.

The solver is damped Newton on the divergence objective: the gradient
comes from the estimating equations, the Hessian from symmetric finite
differences of that gradient, and steps are backtracked on the objective
value.  Non-convergence is a reportable state on the result, not an
exception, so simulation harnesses can tally it.

The covariance pieces follow the usual sandwich construction:

    J_hat = (1/n) sum_hi w m Delta(pi*) (x) x x'
    G_hat = (1/n) sum_hi (u_hi - u_bar)(u_hi - u_bar)'
    V_hat = J_hat^-1 G_hat J_hat^-1

where the u_hi in G_hat are by default the lam = 0 score contributions
w (y* - m pi*) (x) x regardless of the fitting lambda (``g_score="kl"``);
``g_score="lambda"`` switches to the fitted-lambda estimating functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SurveyDataset
from .divergence import divergence, score_matrix, score_total
from .errors import DataError, NumericalError
from .model import beta_matrix, flatten_beta, link_all

COND_LIMIT = 1e12
_SEPARATION_NORM = 30.0


@dataclass
class FitConfig:
    """Solver settings; defaults follow the package-wide conventions."""

    lam: float = 0.0
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    shrink: float = 0.5
    min_step: float = 1e-12
    init: object = "pmle_first"
    g_score: str = "kl"

    def __post_init__(self):
        if self.lam <= -1.0:
            raise DataError("lambda must be > -1")
        if self.max_iterations < 1:
            raise DataError("max_iterations must be >= 1")
        if self.gradient_tolerance <= 0 or self.min_step <= 0:
            raise DataError("tolerances must be positive")
        if not 0 < self.shrink < 1:
            raise DataError("shrink must lie in (0, 1)")
        if isinstance(self.init, str):
            if self.init not in ("zeros", "pmle_first"):
                raise DataError(f"unknown init {self.init!r}")
        if self.g_score not in ("kl", "lambda"):
            raise DataError(f"unknown g_score {self.g_score!r}")


@dataclass
class FitResult:
    beta_hat: np.ndarray
    lam: float
    score_norm: float
    objective: float
    J_hat: np.ndarray
    G_hat: np.ndarray
    V_hat: np.ndarray
    n_clusters: int
    converged: bool
    iterations: int
    warnings: list = field(default_factory=list)

    @property
    def beta(self) -> np.ndarray:
        """Row-major flattened coefficient vector."""
        return flatten_beta(self.beta_hat)


def j_hat(data: SurveyDataset, beta_mat) -> np.ndarray:
    """Information-type matrix (1/n) sum w m Delta(pi*) (x) x x'."""
    d = data.num_categories - 1
    probs = link_all(np.asarray(beta_mat, dtype=float), data.covariates)
    pstar = probs[:, :d]
    dstar = -pstar[:, :, None] * pstar[:, None, :]
    idx = np.arange(d)
    dstar[:, idx, idx] += pstar
    wm = data.weights * data.sizes
    mat = np.einsum("n,nrs,nj,nl->rjsl", wm, dstar, data.covariates, data.covariates)
    p = d * data.num_covariates
    mat = mat.reshape(p, p) / data.n_clusters
    return (mat + mat.T) / 2.0


def g_hat(data: SurveyDataset, beta_mat, lam: float = 0.0, g_score: str = "kl") -> np.ndarray:
    """Centered outer-product score covariance (1/n) sum (u - u_bar)(u - u_bar)'."""
    score_lam = 0.0 if g_score == "kl" else lam
    u = score_matrix(score_lam, data, np.asarray(beta_mat, dtype=float))
    centered = u - u.mean(axis=0)
    mat = centered.T @ centered / data.n_clusters
    return (mat + mat.T) / 2.0


def sandwich(j_mat, g_mat) -> np.ndarray:
    """V = J^-1 G J^-1 via linear solves, symmetrized."""
    j_mat = np.asarray(j_mat, dtype=float)
    cond = np.linalg.cond(j_mat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericalError(f"J is ill-conditioned (condition estimate {cond:.3e})")
    half = np.linalg.solve(j_mat, np.asarray(g_mat, dtype=float))
    v = np.linalg.solve(j_mat, half.T).T
    return (v + v.T) / 2.0


def _fd_hessian(lam: float, data: SurveyDataset, beta_flat: np.ndarray) -> np.ndarray:
    """Symmetric finite differences of the objective gradient."""
    d1, k1 = data.num_categories, data.num_covariates
    p = beta_flat.size
    hess = np.empty((p, p))
    for i in range(p):
        h = 1e-6 * (1.0 + abs(beta_flat[i]))
        up = beta_flat.copy()
        dn = beta_flat.copy()
        up[i] += h
        dn[i] -= h
        g_up = -score_total(lam, data, up.reshape(d1 - 1, k1)) / data.tau
        g_dn = -score_total(lam, data, dn.reshape(d1 - 1, k1)) / data.tau
        hess[:, i] = (g_up - g_dn) / (2.0 * h)
    return (hess + hess.T) / 2.0


def _line_search(lam, data, beta_flat, direction, f0, g0, config):
    """Backtracking with an Armijo decrease test; returns (new_beta, f) or None."""
    d1, k1 = data.num_categories, data.num_covariates
    slope = float(np.dot(g0, direction))
    step = 1.0
    while step >= config.min_step:
        trial = beta_flat + step * direction
        f_trial = divergence(lam, data, trial.reshape(d1 - 1, k1))
        # Strict decrease: once the predicted reduction drops below float
        # resolution an equal objective would otherwise be "accepted"
        # forever without progress.
        if np.isfinite(f_trial) and f_trial < f0 and f_trial <= f0 + 1e-4 * step * slope:
            return trial, f_trial
        step *= config.shrink
    return None


def _minimize(lam, data: SurveyDataset, beta_flat, config: FitConfig):
    """Damped Newton iteration; returns (beta, iterations, converged, score_norm, objective)."""
    d1, k1 = data.num_categories, data.num_covariates
    beta_flat = np.array(beta_flat, dtype=float)
    f_val = divergence(lam, data, beta_flat.reshape(d1 - 1, k1))
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        score = score_total(lam, data, beta_flat.reshape(d1 - 1, k1))
        score_norm = float(np.max(np.abs(score)))
        if score_norm <= config.gradient_tolerance:
            return beta_flat, iterations - 1, True, score_norm, f_val
        grad = -score / data.tau
        hess = _fd_hessian(lam, data, beta_flat)
        try:
            direction = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            direction = -grad
        if not np.all(np.isfinite(direction)) or float(np.dot(grad, direction)) >= 0:
            direction = -grad
        found = _line_search(lam, data, beta_flat, direction, f_val, grad, config)
        if found is None and not np.array_equal(direction, -grad):
            found = _line_search(lam, data, beta_flat, -grad, f_val, grad, config)
        if found is None:
            # Near the optimum the objective decrease can fall below float
            # resolution and backtracking rejects every step; accept a full
            # step anyway if it still shrinks the score norm.
            trial = beta_flat + direction
            trial_score = score_total(lam, data, trial.reshape(d1 - 1, k1))
            if float(np.max(np.abs(trial_score))) < 0.9 * score_norm:
                beta_flat = trial
                f_val = divergence(lam, data, beta_flat.reshape(d1 - 1, k1))
                continue
            return beta_flat, iterations, False, score_norm, f_val
        beta_flat, f_val = found
    score = score_total(lam, data, beta_flat.reshape(d1 - 1, k1))
    score_norm = float(np.max(np.abs(score)))
    converged = score_norm <= config.gradient_tolerance
    return beta_flat, iterations, converged, score_norm, f_val


def _initial_beta(data: SurveyDataset, config: FitConfig) -> np.ndarray:
    p = (data.num_categories - 1) * data.num_covariates
    if isinstance(config.init, str):
        if config.init == "zeros" or config.lam == 0.0:
            return np.zeros(p)
        # pmle_first: warm-start from the lam = 0 solution.
        pmle, _, _, _, _ = _minimize(0.0, data, np.zeros(p), config)
        return pmle
    init = np.asarray(config.init, dtype=float).ravel()
    if init.size != p:
        raise DataError(f"init vector has {init.size} entries, expected {p}")
    return init


def fit(data: SurveyDataset, config: FitConfig = None) -> FitResult:
    """Solve for the minimum power-divergence estimate and its sandwich pieces.

    Parameters
    ----------
    data : SurveyDataset
    config : FitConfig, optional
        Defaults to lam = 0 with pmle_first initialization.

    Returns
    -------
    FitResult
        Carries the estimate, convergence state, and J/G/V matrices
        evaluated at the final iterate.

    Raises
    ------
    DataError
        Too few informative clusters for the parameter count.
    NumericalError
        Rank-deficient J_hat at the solution.
    """
    config = config or FitConfig()
    d = data.num_categories - 1
    p = d * data.num_covariates
    informative = int(np.sum((data.weights > 0) & (data.sizes > 0)))
    if informative < p:
        raise DataError(
            f"only {informative} informative clusters for {p} parameters"
        )
    beta0 = _initial_beta(data, config)
    beta_flat, iterations, converged, score_norm, objective = _minimize(
        config.lam, data, beta0, config
    )
    beta_mat = beta_matrix(beta_flat, data.num_categories, data.num_covariates)
    jmat = j_hat(data, beta_mat)
    cond = np.linalg.cond(jmat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        eigvals, eigvecs = np.linalg.eigh(jmat)
        null_dir = eigvecs[:, int(np.argmin(np.abs(eigvals)))]
        raise NumericalError(
            "J_hat is rank-deficient; null direction approximately "
            + np.array2string(null_dir, precision=4)
        )
    gmat = g_hat(data, beta_mat, lam=config.lam, g_score=config.g_score)
    vmat = sandwich(jmat, gmat)
    warnings = []
    if float(np.max(np.abs(beta_flat))) > _SEPARATION_NORM:
        warnings.append("possible separation: coefficient magnitudes are extreme")
    if not converged:
        warnings.append("solver did not reach the gradient tolerance")
    return FitResult(
        beta_hat=beta_mat,
        lam=config.lam,
        score_norm=score_norm,
        objective=objective,
        J_hat=jmat,
        G_hat=gmat,
        V_hat=vmat,
        n_clusters=data.n_clusters,
        converged=converged,
        iterations=iterations,
        warnings=warnings,
    )
