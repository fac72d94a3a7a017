"""Monte Carlo harness for estimator accuracy, test level, and power.

A plan fixes a grid of divergence parameters and per-stratum cluster
counts.  Every (lambda, n_h, scenario) cell is summarized by

    rmse   root mean squared Euclidean error of the flattened
           coefficient vector, over replicates fitted to data drawn
           under beta_null
    level  rejection rate of H0: beta[test_index] = null value on the
           same beta_null data
    power  rejection rate of the same test on data drawn under beta_alt

Scenario 0 is clean data and scenario 1 applies the plan's category
relabelling contamination; both are always run, so the result table has
len(lambdas) * len(nh_grid) * 2 rows.  Replicates whose fit fails to
converge (or errors out) are dropped from every summary and counted in
`nonconverged`, summed over the null and alternative fits of the cell.

Each replicate draws its two datasets from substreams keyed by
(seed, scenario, n_h, replicate, dataset), and per-replicate outcomes
land in preallocated slots before a sequential reduction, so results
are identical for any thread count.  Within a replicate all lambdas
share the datasets and warm-start from the lambda = 0 solution.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DataError, NumericalError
from .estimator import FitConfig, fit
from .inference import LinearHypothesis, wald_test
from .samplers import ContaminationSpec, OverdispersionSpec, generate_dataset, rng_for

_DEFAULT_BETA_NULL = ((0.0, -0.9, 0.1), (0.6, -1.2, 0.8))
_DEFAULT_BETA_ALT = ((0.0, -1.5, 0.1), (0.6, -1.2, 0.8))

RESULT_COLUMNS = (
    "lambda", "nh", "contaminated", "rmse",
    "level", "level_se", "power", "power_se", "nonconverged",
)
PLOT_COLUMNS = ("lambda", "nh", "contaminated", "metric", "value", "nonconverged")


def _nested_tuple(rows):
    return tuple(tuple(float(v) for v in row) for row in np.atleast_2d(rows))


@dataclass
class ExperimentPlan:
    """Full description of one simulation study."""

    lambdas: tuple = (-0.5, -0.3, 0.0, 2.0 / 3.0)
    nh_grid: tuple = (10, 20, 30, 40, 50, 60)
    replicates: int = 1000
    family: str = "m_inflated"
    rho2: float = 0.5
    epsilon: float = 0.1
    num_strata: int = 4
    cluster_size: int = 20
    beta_null: tuple = _DEFAULT_BETA_NULL
    beta_alt: tuple = _DEFAULT_BETA_ALT
    test_index: int = 1
    alpha: float = 0.05
    seed: int = 42
    permutation: tuple | None = field(default=None)

    def __post_init__(self):
        self.lambdas = tuple(float(v) for v in np.atleast_1d(self.lambdas))
        self.nh_grid = tuple(int(v) for v in np.atleast_1d(self.nh_grid))
        self.beta_null = _nested_tuple(self.beta_null)
        self.beta_alt = _nested_tuple(self.beta_alt)
        if self.permutation is not None:
            self.permutation = tuple(int(v) for v in self.permutation)
        self.replicates = int(self.replicates)
        if self.replicates < 1:
            raise DataError("replicates must be at least 1")
        if not self.lambdas or not self.nh_grid:
            raise DataError("lambda and nh grids must be nonempty")
        if any(lam <= -1 for lam in self.lambdas):
            raise DataError("every lambda must be greater than -1")
        if min(self.nh_grid) < 1:
            raise DataError("every nh must be positive")
        if np.shape(self.beta_alt) != np.shape(self.beta_null):
            raise DataError("beta_null and beta_alt must have the same shape")
        if not 0 < self.alpha < 1:
            raise DataError("alpha must lie in (0, 1)")
        if not 0 <= self.test_index < self.num_parameters:
            raise DataError(
                f"test_index must lie in 0..{self.num_parameters - 1}, got {self.test_index}"
            )
        # constructing the specs validates family, rho2 and epsilon
        self.overdispersion()
        ContaminationSpec(epsilon=self.epsilon, permutation=self.permutation)

    @property
    def num_categories(self) -> int:
        return len(self.beta_null) + 1

    @property
    def num_parameters(self) -> int:
        return len(self.beta_null) * len(self.beta_null[0])

    @property
    def null_value(self) -> float:
        return np.asarray(self.beta_null, dtype=float).ravel()[self.test_index]

    def overdispersion(self) -> OverdispersionSpec:
        return OverdispersionSpec.from_rho2(self.family, self.rho2)

    def hypothesis(self) -> LinearHypothesis:
        return LinearHypothesis.single_coefficient(
            self.num_parameters, self.test_index, self.null_value
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, raw: dict):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise DataError(f"unknown plan fields: {', '.join(unknown)}")
        return cls(**raw)


@dataclass
class CellResult:
    lam: float
    nh: int
    contaminated: int
    rmse: float
    level: float
    level_se: float
    power: float
    power_se: float
    nonconverged: int


def _binomial_se(p: float, n: int) -> float:
    if n < 1 or not math.isfinite(p):
        return float("nan")
    return math.sqrt(p * (1.0 - p) / n)


def _child_seed(seed: int, *key: int) -> int:
    return int(rng_for(seed, *key).integers(0, 2**63 - 1))


def _fit_family(data, lambdas, tol=1e-8):
    """Fit every lambda on one dataset, warm-starting off lambda = 0.

    Returns (results, failed) lists aligned with `lambdas`; a failed
    entry is one that errored out or did not converge.
    """
    warm = None
    base = None
    try:
        base = fit(data, FitConfig(lam=0.0, init="zeros", gradient_tolerance=tol))
        if base.converged:
            warm = base.beta
    except (DataError, NumericalError):
        base = None
    results = []
    for lam in lambdas:
        if lam == 0.0:
            results.append(base)
            continue
        config = FitConfig(
            lam=lam,
            init=warm if warm is not None else "zeros",
            gradient_tolerance=tol,
        )
        try:
            results.append(fit(data, config))
        except (DataError, NumericalError):
            results.append(None)
    failed = [res is None or not res.converged for res in results]
    return results, failed


def run_experiment(plan: ExperimentPlan, threads: int | None = None) -> list:
    """Run the whole grid; returns CellResult rows in a fixed order.

    Rows are ordered by nh, then scenario (clean before contaminated),
    then lambda, matching the loop that produced them.
    """
    threads = int(threads) if threads else (os.cpu_count() or 1)
    lambdas = list(plan.lambdas)
    n_lam = len(lambdas)
    reps = plan.replicates
    spec = plan.overdispersion()
    hyp = plan.hypothesis()
    beta_null = np.asarray(plan.beta_null, dtype=float)
    beta_alt = np.asarray(plan.beta_alt, dtype=float)
    flat_null = beta_null.ravel()

    results = []
    for nh in plan.nh_grid:
        for scenario in (0, 1):
            eps = 0.0 if scenario == 0 else plan.epsilon
            contam = None
            if eps > 0:
                contam = ContaminationSpec(epsilon=eps, permutation=plan.permutation)

            sq_err = np.full((reps, n_lam), np.nan)
            ok_null = np.zeros((reps, n_lam), dtype=bool)
            rej_null = np.zeros((reps, n_lam), dtype=bool)
            ok_alt = np.zeros((reps, n_lam), dtype=bool)
            rej_alt = np.zeros((reps, n_lam), dtype=bool)

            def one_replicate(r):
                for tag, beta_true in ((0, beta_null), (1, beta_alt)):
                    child = _child_seed(plan.seed, scenario, nh, r, tag)
                    data = generate_dataset(
                        beta_true, plan.num_strata, nh, plan.cluster_size,
                        spec, contamination=contam, seed=child,
                    )
                    fits, failed = _fit_family(data, lambdas)
                    for j in range(n_lam):
                        if failed[j]:
                            continue
                        try:
                            report = wald_test(fits[j], hyp, alpha=plan.alpha)
                        except NumericalError:
                            continue
                        reject = report.reject_at[plan.alpha]
                        if tag == 0:
                            ok_null[r, j] = True
                            rej_null[r, j] = reject
                            diff = fits[j].beta - flat_null
                            sq_err[r, j] = float(diff @ diff)
                        else:
                            ok_alt[r, j] = True
                            rej_alt[r, j] = reject

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    list(pool.map(one_replicate, range(reps)))
            else:
                for r in range(reps):
                    one_replicate(r)

            for j, lam in enumerate(lambdas):
                n_null = int(ok_null[:, j].sum())
                n_alt = int(ok_alt[:, j].sum())
                rmse = float(np.sqrt(np.mean(sq_err[ok_null[:, j], j]))) if n_null else float("nan")
                level = float(rej_null[ok_null[:, j], j].mean()) if n_null else float("nan")
                power = float(rej_alt[ok_alt[:, j], j].mean()) if n_alt else float("nan")
                results.append(CellResult(
                    lam=lam, nh=nh, contaminated=scenario, rmse=rmse,
                    level=level, level_se=_binomial_se(level, n_null),
                    power=power, power_se=_binomial_se(power, n_alt),
                    nonconverged=(reps - n_null) + (reps - n_alt),
                ))
    return results


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if x == int(x) and abs(x) < 1e15 and math.isfinite(x):
        return str(int(x))
    return repr(x)


def results_rows(results) -> list:
    rows = [",".join(RESULT_COLUMNS)]
    for cell in results:
        rows.append(",".join(_fmt(v) for v in (
            cell.lam, cell.nh, cell.contaminated, cell.rmse,
            cell.level, cell.level_se, cell.power, cell.power_se,
            cell.nonconverged,
        )))
    return rows


def plot_rows(results) -> list:
    rows = [",".join(PLOT_COLUMNS)]
    for cell in results:
        for metric, value in (("rmse", cell.rmse), ("level", cell.level),
                              ("power", cell.power)):
            rows.append(",".join(_fmt(v) for v in (
                cell.lam, cell.nh, cell.contaminated, metric, value,
                cell.nonconverged,
            )))
    return rows


def emit_report(results, out_dir) -> dict:
    """Write results.csv and plot_data.csv under out_dir; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "results": os.path.join(out_dir, "results.csv"),
        "plot_data": os.path.join(out_dir, "plot_data.csv"),
    }
    with open(paths["results"], "w", encoding="utf-8", newline="") as handle:
        handle.write("\n".join(results_rows(results)) + "\n")
    with open(paths["plot_data"], "w", encoding="utf-8", newline="") as handle:
        handle.write("\n".join(plot_rows(results)) + "\n")
    return paths
