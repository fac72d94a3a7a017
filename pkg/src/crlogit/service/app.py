"""FastAPI application exposing fitting, testing, planning and simulation.

Error taxonomy: malformed requests and data problems return 400,
numerical failures (singular matrices, tests on non-converged fits)
return 422.  A fit that merely fails to converge is not an error; the
response carries converged = false and the caller decides.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import __version__
from ..data import load_dataset, serialize_dataset
from ..errors import DataError, NumericalError
from ..estimator import FitConfig, FitResult, fit
from ..inference import (
    LinearHypothesis,
    approximate_power,
    ell_star,
    required_sample_size,
    wald_test,
)
from ..robustness import ContaminationPoint, influence
from ..samplers import ContaminationSpec, OverdispersionSpec, generate_dataset
from ..simulate import ExperimentPlan, plot_rows, results_rows, run_experiment
from . import schemas

app = FastAPI(title="crlogit service", version=__version__)

_INIT_NAMES = {"zeros": "zeros", "pmle": "pmle_first", "pmle_first": "pmle_first"}


def _arr(values, name: str) -> np.ndarray:
    try:
        return np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{name} is not a rectangular numeric array") from exc


@app.exception_handler(DataError)
def _data_error(request: Request, exc: DataError):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(NumericalError)
def _numerical_error(request: Request, exc: NumericalError):
    return JSONResponse(status_code=422, content={"detail": str(exc)})


@app.exception_handler(RequestValidationError)
def _request_error(request: Request, exc: RequestValidationError):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return schemas.HealthResponse(status="ok", version=__version__)


def _fit_summary(result: FitResult, num_categories: int,
                 num_covariates: int) -> schemas.FitSummary:
    return schemas.FitSummary(
        beta_hat=result.beta_hat.tolist(),
        lam=result.lam,
        num_categories=num_categories,
        num_covariates=num_covariates,
        n_clusters=result.n_clusters,
        converged=result.converged,
        iterations=result.iterations,
        score_norm=result.score_norm,
        objective=result.objective,
        J_hat=result.J_hat.tolist(),
        G_hat=result.G_hat.tolist(),
        V_hat=result.V_hat.tolist(),
        warnings=list(result.warnings),
    )


@app.post("/fit", response_model=schemas.FitSummary)
def do_fit(req: schemas.FitRequest):
    data = load_dataset(req.data_csv, is_text=True)
    if isinstance(req.init, str):
        if req.init not in _INIT_NAMES:
            raise DataError(
                f"init must be one of {sorted(set(_INIT_NAMES))}, got {req.init!r}"
            )
        init = _INIT_NAMES[req.init]
    else:
        init = _arr(req.init, "init")
    config = FitConfig(lam=req.lam, gradient_tolerance=req.tol, init=init)
    result = fit(data, config)
    return _fit_summary(result, data.num_categories, data.num_covariates)


def _result_from_summary(summary: schemas.FitSummary) -> FitResult:
    return FitResult(
        beta_hat=_arr(summary.beta_hat, "beta_hat"),
        lam=summary.lam,
        score_norm=summary.score_norm,
        objective=summary.objective,
        J_hat=_arr(summary.J_hat, "J_hat"),
        G_hat=_arr(summary.G_hat, "G_hat"),
        V_hat=_arr(summary.V_hat, "V_hat"),
        n_clusters=summary.n_clusters,
        converged=summary.converged,
        iterations=summary.iterations,
        warnings=list(summary.warnings),
    )


@app.post("/test", response_model=schemas.WaldResponse)
def do_test(req: schemas.WaldRequest):
    hyp = LinearHypothesis(M=_arr(req.M, "M"), m=_arr(req.m, "m"))
    report = wald_test(_result_from_summary(req.fit), hyp, alpha=req.alpha)
    return schemas.WaldResponse(
        statistic=report.statistic,
        df=report.df,
        p_value=report.p_value,
        alpha=req.alpha,
        reject=report.reject_at[req.alpha],
    )


@app.post("/influence", response_model=schemas.InfluenceResponse)
def do_influence(req: schemas.InfluenceRequest):
    data = load_dataset(req.data_csv, is_text=True)
    if (req.M is None) != (req.m is None):
        raise DataError("M and m must be supplied together")
    hyp = None
    if req.M is not None:
        hyp = LinearHypothesis(M=_arr(req.M, "M"), m=_arr(req.m, "m"))
    point = ContaminationPoint(
        stratum=req.stratum, cluster=req.cluster, category=req.category
    )
    report = influence(data, _arr(req.beta, "beta"), req.lam, point, hyp=hyp)
    return schemas.InfluenceResponse(
        lam=req.lam,
        stratum=req.stratum,
        cluster=req.cluster,
        category=req.category,
        if_beta=report.if_beta.tolist(),
        psi=report.psi.tolist(),
        if2_wald=report.if2_wald,
    )


@app.post("/power", response_model=schemas.PowerResponse)
def do_power(req: schemas.PowerRequest):
    if req.n < 1:
        raise DataError(f"n must be positive, got {req.n}")
    hyp = LinearHypothesis(M=_arr(req.M, "M"), m=_arr(req.m, "m"))
    v_mat = _arr(req.V, "V")
    beta0 = _arr(req.beta0, "beta0").ravel()
    ell = ell_star(beta0, hyp, v_mat)
    value = approximate_power(beta0, hyp, v_mat, req.n, req.alpha)
    return schemas.PowerResponse(
        power=value, ell_star=ell, sigma_w_sq=4.0 * ell, df=hyp.r
    )


@app.post("/samplesize", response_model=schemas.SampleSizeResponse)
def do_samplesize(req: schemas.SampleSizeRequest):
    hyp = LinearHypothesis(M=_arr(req.M, "M"), m=_arr(req.m, "m"))
    v_mat = _arr(req.V, "V")
    beta0 = _arr(req.beta0, "beta0").ravel()
    n = required_sample_size(beta0, hyp, v_mat, req.alpha, req.target_power)
    ell = ell_star(beta0, hyp, v_mat)
    achieved = approximate_power(beta0, hyp, v_mat, n, req.alpha)
    return schemas.SampleSizeResponse(
        n=n, ell_star=ell, sigma_w_sq=4.0 * ell, achieved_power=achieved
    )


@app.post("/generate", response_model=schemas.GenerateResponse)
def do_generate(req: schemas.GenerateRequest):
    spec = OverdispersionSpec.from_rho2(req.family, req.rho2)
    contamination = None
    if req.epsilon > 0:
        permutation = tuple(req.permutation) if req.permutation else None
        contamination = ContaminationSpec(epsilon=req.epsilon, permutation=permutation)
    data = generate_dataset(
        _arr(req.beta, "beta"), req.num_strata, req.clusters_per_stratum,
        req.cluster_size, spec, contamination=contamination,
        seed=req.seed, weight=req.weight,
    )
    return schemas.GenerateResponse(
        data_csv=serialize_dataset(data), n_clusters=data.n_clusters
    )


@app.post("/simulate", response_model=schemas.SimulateResponse)
def do_simulate(req: schemas.SimulateRequest):
    plan = ExperimentPlan.from_dict(req.plan)
    cells = run_experiment(plan, threads=req.threads)
    csv_text = "\n".join(results_rows(cells)) + "\n"
    plot_text = "\n".join(plot_rows(cells)) + "\n"
    return schemas.SimulateResponse(
        results_csv=csv_text,
        plot_data_csv=plot_text,
        cells=[asdict(cell) for cell in cells],
    )
