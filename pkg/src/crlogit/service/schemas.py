"""Request and response models for the service.

The JSON field for the divergence parameter is spelled "lambda"; the
python attribute is `lam` with an alias, and models accept either
spelling.  Responses are serialized with aliases, so clients always
see "lambda".
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

_BASE = ConfigDict(populate_by_name=True)

Matrix = list[list[float]]
FlatOrMatrix = list[float] | list[list[float]]


class HealthResponse(BaseModel):
    model_config = _BASE
    status: str
    version: str


class FitRequest(BaseModel):
    model_config = _BASE
    data_csv: str
    lam: float = Field(0.0, alias="lambda")
    init: str | list[float] = "pmle"
    tol: float = 1e-8


class FitSummary(BaseModel):
    """Everything a fit produces; also the input shape for /test."""

    model_config = _BASE
    beta_hat: Matrix
    lam: float = Field(alias="lambda")
    num_categories: int
    num_covariates: int
    n_clusters: int
    converged: bool
    iterations: int
    score_norm: float
    objective: float
    J_hat: Matrix
    G_hat: Matrix
    V_hat: Matrix
    warnings: list[str] = []


class WaldRequest(BaseModel):
    model_config = _BASE
    fit: FitSummary
    M: Matrix
    m: list[float]
    alpha: float = 0.05


class WaldResponse(BaseModel):
    model_config = _BASE
    statistic: float
    df: int
    p_value: float
    alpha: float
    reject: bool


class InfluenceRequest(BaseModel):
    model_config = _BASE
    data_csv: str
    beta: FlatOrMatrix
    lam: float = Field(0.0, alias="lambda")
    stratum: int
    cluster: int
    category: int
    M: Matrix | None = None
    m: list[float] | None = None


class InfluenceResponse(BaseModel):
    model_config = _BASE
    lam: float = Field(alias="lambda")
    stratum: int
    cluster: int
    category: int
    if_beta: list[float]
    psi: Matrix
    if2_wald: float | None


class PowerRequest(BaseModel):
    model_config = _BASE
    beta0: FlatOrMatrix
    M: Matrix
    m: list[float]
    V: Matrix
    n: int
    alpha: float = 0.05


class PowerResponse(BaseModel):
    model_config = _BASE
    power: float
    ell_star: float
    sigma_w_sq: float
    df: int


class SampleSizeRequest(BaseModel):
    model_config = _BASE
    beta0: FlatOrMatrix
    M: Matrix
    m: list[float]
    V: Matrix
    alpha: float = 0.05
    target_power: float = 0.8


class SampleSizeResponse(BaseModel):
    model_config = _BASE
    n: int
    ell_star: float
    sigma_w_sq: float
    achieved_power: float


class GenerateRequest(BaseModel):
    model_config = _BASE
    beta: Matrix
    num_strata: int
    clusters_per_stratum: int | list[int]
    cluster_size: int
    family: str = "multinomial"
    rho2: float = 0.0
    epsilon: float = 0.0
    permutation: list[int] | None = None
    seed: int = 0
    weight: float = 1.0


class GenerateResponse(BaseModel):
    model_config = _BASE
    data_csv: str
    n_clusters: int


class SimulateRequest(BaseModel):
    model_config = _BASE
    plan: dict
    threads: int | None = None


class SimulateResponse(BaseModel):
    model_config = _BASE
    results_csv: str
    plot_data_csv: str
    cells: list[dict]
