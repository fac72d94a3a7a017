"""Overdispersed multinomial samplers and dataset generation.

Three clustered-count families share the moment structure

    E[Y] = m pi,   Cov[Y] = nu(m) m Delta(pi),   nu(m) = 1 + rho^2 (m - 1)

with intra-cluster correlation rho in [0, 1]:

m-inflated      with probability rho^2 all m units fall in one category
                drawn from pi, otherwise Y ~ Mult(m, pi).
random-clumped  a clump of size K ~ Bin(m, rho) follows a single draw
                from pi and the remaining m - K units are multinomial.
dirichlet-multinomial
                Y ~ Mult(m, P) with P ~ Dirichlet(C pi), C = (1-rho^2)/rho^2,
                sampled by stick-breaking with Beta marginals.  rho = 0 is
                the plain multinomial limit and is sampled as such.

Each generated cluster draws from its own rng substream keyed by
(seed, stratum, cluster), so datasets are reproducible cluster by
cluster and independent of generation order.  Within a substream the
draw order is covariates, then counts, then the contamination coin.
Because the coin comes last, a contaminated dataset shares covariates
and counts with the clean dataset for the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ClusterRecord, SurveyDataset
from .errors import DataError
from .model import beta_matrix, delta_matrix, link

FAMILIES = ("multinomial", "m_inflated", "random_clumped", "dirichlet_multinomial")

_ALPHA_FLOOR = 1e-12
_MASK64 = 0xFFFFFFFFFFFFFFFF


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream identified by (seed, *key).

    The key arity is folded into the entropy because SeedSequence
    ignores trailing zero words, which would otherwise alias
    (seed, a) with (seed, a, 0).
    """
    entropy = tuple(int(v) & _MASK64 for v in (len(key), seed, *key))
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class OverdispersionSpec:
    """Sampling family plus intra-cluster correlation rho."""

    family: str
    rho: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not 0.0 <= self.rho <= 1.0:
            raise DataError(f"rho must lie in [0, 1], got {self.rho}")
        if self.family == "multinomial" and self.rho != 0.0:
            raise DataError("multinomial has no overdispersion parameter; use rho = 0")
        if self.family == "dirichlet_multinomial" and self.rho >= 1.0:
            raise DataError("dirichlet_multinomial requires rho < 1")

    @classmethod
    def from_rho2(cls, family: str, rho2: float):
        if rho2 < 0:
            raise DataError(f"rho^2 must be nonnegative, got {rho2}")
        return cls(family=family, rho=math.sqrt(rho2))

    def nu(self, m: float) -> float:
        """Variance inflation factor relative to Mult(m, pi)."""
        return 1.0 + self.rho**2 * (m - 1.0)


def cluster_covariance(spec: OverdispersionSpec, m: int, pi) -> np.ndarray:
    """Exact covariance nu(m) * m * Delta(pi) of one sampled cluster."""
    return spec.nu(m) * m * delta_matrix(np.asarray(pi, dtype=float))


def _check_probabilities(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float).ravel()
    if pi.size < 2 or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-8:
        raise DataError("pi must be a probability vector over at least 2 categories")
    return pi


def sample_clusters(spec: OverdispersionSpec, m: int, pi, size: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Draw `size` independent count vectors; returns (size, d+1) ints."""
    pi = _check_probabilities(pi)
    if m < 1:
        raise DataError(f"cluster size must be positive, got {m}")
    if spec.family == "multinomial" or (
        spec.family == "dirichlet_multinomial" and spec.rho == 0.0
    ):
        return rng.multinomial(m, pi, size=size)
    if spec.family == "m_inflated":
        clumped = rng.random(size) < spec.rho**2
        base = rng.multinomial(m, pi, size=size)
        singles = rng.multinomial(1, pi, size=size)
        return np.where(clumped[:, None], m * singles, base)
    if spec.family == "random_clumped":
        clump_cat = rng.multinomial(1, pi, size=size)
        clump_size = rng.binomial(m, spec.rho, size=size)
        spread = rng.multinomial(m - clump_size, pi)
        return clump_cat * clump_size[:, None] + spread
    # dirichlet_multinomial with rho > 0, stick-breaking over categories
    concentration = (1.0 - spec.rho**2) / spec.rho**2
    counts = np.zeros((size, pi.size), dtype=np.int64)
    remaining = np.full(size, m, dtype=np.int64)
    cumulative = 0.0
    for r in range(pi.size - 1):
        cumulative += pi[r]
        alpha_here = max(concentration * pi[r], _ALPHA_FLOOR)
        alpha_rest = max(concentration * (1.0 - cumulative), _ALPHA_FLOOR)
        fraction = rng.beta(alpha_here, alpha_rest, size=size)
        counts[:, r] = rng.binomial(remaining, fraction)
        remaining -= counts[:, r]
    counts[:, -1] = remaining
    return counts


def sample_cluster(spec: OverdispersionSpec, m: int, pi,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw one count vector of length d+1."""
    return sample_clusters(spec, m, pi, size=1, rng=rng)[0]


def forward_cycle(num_categories: int) -> tuple:
    """Default contamination map sending category c to c + 1 cyclically.

    With three categories this is 1 -> 2, 2 -> 3, 3 -> 1, so counts
    (y1, y2, y3) become (y3, y1, y2).  This direction folds baseline
    responses into the first category, which is what degrades the
    unweighted fit; the reverse cycle leaves it nearly unbiased.
    """
    return tuple((c % num_categories) + 1 for c in range(1, num_categories + 1))


@dataclass(frozen=True)
class ContaminationSpec:
    """Per-cluster category relabelling applied with probability epsilon.

    `permutation` lists sigma(1), ..., sigma(d+1) in 1-based category
    labels; a contaminated cluster's count for category c is moved to
    category sigma(c).  None selects the forward cycle for the data's
    category count at application time.
    """

    epsilon: float = 0.0
    permutation: tuple | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise DataError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.permutation is not None:
            perm = tuple(int(c) for c in self.permutation)
            if sorted(perm) != list(range(1, len(perm) + 1)):
                raise DataError(f"permutation {perm} is not a bijection of 1..{len(perm)}")
            object.__setattr__(self, "permutation", perm)

    def sigma0(self, num_categories: int) -> np.ndarray:
        """0-based destination index for each source category."""
        perm = self.permutation
        if perm is None:
            perm = forward_cycle(num_categories)
        if len(perm) != num_categories:
            raise DataError(
                f"permutation covers {len(perm)} categories but data has {num_categories}"
            )
        return np.asarray(perm, dtype=np.int64) - 1


def permute_counts(counts, sigma0) -> np.ndarray:
    """Relabel categories: out[sigma0[c]] = counts[c] along the last axis."""
    counts = np.asarray(counts)
    out = np.empty_like(counts)
    out[..., np.asarray(sigma0, dtype=np.int64)] = counts
    return out


def generate_dataset(beta, num_strata: int, clusters_per_stratum, cluster_size: int,
                     spec: OverdispersionSpec, num_categories: int | None = None,
                     contamination: ContaminationSpec | None = None,
                     seed: int = 0, weight: float = 1.0) -> SurveyDataset:
    """Simulate a survey dataset under the model at `beta`.

    `beta` is the d x (k+1) coefficient matrix (or its row-major
    flattening together with `num_categories`).  Covariates are an
    intercept plus k independent standard normals drawn fresh for every
    cluster; strata are numbered 1..H and clusters 1..n_h within each
    stratum.  `clusters_per_stratum` is a single count or one per
    stratum.
    """
    beta_arr = np.asarray(beta, dtype=float)
    if beta_arr.ndim == 2:
        num_categories = beta_arr.shape[0] + 1
    elif num_categories is None:
        raise DataError("num_categories is required when beta is passed flat")
    if num_strata < 1:
        raise DataError(f"need at least one stratum, got {num_strata}")
    if np.ndim(clusters_per_stratum) == 0:
        per_stratum = [int(clusters_per_stratum)] * num_strata
    else:
        per_stratum = [int(v) for v in clusters_per_stratum]
        if len(per_stratum) != num_strata:
            raise DataError(
                f"got {len(per_stratum)} cluster counts for {num_strata} strata"
            )
    if min(per_stratum) < 1:
        raise DataError("every stratum needs at least one cluster")

    k_plus_1 = beta_arr.size // (num_categories - 1)
    beta_mat = beta_matrix(beta_arr, num_categories, k_plus_1)
    sigma0 = None
    if contamination is not None and contamination.epsilon > 0:
        sigma0 = contamination.sigma0(num_categories)

    records = []
    for h in range(1, num_strata + 1):
        for i in range(1, per_stratum[h - 1] + 1):
            rng = rng_for(seed, h, i)
            x = np.concatenate(([1.0], rng.standard_normal(k_plus_1 - 1)))
            pi = link(beta_mat, x)
            counts = sample_cluster(spec, cluster_size, pi, rng)
            if sigma0 is not None and rng.random() < contamination.epsilon:
                counts = permute_counts(counts, sigma0)
            records.append(ClusterRecord(
                stratum_id=h, cluster_id=i, weight=weight, size=cluster_size,
                counts=np.asarray(counts, dtype=float), covariates=x,
            ))
    return SurveyDataset(records=records)
