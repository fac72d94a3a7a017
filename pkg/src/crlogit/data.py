"""Survey data model: strata, clusters, weights, counts, covariates.

A dataset is an ordered list of cluster records.  Each record carries the
stratum and cluster labels, a sampling weight w, the cluster size m, the
count vector y over the d+1 response categories, and the covariate vector
x of length k+1 whose first entry is the intercept 1.

The canonical on-disk form is a UTF-8 CSV with a header row and columns

    stratum, cluster, weight, m, y1..y{d+1}, x1..x{k}

Column order is free; names are mandatory.  A missing ``weight`` column
means all weights are 1.  The intercept column is never stored; it is
synthesized on load.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

_COUNT_TOL = 1e-9


@dataclass(frozen=True)
class ClusterRecord:
    """One cluster: labels, weight, size, counts and covariates.

    Counts are stored as floats so that diagnostic pseudo-data with
    fractional counts (e.g. expected counts m*pi) can flow through the
    same estimating-equation code paths; the CSV loader only ever
    produces genuine count data.
    """

    stratum_id: int
    cluster_id: int
    weight: float
    size: float
    counts: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        covariates = np.asarray(self.covariates, dtype=float)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "covariates", covariates)
        if not np.all(np.isfinite(counts)) or not np.all(np.isfinite(covariates)):
            raise DataError(
                f"cluster ({self.stratum_id},{self.cluster_id}): non-finite entries"
            )
        if self.weight < 0:
            raise DataError(
                f"cluster ({self.stratum_id},{self.cluster_id}): negative weight"
            )
        if self.size <= 0:
            raise DataError(
                f"cluster ({self.stratum_id},{self.cluster_id}): size must be positive"
            )
        if counts.ndim != 1 or counts.size < 2:
            raise DataError(
                f"cluster ({self.stratum_id},{self.cluster_id}): need at least 2 categories"
            )
        if np.any(counts < 0):
            raise DataError(
                f"cluster ({self.stratum_id},{self.cluster_id}): negative count"
            )
        if abs(counts.sum() - self.size) > _COUNT_TOL * max(1.0, self.size):
            raise DataError(
                f"cluster ({self.stratum_id},{self.cluster_id}): counts sum to "
                f"{counts.sum()} but size is {self.size}"
            )
        if covariates.ndim != 1 or covariates.size < 1 or covariates[0] != 1.0:
            raise DataError(
                f"cluster ({self.stratum_id},{self.cluster_id}): covariate vector "
                "must start with the intercept entry 1"
            )

    @property
    def num_categories(self) -> int:
        return self.counts.size


@dataclass
class SurveyDataset:
    """Ordered collection of cluster records with cached design arrays.

    Attributes
    ----------
    records : list of ClusterRecord
    num_categories : int
        d+1, shared by every record.
    num_covariates : int
        k+1 including the intercept.
    tau : float
        Weighted total tau = sum_hi w_hi * m_hi.
    """

    records: list
    num_categories: int = field(init=False)
    num_covariates: int = field(init=False)
    tau: float = field(init=False)

    def __post_init__(self):
        if not self.records:
            raise DataError("dataset contains no clusters")
        d1 = self.records[0].counts.size
        k1 = self.records[0].covariates.size
        if d1 < 2:
            raise DataError("need at least 2 response categories")
        for rec in self.records:
            if rec.counts.size != d1 or rec.covariates.size != k1:
                raise DataError(
                    f"cluster ({rec.stratum_id},{rec.cluster_id}): inconsistent "
                    "category or covariate dimension"
                )
        self.num_categories = d1
        self.num_covariates = k1
        # Cached design arrays used by all estimating-equation kernels.
        self.weights = np.array([r.weight for r in self.records])
        self.sizes = np.array([r.size for r in self.records])
        self.counts = np.vstack([r.counts for r in self.records])
        self.covariates = np.vstack([r.covariates for r in self.records])
        self.tau = float(np.dot(self.weights, self.sizes))
        if self.tau <= 0:
            raise DataError("tau = sum of weight*size must be positive")

    @property
    def n_clusters(self) -> int:
        return len(self.records)

    def strata_sizes(self) -> dict:
        """Map stratum label -> number of clusters in that stratum."""
        out: dict = {}
        for rec in self.records:
            out[rec.stratum_id] = out.get(rec.stratum_id, 0) + 1
        return out

    def find(self, stratum_id: int, cluster_id: int) -> int:
        """Index of the record with the given labels."""
        for idx, rec in enumerate(self.records):
            if rec.stratum_id == stratum_id and rec.cluster_id == cluster_id:
                return idx
        raise DataError(f"no cluster with labels ({stratum_id},{cluster_id})")


def empirical_probability_vector(data: SurveyDataset) -> np.ndarray:
    """Stacked weighted empirical probability vector.

    Returns (1/tau) * (w_11 y_11', ..., w_Hn_H y_Hn_H')' of length
    (d+1) * n.  Entries are nonnegative and sum to 1 exactly because tau
    is the weighted total of the cluster sizes.
    """
    stacked = (data.weights[:, None] * data.counts).ravel()
    return stacked / data.tau


def _num(value: str, column: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise DataError(f"line {line}: column '{column}' has non-numeric value {value!r}")


def load_dataset(path_or_text, *, is_text: bool = False) -> SurveyDataset:
    """Read a dataset from the canonical CSV form.

    Parameters
    ----------
    path_or_text : str
        File path, or the CSV content itself when ``is_text`` is True.
    is_text : bool
        Interpret ``path_or_text`` as CSV content instead of a path.
    """
    if is_text:
        handle = io.StringIO(path_or_text)
        return _load_from_handle(handle)
    with open(path_or_text, "r", encoding="utf-8", newline="") as handle:
        return _load_from_handle(handle)


def _load_from_handle(handle) -> SurveyDataset:
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file: no header row")
    header = [h.strip() for h in header]
    cols = {name: idx for idx, name in enumerate(header)}
    for required in ("stratum", "cluster", "m"):
        if required not in cols:
            raise DataError(f"missing required column '{required}'")
    y_cols = sorted(
        (int(name[1:]), idx)
        for name, idx in cols.items()
        if name.startswith("y") and name[1:].isdigit()
    )
    x_cols = sorted(
        (int(name[1:]), idx)
        for name, idx in cols.items()
        if name.startswith("x") and name[1:].isdigit()
    )
    if [number for number, _ in y_cols] != list(range(1, len(y_cols) + 1)):
        raise DataError("count columns must be y1..y{d+1} without gaps")
    if [number for number, _ in x_cols] != list(range(1, len(x_cols) + 1)):
        raise DataError("covariate columns must be x1..xk without gaps")
    if len(y_cols) < 2:
        raise DataError("need count columns y1, y2 at minimum (d+1 >= 2)")
    weight_idx = cols.get("weight")

    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(
                f"line {line_no}: expected {len(header)} fields, found {len(row)}"
            )
        try:
            stratum = int(_num(row[cols["stratum"]], "stratum", line_no))
            cluster = int(_num(row[cols["cluster"]], "cluster", line_no))
            weight = (
                _num(row[weight_idx], "weight", line_no)
                if weight_idx is not None
                else 1.0
            )
            size = _num(row[cols["m"]], "m", line_no)
            counts = np.array(
                [_num(row[idx], f"y{num}", line_no) for num, idx in y_cols]
            )
            covs = np.concatenate(
                (
                    [1.0],
                    [_num(row[idx], f"x{num}", line_no) for num, idx in x_cols],
                )
            )
            records.append(
                ClusterRecord(
                    stratum_id=stratum,
                    cluster_id=cluster,
                    weight=weight,
                    size=size,
                    counts=counts,
                    covariates=covs,
                )
            )
        except DataError as exc:
            raise DataError(f"line {line_no}: {exc}") from None
    return SurveyDataset(records)


def _fmt(value: float) -> str:
    """Format a number for the canonical CSV: integers bare, floats via repr."""
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def serialize_dataset(data: SurveyDataset) -> str:
    """Render a dataset in the canonical CSV form (load round-trips bit-exact)."""
    d1 = data.num_categories
    k = data.num_covariates - 1
    header = (
        ["stratum", "cluster", "weight", "m"]
        + [f"y{j}" for j in range(1, d1 + 1)]
        + [f"x{j}" for j in range(1, k + 1)]
    )
    lines = [",".join(header)]
    for rec in data.records:
        fields = [
            str(rec.stratum_id),
            str(rec.cluster_id),
            _fmt(rec.weight),
            _fmt(rec.size),
        ]
        fields += [_fmt(v) for v in rec.counts]
        fields += [_fmt(v) for v in rec.covariates[1:]]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def save_dataset(data: SurveyDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(serialize_dataset(data))
