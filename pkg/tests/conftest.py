import numpy as np

from crlogit.data import ClusterRecord, SurveyDataset


def make_record(h, i, w, m, y, x):
    """Build one cluster record; x includes the leading intercept 1."""
    return ClusterRecord(
        stratum_id=h,
        cluster_id=i,
        weight=w,
        size=m,
        counts=np.asarray(y, dtype=float),
        covariates=np.asarray(x, dtype=float),
    )


def make_dataset(rows):
    """rows: iterable of (h, i, w, m, y, x) tuples."""
    return SurveyDataset([make_record(*row) for row in rows])


def random_dataset(rng, d=2, k=2, n=40, m=10, beta_scale=0.6, weights=False):
    """Multinomial data at a random coefficient matrix.

    Returns (dataset, beta_true).  Covariates are standard normal with the
    intercept prepended; the coefficient scale keeps the category
    probabilities away from the simplex boundary so small samples stay
    identifiable.
    """
    beta_true = beta_scale * rng.standard_normal((d, k + 1))
    records = []
    for i in range(1, n + 1):
        x = np.concatenate(([1.0], rng.standard_normal(k)))
        z = np.exp(beta_true @ x)
        pi = np.append(z, 1.0) / (1.0 + z.sum())
        y = rng.multinomial(m, pi)
        w = float(rng.uniform(0.5, 2.0)) if weights else 1.0
        records.append(make_record(1, i, w, m, y, x))
    return SurveyDataset(records), beta_true


def as_tuples(data):
    """View a dataset as (w, m, y, x) tuples for the oracle functions."""
    return [(r.weight, r.size, r.counts, r.covariates) for r in data.records]
