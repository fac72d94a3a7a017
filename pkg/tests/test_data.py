"""Dataset construction, CSV ingestion, and the empirical probability vector."""

import numpy as np
import pytest

from conftest import make_dataset, make_record, random_dataset
from crlogit.data import (
    empirical_probability_vector,
    load_dataset,
    save_dataset,
    serialize_dataset,
)
from crlogit.errors import DataError


def test_single_cluster_intercept_only():
    data = load_dataset("stratum,cluster,m,y1,y2\n1,1,4,3,1\n", is_text=True)
    assert data.num_categories == 2
    assert data.num_covariates == 1
    assert data.tau == 4.0
    assert data.records[0].weight == 1.0
    assert data.records[0].covariates[0] == 1.0


def test_counts_must_sum_to_size():
    with pytest.raises(DataError, match=r"\(1,1\)"):
        load_dataset("stratum,cluster,m,y1,y2\n1,1,4,3,2\n", is_text=True)


def test_weighted_total_for_uniform_design():
    rows = [
        (h, i, 1.0, 20, (7, 6, 7), (1.0,))
        for h in range(1, 5)
        for i in range(1, 11)
    ]
    data = make_dataset(rows)
    assert data.tau == 800.0
    assert data.n_clusters == 40
    assert data.strata_sizes() == {1: 10, 2: 10, 3: 10, 4: 10}


def test_empirical_vector_single_cluster():
    data = make_dataset([(1, 1, 1.0, 4, (3, 1), (1.0,))])
    np.testing.assert_allclose(empirical_probability_vector(data), [0.75, 0.25])


def test_empirical_vector_two_clusters():
    data = make_dataset(
        [(1, 1, 1.0, 2, (2, 0), (1.0,)), (1, 2, 1.0, 2, (0, 2), (1.0,))]
    )
    np.testing.assert_allclose(
        empirical_probability_vector(data), [0.5, 0.0, 0.0, 0.5]
    )


def test_empirical_vector_weighted():
    data = make_dataset(
        [(1, 1, 2.0, 2, (2, 0), (1.0,)), (1, 2, 1.0, 2, (0, 2), (1.0,))]
    )
    assert data.tau == 6.0
    np.testing.assert_allclose(
        empirical_probability_vector(data), [2 / 3, 0.0, 0.0, 1 / 3]
    )


def test_empirical_vector_sums_to_one():
    rng = np.random.default_rng(7)
    for _ in range(20):
        data, _ = random_dataset(
            rng,
            d=int(rng.integers(1, 4)),
            k=int(rng.integers(0, 3)),
            n=int(rng.integers(3, 30)),
            m=int(rng.integers(2, 15)),
            weights=True,
        )
        vec = empirical_probability_vector(data)
        assert np.all(vec >= 0)
        assert abs(vec.sum() - 1.0) < 1e-12


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    data, _ = random_dataset(rng, d=2, k=2, n=15, m=9, weights=True)
    text = serialize_dataset(data)
    again = load_dataset(text, is_text=True)
    assert serialize_dataset(again) == text
    path = tmp_path / "d.csv"
    save_dataset(data, path)
    loaded = load_dataset(path)
    for a, b in zip(data.records, loaded.records):
        assert a.stratum_id == b.stratum_id and a.cluster_id == b.cluster_id
        assert a.weight == b.weight and a.size == b.size
        assert np.array_equal(a.counts, b.counts)
        assert np.array_equal(a.covariates, b.covariates)


def test_column_order_is_free():
    base = "stratum,cluster,weight,m,y1,y2,x1\n1,1,1,4,3,1,0.5\n"
    shuffled = "x1,y2,m,weight,y1,cluster,stratum\n0.5,1,4,1,3,1,1\n"
    a = load_dataset(base, is_text=True)
    b = load_dataset(shuffled, is_text=True)
    assert np.array_equal(a.records[0].counts, b.records[0].counts)
    assert np.array_equal(a.records[0].covariates, b.records[0].covariates)


def test_header_errors():
    with pytest.raises(DataError, match="missing required column"):
        load_dataset("cluster,m,y1,y2\n1,4,3,1\n", is_text=True)
    with pytest.raises(DataError, match="y1, y2 at minimum"):
        load_dataset("stratum,cluster,m,y1\n1,1,4,4\n", is_text=True)
    with pytest.raises(DataError, match="without gaps"):
        load_dataset("stratum,cluster,m,y1,y3\n1,1,4,3,1\n", is_text=True)


def test_malformed_row_reports_line():
    text = "stratum,cluster,m,y1,y2\n1,1,4,3,1\n1,2,4,oops,1\n"
    with pytest.raises(DataError, match="line 3"):
        load_dataset(text, is_text=True)


def test_row_width_mismatch_reports_line():
    text = "stratum,cluster,m,y1,y2\n1,1,4,3\n"
    with pytest.raises(DataError, match="line 2"):
        load_dataset(text, is_text=True)


def test_record_validation():
    with pytest.raises(DataError, match="negative weight"):
        make_record(1, 1, -1.0, 4, (3, 1), (1.0,))
    with pytest.raises(DataError, match="negative count"):
        make_record(1, 1, 1.0, 2, (3, -1), (1.0,))
    with pytest.raises(DataError, match="size must be positive"):
        make_record(1, 1, 1.0, 0, (0, 0), (1.0,))
    with pytest.raises(DataError, match="intercept"):
        make_record(1, 1, 1.0, 4, (3, 1), (0.5,))
    with pytest.raises(DataError, match="non-finite"):
        make_record(1, 1, 1.0, 4, (np.nan, 4), (1.0,))


def test_dimension_consistency_across_records():
    rows = [(1, 1, 1.0, 4, (3, 1), (1.0,)), (1, 2, 1.0, 4, (2, 1, 1), (1.0,))]
    with pytest.raises(DataError, match="inconsistent"):
        make_dataset(rows)


def test_zero_weight_cluster_is_accepted():
    data = make_dataset(
        [(1, 1, 0.0, 4, (3, 1), (1.0,)), (1, 2, 1.0, 4, (2, 2), (1.0,))]
    )
    assert data.tau == 4.0
    vec = empirical_probability_vector(data)
    np.testing.assert_allclose(vec, [0.0, 0.0, 0.5, 0.5])


def test_all_zero_weights_rejected():
    with pytest.raises(DataError, match="positive"):
        make_dataset([(1, 1, 0.0, 4, (3, 1), (1.0,))])


def test_find_by_labels():
    data = make_dataset(
        [(1, 1, 1.0, 4, (3, 1), (1.0,)), (2, 1, 1.0, 4, (2, 2), (1.0,))]
    )
    assert data.find(2, 1) == 1
    with pytest.raises(DataError, match=r"\(3,9\)"):
        data.find(3, 9)
