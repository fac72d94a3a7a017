"""Link probabilities, the Delta matrix, and the probability Jacobian."""

import numpy as np
import pytest

import oracles
from crlogit.errors import DataError
from crlogit.model import (
    beta_matrix,
    delta_matrix,
    delta_star,
    dpi_dbeta,
    flatten_beta,
    link,
    link_all,
)


def test_zero_beta_gives_uniform():
    rng = np.random.default_rng(0)
    for d in (1, 2, 3):
        x = np.concatenate(([1.0], rng.standard_normal(2)))
        pi = link(np.zeros((d, 3)), x)
        np.testing.assert_allclose(pi, np.full(d + 1, 1.0 / (d + 1)))


def test_scalar_logistic_value():
    pi = link(np.array([[np.log(3.0)]]), np.array([1.0]))
    np.testing.assert_allclose(pi, [0.75, 0.25], atol=1e-15)


def test_three_category_reference_point():
    beta = np.array([[0.0, -0.9, 0.1], [0.6, -1.2, 0.8]])
    pi = link(beta, np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(pi, [0.26163, 0.47673, 0.26163], atol=5e-6)


def test_link_matches_naive_softmax():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(0, 4))
        beta = rng.standard_normal((d, k + 1))
        x = np.concatenate(([1.0], rng.standard_normal(k)))
        np.testing.assert_allclose(
            link(beta, x), oracles.softmax_probs(beta, x), rtol=1e-12
        )


def test_link_survives_extreme_predictors():
    for b in (800.0, -800.0):
        pi = link(np.array([[b]]), np.array([1.0]))
        assert np.all(np.isfinite(pi))
        assert np.all(pi > 0)
        assert abs(pi.sum() - 1.0) < 1e-9


def test_link_rejects_non_finite():
    with pytest.raises(DataError):
        link(np.array([[np.inf]]), np.array([1.0]))
    with pytest.raises(DataError):
        link(np.array([[0.0]]), np.array([np.nan]))


def test_link_all_matches_link_rows():
    rng = np.random.default_rng(2)
    beta = rng.standard_normal((2, 3))
    X = np.hstack((np.ones((6, 1)), rng.standard_normal((6, 2))))
    allp = link_all(beta, X)
    for i in range(6):
        np.testing.assert_allclose(allp[i], link(beta, X[i]), rtol=1e-14)


def test_delta_matrix_values():
    np.testing.assert_allclose(
        delta_matrix([0.5, 0.5]), [[0.25, -0.25], [-0.25, 0.25]]
    )
    third = delta_matrix([1 / 3, 1 / 3, 1 / 3])
    np.testing.assert_allclose(np.diag(third), [2 / 9] * 3)
    np.testing.assert_allclose(third[0, 1], -1 / 9)


def test_delta_matrix_properties():
    rng = np.random.default_rng(3)
    for _ in range(20):
        raw = rng.uniform(0.05, 1.0, size=int(rng.integers(2, 6)))
        pi = raw / raw.sum()
        dm = delta_matrix(pi)
        np.testing.assert_allclose(dm, dm.T)
        np.testing.assert_allclose(dm.sum(axis=1), 0.0, atol=1e-14)
        for _ in range(5):
            v = rng.standard_normal(pi.size)
            assert v @ dm @ v >= -1e-12
        np.testing.assert_allclose(delta_star(pi), dm[:-1, :])


def test_dpi_dbeta_logistic_hand_value():
    jac = dpi_dbeta(np.zeros((1, 1)), np.array([1.0]))
    np.testing.assert_allclose(jac, [[0.25, -0.25]])


def test_dpi_dbeta_matches_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(20):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(0, 3))
        beta = rng.standard_normal((d, k + 1))
        x = np.concatenate(([1.0], rng.standard_normal(k)))

        def pi_of(flat):
            return link(flat.reshape(d, k + 1), x)

        fd = oracles.fd_jacobian(pi_of, beta.ravel(), h=1e-5).T
        ana = dpi_dbeta(beta, x)
        assert np.max(np.abs(ana - fd)) <= 1e-6 * max(1.0, np.max(np.abs(ana)))


def test_dpi_dbeta_columns_sum_to_zero():
    rng = np.random.default_rng(5)
    for _ in range(10):
        beta = rng.standard_normal((2, 3))
        x = np.concatenate(([1.0], rng.standard_normal(2)))
        np.testing.assert_allclose(
            dpi_dbeta(beta, x).sum(axis=1), 0.0, atol=1e-12
        )


def test_intercept_shift_regression():
    # Shifting every intercept by the same delta rescales the non-baseline
    # odds by exp(delta); the closed form below pins the behavior.
    beta = np.array([[0.2, -0.4], [-0.1, 0.3]])
    x = np.array([1.0, 0.7])
    delta = 0.35
    shifted = beta.copy()
    shifted[:, 0] += delta
    pi0 = link(beta, x)
    pi1 = link(shifted, x)
    expected = np.append(np.exp(delta) * pi0[:2], pi0[2])
    expected /= expected.sum()
    np.testing.assert_allclose(pi1, expected, rtol=1e-12)


def test_beta_matrix_round_trip():
    rng = np.random.default_rng(6)
    mat = rng.standard_normal((3, 4))
    flat = flatten_beta(mat)
    np.testing.assert_array_equal(beta_matrix(flat, 4, 4), mat)
    np.testing.assert_array_equal(beta_matrix(mat, 4, 4), mat)
    assert flat[4] == mat[1, 0]  # row-major: category 2 block starts at k+1


def test_beta_matrix_validation():
    with pytest.raises(DataError, match="entries"):
        beta_matrix(np.zeros(5), 3, 3)
    with pytest.raises(DataError, match="shape"):
        beta_matrix(np.zeros((2, 2)), 3, 3)
    with pytest.raises(DataError, match="non-finite"):
        beta_matrix(np.array([np.nan, 0.0]), 2, 2)
