"""End-to-end acceptance checks for the package.

Each test prints one `criterion N: PASS/FAIL - detail` line through the
report fixture so the verdicts are visible in a plain pytest run, then
asserts the same condition.  The Monte Carlo checks pin their seeds;
the wall-clock budgets are asserted on the slow ones.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import scipy.stats

import oracles
from conftest import as_tuples, random_dataset
from crlogit.data import ClusterRecord, SurveyDataset
from crlogit.divergence import divergence, objective_gradient
from crlogit.estimator import FitConfig, fit
from crlogit.inference import (
    LinearHypothesis,
    noncentrality_from_delta,
    power_from_moments,
    sample_size_from_moments,
    wald_test,
)
from crlogit.robustness import ContaminationPoint, influence_vector
from crlogit.samplers import (
    OverdispersionSpec,
    cluster_covariance,
    generate_dataset,
    rng_for,
    sample_clusters,
)
from crlogit.simulate import ExperimentPlan, emit_report, run_experiment

LAMBDAS = (-0.5, -0.3, 0.0, 2.0 / 3.0)
BETA_NULL = ((0.0, -0.9, 0.1), (0.6, -1.2, 0.8))


@pytest.fixture
def report(capsys):
    """Print a verdict line that survives pytest's output capture."""

    def emit(line):
        with capsys.disabled():
            print(line)

    return emit


def test_criterion_1_reduces_to_weighted_mle(report):
    """At lambda = 0 the fitted coefficients match an independently
    coded Fisher-scoring MLE to 1e-6 per coordinate on 25 random
    designs spanning d in {1,2}, k in {0,1,2} and 20 to 100 clusters,
    half of them with non-unit weights."""
    rng = np.random.default_rng(1001)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(25):
        d = int(rng.integers(1, 3))
        k = int(rng.integers(0, 3))
        n = int(rng.integers(20, 101))
        data, _ = random_dataset(rng, d=d, k=k, n=n, m=10,
                                 weights=bool(trial % 2))
        res = fit(data, FitConfig(lam=0.0))
        assert res.converged, trial
        oracle = oracles.irls_pmle(as_tuples(data), d + 1)
        worst = max(worst, float(np.max(np.abs(res.beta_hat - oracle))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 60.0
    report(f"criterion 1: {'PASS' if ok else 'FAIL'} - max coefficient "
           f"gap {worst:.2e} vs Fisher scoring over 25 designs "
           f"({elapsed:.1f}s < 60s)")
    assert worst <= 1e-6
    assert elapsed < 60.0


def test_criterion_2_gradient_matches_finite_differences(report):
    """The analytic objective gradient agrees with central finite
    differences to 1e-5 relative at 10 random points for each lambda
    in {-0.5, -0.3, 0.5, 2/3}."""
    rng = np.random.default_rng(1002)
    worst = 0.0
    for lam in (-0.5, -0.3, 0.5, 2.0 / 3.0):
        data, _ = random_dataset(rng, d=2, k=1, n=12, m=8)
        for _ in range(10):
            beta = 0.4 * rng.standard_normal((2, 2))

            def f(flat):
                return divergence(lam, data, flat.reshape(2, 2))

            fd = oracles.fd_gradient(f, beta.ravel(), h=1e-6)
            ana = objective_gradient(lam, data, beta)
            scale = max(1.0, float(np.max(np.abs(fd))))
            worst = max(worst, float(np.max(np.abs(ana - fd))) / scale)
    ok = worst <= 1e-5
    report(f"criterion 2: {'PASS' if ok else 'FAIL'} - max relative "
           f"gradient gap {worst:.2e} over 4 lambdas x 10 points")
    assert worst <= 1e-5


def test_criterion_3_sampler_covariances(report):
    """For every overdispersed family, rho^2 in {0, 0.25, 0.5} and
    m in {5, 20}, the empirical covariance of 1e5 draws stays within
    5% Frobenius distance of the closed form nu * m * Delta(pi)."""
    families = ("m_inflated", "random_clumped", "dirichlet_multinomial")
    pi = np.array([0.5, 0.3, 0.2])
    draws = 100_000
    t0 = time.perf_counter()
    worst_cell, worst = "", 0.0
    for fam_idx, family in enumerate(families):
        for rho2 in (0.0, 0.25, 0.5):
            for m in (5, 20):
                spec = OverdispersionSpec.from_rho2(family, rho2)
                rng = rng_for(1003, fam_idx, int(100 * rho2), m)
                counts = sample_clusters(spec, m, pi, draws, rng)
                emp = np.cov(counts, rowvar=False)
                target = cluster_covariance(spec, m, pi)
                rel = float(np.linalg.norm(emp - target)
                            / np.linalg.norm(target))
                if rel > worst:
                    worst_cell = f"{family} rho2={rho2} m={m}"
                    worst = rel
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.05 and elapsed < 300.0
    report(f"criterion 3: {'PASS' if ok else 'FAIL'} - worst Frobenius "
           f"error {worst:.4f} ({worst_cell}) over 18 cells at 1e5 draws "
           f"({elapsed:.0f}s < 300s)")
    assert worst <= 0.05
    assert elapsed < 300.0


def test_criterion_4_null_rejection_rate_and_distribution(report):
    """Clean overdispersed data, nh = 60, lambda = 0: over 1000
    replicates the empirical level lies in [0.03, 0.08] and the Wald
    statistics pass a chi-square(1) Kolmogorov-Smirnov test at 1%."""
    spec = OverdispersionSpec.from_rho2("m_inflated", 0.5)
    hyp = LinearHypothesis.single_coefficient(6, 1, -0.9)
    t0 = time.perf_counter()

    def one(r):
        child = int(rng_for(4242, 0, r).integers(0, 2 ** 63 - 1))
        data = generate_dataset(BETA_NULL, 4, 60, 20, spec, seed=child)
        res = fit(data, FitConfig(lam=0.0))
        if not res.converged:
            return None
        return wald_test(res, hyp).statistic

    with ThreadPoolExecutor(8) as pool:
        stats = np.array([w for w in pool.map(one, range(1000))
                          if w is not None])
    level = float(np.mean(stats > oracles.chi2_quantile(1, 0.05)))
    ks_p = float(scipy.stats.kstest(stats, scipy.stats.chi2(1).cdf).pvalue)
    elapsed = time.perf_counter() - t0
    ok = stats.size == 1000 and 0.03 <= level <= 0.08 and ks_p > 0.01
    report(f"criterion 4: {'PASS' if ok else 'FAIL'} - level {level:.4f} "
           f"in [0.03, 0.08], KS p {ks_p:.4f} > 0.01 "
           f"({stats.size}/1000 converged, {elapsed:.0f}s)")
    assert stats.size == 1000
    assert 0.03 <= level <= 0.08
    assert ks_p > 0.01


def test_criterion_5_contaminated_level_and_rmse_orderings(report):
    """With 10% cyclic contamination at nh = 60 and 500 replicates:
    (a) the lambda = -1/2 level is closer to the nominal 0.05 than the
    lambda = 0 level, and (b) the lambda = -0.3 RMSE for the tested
    coefficient beats the lambda = 0 RMSE."""
    plan = ExperimentPlan(lambdas=(-0.5, -0.3, 0.0), nh_grid=(60,),
                          replicates=500, seed=4242)
    t0 = time.perf_counter()
    cells = run_experiment(plan, threads=8)
    elapsed = time.perf_counter() - t0
    dirty = {c.lam: c for c in cells if c.contaminated == 1}
    a_ok = abs(dirty[-0.5].level - 0.05) < abs(dirty[0.0].level - 0.05)
    b_ok = dirty[-0.3].rmse < dirty[0.0].rmse
    ok = a_ok and b_ok and elapsed < 1800.0
    report(f"criterion 5: {'PASS' if ok else 'FAIL'} - levels "
           f"{dirty[-0.5].level:.3f} (lam=-0.5) vs {dirty[0.0].level:.3f} "
           f"(lam=0) around 0.05; rmse {dirty[-0.3].rmse:.3f} (lam=-0.3) "
           f"vs {dirty[0.0].rmse:.3f} (lam=0) ({elapsed:.0f}s < 1800s)")
    assert a_ok
    assert b_ok
    assert elapsed < 1800.0


def test_criterion_6_influence_oracle_and_leverage_contrast(report):
    """Analytic influence vectors match an eps-refit Richardson oracle
    to 1e-3 relative on 10 random models at four lambdas; scaling one
    covariate by 10^j makes the lambda = 0 influence grow without bound
    while the lambda = -1/2 influence plateaus below it."""
    rng = np.random.default_rng(1006)
    worst = 0.0
    for trial in range(10):
        d = int(rng.integers(1, 3))
        k = int(rng.integers(1, 3))
        n = int(rng.integers(6, 12))
        size = int(rng.integers(5, 11))
        weight = float(rng.uniform(0.6, 1.8))
        beta = 0.5 * rng.standard_normal((d, k + 1))
        covs = [np.array([1.0, *rng.standard_normal(k)]) for _ in range(n)]
        data = oracles.expected_count_dataset(beta, covs, size, weight=weight)
        target = int(rng.integers(1, n + 1))
        cat = int(rng.integers(1, d + 2))
        pt = ContaminationPoint(1, target, cat)
        for lam in LAMBDAS:
            ana = influence_vector(data, beta, lam, pt)
            ric = oracles.richardson_influence(beta, covs, size, lam,
                                               target, cat, weight=weight)
            rel = float(np.max(np.abs(ana - ric))
                        / max(1.0, np.max(np.abs(ana))))
            worst = max(worst, rel)

    sweep_rng = np.random.default_rng(50)
    beta = np.array([[0.4, -0.7]])
    base = [np.array([1.0, v]) for v in sweep_rng.standard_normal(10)]
    norms = {0.0: [], -0.5: []}
    for lam in norms:
        for j in range(7):
            covs = [c.copy() for c in base]
            covs[0] = np.array([1.0, 10.0 ** j])
            data = oracles.expected_count_dataset(beta, covs, size=8)
            iv = influence_vector(data, beta, lam, ContaminationPoint(1, 1, 1))
            norms[lam].append(float(np.linalg.norm(iv)))
    grow, flat = norms[0.0], norms[-0.5]
    growth_ok = (all(grow[j + 1] > grow[j] for j in range(3, 6))
                 and grow[6] > 1e4 * grow[0])
    plateau_ok = (max(flat) < 2.0 * flat[0]
                  and all(flat[j] < grow[j] for j in range(1, 7)))
    ok = worst <= 1e-3 and growth_ok and plateau_ok
    report(f"criterion 6: {'PASS' if ok else 'FAIL'} - worst oracle gap "
           f"{worst:.2e} over 10 models x 4 lambdas; leverage norm "
           f"{grow[0]:.2f}->{grow[6]:.1e} at lam=0 vs max {max(flat):.2f} "
           f"at lam=-0.5")
    assert worst <= 1e-3
    assert growth_ok
    assert plateau_ok


def test_criterion_7_local_alternative_mean(report):
    """Under a 1/sqrt(n) coefficient drift the Monte Carlo mean of the
    Wald statistic lies within three standard errors of df plus the
    analytic noncentrality, over 1000 replicates."""
    beta0, drift, m, n, reps = 0.3, 1.0, 5, 200, 1000
    beta_n = beta0 + drift / math.sqrt(n)
    x = np.array([1.0])
    pi_null = oracles.softmax_probs(np.array([[beta0]]), x)
    pi_alt = oracles.softmax_probs(np.array([[beta_n]]), x)
    v_true = 1.0 / (m * pi_null[0] * pi_null[1])
    hyp = LinearHypothesis.single_coefficient(1, 0, beta0)
    target = 1.0 + noncentrality_from_delta(hyp, [[v_true]], [drift])
    spec = OverdispersionSpec(family="multinomial")
    t0 = time.perf_counter()

    def one(r):
        rng = rng_for(777, r)
        counts = sample_clusters(spec, m, pi_alt, n, rng)
        records = [ClusterRecord(1, i + 1, 1.0, m,
                                 counts[i].astype(float), x)
                   for i in range(n)]
        res = fit(SurveyDataset(records), FitConfig(lam=0.0, init="zeros"))
        if not res.converged:
            return None
        return wald_test(res, hyp).statistic

    with ThreadPoolExecutor(8) as pool:
        stats = np.array([w for w in pool.map(one, range(reps))
                          if w is not None])
    se = float(stats.std(ddof=1) / math.sqrt(stats.size))
    gap = float(abs(stats.mean() - target))
    elapsed = time.perf_counter() - t0
    ok = stats.size == reps and gap <= 3.0 * se
    report(f"criterion 7: {'PASS' if ok else 'FAIL'} - mean W "
           f"{stats.mean():.4f} vs target {target:.4f}, gap {gap:.4f} <= "
           f"3SE {3.0 * se:.4f} ({stats.size}/1000 converged, "
           f"{elapsed:.0f}s)")
    assert stats.size == reps
    assert gap <= 3.0 * se


def test_criterion_8a_sample_size_reaches_target_power(report):
    """Feeding the closed-form sample size back through the power
    approximation recovers at least the requested power minus 0.02,
    across 20 random planning configurations."""
    rng = np.random.default_rng(1008)
    worst = math.inf
    for _ in range(20):
        ell = float(rng.uniform(0.02, 0.5))
        sigma_w = float(rng.uniform(0.1, 1.5))
        r = int(rng.integers(1, 5))
        alpha = float(rng.uniform(0.01, 0.1))
        goal = float(rng.uniform(0.5, 0.95))
        n = sample_size_from_moments(ell, sigma_w, r, alpha, goal)
        achieved = power_from_moments(ell, sigma_w, r, alpha, n)
        worst = min(worst, achieved - goal)
    ok = worst >= -0.02
    report(f"criterion 8a: {'PASS' if ok else 'FAIL'} - min achieved "
           f"minus target power {worst:+.4f} >= -0.02 over 20 "
           f"configurations")
    assert worst >= -0.02


@pytest.mark.xfail(strict=True,
                   reason="the planning example value n = 209 is not "
                          "reproducible from the closed form, which gives "
                          "n = 222 for these inputs")
def test_criterion_8b_worked_example_value(report):
    """The quoted planning example (ell = 0.04, sigma_W = 0.4, r = 1,
    alpha = 0.05, power 0.8) is said to give n = 209; the closed form
    implemented here gives 222, so this is recorded as an expected
    failure rather than patched over."""
    n = sample_size_from_moments(0.04, 0.4, 1, 0.05, 0.8)
    ok = n == 209
    report(f"criterion 8b: {'PASS' if ok else 'FAIL'} - worked example "
           f"returns n={n}, quoted value 209")
    assert n == 209


def test_criterion_9_thread_count_invariance(report, tmp_path):
    """Simulation reports are byte-identical when run with 1, 4 or 8
    worker threads."""
    plan = ExperimentPlan(lambdas=(0.0, -0.3), nh_grid=(4, 8),
                          replicates=6, rho2=0.5, epsilon=0.5, seed=99)
    blobs = {}
    for threads in (1, 4, 8):
        out = tmp_path / f"threads{threads}"
        out.mkdir()
        emit_report(run_experiment(plan, threads=threads), out)
        blobs[threads] = {name: (out / name).read_bytes()
                          for name in ("results.csv", "plot_data.csv")}
    ok = blobs[1] == blobs[4] == blobs[8]
    report(f"criterion 9: {'PASS' if ok else 'FAIL'} - results.csv and "
           f"plot_data.csv byte-identical across 1/4/8 threads")
    assert blobs[1] == blobs[4]
    assert blobs[4] == blobs[8]
