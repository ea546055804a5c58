import csv

import numpy as np
import pytest
from scipy import optimize as sopt
from scipy import stats

from ldpfactor import baselines as bl
from ldpfactor import metrics as mt
from ldpfactor import workloads as wl
from ldpfactor.model import DimensionError
from ldpfactor.runtime import (
    SIM_COLUMNS,
    NotConvergedError,
    estimate,
    kkt_residual,
    run_end_to_end,
    run_mechanism,
    simulate,
    wnnls,
    write_simulation_csv,
)

from oracles import optimized

LN3 = np.log(3)


def test_one_hot_column():
    Q = np.array([[1.0, 0.0], [0.0, 0.5], [0.0, 0.5]])
    y = run_mechanism(Q, [7, 0], seed=0)
    assert y.counts.tolist() == [7, 0, 0]


def test_zero_data():
    Q = bl.randomized_response(3, 1.0)
    assert run_mechanism(Q, [0, 0, 0], seed=1).counts.tolist() == [0, 0, 0]
    out = run_end_to_end(np.eye(3), Q, [0, 0, 0], seed=1)
    assert np.all(out["answers"] == 0) and out["error"] == 0.0


def test_sum_and_determinism():
    Q = bl.hadamard(4, 1.0)
    a = run_mechanism(Q, [5, 9, 0, 3], seed=11)
    b = run_mechanism(Q, [5, 9, 0, 3], seed=11)
    assert a.counts.sum() == 17 and np.array_equal(a.counts, b.counts)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        run_mechanism(np.array([[0.5, 0.7], [0.5, 0.7]]), [1, 1])
    with pytest.raises(DimensionError):
        run_mechanism(bl.randomized_response(2, 1.0), [1, 2, 3])
    with pytest.raises(ValueError):
        run_mechanism(bl.randomized_response(2, 1.0), [1, 2], mode="bogus")
    with pytest.raises(DimensionError):
        estimate(np.eye(3), run_mechanism(bl.randomized_response(2, 1.0), [1, 2]))


def test_rr_binomial_band():
    Q = bl.randomized_response(2, LN3)
    N = 40000
    y = run_mechanism(Q, [N, 0], seed=3).counts / N
    band = 3 * np.sqrt(0.75 * 0.25 / N)
    assert np.all(np.abs(y - [0.75, 0.25]) <= band)


def test_estimate_identity():
    y = run_mechanism(bl.randomized_response(3, 1.0), [4, 5, 6], seed=0)
    assert np.array_equal(estimate(np.eye(3), y), y.counts)


def test_unbiased_rr_prefix():
    n, N, runs = 4, 1000, 2000
    W = wl.prefix(n).matrix
    Q = bl.randomized_response(n, 1.0)
    V = mt.optimal_V(W, Q)
    x = np.array([100, 300, 400, 200])
    ests = np.array([estimate(V, run_mechanism(Q, x, seed=s)) for s in range(runs)])
    se = ests.std(axis=0, ddof=1) / np.sqrt(runs)
    assert np.all(np.abs(ests.mean(axis=0) - W @ x) <= 4 * se)


STRATS = {
    "rr": lambda n, e: bl.randomized_response(n, e),
    "hadamard": lambda n, e: bl.hadamard(n, e),
    "opt": lambda n, e: None,
}


@pytest.mark.parametrize("wspec", ["histogram:n=8", "prefix:n=8"])
@pytest.mark.parametrize("sname", list(STRATS))
def test_variance_match_and_unbiased(wspec, sname):
    W = wl.from_spec(wspec).matrix
    Q = STRATS[sname](8, 1.0) or optimized(wspec, epsilon=1.0, T=300).Q
    x = np.array([50, 10, 0, 200, 40, 0, 100, 100])
    V = mt.optimal_V(W, Q)
    rows = simulate(W, Q, x, trials=3000, seed=5)
    emp = np.mean([r["squared_error"] for r in rows])
    assert emp == pytest.approx(mt.total_variance(V, Q, x), rel=0.05)
    ests = np.array([estimate(V, run_mechanism(Q, x, seed=s)) for s in range(1000)])
    se = ests.std(axis=0, ddof=1) / np.sqrt(1000)
    assert np.all(np.abs(ests.mean(axis=0) - W @ x) <= 4 * se + 1e-9)


def test_per_user_matches_multinomial_chi_square():
    rng = np.random.default_rng(0)
    Q = rng.dirichlet(np.ones(4), size=3).T
    x = [30000, 30000, 40000]
    a = run_mechanism(Q, x, seed=1, mode="multinomial").counts
    b = run_mechanism(Q, x, seed=2, mode="per_user").counts
    assert a.sum() == b.sum() == 100000
    _, p, _, _ = stats.chi2_contingency(np.vstack([a, b]))
    assert p > 0.001
    # and both fit the mixture probabilities
    expected = Q @ np.array(x)
    assert stats.chisquare(b, expected).pvalue > 0.001


def test_wnnls_examples():
    assert np.allclose(wnnls(np.eye(2), [3.0, -1.0]), [3.0, 0.0])
    assert np.allclose(wnnls(np.array([[1.0, 0.0], [1.0, 1.0]]), [1.0, 1.0]), [1.0, 0.0], atol=1e-9)
    assert np.all(wnnls(np.eye(3), np.zeros(3)) == 0)


def test_wnnls_matches_scipy_nnls():
    rng = np.random.default_rng(0)
    for _ in range(50):
        W = rng.normal(size=(20, 10))
        t = rng.normal(size=20) * 5
        x = wnnls(W, t)
        ref, _ = sopt.nnls(W, t)
        f, fref = np.sum((W @ x - t) ** 2), np.sum((W @ ref - t) ** 2)
        assert np.all(x >= 0)
        assert f <= fref * (1 + 1e-6) + 1e-12
        tol = 1e-8 * (1 + np.abs(W.T @ t).max())
        assert kkt_residual(W, x, t) <= tol


def test_wnnls_workload_consistency():
    W = wl.prefix(16).matrix
    rng = np.random.default_rng(1)
    t = W @ rng.integers(0, 20, 16) + rng.normal(0, 30, 16)
    x = wnnls(W, t)
    assert np.all(x >= 0)
    assert kkt_residual(W, x, t) <= 1e-8 * (1 + np.abs(W.T @ t).max())


def test_wnnls_errors():
    with pytest.raises(NotConvergedError):
        wnnls(np.random.default_rng(0).normal(size=(30, 20)), np.ones(30), max_iter=1, polish_every=1000)
    with pytest.raises(DimensionError):
        wnnls(np.eye(3), np.ones(2))


def test_end_to_end_high_epsilon():
    W = wl.histogram(4).matrix
    x = np.array([40000, 30000, 20000, 10000])
    out = run_end_to_end(W, "rr", x, seed=0, epsilon=50.0)
    assert np.allclose(out["answers"], W @ x, rtol=0.01)


def test_end_to_end_wnnls_is_consistent():
    W = wl.prefix(8).matrix
    x = np.array([5, 0, 0, 1, 0, 0, 0, 2])
    out = run_end_to_end(W, bl.randomized_response(8, 1.0), x, seed=4, use_wnnls=True)
    assert np.all(out["x_hat"] >= 0)
    assert np.allclose(out["answers"], W @ out["x_hat"])
    assert out["rmse"] == pytest.approx(np.sqrt(out["error"] / 8))
    with pytest.raises(ValueError):
        run_end_to_end(W, "rr", x)


def test_simulate_determinism_and_csv(tmp_path):
    W = wl.prefix(4).matrix
    Q = bl.randomized_response(4, 1.0)
    x = [10, 20, 30, 40]
    a = simulate(W, Q, x, trials=20, seed=9, use_wnnls=True, workload="prefix", strategy="rr")
    b = simulate(W, Q, x, trials=20, seed=9, use_wnnls=True, workload="prefix", strategy="rr")
    assert a == b
    assert [r["trial"] for r in a] == list(range(20))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_simulation_csv(a, p1)
    write_simulation_csv(b, p2)
    assert p1.read_bytes() == p2.read_bytes()
    with open(p1) as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == SIM_COLUMNS
    assert rows[0]["wnnls_flag"] == "1" and rows[0]["N"] == "100"
