from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldpfactor import workloads as wl
from ldpfactor.model import DataVector

H4 = np.array(
    [
        [1, 1, 1, 1],
        [1, -1, 1, -1],
        [1, 1, -1, -1],
        [1, -1, -1, 1],
    ],
    dtype=float,
)


def test_prefix_5():
    assert np.array_equal(wl.prefix(5).matrix, np.tril(np.ones((5, 5))))


def test_histogram_3():
    assert np.array_equal(wl.histogram(3).matrix, np.eye(3))


def test_parity_k2_is_hadamard():
    assert np.array_equal(wl.parity(2).matrix, H4)


def test_parity_without_constant():
    P = wl.parity(3, include_empty=False).matrix
    assert P.shape == (7, 8)
    assert not np.any(np.all(P == 1, axis=1))


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_all_range_rows(n):
    W = wl.all_range(n).matrix
    assert W.shape == (n * (n + 1) // 2, n)
    for row in W:
        idx = np.flatnonzero(row)
        assert np.all(row[idx] == 1) and idx[-1] - idx[0] + 1 == idx.size
    assert len({r.tobytes() for r in W}) == W.shape[0]


@pytest.mark.parametrize("n", [21, 25, 64])
def test_width20_range(n):
    W = wl.width_range(n).matrix
    assert W.shape == (n - 20, n)
    assert np.all(W.sum(axis=1) == 21)
    assert W[0, :21].all() and W[-1, -21:].all()


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_marginal_row_counts(k):
    W = wl.all_marginals(k).matrix
    assert W.shape == (3**k, 2**k)
    # every marginal table partitions the users: each column sums to the number of subsets
    assert np.all(W.sum(axis=0) == 2**k)


@pytest.mark.parametrize("k", [3, 4, 5])
def test_three_way_counts(k):
    W = wl.three_way_marginals(k).matrix
    assert W.shape == (8 * comb(k, 3), 2**k)
    assert np.all(W.sum(axis=0) == comb(k, 3))


def test_marginal_cell_semantics():
    # k=2, attribute 0 is the high bit: the cell "attr0 = 1" covers u = 2, 3
    W = wl.all_marginals(2).matrix
    assert any(np.array_equal(r, [0, 0, 1, 1]) for r in W)
    assert any(np.array_equal(r, [0, 1, 0, 1]) for r in W)
    assert np.array_equal(W[0], [1, 1, 1, 1])


@pytest.mark.parametrize(
    "spec,shape",
    [
        ("histogram:n=128", (128, 128)),
        ("prefix:n=16", (16, 16)),
        ("range:n=128,width=20", (108, 128)),
        ("marginals:k=3", (27, 8)),
        ("3way:k=4", (32, 16)),
        ("parity:k=3", (8, 8)),
        ("allrange:n=8", (36, 8)),
        ("parity:n=16", (16, 16)),
    ],
)
def test_from_spec(spec, shape):
    assert wl.from_spec(spec).matrix.shape == shape


@pytest.mark.parametrize(
    "spec", ["histogram", "parity:n=12", "range:n=10,width=10", "nosuch:n=4", "prefix:n=0", "histogram:n"]
)
def test_from_spec_errors(spec):
    with pytest.raises(ValueError):
        wl.from_spec(spec)


def test_reduce_duplicate_columns():
    W, mapping = wl.reduce_domain(np.array([[1.0, 1.0], [0.0, 0.0]]))
    assert np.array_equal(W.matrix, [[1.0], [0.0]])
    assert mapping.tolist() == [0, 0]


def test_reduce_histogram_unchanged():
    W, mapping = wl.reduce_domain(wl.histogram(4))
    assert np.array_equal(W.matrix, np.eye(4)) and mapping.tolist() == [0, 1, 2, 3]


def test_reduce_range_with_appended_duplicate():
    # rows 0..4 all cover types 4..20, so those 17 columns are one class
    W = wl.width_range(25, 20).matrix
    R, mapping = wl.reduce_domain(W)
    assert R.n == 9
    assert mapping.tolist() == [0, 1, 2, 3] + [4] * 17 + [5, 6, 7, 8]
    W2 = np.column_stack([W, W[:, 2]])
    R2, mapping2 = wl.reduce_domain(W2)
    assert R2.n == 9 and mapping2[-1] == mapping2[2]
    assert np.array_equal(R2.matrix[:, mapping2], W2)


def test_reduce_range_distinct_when_long():
    # with n >= 2 * 21 - 1 no two columns coincide
    assert wl.reduce_domain(wl.width_range(64, 20))[0].n == 64


def test_reduce_folds_negative_zero():
    W = np.array([[0.0, -0.0], [1.0, 1.0]])
    assert wl.reduce_domain(W)[0].n == 1


@pytest.mark.parametrize("spec", ["histogram:n=8", "prefix:n=8", "allrange:n=8", "range:n=30,width=20",
                                  "marginals:k=3", "3way:k=3", "parity:k=3"])
def test_reduce_answer_preserving_and_idempotent(spec):
    W = wl.from_spec(spec)
    rng = np.random.default_rng(5)
    extra = rng.integers(W.n, size=3)
    M = np.column_stack([W.matrix, W.matrix[:, extra]])
    R, mapping = wl.reduce_domain(M)
    R2, mapping2 = wl.reduce_domain(R)
    assert np.array_equal(R2.matrix, R.matrix) and mapping2.tolist() == list(range(R.n))
    for _ in range(50):
        x = DataVector(rng.integers(0, 20, M.shape[1]))
        xr = wl.reduce_data(x, mapping)
        assert np.allclose(M @ x.counts, R.matrix @ xr.counts)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 2**31))
def test_reduce_reexpands_exactly(p, n, seed):
    rng = np.random.default_rng(seed)
    W = rng.integers(0, 2, (p, n)).astype(float)
    R, mapping = wl.reduce_domain(W)
    assert np.array_equal(R.matrix[:, mapping], W)
    assert R.n == len({tuple(c) for c in W.T})
