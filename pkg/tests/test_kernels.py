import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from portsel import kernels

# published FNV-1a 64-bit reference values
FNV_VECTORS = [
    (b"", 0xCBF29CE484222325),
    (b"a", 0xAF63DC4C8601EC8C),
    (b"foobar", 0x85944171F73967E8),
]


@pytest.mark.parametrize("data, expected", FNV_VECTORS)
def test_fnv1a64_reference_vectors(backend, data, expected):
    assert backend.fnv1a64(data) == expected


def test_salted_basis_absorbs_seed_bytes(backend):
    assert backend.salted_basis(0) == kernels.pure.fnv1a64(b"\x00" * 8)
    assert backend.salted_basis(1) == kernels.pure.fnv1a64(b"\x01" + b"\x00" * 7)


def test_backend_name():
    assert kernels.BACKEND in ("compiled", "python")
    if kernels.compiled is not None:
        assert kernels.BACKEND == "compiled"


token_lists = st.lists(st.text(alphabet="abcXYZ019_(),.-><é", min_size=1, max_size=6), max_size=40)


@pytest.mark.skipif(kernels.compiled is None, reason="extension not built")
@settings(max_examples=200, deadline=None)
@given(token_lists, st.integers(0, 2**64 - 1), st.sampled_from([8, 64, 768, 1000]))
def test_hashing_backends_bitwise_equal(tokens, seed, dim):
    a = kernels.pure.hashed_counts(tokens, (1, 2, 3), seed, dim)
    b = kernels.compiled.hashed_counts(tokens, (1, 2, 3), seed, dim)
    assert np.array_equal(a, b)


def _problem(rng, n=5, dim=16, rows=30, multilabel=True):
    X = rng.normal(size=(rows, dim))
    if multilabel:
        T = (rng.random((rows, n)) < 0.4).astype(np.float64)
    else:
        T = rng.integers(0, n, size=rows).astype(np.float64)
    W = rng.normal(scale=0.1, size=(n, dim))
    b = rng.normal(scale=0.1, size=n)
    return W, b, X, T


@pytest.mark.skipif(kernels.compiled is None, reason="extension not built")
@pytest.mark.parametrize("multilabel", [True, False])
@pytest.mark.parametrize("lr", [1e-4, 0.5, 20.0])
def test_sgd_backends_agree(multilabel, lr):
    rng = np.random.default_rng(11)
    W, b, X, T = _problem(rng, multilabel=multilabel)
    order = rng.permutation(len(X))
    W1, b1, W2, b2 = W.copy(), b.copy(), W.copy(), b.copy()
    kernels.pure.sgd_epoch(W1, b1, X, T, order, lr, multilabel, 2.0)
    kernels.compiled.sgd_epoch(W2, b2, X, T, order, lr, multilabel, 2.0)
    np.testing.assert_allclose(W1, W2, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(b1, b2, rtol=1e-10, atol=1e-12)


def test_sgd_single_step_matches_hand_update(backend):
    W = np.zeros((2, 3))
    b = np.zeros(2)
    X = np.array([[1.0, 2.0, 0.0]])
    T = np.array([0.0])
    backend.sgd_epoch(W, b, X, T, np.array([0]), 0.1, False, 1.0)
    # uniform softmax, gradient (p - onehot) = (-0.5, 0.5)
    np.testing.assert_allclose(b, [0.05, -0.05])
    np.testing.assert_allclose(W, [[0.05, 0.1, 0.0], [-0.05, -0.1, 0.0]])


def test_sigmoid_extremes():
    s = kernels.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert s.tolist() == [0.0, 0.5, 1.0]
    assert np.all(np.isfinite(s))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=10), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(z, c):
    z = np.array(z)
    p = kernels.softmax(z)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(kernels.softmax(z + c), p, atol=1e-12)
