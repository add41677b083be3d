import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stlinear.decomposition import decompose, decompose_adjoint, moving_average


def direct_replicate_average(x, k):
    """Oracle: explicit padding then a plain windowed mean."""
    h = (k - 1) // 2
    padded = [x[0]] * h + list(x) + [x[-1]] * h
    return np.array([sum(padded[t : t + k]) / k for t in range(len(x))])


def test_constant_is_fixed_point():
    np.testing.assert_allclose(moving_average([5.0] * 5, 3), [5.0] * 5, atol=1e-15)


def test_small_example():
    np.testing.assert_allclose(moving_average([1.0, 2, 3, 4, 5], 3), [4 / 3, 2, 3, 4, 14 / 3], atol=1e-14)


@pytest.mark.parametrize("k", [3, 5, 15, 25])
def test_sweep_kernels_accepted_and_match_oracle(rng, k):
    x = rng.normal(size=48)
    np.testing.assert_allclose(moving_average(x, k), direct_replicate_average(x, k), atol=1e-12)


@pytest.mark.parametrize("k", [0, 2, 4, -1, 25])
def test_bad_kernels_rejected(k):
    with pytest.raises(ValueError):
        moving_average(np.zeros(12), k)  # 25 > 2*12-1


def test_degenerate_kernel():
    x = np.array([3.0, -1.0, 2.0])
    tr, rem = decompose(x, 1)
    np.testing.assert_array_equal(tr, x)
    np.testing.assert_array_equal(rem, 0)


@pytest.mark.parametrize("k", [3, 5, 15])
def test_line_interior_has_zero_remainder(k):
    x = np.arange(40.0)
    h = (k - 1) // 2
    _, rem = decompose(x, k)
    np.testing.assert_allclose(rem[h:-h], 0, atol=1e-12)


def test_batched_rows_independent(rng):
    X = rng.normal(size=(3, 4, 12))
    tr, _ = decompose(X, 5)
    for i in range(3):
        for j in range(4):
            np.testing.assert_allclose(tr[i, j], direct_replicate_average(X[i, j], 5), atol=1e-12)


windows = arrays(np.float64, st.integers(13, 60), elements=st.floats(-1e3, 1e3))
kernels_ = st.sampled_from([1, 3, 5, 15, 25])


@settings(max_examples=100, deadline=None)
@given(windows, kernels_)
def test_reconstruction(x, k):
    tr, rem = decompose(x, k)
    np.testing.assert_allclose(tr + rem, x, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max()))


@settings(max_examples=100, deadline=None)
@given(windows, kernels_, st.floats(-100, 100))
def test_shift_equivariance(x, k, c):
    np.testing.assert_allclose(decompose(x + c, k).trend, decompose(x, k).trend + c, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([3, 5, 15, 25]))
def test_smoothing_reduces_variance(seed, k):
    x = np.random.default_rng(seed).normal(size=4 * k + 7)
    assert np.var(decompose(x, k).trend) <= np.var(x)


def test_adjoint_matches_finite_differences(rng):
    x, gt, gr = rng.normal(size=10), rng.normal(size=10), rng.normal(size=10)
    analytic = decompose_adjoint(gt, gr, 5)

    def f(v):
        tr, rem = decompose(v, 5)
        return gt @ tr + gr @ rem

    h = 1e-6
    numeric = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(10)])
    np.testing.assert_allclose(analytic, numeric, atol=1e-8)
