import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stlinear.errors import CheckError, DimensionError, TrainingError
from stlinear.numeric import (
    AdamState,
    adam_step,
    affine_backward,
    affine_forward,
    finite_diff_check,
    gelu,
    gelu_backward,
)


def naive_affine(W, b, x):
    out = []
    for i in range(len(W)):
        acc = b[i]
        for j in range(len(x)):
            acc += W[i][j] * x[j]
        out.append(acc)
    return np.array(out)


def test_affine_identity():
    np.testing.assert_array_equal(affine_forward(np.eye(2), np.zeros(2), [3.0, 4.0]), [3.0, 4.0])


def test_affine_hand_sum():
    np.testing.assert_array_equal(affine_forward([[1.0, 1.0]], [1.0], [2.0, 3.0]), [6.0])


def test_affine_matches_loop_oracle(rng):
    W, b, x = rng.normal(size=(5, 7)), rng.normal(size=5), rng.normal(size=7)
    np.testing.assert_allclose(affine_forward(W, b, x), naive_affine(W.tolist(), b.tolist(), x.tolist()),
                               rtol=1e-13, atol=1e-13)


def test_affine_shape_error_reports_shapes():
    with pytest.raises(DimensionError, match=r"W\(2, 3\).*x\(2,\)"):
        affine_forward(np.zeros((2, 3)), np.zeros(2), np.zeros(2))
    with pytest.raises(DimensionError):
        affine_backward(np.zeros((2, 3)), np.zeros(3), np.zeros(3))


def test_affine_backward_zero_grad(rng):
    gW, gb, gx = affine_backward(rng.normal(size=(3, 4)), rng.normal(size=4), np.zeros(3))
    assert not gW.any() and not gb.any() and not gx.any()


def test_affine_backward_by_hand():
    a, b, g = 2.0, -3.0, 0.5
    _, _, gx = affine_backward([[a, b]], [1.0, 1.0], [g])
    np.testing.assert_array_equal(gx, [a * g, b * g])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_affine_backward_matches_finite_differences(n_out, n_in, seed):
    r = np.random.default_rng(seed)
    params = {"W": r.normal(size=(n_out, n_in)), "b": r.normal(size=n_out), "x": r.normal(size=n_in)}
    weights = r.normal(size=n_out)

    def loss():
        out = affine_forward(params["W"], params["b"], params["x"])
        gW, gb, gx = affine_backward(params["W"], params["x"], weights)
        return float(weights @ out), {"W": gW, "b": gb, "x": gx}

    assert finite_diff_check(loss, params, eps=1e-5).max_rel_error < 1e-6


def test_gelu_values():
    assert gelu(0.0) == 0.0
    assert abs(gelu(10.0) - 10.0) < 1e-9
    oracle = float(mpmath.mpf(1) * mpmath.ncdf(1))
    assert abs(gelu(1.0) - oracle) < 1e-14
    assert abs(gelu(1.0) - 0.841345) < 1e-6


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30))
def test_gelu_odd_part_is_identity(x):
    assert gelu(x) - gelu(-x) == pytest.approx(x, abs=1e-12)


def test_gelu_monotone_above_threshold():
    x = np.linspace(-0.75, 8, 5000)
    assert np.all(np.diff(gelu(x)) >= 0)


def test_gelu_backward_matches_finite_differences():
    x = np.linspace(-5, 5, 101)
    h = 1e-6
    np.testing.assert_allclose(gelu_backward(x), (gelu(x + h) - gelu(x - h)) / (2 * h), atol=1e-8)


def test_adam_zero_grad_leaves_param():
    p = np.array([1.5, -2.0])
    st_ = AdamState.like(p)
    adam_step(p, np.zeros(2), st_, 1e-3)
    np.testing.assert_array_equal(p, [1.5, -2.0])
    assert st_.step == 1


def test_adam_first_step_magnitude_is_lr():
    p = np.array([0.0])
    adam_step(p, np.array([1.0]), AdamState.like(p), 2e-4)
    # m_hat / sqrt(v_hat) = 1 exactly, so only epsilon perturbs the step
    assert p[0] == pytest.approx(-2e-4, rel=1e-7)


def test_adam_decreases_quadratic():
    p = np.array([1.0])
    state = AdamState.like(p)
    values = [p[0] ** 2]
    for _ in range(10):
        adam_step(p, 2 * p, state, 0.05)
        values.append(p[0] ** 2)
    assert all(b < a for a, b in zip(values, values[1:]))
    assert state.step == 10


def test_adam_deterministic(rng):
    g = rng.normal(size=(4, 3))
    outs = []
    for _ in range(2):
        p = np.ones((4, 3))
        s = AdamState.like(p)
        for _ in range(3):
            adam_step(p, g, s, 1e-2)
        outs.append(p.tobytes())
    assert outs[0] == outs[1]


def test_adam_rejects_non_finite_and_bad_shapes():
    p = np.zeros(2)
    with pytest.raises(TrainingError, match="'W_p'"):
        adam_step(p, np.array([np.nan, 0.0]), AdamState.like(p), 1e-3, name="W_p")
    with pytest.raises(DimensionError):
        adam_step(p, np.zeros(3), AdamState.like(p), 1e-3)
    with pytest.raises(ValueError):
        adam_step(p, np.zeros(2), AdamState.like(p), 0.0)


def test_finite_diff_check_quadratic_exact():
    params = {"p": np.array([0.3, -1.2, 2.0])}

    def loss():
        return float((params["p"] ** 2).sum()), {"p": 2 * params["p"]}

    assert finite_diff_check(loss, params, eps=1e-5).max_rel_error < 1e-9


def test_finite_diff_check_flags_wrong_gradient():
    params = {"p": np.array([0.3, -1.2, 2.0])}
    res = finite_diff_check(lambda: float((params["p"] ** 2).sum()), params, eps=1e-5,
                            grads={"p": 4 * params["p"]})
    assert res.max_rel_error == pytest.approx(1.0, abs=1e-6)


def test_finite_diff_check_rejects_nondeterminism():
    params = {"p": np.array([1.0])}
    counter = iter(range(1000))
    with pytest.raises(CheckError):
        finite_diff_check(lambda: float(next(counter)), params, grads={"p": np.zeros(1)})


def test_finite_diff_check_eps_range():
    with pytest.raises(ValueError):
        finite_diff_check(lambda: 0.0, {}, eps=1e-2, grads={})
