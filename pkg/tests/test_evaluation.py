import datetime as dt
import math

import numpy as np
import pytest
from conftest import randomized_model
from hypothesis import given, settings
from hypothesis import strategies as st

from stlinear.data import Calendar
from stlinear.evaluation import (
    EvalReport,
    compute_metrics,
    count_macs,
    estimate_memory,
    instrumented_forward,
    instrumented_macs,
    parameter_count,
)
from stlinear.model import ModelConfig, STLinear, forward_sample


def test_perfect_predictions():
    y = np.array([[1.0, 2.0], [3.0, 4.0]])
    r = compute_metrics(y, y)
    assert (r.mae, r.rmse, r.mape) == (0.0, 0.0, 0.0)


def test_hand_example():
    r = compute_metrics(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
    assert r.mae == 3.5
    assert r.rmse == pytest.approx(math.sqrt(12.5)) == pytest.approx(3.53553, abs=1e-5)
    assert r.mape == pytest.approx(100.0)


def test_mape_masks_zero_targets():
    r = compute_metrics(np.array([[1.0, 5.0]]), np.array([[0.0, 4.0]]))
    assert r.mape == pytest.approx(25.0) and r.mask_count == 1
    assert r.mae == 1.0


def test_empty_mape_mask_is_undefined():
    r = compute_metrics(np.array([[1.0, 2.0]]), np.zeros((1, 2)))
    assert math.isnan(r.mape) and r.mae == 1.5
    assert "mape=undefined" in r.to_text()


def test_per_horizon_breakdown(rng):
    p, y = rng.normal(size=(5, 3, 4)), rng.uniform(1, 2, size=(5, 3, 4))
    r = compute_metrics(p, y)
    np.testing.assert_allclose(r.horizon_mae, np.abs(p - y).mean(axis=(0, 1)))
    assert r.horizon_mae.mean() == pytest.approx(r.mae)
    assert r.samples == 5


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rmse_dominates_mae_and_permutation_invariance(seed):
    r_ = np.random.default_rng(seed)
    p, y = r_.normal(size=(6, 4, 3)), r_.normal(size=(6, 4, 3))
    r = compute_metrics(p, y)
    assert r.rmse >= r.mae >= 0
    perm_s, perm_n = r_.permutation(6), r_.permutation(4)
    r2 = compute_metrics(p[perm_s][:, perm_n], y[perm_s][:, perm_n])
    assert r2.mae == pytest.approx(r.mae, rel=1e-12) and r2.rmse == pytest.approx(r.rmse, rel=1e-12)


def test_report_serialization(tmp_path):
    r = compute_metrics(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
    text = r.to_text()
    kv = dict(line.split("=") for line in text.strip().splitlines())
    assert float(kv["mae"]) == 3.5 and kv["samples"] == "1"
    r.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "horizon,mae,rmse,mape" and len(lines) == 3
    assert isinstance(r, EvalReport)


# -- MACs / memory ----------------------------------------------------------------------

REFERENCE_CFG = dict(d=32, e=8, c=32, L=3, hidden=160, T_h=12, T_p=12, N=170, N_d=288)


def test_single_affine_macs():
    cfg = ModelConfig(d=2, T_h=3, T_p=1, e=1, c=1, L=1, hidden=1, kernel=1, N=1,
                      use_time_of_day=False, use_day_of_week=False)
    # encoder has two d x T_h branches (6 MACs each)
    assert count_macs(cfg).macs_per_sample == 2 * 6 + 2 * 1 * 2 + 1 * 2


@pytest.mark.parametrize("mode", ["inference", "training"])
def test_macs_linear_in_nodes(mode):
    for N in (1, 7, 170, 307):
        a = count_macs(ModelConfig(**{**REFERENCE_CFG, "N": N}), mode, 100)
        b = count_macs(ModelConfig(**{**REFERENCE_CFG, "N": 2 * N}), mode, 100)
        assert b.macs_per_sample == 2 * a.macs_per_sample
        assert b.macs_per_epoch == 2 * a.macs_per_epoch


def test_training_macs_per_epoch():
    cfg = ModelConfig(**REFERENCE_CFG)
    inf = count_macs(cfg, "inference")
    tr = count_macs(cfg, "training", samples_per_epoch=10699)
    pool = 2 * (32 * 12 * 8 + 32 * 8) * 170
    assert tr.macs_per_sample == 3 * (inf.macs_per_sample + pool)
    assert tr.macs_per_epoch == tr.macs_per_sample * 10699
    with pytest.raises(ValueError):
        count_macs(cfg, "bogus")


def test_reference_config_instrumented_count_matches(rng):
    cfg = ModelConfig(**REFERENCE_CFG, kernel=3)
    m = STLinear(cfg)
    cal = Calendar(dt.datetime(2016, 7, 1), 5)
    hist = rng.normal(size=(170, 12))
    assert instrumented_macs(m, hist, 5000, cal) == count_macs(cfg).macs_per_sample


def test_instrumented_forward_agrees_with_batched(rng):
    cal = Calendar(dt.datetime(2016, 7, 1), 5)
    cfg = ModelConfig(T_h=8, T_p=4, d=4, e=3, c=2, L=2, hidden=6, kernel=5, N=3)
    m = randomized_model(cfg)
    hist = rng.normal(size=(3, 8))
    batched = forward_sample(m, hist, 900, cal)
    for i in range(3):
        pred, count = instrumented_forward(m, hist[i], i, 900, cal)
        np.testing.assert_allclose(pred, batched[i], atol=1e-12)
        assert count * 3 == count_macs(cfg).macs_per_sample


@pytest.mark.parametrize("flags", [(1, 1, 1), (0, 1, 1), (1, 0, 0)])
def test_parameter_count_matches_enumeration(flags):
    cfg = ModelConfig(T_h=5, T_p=2, d=3, e=2, c=4, L=2, hidden=7, N=6, N_d=12,
                      use_spatial=bool(flags[0]), use_time_of_day=bool(flags[1]),
                      use_day_of_week=bool(flags[2]))
    enumerated = sum(v.size for v in STLinear(cfg).params.values.values())
    assert parameter_count(cfg) == enumerated
    if all(flags):
        d, T_h, e, c, N, N_d, L, hid, emb, T_p = 3, 5, 2, 4, 6, 12, 2, 7, cfg.emb_dim, 2
        assert enumerated == (2 * d * T_h * e + 2 * d * e + N * e + N_d * c + 7 * c
                              + L * (2 * hid * emb + hid + emb) + T_p * emb + T_p)


def test_memory_model():
    cfg = ModelConfig(**REFERENCE_CFG)
    params = parameter_count(cfg) * 8
    b1 = estimate_memory(cfg, 1, "training")
    b32 = estimate_memory(cfg, 32, "training")
    act = b1 - 3 * params
    assert b32 - 3 * params == 32 * act
    assert estimate_memory(cfg, 1, "inference") == params + act
