import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stlinear.data import (
    PEMS_DATASETS,
    Calendar,
    Normalizer,
    SeriesDataset,
    fit_normalizer,
    load_dataset,
    make_windows,
    save_stf,
    split_samples,
    synthetic_dataset,
    time_indices,
)
from stlinear.errors import LoadError, NormalizationError

# 62 days of 5-minute readings, July-August 2016
PEMS08_STEPS = 62 * 288


def toy(N=2, T=10, start="2024-01-01T00:00", interval=5):
    return SeriesDataset(np.arange(N * T, dtype=float).reshape(N, T) + 1, start, interval)


def test_pems_registry_node_counts():
    assert PEMS_DATASETS["PEMS04"][0] == 307
    assert PEMS_DATASETS["PEMS08"][0] == 170
    assert PEMS_DATASETS["PEMS03"][0] == 358
    assert PEMS_DATASETS["PEMS07"][0] == 883


def test_stf_round_trip_is_exact(tmp_path, rng):
    ds = SeriesDataset(rng.normal(size=(2, 10)) * 1e3, "2018-01-01T00:00", 5, name="toy")
    path = tmp_path / "toy.stf"
    save_stf(path, ds)
    assert path.read_bytes().startswith(b"STF1 2 10\n")
    back = load_dataset(path)
    assert back.values.tobytes() == ds.values.tobytes()
    assert back.start_time == ds.start_time and back.interval_minutes == 5 and back.name == "toy"


def test_csv_load(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n3,4\n5,6\n")
    ds = load_dataset(p, start_time="2024-01-01", interval_minutes=5)
    np.testing.assert_array_equal(ds.values, [[1, 3, 5], [2, 4, 6]])


def test_csv_errors_carry_location(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(LoadError, match=":3:"):
        load_dataset(p, start_time="2024-01-01")
    p.write_text("a,b\n1,2\n3,nan\n")
    with pytest.raises(LoadError, match=":3:.*column 1"):
        load_dataset(p, start_time="2024-01-01")
    p.write_text("a,b\n1,x\n")
    with pytest.raises(LoadError, match=":2:"):
        load_dataset(p, start_time="2024-01-01")


def test_load_errors(tmp_path):
    with pytest.raises(LoadError, match="not found"):
        load_dataset(tmp_path / "missing.stf", start_time="2024-01-01")
    ds = toy()
    path = tmp_path / "t.stf"
    save_stf(path, ds)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(LoadError, match="expected 160 data bytes"):
        load_dataset(path)
    with pytest.raises(LoadError, match="node 1, step 2"):
        SeriesDataset(np.array([[1.0, 2, 3], [1, 2, np.inf]]), "2024-01-01", 5)


def test_steps_per_day_requires_exact_division():
    assert toy().steps_per_day == 288
    with pytest.raises(ValueError):
        toy(interval=7)


def test_window_count_and_indexing():
    ds = toy(T=10)
    w = make_windows(ds, 3, 2)
    assert len(w) == 6
    s = w[0]
    np.testing.assert_array_equal(s.history, ds.values[:, 0:3])
    np.testing.assert_array_equal(s.target, ds.values[:, 3:5])
    assert s.anchor_t == 2
    np.testing.assert_array_equal(w.histories()[5], w[5].history)
    np.testing.assert_array_equal(w.targets()[5], w[5].target)


def test_window_too_short():
    with pytest.raises(ValueError):
        make_windows(toy(T=4), 3, 2)


def test_pems08_sized_window_count():
    ds = SeriesDataset(np.ones((170, PEMS08_STEPS)), "2016-07-01", 5)
    w = make_windows(ds, 12, 12)
    anchors = [a for a in range(PEMS08_STEPS) if a - 11 >= 0 and a + 12 < PEMS08_STEPS]
    assert len(w) == len(anchors) == PEMS08_STEPS - 23
    np.testing.assert_array_equal(w.anchors, anchors)


@pytest.mark.parametrize("M, sizes", [(100, (60, 20, 20)), (10, (6, 2, 2)), (17833, (10699, 3567, 3567))])
def test_split_sizes(M, sizes):
    ds = toy(N=1, T=M + 1)
    w = make_windows(ds, 1, 1)
    assert len(w) == M
    tr, va, te = split_samples(w)
    assert (len(tr), len(va), len(te)) == sizes
    assert (math.floor(0.6 * M), math.floor(0.8 * M) - math.floor(0.6 * M)) == sizes[:2]


def test_split_is_chronological_partition():
    w = make_windows(toy(N=1, T=60), 4, 3)
    tr, va, te = split_samples(w)
    joined = np.concatenate([tr.anchors, va.anchors, te.anchors])
    np.testing.assert_array_equal(joined, w.anchors)
    assert tr.anchors.max() < va.anchors.min() and va.anchors.max() < te.anchors.min()
    with pytest.raises(ValueError):
        split_samples(w[:9])


def test_windows_stay_in_range():
    ds = toy(N=1, T=50)
    w = make_windows(ds, 7, 5)
    assert (w.anchors - 6).min() >= 0 and (w.anchors + 5).max() < ds.num_steps


def test_time_indices():
    ds = toy(T=600)
    assert time_indices(ds, 0) == (0, 0)
    assert time_indices(ds, 288) == (0, 1)
    assert time_indices(ds, 289) == (1, 1)
    with pytest.raises(IndexError):
        time_indices(ds, 600)


def test_time_indices_respect_start_time_of_day():
    ds = SeriesDataset(np.ones((1, 300)), "2024-01-07T23:55", 5)  # a Sunday
    assert time_indices(ds, 0) == (287, 6)
    assert time_indices(ds, 1) == (0, 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(-10_000, 10_000), st.sampled_from([5, 15, 60]))
def test_calendar_periodic_in_weeks(t, interval):
    cal = Calendar(dt.datetime(2016, 7, 1), interval)
    a = cal.slots(t)
    b = cal.slots(t + 7 * cal.steps_per_day)
    assert (int(a[0]), int(a[1])) == (int(b[0]), int(b[1]))
    assert 0 <= a[0] < cal.steps_per_day and 0 <= a[1] < 7


def test_normalizer_examples():
    n = fit_normalizer(np.array([0.0, 2.0]))
    assert (n.mean, n.std) == (1.0, 1.0)
    np.testing.assert_array_equal(n.normalize([0.0, 2.0]), [-1.0, 1.0])
    with pytest.raises(NormalizationError):
        fit_normalizer(np.full(5, 3.0))
    with pytest.raises(NormalizationError):
        Normalizer(0.0, 0.0)


def test_normalizer_round_trip(rng):
    x = rng.normal(50, 20, size=(30, 12))
    n = fit_normalizer(x)
    np.testing.assert_allclose(n.denormalize(n.normalize(x)), x, rtol=0, atol=1e-12 * np.abs(x).max())


def test_normalizer_uses_training_histories_only():
    ds = toy(N=2, T=40)
    tr, _, _ = split_samples(make_windows(ds, 4, 2))
    n = fit_normalizer(tr)
    span = ds.values[:, : tr.anchors.max() + 1]
    assert n.mean == pytest.approx(span.mean()) and n.std == pytest.approx(span.std())


def test_synthetic_dataset_shape():
    ds = synthetic_dataset(8, 21, 24, seed=3)
    assert ds.values.shape == (8, 504) and ds.steps_per_day == 24
    assert (ds.values > 0).all()
