import datetime as dt

import numpy as np
import pytest

from stlinear.data import Calendar
from stlinear.model import ModelConfig, STLinear


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def monday_calendar():
    return Calendar(dt.datetime(2024, 1, 1), 5)


def tiny_config(**kw):
    base = dict(T_h=6, T_p=3, d=3, e=2, c=2, L=2, hidden=4, kernel=3, N=3, N_d=5, seed=7)
    base.update(kw)
    return ModelConfig(**base)


def randomized_model(cfg, seed=0, scale=0.5):
    """Model with every tensor (biases included) drawn at random."""
    model = STLinear(cfg)
    r = np.random.default_rng(seed)
    for v in model.params.values.values():
        v[...] = r.normal(scale=scale, size=v.shape)
    return model


def random_slots(r, B, N_d):
    return (r.integers(0, N_d, B), r.integers(0, 7, B), r.integers(0, N_d, B), r.integers(0, 7, B))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in mod.RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
