import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latent_impact import mrr


def test_config_validation():
    with pytest.raises(ValueError):
        mrr.MrrConfig(c1=1.0)
    with pytest.raises(ValueError):
        mrr.MrrConfig(n_trades=10)
    with pytest.raises(ValueError):
        mrr.MrrConfig(s=-1.0)


def test_uncorrelated_signs():
    r = mrr.simulate(mrr.MrrConfig(1.0, 0.0, 0.0, 200_000, seed=3))
    assert abs(r.measured_upsilon - 0.5) < 3 * r.upsilon_stderr + 1e-12


def test_persistent_signs():
    r = mrr.simulate(mrr.MrrConfig(1.0, 0.9, 0.0, 400_000, seed=4))
    target = math.sqrt((1 - 0.81) / 4)
    assert abs(r.measured_upsilon - target) < 3 * r.upsilon_stderr
    assert abs(r.measured_c1 - 0.9) < 3 * r.c1_stderr


def test_pure_news():
    r = mrr.simulate(mrr.MrrConfig(0.0, 0.3, 0.2, 200_000, seed=5))
    assert abs(r.measured_upsilon - 0.2) < 3 * r.upsilon_stderr


@settings(max_examples=10)
@given(st.floats(0.1, 2.0), st.floats(-0.8, 0.8), st.floats(0.0, 0.5), st.integers(0, 2**31))
def test_returns_white_and_closure(s, c1, v0, seed):
    r = mrr.simulate(mrr.MrrConfig(s, c1, v0, 100_000, seed))
    assert abs(r.autocorr_z()) < 4.5
    assert abs(r.closure_z()) < 4.5


def test_seed_determinism():
    cfg = mrr.MrrConfig(1.0, 0.4, 0.1, 50_000, seed=11)
    a, b = mrr.simulate(cfg), mrr.simulate(cfg)
    assert a == b
    assert a.to_json() == b.to_json()
    assert mrr.simulate(mrr.MrrConfig(1.0, 0.4, 0.1, 50_000, seed=12)) != a


def test_replicas_are_independent():
    reps = mrr.simulate_replicas(mrr.MrrConfig(1.0, 0.2, 0.0, 20_000, seed=1), 3)
    assert len({r.measured_upsilon for r in reps}) == 3
    assert [r.measured_upsilon for r in reps] == [
        r.measured_upsilon for r in mrr.simulate_replicas(mrr.MrrConfig(1.0, 0.2, 0.0, 20_000, seed=1), 3)]


def test_vol_budget_examples():
    assert mrr.vol_budget(mrr.MrrConfig(1.0, 0.3, 0.0))["trade_induced_fraction"] == 1.0
    v0 = 0.3 * math.sqrt(0.25 / 0.91)
    cfg = mrr.MrrConfig(1.0, 0.0, v0)
    assert cfg.upsilon * 0.3 == pytest.approx(v0)
    assert mrr.vol_budget(cfg)["trade_induced_fraction"] == pytest.approx(0.91)
    b = mrr.vol_budget(cfg, NT=100)
    assert b["sigma_T"] == pytest.approx(10 * cfg.upsilon)
    with pytest.raises(ValueError):
        mrr.vol_budget(cfg, NT=0)


def test_vol_budget_measured():
    cfg = mrr.MrrConfig(1.0, 0.3, 0.2, 1_000_000, seed=0)
    b = mrr.vol_budget(cfg, result=mrr.simulate(cfg))
    assert b["measured_fraction"] == pytest.approx(b["trade_induced_fraction"], rel=0.02)


def test_json(tmp_path):
    r = mrr.simulate(mrr.MrrConfig(1.0, 0.0, 0.0, 10_000, seed=0))
    path = tmp_path / "mrr.json"
    r.to_json(path)
    d = json.load(open(path))
    assert d["analytic_upsilon"] == 0.5 and d["config"]["seed"] == 0
