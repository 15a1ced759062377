import csv
import hashlib
import json

import numpy as np
import pytest

from latent_impact import config, files
from latent_impact.cli import main

LINEAR_INI = """
[model]
sigma1 = 1.0
nu = 0
liquidity = 1.0

[metaorder]
Q = 0.5
T = 1.0
"""


@pytest.fixture
def ini(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(LINEAR_INI)
    return path


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_precedence(ini):
    cfg = config.load_config(ini, {"metaorder.Q": "2"})
    assert cfg.getfloat("metaorder", "Q") == 2.0
    assert cfg.getfloat("metaorder", "T") == 1.0
    assert cfg.get("grid", "scheme") == "cn"


def test_missing_key_named():
    with pytest.raises(config.ConfigError, match=r"\[model\] sigma1"):
        config.model_from_config(config.load_config())


def test_model_forms():
    a = config.model_from_config(config.load_config(overrides={"model.sigma1": 1, "model.nu": 0.25, "model.lam": 2}))
    b = config.model_from_config(config.load_config(overrides={"model.sigma1": 1, "model.v1": a.v1, "model.tm": 4}))
    assert b.nu == pytest.approx(0.25) and b.lam == pytest.approx(2.0)
    with pytest.raises(config.ConfigError):
        config.model_from_config(config.load_config(overrides={"model.sigma1": -1, "model.nu": 1, "model.lam": 1}))


def test_sweep_values():
    v = config.sweep_values(config.load_config())
    assert len(v) == 7 and v[0] == pytest.approx(100) and v[-1] == pytest.approx(1e4)
    v = config.sweep_values(config.load_config(overrides={"sweep.values": "1, 2 3"}))
    assert list(v) == [1.0, 2.0, 3.0]


def test_packaged_thresholds():
    th = config.load_thresholds()
    assert th.getfloat("sqrt_law", "tolerance") == 0.05


def test_simulate_pde(ini, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(ini), "--engine", "pde", "--out", str(out)]) == 0
    traj = files.read_trajectory(out / "trajectory_pde")
    assert traj.impact[0] == 0
    meta = json.loads((out / "trajectory_pde.json").read_text())
    assert meta["config"]["model"]["liquidity"] == "1.0"
    assert meta["config"]["grid"]["scheme"] == "cn"


def test_simulate_engines_agree(ini, tmp_path):
    peaks = {}
    for engine in ("pde", "green"):
        assert main(["simulate", "--config", str(ini), "--engine", engine, "--out", str(tmp_path)]) == 0
        peaks[engine] = files.read_trajectory(tmp_path / f"trajectory_{engine}").peak
    assert peaks["pde"] == pytest.approx(peaks["green"], rel=0.02)


def test_simulate_missing_key(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text(LINEAR_INI.replace("sigma1 = 1.0\n", ""))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "sigma1" in capsys.readouterr().err


def test_simulate_numerical_failure_writes_diagnostics(ini, tmp_path, monkeypatch):
    from latent_impact import pde

    def lose_price(*args, **kw):
        raise pde.ZeroCrossingLost("no boundary", pde.BookState(np.zeros(3), 0.25, t=0.5))

    monkeypatch.setattr(pde, "run_metaorder", lose_price)
    assert main(["simulate", "--config", str(ini), "--engine", "pde", "--out", str(tmp_path)]) == 3
    diag = json.loads((tmp_path / "diagnostics_pde.json").read_text())
    assert diag["last_time"] == 0.5 and diag["config"]["metaorder"]["Q"] == "0.5"


def test_sweep_default(tmp_path, capsys):
    assert main(["sweep", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "sweep_Q.json").read_text())
    assert abs(report["fit"]["slope"] - 0.5) <= 0.05
    assert "config" in report


def test_sweep_decay(tmp_path):
    assert main(["sweep", "--axis", "t", "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "sweep_t.json").read_text())["fit"]
    assert abs(fit["slope"] + 0.5) <= 0.05


def test_sweep_too_few_points(tmp_path, capsys):
    assert main(["sweep", "--set", "sweep.values=100", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--set", "sweep.Q_max=300", "--out", str(tmp_path)]) == 2


def test_multiplier_single_stock(tmp_path, capsys):
    u = tmp_path / "one.csv"
    u.write_text("ticker,sigma1,adv,mcap\nREF,0.025,1e9,2e11\n")
    assert main(["multiplier", "--universe", str(u), "--tm", "20", "--out", str(tmp_path)]) == 0
    assert "M=0.559017" in capsys.readouterr().out
    assert main(["multiplier", "--universe", str(u), "--delta", "0.10", "--out", str(tmp_path)]) == 0
    assert "M=0.625" in capsys.readouterr().out
    rows = list(csv.reader(open(tmp_path / "multipliers.csv")))
    assert rows == [["ticker", "M"], ["REF", "0.625"]]


def test_multiplier_synthetic_deterministic(tmp_path):
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["multiplier", "--synthetic", "950", "--seed", "1", "--delta", "0.1", "--out", str(out)]) == 0
        digests.append([digest(out / f) for f in ("multipliers.csv", "multipliers_points.txt", "fit.json")])
    assert digests[0] == digests[1]
    fit = json.loads((tmp_path / "a" / "fit.json").read_text())
    assert fit["provenance"]["synthetic"] and "fit" in fit


def test_multiplier_needs_one_mode(tmp_path):
    assert main(["multiplier", "--synthetic", "20", "--out", str(tmp_path)]) == 2


def test_mrr_defaults_pass_and_repeat(tmp_path):
    assert main(["mrr", "--out", str(tmp_path / "a")]) == 0
    assert main(["mrr", "--out", str(tmp_path / "b")]) == 0
    assert digest(tmp_path / "a" / "mrr.json") == digest(tmp_path / "b" / "mrr.json")


def test_mrr_pure_news(tmp_path):
    assert main(["mrr", "--s", "0", "--v0", "0.3", "--n-trades", "100000", "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "mrr.json").read_text())
    assert abs(d["measured_upsilon"] - 0.3) < 3 * d["upsilon_stderr"]


def test_mrr_bad_config(tmp_path):
    assert main(["mrr", "--c1", "1.5", "--out", str(tmp_path)]) == 2


def test_verify_filter_runs_only_perturbation(tmp_path, capsys):
    main(["verify", "--filter", "perturbation", "--out", str(tmp_path)])
    res = json.loads((tmp_path / "acceptance.json").read_text())["results"]
    assert [r["number"] for r in res] == [6]
    assert "perturbation" in res[0]["groups"]


def test_verify_unknown_filter():
    assert main(["verify", "--filter", "nothing-matches-this"]) == 2


def test_verify_coarsened_grid_fails(tmp_path):
    # the grid-halving criterion must notice a grid four times too coarse
    assert main(["verify", "--filter", "hygiene", "--coarsen", "4", "--out", str(tmp_path)]) == 1
    res = json.loads((tmp_path / "acceptance.json").read_text())["results"]
    assert len(res) == 1 and not res[0]["passed"]


def test_trajectory_round_trip(tmp_path):
    from latent_impact.pde import ImpactTrajectory
    traj = ImpactTrajectory(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.3, 0.2]), 1.0, 0.3, 0.2, {"x0": 0.5})
    files.write_trajectory(traj, tmp_path / "t", {"a": 1})
    back = files.read_trajectory(tmp_path / "t")
    np.testing.assert_array_equal(back.impact, traj.impact)
    np.testing.assert_array_equal(back.prices, traj.prices)
