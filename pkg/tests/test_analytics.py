import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latent_impact import StockRecord
from latent_impact import analytics as an
from latent_impact import closed_form as cf


def write(path, lines):
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return path


def test_empty_file_gives_empty_universe(tmp_path):
    with pytest.warns(UserWarning, match="empty"):
        u = an.ingest(write(tmp_path / "e.csv", []))
    assert len(u) == 0


def test_bad_header(tmp_path):
    with pytest.raises(an.IngestError, match="header"):
        an.ingest(write(tmp_path / "h.csv", ["ticker,vol,adv,mcap", "A,0.02,1e6,1e9"]))


def test_negative_volume_row_rejected(tmp_path):
    rows = ["ticker,sigma1,adv,mcap"] + [f"S{i},0.02,1e6,1e9" for i in range(20)] + ["BAD,0.02,-5,1e9"]
    with pytest.warns(UserWarning, match="line 22"):
        u = an.ingest(write(tmp_path / "n.csv", rows))
    assert len(u) == 20
    assert u.row_errors[0][0] == 22 and "v1" in u.row_errors[0][1]


def test_too_many_bad_rows(tmp_path):
    rows = ["ticker,sigma1,adv,mcap"] + [f"S{i},0.02,1e6,1e9" for i in range(8)] + ["X,abc,1,1", "Y,0.1,1"]
    with pytest.raises(an.IngestError) as info:
        an.ingest(write(tmp_path / "b.csv", rows))
    assert [ln for ln, _ in info.value.row_errors] == [10, 11]


def test_duplicate_ticker_row(tmp_path):
    rows = ["ticker,sigma1,adv,mcap"] + [f"S{i},0.02,1e6,1e9" for i in range(20)] + ["S3,0.02,1e6,1e9"]
    with pytest.warns(UserWarning, match="duplicate"):
        u = an.ingest(write(tmp_path / "d.csv", rows))
    assert len(u) == 20


def test_synthetic_round_trip(tmp_path):
    u = an.synthetic_universe(950, seed=1)
    assert u.provenance["synthetic"]
    u.to_csv(tmp_path / "u.csv")
    back = an.ingest(tmp_path / "u.csv")
    assert back.records == u.records


def test_synthetic_is_seeded():
    assert an.synthetic_universe(50, seed=2).records == an.synthetic_universe(50, seed=2).records
    assert an.synthetic_universe(50, seed=2).records != an.synthetic_universe(50, seed=3).records


def test_single_record_multiplier():
    u = an.Universe([StockRecord("A", 0.025, 1.0, 200.0)])
    assert an.multipliers(u, delta=0.10).M[0] == pytest.approx(0.625, rel=1e-14)
    assert an.multipliers(u, tm=16.0).M[0] == an.multipliers(u, delta=0.10).M[0]
    with pytest.raises(ValueError):
        an.multipliers(u)
    with pytest.raises(ValueError):
        an.multipliers(u, delta=0.1, tm=16.0)


def test_doubling_volume_halves_multipliers():
    u = an.synthetic_universe(30, seed=4)
    u2 = an.Universe([StockRecord(r.ticker, r.sigma1, 2 * r.v1, r.mcap) for r in u.records])
    np.testing.assert_allclose(an.multipliers(u2, delta=0.1).M, 0.5 * an.multipliers(u, delta=0.1).M, rtol=1e-14)


def test_modes_agree_record_wise():
    u = an.synthetic_universe(40, seed=5)
    by_delta = an.multipliers(u, delta=0.1).M
    by_tm = [cf.gk_multiplier_tm(r, 0.01 / r.sigma1**2) for r in u.records]
    np.testing.assert_allclose(by_delta, by_tm, rtol=1e-12)


@settings(max_examples=20)
@given(st.permutations(range(25)))
def test_permutation_invariance(perm):
    u = an.synthetic_universe(25, seed=6)
    shuffled = an.Universe([u.records[i] for i in perm])
    a = dict(zip(u.tickers, an.multipliers(u, delta=0.1).M))
    b = dict(zip(shuffled.tickers, an.multipliers(shuffled, delta=0.1).M))
    assert a == b
    fa = an.summarize_and_fit(an.multipliers(u, delta=0.1))
    fb = an.summarize_and_fit(an.multipliers(shuffled, delta=0.1))
    np.testing.assert_allclose(fa.coefficients, fb.coefficients, rtol=1e-8, atol=1e-10)


def test_fit_scale_equivariance():
    u = an.synthetic_universe(60, seed=7)
    t = an.multipliers(u, delta=0.1)
    t10 = an.MultiplierTable(t.tickers, 10 * t.mcap, t.M, t.mode)
    f, f10 = an.summarize_and_fit(t), an.summarize_and_fit(t10)
    x = np.log10(t.mcap)
    np.testing.assert_allclose(f10(x + 1), f(x), rtol=1e-8, atol=1e-10)
    assert f10.residual_std == pytest.approx(f.residual_std, rel=1e-8)


def test_residuals_orthogonal_to_design():
    t = an.multipliers(an.synthetic_universe(200, seed=8), delta=0.1)
    f = an.summarize_and_fit(t)
    x = np.log10(t.mcap)
    resid = t.M - f(x)
    A = np.vander(x - x.mean(), 4, increasing=True)
    assert np.max(np.abs(A.T @ resid)) < 1e-8 * len(x)


def test_all_equal_multipliers():
    rng = np.random.default_rng(0)
    mcap = 10 ** rng.uniform(8, 12, 20)
    t = an.MultiplierTable(tuple(f"T{i}" for i in range(20)), mcap, np.full(20, 0.7), {"delta": 0.1})
    f = an.summarize_and_fit(t)
    assert f.coefficients[0] == pytest.approx(0.7) and np.allclose(f.coefficients[1:], 0, atol=1e-9)
    assert f.std_M == 0 and f.residual_std < 1e-12 and not f.non_monotonic


def test_rank_deficient_design():
    t = an.MultiplierTable(tuple(f"T{i}" for i in range(10)), np.full(10, 1e9), np.linspace(0.5, 1, 10), {})
    with pytest.raises(np.linalg.LinAlgError):
        an.summarize_and_fit(t)
    with pytest.raises(ValueError):
        an.summarize_and_fit(an.MultiplierTable(("a",), np.ones(1), np.ones(1), {}))


def test_non_monotonic_flag():
    mcap = np.logspace(8, 12, 30)
    x = np.log10(mcap)
    bump = an.MultiplierTable(tuple(map(str, range(30))), mcap, 1 - (x - 10) ** 2, {})
    ramp = an.MultiplierTable(tuple(map(str, range(30))), mcap, x, {})
    assert an.summarize_and_fit(bump).non_monotonic
    assert not an.summarize_and_fit(ramp).non_monotonic


def test_synthetic_mean_order_one():
    f = an.summarize_and_fit(an.multipliers(an.synthetic_universe(950, seed=1), delta=0.1))
    assert 0.1 < f.mean_M < 10


def test_outputs(tmp_path):
    t = an.multipliers(an.synthetic_universe(20, seed=9), delta=0.1)
    t.to_csv(tmp_path / "m.csv")
    t.to_points(tmp_path / "p.txt")
    pts = np.loadtxt(tmp_path / "p.txt")
    np.testing.assert_array_equal(pts[:, 1], t.M)
    an.summarize_and_fit(t).to_json(tmp_path / "f.json")
    assert "coefficients" in (tmp_path / "f.json").read_text()


def test_cost_estimate_transient_example():
    rec = StockRecord("A", 0.025, 1e6, 1e9)
    out = an.cost_estimate(rec, 0.01 * 1e6, 1.0, 0.5)
    assert out["transient"] == pytest.approx(0.00125, rel=1e-14)
    assert out["permanent"] is None and out["flags"] == []


def test_cost_estimate_zero():
    out = an.cost_estimate(StockRecord("A", 0.025, 1e6, 1e9), 0.0, 1.0, tm=16.0)
    assert out["transient"] == 0 and out["permanent"] == 0


def test_cost_estimate_futures_mode():
    # one contract against a volume counted in contracts per day
    rec = StockRecord("FUT", 0.01, 2.0e5, 1.0)
    out = an.cost_estimate(rec, 1.0, 1.0, tm=100.0)
    assert out["permanent"] == pytest.approx(0.5 * 0.01 / (2.0e5 * 10.0), rel=1e-14)
    assert out["permanent"] == cf.permanent_impact(0.01, 2.0e5, 100.0, 1.0)


def test_cost_estimate_flags():
    rec = StockRecord("A", 0.02, 1e6, 1e9)
    assert math.isnan(an.cost_estimate(rec, 0.5e6, 1.0)["transient"])
    assert any("unreliable" in f for f in an.cost_estimate(rec, 0.1e6, 1.0)["flags"])
    assert any("not short" in f for f in an.cost_estimate(rec, 1e4, 20.0, delta=0.02)["flags"])
