import csv
import datetime as dt
import json

import numpy as np
import pytest

from helpers import synthetic_market, synthetic_spx, write_series
from pdvol.cli import SCHEMA, load_config, main
from pdvol.errors import ConfigError
from pdvol.market import PriceSeries
from pdvol.simulator import EulerConfig
from pdvol.vix import VixConfig


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# model\nalpha = 2.5\nstrikes = -0.1, 0.1\nabsorb = yes\n")
    c = load_config(str(cfg), ["alpha=3", "seed = 9"])
    assert c["alpha"] == 3.0 and c["seed"] == 9 and c["absorb"] is True
    assert c["strikes"] == [-0.1, 0.1]
    assert c["beta"] == SCHEMA["beta"][1]
    with pytest.raises(ConfigError):
        load_config(None, ["nope=1"])
    with pytest.raises(ConfigError):
        load_config(None, ["seed=1.5"])
    with pytest.raises(ConfigError):
        load_config(None, ["absorb=maybe"])


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--set", "seed=4", "--set", "n_paths=6", "--set", "steps=50"]
    c1, o1 = run(tmp_path, *args, name="a")
    c2, o2 = run(tmp_path, *args, "--set", "workers=3", name="b")
    assert c1 == c2 == 0
    for f in ("paths.csv", "paths.svg"):
        assert (o1 / f).read_bytes() == (o2 / f).read_bytes()


def test_simulate_bad_inputs(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--set", "h=0")[0] == 2
    assert "h" in capsys.readouterr().err
    assert run(tmp_path, "simulate", "--set", "bogus=1")[0] == 2
    assert run(tmp_path, "simulate", "--config", str(tmp_path / "missing.cfg"))[0] == 2


def test_missing_input_file_named(tmp_path, capsys):
    missing = tmp_path / "nowhere.csv"
    assert run(tmp_path, "vix", "--set", f"spx_file={missing}")[0] == 2
    assert str(missing) in capsys.readouterr().err


def _spx_file(tmp_path):
    return write_series(synthetic_spx(400), tmp_path / "spx.csv")


def test_vix_degenerate_flat(tmp_path):
    spx = _spx_file(tmp_path)
    code, out = run(tmp_path, "vix", "--set", f"spx_file={spx}", "--set", "gamma=0", "--set", "alpha=0.9",
                    "--set", "beta=1.5", "--set", "h=180", "--set", "n_inner=10", "--set", "m_paths=5",
                    "--set", "window_start=2010-06-01", "--set", "window_end=2010-06-10")
    assert code == 0
    rows = list(csv.reader((out / "vix.csv").open()))[1:]
    assert len(rows) > 0
    np.testing.assert_allclose([float(r[1]) for r in rows], 60.0, rtol=1e-12)
    assert (out / "vix.svg").exists()


def test_vix_small_run_with_history(tmp_path):
    spx = _spx_file(tmp_path)
    hist = write_series(PriceSeries(synthetic_spx(400).dates, np.full(400, 20.0)), tmp_path / "vix_hist.csv")
    code, out = run(tmp_path, "vix", "--set", f"spx_file={spx}", "--set", f"vix_file={hist}", "--set", "h=180",
                    "--set", "n_inner=20", "--set", "m_paths=20",
                    "--set", "window_start=2010-09-01", "--set", "window_end=2010-09-05")
    assert code == 0
    assert len((out / "vix.csv").read_text().splitlines()) == 6
    assert (out / "vix_history.csv").read_text().startswith("date,vix\n")


def test_vix_window_outside_data(tmp_path):
    spx = _spx_file(tmp_path)
    code, _ = run(tmp_path, "vix", "--set", f"spx_file={spx}", "--set", "window_start=2030-01-01",
                  "--set", "window_end=2030-02-01")
    assert code == 2


def _calib_files(tmp_path):
    cfg = VixConfig(20, 20, 30.0, EulerConfig(seed=7))
    spx, market, _ = synthetic_market(n_dates=4, vix_cfg=cfg)
    return write_series(spx, tmp_path / "spx.csv"), write_series(market, tmp_path / "vix.csv")


def _calib_args(spx, vix, *extra):
    base = [f"spx_file={spx}", f"vix_file={vix}", "h=180", "n_inner=20", "m_paths=20", "seed=7",
            "alpha0=1.0", "beta0=1.4", "gamma0=0.9", *extra]
    return ["calibrate"] + [a for kv in base for a in ("--set", kv)]


def test_calibrate_budget_one(tmp_path):
    spx, vix = _calib_files(tmp_path)
    code, out = run(tmp_path, *_calib_args(spx, vix, "budget=1"))
    assert code == 0
    res = json.loads((out / "calibration.json").read_text())
    assert res["optimum"] == {"alpha": 1.0, "beta": 1.4, "gamma": 0.9}
    assert res["budget_exhausted"] is True and res["evaluations"] == 1


def test_calibrate_infeasible_bounds(tmp_path):
    spx, vix = _calib_files(tmp_path)
    assert run(tmp_path, *_calib_args(spx, vix, "alpha_lo=2", "alpha_hi=1"))[0] == 2


def test_calibrate_deterministic_across_workers(tmp_path):
    spx, vix = _calib_files(tmp_path)
    _, o1 = run(tmp_path, *_calib_args(spx, vix, "budget=15"), name="a")
    _, o2 = run(tmp_path, *_calib_args(spx, vix, "budget=15", "workers=3"), name="b")
    assert (o1 / "calibration.json").read_bytes() == (o2 / "calibration.json").read_bytes()


def test_classify_command(tmp_path):
    code, out = run(tmp_path, "classify", "--set", "alpha=0.9", "--set", "beta=1.5", "--set", "gamma=0.8",
                    "--set", "h=180")
    assert code == 0
    rep = json.loads((out / "boundary.json").read_text())
    assert rep["origin_type"] == "B0_plus"
    assert (rep["y_sigma_left"], rep["y_sigma_right"]) == ("B3_minus", "B1_plus")


def test_smile_degenerate_flat(tmp_path):
    code, out = run(tmp_path, "smile", "--set", "gamma=0", "--set", "strikes=-0.2,-0.1,0.1,0.2")
    assert code == 0
    rows = list(csv.DictReader((out / "smile.csv").open()))
    np.testing.assert_allclose([float(r["sigma_asymptote"]) for r in rows], 0.6, rtol=1e-3)
    assert "polyline" in (out / "smile.svg").read_text()


def test_smile_zero_strike(tmp_path):
    assert run(tmp_path, "smile", "--set", "strikes=-0.1,0,0.1")[0] == 2


def test_smile_rate_column_monotone(tmp_path):
    code, out = run(tmp_path, "smile", "--set", "strikes=-0.3,-0.2,-0.1,-0.05,0.05,0.1,0.15")
    assert code == 0
    rows = list(csv.DictReader((out / "smile.csv").open()))
    assert all(r["flag"] == "ok" for r in rows)
    for side in (-1, 1):
        pts = sorted((abs(float(r["k"])), float(r["rate"])) for r in rows if np.sign(float(r["k"])) == side)
        rates = [r for _, r in pts]
        assert all(a <= b for a, b in zip(rates, rates[1:]))


def _regress_files(tmp_path, xs, ys, shift=0):
    d0 = dt.date(2020, 1, 1)
    xd = tuple(d0 + dt.timedelta(days=i) for i in range(len(xs)))
    yd = tuple(d0 + dt.timedelta(days=i + shift) for i in range(len(ys)))
    return (write_series(PriceSeries(xd, np.asarray(xs, float)), tmp_path / "x.csv"),
            write_series(PriceSeries(yd, np.asarray(ys, float)), tmp_path / "y.csv"))


def test_regress_exact_line(tmp_path):
    xs = np.arange(1.0, 11.0)
    xf, yf = _regress_files(tmp_path, xs, 2.5 * xs + 4.0)
    code, out = run(tmp_path, "regress", "--set", f"x_file={xf}", "--set", f"y_file={yf}")
    assert code == 0
    fit = json.loads((out / "regression.json").read_text())
    np.testing.assert_allclose([fit["slope"], fit["intercept"], fit["r2"]], [2.5, 4.0, 1.0], rtol=1e-12)
    assert "circle" in (out / "regression.svg").read_text()


def test_regress_mismatched_dates(tmp_path, capsys):
    xs = np.arange(1.0, 11.0)
    xf, yf = _regress_files(tmp_path, xs, 3 * xs, shift=4)
    code, out = run(tmp_path, "regress", "--set", f"x_file={xf}", "--set", f"y_file={yf}")
    assert code == 0
    assert "joined 6 dates" in capsys.readouterr().err


def test_regress_constant_x(tmp_path):
    xf, yf = _regress_files(tmp_path, np.full(8, 3.0), np.arange(1.0, 9.0))
    assert run(tmp_path, "regress", "--set", f"x_file={xf}", "--set", f"y_file={yf}")[0] == 2


def test_price_command(tmp_path):
    code, out = run(tmp_path, "price", "--set", "alpha=2.1", "--set", "beta=1.2", "--set", "gamma=1.9",
                    "--set", "payoff=forward", "--set", "ns=41", "--set", "ny=21", "--set", "mc_paths=2000")
    assert code == 0
    res = json.loads((out / "price.json").read_text())
    np.testing.assert_allclose(res["pde_price"], 0.0, atol=1e-3)
    assert abs(res["mc_price"]) < res["mc_ci_halfwidth"] + 1e-3
    assert (out / "surface.csv").read_text().startswith("s,y,price\n")
    assert run(tmp_path, "price", "--set", "payoff=swaption")[0] == 2
