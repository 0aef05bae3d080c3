import datetime as dt
import math

import numpy as np
import pytest

from oracles import vix_double_loop
from pdvol.errors import AllPathsDiscarded, ValidationError
from pdvol.market import PriceSeries, reconstruct_y
from pdvol.model import ModelParams
from pdvol.simulator import EulerConfig
from pdvol.vix import VixConfig, date_stream, inner_increments, vix_squared_at, vix_track

H180 = ModelParams(0.9, 1.5, 0.8, 180)


def _spx(n=300, seed=0):
    rng = np.random.default_rng(seed)
    vals = 1500 * np.exp(0.01 * rng.standard_normal(n).cumsum())
    dates = tuple(dt.date(2015, 1, 1) + dt.timedelta(days=i) for i in range(n))
    return PriceSeries(dates, vals)


@pytest.mark.parametrize("n,m,seed", [(10, 3, 0), (100, 50, 9), (7, 200, 123)])
def test_degenerate_family_is_exact(n, m, seed):
    p = ModelParams(1.2, 2.0, 0.0, 30)
    v, frac = vix_squared_at(p, 0.9, VixConfig(n, m, 30, EulerConfig(seed=seed)))
    assert v == (1.2 / 2.0) ** 2 and frac == 0.0
    assert 100 * math.sqrt(v) == 100 * (1.2 / 2.0)


def test_reference_double_loop_bitwise():
    cfg = VixConfig(50, 50, 30.0, EulerConfig(seed=2024))
    dw = inner_increments(cfg)
    ours = vix_squared_at(H180, 1.05, cfg)
    ref = vix_double_loop(0.9, 1.5, 0.8, 180.0, 1.05, dw, 50, cfg.inner_dt, 0.0)
    assert ours[0] == ref[0] and ours[1] == ref[1]


def test_reference_double_loop_with_discards():
    p = ModelParams(5, 6, 1.7, 5)
    cfg = VixConfig(40, 60, 30.0, EulerConfig(seed=3, threshold_d=1.0))
    dw = inner_increments(cfg)
    ours = vix_squared_at(p, 1.05, cfg)
    ref = vix_double_loop(5.0, 6.0, 1.7, 5.0, 1.05, dw, 40, cfg.inner_dt, 1.0)
    assert 0 < ours[1] < 1
    assert ours == ref


def test_at_singular_point_with_zero_noise():
    # h = 1e300 stands in for h -> infinity: Y never leaves y_sigma
    vals = []
    for n in (10, 30, 100):
        p = ModelParams(0.9, 1.5, 0.8, 1e300)
        cfg = VixConfig(n, 1, 30, EulerConfig(zero_noise=True))
        vals.append(vix_squared_at(p, p.y_sigma, cfg)[0])
    assert all(v < 1e-25 for v in vals)
    assert vals[0] >= vals[1] >= vals[2]
    p = ModelParams(0.9, 1.5, 0.8, 1e6)
    assert vix_squared_at(p, p.y_sigma, VixConfig(30, 1, 30, EulerConfig(zero_noise=True)))[0] < 1e-4


def test_sigma_scaling_zero_noise():
    p = ModelParams(0.9, 1.5, 0.8, 180)
    c = 1.7
    q = ModelParams(c * 0.9, 1.5, c * 0.8, 180)
    cfg = VixConfig(50, 2, 30, EulerConfig(zero_noise=True))
    np.testing.assert_allclose(vix_squared_at(q, 0.8, cfg)[0], c * c * vix_squared_at(p, 0.8, cfg)[0], rtol=1e-13)


def test_all_discarded_raises():
    p = ModelParams(1, 1, 1, 0.5)
    with pytest.raises(AllPathsDiscarded):
        vix_squared_at(p, 3.0, VixConfig(10, 4, 30, EulerConfig(threshold_d=2.999, zero_noise=True)))
    with pytest.raises(ValidationError):
        vix_squared_at(p, 0.5, VixConfig(10, 4, 30, EulerConfig(threshold_d=1.0)))


def test_config_validation():
    with pytest.raises(ValidationError):
        VixConfig(0, 1)
    with pytest.raises(ValidationError):
        VixConfig(1, 0)
    with pytest.raises(ValidationError):
        VixConfig(1, 1, 0.0)
    assert VixConfig(500, 10, 30).inner_dt == 30 / 500


def test_track_degenerate_flat():
    spx = _spx()
    p = ModelParams(1.2, 2.0, 0.0, 30)
    ys = reconstruct_y(spx, 30)
    # after the EWMA warm-up Y is O(1) and no inner path is lost
    tr = vix_track(p, spx, (ys.dates[100], ys.dates[-1]), VixConfig(10, 5))
    assert np.all(tr.vix_hat == 100 * (1.2 / 2.0))
    assert len(tr.vix_hat) == len(ys) - 100


def test_track_single_date_composition():
    spx = _spx()
    ys = reconstruct_y(spx, 180)
    d = ys.dates[100]
    cfg = VixConfig(20, 20, 30, EulerConfig(seed=5))
    tr = vix_track(H180, spx, (d, d), cfg)
    v, frac = vix_squared_at(H180, ys.values[100], cfg, stream=date_stream(d, 0))
    assert tr.dates == (d,)
    assert tr.vix_hat[0] == 100 * math.sqrt(v) and tr.discard_fraction[0] == frac


def test_track_deterministic_across_workers(tmp_path):
    spx = _spx()
    ys = reconstruct_y(spx, 180)
    window = (ys.dates[50], ys.dates[69])
    outs = []
    for w in (1, 1, 4):
        cfg = VixConfig(30, 30, 30, EulerConfig(seed=11, workers=w))
        tr = vix_track(H180, spx, window, cfg)
        path = tmp_path / f"t{len(outs)}.csv"
        tr.write_csv(path)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert outs[0].startswith(b"date,vix_hat,discard_fraction\n")
    assert len(outs[0].splitlines()) == 21


def test_track_window_validation():
    spx = _spx()
    with pytest.raises(ValidationError):
        vix_track(H180, spx, (dt.date(2010, 1, 1), dt.date(2015, 3, 1)), VixConfig(5, 5))
    with pytest.raises(ValidationError):
        vix_track(H180, spx, (dt.date(2015, 3, 1), dt.date(2015, 2, 1)), VixConfig(5, 5))


def test_track_flags_all_discarded_dates():
    spx = _spx()
    p = ModelParams(5, 6, 1.7, 5)
    ys = reconstruct_y(spx, 5)
    cfg = VixConfig(20, 2, 30, EulerConfig(seed=1, threshold_d=0.999))
    tr = vix_track(p, spx, (ys.dates[10], ys.dates[60]), cfg)
    nan = np.isnan(tr.vix_hat)
    assert list(np.array(tr.dates)[nan]) == tr.flagged
    assert np.all(tr.discard_fraction[nan] == 1.0)
