import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import rate_oracle
from stcalab.errors import ConfigError
from stcalab.nn import Dense, DecoderModel
from stcalab.rd import (CSV_HEADER, SweepConfig, curve_csv, default_panel_config, distortion, figure_panels,
                        read_curve, rd_sweep, shannon_bound, shannon_csv)

SMALL = SweepConfig(n=16, m=32, s_x=(4, 8, 16), trials=40, seed=5)


def test_distortion_matches_direct_sum(rng):
    x, y = rng.normal(size=50), rng.normal(size=50)
    direct = sum((a - b) ** 2 for a, b in zip(x, y)) / 50 / 2.5
    assert abs(distortion(x, y, 2.5) - direct) <= 1e-12
    assert distortion(x, x, 1.0) == 0.0
    assert distortion([1.0, 1.0], [0.0, 0.0], 1.0) == 1.0


def test_distortion_rejects_bad_input():
    with pytest.raises(ValueError):
        distortion([1.0], [1.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        distortion([1.0], [1.0], 0.0)


def test_shannon_bound_values():
    assert shannon_bound(0.0) == 1.0
    assert shannon_bound(1.0) == 0.25
    assert shannon_bound(np.log2(3)) == pytest.approx(1 / 9, abs=1e-15)
    with pytest.raises(ValueError):
        shannon_bound(-0.1)


@given(st.floats(0, 10), st.floats(0, 10))
def test_shannon_bound_is_decreasing(r1, r2):
    lo, hi = sorted((r1, r2))
    assert shannon_bound(hi) <= shannon_bound(lo)


def test_sweep_is_deterministic():
    cfg = dataclasses.replace(SMALL, trials=1, s_x=(4,))
    a, b = rd_sweep(cfg), rd_sweep(cfg)
    assert a[0].mean_distortion == b[0].mean_distortion and a[0].std_distortion == 0.0


def test_sweep_reports_rate_and_sorted_points():
    pts = rd_sweep(SMALL)
    assert [p.s_x for p in pts] == [4, 8, 16]
    for p in pts:
        assert p.rate == pytest.approx(float(rate_oracle(32, 16, p.s_x)), abs=1e-12)
        assert len(p.distortions) == SMALL.trials
        assert p.mean_distortion == pytest.approx(np.mean(p.distortions))


def test_sweep_respects_shannon_bound():
    for p in rd_sweep(SMALL):
        assert p.mean_distortion >= shannon_bound(p.rate) - 3 * p.stderr


def test_ambiguization_never_helps_the_attacker():
    cfg = dataclasses.replace(SMALL, s_x=(4,), s_ns=(0, 8, 28), scenario="unauthorized", trials=80)
    pts = rd_sweep(cfg)
    for a, b in zip(pts, pts[1:]):
        gap = b.distortions - a.distortions
        assert gap.mean() >= -3 * gap.std(ddof=1) / np.sqrt(len(gap))


def test_authorized_noiseless_matches_clean_codes():
    base = dataclasses.replace(SMALL, s_x=(4,), trials=10)
    clean = rd_sweep(base)[0]
    auth = rd_sweep(dataclasses.replace(base, scenario="authorized", s_ns=(20,), noise_ratio=0.0))[0]
    np.testing.assert_allclose(auth.distortions, clean.distortions, atol=1e-10)


def test_redrawn_projection_changes_results_but_stays_deterministic():
    cfg = dataclasses.replace(SMALL, s_x=(8,), trials=5, redraw_projection=True)
    a, b = rd_sweep(cfg)[0], rd_sweep(cfg)[0]
    np.testing.assert_array_equal(a.distortions, b.distortions)
    assert not np.array_equal(a.distortions, rd_sweep(dataclasses.replace(cfg, redraw_projection=False))[0].distortions)


def test_gradient_sweep_runs():
    cfg = dataclasses.replace(SMALL, s_x=(8,), trials=3, attack="gradient")
    cfg = dataclasses.replace(cfg, gradient=dataclasses.replace(cfg.gradient, iterations=20))
    (p,) = rd_sweep(cfg)
    assert np.isfinite(p.mean_distortion)


def test_decoder_model_required_exactly_for_decoder_attack():
    model = DecoderModel([Dense(32, 16)])
    with pytest.raises(ConfigError):
        rd_sweep(dataclasses.replace(SMALL, attack="decoder"))
    with pytest.raises(ConfigError):
        rd_sweep(SMALL, model=model)
    with pytest.raises(ConfigError):
        rd_sweep(dataclasses.replace(SMALL, attack="decoder"), model={4: model})
    (p,) = rd_sweep(dataclasses.replace(SMALL, attack="decoder", s_x=(4,), trials=3), model=model)
    assert np.isfinite(p.mean_distortion) and len(p.distortions) == 3


@pytest.mark.parametrize("change", [dict(scenario="oops"), dict(attack="oops"), dict(s_x=()), dict(trials=0),
                                    dict(s_x=(33,)), dict(s_ns=(1,)), dict(sigma2_x=0.0), dict(source="cifar")])
def test_invalid_sweeps_rejected(change):
    with pytest.raises(ConfigError):
        dataclasses.replace(SMALL, **change).validate()


def test_empty_or_invalid_panels_write_nothing(tmp_path):
    with pytest.raises(ConfigError):
        figure_panels({}, tmp_path / "out")
    bad = {"ok": SMALL, "bad": dataclasses.replace(SMALL, s_x=(99,))}
    with pytest.raises(ConfigError):
        figure_panels(bad, tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_figure_panels_write_curves(tmp_path):
    curves = figure_panels({"a": dataclasses.replace(SMALL, trials=3)}, tmp_path)
    rows = read_curve((tmp_path / "a.csv").read_text())
    assert len(rows) == len(curves["a"]) == 3
    shannon = read_curve((tmp_path / "shannon.csv").read_text())
    assert float(shannon[0]["distortion"]) == 1.0
    assert float(shannon[-1]["rate"]) == pytest.approx(max(p.rate for p in curves["a"]), rel=1e-9)


def test_csv_layout():
    pts = rd_sweep(dataclasses.replace(SMALL, trials=2, s_x=(4,)))
    text = curve_csv(pts)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].endswith(",2,4,0,limit")
    assert shannon_csv(1.0, steps=3).splitlines() == ["rate,distortion", "0,1", "0.5,0.5", "1,0.25"]


def test_panel_defaults():
    c = default_panel_config("c")
    assert (c.source, c.scenario, c.m, c.s_ns) == ("gaussian", "unauthorized", 1058, (0, 25, 50, 100))
    f = default_panel_config("f", trials=7)
    assert (f.n, f.m, f.trials, f.noise_ratio) == (784, 1568, 7, 0.25)
    assert default_panel_config("a").s_ns == (0,)
