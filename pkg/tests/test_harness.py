import dataclasses
import re

import numpy as np
import pytest

from ifofsim.bbu import CellReport, UeReport
from ifofsim.cli import main
from ifofsim.errors import ConfigError, SimulationError, StageError
from ifofsim.harness import sweep as sweep_mod
from ifofsim.harness.config import (config_from_dict, load_config, load_profile, profile_names,
                                    profile_text, with_overrides)
from ifofsim.harness.outputs import CSV_COLUMNS, csv_text, emit_outputs, plot_vs_distance
from ifofsim.harness.pipeline import Point, run_point
from ifofsim.harness.sweep import SweepResult, grid_points, run_sweep


@pytest.fixture(scope="module")
def desk():
    return load_profile("desk")


@pytest.fixture(scope="module")
def tiny(desk):
    """Desk profile cut to four symbols and a 2 x 2 grid."""
    num = dataclasses.replace(desk.numerology, n_symbols=4)
    return with_overrides(desk, numerology=num, snr_db=[0.0, 21.0], n_ues=[1, 2],
                          length_km=[10.0], n_drops=1, ideal_fh=[False], plots=False)


# ---- configuration

def test_profiles_ship_and_validate():
    assert {"desk", "full-scale-short"} <= set(profile_names())
    full = load_profile("full-scale-short")
    assert full.scenario.n_rx_antennas == 64 and full.numerology.n_carriers == 4
    assert full.numerology.n_prb == 273
    assert full.fiber.effective_bandwidth(full.aggregation.composite_rate_hz) == 25.6e9
    d = load_profile("desk")
    assert d.scenario.n_rx_antennas == 8 and d.numerology.n_carriers == 1
    assert d.numerology.n_prb == 51 and d.sweep.n_drops == 10
    assert max(d.sweep.n_ues) <= 4
    assert d.aggregation.composite_rate_hz >= 12.8e9


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        config_from_dict({"fiber": {"bogus": 1}})
    with pytest.raises(ConfigError):
        config_from_dict({"extra_section": {}})
    with pytest.raises(ConfigError):
        config_from_dict({"fiber": 3})


def test_cross_validation():
    with pytest.raises(ConfigError):  # 13 layers
        config_from_dict({"sweep": {"n_ues": [13]}})
    with pytest.raises(ConfigError):  # channels vs antennas
        config_from_dict({"scenario": {"n_rx_antennas": 8, "array_shape": [2, 4]},
                          "aggregation": {"per_channel_rate_hz": 1e6}})
    with pytest.raises(ConfigError):
        config_from_dict({"sweep": {"n_drops": 0}})
    with pytest.raises(ConfigError):
        config_from_dict({"fiber": {"adc_rate_hz": 40e9}})


def test_config_file_round_trip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(profile_text("desk"))
    assert load_config(p).digest() == load_profile("desk").digest()
    p.write_text("[fiber\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_overrides(desk):
    c = with_overrides(desk, snr_db=3, seed=9)
    assert c.sweep.snr_db == (3.0,) and c.seed == 9
    assert c.digest() != desk.digest()


# ---- grids

def test_fig4_grid(desk):
    cfg = with_overrides(desk, snr_db=list(range(-9, 22, 3)), n_ues=[1, 2, 4, 8, 12],
                         length_km=[40.0], n_drops=1, ideal_fh=[False])
    pts = grid_points(cfg)
    assert len(pts) == 55
    assert len({(p.snr_db, p.n_ues) for p in pts}) == 55


def test_fig5_grid(desk):
    cfg = with_overrides(desk, snr_db=[12.0, 18.0], length_km=[0, 10, 20, 30, 40], n_ues=[4],
                         n_drops=5, ideal_fh=[False])
    pts = grid_points(cfg)
    assert len(pts) == 50
    assert {p.length_km for p in pts} == {0, 10, 20, 30, 40}


# ---- runs

def test_run_is_deterministic(tiny):
    p = Point(21.0, 2, 10.0)
    a, b = run_point(tiny, p), run_point(tiny, p)
    assert np.array_equal(a.eff_sinr_db(), b.eff_sinr_db())
    assert a.pre_mimo_sinr_db == b.pre_mimo_sinr_db
    c = run_point(tiny, p, seed=tiny.seed + 1)
    assert not np.array_equal(a.eff_sinr_db(), c.eff_sinr_db())


def test_ideal_fh_skips_optics(tiny):
    r, trace = run_point(tiny, Point(21.0, 1, 10.0, ideal_fh=True), keep_trace=True)
    assert r.ideal_fh and np.isnan(r.pre_mimo_sinr_db)
    assert trace.field is None and trace.photocurrent is None
    assert "clip_rate" not in r.meta
    # fiber length does not matter
    r2 = run_point(tiny, Point(21.0, 1, 30.0, ideal_fh=True))
    assert np.array_equal(r.eff_sinr_db(), r2.eff_sinr_db())


def test_sync_within_cp_after_40_km(tiny):
    r = run_point(tiny, Point(21.0, 2, 40.0))
    cp = tiny.numerology.cp_lengths[1]
    assert all(abs(e) <= cp // 2 for e in r.meta["sync_error"])
    assert r.meta["clamp_count"] == 0


def test_noise_estimate_tracks_truth(tiny):
    r = run_point(tiny, Point(12.0, 1, 0.0, ideal_fh=True))
    assert abs(10 * np.log10(r.meta["noise_var_est"] / r.meta["noise_var_true"])) <= 1.0


def test_desk_zero_length_matches_ideal(desk):
    a = run_point(desk, Point(21.0, 1, 0.0))
    b = run_point(desk, Point(21.0, 1, 0.0, ideal_fh=True))
    assert abs(a.eff_sinr_db()[0] - b.eff_sinr_db()[0]) <= 0.5


def test_stage_errors_are_annotated(tiny, monkeypatch):
    from ifofsim.harness import pipeline

    def bad(*a, **k):
        raise ValueError("no light")

    monkeypatch.setattr(pipeline, "photodetect", bad)
    with pytest.raises(StageError, match="optical_link"):
        run_point(tiny, Point(21.0, 1, 0.0))
    with pytest.raises(ConfigError):
        dataclasses.replace(tiny, fiber=dataclasses.replace(tiny.fiber, if_hz=1e9))


# ---- sweeps

def test_single_point_sweep_equals_run_point(tiny):
    p = Point(0.0, 1, 10.0)
    res = run_sweep(tiny, points=[p])
    direct = run_point(tiny, p)
    assert len(res.entries) == 1
    assert np.array_equal(res.reports[0].eff_sinr_db(), direct.eff_sinr_db())
    assert res.reports[0].cell_rate_bps == direct.cell_rate_bps


def test_sweep_order_independent_of_workers(tiny):
    one = csv_text(run_sweep(tiny, workers=1))
    two = csv_text(run_sweep(tiny, workers=2))
    assert one == two
    assert len(one.splitlines()) == 2 + 1 + (1 + 1) * 2 + (2 + 1) * 2


def test_failures_recorded_and_sweep_continues(tiny, monkeypatch):
    real = sweep_mod.run_point

    def flaky(cfg, point, seed=None):
        if point.n_ues == 2 and point.snr_db == 0.0:
            raise SimulationError("boom")
        return real(cfg, point, seed)

    monkeypatch.setattr(sweep_mod, "run_point", flaky)
    res = run_sweep(tiny, workers=1)
    assert len(res.entries) == 4 and len(res.failures) == 1
    rows = [r for r in csv_text(res).splitlines()[3:] if "boom" in r]
    assert len(rows) == 1 and rows[0].endswith("SimulationError: boom")


# ---- outputs

def test_empty_result_header_only(tmp_path):
    paths = emit_outputs(SweepResult([], {"seed": 1}), tmp_path)
    lines = paths[0].read_text().splitlines()
    assert lines[0].startswith("# ifofsim cell-report csv v1")
    assert lines[2].split(",") == CSV_COLUMNS and len(lines) == 3
    assert len(paths) == 1


def test_reemit_byte_identical(tiny, tmp_path):
    res = run_sweep(tiny, points=[Point(21.0, 2, 10.0)])
    a = emit_outputs(res, tmp_path / "a", plots=True)[0].read_bytes()
    b = emit_outputs(res, tmp_path / "b", plots=True)[0].read_bytes()
    assert a == b
    header = a.decode().splitlines()[2].split(",")
    for col in ("snr_db", "n_ues", "length_km", "drop", "ue_id", "eff_sinr_db", "se_bits",
                "rate_bps", "cell_rate_bps", "pre_mimo_sinr_db", "ideal_fh_flag", "seed"):
        assert col in header


def _fake(snr, length, rate):
    ue = UeReport(0, np.array([10.0]), 10.0, 3.0, rate)
    return CellReport([ue], snr, 4, length, 1)


def test_fig5_svg_markers(tmp_path):
    reports = [_fake(s, l, 9e9 - s * 1e7) for s in (12.0, 18.0) for l in (0, 10, 20, 30, 40)]
    path = tmp_path / "d.svg"
    assert plot_vs_distance(reports, path)
    svg = path.read_text()
    # marker instances in the plot area carry their fill (ticks have none)
    uses = re.findall(r'<use xlink:href="#(m[0-9a-f]+)" x="[^"]*" y="[^"]*" style="([^"]*)"', svg)
    styles = {m: st for m, st in uses if "fill" in st}
    assert len(styles) == 2
    assert sorted("fill-opacity: 0" in st for st in styles.values()) == [False, True]
    # same bytes on a second write
    path2 = tmp_path / "e.svg"
    plot_vs_distance(reports, path2)
    assert path2.read_bytes() == path.read_bytes()


# ---- command line

def test_cli_profiles(capsys):
    assert main(["profiles"]) == 0
    assert "desk" in capsys.readouterr().out
    assert main(["profiles", "--show", "desk"]) == 0
    assert "[sweep]" in capsys.readouterr().out


def test_cli_validate(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text(profile_text("desk"))
    assert main(["validate-config", str(p)]) == 0
    assert "points=240" in capsys.readouterr().out
    p.write_text("[fiber]\nwat = 1\n")
    assert main(["validate-config", str(p)]) == 2


def test_cli_run(tmp_path, capsys):
    rc = main(["run", "--profile", "desk", "--snr", "21", "--ues", "1", "--length", "0",
               "--out", str(tmp_path), "--no-plots", "--json"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "cell" in out and "wrote" in out
    assert (tmp_path / "run.csv").exists()


def test_cli_sweep(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text(profile_text("desk").replace("n_drops = 10", "n_drops = 1")
                 .replace("snr_db = [-9.0, 0.0, 12.0, 21.0]", "snr_db = [0.0, 21.0]")
                 .replace("n_ues = [1, 2, 4]", "n_ues = [1]")
                 .replace("n_symbols = 14", "n_symbols = 4"))
    rc = main(["sweep", "--config", str(p), "--out", str(tmp_path / "o"), "--seed", "5"])
    assert rc == 0
    names = {f.name for f in (tmp_path / "o").iterdir()}
    assert {"sweep.csv", "throughput_vs_snr.svg", "sinr_vs_snr.svg"} <= names
    assert "seed=5" in (tmp_path / "o" / "sweep.csv").read_text().splitlines()[1]
