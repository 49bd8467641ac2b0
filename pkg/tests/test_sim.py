import math

import numpy as np
import pytest

from nestcpfsk.sim import (
    CSV_HEADER, BerPoint, SimConfig, compute_bounds, config_items, config_from_items, emit_bounds, emit_report,
    forced_error_ber, load_config, parse_grid, read_report, run_sweep, wilson_interval,
)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(blocks=0)
    with pytest.raises(ValueError):
        SimConfig(bits_per_block=999)
    with pytest.raises(ValueError):
        SimConfig(ebno_db=())
    with pytest.raises(ValueError):
        SimConfig(side_info=(0, 1))
    with pytest.raises(ValueError):
        SimConfig(uplink="carrier-pigeon")
    cfg = SimConfig()
    assert cfg.k_joint == 2 and cfg.n == 3 and cfg.steps == 500


def test_parse_grid():
    assert parse_grid("0:1:10") == tuple(float(x) for x in range(11))
    assert parse_grid("2:0.5:3") == (2.0, 2.5, 3.0)
    assert parse_grid("1, 4") == (1.0, 4.0)
    with pytest.raises(ValueError):
        parse_grid("0:0:1")


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# system setup\nstack = 6,5,1;7,2,5\nh = 1/2\nebno_db = 2:2:6\nblocks = 3\nseed = 9\n")
    cfg = load_config(path, seed=4)
    assert cfg.ebno_db == (2.0, 4.0, 6.0) and cfg.blocks == 3 and cfg.seed == 4
    again = config_from_items(config_items(cfg) | {"uplink_ebno_db": "1,1", "side_info": "1"})
    assert again.sources == cfg.sources and again.side_info == (1,)
    path.write_text("colour = blue\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_noiseless_limit():
    (pt,) = run_sweep(SimConfig(ebno_db=(60,), blocks=100, chunk=25))
    assert pt.bits == 10**5 and pt.errors == 0


def test_side_info_noiseless():
    (pt,) = run_sweep(SimConfig(ebno_db=(60,), blocks=10, side_info=(1,)))
    assert pt.bits == 10 * 500 and pt.errors == 0


def test_point_interval_contains_ber():
    (pt,) = run_sweep(SimConfig(ebno_db=(3,), blocks=10, seed=5))
    assert pt.errors > 0
    assert pt.ci_low <= pt.ber <= pt.ci_high
    assert (pt.ci_low, pt.ci_high) == wilson_interval(pt.errors, pt.bits)


def test_determinism_and_parallel():
    cfg = SimConfig(ebno_db=(3, 4), blocks=6, chunk=2, seed=17)
    serial = run_sweep(cfg)
    assert serial == run_sweep(cfg)
    assert serial == run_sweep(SimConfig(ebno_db=(3, 4), blocks=6, chunk=3, seed=17, workers=2))
    assert serial != run_sweep(SimConfig(ebno_db=(3, 4), blocks=6, chunk=2, seed=18))


def test_early_stop():
    (pt,) = run_sweep(SimConfig(ebno_db=(1,), blocks=100, chunk=5, early_stop=500))
    assert 500 <= pt.errors and pt.bits < 100 * 1000


def test_forced_error_composition():
    pt = forced_error_ber(0.1, 0.2, bits=2 * 10**5, seed=1)
    sigma = math.sqrt(0.28 * 0.72 / pt.bits)
    assert abs(pt.ber - 0.28) < 3 * sigma


def test_bpsk_uplink_adds_errors():
    kw = dict(ebno_db=(5,), blocks=20, seed=2)
    perfect = run_sweep(SimConfig(**kw))[0]
    noisy = run_sweep(SimConfig(uplink="bpsk-awgn", uplink_ebno_db=(2, 2), **kw))[0]
    assert noisy.errors > perfect.errors


def test_ber_nonincreasing_over_grid():
    pts = run_sweep(SimConfig(ebno_db=(2, 3, 4), blocks=100, seed=3))
    assert all(p.errors >= 100 for p in pts)
    assert pts[0].ber >= pts[1].ber >= pts[2].ber


def test_report_files_and_round_trip(tmp_path):
    cfg = SimConfig(ebno_db=(2.0, 6.0), blocks=2)
    bounds = compute_bounds(cfg)
    points = [BerPoint(2.0, 1000, 37, *wilson_interval(37, 1000)), BerPoint(6.0, 3000, 1, *wilson_interval(1, 3000))]
    csv_path, manifest = emit_report(points, bounds, tmp_path / "out", cfg)
    rows = read_report(csv_path)
    assert list(rows[0]) == CSV_HEADER and len(rows) == 2
    for row, p in zip(rows, points):
        assert row["err_bits"] == p.errors and row["total_bits"] == p.bits
        for key, val in (("ber_sim", p.ber), ("ci_low", p.ci_low), ("ci_high", p.ci_high)):
            assert row[key] == float(f"{val:.12g}")
    assert rows[0]["pbd_eq14"] is None and rows[0]["pbd_eq18"] is None
    assert rows[1]["pbd_eq18"] == float(f"{bounds[1].pbd_eq18:.12g}")
    text = manifest.read_text()
    assert "seed = 0" in text and "numpy_version" in text


def test_single_point_report(tmp_path):
    points = [BerPoint(1.0, 10, 1, *wilson_interval(1, 10))]
    emit_report(points, None, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["ber.csv", "manifest.txt"]
    assert len(read_report(tmp_path / "ber.csv")) == 1
    with pytest.raises(ValueError):
        emit_report([], None, tmp_path)


def test_bounds_csv(tmp_path):
    path = emit_bounds(compute_bounds(SimConfig(ebno_db=(2, 5))), tmp_path)
    lines = path.read_text().splitlines()
    assert lines[0] == "ebno_db,pbd_eq14,pbd_eq18,pbu,pb_overall,dmin_sq,converged"
    assert lines[1].endswith(",NA,NA,0,NA,6,false")
    assert lines[2].endswith(",true")
