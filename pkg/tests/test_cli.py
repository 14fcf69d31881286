import json

import pytest
import yaml

from pdplast.cli import main

TINY = {"grid": {"cells": [24, 24], "collar": {"kind": "frame", "width": 5}},
        "kernel": {"families": ["constant"], "deltas": [0.2, 0.14, 0.08]}, "steps": 3}


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_simulate_outputs(tmp_path):
    cfg = dict(TINY, study={"point_cloud": True})
    out = tmp_path / "sim"
    assert main(["simulate", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    raw = (out / "timeseries.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "step,t,F,H_step,Diss,work,upper_gap,balance_residual"
    assert len(lines) == 1 + 4
    assert (out / "points_0003.csv").read_text().splitlines()[0] == "x,y,ux,uy,P0,P1"
    man = json.loads((out / "manifest.json").read_text())
    assert man["passed"] and len(man["certificates"]) == 4 and "runtime_seconds" in man
    assert man["version"].startswith("pdplast ")


def test_reproducible_outputs_are_identical(tmp_path):
    path = _write(tmp_path, TINY)
    for d in ("a", "b"):
        assert main(["korn", "--config", path, "--out", str(tmp_path / d), "--reproducible"]) == 0
    for f in ("korn.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert "runtime_seconds" not in json.loads((tmp_path / "a" / "manifest.json").read_text())


def test_sweep_and_energy_tables(tmp_path):
    path = _write(tmp_path, TINY)
    assert main(["sweep-delta", "--config", path, "--out", str(tmp_path / "s")]) in (0, 1)
    head = (tmp_path / "s" / "convergence_constant.csv").read_text().splitlines()
    assert head[0] == "delta,e_u,e_P,e_P_block,rate_u,rate_P" and len(head) == 4
    assert main(["energy-convergence", "--config", path, "--out", str(tmp_path / "e")]) in (0, 1)
    assert (tmp_path / "e" / "energy_constant.csv").exists()


def test_exit_codes(tmp_path):
    assert main(["verify", "--config", _write(tmp_path, {"material": {"gamma": 0}}),
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["verify", "--config", str(tmp_path / "missing.yaml")]) == 2
    bad = dict(TINY, study={"kernel_scale": 0.5, "checks": ["kernel_normalization"]})
    assert main(["verify", "--config", _write(tmp_path, bad, "b.yaml"), "--out", str(tmp_path / "v")]) == 1
    verdict = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert verdict["passed"] is False
    starve = dict(TINY, solver={"bcd_max_iter": 1})
    assert main(["simulate", "--config", _write(tmp_path, starve, "c.yaml"),
                 "--out", str(tmp_path / "c")]) == 3
    assert main(["korn", "--config", _write(tmp_path, TINY, "d.yaml"), "--threads", "0"]) == 2


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
