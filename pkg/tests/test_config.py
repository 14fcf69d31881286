import pytest
from hypothesis import given, strategies as st

from pdplast.config import ConfigError, default_config, from_dict, load_config, parse_config


def test_default_config_is_valid():
    cfg = default_config()
    assert cfg.grid.cells == [64, 64] and cfg.kernel.deltas == [0.2, 0.1, 0.05]
    assert cfg.material_params().gamma > 0
    assert len(cfg.digest()) == 16


def test_round_trip_default():
    cfg = default_config()
    assert parse_config(cfg.to_yaml()).to_dict() == cfg.to_dict()


@given(alpha=st.floats(0.1, 10), beta=st.floats(0.1, 10), steps=st.integers(1, 50),
       amp=st.floats(-10, 10), fams=st.lists(st.sampled_from(["constant", "quadratic", "inverse"]),
                                             min_size=1, max_size=3, unique=True),
       seed=st.integers(0, 2 ** 31), profile=st.sampled_from(["constant", "shear_ramp", "rotating_ramp"]))
def test_round_trip_property(alpha, beta, steps, amp, fams, seed, profile):
    cfg = from_dict({"material": {"alpha": alpha, "beta": beta}, "steps": steps, "seed": seed,
                     "load": {"amplitude": amp, "profile": profile}, "kernel": {"families": fams}})
    again = parse_config(cfg.to_yaml())
    assert again.to_dict() == cfg.to_dict()
    assert again.digest() == cfg.digest()


@pytest.mark.parametrize("data, msg", [
    ({"materal": {}}, "unknown key"),
    ({"solver": {"cg_tol": 1e-8, "cg_toll": 1}}, "unknown key"),
    ({"grid": {"collar": {"kind": "frame", "widht": 3}}}, "unknown key"),
    ({"material": {"gamma": 0}}, "gamma"),
    ({"material": {"sigma_y": -1.0}}, "sigma_y"),
    ({"kernel": {"deltas": [0.1, 0.2]}}, "decreasing"),
    ({"kernel": {"deltas": [0.2, 0.1, 0.02]}}, "1.5 h"),
    ({"kernel": {"deltas": [0.3, 0.1]}}, "collar"),
    ({"kernel": {"families": ["gauss"]}}, "families"),
    ({"load": {"profile": "sawtooth"}}, "profile"),
    ({"load": {"times": [0, 1], "values": [0]}}, "same nonzero length"),
    ({"steps": 0}, "steps"),
    ({"solver": {"u_solver": "lu"}}, "solver"),
    ({"grid": {"n": 4}}, "grid.n"),
    ({"threads": 0}, "threads"),
])
def test_invalid_configs(data, msg):
    with pytest.raises(ConfigError, match=msg):
        from_dict(data)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid: [1, 2\n")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(bad)
    good = tmp_path / "good.yaml"
    good.write_text("steps: 7\nmaterial:\n  sigma_y: 0.1\n")
    cfg = load_config(good)
    assert cfg.steps == 7 and cfg.material.sigma_y == 0.1
