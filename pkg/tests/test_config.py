import json

import pytest

from trisieve.config import ConfigError, ExperimentConfig, config_from_dict, load_config


def test_defaults_round_trip():
    cfg = ExperimentConfig()
    assert config_from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_partial_override(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 7, "svp": {"d": 18}, "geometry": {"dims": [12]}}))
    cfg = load_config(p)
    assert cfg.seed == 7 and cfg.svp.d == 18 and cfg.geometry.dims == (12,)
    assert cfg.svp.ratio == ExperimentConfig().svp.ratio


@pytest.mark.parametrize(
    "data,msg",
    [
        ({"sede": 1}, "unknown key"),
        ({"svp": {"ratioo": 1.0}}, "config.svp: unknown key"),
        ({"seed": "1"}, "config.seed: expected an integer"),
        ({"seed": True}, "expected an integer"),
        ({"slack": "x"}, "expected a number"),
        ({"geometry": {"dims": 16}}, "expected a list"),
        ({"svp": 3}, "expected an object"),
        ({"seed": -1}, "64-bit"),
        ({"workers": 0}, "at least 1"),
        ({"slack": 0}, "positive"),
        ([], "JSON object"),
    ],
)
def test_bad_configs_rejected(data, msg):
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(data)


def test_int_accepted_for_float():
    assert config_from_dict({"slack": 1}).slack == 1.0


def test_malformed_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"seed": 1,\n  oops}')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)


def test_replace_section():
    cfg = ExperimentConfig().replace("aa", delta=0.5)
    assert cfg.aa.delta == 0.5 and cfg.aa.good_mass == 0.25
