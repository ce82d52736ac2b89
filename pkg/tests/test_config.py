import json

import pytest

from hwci.config import (default_phantom, load_toml, parse_layers, phantom_from_dict,
                         phantom_from_json, phantom_to_dict, pipeline_config)
from hwci.errors import ConfigurationError
from hwci.synth import Layer


def test_defaults():
    cfg = pipeline_config({})
    assert cfg.band_fraction == 0.9 and cfg.dynamic_range_db == 40.0
    assert cfg.acquisition.n_elements == 128 and cfg.acquisition.angles_deg == (0, -6, 6, -12, 12)


@pytest.mark.parametrize("data", [{"band_fraction": 1.2}, {"dynamic_range_db": 0},
                                  {"mode": "das"}, {"kernel": "fdtd"}, {"bogus": 1},
                                  {"acquisition": {"n_elements": 8, "nope": 1}}])
def test_invalid(data):
    with pytest.raises(ConfigurationError):
        pipeline_config(data)


def test_kernel_alias():
    assert pipeline_config({"kernel": "split-step"}).kernel == "split_step"


def test_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('mode = "wci"\n[acquisition]\nn_elements = 16\nangles_deg = [0, 5]\n'
                 '[phantom]\nwidth = 0.01\n')
    cfg = pipeline_config(load_toml(p))
    assert cfg.mode == "wci" and cfg.acquisition.n_elements == 16
    assert cfg.acquisition.angles_deg == (0.0, 5.0) and cfg.phantom == {"width": 0.01}
    p.write_text("mode = \n")
    with pytest.raises(ConfigurationError):
        load_toml(p)
    with pytest.raises(ConfigurationError):
        load_toml(tmp_path / "missing.toml")


def test_parse_layers():
    layers = parse_layers("fat:10mm, liver:4cm")
    assert layers == (Layer("fat", 10e-3), Layer("liver", 40e-3))
    with pytest.raises(ConfigurationError):
        parse_layers("bone:1mm")
    with pytest.raises(ConfigurationError):
        parse_layers("fat-10mm")


def test_phantom_dict():
    spec = phantom_from_dict({"layers": [{"material": "fat", "thickness": 0.02}],
                              "depth": 0.02, "width": 0.01, "seed": 4})
    assert spec.layers == (Layer("fat", 0.02),) and spec.rng_seed == 4
    assert spec.pins == () and spec.vessels == ()
    base = phantom_from_dict({}, seed=9)
    assert base.rng_seed == 9 and base.layers == default_phantom().layers
    grid = phantom_from_dict({"pin_grid": {"depth_step": 0.01, "lateral_step": 0.0025,
                                           "x_min": -0.005, "x_max": 0.005,
                                           "z_min": 0.01, "z_max": 0.02}})
    assert len(grid.pins) == 10
    with pytest.raises(ConfigurationError):
        phantom_from_dict({"colour": "red"})
    with pytest.raises(ConfigurationError):
        phantom_from_dict({"layers": [{"material": "fat", "thickness": 0.001}]})


def test_phantom_json_round_trip(tmp_path):
    spec = default_phantom(3)
    (tmp_path / "p.json").write_text(json.dumps(phantom_to_dict(spec)))
    assert phantom_from_json(tmp_path / "p.json") == spec
