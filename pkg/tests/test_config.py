from pathlib import Path

import numpy as np
import pytest

from micropolar_sn.config import (build_scenario, default_config_path, load_config, parse_config)
from micropolar_sn.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]


def test_shipped_configs_identical():
    assert (ROOT / "configs" / "default.toml").read_bytes() == default_config_path().read_bytes()


def test_default_scenario(default_scenario):
    sc = default_scenario
    assert sc.ctx.n == 16 and sc.ctx.n_steps == 16
    assert sc.weights.eps == 0.1
    # the stream target 0.1 sin(pi y1) sin(pi y2) is the first velocity mode
    expect = np.zeros(16)
    expect[0] = 0.1
    np.testing.assert_allclose(sc.weights.z_T, expect, atol=1e-12)
    assert sc.weights.w_T[0] == pytest.approx(0.4)
    assert np.all(sc.init.x0 == 0)


def _text(**replace):
    text = default_config_path().read_text()
    for old, new in replace.items():
        text = text.replace(old, new)
    return text


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="discretization.order"):
        parse_config(_text(**{"quad_points = 12": "order = 12"}))


def test_unknown_section_named():
    with pytest.raises(ConfigError, match="extras"):
        parse_config(_text() + "\n[extras]\nx = 1\n")


def test_missing_section():
    text = _text().replace("[leader]", "[solver_extra]")
    with pytest.raises(ConfigError):
        parse_config(text)


def test_bad_values_surface_as_config_errors():
    with pytest.raises(ConfigError, match="alpha"):
        build_scenario(parse_config(_text(**{"alpha = [2.0, 1.0]": "alpha = [2.0]"})))
    with pytest.raises(ConfigError, match="geometry.O1"):
        build_scenario(parse_config(_text(**{"O1 = [0.25, 0.4, 0.25, 0.4]": "O1 = [0.25, 0.4]"})))
    with pytest.raises(ConfigError):
        parse_config("not = [valid")


def test_overrides_change_hash():
    a = load_config()
    b = load_config(overrides={("weights", "eps"): 0.2, ("", "seed"): 3})
    assert b.raw["weights"]["eps"] == 0.2 and b.seed == 3
    assert a.hash != b.hash
    assert load_config(overrides={("weights", "eps"): None}).hash == a.hash


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/config.toml")
