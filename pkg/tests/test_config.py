"""Config parsing and validation."""

import pytest

from memsbeam.config import (ConfigError, NumericalParams, ValidatedConfig,
                             parse_config_text, validate_config, with_numerical)


GOOD_TEXT = """
# device
L = 1.0
H = 1.0      # gap depth
d = 0.5
V = 2.0
sigma1_profile = "affine"
sigma1_a = 1.0
sigma1_b = 0.25
n_x = 64
u0_kind = bump
u0_amplitude = -0.25
"""


def test_parse_good_text():
    raw = parse_config_text(GOOD_TEXT)
    assert raw["L"] == 1.0
    assert raw["n_x"] == 64 and isinstance(raw["n_x"], int)
    assert raw["sigma1_profile"] == "affine"
    assert raw["u0_kind"] == "bump"


def test_parse_rejects_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("L = 1.0\nbogus = 3\nL = 2.0\n")
    msgs = "\n".join(exc.value.violations)
    assert "unknown key 'bogus'" in msgs
    assert "duplicate key 'L'" in msgs


def test_parse_rejects_malformed_lines():
    with pytest.raises(ConfigError):
        parse_config_text("just a line without equals\n")
    with pytest.raises(ConfigError):
        parse_config_text("n_x = not_an_int\n")


def test_validate_defaults_and_idempotence():
    cfg = validate_config({"L": 2.0, "V": 1.0})
    assert cfg.physical.L == 2.0
    assert "beta" in cfg.defaulted and "n_x" in cfg.defaulted
    # eps_gap defaults relative to H
    assert cfg.numerical.eps_gap == pytest.approx(1e-6 * cfg.physical.H)
    assert validate_config(cfg) is cfg
    with pytest.raises(TypeError):
        validate_config([1, 2, 3])


def test_validate_collects_all_violations():
    with pytest.raises(ConfigError) as exc:
        validate_config({"H": 0.0, "delta": -1.0, "n_x": 4})
    msgs = exc.value.violations
    assert any("H" in m for m in msgs)
    assert any("delta" in m for m in msgs)
    assert any("n_x" in m for m in msgs)


def test_eps_gap_must_be_small_against_H():
    with pytest.raises(ConfigError):
        validate_config({"H": 1.0, "eps_gap": 0.2})


def test_zero_voltage_allowed_with_warning():
    cfg = validate_config({"V": 0.0})
    assert any("V = 0" in w for w in cfg.warnings)


def test_negative_voltage_rejected():
    with pytest.raises(ConfigError):
        validate_config({"V": -1.0})


def test_initial_condition_validation():
    with pytest.raises(ConfigError):
        validate_config({"u0_kind": "file"})           # missing path
    with pytest.raises(ConfigError):
        validate_config({"u0_kind": "bump", "u0_amplitude": -2.0, "H": 1.0})
    with pytest.raises(ConfigError):
        validate_config({"u0_kind": "unknown"})


def test_with_numerical_returns_modified_copy():
    cfg = validate_config({"n_x": 32})
    cfg2 = with_numerical(cfg, n_x=64, delta=1e-4)
    assert isinstance(cfg2, ValidatedConfig)
    assert cfg2.numerical.n_x == 64 and cfg2.numerical.delta == 1e-4
    assert cfg.numerical.n_x == 32
    assert isinstance(cfg2.numerical, NumericalParams)
