"""Shared fixtures: small validated configurations and contexts."""

import warnings

import pytest

from memsbeam.config import validate_config
from memsbeam.scheme import make_context


def small_cfg(**overrides):
    """A small but well-resolved configuration for fast tests."""
    raw = {
        "L": 1.0, "H": 1.0, "d": 1.0, "beta": 1.0, "V": 2.0,
        "sigma2": 2.0, "n_x": 40, "n_z_layer": 16, "n_eta_gap": 16,
        "delta": 1e-3, "t_end": 0.01,
    }
    raw.update(overrides)
    return validate_config(raw)


@pytest.fixture(scope="session")
def cfg_standard():
    return small_cfg()


@pytest.fixture(scope="session")
def ctx_standard(cfg_standard):
    return make_context(cfg_standard)


@pytest.fixture(autouse=True)
def _quiet_step_size_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="delta = .* exceeds delta0")
        yield
