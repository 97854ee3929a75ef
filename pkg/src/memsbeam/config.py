"""Model and scheme parameters: validation, defaults, and config-file parsing.

All quantities are dimensionless model units; there is no unit conversion
layer.  A configuration is a flat key = value text file (TOML-like scalars
only).  Unknown keys are an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

__all__ = [
    "PhysicalParams",
    "NumericalParams",
    "DielectricSettings",
    "InitialCondition",
    "ValidatedConfig",
    "ConfigError",
    "parse_config_text",
    "read_config_file",
    "validate_config",
]


class ConfigError(ValueError):
    """Raised when a configuration cannot be validated.

    Carries the full list of violated constraints in ``violations``.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class PhysicalParams:
    """Physical parameters of the device.

    The beam occupies (-L, L); the dielectric layer has thickness d below
    the gap of depth H.  beta is bending stiffness, tau axial tension,
    a the self-stretching coefficient, V the applied plate potential.
    """

    L: float = 1.0
    H: float = 1.0
    d: float = 1.0
    beta: float = 1.0
    tau: float = 0.0
    a: float = 0.0
    V: float = 1.0


@dataclass(frozen=True)
class NumericalParams:
    """Discretization and solver parameters."""

    n_x: int = 200
    n_z_layer: int = 32
    n_eta_gap: int = 32
    eps_gap: float = 1e-6          # coincidence threshold, defaults to 1e-6*H
    tol_fp: float = 1e-10          # outer fixed-point tolerance (sup norm)
    tol_as: float = 1e-12          # active-set / linear-solve tolerance
    max_fp: int = 200
    max_as: int = 100
    delta: float = 1e-2            # time step
    t_end: float = 0.1


@dataclass(frozen=True)
class DielectricSettings:
    """Permittivity description read from config.

    sigma1_profile selects a named horizontal profile for the layer
    permittivity: "constant" (sigma1_a), "affine" (sigma1_a + sigma1_b * x)
    or "bump" (sigma1_a + sigma1_b * cos(pi*x/(2L))**2).
    """

    sigma2: float = 1.0
    sigma1_profile: str = "constant"
    sigma1_a: float = 1.0
    sigma1_b: float = 0.0


@dataclass(frozen=True)
class InitialCondition:
    """Initial deflection: zero, a scaled clamped bump c*(1-(x/L)^2)^2,
    or a nodal table loaded from file."""

    kind: str = "zero"             # "zero" | "bump" | "file"
    amplitude: float = 0.0
    path: Optional[str] = None


@dataclass(frozen=True)
class ValidatedConfig:
    physical: PhysicalParams
    numerical: NumericalParams
    dielectric: DielectricSettings
    initial: InitialCondition
    w_max: float = 2.0             # certified deflection range for m-constants
    defaulted: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()
    validated: bool = field(default=True, compare=False)


_PHYS_KEYS = {"L", "H", "d", "beta", "tau", "a", "V"}
_NUM_KEYS = {"n_x", "n_z_layer", "n_eta_gap", "eps_gap", "tol_fp", "tol_as",
             "max_fp", "max_as", "delta", "t_end"}
_DIEL_KEYS = {"sigma2", "sigma1_profile", "sigma1_a", "sigma1_b"}
_INIT_KEYS = {"u0_kind", "u0_amplitude", "u0_file"}
_OTHER_KEYS = {"w_max"}
_ALL_KEYS = _PHYS_KEYS | _NUM_KEYS | _DIEL_KEYS | _INIT_KEYS | _OTHER_KEYS

_INT_KEYS = {"n_x", "n_z_layer", "n_eta_gap", "max_fp", "max_as"}
_STR_KEYS = {"sigma1_profile", "u0_kind", "u0_file"}


def _parse_scalar(key: str, text: str):
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return text[1:-1]
    if key in _STR_KEYS:
        return text
    if key in _INT_KEYS:
        return int(text)
    return float(text)


def parse_config_text(text: str) -> dict:
    """Parse a flat key = value config into a raw dict.

    Lines are ``key = value`` with ``#`` comments; strings may be quoted.
    Unknown keys raise ConfigError.
    """
    raw: dict = {}
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _ALL_KEYS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            raw[key] = _parse_scalar(key, value)
        except ValueError:
            errors.append(f"line {lineno}: cannot parse value for {key!r}: {value.strip()!r}")
    if errors:
        raise ConfigError(errors)
    return raw


def read_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def validate_config(raw) -> ValidatedConfig:
    """Validate a raw parameter record (dict) into a ValidatedConfig.

    Idempotent: passing an already-validated config returns it unchanged.
    Raises ConfigError listing every violated constraint.  Names of keys
    that fell back to their defaults are echoed in ``defaulted``.
    """
    if isinstance(raw, ValidatedConfig):
        return raw
    if not isinstance(raw, dict):
        raise TypeError(f"expected dict or ValidatedConfig, got {type(raw).__name__}")

    unknown = sorted(set(raw) - _ALL_KEYS)
    if unknown:
        raise ConfigError([f"unknown key {k!r}" for k in unknown])

    defaulted = tuple(sorted(_ALL_KEYS - set(raw)))

    phys = PhysicalParams(**{k: float(raw[k]) for k in _PHYS_KEYS if k in raw})

    num_kwargs = {}
    for key in _NUM_KEYS:
        if key in raw:
            num_kwargs[key] = int(raw[key]) if key in _INT_KEYS else float(raw[key])
    if "eps_gap" not in num_kwargs:
        num_kwargs["eps_gap"] = 1e-6 * phys.H
    num = NumericalParams(**num_kwargs)

    diel = DielectricSettings(
        sigma2=float(raw.get("sigma2", 1.0)),
        sigma1_profile=str(raw.get("sigma1_profile", "constant")),
        sigma1_a=float(raw.get("sigma1_a", 1.0)),
        sigma1_b=float(raw.get("sigma1_b", 0.0)),
    )
    init = InitialCondition(
        kind=str(raw.get("u0_kind", "zero")),
        amplitude=float(raw.get("u0_amplitude", 0.0)),
        path=raw.get("u0_file"),
    )
    w_max = float(raw.get("w_max", 2.0 * phys.L ** 2))

    violations: list[str] = []
    for name in ("L", "H", "d", "beta"):
        if getattr(phys, name) <= 0.0:
            violations.append(f"{name} must be positive")
    # V = 0 is accepted so the pure mechanical relaxation runs are expressible.
    if phys.V < 0.0:
        violations.append("V must be non-negative")
    if phys.tau < 0.0:
        violations.append("tau must be non-negative")
    if phys.a < 0.0:
        violations.append("a must be non-negative")

    if num.n_x < 8:
        violations.append("n_x >= 8 required")
    if num.n_z_layer < 4:
        violations.append("n_z_layer >= 4 required")
    if num.n_eta_gap < 4:
        violations.append("n_eta_gap >= 4 required")
    if num.eps_gap <= 0.0:
        violations.append("eps_gap must be positive")
    elif phys.H > 0.0 and not num.eps_gap < phys.H / 10.0:
        violations.append("eps_gap < H/10 violated")
    for name in ("tol_fp", "tol_as"):
        if getattr(num, name) <= 0.0:
            violations.append(f"{name} must be positive")
    for name in ("max_fp", "max_as"):
        if getattr(num, name) < 1:
            violations.append(f"{name} must be at least 1")
    if num.delta <= 0.0:
        violations.append("delta must be positive")
    if num.t_end <= 0.0:
        violations.append("t_end must be positive")

    if diel.sigma2 <= 0.0:
        violations.append("sigma2 must be positive")
    if diel.sigma1_profile not in ("constant", "affine", "bump"):
        violations.append(f"unknown sigma1_profile {diel.sigma1_profile!r}")
    if diel.sigma1_a <= 0.0:
        violations.append("sigma1_a must be positive")

    if init.kind not in ("zero", "bump", "file"):
        violations.append(f"unknown u0_kind {init.kind!r}")
    if init.kind == "file" and not init.path:
        violations.append("u0_kind = file requires u0_file")
    if init.kind == "bump" and init.amplitude < -phys.H:
        violations.append("u0_amplitude below -H: initial state inadmissible")

    if w_max < -phys.H:
        violations.append("w_max must be >= -H")

    if violations:
        raise ConfigError(violations)

    warnings: list[str] = []
    if phys.V == 0.0:
        warnings.append("V = 0: electrostatics disabled, pure mechanical flow")

    return ValidatedConfig(
        physical=phys,
        numerical=num,
        dielectric=diel,
        initial=init,
        w_max=w_max,
        defaulted=defaulted,
        warnings=tuple(warnings),
    )


def with_numerical(cfg: ValidatedConfig, **changes) -> ValidatedConfig:
    """Return a copy of cfg with numerical parameters replaced (re-validated)."""
    num = replace(cfg.numerical, **changes)
    return replace(cfg, numerical=num)
