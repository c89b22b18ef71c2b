"""Protocol configuration: defaults, YAML loading and range validation.

The file is a YAML mapping. Every key is optional; ``schema_version``, when
present, must be 1. Recognised keys::

    schema_version: 1
    q: 0.992407            # a number or a list of numbers
    visibility: 0.0019     # converted to q when q is absent
    l_c: 1
    M: 9
    mu_s_grid: [0.05, 0.1, ...]
    mu_w_ratio: 0.2
    p_d: 1.0e-8
    f: 1.16
    loss_grid_db: [0, 5, 10, ...]
    solver_tol: 1.0e-8
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path
from typing import Any

import yaml

from phaserand.errors import ConfigNotFoundError, ConfigRangeError, ConfigSchemaError

SCHEMA_VERSION = 1


def default_mu_grid() -> tuple[float, ...]:
    return tuple(round(0.05 * k, 10) for k in range(1, 21))


def default_loss_grid() -> tuple[float, ...]:
    return tuple(float(x) for x in range(0, 61, 5))


@dataclasses.dataclass(frozen=True)
class ProtocolConfig:
    """Validated protocol and numerics settings.

    ``q_values`` holds one or more uniformity parameters; sweeps run one curve
    per value. ``l_c`` is carried for the record only, as the asymptotic rate
    does not depend on it.
    """

    q_values: tuple[float, ...] = (1.0,)
    visibility: float | None = None
    l_c: int = 1
    M: int = 9
    mu_s_grid: tuple[float, ...] = dataclasses.field(default_factory=default_mu_grid)
    mu_w_ratio: float = 0.2
    p_d: float = 1e-8
    f: float = 1.16
    loss_grid_db: tuple[float, ...] = dataclasses.field(default_factory=default_loss_grid)
    solver_tol: float = 1e-8

    def __post_init__(self):
        validate(self)

    @property
    def q(self) -> float:
        return self.q_values[0]

    def replace(self, **changes) -> "ProtocolConfig":
        return dataclasses.replace(self, **changes)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigRangeError(msg)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate(c: ProtocolConfig) -> None:
    """Raise :class:`ConfigRangeError` on any out-of-range field."""
    _check(len(c.q_values) > 0, "at least one q value is required")
    for q in c.q_values:
        _check(_finite(q) and 0.0 <= q <= 1.0, f"q must lie in [0, 1], got {q!r}")
    if c.visibility is not None:
        _check(_finite(c.visibility) and 0.0 < c.visibility <= 1.0,
               f"visibility must lie in (0, 1], got {c.visibility!r}")
    _check(isinstance(c.l_c, int) and not isinstance(c.l_c, bool) and c.l_c >= 0,
           f"l_c must be a non-negative integer, got {c.l_c!r}")
    _check(isinstance(c.M, int) and not isinstance(c.M, bool) and 1 <= c.M <= 14,
           f"M must be an integer in [1, 14], got {c.M!r}")
    _check(len(c.mu_s_grid) > 0, "mu_s_grid must not be empty")
    for mu in c.mu_s_grid:
        _check(_finite(mu) and 0.0 < mu <= 5.0, f"mu_s values must lie in (0, 5], got {mu!r}")
    _check(_finite(c.mu_w_ratio) and 0.0 < c.mu_w_ratio < 1.0,
           f"mu_w_ratio must lie in (0, 1), got {c.mu_w_ratio!r}")
    _check(_finite(c.p_d) and 0.0 <= c.p_d < 1.0, f"p_d must lie in [0, 1), got {c.p_d!r}")
    _check(_finite(c.f) and c.f >= 1.0, f"f must be >= 1, got {c.f!r}")
    for loss in c.loss_grid_db:
        _check(_finite(loss) and loss >= 0.0, f"loss values must be >= 0 dB, got {loss!r}")
    _check(_finite(c.solver_tol) and 1e-12 <= c.solver_tol <= 1e-4,
           f"solver_tol must lie in [1e-12, 1e-4], got {c.solver_tol!r}")


_KEYS = {"schema_version", "q", "visibility", "l_c", "M", "mu_s_grid", "mu_w_ratio", "p_d", "f",
         "loss_grid_db", "solver_tol"}


def _number(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigSchemaError(f"{key} must be a number, got {value!r}")
    return float(value)


def _integer(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigSchemaError(f"{key} must be an integer, got {value!r}")
    return value


def _numbers(key: str, value: Any, allow_scalar: bool = False) -> tuple[float, ...]:
    if allow_scalar and not isinstance(value, list):
        return (_number(key, value),)
    if not isinstance(value, list):
        raise ConfigSchemaError(f"{key} must be a list of numbers, got {value!r}")
    return tuple(_number(key, v) for v in value)


def config_from_mapping(data: dict | None) -> ProtocolConfig:
    """Build a config from parsed YAML, filling defaults.

    Raises:
        ConfigSchemaError: wrong version, unknown key or wrong value type.
        ConfigRangeError: a value is out of range.
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigSchemaError("the configuration must be a mapping")
    unknown = sorted(set(map(str, data)) - _KEYS)
    if unknown:
        raise ConfigSchemaError(f"unknown configuration keys: {', '.join(unknown)}")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigSchemaError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")

    kw: dict[str, Any] = {}
    if "visibility" in data:
        kw["visibility"] = _number("visibility", data["visibility"])
    if "q" in data:
        kw["q_values"] = _numbers("q", data["q"], allow_scalar=True)
    elif "visibility" in kw:
        from phaserand.calibration import q_from_visibility
        from phaserand.errors import DomainError

        try:
            kw["q_values"] = (q_from_visibility(kw["visibility"]),)
        except DomainError as exc:
            raise ConfigRangeError(str(exc)) from exc
    for key in ("l_c", "M"):
        if key in data:
            kw[key] = _integer(key, data[key])
    for key in ("mu_w_ratio", "p_d", "f", "solver_tol"):
        if key in data:
            kw[key] = _number(key, data[key])
    for key in ("mu_s_grid", "loss_grid_db"):
        if key in data:
            kw[key] = _numbers(key, data[key])
    return ProtocolConfig(**kw)


def load_config(path: str | Path) -> ProtocolConfig:
    """Read and validate a YAML configuration file; an empty file gives all defaults.

    Raises:
        ConfigNotFoundError: the file does not exist.
        ConfigSchemaError: malformed YAML, wrong version, unknown key or wrong type.
        ConfigRangeError: a value is out of range.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ConfigNotFoundError(f"configuration file not found: {path}") from exc
    except IsADirectoryError as exc:
        raise ConfigNotFoundError(f"configuration path is a directory: {path}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigSchemaError(f"cannot parse {path}: {exc}") from exc
    return config_from_mapping(data)

