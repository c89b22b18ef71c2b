"""Expectation-value transfer between states of known fidelity.

If ``0 <= E <= I`` has expectation ``y`` on one state and the fidelity to a
second state is at least ``z``, the expectation on the second state lies in
``[G_minus(y, z), G_plus(y, z)]``.
"""

from __future__ import annotations

import dataclasses
import logging
import math

from phaserand.errors import DomainError

logger = logging.getLogger(__name__)

_SLACK = 1e-12


@dataclasses.dataclass(frozen=True)
class ConstraintInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise DomainError(f"invalid interval [{self.lo}, {self.hi}]")

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def widened(self, factor: float) -> "ConstraintInterval":
        """Interval inflated about its centre by ``factor`` of its width, clipped to [0, 1]."""
        pad = 0.5 * factor * (self.hi - self.lo)
        return ConstraintInterval(max(0.0, self.lo - pad), min(1.0, self.hi + pad))


def _unit(x: float, name: str) -> float:
    x = float(x)
    if 0.0 <= x <= 1.0:
        return x
    if -_SLACK < x < 1.0 + _SLACK:
        logger.warning("clamping %s=%r into [0, 1]", name, x)
        return min(1.0, max(0.0, x))
    raise DomainError(f"{name} must lie in [0, 1], got {x!r}")


def g_pm(y: float, z: float, sign: int) -> float:
    """``y + (1-z)(1-2y) +/- 2 sqrt(z(1-z)y(1-y))``; ``sign`` is +1 or -1."""
    if sign not in (1, -1):
        raise DomainError(f"sign must be +1 or -1, got {sign!r}")
    y = _unit(y, "y")
    z = _unit(z, "z")
    w = 1.0 - z
    root = math.sqrt(max(0.0, z * w * y * (1.0 - y)))
    return y + w * (1.0 - 2.0 * y) + sign * 2.0 * root


def G_minus(y: float, z: float) -> float:
    y = _unit(y, "y")
    z = _unit(z, "z")
    if y > 1.0 - z:
        return min(1.0, max(0.0, g_pm(y, z, -1)))
    return 0.0


def G_plus(y: float, z: float) -> float:
    y = _unit(y, "y")
    z = _unit(z, "z")
    if y < z:
        return min(1.0, max(0.0, g_pm(y, z, +1)))
    return 1.0


def constraint_interval(Q: float, f_proj: float) -> ConstraintInterval:
    """Range of the truncated-state expectation compatible with observed ``Q``."""
    Q = _unit(Q, "Q")
    return ConstraintInterval(G_minus(Q, f_proj), G_plus(Q, f_proj))
