"""Uniformity parameter q from fringe visibility under Gaussian phase diffusion.

Adjacent pulse phases are modelled as ``phi_i = phi_{i-1} + drift + N(0, sigma^2)``
on the circle, so the interference visibility is ``V = exp(-sigma^2 / 2)``.
The uniformity parameter follows from a minimisation over the phases of a
pulse and its two neighbours. The model assumes a correlation length of one
round; for longer memory the result carries no guarantee.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from phaserand.errors import ConvergenceError, DomainError

TWO_PI = 2.0 * math.pi
GRID_POINTS = 721
REFINE_TOL = 1e-10


@dataclasses.dataclass(frozen=True)
class PhaseDiffusionModel:
    """Gaussian phase diffusion between adjacent pulses.

    ``phi_hat_d`` (the mean drift) drops out of ``q`` by translation
    invariance and is kept only for completeness.
    """

    sigma: float
    visibility: float
    phi_hat_d: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma!r}")
        if not 0 < self.visibility <= 1:
            raise DomainError(f"visibility must lie in (0, 1], got {self.visibility!r}")
        if abs(self.visibility - math.exp(-0.5 * self.sigma**2)) > 1e-12:
            raise DomainError("visibility and sigma are inconsistent")

    @classmethod
    def from_visibility(cls, V: float, phi_hat_d: float = 0.0) -> "PhaseDiffusionModel":
        return cls(sigma_from_visibility(V), float(V), phi_hat_d)


def sigma_from_visibility(V: float) -> float:
    """``sqrt(2 ln(1/V))``; refuses ``V`` outside ``(0, 1]``."""
    V = float(V)
    if not 0.0 < V <= 1.0:
        raise DomainError(f"visibility must lie in (0, 1], got {V!r}")
    return math.sqrt(-2.0 * math.log(V))


def wrap_terms(sigma: float, offset: float) -> int:
    """Images per side so the omitted Gaussian mass stays below 1e-12."""
    return math.ceil((10.0 * sigma + abs(offset)) / TWO_PI) + 1


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if sigma == 0.0:
        raise DomainError("sigma = 0 is a point mass; the wrapped density does not exist")
    if not sigma > 0 or not math.isfinite(sigma):
        raise DomainError(f"sigma must be positive and finite, got {sigma!r}")
    return sigma


def log_wrapped_gaussian_pdf(x, center: float, sigma: float, extra_terms: int = 0) -> np.ndarray:
    """Logarithm of the wrapped normal density, safe far into the tails.

    Args:
        x: evaluation point(s), any real value (taken modulo 2 pi).
        center: location of the underlying Gaussian.
        sigma: its standard deviation, > 0.
        extra_terms: additional images per side, for convergence checks.
    """
    sigma = _check_sigma(sigma)
    d = np.atleast_1d(np.asarray(x, dtype=float)) - float(center)
    d = np.mod(d + math.pi, TWO_PI) - math.pi
    K = wrap_terms(sigma, float(np.max(np.abs(d)))) + int(extra_terms)
    k = np.arange(-K, K + 1)
    z = (d[..., None] + TWO_PI * k) / sigma
    out = logsumexp(-0.5 * z * z, axis=-1) - math.log(sigma * math.sqrt(TWO_PI))
    return out if np.ndim(x) else out[0]


def wrapped_gaussian_pdf(x, center: float, sigma: float, extra_terms: int = 0) -> np.ndarray:
    """Wrapped normal density ``sum_k N(x + 2 pi k; center, sigma)`` on the circle."""
    return np.exp(log_wrapped_gaussian_pdf(x, center, sigma, extra_terms))


def log_ratio_objective(phi_i, phi_next, sigma: float, phi_prev: float = 0.0) -> np.ndarray:
    """``log`` of ``f(phi_i; phi_prev, s) f(phi_next; phi_i, s) / f(phi_next; phi_prev, sqrt2 s)``.

    The ratio is the conditional density of the middle phase given both
    neighbours; ``q / 2 pi`` is its minimum.
    """
    phi_i = np.asarray(phi_i, dtype=float)
    phi_next = np.asarray(phi_next, dtype=float)
    return (log_wrapped_gaussian_pdf(phi_i - phi_prev, 0.0, sigma)
            + log_wrapped_gaussian_pdf(phi_next - phi_i, 0.0, sigma)
            - log_wrapped_gaussian_pdf(phi_next - phi_prev, 0.0, math.sqrt(2.0) * sigma))


@dataclasses.dataclass(frozen=True)
class Calibration:
    """Outcome of the q minimisation.

    Attributes:
        sigma: diffusion width used.
        q: uniformity parameter, clipped to [0, 1].
        minimizer: located ``(phi_i, phi_next)``, reduced to [0, 2 pi).
        grid_q: the same quantity at the best grid node, before refinement.
        stationary_q: value at ``phi_i = phi_prev + pi``, ``phi_next = phi_prev``.
        phi_prev: the fixed first phase.
    """

    sigma: float
    q: float
    minimizer: tuple[float, float]
    grid_q: float
    stationary_q: float
    phi_prev: float = 0.0

    @property
    def stationary_gap(self) -> float:
        """How far the expected stationary point lies above the located minimum."""
        return self.stationary_q - self.q


def minimize_ratio(sigma: float, phi_prev: float = 0.0, grid_points: int = GRID_POINTS) -> Calibration:
    """Dense grid search over ``(phi_i, phi_next)`` followed by Nelder-Mead refinement.

    On a uniform periodic grid ``phi_next - phi_i`` is itself a grid offset, so
    the full grid needs only one-dimensional density evaluations.

    Raises:
        ConvergenceError: the local refinement did not converge; the message
            carries the grid minimum.
    """
    sigma = _check_sigma(sigma)
    n = int(grid_points)
    h = TWO_PI / n
    nodes = h * np.arange(n)
    first = log_wrapped_gaussian_pdf(nodes - phi_prev, 0.0, sigma)
    step = log_wrapped_gaussian_pdf(nodes, 0.0, sigma)
    last = log_wrapped_gaussian_pdf(nodes - phi_prev, 0.0, math.sqrt(2.0) * sigma)
    idx = np.arange(n)
    table = first[:, None] + step[(idx[None, :] - idx[:, None]) % n] - last[None, :]
    i, j = np.unravel_index(int(np.argmin(table)), table.shape)
    grid_log = float(table[i, j])

    def fun(p):
        return float(log_ratio_objective(p[0], p[1], sigma, phi_prev))

    res = optimize.minimize(fun, x0=np.array([nodes[i], nodes[j]]), method="Nelder-Mead",
                            options={"xatol": REFINE_TOL, "fatol": 1e-14, "maxiter": 20000,
                                     "initial_simplex": np.array([[nodes[i], nodes[j]],
                                                                  [nodes[i] + h, nodes[j]],
                                                                  [nodes[i], nodes[j] + h]])})
    if not res.success or res.fun > grid_log + 1e-12:
        raise ConvergenceError(
            f"refinement failed for sigma={sigma} ({res.message}); grid minimum "
            f"q={_to_q(grid_log):.9f} at ({nodes[i]:.6f}, {nodes[j]:.6f})"
        )
    stationary = fun((phi_prev + math.pi, phi_prev))
    return Calibration(
        sigma=sigma,
        q=_to_q(res.fun),
        minimizer=(float(np.mod(res.x[0], TWO_PI)), float(np.mod(res.x[1], TWO_PI))),
        grid_q=_to_q(grid_log),
        stationary_q=_to_q(stationary),
        phi_prev=float(phi_prev),
    )


def _to_q(log_value: float) -> float:
    return min(1.0, max(0.0, TWO_PI * math.exp(log_value)))


def q_from_sigma(sigma: float) -> float:
    """Uniformity parameter for diffusion width ``sigma > 0``."""
    return minimize_ratio(sigma).q


def q_from_visibility(V: float) -> float:
    """Uniformity parameter for a measured visibility.

    ``V = 1`` means no diffusion at all, hence a deterministic phase and
    ``q = 0``.
    """
    sigma = sigma_from_visibility(V)
    if sigma == 0.0:
        return 0.0
    return q_from_sigma(sigma)


def calibrate(V: float) -> Calibration:
    """Full calibration record for one visibility, for reporting."""
    sigma = sigma_from_visibility(V)
    if sigma == 0.0:
        return Calibration(0.0, 0.0, (math.pi, 0.0), 0.0, 0.0)
    return minimize_ratio(sigma)
