"""Dense real linear algebra on truncated one- and two-mode Fock spaces.

Vectors and operators are plain ``numpy`` float arrays. A single-mode object
truncated at ``M`` photons has ``M + 1`` entries indexed by photon number. A
two-mode object lives on the span of ``|m>|m'>`` with ``m + m' <= M``; the
basis order is lexicographic in ``(m, m')``::

    (0, 0), (0, 1), ..., (0, M), (1, 0), ..., (1, M - 1), ..., (M, 0)

Everything is real: coherent amplitudes and the ideal BB84 encodings have
real coefficients, so symmetric matrices stand in for Hermitian ones.
"""

from __future__ import annotations

import enum
import functools
import math

import numpy as np
from scipy.special import gammaln

from phaserand.errors import DomainError, UsageError

__all__ = [
    "EncodingId",
    "coherent_amplitudes",
    "two_mode_enumerate",
    "two_mode_dim",
    "two_mode_index",
    "encoding_matrix",
    "apply_encoding",
    "conjugate_by_encoding",
]


class EncodingId(enum.Enum):
    """Alice's four bit-and-basis settings."""

    Z0 = "0Z"
    Z1 = "1Z"
    X0 = "0X"
    X1 = "1X"

    @property
    def basis(self) -> str:
        return self.value[1]

    @property
    def bit(self) -> int:
        return int(self.value[0])


def coherent_amplitudes(mu: float, M: int) -> np.ndarray:
    """Fock amplitudes <m|sqrt(mu)> for m = 0..M (unnormalised projection).

    Args:
        mu: Mean photon number, ``mu >= 0``.
        M: Photon-number truncation, ``M >= 1``.

    Returns:
        Array of length ``M + 1`` with entries ``exp(-mu/2) mu**(m/2) / sqrt(m!)``.
    """
    if not mu >= 0:
        raise DomainError(f"mean photon number must be >= 0, got {mu!r}")
    _check_truncation(M)
    m = np.arange(M + 1)
    if mu == 0:
        out = np.zeros(M + 1)
        out[0] = 1.0
        return out
    log_amp = 0.5 * (m * math.log(mu) - mu - gammaln(m + 1))
    return np.exp(log_amp)


@functools.lru_cache(maxsize=None)
def two_mode_enumerate(M: int) -> tuple[tuple[int, int], ...]:
    """All pairs ``(m, m')`` with ``m + m' <= M`` in lexicographic order."""
    _check_truncation(M)
    return tuple((m, mp) for m in range(M + 1) for mp in range(M + 1 - m))


def two_mode_dim(M: int) -> int:
    return (M + 1) * (M + 2) // 2


@functools.lru_cache(maxsize=None)
def _index_map(M: int) -> dict[tuple[int, int], int]:
    return {pair: i for i, pair in enumerate(two_mode_enumerate(M))}


def two_mode_index(m: int, mp: int, M: int) -> int:
    """Position of ``|m>|mp>`` in the two-mode basis truncated at ``M``."""
    try:
        return _index_map(M)[(m, mp)]
    except KeyError:
        raise UsageError(f"|{m},{mp}> lies outside the basis truncated at M={M}") from None


@functools.lru_cache(maxsize=None)
def encoding_matrix(encoding: EncodingId, M: int) -> np.ndarray:
    """Isometry of an ideal BB84 encoding as a ``two_mode_dim(M) x (M + 1)`` matrix.

    ``0Z`` puts the pulse in the first mode, ``1Z`` in the second, and the X
    settings split it binomially with amplitude ``sqrt(C(m, k) / 2**m)``; the
    ``1X`` setting carries the extra sign ``(-1)**k``.
    """
    _check_truncation(M)
    encoding = EncodingId(encoding)
    V = np.zeros((two_mode_dim(M), M + 1))
    idx = _index_map(M)
    for m in range(M + 1):
        if encoding is EncodingId.Z0:
            V[idx[(m, 0)], m] = 1.0
        elif encoding is EncodingId.Z1:
            V[idx[(0, m)], m] = 1.0
        else:
            sign = -1.0 if encoding is EncodingId.X1 else 1.0
            for k in range(m + 1):
                V[idx[(k, m - k)], m] = sign**k * math.sqrt(math.comb(m, k) / 2.0**m)
    V.setflags(write=False)
    return V


def apply_encoding(encoding: EncodingId, v: np.ndarray) -> np.ndarray:
    """Map a single-mode vector truncated at ``M = len(v) - 1`` to two modes."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise UsageError("apply_encoding expects a single-mode vector of length M + 1 >= 2")
    return encoding_matrix(EncodingId(encoding), v.size - 1) @ v


def conjugate_by_encoding(encoding: EncodingId, rho: np.ndarray) -> np.ndarray:
    """Return ``V rho V^T`` for a single-mode operator ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 2:
        raise UsageError(f"expected a square single-mode operator, got shape {rho.shape}")
    V = encoding_matrix(EncodingId(encoding), rho.shape[0] - 1)
    out = V @ rho @ V.T
    return 0.5 * (out + out.T)


def _check_truncation(M: int) -> None:
    if int(M) != M or M < 1:
        raise DomainError(f"truncation M must be an integer >= 1, got {M!r}")
