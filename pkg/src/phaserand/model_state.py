"""Truncated model states of an imperfectly phase-randomised laser.

The per-round state is the mixture ``q * (phase-randomised coherent state) +
(1 - q) * (fixed-phase coherent state)``. Here it is projected onto at most
``M`` photons, diagonalised, and supplemented with the perturbation terms that
connect the truncated eigen-data back to the untruncated state.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path

import numpy as np
from scipy.stats import poisson

from phaserand.errors import DegeneracyError, DomainError, SpectralGapError
from phaserand.fock import coherent_amplitudes

# Eigenvalues below this magnitude are treated as exact zeros.
ZERO_EIGENVALUE = 1e-13


@dataclasses.dataclass(frozen=True)
class SpectralModel:
    """Eigen-data of ``Pi_M rho_model Pi_M`` indexed by photon-number tag.

    ``eigenvalues[n]`` and ``eigenvectors[:, n]`` belong to tag ``n``. The
    eigenvalues are those of the unnormalised projection, so they sum to
    ``f_proj``. ``deficit`` is ``1 - f_proj`` evaluated from the Poisson tail
    directly, and ``f_proj`` is rounded so that ``1 - f_proj >= deficit``.
    """

    mu: float
    q: float
    M: int
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    f_proj: float
    deficit: float
    eps_val: float | None = None
    delta: np.ndarray | None = None
    f_vec: np.ndarray | None = None

    @property
    def normalised_state(self) -> np.ndarray:
        """Trace-one version of the projected state."""
        return self.matrix / self.f_proj

    def eigenvector(self, n: int) -> np.ndarray:
        return self.eigenvectors[:, n]


def build_projected_model(mu: float, q: float, M: int) -> np.ndarray:
    """Matrix of ``Pi_M rho_model Pi_M`` in the Fock basis ``|0>..|M>``."""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"uniformity parameter q must lie in [0, 1], got {q!r}")
    a = coherent_amplitudes(mu, M)
    rho = (1.0 - q) * np.outer(a, a)
    rho[np.diag_indices_from(rho)] = a * a
    return rho


def spectral_decompose(rho: np.ndarray, mu: float, q: float, M: int) -> SpectralModel:
    """Diagonalise a projected model state and tag eigenvectors by photon number.

    Tag ``n`` goes to the eigenvector with the largest weight on ``|n>``.
    Inside a degenerate eigenspace the basis is first rotated to the one
    closest to the Fock states it can absorb, so exact degeneracies (for
    example the null space when ``q = 0``) do not produce arbitrary tags.

    Raises:
        DegeneracyError: two eigenvectors claim the same Fock state.
    """
    rho = np.asarray(rho, dtype=float)
    d = M + 1
    if rho.shape != (d, d):
        raise DomainError(f"expected a {d}x{d} matrix, got {rho.shape}")
    w, U = np.linalg.eigh(0.5 * (rho + rho.T))
    w = np.where(np.abs(w) < ZERO_EIGENVALUE, 0.0, w)

    tags = np.full(d, -1)
    clusters = _clusters(w)
    claimed: set[int] = set()
    for cl in clusters:
        if len(cl) == 1:
            i = cl[0]
            n = int(np.argmax(U[:, i] ** 2))
            if n in claimed:
                raise _degeneracy(U, w, mu, q)
            tags[i] = n
            claimed.add(n)
    for cl in clusters:
        if len(cl) == 1:
            continue
        E = U[:, cl]
        weight = np.sum(E**2, axis=1)
        free = [m for m in np.argsort(-weight, kind="stable") if m not in claimed]
        chosen = sorted(free[: len(cl)])
        P = E @ E[chosen, :].T
        # Loewdin orthonormalisation keeps the new basis closest to the chosen Fock states.
        s, V = np.linalg.eigh(P.T @ P)
        if s.min() <= 1e-12:
            raise _degeneracy(U, w, mu, q)
        U[:, cl] = P @ (V / np.sqrt(s)) @ V.T
        for i, m in zip(cl, chosen):
            tags[i] = m
            claimed.add(m)

    argmax = np.argmax(U**2, axis=0)
    if len(claimed) != d or np.any(argmax != tags):
        raise _degeneracy(U, w, mu, q)
    order = np.argsort(tags)
    vals = w[order]
    vecs = U[:, order]
    signs = np.where(vecs[np.arange(d), np.arange(d)] < 0, -1.0, 1.0)
    vecs = vecs * signs

    deficit = float(poisson.sf(M, mu)) if mu > 0 else 0.0
    return SpectralModel(
        mu=float(mu),
        q=float(q),
        M=int(M),
        matrix=rho,
        eigenvalues=vals,
        eigenvectors=vecs,
        f_proj=one_minus_upper(deficit),
        deficit=deficit,
    )


def correction_terms(s: SpectralModel, require_tag: int | None = 1) -> SpectralModel:
    """Fill in ``eps_val``, the gaps ``delta`` and the fidelities ``f_vec``.

    ``f_vec[n]`` is clamped to ``[0, 1]``; a non-positive gap gives 0. For
    ``require_tag`` a non-positive gap is an error instead, because the
    eigenvector bound would be void.
    """
    p = s.eigenvalues
    d = p.size
    eps = 2.0 * math.sqrt(1.0 - s.f_proj)
    delta = np.empty(d)
    delta[0] = p[0] - p[1] - eps
    for n in range(1, d):
        below = p[n - 1] - p[n] - eps
        delta[n] = below if n == d - 1 else min(below, p[n] - p[n + 1] - eps)
    f_vec = np.zeros(d)
    for n in range(d):
        if delta[n] > 0:
            f_vec[n] = max(0.0, one_minus_upper((eps / delta[n]) ** 2))
    if require_tag is not None and not delta[require_tag] > 0:
        raise SpectralGapError(
            f"spectral gap for tag {require_tag} is {delta[require_tag]:.3e} <= 0 "
            f"(mu={s.mu}, q={s.q}, M={s.M}); the eigenvector bound does not apply"
        )
    return dataclasses.replace(s, eps_val=eps, delta=delta, f_vec=f_vec)


def spectral_model(mu: float, q: float, M: int, require_tag: int | None = 1) -> SpectralModel:
    """Build, diagonalise and correct the model state in one call."""
    rho = build_projected_model(mu, q, M)
    return correction_terms(spectral_decompose(rho, mu, q, M), require_tag=require_tag)


def one_minus_upper(x: float) -> float:
    """Largest float ``z <= 1 - x`` whose computed ``1 - z`` is at least ``x``.

    Keeps fidelity-like quantities on the safe side when ``x`` is below the
    resolution of doubles near one.
    """
    z = 1.0 - x
    while 1.0 - z < x:
        z = np.nextafter(z, -np.inf)
    return float(z)


def write_spectral_csv(s: SpectralModel, path: str | Path) -> None:
    """Debug dump with columns ``tag, eigenvalue, gap, f_vec``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["tag", "eigenvalue", "gap", "f_vec"])
        for n in range(s.eigenvalues.size):
            gap = "" if s.delta is None else repr(float(s.delta[n]))
            fv = "" if s.f_vec is None else repr(float(s.f_vec[n]))
            out.writerow([n, repr(float(s.eigenvalues[n])), gap, fv])


def _clusters(w: np.ndarray) -> list[list[int]]:
    order = np.argsort(w, kind="stable")
    groups: list[list[int]] = [[int(order[0])]]
    for i in order[1:]:
        if w[i] - w[groups[-1][-1]] <= ZERO_EIGENVALUE:
            groups[-1].append(int(i))
        else:
            groups.append([int(i)])
    return groups


def _degeneracy(U: np.ndarray, w: np.ndarray, mu: float, q: float) -> DegeneracyError:
    overlaps = np.round(U**2, 3)
    return DegeneracyError(
        f"cannot tag eigenvectors one-to-one with Fock states (mu={mu}, q={q}); "
        f"eigenvalues={np.round(w, 6).tolist()}, max overlaps={overlaps.max(axis=0).tolist()}"
    )
