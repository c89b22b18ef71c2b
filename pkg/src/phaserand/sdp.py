"""Bounded-operator SDPs for the tagged yield and phase-error rate.

Every problem has the form::

    minimize / maximize   Tr[C X]
    subject to            lo_k <= Tr[A_k X] <= hi_k,   0 <= X <= I

with real symmetric ``C`` and ``A_k``. :func:`solve` hands the problem to
CVXOPT but does not trust the returned objective. It rebuilds a Lagrange
dual bound from the solver's multipliers on the original matrices, so the
reported ``certified_bound`` is valid whatever the solver's accuracy. The
primal value is only used to measure the duality gap.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from pathlib import Path
from typing import Sequence

import numpy as np
from cvxopt import matrix
from cvxopt import solvers as cvx_solvers

from phaserand.channel import SETTINGS, ObservationSet
from phaserand.errors import CertificationError, DomainError, InfeasibleProblemError, UsageError
from phaserand.fidelity import G_minus, G_plus, ConstraintInterval, constraint_interval
from phaserand.fock import EncodingId, apply_encoding, conjugate_by_encoding
from phaserand.model_state import SpectralModel

MAX_DIMENSION = 128
DEFAULT_TOL = 1e-8
# Relative singular-value cutoff when restricting to the joint range of the data.
RANGE_CUTOFF = 1e-13
# Constraint violation tolerated in the primal iterate used to measure the gap.
FEASIBILITY_SLACK = 10.0
_EPS = np.finfo(float).eps


class Sense(enum.Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INACCURATE = "inaccurate"
    INFEASIBLE = "infeasible"


@dataclasses.dataclass(frozen=True)
class BoundProblem:
    sense: Sense
    objective: np.ndarray
    constraints: tuple[tuple[np.ndarray, ConstraintInterval], ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sense", Sense(self.sense))
        C = _symmetric(self.objective, "objective")
        d = C.shape[0]
        cons = []
        for k, (A, interval) in enumerate(self.constraints):
            A = _symmetric(A, f"constraint {k}")
            if A.shape != (d, d):
                raise DomainError(f"constraint {k} has shape {A.shape}, expected {(d, d)}")
            if not isinstance(interval, ConstraintInterval):
                interval = ConstraintInterval(*interval)
            cons.append((A, interval))
        if self.labels and len(self.labels) != len(cons):
            raise DomainError("one label per constraint is required")
        object.__setattr__(self, "objective", C)
        object.__setattr__(self, "constraints", tuple(cons))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dimension(self) -> int:
        return self.objective.shape[0]

    def widened(self, factor: float) -> "BoundProblem":
        """Same problem with every interval inflated by ``factor`` of its width."""
        cons = tuple((A, iv.widened(factor)) for A, iv in self.constraints)
        return dataclasses.replace(self, constraints=cons)

    def is_feasible_point(self, X: np.ndarray) -> list[str]:
        """Names of the constraints violated by ``X``, evaluated in plain floats.

        The box ``0 <= X <= I`` is checked on the eigenvalues with a ``1e-12``
        allowance for the eigensolver; the interval constraints get none.
        """
        bad = []
        w = np.linalg.eigvalsh(X)
        if w.min() < -1e-12 or w.max() > 1 + 1e-12:
            bad.append("box")
        for k, (A, iv) in enumerate(self.constraints):
            if not iv.contains(float(np.sum(A * X))):
                bad.append(self.labels[k] if self.labels else f"constraint {k}")
        return bad


def _symmetric(M, name: str) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError(f"{name} has non-finite entries")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise DomainError(f"{name} is not symmetric")
    M = 0.5 * (M + M.T)
    M.setflags(write=False)
    return M


@dataclasses.dataclass(frozen=True)
class BoundCertificate:
    """Outcome of :func:`solve`.

    ``certified_bound`` equals ``dual_value``: a guaranteed lower bound on the
    minimum (upper bound on the maximum), including a margin for rounding in
    its own evaluation.
    """

    sense: Sense
    primal_value: float
    dual_value: float
    gap: float
    status: Status
    certified_bound: float
    multipliers: np.ndarray
    solver_status: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def dual_bound(problem: BoundProblem, y: np.ndarray) -> float:
    """Lagrange dual bound for multipliers ``y`` (one per constraint).

    For a minimisation, ``Tr[C X] = sum_k y_k Tr[A_k X] + Tr[S X]`` with
    ``S = C - sum_k y_k A_k``. Each term is bounded below using the interval
    ends and ``0 <= X <= I``, so the result is below the optimum for any
    ``y``. For a maximisation the same is done for ``-C`` and negated.
    """
    sign = 1.0 if problem.sense is Sense.MINIMIZE else -1.0
    y = np.asarray(y, dtype=float)
    if y.shape != (len(problem.constraints),):
        raise UsageError(f"expected {len(problem.constraints)} multipliers, got shape {y.shape}")
    d = problem.dimension
    S = sign * problem.objective
    scale = np.linalg.norm(S)
    affine = 0.0
    ends = 0.0
    for yk, (A, iv) in zip(y, problem.constraints):
        S = S - yk * A
        affine += yk * iv.lo if yk > 0 else yk * iv.hi
        scale += abs(yk) * np.linalg.norm(A)
        ends += abs(yk) * max(iv.lo, iv.hi)
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    value = affine + float(np.sum(np.minimum(w, 0.0)))
    # Rounding allowance: assembling S perturbs it by at most (K + 2) eps scale
    # in Frobenius norm, which moves the sum of negative eigenvalues by at most
    # sqrt(d) times that; the eigensolver is backward stable with error
    # d eps ||S||_2 per eigenvalue. A factor 4 covers the constants.
    norm_s = float(np.max(np.abs(w))) if w.size else 0.0
    K = len(y)
    margin = 4.0 * _EPS * (math.sqrt(d) * (K + 2) * (scale + 1.0) + d * d * (norm_s + 1.0) + ends + K + 1.0)
    value -= margin
    return sign * value


def _reduction_basis(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Orthonormal basis of the sum of the column spaces of ``mats``."""
    stack = np.hstack(mats)
    U, s, _ = np.linalg.svd(stack, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return U[:, :0]
    return U[:, : int(np.sum(s > RANGE_CUTOFF * s[0]))]


def _merge(problem: BoundProblem) -> dict[int, tuple[float, float]]:
    """Group constraints that share a matrix and intersect their intervals.

    Repeated rows (the vacuum under every encoding, for instance) make the
    KKT system singular. Keys are the first member of each group.
    """
    merged: dict[int, list[float]] = {}
    for k, (A, iv) in enumerate(problem.constraints):
        for j in merged:
            if np.array_equal(A, problem.constraints[j][0]):
                merged[j][0] = max(merged[j][0], iv.lo)
                merged[j][1] = min(merged[j][1], iv.hi)
                break
        else:
            merged[k] = [iv.lo, iv.hi]
    if any(lo > hi for lo, hi in merged.values()):
        raise InfeasibleProblemError("constraints on the same operator have disjoint intervals")
    return {k: (lo, hi) for k, (lo, hi) in merged.items()}


@dataclasses.dataclass
class _Attempt:
    status: str
    X: np.ndarray | None
    y: np.ndarray


def _coords(M: np.ndarray) -> np.ndarray:
    """Trace pairing of ``M`` with the symmetric basis ``E_ij = e_i e_j^T + e_j e_i^T``."""
    i, j = np.tril_indices(M.shape[0])
    return np.where(i == j, 1.0, 2.0) * M[i, j]


def _interior_point(c: np.ndarray, rows: dict[int, np.ndarray], merged: dict[int, tuple[float, float]],
                    r: int, scale: float, options: dict) -> _Attempt:
    """One CVXOPT run on the reduced problem ``min c.x`` for ``X / scale``."""
    i, j = np.tril_indices(r)
    n = i.size
    eq = [k for k, (lo, hi) in merged.items() if lo == hi]
    ineq = [k for k in merged if k not in eq]
    G, h = [], []
    for k in ineq:
        G += [rows[k], -rows[k]]
        h += [merged[k][1] / scale, -merged[k][0] / scale]
    Gs = np.zeros((r * r, n))
    Gs[i * r + j, np.arange(n)] = 1.0
    Gs[j * r + i, np.arange(n)] = 1.0
    args = dict(
        Gs=[matrix(-Gs), matrix(Gs)],
        hs=[matrix(np.zeros((r, r))), matrix(np.eye(r) / scale)],
    )
    if ineq:
        args.update(Gl=matrix(np.array(G)), hl=matrix(np.array(h)))
    if eq:
        args.update(A=matrix(np.array([rows[k] for k in eq])),
                    b=matrix(np.array([merged[k][0] / scale for k in eq])))
    try:
        sol = cvx_solvers.sdp(matrix(c), options=dict(options, show_progress=False), **args)
    except (ArithmeticError, ValueError) as exc:
        return _Attempt(f"error: {exc}", None, np.zeros(len(merged)))
    status = sol["status"]
    y = dict.fromkeys(merged, 0.0)
    if sol["zl"] is not None and ineq:
        z = np.array(sol["zl"]).ravel()
        for m, k in enumerate(ineq):
            y[k] = z[2 * m + 1] - z[2 * m]
    if sol["y"] is not None and eq:
        w = np.array(sol["y"]).ravel()
        for m, k in enumerate(eq):
            y[k] = -w[m]
    yv = np.array([y[k] for k in merged])
    yv = np.where(np.isfinite(yv), yv, 0.0)
    X = None
    if sol["x"] is not None:
        x = np.array(sol["x"]).ravel() * scale
        if np.all(np.isfinite(x)):
            X = np.zeros((r, r))
            X[i, j] = x
            X = X + np.tril(X, -1).T
    return _Attempt(status, X, yv)


def _residual(X: np.ndarray, mats: dict[int, np.ndarray], merged) -> float:
    w = np.linalg.eigvalsh(X)
    res = max(0.0, -w.min(), w.max() - 1.0)
    for k, (lo, hi) in merged.items():
        t = float(np.sum(mats[k] * X))
        res = max(res, lo - t, t - hi)
    return res


def solve(problem: BoundProblem, tol: float = DEFAULT_TOL,
          max_dimension: int = MAX_DIMENSION) -> BoundCertificate:
    """Solve ``problem`` and certify the result through :func:`dual_bound`.

    The optimisation runs on the joint range of the objective and constraint
    matrices. Outside that range every matrix vanishes, so the reduced
    problem has the same optimum; the certificate is still evaluated on the
    full matrices. The interior-point method first runs with the variable
    rescaled so that constraint values are of order one; if that does not
    close the gap it is retried unscaled, then with stopping rules at ``tol``
    itself (very tight rules can stall on nearly pinned constraints) and
    finally with the solver's defaults. The tightest certificate and primal value are kept.

    The status is ``optimal`` when a primal iterate violating no constraint
    by more than ``FEASIBILITY_SLACK * tol`` lies within ``tol * max(1, |primal|)`` of the
    certified bound.

    Raises:
        InfeasibleProblemError: the interval constraints admit no ``X``.
    """
    if problem.dimension > max_dimension:
        raise UsageError(f"dimension {problem.dimension} exceeds the cap {max_dimension}")
    sign = 1.0 if problem.sense is Sense.MINIMIZE else -1.0
    K = len(problem.constraints)
    merged = _merge(problem)
    reps = list(merged)
    # Members of a merged group share the tightest interval, so this problem
    # has the same feasible set and its dual bounds are valid for the original.
    tight = BoundProblem(problem.sense, problem.objective, tuple(
        (problem.constraints[k][0], ConstraintInterval(*merged[k])) for k in reps))

    Q = _reduction_basis([problem.objective] + [A for A, _ in problem.constraints])
    r = Q.shape[1]
    if r == 0:
        dual = dual_bound(problem, np.zeros(K))
        return BoundCertificate(problem.sense, 0.0, dual, abs(dual), Status.OPTIMAL, dual,
                                np.zeros(K), "trivial")
    reduced = {k: Q.T @ problem.constraints[k][0] @ Q for k in reps}
    rows = {k: _coords(M) for k, M in reduced.items()}
    c = sign * _coords(Q.T @ problem.objective @ Q)
    top = min(1.0, max(1e-12, max((hi for _, hi in merged.values()), default=1.0)))
    tight_opts = {"abstol": 0.1 * tol, "reltol": 0.1 * tol, "feastol": 0.1 * tol}
    plain_opts = {"abstol": tol, "reltol": tol, "feastol": tol}
    plans = [(top, tight_opts), (1.0, tight_opts), (top, plain_opts), (1.0, plain_opts), (top, {})]

    best_dual, best_y, best_primal, statuses = None, None, None, []
    for scale, opts in plans:
        att = _interior_point(c, rows, merged, r, scale, opts)
        statuses.append(att.status)
        if att.status == "primal infeasible":
            raise InfeasibleProblemError(
                "bound problem is infeasible: the observed statistics are inconsistent with "
                "any channel on the truncated space"
            )
        d = dual_bound(tight, att.y)
        if best_dual is None or sign * d > sign * best_dual:
            best_dual, best_y = d, att.y
        if att.X is not None and _residual(att.X, reduced, merged) <= FEASIBILITY_SLACK * tol:
            p = sign * float(c @ att.X[np.tril_indices(r)])
            if best_primal is None or sign * p < sign * best_primal:
                best_primal = p
        if best_primal is not None and abs(best_primal - best_dual) <= tol * max(1.0, abs(best_primal)):
            break

    y = np.zeros(K)
    y[reps] = best_y
    primal = math.nan if best_primal is None else best_primal
    gap = abs(primal - best_dual) if best_primal is not None else math.inf
    ok = gap <= tol * max(1.0, abs(primal)) if best_primal is not None else False
    return BoundCertificate(
        problem.sense, primal, best_dual, gap, Status.OPTIMAL if ok else Status.INACCURATE,
        best_dual, y, "/".join(statuses),
    )



# -- problem builders ----------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class VirtualStatePair:
    vtilde_0: np.ndarray
    vtilde_1: np.ndarray

    @property
    def p_vir_0(self) -> float:
        return float(self.vtilde_0 @ self.vtilde_0)

    @property
    def p_vir_1(self) -> float:
        return float(self.vtilde_1 @ self.vtilde_1)

    def vtilde(self, beta: int) -> np.ndarray:
        return self.vtilde_1 if beta else self.vtilde_0


def virtual_states(lam: np.ndarray) -> VirtualStatePair:
    """Split a Z-encoded single-mode vector into its two X-basis virtual branches."""
    lam = np.asarray(lam, dtype=float)
    a = apply_encoding(EncodingId.Z0, lam)
    b = apply_encoding(EncodingId.Z1, lam)
    return VirtualStatePair(0.5 * (a + b), 0.5 * (a - b))


def _check_models(models: Sequence[SpectralModel], obs: ObservationSet) -> None:
    if len(models) != len(obs.intensities):
        raise UsageError(f"{len(models)} models for {len(obs.intensities)} intensities")
    for m, mu in zip(models, obs.intensities):
        if m.mu != mu:
            raise UsageError(f"model intensity {m.mu} does not match observation {mu}")
    if len({m.M for m in models}) != 1:
        raise UsageError("all models must share the truncation M")


def build_yield_problem(models: Sequence[SpectralModel], obs: ObservationSet) -> BoundProblem:
    """Minimum Z detection probability of the signal's tag-1 eigenvector."""
    _check_models(models, obs)
    lam = models[0].eigenvector(1)
    cons, labels = [], []
    for i, m in enumerate(models):
        cons.append((m.normalised_state, constraint_interval(obs.qz[i], m.f_proj)))
        labels.append(f"QZ mu={m.mu:g}")
    return BoundProblem(Sense.MINIMIZE, np.outer(lam, lam), tuple(cons), tuple(labels))


def build_phase_error_problem(beta: int, models: Sequence[SpectralModel], obs: ObservationSet,
                              vsp: VirtualStatePair) -> BoundProblem:
    """Maximum rate of the opposite X outcome for virtual branch ``beta``."""
    if beta not in (0, 1):
        raise UsageError(f"beta must be 0 or 1, got {beta!r}")
    _check_models(models, obs)
    outcome = 1 - beta
    rates = obs.qx(outcome)
    v = vsp.vtilde(beta)
    cons, labels = [], []
    for i, m in enumerate(models):
        rho = m.normalised_state
        for j, s in enumerate(SETTINGS):
            cons.append((conjugate_by_encoding(s, rho), constraint_interval(rates[i, j], m.f_proj)))
            labels.append(f"QX{outcome} mu={m.mu:g} {s.value}")
    return BoundProblem(Sense.MAXIMIZE, np.outer(v, v), tuple(cons), tuple(labels))


def _require_optimal(cert: BoundCertificate, what: str) -> None:
    if not cert.optimal:
        raise CertificationError(
            f"{what}: solver status {cert.solver_status}, duality gap {cert.gap:.3e}; "
            "refusing to certify"
        )


def yield_lower_bound(cert: BoundCertificate, model_s: SpectralModel) -> float:
    """Tagged yield lower bound transferred from the truncated eigenvector."""
    _require_optimal(cert, "yield bound")
    if model_s.f_vec is None:
        raise UsageError("signal model lacks correction terms")
    y_prime = min(1.0, max(0.0, cert.certified_bound))
    return G_minus(y_prime, float(model_s.f_vec[1]))


@dataclasses.dataclass(frozen=True)
class PhaseErrorBound:
    numerator: float
    raw: float

    @property
    def clamped(self) -> float:
        """Value used in the entropy; ``h`` is symmetric about 1/2."""
        return min(0.5, self.raw)


def phase_error_upper_bound(certs: Sequence[BoundCertificate], model_s: SpectralModel,
                            Y_L: float) -> PhaseErrorBound:
    if len(certs) != 2:
        raise UsageError("one certificate per virtual branch is required")
    for beta, c in enumerate(certs):
        _require_optimal(c, f"phase-error bound (beta={beta})")
    if model_s.f_vec is None:
        raise UsageError("signal model lacks correction terms")
    total = min(1.0, max(0.0, certs[0].certified_bound) + max(0.0, certs[1].certified_bound))
    numerator = G_plus(total, float(model_s.f_vec[1]))
    raw = numerator / Y_L if Y_L > 0 else math.inf
    return PhaseErrorBound(numerator, raw)


# -- plain-text problem dump ---------------------------------------------------

_DUMP_HEADER = "# bound-problem v1"


def write_problem(problem: BoundProblem, path: str | Path) -> None:
    """Write ``problem`` as text.

    Layout: a ``# bound-problem v1`` line, ``sense <minimize|maximize>``,
    ``dimension d``, the line ``objective`` followed by ``d`` rows of the
    matrix, then for each constraint ``constraint k lo hi`` followed by its
    ``d`` rows. Numbers use ``repr`` so the file round-trips exactly.
    """
    d = problem.dimension

    def rows(M):
        return [" ".join(repr(float(v)) for v in M[i]) for i in range(d)]

    lines = [_DUMP_HEADER, f"sense {problem.sense.value}", f"dimension {d}", "objective"]
    lines += rows(problem.objective)
    for k, (A, iv) in enumerate(problem.constraints):
        lines.append(f"constraint {k} {iv.lo!r} {iv.hi!r}")
        lines += rows(A)
    Path(path).write_text("\n".join(lines) + "\n")


def read_problem(path: str | Path) -> BoundProblem:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _DUMP_HEADER:
        raise DomainError(f"{path}: not a bound-problem file")
    try:
        sense = Sense(lines[1].split()[1])
        d = int(lines[2].split()[1])
        pos = 4
        C = np.array([[float(v) for v in lines[pos + i].split()] for i in range(d)])
        pos += d
        cons = []
        while pos < len(lines):
            _, _, lo, hi = lines[pos].split()
            A = np.array([[float(v) for v in lines[pos + 1 + i].split()] for i in range(d)])
            cons.append((A, ConstraintInterval(float(lo), float(hi))))
            pos += 1 + d
    except (IndexError, ValueError) as exc:
        raise DomainError(f"{path}: malformed bound-problem file") from exc
    return BoundProblem(sense, C, tuple(cons))
