"""Asymptotic secret-key rate from certified bounds, optimised over the signal intensity."""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import logging
import math
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.stats import poisson

from phaserand import sdp
from phaserand.channel import (
    ChannelParams,
    ObservationSet,
    honest_x_operators,
    observation_set,
    true_tagged_quantities,
    z_basis_stats,
)
from phaserand.errors import CertificationError, DomainError, SpectralGapError, UsageError
from phaserand.fidelity import G_plus
from phaserand.model_state import SpectralModel, spectral_model

if TYPE_CHECKING:
    from phaserand.config import ProtocolConfig

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("loss_db", "q", "mu_s_opt", "Y_L", "e_ph_U", "QZ_s", "EZ_s", "rate", "reference_rate")
_SLACK = 1e-12


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy in bits; ``h(0) = h(1) = 0``."""
    x = float(x)
    if not -_SLACK <= x <= 1.0 + _SLACK:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x!r}")
    x = min(1.0, max(0.0, x))
    if x == 0.0 or x == 1.0:
        return 0.0
    return float(-x * math.log2(x) - (1.0 - x) * math.log1p(-x) / math.log(2.0))


def subkey_rate(model_s: SpectralModel, Y_L: float, e_ph_U: float, obs: ObservationSet,
                f: float) -> float:
    """Key bits per signal pulse, floored at zero.

    ``e_ph_U`` above 1/2 is evaluated as 1/2; ``Y_L = 0`` gives no key.
    """
    if f < 1:
        raise DomainError(f"error-correction inefficiency must be >= 1, got {f!r}")
    if model_s.eps_val is None:
        raise UsageError("signal model lacks correction terms")
    weight = max(0.0, float(model_s.eigenvalues[1]) - model_s.eps_val)
    privacy = 0.0
    if Y_L > 0:
        privacy = weight * Y_L * (1.0 - binary_entropy(min(0.5, max(0.0, e_ph_U))))
    leak = float(obs.qz[0]) * f * binary_entropy(float(obs.ez[0]))
    return max(0.0, privacy - leak)


def single_photon_stats(params: ChannelParams) -> tuple[float, float]:
    """Exact single-photon yield and error rate of the honest channel."""
    eta, p_d = params.eta, params.p_d
    y1 = 1.0 - (1.0 - p_d) ** 2 * (1.0 - eta)
    if y1 == 0:
        return 0.0, 0.0
    p_c = 1.0 - (1.0 - p_d) * (1.0 - eta)
    return y1, p_d * (1.0 - 0.5 * p_c) / y1


def reference_rate_ideal(mu_s: float, mu_w: float, params: ChannelParams, f: float) -> float:
    """Rate with perfect phase randomisation and exact single-photon statistics.

    An optimistic reference: it uses the true single-photon yield and error
    rate instead of decoy estimates. ``mu_w`` does not enter.
    """
    del mu_w
    y1, e1 = single_photon_stats(params)
    q1 = float(poisson.pmf(1, mu_s)) * y1
    qz, ez = z_basis_stats(mu_s, params)
    return max(0.0, q1 * (1.0 - binary_entropy(e1)) - qz * f * binary_entropy(ez))


def oracle_rate(mu_s: float, q: float, params: ChannelParams, config: "ProtocolConfig") -> float:
    """Rate of the same form as :func:`subkey_rate` with exact tagged inputs.

    The certified yield and phase-error bounds are replaced by the true values
    on the honest channel, so this is an upper reference for the certified
    rate at the same intensity.
    """
    model = spectral_model(mu_s, q, config.M, require_tag=1)
    truth = true_tagged_quantities(mu_s, q, config.M, params)
    obs = observation_set((mu_s,), params)
    return subkey_rate(model, truth.yield_, truth.phase_error, obs, config.f)


def best_oracle_rate(config: "ProtocolConfig", loss_db: float, q: float) -> float:
    """:func:`oracle_rate` maximised over the signal-intensity grid (gap failures skipped)."""
    params = ChannelParams(loss_db, config.p_d)
    best = 0.0
    for mu in config.mu_s_grid:
        try:
            best = max(best, oracle_rate(mu, q, params, config))
        except SpectralGapError:
            continue
    return best


@dataclasses.dataclass(frozen=True)
class MuEvaluation:
    """Certified quantities at one signal intensity."""

    mu_s: float
    Y_L: float
    e_ph_U: float
    QZ_s: float
    EZ_s: float
    rate: float


@dataclasses.dataclass(frozen=True)
class KeyRatePoint:
    loss_db: float
    q: float
    mu_s_opt: float
    Y_L: float
    e_ph_U: float
    QZ_s: float
    EZ_s: float
    rate: float
    reference_rate: float
    all_zero: bool = False

    def csv_row(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in CSV_COLUMNS]


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


@dataclasses.dataclass(frozen=True)
class _Setup:
    mu_s: float
    models: tuple[SpectralModel, ...]
    obs: ObservationSet


def _setup(mu_s: float, q: float, params: ChannelParams, config: "ProtocolConfig") -> _Setup:
    intensities = (mu_s, config.mu_w_ratio * mu_s, 0.0)
    models = (spectral_model(mu_s, q, config.M, require_tag=1),) + tuple(
        spectral_model(mu, q, config.M, require_tag=None) for mu in intensities[1:]
    )
    return _Setup(mu_s, models, observation_set(intensities, params))


def _yield_bound(s: _Setup, tol: float) -> float:
    cert = sdp.solve(sdp.build_yield_problem(s.models, s.obs), tol=tol)
    return sdp.yield_lower_bound(cert, s.models[0])


def _finish(s: _Setup, Y_L: float, f: float, tol: float) -> MuEvaluation:
    qz, ez = float(s.obs.qz[0]), float(s.obs.ez[0])
    if Y_L <= 0:
        return MuEvaluation(s.mu_s, 0.0, math.inf, qz, ez, 0.0)
    vsp = sdp.virtual_states(s.models[0].eigenvector(1))
    certs = [sdp.solve(sdp.build_phase_error_problem(b, s.models, s.obs, vsp), tol=tol) for b in (0, 1)]
    bound = sdp.phase_error_upper_bound(certs, s.models[0], Y_L)
    rate = subkey_rate(s.models[0], Y_L, bound.raw, s.obs, f)
    return MuEvaluation(s.mu_s, Y_L, bound.raw, qz, ez, rate)


def _finish_logged(s: _Setup, Y_L: float, f: float, tol: float) -> MuEvaluation:
    try:
        return _finish(s, Y_L, f, tol)
    except CertificationError as exc:
        raise type(exc)(f"mu_s={s.mu_s:g}: {exc}") from exc


def evaluate_mu_s(mu_s: float, q: float, loss_db: float, config: "ProtocolConfig") -> MuEvaluation:
    """Run the whole certification chain at one signal intensity.

    Raises:
        SpectralGapError: the tag-1 eigenvector bound does not apply at ``mu_s``.
        CertificationError: a bound problem could not be solved to tolerance.
    """
    params = ChannelParams(loss_db, config.p_d)
    s = _setup(mu_s, q, params, config)
    return _finish(s, _yield_bound(s, config.solver_tol), config.f, config.solver_tol)


def _rate_ceiling(s: _Setup, Y_L: float, honest: tuple[np.ndarray, np.ndarray], f: float) -> float:
    """Upper bound on the certified rate at this intensity, from cheap ingredients.

    The honest-channel operators are feasible points of the phase-error
    problems whenever they pass the interval check, so their objective values
    lower-bound the certified maxima. Otherwise only ``h(e) >= 0`` is used.
    """
    model = s.models[0]
    if Y_L <= 0:
        return 0.0
    weight = max(0.0, float(model.eigenvalues[1]) - model.eps_val)
    leak = float(s.obs.qz[0]) * f * binary_entropy(float(s.obs.ez[0]))
    vsp = sdp.virtual_states(model.eigenvector(1))
    total = 0.0
    for beta, L in ((0, honest[1]), (1, honest[0])):
        problem = sdp.build_phase_error_problem(beta, s.models, s.obs, vsp)
        if problem.is_feasible_point(L):
            return weight * Y_L - leak
        v = vsp.vtilde(beta)
        total += float(v @ L @ v)
    e_floor = G_plus(min(1.0, total), float(model.f_vec[1])) / Y_L
    return weight * Y_L * (1.0 - binary_entropy(min(0.5, e_floor))) - leak


def optimize_mu_s(config: "ProtocolConfig", loss_db: float, q: float) -> KeyRatePoint:
    """Best certified rate over the configured signal-intensity grid.

    Every grid point gets its (cheap) yield bound; the phase-error problems
    are then solved in order of decreasing rate ceiling until no remaining
    point can beat the best rate found. The result is the grid maximiser,
    with ties going to the smaller intensity. Grid points where the spectral
    gap condition fails are skipped.

    Raises:
        SpectralGapError: no grid point satisfies the gap condition.
    """
    try:
        return _optimize(config, loss_db, q)
    except CertificationError as exc:
        raise type(exc)(f"loss={loss_db:g} dB, q={q:g}: {exc}") from exc


def _optimize(config: "ProtocolConfig", loss_db: float, q: float) -> KeyRatePoint:
    grid = sorted(set(float(m) for m in config.mu_s_grid))
    if not grid:
        raise UsageError("the signal-intensity grid is empty")
    params = ChannelParams(loss_db, config.p_d)
    honest = honest_x_operators(config.M, params)
    tol = config.solver_tol

    candidates = []
    gap_errors = []
    for mu in grid:
        try:
            s = _setup(mu, q, params, config)
        except SpectralGapError as exc:
            gap_errors.append(exc)
            logger.info("skipping mu_s=%g: %s", mu, exc)
            continue
        try:
            Y_L = _yield_bound(s, tol)
        except CertificationError as exc:
            raise type(exc)(f"mu_s={mu:g}: {exc}") from exc
        candidates.append((_rate_ceiling(s, Y_L, honest, config.f), s, Y_L))
    if not candidates:
        raise SpectralGapError(f"no signal intensity on the grid is usable: {gap_errors[-1]}")

    smallest = min(candidates, key=lambda t: t[1].mu_s)
    best: MuEvaluation | None = None
    if max(c[0] for c in candidates) > 0:
        for ceiling, s, Y_L in sorted(candidates, key=lambda t: (-t[0], t[1].mu_s)):
            if best is not None and (ceiling < best.rate or (ceiling == best.rate and s.mu_s > best.mu_s)):
                continue
            ev = _finish_logged(s, Y_L, config.f, tol)
            if best is None or ev.rate > best.rate or (ev.rate == best.rate and ev.mu_s < best.mu_s):
                best = ev
    all_zero = best is None or best.rate <= 0.0
    if all_zero and (best is None or best.mu_s != smallest[1].mu_s):
        # A dead link is reported at the smallest usable intensity.
        best = _finish_logged(smallest[1], smallest[2], config.f, tol)

    ref = max(reference_rate_ideal(mu, config.mu_w_ratio * mu, params, config.f) for mu in grid)
    return KeyRatePoint(loss_db, q, best.mu_s, best.Y_L, best.e_ph_U, best.QZ_s, best.EZ_s,
                        best.rate, ref, all_zero)


def _point_job(args) -> KeyRatePoint:
    config, loss_db, q = args
    return optimize_mu_s(config, loss_db, q)


def sweep_loss(config: "ProtocolConfig", q_values: Sequence[float] | None = None,
               threads: int = 1) -> list[KeyRatePoint]:
    """Evaluate every (q, loss) pair, q-major, in grid order.

    With ``threads > 1`` points run in worker processes; the result order
    does not depend on completion order.
    """
    q_values = tuple(config.q_values if q_values is None else q_values)
    if not config.loss_grid_db:
        raise UsageError("the loss grid is empty")
    if not q_values:
        raise UsageError("no q value given")
    jobs = [(config, float(loss), float(q)) for q in q_values for loss in config.loss_grid_db]
    if threads <= 1 or len(jobs) == 1:
        return [_point_job(j) for j in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_point_job, jobs))


def sweep_csv(points: Sequence[KeyRatePoint]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(CSV_COLUMNS)
    for p in points:
        out.writerow(p.csv_row())
    return buf.getvalue()
