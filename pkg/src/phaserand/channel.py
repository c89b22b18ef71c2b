"""Dark-count-limited channel model and the statistics it produces.

Bob has two threshold detectors with independent dark counts ``p_d`` per
gate. Light of Alice's setting lands entirely on one detector when the bases
match and is split 50/50 otherwise. A double click is assigned a uniformly
random bit and no click is inconclusive. Detector efficiency is folded into
the overall loss.

Besides the analytic statistics, the module provides the honest-channel
measurement operators in the truncated Fock basis, a photon-level
Monte-Carlo simulator, and CSV import/export of :class:`ObservationSet`.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from phaserand.errors import ConfigSchemaError, DomainError
from phaserand.fock import EncodingId, apply_encoding, two_mode_dim, two_mode_enumerate
from phaserand.model_state import build_projected_model, spectral_decompose

SETTINGS: tuple[EncodingId, ...] = (EncodingId.Z0, EncodingId.Z1, EncodingId.X0, EncodingId.X1)
INTENSITY_LABELS = ("signal", "weak", "vacuum")
OBSERVATION_SCHEMA = 1


def transmittance(loss_db: float) -> float:
    if not loss_db >= 0:
        raise DomainError(f"loss must be >= 0 dB, got {loss_db!r}")
    return 10.0 ** (-loss_db / 10.0)


@dataclasses.dataclass(frozen=True)
class ChannelParams:
    loss_db: float
    p_d: float = 1e-8

    def __post_init__(self):
        if not self.loss_db >= 0:
            raise DomainError(f"loss must be >= 0 dB, got {self.loss_db!r}")
        if not 0.0 <= self.p_d <= 1.0:
            raise DomainError(f"dark count probability must lie in [0, 1], got {self.p_d!r}")

    @property
    def eta(self) -> float:
        return transmittance(self.loss_db)


def _click(p_d: float, x: float) -> float:
    """Click probability of a detector receiving mean photon number ``x``."""
    return -math.expm1(math.log1p(-p_d) - x) if p_d < 1 else 1.0


def z_basis_stats(mu: float, params: ChannelParams) -> tuple[float, float]:
    """Gain and bit-error rate when both users pick Z (EZ is 0 when the gain is 0)."""
    if not mu >= 0:
        raise DomainError(f"intensity must be >= 0, got {mu!r}")
    p_d = params.p_d
    x = params.eta * mu
    qz = -math.expm1(2.0 * math.log1p(-p_d) - x) if p_d < 1 else 1.0
    p_c = _click(p_d, x)
    p_w = _click(p_d, 0.0)
    err = p_w * (1.0 - p_c) + 0.5 * p_c * p_w
    return qz, (err / qz if qz > 0 else 0.0)


def x_basis_stats(mu: float, setting: EncodingId, params: ChannelParams) -> tuple[float, float]:
    """Rates of Bob's X outcomes ``0X`` and ``1X`` for Alice's ``setting``."""
    if not mu >= 0:
        raise DomainError(f"intensity must be >= 0, got {mu!r}")
    setting = EncodingId(setting)
    x = params.eta * mu
    if setting.basis == "X":
        right, wrong = _click(params.p_d, x), _click(params.p_d, 0.0)
        p_bit = right * (1.0 - 0.5 * wrong)
        p_other = wrong * (1.0 - 0.5 * right)
        return (p_bit, p_other) if setting.bit == 0 else (p_other, p_bit)
    p_h = _click(params.p_d, 0.5 * x)
    p = p_h * (1.0 - 0.5 * p_h)
    return p, p


@dataclasses.dataclass(frozen=True)
class ObservationSet:
    """Observed statistics per intensity; index 0 is the signal intensity.

    ``qx0[i, j]`` and ``qx1[i, j]`` are the rates of Bob's X outcomes for
    intensity ``i`` and Alice setting ``SETTINGS[j]``.
    """

    intensities: tuple[float, ...]
    qz: np.ndarray
    ez: np.ndarray
    qx0: np.ndarray
    qx1: np.ndarray

    def __post_init__(self):
        k = len(self.intensities)
        shapes = {"qz": (k,), "ez": (k,), "qx0": (k, 4), "qx1": (k, 4)}
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DomainError(f"{name} must have shape {shape}, got {arr.shape}")
            if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise DomainError(f"{name} entries must lie in [0, 1]")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def qx(self, outcome: int) -> np.ndarray:
        return self.qx1 if outcome else self.qx0


def observation_set(intensities: Sequence[float], params: ChannelParams) -> ObservationSet:
    intensities = tuple(float(m) for m in intensities)
    if len(set(intensities)) != len(intensities):
        raise DomainError(f"intensities must be distinct, got {intensities}")
    qz, ez = zip(*(z_basis_stats(mu, params) for mu in intensities))
    qx = np.array([[x_basis_stats(mu, s, params) for s in SETTINGS] for mu in intensities])
    return ObservationSet(intensities, np.array(qz), np.array(ez), qx[..., 0], qx[..., 1])


def write_observations_csv(obs: ObservationSet, path: str | Path) -> None:
    """Write ``obs`` in long format (schema 1).

    The first line is ``# observation-set schema 1``, followed by a header
    ``intensity,mu,statistic,setting,value``. ``statistic`` is one of
    ``QZ``, ``EZ``, ``QX0``, ``QX1``; ``setting`` is empty for the Z-basis
    statistics. Intensities are labelled signal, weak, vacuum in input order.
    """
    labels = _labels(len(obs.intensities))
    with open(path, "w", newline="") as fh:
        fh.write(f"# observation-set schema {OBSERVATION_SCHEMA}\n")
        out = csv.writer(fh)
        out.writerow(["intensity", "mu", "statistic", "setting", "value"])
        for i, (label, mu) in enumerate(zip(labels, obs.intensities)):
            out.writerow([label, repr(mu), "QZ", "", repr(float(obs.qz[i]))])
            out.writerow([label, repr(mu), "EZ", "", repr(float(obs.ez[i]))])
            for j, s in enumerate(SETTINGS):
                out.writerow([label, repr(mu), "QX0", s.value, repr(float(obs.qx0[i, j]))])
                out.writerow([label, repr(mu), "QX1", s.value, repr(float(obs.qx1[i, j]))])


def read_observations_csv(path: str | Path) -> ObservationSet:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# observation-set schema {OBSERVATION_SCHEMA}":
            raise ConfigSchemaError(f"{path}: unsupported observation file header {first!r}")
        rows = list(csv.DictReader(fh))
    mus: dict[str, float] = {}
    values: dict[tuple[str, str, str], float] = {}
    for row in rows:
        try:
            label, stat, setting = row["intensity"], row["statistic"], row["setting"]
            mus[label] = float(row["mu"])
            values[(label, stat, setting)] = float(row["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigSchemaError(f"{path}: malformed row {row}") from exc
    labels = [lab for lab in INTENSITY_LABELS if lab in mus]
    if len(labels) != len(mus):
        raise ConfigSchemaError(f"{path}: unknown intensity labels {sorted(mus)}")
    try:
        qz = [values[(lab, "QZ", "")] for lab in labels]
        ez = [values[(lab, "EZ", "")] for lab in labels]
        qx0 = [[values[(lab, "QX0", s.value)] for s in SETTINGS] for lab in labels]
        qx1 = [[values[(lab, "QX1", s.value)] for s in SETTINGS] for lab in labels]
    except KeyError as exc:
        raise ConfigSchemaError(f"{path}: missing statistic {exc.args[0]}") from None
    return ObservationSet(tuple(mus[lab] for lab in labels), np.array(qz), np.array(ez),
                          np.array(qx0), np.array(qx1))


def _labels(k: int) -> tuple[str, ...]:
    if k > len(INTENSITY_LABELS):
        raise DomainError(f"at most {len(INTENSITY_LABELS)} intensities are supported")
    return INTENSITY_LABELS[:k]


# -- honest-channel operators ------------------------------------------------


def honest_yield_operator(M: int, params: ChannelParams) -> np.ndarray:
    """Diagonal operator giving the Z-basis detection probability of ``n`` photons."""
    n = np.arange(M + 1)
    log_t = math.log1p(-params.eta) if params.eta < 1 else -math.inf
    two_dark = 2.0 * math.log1p(-params.p_d) if params.p_d < 1 else -math.inf
    diag = [
        -math.expm1(two_dark - _loss_exponent(k, log_t)) if params.p_d < 1 else 1.0 for k in n
    ]
    return np.diag(diag)


def _loss_exponent(n: int, log_t: float) -> float:
    """``-n log(1 - eta)`` with the convention ``0 * inf = 0``."""
    if n == 0:
        return 0.0
    return math.inf if log_t == -math.inf else -n * log_t


def _pm_mode_vector(n_plus: int, n_minus: int, M: int) -> np.ndarray:
    """``|n+>|n->`` of the interfered modes expressed in the two-mode input basis.

    The output modes are ``c = (a + b)/sqrt 2`` (outcome 0X) and
    ``d = (b - a)/sqrt 2`` (outcome 1X).
    """
    N = n_plus + n_minus
    coeff = np.zeros(N + 1)  # indexed by power of a^dagger
    for i in range(n_plus + 1):
        for j in range(n_minus + 1):
            coeff[i + j] += math.comb(n_plus, i) * math.comb(n_minus, j) * (-1) ** j
    norm = 2.0 ** (-N / 2) / math.sqrt(math.factorial(n_plus) * math.factorial(n_minus))
    out = np.zeros(two_mode_dim(M))
    for idx, (k, l) in enumerate(two_mode_enumerate(M)):
        if k + l == N:
            out[idx] = coeff[k] * norm * math.sqrt(math.factorial(k) * math.factorial(l))
    return out


def honest_x_operators(M: int, params: ChannelParams) -> tuple[np.ndarray, np.ndarray]:
    """Operators of Bob's X outcomes ``0X`` and ``1X`` on the two-mode basis.

    They conserve total photon number, so restricting them to ``m + m' <= M``
    is an exact principal block.
    """
    log_t = math.log1p(-params.eta) if params.eta < 1 else -math.inf
    dark = math.log1p(-params.p_d) if params.p_d < 1 else -math.inf
    d = two_mode_dim(M)
    L0, L1 = np.zeros((d, d)), np.zeros((d, d))
    for N in range(M + 1):
        for n_plus in range(N + 1):
            n_minus = N - n_plus
            a = -math.expm1(dark - _loss_exponent(n_plus, log_t)) if params.p_d < 1 else 1.0
            b = -math.expm1(dark - _loss_exponent(n_minus, log_t)) if params.p_d < 1 else 1.0
            v = _pm_mode_vector(n_plus, n_minus, M)
            P = np.outer(v, v)
            L0 += a * (1.0 - 0.5 * b) * P
            L1 += b * (1.0 - 0.5 * a) * P
    return L0, L1


@dataclasses.dataclass(frozen=True)
class TaggedOracle:
    yield_: float
    phase_error_numerator: float
    phase_error: float
    p_vir: tuple[float, float]


def true_tagged_quantities(mu_s: float, q: float, M: int, params: ChannelParams) -> TaggedOracle:
    """Exact single-tag yield and phase-error rate on the honest channel.

    Evaluated on the tag-1 eigenvector of the truncated model state.
    """
    model = spectral_decompose(build_projected_model(mu_s, q, M), mu_s, q, M)
    lam = model.eigenvector(1)
    J = honest_yield_operator(M, params)
    L0, L1 = honest_x_operators(M, params)
    y = float(lam @ J @ lam)
    a, b = apply_encoding(EncodingId.Z0, lam), apply_encoding(EncodingId.Z1, lam)
    v0, v1 = 0.5 * (a + b), 0.5 * (a - b)
    num = float(v0 @ L1 @ v0 + v1 @ L0 @ v1)
    return TaggedOracle(y, num, num / y if y > 0 else math.inf, (float(v0 @ v0), float(v1 @ v1)))


# -- Monte-Carlo click simulation ----------------------------------------------


@dataclasses.dataclass(frozen=True)
class MonteCarloCheck:
    label: str
    analytic: float
    estimate: float
    n: int

    @property
    def sigma(self) -> float:
        p = self.analytic
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.n)

    @property
    def passed(self) -> bool:
        if self.analytic == 0.0:
            return self.estimate == 0.0
        return abs(self.estimate - self.analytic) <= 3.0 * self.sigma


def simulate_clicks(mu: float, setting: EncodingId, bob_basis: str, params: ChannelParams,
                    n: int, rng: np.random.Generator, chunk: int = 1_000_000) -> tuple[int, int]:
    """Count Bob's outcomes 0 and 1 over ``n`` pulses, photon by photon."""
    setting = EncodingId(setting)
    eta, p_d = params.eta, params.p_d
    counts = [0, 0]
    done = 0
    while done < n:
        size = min(chunk, n - done)
        photons = rng.poisson(mu, size)
        arrived = rng.binomial(photons, eta)
        if setting.basis == bob_basis:
            on_bit = arrived
            det = (on_bit, np.zeros_like(on_bit)) if setting.bit == 0 else (np.zeros_like(on_bit), on_bit)
        else:
            first = rng.binomial(arrived, 0.5)
            det = (first, arrived - first)
        click0 = (det[0] > 0) | (rng.random(size) < p_d)
        click1 = (det[1] > 0) | (rng.random(size) < p_d)
        coin = rng.random(size) < 0.5
        both = click0 & click1
        out0 = (click0 & ~click1) | (both & coin)
        out1 = (click1 & ~click0) | (both & ~coin)
        counts[0] += int(out0.sum())
        counts[1] += int(out1.sum())
        done += size
    return counts[0], counts[1]


def monte_carlo_cross_check(intensities: Sequence[float], params: ChannelParams, n: int,
                            rng: np.random.Generator) -> list[MonteCarloCheck]:
    """Compare every analytic statistic with a click-level simulation of ``n`` pulses.

    Bit-error rates are compared through the error gain ``QZ * EZ`` so every
    row is a plain binomial frequency.
    """
    obs = observation_set(intensities, params)
    rows: list[MonteCarloCheck] = []
    for i, mu in enumerate(obs.intensities):
        conclusive = errors = 0
        for setting in (EncodingId.Z0, EncodingId.Z1):
            c0, c1 = simulate_clicks(mu, setting, "Z", params, n, rng)
            conclusive += c0 + c1
            errors += c1 if setting.bit == 0 else c0
        rows.append(MonteCarloCheck(f"mu={mu:g} QZ", float(obs.qz[i]), conclusive / (2 * n), 2 * n))
        rows.append(MonteCarloCheck(f"mu={mu:g} QZ*EZ", float(obs.qz[i] * obs.ez[i]),
                                    errors / (2 * n), 2 * n))
        for j, setting in enumerate(SETTINGS):
            c0, c1 = simulate_clicks(mu, setting, "X", params, n, rng)
            rows.append(MonteCarloCheck(f"mu={mu:g} {setting.value} QX0", float(obs.qx0[i, j]), c0 / n, n))
            rows.append(MonteCarloCheck(f"mu={mu:g} {setting.value} QX1", float(obs.qx1[i, j]), c1 / n, n))
    return rows
