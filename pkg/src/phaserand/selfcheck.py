"""Oracle checks of the certification chain on the honest channel.

For each test point the honest-channel operators must satisfy every interval
constraint, the certified yield must not exceed the true tagged yield and the
certified phase-error rate must not fall below the true one. An optional
Monte-Carlo pass compares the analytic observations with simulated clicks.
"""

from __future__ import annotations

import dataclasses
from typing import Iterable, Sequence

import numpy as np

from phaserand import sdp
from phaserand.channel import (
    ChannelParams,
    honest_x_operators,
    honest_yield_operator,
    monte_carlo_cross_check,
    observation_set,
    true_tagged_quantities,
)
from phaserand.model_state import spectral_model

DEFAULT_LOSSES = (0.0, 20.0, 40.0)
DEFAULT_MUS = (0.1, 0.5)
# Monte-Carlo rows use a high dark-count rate so that every statistic,
# including the vacuum ones, collects enough clicks for a Gaussian 3-sigma test.
MC_DARK_COUNT = 1e-3
MC_LOSSES = (0.0, 10.0, 20.0)


@dataclasses.dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


@dataclasses.dataclass(frozen=True)
class SandwichPoint:
    """Certified bounds next to the truth at one ``(loss, q, mu_s)``."""

    loss_db: float
    q: float
    mu_s: float
    violations: tuple[str, ...]
    Y_L: float
    y_true: float
    e_U: float
    e_true: float

    @property
    def checks(self) -> list[CheckResult]:
        tag = f"loss={self.loss_db:g} dB q={self.q:g} mu_s={self.mu_s:g}"
        return [
            CheckResult(f"honest operators feasible, {tag}", not self.violations,
                        ", ".join(self.violations)),
            CheckResult(f"yield bound below truth, {tag}", self.Y_L <= self.y_true,
                        f"Y_L={self.Y_L:.6e} true={self.y_true:.6e}"),
            CheckResult(f"phase-error bound above truth, {tag}", self.e_U >= self.e_true,
                        f"e_U={self.e_U:.6e} true={self.e_true:.6e}"),
        ]


def sandwich_point(loss_db: float, q: float, mu_s: float, M: int = 9, p_d: float = 1e-8,
                   mu_w_ratio: float = 0.2, tol: float = sdp.DEFAULT_TOL) -> SandwichPoint:
    params = ChannelParams(loss_db, p_d)
    intensities = (mu_s, mu_w_ratio * mu_s, 0.0)
    models = (spectral_model(mu_s, q, M, require_tag=1),) + tuple(
        spectral_model(mu, q, M, require_tag=None) for mu in intensities[1:])
    obs = observation_set(intensities, params)
    vsp = sdp.virtual_states(models[0].eigenvector(1))

    yprob = sdp.build_yield_problem(models, obs)
    J = honest_yield_operator(M, params)
    L0, L1 = honest_x_operators(M, params)
    pprobs = [sdp.build_phase_error_problem(b, models, obs, vsp) for b in (0, 1)]
    violations = [f"yield: {v}" for v in yprob.is_feasible_point(J)]
    for b, (prob, L) in enumerate(zip(pprobs, (L1, L0))):
        violations += [f"beta={b}: {v}" for v in prob.is_feasible_point(L)]

    Y_L = sdp.yield_lower_bound(sdp.solve(yprob, tol=tol), models[0])
    certs = [sdp.solve(p, tol=tol) for p in pprobs]
    e_U = sdp.phase_error_upper_bound(certs, models[0], Y_L).raw
    truth = true_tagged_quantities(mu_s, q, M, params)
    return SandwichPoint(loss_db, q, mu_s, tuple(violations), Y_L, truth.yield_, e_U, truth.phase_error)


def run_selfcheck(q_values: Iterable[float], M: int = 9, p_d: float = 1e-8, mu_w_ratio: float = 0.2,
                  tol: float = sdp.DEFAULT_TOL, losses: Sequence[float] = DEFAULT_LOSSES,
                  mus: Sequence[float] = DEFAULT_MUS, seed: int | None = None,
                  samples: int = 0) -> list[CheckResult]:
    """All oracle checks; Monte-Carlo rows are added when ``samples > 0``."""
    results: list[CheckResult] = []
    for q in q_values:
        for loss in losses:
            for mu in mus:
                pt = sandwich_point(loss, q, mu, M, p_d, mu_w_ratio, tol)
                results.extend(pt.checks)
    if samples > 0:
        rng = np.random.default_rng(seed)
        for loss in MC_LOSSES:
            params = ChannelParams(loss, MC_DARK_COUNT)
            for row in monte_carlo_cross_check((mus[-1], mu_w_ratio * mus[-1], 0.0), params, samples, rng):
                results.append(CheckResult(
                    f"Monte-Carlo loss={loss:g} dB p_d={MC_DARK_COUNT:g} {row.label}", row.passed,
                    f"analytic={row.analytic:.6e} simulated={row.estimate:.6e} sigma={row.sigma:.2e}"))
    return results
