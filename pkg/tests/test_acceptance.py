"""End-to-end acceptance checks, one test per criterion.

Run ``pytest tests/test_acceptance.py`` to get a PASS/FAIL line per criterion
in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import poisson

from phaserand import sdp
from phaserand.calibration import calibrate, log_ratio_objective, minimize_ratio, wrapped_gaussian_pdf
from phaserand.channel import ChannelParams, monte_carlo_cross_check
from phaserand.config import ProtocolConfig
from phaserand.fidelity import G_minus, G_plus, g_pm
from phaserand.keyrate import best_oracle_rate, binary_entropy, optimize_mu_s, sweep_csv, sweep_loss
from phaserand.model_state import build_projected_model, spectral_decompose, spectral_model
from phaserand.selfcheck import sandwich_point

SWEEP_QS = (0.95, 0.992407, 1.0)


@pytest.fixture(scope="module")
def monotonicity_sweep():
    cfg = ProtocolConfig(q_values=SWEEP_QS)
    pts = sweep_loss(cfg)
    return {q: [p for p in pts if p.q == q] for q in SWEEP_QS}


@pytest.mark.criterion(1, "calibration reproduction")
def test_criterion_01_calibration():
    t0 = time.perf_counter()
    c = calibrate(0.0019)
    elapsed = time.perf_counter() - t0
    print(f"sigma={c.sigma:.6f} q={c.q:.7f} elapsed={elapsed:.2f}s")
    assert abs(c.sigma - 3.54003) <= 5e-5
    assert abs(c.q - 0.992407) <= 5e-6
    assert elapsed < 5.0


@pytest.mark.criterion(2, "perfect-randomisation sandwich against the exact oracle")
def test_criterion_02_perfect_randomisation():
    cfg = ProtocolConfig(q_values=(1.0,), M=9)
    t0 = time.perf_counter()
    for loss in (10.0, 20.0, 30.0):
        rate = optimize_mu_s(cfg, loss, 1.0).rate
        oracle = best_oracle_rate(cfg, loss, 1.0)
        print(f"loss={loss:g} rate={rate:.6e} oracle={oracle:.6e} ratio={rate / oracle:.4f}")
        assert rate <= oracle
        assert rate >= 0.8 * oracle
    assert time.perf_counter() - t0 < 120.0


@pytest.mark.criterion(3, "imperfect randomisation stays close to ideal at 20 dB")
def test_criterion_03_imperfect_randomisation():
    cfg = ProtocolConfig()
    t0 = time.perf_counter()
    r_imp = optimize_mu_s(cfg, 20.0, 0.992407).rate
    r_ideal = optimize_mu_s(cfg, 20.0, 1.0).rate
    print(f"rate(q=0.992407)={r_imp:.6e} rate(q=1)={r_ideal:.6e} ratio={r_imp / r_ideal:.4f}")
    assert r_imp > 0
    assert r_imp >= 0.5 * r_ideal
    assert time.perf_counter() - t0 < 120.0


@pytest.mark.criterion(4, "monotonicity in loss and in q")
def test_criterion_04_monotonicity(monotonicity_sweep):
    for q, pts in monotonicity_sweep.items():
        losses = [p.loss_db for p in pts]
        assert losses == [float(x) for x in range(0, 61, 5)]
        rates = [p.rate for p in pts]
        for a, b in zip(rates, rates[1:]):
            assert b <= a, f"q={q}: rate increases with loss ({a} -> {b})"
    for loss in (10.0, 20.0, 30.0):
        rates = [next(p.rate for p in monotonicity_sweep[q] if p.loss_db == loss) for q in SWEEP_QS]
        print(f"loss={loss:g} rates by q={rates}")
        assert rates[0] <= rates[1] <= rates[2]


@pytest.mark.criterion(5, "honest-channel feasibility and oracle sandwich")
def test_criterion_05_sandwich():
    failures = []
    n = 0
    for q in SWEEP_QS:
        for loss in (0.0, 20.0, 40.0, 60.0):
            for mu in (0.1, 0.5):
                pt = sandwich_point(loss, q, mu)
                for check in pt.checks:
                    n += 1
                    if not check.passed:
                        failures.append(check.line())
    print(f"{n} checks, {len(failures)} violations")
    assert failures == []


@pytest.mark.criterion(6, "closed-form unit values")
def test_criterion_06_closed_forms():
    assert abs(g_pm(0.2, 0.9, +1) - 0.5) <= 1e-12
    assert abs(g_pm(0.2, 0.9, -1) - 0.02) <= 1e-12
    for y in np.random.default_rng(6).uniform(0, 1, 100):
        assert abs(G_plus(y, 1.0) - y) <= 1e-12
        assert abs(G_minus(y, 1.0) - y) <= 1e-12
    assert abs(binary_entropy(0.5) - 1.0) <= 1e-12


@pytest.mark.criterion(7, "spectral limits and virtual-state normalisation")
def test_criterion_07_spectral_limits():
    for mu in (0.1, 0.5, 0.9):
        s = spectral_model(mu, 1.0, 9, require_tag=None)
        assert np.max(np.abs(s.eigenvalues - poisson.pmf(np.arange(10), mu))) <= 1e-12
        assert np.max(np.abs(s.eigenvectors - np.eye(10))) <= 1e-10
        s0 = spectral_decompose(build_projected_model(mu, 0.0, 9), mu, 0.0, 9)
        assert np.linalg.matrix_rank(s0.matrix, tol=1e-12) == 1
        assert np.sum(s0.eigenvalues > 1e-12) == 1
    rng = np.random.default_rng(7)
    for _ in range(100):
        v = rng.normal(size=10)
        vsp = sdp.virtual_states(v / np.linalg.norm(v))
        assert abs(vsp.p_vir_0 + vsp.p_vir_1 - 1.0) <= 1e-10


@pytest.mark.criterion(8, "wrapped-Gaussian properties and minimiser location")
def test_criterion_08_wrapped_gaussian():
    two_pi = 2 * math.pi
    for sigma in (0.5, 1.0, 3.54003):
        val, _ = integrate.quad(lambda x: float(wrapped_gaussian_pdf(x, 0.0, sigma)), 0, two_pi,
                                epsabs=1e-13, epsrel=1e-13, limit=200)
        assert abs(val - 1.0) <= 1e-9
    rng = np.random.default_rng(8)
    t = np.linspace(0, two_pi, 4097)
    for sigma in (0.5, 1.0, 3.54003):
        f = wrapped_gaussian_pdf(t, 0.0, sigma)
        xs = rng.uniform(0, two_pi, 100)
        conv = np.array([integrate.trapezoid(f * wrapped_gaussian_pdf(x - t, 0.0, sigma), t) for x in xs])
        target = wrapped_gaussian_pdf(xs, 0.0, math.sqrt(2) * sigma)
        assert np.max(np.abs(conv - target)) <= 1e-6
    for phi_prev in (0.0, 1.0):
        c = minimize_ratio(3.54003, phi_prev=phi_prev)
        expected = log_ratio_objective(phi_prev + math.pi, phi_prev, 3.54003, phi_prev)
        assert abs(c.stationary_q - two_pi * math.exp(float(expected))) <= 1e-15
        assert abs(c.stationary_q - c.q) <= 1e-9
        assert c.q <= c.grid_q
        d_i = (c.minimizer[0] - phi_prev) % two_pi - math.pi
        d_n = (c.minimizer[1] - phi_prev + math.pi) % two_pi - math.pi
        assert abs(d_i) < 1e-6 and abs(d_n) < 1e-6


# Dark-count rates are raised above the default so that every statistic
# collects many clicks at 1e7 pulses.
MC_POINTS = ((0.0, 1e-3), (5.0, 1e-4), (10.0, 1e-3), (20.0, 1e-4), (30.0, 1e-2))


@pytest.mark.criterion(9, "analytic statistics against Monte-Carlo clicks")
def test_criterion_09_monte_carlo():
    rng = np.random.default_rng(2024)
    failures = []
    for loss, p_d in MC_POINTS:
        for row in monte_carlo_cross_check((0.5, 0.1, 0.0), ChannelParams(loss, p_d), 10**7, rng):
            if not row.passed:
                failures.append(f"loss={loss:g} p_d={p_d:g} {row.label}: analytic={row.analytic:.6e} "
                                f"simulated={row.estimate:.6e} sigma={row.sigma:.2e}")
    print("\n".join(failures) or "all statistics within 3 sigma")
    assert failures == []


@pytest.mark.criterion(10, "determinism of the full sweep")
def test_criterion_10_determinism():
    cfg = ProtocolConfig()
    first = sweep_csv(sweep_loss(cfg)).encode()
    second = sweep_csv(sweep_loss(cfg, threads=2)).encode()
    assert first == second
