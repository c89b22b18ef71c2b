import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import poisson

from phaserand.channel import ChannelParams, observation_set
from phaserand.config import ProtocolConfig
from phaserand.errors import DomainError, SpectralGapError, UsageError
from phaserand.keyrate import (
    CSV_COLUMNS,
    binary_entropy,
    evaluate_mu_s,
    optimize_mu_s,
    oracle_rate,
    reference_rate_ideal,
    single_photon_stats,
    subkey_rate,
    sweep_csv,
    sweep_loss,
)
from phaserand.model_state import spectral_model


def test_binary_entropy_values():
    assert binary_entropy(0.5) == pytest.approx(1.0, abs=1e-12)
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    assert binary_entropy(0.11) == pytest.approx(0.4999162, abs=1e-6)
    with pytest.raises(DomainError):
        binary_entropy(1.1)


@given(st.floats(0, 1))
def test_binary_entropy_symmetric(x):
    assert binary_entropy(x) == pytest.approx(binary_entropy(1 - x), abs=1e-12)


def _obs(loss=20.0):
    return observation_set((0.5, 0.1, 0.0), ChannelParams(loss))


def test_subkey_rate_zero_cases():
    m = spectral_model(0.5, 1.0, 9)
    obs = _obs()
    assert subkey_rate(m, 0.0, 0.01, obs, 1.16) == 0.0
    assert subkey_rate(m, 0.01, 0.5, obs, 1.16) == 0.0
    assert subkey_rate(m, 0.01, 0.8, obs, 1.16) == 0.0
    with pytest.raises(DomainError):
        subkey_rate(m, 0.01, 0.01, obs, 0.9)


def test_subkey_rate_formula():
    m = spectral_model(0.5, 1.0, 9)
    obs = _obs()
    r = subkey_rate(m, 0.01, 0.02, obs, 1.16)
    want = (m.eigenvalues[1] - m.eps_val) * 0.01 * (1 - binary_entropy(0.02)) \
        - obs.qz[0] * 1.16 * binary_entropy(obs.ez[0])
    assert r == pytest.approx(want, rel=1e-14)


def test_reference_rate_closed_forms():
    mu, loss = 0.5, 20.0
    p = ChannelParams(loss, 0.0)
    assert reference_rate_ideal(mu, mu / 5, p, 1.16) == pytest.approx(mu * math.exp(-mu) * p.eta, rel=1e-12)
    assert reference_rate_ideal(mu, mu / 5, ChannelParams(400.0, 0.0), 1.16) == 0.0


def test_reference_rate_fixture():
    p = ChannelParams(20.0, 1e-8)
    y1, e1 = single_photon_stats(p)
    assert y1 == pytest.approx(1 - (1 - 1e-8) ** 2 * 0.99, rel=1e-14)
    r = reference_rate_ideal(0.5, 0.1, p, 1.16)
    assert r == pytest.approx(0.00303235903, rel=1e-8)
    assert r == pytest.approx(poisson.pmf(1, 0.5) * y1 * (1 - binary_entropy(e1))
                              - 1.16 * _obs().qz[0] * binary_entropy(_obs().ez[0]), rel=1e-12)


def test_reference_vanishes_beyond_cutoff():
    assert reference_rate_ideal(0.5, 0.1, ChannelParams(90.0), 1.16) == 0.0
    assert all(reference_rate_ideal(mu, mu / 5, ChannelParams(loss), 1.16) >= 0
               for mu in (0.1, 0.5) for loss in (0, 30, 60))


def test_single_point_grid_returns_it():
    cfg = ProtocolConfig(mu_s_grid=(0.4,))
    pt = optimize_mu_s(cfg, 20.0, 1.0)
    ev = evaluate_mu_s(0.4, 1.0, 20.0, cfg)
    assert pt.mu_s_opt == 0.4
    assert pt.rate == ev.rate and pt.Y_L == ev.Y_L


def test_certified_rate_below_oracle():
    cfg = ProtocolConfig(mu_s_grid=(0.3,))
    ev = evaluate_mu_s(0.3, 0.992407, 20.0, cfg)
    assert 0 < ev.rate <= oracle_rate(0.3, 0.992407, ChannelParams(20.0), cfg)


def test_optimiser_matches_exhaustive_search():
    cfg = ProtocolConfig(mu_s_grid=(0.2, 0.5, 0.7))
    pt = optimize_mu_s(cfg, 30.0, 1.0)
    rates = {mu: evaluate_mu_s(mu, 1.0, 30.0, cfg).rate for mu in cfg.mu_s_grid}
    best = max(rates.values())
    assert pt.rate == best
    assert pt.mu_s_opt == min(mu for mu, r in rates.items() if r == best)


def test_dead_link_reports_smallest_intensity():
    cfg = ProtocolConfig(mu_s_grid=(0.3, 0.1, 0.5))
    pt = optimize_mu_s(cfg, 80.0, 1.0)
    assert pt.rate == 0.0 and pt.all_zero and pt.mu_s_opt == 0.1


def test_zero_loss_has_key():
    pt = optimize_mu_s(ProtocolConfig(mu_s_grid=(0.5,)), 0.0, 1.0)
    assert pt.rate > 0 and not pt.all_zero


def test_gap_failures_skipped_and_reported():
    cfg = ProtocolConfig(mu_s_grid=(1.0, 0.5))
    assert optimize_mu_s(cfg, 20.0, 1.0).mu_s_opt == 0.5
    with pytest.raises(SpectralGapError):
        optimize_mu_s(ProtocolConfig(mu_s_grid=(1.0,)), 20.0, 1.0)


def test_sweep_shapes_and_csv():
    cfg = ProtocolConfig(mu_s_grid=(0.5,), loss_grid_db=(20.0,), q_values=(1.0, 0.992407))
    pts = sweep_loss(cfg)
    assert [(p.q, p.loss_db) for p in pts] == [(1.0, 20.0), (0.992407, 20.0)]
    text = sweep_csv(pts)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3 and text.endswith("\n")
    with pytest.raises(UsageError):
        sweep_loss(cfg.replace(loss_grid_db=()))


def test_sweep_parallel_matches_serial():
    cfg = ProtocolConfig(mu_s_grid=(0.5,), loss_grid_db=(10.0, 30.0))
    assert sweep_csv(sweep_loss(cfg, threads=2)) == sweep_csv(sweep_loss(cfg))
