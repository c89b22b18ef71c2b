import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import poisson

from phaserand.errors import DomainError, SpectralGapError
from phaserand.model_state import (
    build_projected_model,
    one_minus_upper,
    spectral_decompose,
    spectral_model,
    write_spectral_csv,
)


def test_perfect_randomisation_is_poisson_diagonal():
    s = spectral_model(0.5, 1.0, 9)
    np.testing.assert_allclose(s.eigenvalues, poisson.pmf(np.arange(10), 0.5), atol=1e-12)
    np.testing.assert_allclose(np.abs(s.eigenvectors), np.eye(10), atol=1e-10)


def test_fixed_phase_is_rank_one():
    s = spectral_decompose(build_projected_model(0.5, 0.0, 9), 0.5, 0.0, 9)
    assert np.sum(np.abs(s.eigenvalues) > 1e-12) == 1


def test_eigenvalues_sum_to_projection_fidelity():
    s = spectral_model(0.8, 0.992407, 9)
    assert abs(s.eigenvalues.sum() - (1 - poisson.sf(9, 0.8))) < 1e-12


def test_eigenvector_signs_and_tags():
    s = spectral_model(0.5, 0.992407, 9)
    diag = np.diag(s.eigenvectors)
    assert np.all(diag > 0)
    assert np.all(np.argmax(s.eigenvectors**2, axis=0) == np.arange(10))


def test_correction_terms_values():
    s = spectral_model(0.5, 1.0, 9)
    eps = 2 * np.sqrt(poisson.sf(9, 0.5))
    assert s.eps_val == pytest.approx(eps, rel=1e-6)
    p = s.eigenvalues
    assert s.delta[1] == pytest.approx(min(p[0] - p[1], p[1] - p[2]) - s.eps_val, rel=1e-12)
    assert s.f_vec[1] == pytest.approx(1 - (s.eps_val / s.delta[1]) ** 2, rel=1e-12)


def test_vacuum_model_is_exact():
    s = spectral_model(0.0, 0.9, 9, require_tag=None)
    assert s.f_proj == 1.0 and s.eps_val == 0.0
    assert s.eigenvalues[0] == 1.0


def test_gap_failure_raises():
    # Near mu = 1 the zero- and one-photon weights coincide.
    with pytest.raises(SpectralGapError):
        spectral_model(1.0, 1.0, 9)


def test_rejects_bad_q():
    with pytest.raises(DomainError):
        build_projected_model(0.5, 1.5, 9)


@given(st.floats(0, 1e-3))
def test_one_minus_upper_is_conservative(x):
    z = one_minus_upper(x)
    assert z <= 1 - x or z == 1 - x
    assert 1 - z >= x


@given(st.floats(0.05, 0.9), st.floats(0.9, 1.0))
def test_spectrum_is_trace_preserving_and_psd(mu, q):
    rho = build_projected_model(mu, q, 9)
    s = spectral_decompose(rho, mu, q, 9)
    assert s.eigenvalues.min() > -1e-13
    np.testing.assert_allclose(s.eigenvectors @ np.diag(s.eigenvalues) @ s.eigenvectors.T, rho, atol=1e-12)


def test_spectral_csv(tmp_path):
    path = tmp_path / "s.csv"
    write_spectral_csv(spectral_model(0.5, 1.0, 3), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tag,eigenvalue,gap,f_vec"
    assert len(lines) == 5
