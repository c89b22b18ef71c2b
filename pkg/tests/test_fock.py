import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import poisson

from phaserand.errors import DomainError, UsageError
from phaserand.fock import (
    EncodingId,
    apply_encoding,
    coherent_amplitudes,
    conjugate_by_encoding,
    encoding_matrix,
    two_mode_dim,
    two_mode_enumerate,
    two_mode_index,
)


def test_amplitudes_square_to_poisson():
    a = coherent_amplitudes(0.5, 9)
    np.testing.assert_allclose(a**2, poisson.pmf(np.arange(10), 0.5), rtol=1e-13)


def test_vacuum_amplitudes():
    a = coherent_amplitudes(0.0, 4)
    assert a.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]


def test_amplitudes_reject_bad_input():
    with pytest.raises(DomainError):
        coherent_amplitudes(-0.1, 3)
    with pytest.raises(DomainError):
        coherent_amplitudes(0.1, 0)


def test_two_mode_basis_order():
    pairs = two_mode_enumerate(2)
    assert pairs == ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0))
    assert two_mode_dim(9) == 55
    assert two_mode_index(1, 1, 2) == 4
    with pytest.raises(UsageError):
        two_mode_index(2, 1, 2)


@pytest.mark.parametrize("enc", list(EncodingId))
def test_encodings_are_isometries(enc):
    V = encoding_matrix(enc, 9)
    np.testing.assert_allclose(V.T @ V, np.eye(10), atol=1e-13)
    assert not V.flags.writeable


def test_x_encodings_are_orthogonal_on_single_photon():
    e1 = np.eye(10)[1]
    a = apply_encoding(EncodingId.X0, e1)
    b = apply_encoding(EncodingId.X1, e1)
    assert abs(a @ b) < 1e-15
    np.testing.assert_allclose(a[[two_mode_index(0, 1, 9), two_mode_index(1, 0, 9)]],
                               [1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_z_encodings_place_photons_in_one_mode():
    v = np.arange(1.0, 5.0)
    out = apply_encoding(EncodingId.Z1, v)
    for m in range(4):
        assert out[two_mode_index(0, m, 3)] == v[m]


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_conjugation_matches_vector_map(vals):
    v = np.array(vals)
    rho = np.outer(v, v)
    for enc in EncodingId:
        w = apply_encoding(enc, v)
        np.testing.assert_allclose(conjugate_by_encoding(enc, rho), np.outer(w, w), atol=1e-12)


def test_encoding_ids_parse():
    assert EncodingId("1X") is EncodingId.X1
    assert EncodingId.X1.basis == "X" and EncodingId.X1.bit == 1
