import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srkcd.chebyshev import MAX_STAGES, cheb_T, cheb_T_prime, cheb_table, rkc_coefficients


@pytest.mark.parametrize("n, x, expected", [
    (0, 0.3, 1.0),
    (1, 0.3, 0.3),
    (2, 2.0, 7.0),
    (3, 2.0, 26.0),
    (4, 1.0, 1.0),
    (5, -1.0, -1.0),
])
def test_T_hand_values(n, x, expected):
    assert cheb_T(n, x) == expected


@pytest.mark.parametrize("n, x, expected", [(0, 2.0, 0.0), (1, 2.0, 1.0), (2, 2.0, 8.0), (3, 1.0, 9.0)])
def test_T_prime_hand_values(n, x, expected):
    assert cheb_T_prime(n, x) == expected


def test_T_prime_at_one_is_n_squared():
    for n in range(40):
        assert cheb_T_prime(n, 1.0) == n * n


def test_cosh_identity():
    t = np.linspace(0.0, 1.5, 31)
    for n in range(25):
        np.testing.assert_allclose(cheb_T(n, np.cosh(t)), np.cosh(n * t), rtol=1e-12)


def test_cos_identity_and_derivative():
    theta = np.linspace(0.05, math.pi - 0.05, 41)
    x = np.cos(theta)
    for n in range(1, 30):
        np.testing.assert_allclose(cheb_T(n, x), np.cos(n * theta), atol=1e-12)
        # T_n' = n U_{n-1} = n sin(n theta)/sin(theta)
        np.testing.assert_allclose(cheb_T_prime(n, x), n * np.sin(n * theta) / np.sin(theta), atol=1e-9)


def test_derivative_matches_finite_difference():
    x = np.linspace(1.0, 1.3, 7)
    h = 1e-6
    for n in (2, 5, 9):
        fd = (cheb_T(n, x + h) - cheb_T(n, x - h)) / (2 * h)
        np.testing.assert_allclose(cheb_T_prime(n, x), fd, rtol=1e-7)


def test_array_shape_preserved():
    x = np.ones((3, 4)) * 1.1
    assert cheb_T(6, x).shape == (3, 4)
    assert cheb_T_prime(6, x).shape == (3, 4)
    assert isinstance(cheb_T(6, 1.1), float)


def test_table_matches_single_evaluations():
    T, dT = cheb_table(12, 1.07)
    for j in range(13):
        assert T[j] == pytest.approx(cheb_T(j, 1.07), rel=1e-15)
        assert dT[j] == pytest.approx(cheb_T_prime(j, 1.07), rel=1e-15)


@pytest.mark.parametrize("bad", [-1, 2.5, True])
def test_bad_degree(bad):
    with pytest.raises(ValueError):
        cheb_T(bad, 1.0)


def test_rkc_single_stage_is_euler():
    c = rkc_coefficients(1, 0.0)
    assert c.omega0 == 1.0 and c.omega1 == 1.0
    assert c.mu_tilde.tolist() == [1.0]
    assert c.nu.tolist() == [0.0]


def test_rkc_two_stages_undamped():
    c = rkc_coefficients(2, 0.0)
    assert c.omega1 == 0.25
    assert c.mu_tilde.tolist() == [0.25, 0.5]
    assert c.nu.tolist() == [0.0, -1.0]


def test_rkc_definitions():
    s, eps = 7, 0.05
    c = rkc_coefficients(s, eps)
    w0 = 1 + eps / s**2
    assert c.omega0 == pytest.approx(w0, rel=1e-15)
    assert c.omega1 == pytest.approx(cheb_T(s, w0) / cheb_T_prime(s, w0), rel=1e-13)
    for j in range(2, s + 1):
        assert c.mu_tilde[j - 1] == pytest.approx(2 * c.omega1 * cheb_T(j - 1, w0) / cheb_T(j, w0), rel=1e-13)
        assert c.nu[j - 1] == pytest.approx(-cheb_T(j - 2, w0) / cheb_T(j, w0), rel=1e-13)


def test_rkc_arrays_read_only_and_cached():
    c = rkc_coefficients(4, 0.01)
    with pytest.raises(ValueError):
        c.mu_tilde[0] = 1.0
    assert rkc_coefficients(4, 0.01) is c
    assert set(c.to_dict()) == {"s", "epsilon", "omega0", "omega1", "mu_tilde", "nu"}


@pytest.mark.parametrize("s, eps", [(0, 0.01), (-2, 0.01), (1.5, 0.01), (MAX_STAGES + 1, 0.01),
                                    (3, -0.1), (3, float("nan")), (3, float("inf"))])
def test_rkc_rejects_bad_input(s, eps):
    with pytest.raises(ValueError):
        rkc_coefficients(s, eps)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 60), x=st.floats(1.0, 2.0))
def test_monotone_in_degree(n, x):
    assert cheb_T(n, x) >= cheb_T(n - 1, x) >= 1.0
    assert cheb_T_prime(n, x) >= cheb_T_prime(n - 1, x)


@settings(max_examples=60, deadline=None)
@given(s=st.integers(1, 60), eps=st.floats(0.0, 0.5))
def test_mu_tilde_positive_nu_negative(s, eps):
    c = rkc_coefficients(s, eps)
    assert np.all(c.mu_tilde > 0)
    assert np.all(c.nu[1:] < 0)
