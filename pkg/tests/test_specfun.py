import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.legendre import leggauss
from scipy.special import loggamma as scipy_loggamma
from scipy.special import sph_harm_y

from ptloc.errors import InvalidInputError, InvalidOrderError, PoleError, RangeError
from ptloc.specfun import (
    ConicalOrder,
    channel_index,
    conical_p,
    conical_p_integral,
    conical_p_series,
    log_gamma,
    sph_harm_table,
    spherical_harmonic,
)

# P^0_{-1/2+i}(2) from mpmath.legenp(-1/2+1j, 0, 2, type=3), 30 digits
CONICAL_MU0_LAM1_X2 = 0.556413548935076


def test_log_gamma_trivial_values():
    assert abs(log_gamma(1.0)) < 1e-15
    assert abs(log_gamma(0.5) - math.log(math.sqrt(math.pi))) < 1e-14


@pytest.mark.parametrize("y", [0.5, 2.0, 10.0])
def test_log_gamma_reflection_oracle(y):
    # |Gamma(1/2 + iy)|^2 = pi / cosh(pi y)
    got = math.exp(2.0 * log_gamma(0.5 + 1j * y).real)
    want = math.pi / math.cosh(math.pi * y)
    assert abs(got / want - 1.0) < 1e-10


def test_log_gamma_strip_against_scipy():
    re = np.linspace(0.5, 50.0, 60)
    im = np.linspace(-50.0, 50.0, 61)
    z = re[:, None] + 1j * im[None, :]
    ref = scipy_loggamma(z)
    err = np.abs(log_gamma(z) - ref) / np.maximum(1.0, np.abs(ref))
    assert err.max() < 1e-12


def test_log_gamma_left_half_plane_recurrence_branch():
    z = np.array([-2.3 + 0.7j, -0.4 - 3.0j, 0.1 + 20.0j, -7.5 + 1e-3j])
    assert np.allclose(log_gamma(z), scipy_loggamma(z), rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 49.0), st.floats(-50.0, 50.0))
def test_log_gamma_recurrence(x, y):
    z = complex(x, y)
    lhs = log_gamma(z + 1)
    rhs = log_gamma(z) + np.log(z)
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("z", [0.0, -1.0, -4.0])
def test_log_gamma_poles(z):
    with pytest.raises(PoleError):
        log_gamma(z)


def test_y00_constant():
    th = np.linspace(0, np.pi, 7)
    ph = np.linspace(0, 2 * np.pi, 7)
    assert np.allclose(spherical_harmonic(0, 0, th, ph), 1 / math.sqrt(4 * math.pi))


def test_spherical_harmonic_orthonormality_gauss_legendre():
    l_max = 8
    x, wx = leggauss(2 * l_max + 2)
    nphi = 4 * l_max + 4
    phi = 2 * np.pi * np.arange(nphi) / nphi
    theta = np.arccos(x)
    ylm = sph_harm_table(l_max, theta[:, None], phi[None, :])
    w = wx[:, None] * (2 * np.pi / nphi)
    gram = np.einsum("aij,bij,ij->ab", ylm.conj(), ylm, w * np.ones_like(theta[:, None] * phi))
    assert np.abs(gram - np.eye(gram.shape[0])).max() < 1e-10


def test_spherical_harmonic_conjugation_and_scipy():
    rng = np.random.default_rng(3)
    th = rng.uniform(0, np.pi, 20)
    ph = rng.uniform(0, 2 * np.pi, 20)
    for l in range(0, 7):
        for m in range(-l, l + 1):
            y = spherical_harmonic(l, m, th, ph)
            assert np.allclose(spherical_harmonic(l, -m, th, ph), (-1) ** m * np.conj(y), atol=1e-14)
            assert np.allclose(y, sph_harm_y(l, m, th, ph), atol=1e-12)


def test_spherical_harmonic_addition_theorem():
    th = np.linspace(0.01, np.pi - 0.01, 11)
    ph = np.linspace(0, 6, 11)
    table = sph_harm_table(8, th, ph)
    for l in range(9):
        s = sum(np.abs(table[channel_index(l, m)]) ** 2 for m in range(-l, l + 1))
        assert np.allclose(s, (2 * l + 1) / (4 * np.pi), atol=1e-10)


def test_spherical_harmonic_invalid_order():
    with pytest.raises(InvalidOrderError):
        spherical_harmonic(2, 3, 0.1, 0.2)


def test_conical_values_at_one():
    for lam in (0.0, 0.7, 4.0):
        assert conical_p(ConicalOrder(0, lam), 1.0) == pytest.approx(1.0, abs=1e-15)
        for mu in (1, 2, 5):
            assert conical_p(ConicalOrder(mu, lam), 1.0) == 0.0


def test_conical_mu0_lam1_x2_both_paths():
    order = ConicalOrder(0, 1.0)
    s = float(conical_p_series(order, 2.0))
    i = float(conical_p_integral(order, 2.0))
    assert abs(s - i) < 1e-8
    assert abs(i - CONICAL_MU0_LAM1_X2) < 1e-12


@pytest.mark.parametrize("mu", [0, 1, 2, 4, 8])
@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0, 3.0])
def test_conical_dual_path_overlap_window(mu, lam):
    x = np.linspace(1.5, 2.5, 9)
    order = ConicalOrder(mu, lam)
    s = conical_p_series(order, x)
    i = conical_p_integral(order, x)
    assert np.abs(s - i).max() < 1e-8


@pytest.mark.parametrize(
    "mu,lam,x", [(0, 0.3, 1.2), (1, 2.0, 3.0), (3, 7.5, 10.0), (8, 12.0, 40.0), (2, 25.0, 1.3)]
)
def test_conical_against_mpmath(mu, lam, x):
    ref = float(mpmath.re(mpmath.legenp(-0.5 + 1j * lam, -mu, x, type=3)))
    got = conical_p(ConicalOrder(mu, lam), x)
    assert abs(got - ref) < 1e-10 * max(1.0, abs(ref))


def test_conical_mu0_positive_near_one():
    # first zero lies beyond Lambda * arccosh(x) ~ 2.4
    for lam in (0.0, 1.0, 5.0):
        x = np.cosh(np.linspace(0.0, 1.5 / max(lam, 1.0), 30))
        assert np.all(conical_p(ConicalOrder(0, lam), x) > 0)


def test_conical_errors():
    with pytest.raises(RangeError):
        conical_p(ConicalOrder(0, 1.0), 2e6)
    with pytest.raises(InvalidInputError):
        conical_p(ConicalOrder(0, 1.0), 0.5)
    with pytest.raises(InvalidOrderError):
        ConicalOrder(-1, 1.0)
