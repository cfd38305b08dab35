"""Special functions used by the POVM kernels.

* complex log-gamma (Lanczos, g=7, 9 terms),
* orthonormal spherical harmonics with the Condon-Shortley phase,
* conical (Mehler) functions ``P^{-mu}_{-1/2 + i Lambda}(x)`` for ``x >= 1``.

The conical functions have two evaluation paths: the hypergeometric series in
``(1 - x)/2`` and a Gauss-Jacobi quadrature of the Mehler-type integral
representation.  ``conical_p`` dispatches between them; both are exposed so
they can be checked against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import InvalidInputError, InvalidOrderError, PoleError, RangeError

__all__ = [
    "log_gamma",
    "spherical_harmonic",
    "sph_harm_table",
    "channel_index",
    "channels",
    "n_channels",
    "ConicalOrder",
    "conical_p",
    "conical_p_series",
    "conical_p_integral",
]

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _log_gamma_right(z: np.ndarray) -> np.ndarray:
    # valid for Re z >= 0.5
    zm = z - 1.0
    acc = np.full_like(zm, _LANCZOS_COEF[0])
    for k in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[k] / (zm + k)
    t = zm + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (zm + 0.5) * np.log(t) - t + np.log(acc)


def log_gamma(z):
    """Principal branch of ``log Gamma(z)`` for complex ``z``.

    Points with ``Re z < 0.5`` are shifted into the Lanczos region with the
    recurrence ``log Gamma(z) = log Gamma(z + n) - sum_k log(z + k)``, which
    keeps the branch consistent with the continuation from the right
    half-plane.

    Raises
    ------
    PoleError
        If any ``z`` is a non-positive integer.
    """
    z_arr = np.asarray(z, dtype=complex)
    scalar = z_arr.ndim == 0
    z_arr = np.atleast_1d(z_arr)
    pole = (z_arr.imag == 0) & (z_arr.real <= 0) & (z_arr.real == np.round(z_arr.real))
    if np.any(pole):
        raise PoleError(f"log_gamma pole at z={z_arr[pole][0]}")

    out = np.empty_like(z_arr)
    right = z_arr.real >= 0.5
    out[right] = _log_gamma_right(z_arr[right])
    if np.any(~right):
        zl = z_arr[~right]
        shift = np.ceil(0.5 - zl.real).astype(int)
        nmax = int(shift.max())
        corr = np.zeros_like(zl)
        for k in range(nmax):
            active = k < shift
            corr[active] += np.log(zl[active] + k)
        out[~right] = _log_gamma_right(zl + shift) - corr
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# spherical harmonics

def channel_index(l: int, m: int) -> int:
    """Flat index of channel ``(l, m)`` in the ``l = 0..L, m = -l..l`` ordering."""
    if abs(m) > l:
        raise InvalidOrderError(f"|m|={abs(m)} exceeds l={l}")
    return l * l + l + m


def n_channels(l_max: int) -> int:
    return (l_max + 1) ** 2


def channels(l_max: int) -> list[tuple[int, int]]:
    return [(l, m) for l in range(l_max + 1) for m in range(-l, l + 1)]


def _legendre_table(l_max: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal associated Legendre functions ``Pbar_l^m(x)``, ``m >= 0``.

    Normalized so that ``Pbar_l^m(cos theta) e^{i m phi}`` is an orthonormal
    spherical harmonic; includes the Condon-Shortley phase.  Shape
    ``(l_max + 1, l_max + 1) + x.shape`` indexed ``[l, m]``.
    """
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    table = np.zeros((l_max + 1, l_max + 1) + x.shape)
    table[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, l_max + 1):
        table[m, m] = -math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * table[m - 1, m - 1]
    for m in range(0, l_max):
        table[m + 1, m] = math.sqrt(2.0 * m + 3.0) * x * table[m, m]
    for m in range(0, l_max + 1):
        for l in range(m + 2, l_max + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            table[l, m] = a * (x * table[l - 1, m] - b * table[l - 2, m])
    return table


def spherical_harmonic(l: int, m: int, theta, phi):
    """Orthonormal spherical harmonic ``Y^{l,m}(theta, phi)``.

    ``theta`` is the polar angle in ``[0, pi]``; negative orders follow
    ``Y^{l,-m} = (-1)^m conj(Y^{l,m})``.
    """
    if l < 0 or abs(m) > l:
        raise InvalidOrderError(f"invalid spherical-harmonic order (l={l}, m={m})")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    x = np.cos(theta)
    pbar = _legendre_table(l, np.atleast_1d(x))[l, abs(m)].reshape(x.shape)
    y = pbar * np.exp(1j * abs(m) * phi)
    if m < 0:
        y = (-1) ** abs(m) * np.conj(y)
    return y


def sph_harm_table(l_max: int, theta, phi) -> np.ndarray:
    """All ``Y^{l,m}`` up to ``l_max``, shape ``(n_channels,) + broadcast shape``."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    pbar = _legendre_table(l_max, np.cos(theta))
    out = np.empty((n_channels(l_max),) + theta.shape, dtype=complex)
    for l in range(l_max + 1):
        for m in range(0, l + 1):
            y = pbar[l, m] * np.exp(1j * m * phi)
            out[channel_index(l, m)] = y
            if m:
                out[channel_index(l, -m)] = (-1) ** m * np.conj(y)
    return out


# ---------------------------------------------------------------------------
# conical functions

@dataclass(frozen=True)
class ConicalOrder:
    """Order ``-mu`` and degree ``-1/2 + i lam`` of a conical function."""

    mu: int
    lam: float

    def __post_init__(self):
        if int(self.mu) != self.mu or self.mu < 0:
            raise InvalidOrderError(f"conical order mu must be a non-negative integer, got {self.mu}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise InvalidOrderError(f"conical degree parameter must be finite and >= 0, got {self.lam}")


_X_MAX = 1.0e6
_SERIES_X_LIMIT = 1.5
_SERIES_PHASE_LIMIT = 8.0


def _check_x(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 1.0):
        raise InvalidInputError("conical_p requires finite x >= 1")
    if np.any(x > _X_MAX):
        raise RangeError(f"conical_p argument above {_X_MAX:g}")
    return x


def conical_p_series(order: ConicalOrder, x, tol: float = 1e-17, max_terms: int = 5000):
    """Hypergeometric series ``((x-1)/(x+1))^{mu/2} F(1/2-iL, 1/2+iL; 1+mu; (1-x)/2) / mu!``.

    The Pochhammer products of the two conjugate upper parameters are real,
    so the whole series is evaluated in real arithmetic.  Accurate while
    ``Lambda * arccosh(x)`` stays moderate; beyond that the terms cancel.
    """
    x = _check_x(x)
    mu, lam = order.mu, float(order.lam)
    y = (1.0 - x) / 2.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(max_terms):
        term = term * (((k + 0.5) ** 2 + lam * lam) / ((mu + 1.0 + k) * (k + 1.0))) * y
        total = total + term
        if np.all(np.abs(term) <= tol * np.maximum(np.abs(total), 1e-300)):
            break
    pref = ((x - 1.0) / (x + 1.0)) ** (0.5 * mu) / math.factorial(mu)
    return pref * total


@lru_cache(maxsize=256)
def _jacobi_rule(n: int, mu: int):
    return roots_jacobi(n, mu - 0.5, 0.0)


def conical_p_integral(order: ConicalOrder, x, n_nodes: int | None = None):
    """Quadrature of the integral representation.

    With ``x = cosh(xi)``::

        P^{-mu}_{-1/2+iL}(x) = sqrt(2/pi) sinh(xi)^{-mu} / Gamma(mu + 1/2)
                               * int_0^xi cos(L t) (cosh xi - cosh t)^{mu - 1/2} dt

    The endpoint factor ``(xi - t)^{mu - 1/2}`` is absorbed by a Gauss-Jacobi
    rule; the remaining integrand is smooth.
    """
    x = _check_x(x)
    mu, lam = order.mu, float(order.lam)
    flat = np.atleast_1d(x).ravel()
    out = np.empty_like(flat)
    at_one = flat == 1.0
    out[at_one] = 1.0 if mu == 0 else 0.0
    xi = np.arccosh(flat[~at_one])
    if xi.size:
        if n_nodes is None:
            n_nodes = 64 + int(2.0 * lam * float(xi.max()))
        u, w = _jacobi_rule(n_nodes, mu)
        t = xi[:, None] * (1.0 + u[None, :]) / 2.0
        gap = xi[:, None] - t
        kfac = 2.0 * np.sinh((xi[:, None] + t) / 2.0) * np.sinh(gap / 2.0) / gap
        integral = (xi / 2.0) ** (mu + 0.5) * np.sum(w * np.cos(lam * t) * kfac ** (mu - 0.5), axis=1)
        out[~at_one] = (
            math.sqrt(2.0 / math.pi) * np.sinh(xi) ** (-mu) / math.gamma(mu + 0.5) * integral
        )
    return out.reshape(x.shape)


def conical_p(order: ConicalOrder, x, method: str = "auto"):
    """Conical function ``P^{-mu}_{-1/2 + i Lambda}(x)`` for real ``x >= 1``.

    ``method="auto"`` uses the series for ``x < 1.5`` when
    ``Lambda * arccosh(x) <= 8`` and the integral representation otherwise.

    Raises
    ------
    RangeError
        For ``x > 1e6``.
    """
    x = _check_x(x)
    if method == "series":
        return conical_p_series(order, x)
    if method == "integral":
        return conical_p_integral(order, x)
    if method != "auto":
        raise InvalidInputError(f"unknown conical_p method {method!r}")
    flat = np.atleast_1d(x)
    use_series = (flat < _SERIES_X_LIMIT) & (order.lam * np.arccosh(flat) <= _SERIES_PHASE_LIMIT)
    out = np.empty_like(flat)
    if np.any(use_series):
        out[use_series] = conical_p_series(order, flat[use_series])
    if np.any(~use_series):
        out[~use_series] = conical_p_integral(order, flat[~use_series])
    return out.reshape(x.shape) if x.ndim else float(out[0])
