"""First-order differential operators in momentum space.

An operator is ``c(pi) + sum_k a^k(pi) d/dpi_k`` with coefficient closures
that take the tuple of coordinate arrays.  Commutators stay first order;
coefficient derivatives are taken by Richardson-extrapolated central
differences of the closures, derivatives of states by an 8th-order
central stencil (or an FFT, on request).

Conventions:

* the energy sign ``xi`` multiplies the whole bracket of the proper-time
  acting rules, including the ``tau`` term;
* the ratios ``Pi^mu / Pi^nu`` inside symmetric products use ``Pi^0 -> E``,
  which keeps the decomposition identities valid for both energy signs;
* ``Pi^k`` acts as multiplication by ``pi^k`` and ``Pi^0`` by ``xi E``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    InvalidChartError,
    InvalidCompositionError,
    InvalidInputError,
    SingularDomainError,
)
from .state import MomentumState, inner_product

__all__ = [
    "FirstOrderOperator",
    "derivative",
    "identity",
    "scalar",
    "multiplication",
    "momentum",
    "q0_phys",
    "q_phys",
    "q_component",
    "newton_wigner",
    "sym_product",
    "restrict_linear",
    "kijowski_time",
    "kijowski_transverse",
    "expectation",
    "variance",
    "nw_decomposition_residual",
    "check_kijowski_domain",
    "boundary_defect",
    "boundary_defect_formula",
]

Coef = Callable[[tuple], np.ndarray]

SINGULAR_STRIP_CELLS = 3
SINGULAR_MASS_LIMIT = 1e-8
COEF_STEP = 1e-3

# 8th-order central first-derivative weights for offsets 1..4
_FD8 = (4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0)


def derivative(f: np.ndarray, axis: int, h: float, scheme: str = "fd8") -> np.ndarray:
    """``d f / d pi_axis`` on a uniform grid.

    ``fd8`` treats values beyond the grid as zero; ``spectral`` assumes
    periodicity and differentiates with an FFT.
    """
    if scheme == "spectral":
        n = f.shape[axis]
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
        shape = [1] * f.ndim
        shape[axis] = n
        return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(f, axis=axis), axis=axis)
    if scheme != "fd8":
        raise InvalidInputError(f"unknown derivative scheme {scheme!r}")
    out = np.zeros_like(f)
    n = f.shape[axis]
    for off, w in enumerate(_FD8, start=1):
        if off >= n:
            break
        hi = [slice(None)] * f.ndim
        lo = [slice(None)] * f.ndim
        # out[i] += w (f[i+off] - f[i-off])
        hi[axis] = slice(0, n - off)
        lo[axis] = slice(off, n)
        out[tuple(hi)] += w * f[tuple(lo)]
        out[tuple(lo)] -= w * f[tuple(hi)]
    return out / h


def _energy(P, mass):
    return np.sqrt(sum(p * p for p in P) + mass * mass)


def _zero(P):
    return 0.0


def _const(value):
    return lambda P: value


def _coef_derivative(c: Coef, P: tuple, k: int, step: float) -> np.ndarray:
    def at(delta):
        Q = list(P)
        Q[k] = P[k] + delta
        return np.asarray(c(tuple(Q)))

    d1 = (at(step) - at(-step)) / (2 * step)
    d2 = (at(step / 2) - at(-step / 2)) / step
    return (4.0 * d2 - d1) / 3.0


@dataclass(frozen=True)
class FirstOrderOperator:
    """``c(pi) + sum_k a^k(pi) d/dpi_k`` on a fixed-``xi`` subspace.

    ``deriv`` is ``None`` for multiplication operators.  ``chart`` is the
    coordinate chart the coefficients refer to; ``singular`` marks operators
    with a ``1/pi^3`` singularity, which refuse states with weight near the
    ``pi^3 = 0`` plane.
    """

    scalar: Coef
    deriv: tuple | None = None
    xi: int = 1
    mass: float = 1.0
    chart: str = "pi"
    label: str = "op"
    singular: bool = False

    @property
    def multiplicative(self) -> bool:
        return self.deriv is None

    def _deriv_list(self, ndim: int) -> list:
        return list(self.deriv) if self.deriv is not None else [_zero] * ndim

    def _check(self, state: MomentumState):
        if state.grid.chart != self.chart:
            raise InvalidChartError(f"{self.label} acts on the {self.chart}-chart, state is on {state.grid.chart}")
        if state.xi != self.xi:
            raise InvalidInputError(f"{self.label} acts on xi={self.xi}, state has xi={state.xi}")
        if state.grid.mass != self.mass:
            raise InvalidInputError("operator and state masses differ")
        if self.deriv is not None and len(self.deriv) != state.grid.ndim:
            raise InvalidInputError("operator dimension does not match the state grid")
        if self.singular:
            check_kijowski_domain(state)

    def coefficients(self, P: tuple):
        n = len(P)
        c = np.asarray(self.scalar(P))
        a = [np.asarray(f(P)) for f in self._deriv_list(n)]
        return c, a

    def apply(self, state: MomentumState, scheme: str = "fd8") -> MomentumState:
        self._check(state)
        P = state.grid.coords()
        c, a = self.coefficients(P)
        out = c * state.psi
        if self.deriv is not None:
            for k, (ak, hk) in enumerate(zip(a, state.grid.h)):
                if np.any(ak != 0):
                    out = out + ak * derivative(state.psi, k, hk, scheme)
        out = out * np.ones(state.grid.shape)
        if state.grid.chart == "s":
            out = np.where(state.grid.physical_mask(), out, 0.0)
        return state.with_psi(out)

    __call__ = apply

    def _combine(self, other: "FirstOrderOperator", sa: complex, sb: complex, label: str):
        if not isinstance(other, FirstOrderOperator):
            raise InvalidCompositionError("can only combine with another FirstOrderOperator")
        if (self.xi, self.mass, self.chart) != (other.xi, other.mass, other.chart):
            raise InvalidCompositionError("operators act on different subspaces or charts")
        ca, cb = self.scalar, other.scalar
        if self.deriv is None and other.deriv is None:
            deriv = None
        else:
            n = len(self.deriv if self.deriv is not None else other.deriv)
            da, db = self._deriv_list(n), other._deriv_list(n)
            deriv = tuple((lambda P, f=f, g=g: sa * f(P) + sb * g(P)) for f, g in zip(da, db))
        return FirstOrderOperator(
            lambda P: sa * ca(P) + sb * cb(P),
            deriv,
            self.xi,
            self.mass,
            self.chart,
            label,
            self.singular or other.singular,
        )

    def __add__(self, other):
        if np.isscalar(other):
            other = scalar(other, self.xi, self.mass, self.chart)
        return self._combine(other, 1.0, 1.0, f"({self.label} + {other.label})")

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            other = scalar(other, self.xi, self.mass, self.chart)
        return self._combine(other, 1.0, -1.0, f"({self.label} - {other.label})")

    def __neg__(self):
        return self * -1.0

    def __mul__(self, k):
        if not np.isscalar(k):
            raise InvalidCompositionError("use sym_product or sequential application for operator products")
        c = self.scalar
        deriv = None if self.deriv is None else tuple((lambda P, f=f: k * f(P)) for f in self.deriv)
        return FirstOrderOperator(
            lambda P: k * c(P), deriv, self.xi, self.mass, self.chart, f"{k}*{self.label}", self.singular
        )

    __rmul__ = __mul__

    def commutator(self, other: "FirstOrderOperator", step: float | None = None) -> "FirstOrderOperator":
        """``[A, B]`` as a first-order operator.

        ``[A,B] = (a_A . grad c_B - a_B . grad c_A)
                  + sum_l (a_A . grad a_B^l - a_B . grad a_A^l) d_l``.
        """
        if (self.xi, self.mass, self.chart) != (other.xi, other.mass, other.chart):
            raise InvalidCompositionError("operators act on different subspaces or charts")
        h = COEF_STEP * self.mass if step is None else step
        A, B = self, other
        if A.deriv is None and B.deriv is None:
            return scalar(0.0, self.xi, self.mass, self.chart)
        n = len(A.deriv if A.deriv is not None else B.deriv)
        aA, aB = A._deriv_list(n), B._deriv_list(n)

        def directional(avec, f, P):
            total = 0.0
            for k in range(n):
                ak = np.asarray(avec[k](P))
                if np.any(ak != 0):
                    total = total + ak * _coef_derivative(f, P, k, h)
            return total

        def c_new(P):
            return directional(aA, B.scalar, P) - directional(aB, A.scalar, P)

        deriv = tuple(
            (lambda P, l=l: directional(aA, aB[l], P) - directional(aB, aA[l], P)) for l in range(n)
        )
        return FirstOrderOperator(
            c_new, deriv, self.xi, self.mass, self.chart, f"[{A.label}, {B.label}]", A.singular or B.singular
        )


def scalar(value: complex, xi: int = 1, mass: float = 1.0, chart: str = "pi") -> FirstOrderOperator:
    return FirstOrderOperator(_const(value), None, xi, mass, chart, f"{value}")


def identity(xi: int = 1, mass: float = 1.0, chart: str = "pi") -> FirstOrderOperator:
    return FirstOrderOperator(_const(1.0), None, xi, mass, chart, "I")


def multiplication(func: Coef, xi: int = 1, mass: float = 1.0, label: str = "g", chart: str = "pi"):
    """Multiplication by ``func(P)``."""
    return FirstOrderOperator(func, None, xi, mass, chart, label)


def momentum(mu: int, xi: int = 1, mass: float = 1.0) -> FirstOrderOperator:
    """``Pi^mu``: multiplication by ``pi^k`` or, for ``mu = 0``, by ``xi E``."""
    if mu == 0:
        return multiplication(lambda P: xi * _energy(P, mass), xi, mass, "Pi0")
    return multiplication(lambda P: P[mu - 1], xi, mass, f"Pi{mu}")


def q0_phys(tau: float = 0.0, xi: int = 1, mass: float = 1.0) -> FirstOrderOperator:
    """``xi (E/m) [(i/m)(pi . grad + 3/2) + tau]``."""
    m = mass

    def c(P):
        return xi * _energy(P, m) / m * (1.5j / m + tau)

    deriv = tuple((lambda P, k=k: xi * _energy(P, m) / m * (1j / m) * P[k]) for k in range(3))
    return FirstOrderOperator(c, deriv, xi, m, "pi", f"Q0(tau={tau:g})")


def q_phys(j: int, tau: float = 0.0, xi: int = 1, mass: float = 1.0) -> FirstOrderOperator:
    """``xi [i(d_j + (pi^j/m^2) pi.grad + 3 pi^j/(2 m^2)) + pi^j tau / m]``."""
    if j not in (1, 2, 3):
        raise InvalidInputError("spatial index j must be 1, 2 or 3")
    m = mass
    jj = j - 1

    def c(P):
        return xi * (1.5j * P[jj] / m**2 + P[jj] * tau / m)

    deriv = tuple(
        (lambda P, k=k: xi * 1j * ((1.0 if k == jj else 0.0) + P[jj] * P[k] / m**2)) for k in range(3)
    )
    return FirstOrderOperator(c, deriv, xi, m, "pi", f"Q{j}(tau={tau:g})")


def q_component(mu: int, tau: float = 0.0, xi: int = 1, mass: float = 1.0) -> FirstOrderOperator:
    return q0_phys(tau, xi, mass) if mu == 0 else q_phys(mu, tau, xi, mass)


def newton_wigner(j: int, t: float = 0.0, xi: int = 1, mass: float = 1.0) -> FirstOrderOperator:
    """``xi i (d_j - pi^j / (2 E^2)) + (pi^j / E) t``."""
    if j not in (1, 2, 3):
        raise InvalidInputError("spatial index j must be 1, 2 or 3")
    m = mass
    jj = j - 1

    def c(P):
        E = _energy(P, m)
        return -xi * 0.5j * P[jj] / E**2 + P[jj] / E * t

    deriv = tuple(_const(xi * 1j if k == jj else 0.0) for k in range(3))
    return FirstOrderOperator(c, deriv, xi, m, "pi", f"XNW{j}(t={t:g})")


def sym_product(
    g: FirstOrderOperator, D: FirstOrderOperator, ordering: str = "symmetric", step: float | None = None
) -> FirstOrderOperator:
    """``g : D``, the ordered product of a multiplication operator with ``D``.

    ``symmetric`` is ``(gD + Dg)/2 = gD + (1/2) a^k (d_k g)``; ``left`` is
    ``gD`` and ``right`` is ``Dg = gD + a^k (d_k g)``.
    """
    if not g.multiplicative:
        raise InvalidCompositionError("the left factor of g:D must be a multiplication operator")
    if (g.xi, g.mass, g.chart) != (D.xi, D.mass, D.chart):
        raise InvalidCompositionError("operators act on different subspaces or charts")
    weight = {"symmetric": 0.5, "left": 0.0, "right": 1.0}.get(ordering)
    if weight is None:
        raise InvalidInputError(f"unknown ordering {ordering!r}")
    h = COEF_STEP * D.mass if step is None else step
    gs, cs = g.scalar, D.scalar
    if D.deriv is None:
        return FirstOrderOperator(
            lambda P: gs(P) * cs(P), None, D.xi, D.mass, D.chart, f"{g.label}:{D.label}", D.singular
        )
    n = len(D.deriv)
    dl = D.deriv

    def c(P):
        val = np.asarray(gs(P)) * np.asarray(cs(P))
        if weight:
            for k in range(n):
                ak = np.asarray(dl[k](P))
                if np.any(ak != 0):
                    val = val + weight * ak * _coef_derivative(gs, P, k, h)
        return val

    deriv = tuple((lambda P, f=f: np.asarray(gs(P)) * np.asarray(f(P))) for f in dl)
    return FirstOrderOperator(c, deriv, D.xi, D.mass, D.chart, f"{g.label}:{D.label}", D.singular or g.singular)


def _ratio(mu: int, nu: int, mass: float, xi: int) -> FirstOrderOperator:
    if mu == nu:
        return multiplication(_const(1.0), xi, mass, "1")
    def comp(P, k):
        return _energy(P, mass) if k == 0 else P[k - 1]

    return FirstOrderOperator(
        lambda P: comp(P, mu) / comp(P, nu), None, xi, mass, "pi", f"(P{mu}/P{nu})", singular=nu == 3
    )


def restrict_linear(
    mu: int,
    nu: int,
    value: float,
    xi: int = 1,
    mass: float = 1.0,
    tau: float = 0.0,
    ordering: str = "symmetric",
) -> FirstOrderOperator:
    """Restriction of ``Q^mu`` to the surface ``Q^nu = value``.

    ``Q^mu - (Pi^mu/Pi^nu) : Q^nu + (Pi^mu/Pi^nu) value``.  With ``nu = 0``
    this is the NW operator at ``t = value``; with ``nu = 3`` the Kijowski
    family at ``z = value``.  The ``tau`` dependence cancels identically.
    """
    g = _ratio(mu, nu, mass, xi)
    qmu = q_component(mu, tau, xi, mass)
    qnu = q_component(nu, tau, xi, mass)
    out = qmu - sym_product(g, qnu, ordering) + g * value
    return FirstOrderOperator(
        out.scalar, out.deriv, xi, mass, "pi", f"Q{mu}|Q{nu}={value:g}", singular=nu == 3 and mu != nu
    )


def kijowski_time(z: float = 0.0, xi: int = 1, mass: float = 1.0, chart: str = "s", variant: str = "derived"):
    """Detection-time operator for the detector plane ``Q^3 = z``.

    ``chart="s"``: ``-i xi sign(s) d_s + s z / sqrt(s^2 - rho^2 - m^2)`` on
    ``(pi^1, pi^2, s)`` with the flat measure.

    ``chart="pi"``: ``(E/pi^3) [xi i (-d_3 + 1/(2 pi^3)) + z]`` on the
    ``dmu`` measure, which is the fixed-z restriction of the proper-time
    rules.  ``variant="printed"`` replaces the prefactor ``E/pi^3`` by
    ``E/m``; it agrees with neither the s-chart nor the classical slope
    and is kept only as a negative control.
    """
    m = mass
    if chart == "s":

        def c(P):
            p1, p2, s = P
            arg = s * s - p1 * p1 - p2 * p2 - m * m
            return np.where(arg > 0, s * z / np.sqrt(np.where(arg > 0, arg, 1.0)), 0.0)

        deriv = (_zero, _zero, lambda P: -1j * xi * np.sign(P[2]))
        return FirstOrderOperator(c, deriv, xi, m, "s", f"T(z={z:g})", singular=True)
    if chart != "pi":
        raise InvalidChartError(f"unknown chart {chart!r}")
    if variant == "derived":
        pref = lambda P: _energy(P, m) / P[2]  # noqa: E731
    elif variant == "printed":
        pref = lambda P: _energy(P, m) / m  # noqa: E731
    else:
        raise InvalidInputError(f"unknown variant {variant!r}")

    def c(P):
        return pref(P) * (xi * 0.5j / P[2] + z)

    deriv = (_zero, _zero, lambda P: -xi * 1j * pref(P))
    return FirstOrderOperator(c, deriv, xi, m, "pi", f"T(z={z:g},{variant})", singular=True)


def kijowski_transverse(j: int, z: float = 0.0, xi: int = 1, mass: float = 1.0, chart: str = "s"):
    """Transverse position ``X^j`` (``j = 1, 2``) on the detector plane ``Q^3 = z``.

    ``chart="s"``: ``i xi d_j|_s + pi^j z / (sign(s) sqrt(s^2 - rho^2 - m^2))``.
    ``chart="pi"``: ``xi i (d_j - (pi^j/pi^3) d_3 + pi^j/(2 (pi^3)^2)) + (pi^j/pi^3) z``.
    """
    if j not in (1, 2):
        raise InvalidInputError("transverse index must be 1 or 2")
    m = mass
    jj = j - 1
    if chart == "s":

        def c(P):
            p1, p2, s = P
            arg = s * s - p1 * p1 - p2 * p2 - m * m
            return np.where(arg > 0, P[jj] * z / (np.sign(s) * np.sqrt(np.where(arg > 0, arg, 1.0))), 0.0)

        deriv = tuple(_const(xi * 1j if k == jj else 0.0) for k in range(3))
        return FirstOrderOperator(c, deriv, xi, m, "s", f"X{j}(z={z:g})", singular=True)
    if chart != "pi":
        raise InvalidChartError(f"unknown chart {chart!r}")

    def c(P):
        return xi * 0.5j * P[jj] / P[2] ** 2 + P[jj] / P[2] * z

    deriv = tuple(
        (lambda P, k=k: xi * 1j * ((1.0 if k == jj else 0.0) - (P[jj] / P[2] if k == 2 else 0.0)))
        for k in range(3)
    )
    return FirstOrderOperator(c, deriv, xi, m, "pi", f"X{j}(z={z:g})", singular=True)


def check_kijowski_domain(state: MomentumState, cells: int = SINGULAR_STRIP_CELLS, limit: float = SINGULAR_MASS_LIMIT):
    """Refuse states with more than ``limit`` of their norm within ``cells`` spacings of ``pi^3 = 0``."""
    g = state.grid
    dens = g.weights() * np.abs(state.psi) ** 2
    total = dens.sum()
    if total == 0:
        return
    if g.chart == "pi":
        near = np.abs(g.coords()[2]) < cells * g.h[2]
    else:
        p1, p2, s = g.coords()
        e_perp = np.sqrt(p1 * p1 + p2 * p2 + g.mass**2)
        # |pi^3| < cells * h  <=>  |s| < sqrt(E_perp^2 + (cells h)^2)
        near = np.abs(s) < np.sqrt(e_perp**2 + (cells * g.h[2]) ** 2)
    frac = float(dens[np.broadcast_to(near, dens.shape)].sum() / total)
    if frac > limit:
        raise SingularDomainError(f"state has {frac:.2e} of its norm next to pi^3 = 0")


def expectation(op: FirstOrderOperator, state: MomentumState, scheme: str = "fd8") -> complex:
    """``<psi|A psi> / <psi|psi>``."""
    return inner_product(state, op.apply(state, scheme)) / state.norm2()


def variance(op: FirstOrderOperator, state: MomentumState, scheme: str = "fd8") -> float:
    """``Re(<A^2> - <A>^2)`` with ``A^2`` applied sequentially."""
    a_psi = op.apply(state, scheme)
    mean = inner_product(state, a_psi) / state.norm2()
    second = inner_product(state, op.apply(a_psi, scheme)) / state.norm2()
    return float((second - mean * mean).real)


def nw_decomposition_residual(
    state: MomentumState, j: int, t: float = 0.0, tau: float = 0.0, ordering: str = "symmetric", scheme: str = "fd8"
) -> float:
    """``|| X_NW(t) psi - [Q^j - (Pi^j/Pi^0):Q^0 + (Pi^j/Pi^0) t] psi || / ||psi||``.

    Both sides are applied to the state separately.
    """
    xi, m = state.xi, state.grid.mass
    lhs = newton_wigner(j, t, xi, m).apply(state, scheme)
    g = _ratio(j, 0, m, xi)
    composite = q_phys(j, tau, xi, m) - sym_product(g, q0_phys(tau, xi, m), ordering) + g * t
    rhs = composite.apply(state, scheme)
    diff = lhs.with_psi(lhs.psi - rhs.psi)
    return float(np.sqrt(diff.norm2() / state.norm2()))


def boundary_defect(kind: str, phi: np.ndarray, psi: np.ndarray, s: np.ndarray) -> complex:
    """``<T phi, psi> - <phi, T psi>`` on one ``s`` line with flat measure.

    ``s`` holds nodes on ``(-inf, -e_perp] U [e_perp, inf)`` with both
    halves uniformly spaced, starting at the boundary point.  ``kind`` is
    ``"sign"`` for ``-i sign(s) d_s`` or ``"plain"`` for ``-i d_s``.
    Integrals use the trapezoid rule and derivatives second-order
    differences with one-sided ends.
    """
    if kind not in ("sign", "plain"):
        raise InvalidInputError(f"unknown kind {kind!r}")
    total = 0.0j
    for side in (s > 0, s < 0):
        x = s[side]
        order = np.argsort(x)
        x, f, g = x[order], phi[side][order], psi[side][order]
        sgn = 1.0 if (kind == "plain" or x[0] > 0) else -1.0
        tf = -1j * sgn * np.gradient(f, x, edge_order=2)
        tg = -1j * sgn * np.gradient(g, x, edge_order=2)
        total += np.trapezoid(np.conj(tf) * g - np.conj(f) * tg, x)
    return complex(total)


def boundary_defect_formula(kind: str, phi_pos, psi_pos, phi_neg, psi_neg) -> complex:
    """Closed form of :func:`boundary_defect` from the boundary values at ``s = +-e_perp``."""
    plus = np.conj(phi_pos) * psi_pos
    minus = np.conj(phi_neg) * psi_neg
    if kind == "sign":
        return complex(-1j * (plus + minus))
    return complex(-1j * (plus - minus))
