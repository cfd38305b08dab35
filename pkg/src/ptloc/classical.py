"""Classical proper-time four-position variables on extended phase space.

Phase-space points carry unconstrained ``(x^mu, p^mu)`` with the mass shell
``p.p + m^2 = 0`` imposed only as a predicate.  The metric is
``diag(-1, 1, 1, 1)``; ``p`` is stored with upper indices and the canonical
pairs are ``(x^mu, p_mu)``, so ``{x^mu, p^nu} = eta^{mu nu}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DegenerateObserverError,
    DegenerateSurfaceError,
    InvalidInputError,
    NumericalDomainError,
    SurfaceMissError,
)

__all__ = [
    "ETA",
    "minkowski_dot",
    "PhasePoint",
    "ClassicalObservable",
    "SurfaceFunction",
    "angular_momentum",
    "four_position",
    "restricted_instantaneous",
    "poisson_bracket",
    "restrict_classical",
    "position_observable",
    "momentum_observable",
    "restricted_observable",
    "random_on_shell_point",
    "bracket_residuals",
]

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
_SIG = np.diag(ETA)

DEFAULT_PB_STEP = 1e-4
DEFAULT_TAU_INTERVAL = (-1.0e6, 1.0e6)
DEGENERATE_SLOPE = 1e-9


def minkowski_dot(a, b) -> float:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return float(-a[0] * b[0] + a[1:] @ b[1:])


@dataclass(frozen=True)
class PhasePoint:
    """Point ``(x^mu, p^mu)`` of the 8D extended phase space with rest mass ``m``."""

    x: np.ndarray
    p: np.ndarray
    m: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(4)
        p = np.asarray(self.p, dtype=float).reshape(4)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        if not (np.isfinite(self.m) and self.m > 0):
            raise InvalidInputError(f"mass must be positive, got {self.m}")

    @property
    def p_lower(self) -> np.ndarray:
        return _SIG * self.p

    def shell_defect(self) -> float:
        """``p.p + m^2``; zero on the mass shell."""
        return minkowski_dot(self.p, self.p) + self.m**2

    def on_shell(self, tol: float = 1e-10) -> bool:
        return abs(self.shell_defect()) <= tol * max(1.0, self.m**2)

    def as_vector(self) -> np.ndarray:
        """Canonical coordinates ``(x^0..x^3, p_0..p_3)``."""
        return np.concatenate([self.x, self.p_lower])

    @classmethod
    def from_vector(cls, v, m: float) -> "PhasePoint":
        v = np.asarray(v, float)
        return cls(v[:4], _SIG * v[4:], m)


Evaluator = Callable[[PhasePoint, float], float]


@dataclass(frozen=True)
class ClassicalObservable:
    """Smooth real function ``A(point, tau)`` on extended phase space."""

    func: Evaluator
    label: str = "A"

    def __call__(self, point: PhasePoint, tau: float = 0.0) -> float:
        return float(self.func(point, tau))


@dataclass(frozen=True)
class SurfaceFunction:
    """Observation surface ``f(Q(tau)) = 0``.

    ``linear`` optionally returns ``(f(0), df/dtau)`` for surfaces that are
    affine in ``tau``; :func:`restrict_classical` then solves in closed form.
    """

    func: Evaluator
    label: str = "f"
    linear: Callable[[PhasePoint], tuple[float, float]] | None = field(default=None, compare=False)

    def __call__(self, point: PhasePoint, tau: float) -> float:
        return float(self.func(point, tau))

    @classmethod
    def instantaneous(cls, u, t: float) -> "SurfaceFunction":
        """Hypersurface ``Q.u + t = 0`` of an inertial observer with four-velocity ``u``."""
        u = _check_observer(u)

        def func(point, tau):
            return minkowski_dot(four_position(point, tau), u) + t

        def linear(point):
            return (minkowski_dot(four_position(point, 0.0), u) + t, minkowski_dot(point.p, u) / point.m)

        return cls(func, f"instantaneous(t={t:g})", linear)

    @classmethod
    def fixed_z(cls, z: float) -> "SurfaceFunction":
        """Detector plane ``Q^3(tau) = z``."""

        def func(point, tau):
            return four_position(point, tau)[3] - z

        def linear(point):
            return four_position(point, 0.0)[3] - z, point.p[3] / point.m

        return cls(func, f"fixed_z(z={z:g})", linear)

    def generic(self) -> "SurfaceFunction":
        """Same surface with the closed-form shortcut removed."""
        return SurfaceFunction(self.func, self.label, None)


def _check_observer(u, tol: float = 1e-10) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(4)
    if abs(minkowski_dot(u, u) + 1.0) > tol or u[0] <= 0:
        raise InvalidInputError("observer four-velocity must be future-pointing with u.u = -1")
    return u


def angular_momentum(point: PhasePoint) -> np.ndarray:
    """``J^{mu nu} = x^mu p^nu - x^nu p^mu``."""
    return np.outer(point.x, point.p) - np.outer(point.p, point.x)


def four_position(point: PhasePoint, tau: float) -> np.ndarray:
    """``Q^mu(tau) = -J^{mu nu} p_nu / m^2 + p^mu tau / m``.

    Off shell this differs from ``x + p (x.p)/m^2 + p tau/m`` by a term
    proportional to ``p.p + m^2``; the J-form is evaluated as written.
    """
    m = point.m
    return -angular_momentum(point) @ point.p_lower / m**2 + point.p * tau / m


def restricted_instantaneous(point: PhasePoint, u, t: float) -> np.ndarray:
    """``Q~(t) = Q(0) - p [t + Q(0).u] / (u.p)``; satisfies ``Q~.u = -t``."""
    u = _check_observer(u)
    up = minkowski_dot(u, point.p)
    if abs(up) < DEGENERATE_SLOPE:
        raise DegenerateObserverError("u.p vanishes; the observer never sees the worldline")
    q0 = four_position(point, 0.0)
    return q0 - point.p * (t + minkowski_dot(q0, u)) / up


def position_observable(mu: int) -> ClassicalObservable:
    return ClassicalObservable(lambda pt, tau: four_position(pt, tau)[mu], f"Q{mu}")


def momentum_observable(mu: int) -> ClassicalObservable:
    """Contravariant ``Pi^mu = p^mu``."""
    return ClassicalObservable(lambda pt, tau: pt.p[mu], f"P{mu}")


def restricted_observable(mu: int, u, t: float) -> ClassicalObservable:
    u = _check_observer(u)
    return ClassicalObservable(lambda pt, tau: restricted_instantaneous(pt, u, t)[mu], f"Qt{mu}")


def _gradient(f: ClassicalObservable, point: PhasePoint, tau: float, h: float) -> np.ndarray:
    v0 = point.as_vector()
    grad = np.empty(8)
    for k in range(8):
        e = np.zeros(8)
        e[k] = 1.0
        est = []
        for step in (h, h / 2):
            fp = f(PhasePoint.from_vector(v0 + step * e, point.m), tau)
            fm = f(PhasePoint.from_vector(v0 - step * e, point.m), tau)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericalDomainError(f"non-finite value of {f.label} in difference stencil")
            est.append((fp - fm) / (2 * step))
        grad[k] = (4.0 * est[1] - est[0]) / 3.0
    return grad


def poisson_bracket(
    f: ClassicalObservable,
    g: ClassicalObservable,
    point: PhasePoint,
    tau: float = 0.0,
    h: float = DEFAULT_PB_STEP,
) -> float:
    """``{f, g} = sum_mu df/dx^mu dg/dp_mu - df/dp_mu dg/dx^mu``.

    Central differences at steps ``h`` and ``h/2`` combined by Richardson
    extrapolation, so the truncation error is ``O(h^4)``.
    """
    if not h > 0:
        raise InvalidInputError("step h must be positive")
    df = _gradient(f, point, tau, h)
    dg = _gradient(g, point, tau, h)
    return float(df[:4] @ dg[4:] - df[4:] @ dg[:4])


def _scan_nodes(lo: float, hi: float, n: int) -> np.ndarray:
    # dense near zero, geometric towards the ends of a wide interval
    span = max(abs(lo), abs(hi))
    mags = np.geomspace(1e-6, span, n)
    nodes = np.concatenate([-mags[::-1], [0.0], mags])
    return nodes[(nodes >= lo) & (nodes <= hi)]


def find_surface_roots(
    f: SurfaceFunction,
    point: PhasePoint,
    tau_interval: tuple[float, float] = DEFAULT_TAU_INTERVAL,
    n_scan: int = 600,
    xtol: float = 1e-12,
) -> list[float]:
    """Simple roots of ``tau -> f(point, tau)`` inside ``tau_interval``."""
    lo, hi = tau_interval
    if f.linear is not None:
        f0, slope = f.linear(point)
        if abs(slope) < DEGENERATE_SLOPE:
            raise DegenerateSurfaceError(f"|df/dtau| = {abs(slope):.3g} on {f.label}")
        root = -f0 / slope
        if not lo <= root <= hi:
            raise SurfaceMissError(f"root of {f.label} at tau={root:.6g} outside search interval")
        return [root]

    nodes = _scan_nodes(lo, hi, n_scan)
    vals = np.array([f(point, s) for s in nodes])
    if not np.all(np.isfinite(vals)):
        raise NumericalDomainError(f"non-finite surface value for {f.label}")
    roots: list[float] = []
    for a, b, fa, fb in zip(nodes[:-1], nodes[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(float(a))
        elif fa * fb < 0:
            roots.append(brentq(lambda s: f(point, s), a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))
    if vals[-1] == 0.0:
        roots.append(float(nodes[-1]))
    if not roots:
        raise SurfaceMissError(f"no root of {f.label} in tau interval {tau_interval}")
    for r in roots:
        d = 1e-6 * max(1.0, abs(r))
        slope = (f(point, r + d) - f(point, r - d)) / (2 * d)
        if abs(slope) < DEGENERATE_SLOPE:
            raise DegenerateSurfaceError(f"non-simple root of {f.label} at tau={r:.6g}")
    return roots


def restrict_classical(
    A: ClassicalObservable,
    f: SurfaceFunction,
    point: PhasePoint,
    tau_interval: tuple[float, float] = DEFAULT_TAU_INTERVAL,
) -> float:
    """Value of ``int dtau |df/dtau| delta(f) A(tau)``, i.e. ``sum_r A(tau_r)`` over the roots."""
    return float(sum(A(point, r) for r in find_surface_roots(f, point, tau_interval)))


def random_on_shell_point(rng: np.random.Generator, m: float = 1.0, scale: float = 1.0) -> PhasePoint:
    x = rng.uniform(-scale, scale, 4)
    pvec = rng.uniform(-scale, scale, 3)
    p0 = np.sqrt(pvec @ pvec + m * m)
    return PhasePoint(x, np.concatenate([[p0], pvec]), m)


def bracket_residuals(point: PhasePoint, u, t: float, h: float = DEFAULT_PB_STEP) -> dict[str, float]:
    """Max residuals of the three restricted-variable bracket relations.

    ``qq``: ``{Q~^mu, Q~^nu}``; ``qp``: ``{Q~^mu, Pi^nu} - (eta^{mu nu} - Pi^mu u^nu/(u.Pi))``;
    ``jq``: ``{J~^{mu nu}, Q~^s}`` against ``{Q~^s, Pi^mu} Q~^nu - {Q~^s, Pi^nu} Q~^mu``
    with the right-hand brackets taken from the ``qp`` closed form.
    """
    u = _check_observer(u)
    qt = [restricted_observable(mu, u, t) for mu in range(4)]
    pi = [momentum_observable(mu) for mu in range(4)]
    up = minkowski_dot(u, point.p)
    qval = restricted_instantaneous(point, u, t)
    expected_qp = ETA - np.outer(point.p, u) / up

    r_a = max(abs(poisson_bracket(qt[a], qt[b], point, h=h)) for a in range(4) for b in range(a + 1, 4))
    qp = np.array([[poisson_bracket(qt[a], pi[b], point, h=h) for b in range(4)] for a in range(4)])
    r_b = float(np.abs(qp - expected_qp).max())

    r_c = 0.0
    for a in range(4):
        for b in range(a + 1, 4):
            jt = ClassicalObservable(
                lambda pt, tau, a=a, b=b: (lambda q: q[a] * pt.p[b] - q[b] * pt.p[a])(
                    restricted_instantaneous(pt, u, t)
                ),
                f"Jt{a}{b}",
            )
            for s in range(4):
                lhs = poisson_bracket(jt, qt[s], point, h=h)
                rhs = expected_qp[s, a] * qval[b] - expected_qp[s, b] * qval[a]
                r_c = max(r_c, abs(lhs - rhs))
    return {"qq": float(r_a), "qp": r_b, "jq": float(r_c)}
