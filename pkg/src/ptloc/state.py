"""Momentum-space states on Cartesian and radial-harmonic grids.

All inner products use the invariant measure ``dmu(pi) = m d^3pi / E_pi``
(flat ``d^2pi ds`` in the Kijowski s-chart).  The Newton-Wigner transform
maps a momentum state to its NW position amplitude with an FFT.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline, make_interp_spline
from scipy.ndimage import map_coordinates
from scipy.special import erfc

from .errors import (
    ConfigError,
    IncompatibleStateError,
    InvalidInputError,
    ResolutionError,
    TruncationError,
)
from .specfun import channel_index, n_channels, sph_harm_table

__all__ = [
    "CartesianGrid",
    "MomentumState",
    "inner_product",
    "gaussian_state",
    "state_from_function",
    "s_chart_grid",
    "s_chart_from_function",
    "to_s_chart",
    "nw_transform",
    "nw_amplitude",
    "nw_density",
    "nw_state_from_profile",
    "nw_tail_decay",
    "RadialGrid",
    "RadialState",
    "radial_from_function",
    "radial_from_channels",
    "to_radial",
    "radial_evaluate",
    "save_state",
    "load_state",
]

NORMALIZED_TOL = 1e-6
TAIL_ERROR = 1e-8
ALIAS_CELLS = 3
ALIAS_LIMIT = 1e-6


def _tuple(value, ndim: int, name: str) -> tuple:
    if np.ndim(value) == 0:
        return (value,) * ndim
    value = tuple(value)
    if len(value) != ndim:
        raise InvalidInputError(f"{name} must have {ndim} entries")
    return value


@dataclass(frozen=True)
class CartesianGrid:
    """Uniform momentum grid.

    Axis ``k`` has ``n[k]`` nodes ``center[k] - pmax[k] + h[k] * (j + off)``
    with ``h = 2 pmax / n``.  ``kijowski_safe`` sets ``off = 1/2`` so that
    no node sits on a coordinate plane through the center (in particular
    ``pi^3 = 0``); otherwise ``off = 0`` and the center is a node.

    ``chart="s"`` reinterprets the last axis as Kijowski's
    ``s = sign(pi^3) E_pi``; states on such grids use the flat measure.
    """

    n: int | tuple = 64
    pmax: float | tuple = 6.0
    mass: float = 1.0
    ndim: int = 3
    kijowski_safe: bool = False
    center: float | tuple = 0.0
    chart: str = "pi"

    def __post_init__(self):
        if self.ndim not in (1, 2, 3):
            raise InvalidInputError("ndim must be 1, 2 or 3")
        n = tuple(int(v) for v in _tuple(self.n, self.ndim, "n"))
        pmax = tuple(float(v) for v in _tuple(self.pmax, self.ndim, "pmax"))
        center = tuple(float(v) for v in _tuple(self.center, self.ndim, "center"))
        if any(v < 8 for v in n):
            raise InvalidInputError("need at least 8 nodes per axis")
        if any(not (v > 0 and np.isfinite(v)) for v in pmax):
            raise InvalidInputError("pmax must be positive")
        if not (self.mass > 0 and np.isfinite(self.mass)):
            raise InvalidInputError("mass must be positive")
        if self.chart not in ("pi", "s"):
            raise InvalidInputError(f"unknown chart {self.chart!r}")
        if self.chart == "s" and self.ndim != 3:
            raise InvalidInputError("the s-chart needs a 3D grid")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "pmax", pmax)
        object.__setattr__(self, "center", center)
        if self.kijowski_safe and self.chart == "pi":
            a3 = self.axes[-1]
            if np.min(np.abs(a3)) < 0.25 * self.h[-1]:
                raise InvalidInputError("kijowski-safe grid has a node on the pi^3 = 0 plane")

    @property
    def shape(self) -> tuple:
        return self.n

    @property
    def h(self) -> tuple:
        return tuple(2.0 * p / k for p, k in zip(self.pmax, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def axes(self) -> list[np.ndarray]:
        off = 0.5 if self.kijowski_safe else 0.0
        return [c - p + hh * (np.arange(k) + off) for c, p, hh, k in zip(self.center, self.pmax, self.h, self.n)]

    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays (open mesh)."""
        return tuple(np.meshgrid(*self.axes, indexing="ij", sparse=True))

    def energy(self) -> np.ndarray:
        return self._energy

    @cached_property
    def _energy(self) -> np.ndarray:
        c = self.coords()
        if self.chart == "s":
            out = np.abs(c[-1]) * np.ones(self.shape)
        else:
            out = np.sqrt(sum(x * x for x in c) + self.mass**2) * np.ones(self.shape)
        out.setflags(write=False)
        return out

    def physical_mask(self) -> np.ndarray:
        """Nodes inside the physical domain (``|s| > E_perp`` on the s-chart)."""
        if self.chart == "pi":
            return np.ones(self.shape, dtype=bool)
        p1, p2, s = self.coords()
        return (s * s - p1 * p1 - p2 * p2 - self.mass**2) > 0

    def weights(self) -> np.ndarray:
        """Quadrature weights of the state measure at each node."""
        return self._weights

    @cached_property
    def _weights(self) -> np.ndarray:
        if self.chart == "s":
            out = self.cell_volume * self.physical_mask().astype(float)
        else:
            out = self.cell_volume * self.mass / self.energy()
        out.setflags(write=False)
        return out

    def describe(self) -> dict:
        return {
            "n": list(self.n),
            "pmax": list(self.pmax),
            "mass": self.mass,
            "ndim": self.ndim,
            "kijowski_safe": self.kijowski_safe,
            "center": list(self.center),
            "chart": self.chart,
        }


@dataclass(frozen=True)
class MomentumState:
    """Amplitudes ``psi_xi(pi)`` on a :class:`CartesianGrid`."""

    grid: CartesianGrid
    psi: np.ndarray
    xi: int = 1

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != self.grid.shape:
            raise InvalidInputError(f"amplitude shape {psi.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(psi)):
            raise InvalidInputError("amplitudes must be finite")
        if self.xi not in (1, -1):
            raise InvalidInputError("energy sign xi must be +1 or -1")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    def norm2(self) -> float:
        return float(np.sum(self.grid.weights() * np.abs(self.psi) ** 2))

    def norm(self) -> float:
        return math.sqrt(self.norm2())

    @property
    def normalized(self) -> bool:
        return abs(self.norm2() - 1.0) <= NORMALIZED_TOL

    def normalize(self) -> "MomentumState":
        n = self.norm()
        if n == 0:
            raise InvalidInputError("cannot normalize the zero state")
        return self.with_psi(self.psi / n)

    def with_psi(self, psi) -> "MomentumState":
        return MomentumState(self.grid, psi, self.xi)


def _check_compatible(a: MomentumState, b: MomentumState):
    if a.grid != b.grid:
        raise IncompatibleStateError("states live on different grids")
    if a.xi != b.xi:
        raise IncompatibleStateError("states have different energy signs")


def inner_product(phi: MomentumState, psi: MomentumState) -> complex:
    """``<phi|psi> = int dmu conj(phi) psi``."""
    _check_compatible(phi, psi)
    return complex(np.sum(phi.grid.weights() * np.conj(phi.psi) * psi.psi))


def state_from_function(
    grid: CartesianGrid, func: Callable[..., np.ndarray], xi: int = 1, normalize: bool = True
) -> MomentumState:
    """Sample ``func(p1, ..., pd)`` on the grid."""
    values = np.asarray(func(*grid.coords()), dtype=complex) * np.ones(grid.shape)
    state = MomentumState(grid, values, xi)
    return state.normalize() if normalize else state


def _gaussian_tail(grid: CartesianGrid, center, sigma: float) -> float:
    # flat-measure mass of |psi|^2 (std sigma per axis) outside the box
    inside = 1.0
    for c0, gc, p in zip(center, grid.center, grid.pmax):
        lo = (c0 - (gc - p)) / (sigma * math.sqrt(2))
        hi = ((gc + p) - c0) / (sigma * math.sqrt(2))
        inside *= 1.0 - 0.5 * erfc(lo) - 0.5 * erfc(hi)
    return 1.0 - inside


def gaussian_state(grid: CartesianGrid, center, sigma: float, xi: int = 1, phase_x=None) -> MomentumState:
    """``psi ~ exp(-|pi - center|^2 / (4 sigma^2))``, normalized under ``dmu``.

    ``phase_x`` multiplies by ``exp(-i pi . phase_x)``, which places the NW
    density around ``x = phase_x``.
    """
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    center = np.asarray(_tuple(center, grid.ndim, "center"), dtype=float)
    tail = _gaussian_tail(grid, center, sigma)
    if tail > TAIL_ERROR:
        raise ResolutionError(f"Gaussian tail mass {tail:.2e} outside the grid")
    if tail > 1e-12:
        warnings.warn(f"Gaussian tail mass {tail:.2e} clipped by the grid", RuntimeWarning, stacklevel=2)
    coords = grid.coords()
    r2 = sum((x - c) ** 2 for x, c in zip(coords, center))
    psi = np.exp(-r2 / (4.0 * sigma**2)).astype(complex)
    if phase_x is not None:
        shift = _tuple(phase_x, grid.ndim, "phase_x")
        psi = psi * np.exp(-1j * sum(x * a for x, a in zip(coords, shift)))
    return MomentumState(grid, psi * np.ones(grid.shape), xi).normalize()


# ---------------------------------------------------------------------------
# Kijowski s-chart


def s_chart_grid(n_perp: int, pmax_perp: float, n_s: int, smax: float, mass: float = 1.0, center_perp=(0.0, 0.0)):
    """Grid on ``(pi^1, pi^2, s)``; the s axis is symmetric and half-offset."""
    return CartesianGrid(
        n=(n_perp, n_perp, n_s),
        pmax=(pmax_perp, pmax_perp, smax),
        mass=mass,
        kijowski_safe=True,
        center=(center_perp[0], center_perp[1], 0.0),
        chart="s",
    )


def s_chart_from_function(grid: CartesianGrid, func, xi: int = 1) -> MomentumState:
    """``psi_z(pi_perp, s) = sqrt(m / |pi^3|) psi(pi)`` with ``pi^3 = sign(s) sqrt(s^2 - E_perp^2)``.

    ``func`` is the pi-chart amplitude, already normalized under ``dmu``;
    the flat s-chart norm then equals the pi-chart norm.
    """
    if grid.chart != "s":
        raise InvalidInputError("s_chart_from_function needs an s-chart grid")
    p1, p2, s = grid.coords()
    arg = s * s - p1 * p1 - p2 * p2 - grid.mass**2
    mask = arg > 0
    p3 = np.sign(s) * np.sqrt(np.where(mask, arg, 1.0))
    vals = np.sqrt(grid.mass / np.abs(p3)) * np.asarray(func(p1, p2, p3), dtype=complex)
    return MomentumState(grid, np.where(mask, vals, 0.0), xi)


def to_s_chart(state: MomentumState, grid: CartesianGrid) -> MomentumState:
    """Resample a pi-chart state onto an s-chart grid.

    Interpolates along ``pi^3`` with a quintic spline per transverse line;
    the transverse axes of both grids must coincide.
    """
    src = state.grid
    if src.chart != "pi" or grid.chart != "s":
        raise InvalidInputError("to_s_chart maps a pi-chart state to an s-chart grid")
    if src.n[:2] != grid.n[:2] or src.pmax[:2] != grid.pmax[:2] or src.center[:2] != grid.center[:2]:
        raise IncompatibleStateError("transverse axes of the two grids differ")
    if src.kijowski_safe != grid.kijowski_safe:
        raise IncompatibleStateError("transverse node offsets of the two grids differ")
    a3 = src.axes[2]
    p1, p2, s = grid.coords()
    arg = s * s - p1 * p1 - p2 * p2 - grid.mass**2
    mask = arg > 0
    p3 = np.sign(s) * np.sqrt(np.where(mask, arg, 1.0)) * np.ones(grid.shape)
    inside = mask & (p3 >= a3[0]) & (p3 <= a3[-1])
    out = np.zeros(grid.shape, dtype=complex)
    for i in range(grid.n[0]):
        for j in range(grid.n[1]):
            sel = inside[i, j]
            if np.any(sel):
                spl = make_interp_spline(a3, state.psi[i, j], k=5)
                out[i, j, sel] = spl(p3[i, j, sel]) * np.sqrt(grid.mass / np.abs(p3[i, j, sel]))
    return MomentumState(grid, out, state.xi)


# ---------------------------------------------------------------------------
# Newton-Wigner transform


def _position_axes(grid: CartesianGrid) -> list[np.ndarray]:
    out = []
    for k, hh in zip(grid.n, grid.h):
        dx = 2.0 * np.pi / (k * hh)
        out.append(dx * np.arange(-(k // 2), k - k // 2))
    return out


def nw_transform(state: MomentumState, t: float = 0.0):
    """NW amplitudes on the conjugate position grid.

    Returns ``(axes, amplitude)`` where ``amplitude[x] = <psi_NW^{x;xi}(t)|psi>
    = (2 pi)^{-d/2} int d^d pi sqrt(m/E) e^{-i xi E t} e^{i pi.x} psi(pi)``.
    The position grid has spacing ``2 pi / (N h)`` and is ordered from
    ``-N/2`` to ``N/2 - 1``; ``sum |A|^2 dx^d`` equals the state norm exactly.
    """
    grid = state.grid
    if grid.chart != "pi":
        raise InvalidInputError("the NW transform needs a pi-chart state")
    d = grid.ndim
    E = grid.energy()
    f = np.sqrt(grid.mass / E) * np.exp(-1j * state.xi * E * t) * state.psi
    xs = _position_axes(grid)
    first = [a[0] for a in grid.axes]
    amp = np.fft.fftshift(np.fft.ifftn(f)) * (np.prod(grid.n) * grid.cell_volume / (2.0 * np.pi) ** (d / 2))
    xmesh = np.meshgrid(*xs, indexing="ij", sparse=True)
    amp = amp * np.exp(1j * sum(a * x for a, x in zip(first, xmesh)))
    return xs, amp


def nw_density(state: MomentumState, t: float = 0.0):
    xs, amp = nw_transform(state, t)
    return xs, np.abs(amp) ** 2


def nw_amplitude(state: MomentumState, x, t: float = 0.0) -> complex:
    """NW amplitude at an arbitrary position ``x`` by direct quadrature."""
    grid = state.grid
    x = _tuple(x, grid.ndim, "x")
    E = grid.energy()
    phase = np.exp(1j * sum(c * xx for c, xx in zip(grid.coords(), x)))
    integrand = np.sqrt(grid.mass / E) * np.exp(-1j * state.xi * E * t) * phase * state.psi
    return complex(np.sum(integrand) * grid.cell_volume / (2.0 * np.pi) ** (grid.ndim / 2))


def nw_state_from_profile(
    grid: CartesianGrid, profile, t: float = 0.0, xi: int = 1, check_alias: bool = True
) -> MomentumState:
    """Inverse NW transform of a position profile.

    ``profile`` is either an array on the position grid of
    :func:`nw_transform` or a callable ``profile(x1, ..., xd)``.
    """
    if grid.chart != "pi":
        raise InvalidInputError("NW states live on the pi-chart")
    xs = _position_axes(grid)
    xmesh = np.meshgrid(*xs, indexing="ij", sparse=True)
    phi = profile(*xmesh) if callable(profile) else profile
    phi = np.asarray(phi, dtype=complex) * np.ones(grid.shape)
    if phi.shape != grid.shape:
        raise InvalidInputError("profile shape does not match the grid")
    first = [a[0] for a in grid.axes]
    g = np.fft.ifftshift(phi * np.exp(-1j * sum(a * x for a, x in zip(first, xmesh))))
    dx = np.prod([x[1] - x[0] for x in xs])
    E = grid.energy()
    psi = np.fft.fftn(g) * dx / (2.0 * np.pi) ** (grid.ndim / 2)
    psi = np.sqrt(E / grid.mass) * np.exp(1j * xi * E * t) * psi
    state = MomentumState(grid, psi, xi)
    if check_alias:
        frac = edge_fraction(state)
        if frac > ALIAS_LIMIT:
            raise ResolutionError(f"spectral mass {frac:.2e} within {ALIAS_CELLS} cells of the grid edge")
    return state


def edge_fraction(state: MomentumState, cells: int = ALIAS_CELLS) -> float:
    """Fraction of the state norm within ``cells`` nodes of the grid boundary."""
    dens = state.grid.weights() * np.abs(state.psi) ** 2
    total = dens.sum()
    if total == 0:
        return 0.0
    core = dens[tuple(slice(cells, k - cells) for k in state.grid.n)].sum()
    return float((total - core) / total)


def nw_tail_decay(state: MomentumState, t: float = 0.0, center=None) -> dict:
    """Diagnostic: log-linear fit of the shell-averaged NW density in ``|x|``.

    Returns the decay rate of ``log rho`` per unit radius over the outer
    half of the populated range, together with the fit residual.  This is a
    descriptive measure only.
    """
    xs, dens = nw_density(state, t)
    mesh = np.meshgrid(*xs, indexing="ij", sparse=True)
    c = _tuple(0.0 if center is None else center, state.grid.ndim, "center")
    rr = np.sqrt(sum((x - c0) ** 2 for x, c0 in zip(mesh, c))) * np.ones(dens.shape)
    bins = np.linspace(0, rr.max(), 40)
    idx = np.digitize(rr.ravel(), bins)
    prof = np.array([dens.ravel()[idx == k].mean() if np.any(idx == k) else 0.0 for k in range(1, len(bins))])
    radius = 0.5 * (bins[1:] + bins[:-1])
    keep = prof > prof.max() * 1e-300
    radius, prof = radius[keep], prof[keep]
    half = radius > 0.5 * radius.max()
    if half.sum() < 3:
        return {"rate": float("nan"), "residual": float("nan")}
    coef, res, *_ = np.polyfit(radius[half], np.log(prof[half]), 1, full=True)
    return {"rate": float(-coef[0]), "residual": float(res[0]) if len(res) else 0.0}


# ---------------------------------------------------------------------------
# radial-harmonic representation


@dataclass(frozen=True)
class RadialGrid:
    """Log-spaced radial nodes with a Gauss-Legendre x uniform angular rule.

    The radial rule is the trapezoid rule in ``u = ln r``, so
    ``int r^2 dr f = sum_i w_i f(r_i)`` with ``w_i = du r_i^3``.
    """

    n_r: int = 2048
    r_min: float = 1e-5
    r_max: float = 50.0
    l_max: int = 8
    mass: float = 1.0
    n_theta: int | None = None
    n_phi: int | None = None

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise InvalidInputError("need 0 < r_min < r_max")
        if self.n_r < 8:
            raise InvalidInputError("need at least 8 radial nodes")
        if self.l_max < 0:
            raise InvalidInputError("l_max must be non-negative")
        if self.n_theta is None:
            object.__setattr__(self, "n_theta", 2 * self.l_max + 4)
        if self.n_phi is None:
            object.__setattr__(self, "n_phi", 4 * self.l_max + 8)

    @property
    def u(self) -> np.ndarray:
        return np.linspace(math.log(self.r_min), math.log(self.r_max), self.n_r)

    @property
    def du(self) -> float:
        return (math.log(self.r_max) - math.log(self.r_min)) / (self.n_r - 1)

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.u)

    @property
    def energy(self) -> np.ndarray:
        return np.sqrt(self.r**2 + self.mass**2)

    @property
    def v(self) -> np.ndarray:
        """``v = ln(r / (E + m))``; the time kernels are plane waves in ``v``."""
        return np.log(self.r / (self.energy + self.mass))

    @property
    def radial_weights(self) -> np.ndarray:
        w = np.full(self.n_r, self.du) * self.r**3
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @property
    def measure_weights(self) -> np.ndarray:
        """Weights of ``int r^2 dr (m/E)``."""
        return self.radial_weights * self.mass / self.energy

    def angular_rule(self):
        x, wx = leggauss(self.n_theta)
        theta = np.arccos(x)
        phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        w = np.outer(wx, np.full(self.n_phi, 2.0 * np.pi / self.n_phi))
        return theta, phi, w

    @property
    def n_channels(self) -> int:
        return n_channels(self.l_max)


@dataclass(frozen=True)
class RadialState:
    """Channel amplitudes ``psi_{l m}(r_i)``, shape ``(n_channels, n_r)``."""

    grid: RadialGrid
    coeffs: np.ndarray
    xi: int = 1
    reconstruction_error: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n_channels, self.grid.n_r):
            raise InvalidInputError("radial coefficients have the wrong shape")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("radial coefficients must be finite")
        if self.xi not in (1, -1):
            raise InvalidInputError("energy sign xi must be +1 or -1")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def channel(self, l: int, m: int) -> np.ndarray:
        return self.coeffs[channel_index(l, m)]

    def channel_norms2(self) -> np.ndarray:
        return np.abs(self.coeffs) ** 2 @ self.grid.measure_weights

    def norm2(self) -> float:
        return float(self.channel_norms2().sum())

    def normalize(self) -> "RadialState":
        n = math.sqrt(self.norm2())
        return RadialState(self.grid, self.coeffs / n, self.xi, self.reconstruction_error, self.meta)


def _project(grid: RadialGrid, samples: np.ndarray, theta, phi, w) -> tuple[np.ndarray, float]:
    # samples: (n_r, n_theta, n_phi)
    ylm = sph_harm_table(grid.l_max, theta[:, None], phi[None, :])
    coeffs = np.einsum("cab,rab->cr", np.conj(ylm) * w, samples)
    full = np.einsum("rab,rab,ab->r", np.conj(samples), samples, w).real
    mw = grid.measure_weights
    total = float(full @ mw)
    kept = float((np.abs(coeffs) ** 2 @ mw).sum())
    err = math.sqrt(max(total - kept, 0.0) / total) if total > 0 else 0.0
    return coeffs, err


def radial_from_function(
    grid: RadialGrid, func, xi: int = 1, normalize: bool = True, max_error: float | None = 1e-6
) -> RadialState:
    """Project ``func(r, theta, phi)`` onto the ``l <= l_max`` channels."""
    theta, phi, w = grid.angular_rule()
    r = grid.r[:, None, None]
    samples = np.asarray(func(r, theta[None, :, None], phi[None, None, :]), dtype=complex)
    samples = samples * np.ones((grid.n_r, grid.n_theta, grid.n_phi))
    coeffs, err = _project(grid, samples, theta, phi, w)
    if max_error is not None and err > max_error:
        raise TruncationError(f"angular truncation error {err:.2e} exceeds {max_error:.1e}")
    state = RadialState(grid, coeffs, xi, err)
    return state.normalize() if normalize else state


def radial_from_channels(grid: RadialGrid, profiles: dict, xi: int = 1, normalize: bool = True) -> RadialState:
    """Build a state from ``{(l, m): g(r)}`` radial profiles."""
    coeffs = np.zeros((grid.n_channels, grid.n_r), dtype=complex)
    for (l, m), g in profiles.items():
        coeffs[channel_index(l, m)] = g(grid.r)
    state = RadialState(grid, coeffs, xi)
    return state.normalize() if normalize else state


def to_radial(state: MomentumState, grid: RadialGrid, max_error: float | None = 1e-6, order: int = 5) -> RadialState:
    """Decompose a Cartesian state into radial-harmonic channels.

    Samples are interpolated with order-``order`` splines; nodes outside the
    Cartesian box are set to zero.
    """
    cg = state.grid
    if cg.chart != "pi" or cg.ndim != 3:
        raise InvalidInputError("to_radial needs a 3D pi-chart state")
    if cg.mass != grid.mass:
        raise IncompatibleStateError("grids have different masses")
    theta, phi, w = grid.angular_rule()
    r = grid.r[:, None, None]
    st, ct = np.sin(theta)[None, :, None], np.cos(theta)[None, :, None]
    pts = [r * st * np.cos(phi)[None, None, :], r * st * np.sin(phi)[None, None, :], r * ct]
    idx = []
    for k, p in enumerate(pts):
        a0 = cg.axes[k][0]
        idx.append(((p - a0) / cg.h[k]) * np.ones((grid.n_r, grid.n_theta, grid.n_phi)))
    re = map_coordinates(state.psi.real, idx, order=order, mode="constant", cval=0.0, prefilter=True)
    im = map_coordinates(state.psi.imag, idx, order=order, mode="constant", cval=0.0, prefilter=True)
    samples = re + 1j * im
    coeffs, err = _project(grid, samples, theta, phi, w)
    if max_error is not None and err > max_error:
        raise TruncationError(f"angular truncation error {err:.2e} exceeds {max_error:.1e}")
    return RadialState(grid, coeffs, state.xi, err)


def radial_evaluate(state: RadialState, p1, p2, p3) -> np.ndarray:
    """Evaluate ``sum_{lm} psi_{lm}(r) Y^{lm}`` at Cartesian points (spline in ``ln r``)."""
    p1, p2, p3 = np.broadcast_arrays(*(np.asarray(a, float) for a in (p1, p2, p3)))
    r = np.sqrt(p1**2 + p2**2 + p3**2)
    theta = np.arccos(np.clip(p3 / np.where(r > 0, r, 1.0), -1, 1))
    phi = np.arctan2(p2, p1)
    g = state.grid
    u = np.log(np.clip(r, g.r_min, g.r_max))
    inside = (r >= g.r_min) & (r <= g.r_max)
    spl = CubicSpline(g.u, state.coeffs, axis=1)
    vals = spl(u)  # (n_ch, ...)
    ylm = sph_harm_table(g.l_max, theta, phi)
    return np.where(inside, np.sum(vals * ylm, axis=0), 0.0)


# ---------------------------------------------------------------------------
# binary state I/O

_MAGIC = b"PTLSTATE"
_VERSION = 1


def _atomic_write(path: str, data: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_state(state: MomentumState, path: str, extra: dict | None = None) -> dict:
    """Write ``path`` (binary) and ``path + '.json'`` (descriptor).

    ``extra`` entries are merged into the descriptor.

    Layout: magic ``PTLSTATE``; little-endian ``uint32`` version, ndim,
    chart flag, kijowski flag; ``int32`` xi; ``uint32`` n per axis; doubles
    mass, pmax per axis, center per axis; then the amplitudes as
    interleaved ``re, im`` doubles in C order.
    """
    g = state.grid
    header = _MAGIC + struct.pack(
        "<IIIIi", _VERSION, g.ndim, 1 if g.chart == "s" else 0, int(g.kijowski_safe), state.xi
    )
    header += struct.pack(f"<{g.ndim}I", *g.n)
    header += struct.pack(f"<{1 + 2 * g.ndim}d", g.mass, *g.pmax, *g.center)
    payload = np.ascontiguousarray(state.psi, dtype="<c16").tobytes()
    blob = header + payload
    desc = {
        "format": "PTLSTATE",
        "version": _VERSION,
        "grid": g.describe(),
        "xi": state.xi,
        "header_bytes": len(header),
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    if extra:
        desc.update(extra)
    _atomic_write(path, blob)
    _atomic_write(path + ".json", (json.dumps(desc, indent=2, sort_keys=True) + "\n").encode())
    return desc


def load_state(path: str) -> MomentumState:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _MAGIC:
        raise ConfigError(f"{path} is not a state file")
    off = 8
    version, ndim, chart, kij, xi = struct.unpack_from("<IIIIi", blob, off)
    off += struct.calcsize("<IIIIi")
    if version != _VERSION:
        raise ConfigError(f"unsupported state file version {version}")
    n = struct.unpack_from(f"<{ndim}I", blob, off)
    off += 4 * ndim
    vals = struct.unpack_from(f"<{1 + 2 * ndim}d", blob, off)
    off += 8 * (1 + 2 * ndim)
    grid = CartesianGrid(
        n=n,
        pmax=vals[1 : 1 + ndim],
        mass=vals[0],
        ndim=ndim,
        kijowski_safe=bool(kij),
        center=vals[1 + ndim :],
        chart="s" if chart else "pi",
    )
    expected = int(np.prod(n)) * 16
    if len(blob) - off != expected:
        raise ConfigError(f"{path}: payload has {len(blob) - off} bytes, expected {expected}")
    psi = np.frombuffer(blob, dtype="<c16", offset=off).reshape(n)
    sidecar = path + ".json"
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            desc = json.load(fh)
        if desc.get("sha256") != hashlib.sha256(blob).hexdigest():
            raise ConfigError(f"{path}: checksum does not match its descriptor")
    return MomentumState(grid, psi.astype(complex), xi)
