"""Time and position POVMs of the proper-time four-position.

Time kernels (radial-harmonic channels)::

    psi^{t,l,m}(pi) = sqrt(m/2pi) Y^{lm} r^{-3/2} (r/m)^{i m tau} exp(-i xi m t v),
    v = ln(r / (E_r + m)),

so that with ``dv = (m / (r E)) dr`` the overlap with a state is a Fourier
integral in ``v``.  Position kernels use conical functions of
``cosh omega`` and the coordinate maps ``(nu, omega, phi)``, which are
supplied at run time and validated by the completeness of the POVM.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates
from scipy.special import roots_legendre

from .errors import CompletenessError, InvalidInputError, MapValidationError, ResolutionError
from .operators import newton_wigner, q_phys
from .specfun import ConicalOrder, channel_index, conical_p, log_gamma, sph_harm_table
from .state import MomentumState, RadialGrid, RadialState, _project

__all__ = [
    "HeavyTailWarning",
    "TimePovmKernel",
    "time_kernel",
    "time_overlap",
    "time_overlaps",
    "default_t_grid",
    "time_distribution",
    "time_uncertainty",
    "kernel_overlap",
    "eq16_reconstruction",
    "reconstruction_scan",
    "CoordinateMaps",
    "flow_maps",
    "PositionPovmKernel",
    "lam_from_Lambda",
    "Lambda_from_lam",
    "position_overlap",
    "position_distribution",
]

COMPLETENESS_LIMIT = 1e-2
MAP_DEFECT_LIMIT = 5e-2
RESOLUTION_PHASE = math.pi / 4


class HeavyTailWarning(RuntimeWarning):
    """The time distribution does not decay inside the resolvable range."""


# ---------------------------------------------------------------------------
# time POVM


@dataclass(frozen=True)
class TimePovmKernel:
    t: float
    l: int
    m_z: int
    tau: float = 0.0
    xi: int = 1
    mass: float = 1.0

    def __call__(self, p1, p2, p3):
        return time_kernel(self, p1, p2, p3)


def time_kernel(k: TimePovmKernel, p1, p2, p3):
    """Evaluate the time kernel at Cartesian momenta."""
    p1, p2, p3 = np.broadcast_arrays(*(np.asarray(a, float) for a in (p1, p2, p3)))
    r = np.sqrt(p1**2 + p2**2 + p3**2)
    m = k.mass
    E = np.sqrt(r * r + m * m)
    theta = np.arccos(np.clip(p3 / r, -1, 1))
    phi = np.arctan2(p2, p1)
    ylm = sph_harm_table(k.l, theta, phi)[channel_index(k.l, k.m_z)]
    v = np.log(r / (E + m))
    phase = np.exp(1j * m * k.tau * np.log(r / m) - 1j * k.xi * m * k.t * v)
    return math.sqrt(m / (2 * math.pi)) * ylm * r**-1.5 * phase


def _check_resolution(grid: RadialGrid, t):
    dv = float(np.max(np.diff(grid.v)))
    tmax = float(np.max(np.abs(t))) if np.size(t) else 0.0
    if grid.mass * tmax * dv > RESOLUTION_PHASE:
        raise ResolutionError(
            f"|m t| dv = {grid.mass * tmax * dv:.3f} exceeds pi/4; refine the radial grid or shrink the t range"
        )


def _radial_amplitude(state: RadialState, tau: float) -> np.ndarray:
    # integrand of the overlap without the t phase, per channel
    g = state.grid
    m = g.mass
    w = g.measure_weights * math.sqrt(m / (2 * math.pi)) * g.r**-1.5
    w = w * np.exp(-1j * m * tau * np.log(g.r / m))
    return state.coeffs * w[None, :]


def time_overlaps(state: RadialState, t, tau: float = 0.0) -> np.ndarray:
    """Overlaps ``<psi^{t,l,m}|psi>`` for all channels, shape ``(n_channels, len(t))``."""
    t = np.atleast_1d(np.asarray(t, float))
    g = state.grid
    _check_resolution(g, t)
    amp = _radial_amplitude(state, tau)
    phases = np.exp(1j * state.xi * g.mass * np.outer(g.v, t))
    return amp @ phases


def time_overlap(state: RadialState, t, l: int, m_z: int, tau: float = 0.0):
    """``c(t) = int r^2 dr (m/E) conj(kernel) psi_{l m}(r)`` on the log grid."""
    t_arr = np.atleast_1d(np.asarray(t, float))
    g = state.grid
    _check_resolution(g, t_arr)
    amp = _radial_amplitude(state, tau)[channel_index(l, m_z)]
    out = amp @ np.exp(1j * state.xi * g.mass * np.outer(g.v, t_arr))
    return out if np.ndim(t) else complex(out[0])


def kernel_overlap(grid: RadialGrid, t1: float, t2: float, xi: int = 1, eps: float = 0.0) -> complex:
    """``<psi^{t1,l,m}|psi^{t2,l,m}>`` regularized by ``exp(-eps |v|)``.

    The angular parts are orthonormal, and ``r^2 dr (m/E) r^{-3} = dv``, so
    this is ``(m/2pi) int_{-inf}^0 dv exp(i xi m (t1 - t2) v - eps |v|)
    = (m/2pi) / (eps + i xi m (t1 - t2))``.  The kernels are not orthogonal.
    """
    m = grid.mass
    v = grid.v
    w = grid.radial_weights * (m / grid.energy) * grid.r**-3.0
    integrand = (m / (2 * math.pi)) * np.exp(1j * xi * m * (t1 - t2) * v - eps * np.abs(v))
    return complex(np.sum(w * integrand))


def _state_v_width(state: RadialState, rel: float = 1e-14) -> float:
    g = state.grid
    dens = (np.abs(state.coeffs) ** 2).sum(axis=0) * g.measure_weights
    keep = dens > rel * dens.max()
    v = g.v[keep]
    return float(v.max() - v.min()) if v.size > 1 else float(g.v[-1] - g.v[0])


def default_t_grid(state: RadialState, t_max: float | None = None, dt: float | None = None) -> np.ndarray:
    """Uniform t grid on the resolvable range ``|t| <= pi / (4 m dv_max)``."""
    g = state.grid
    t_res = RESOLUTION_PHASE / (g.mass * float(np.max(np.diff(g.v))))
    t_max = t_res if t_max is None else min(t_max, t_res)
    if dt is None:
        width = _state_v_width(state)
        dt = min(0.05, math.pi / (2.0 * g.mass * max(width, 1e-12)))
    n = int(math.floor(t_max / dt))
    return dt * np.arange(-n, n + 1)


@dataclass
class TimeDistribution:
    t: np.ndarray
    density: np.ndarray
    norm: float
    defect: float
    meta: dict = field(default_factory=dict)


def time_distribution(
    state: RadialState,
    tau: float = 0.0,
    t_grid=None,
    l_max: int | None = None,
    limit: float | None = COMPLETENESS_LIMIT,
) -> TimeDistribution:
    """``p(t) = sum_{l <= l_max, |m| <= l} |c_{lm}(t)|^2`` and its completeness defect.

    The defect is ``int p dt / ||psi||^2 - 1`` by the trapezoid rule.
    """
    g = state.grid
    t = default_t_grid(state) if t_grid is None else np.asarray(t_grid, float)
    c = time_overlaps(state, t, tau)
    if l_max is not None:
        c = c[: (l_max + 1) ** 2]
    p = np.sum(np.abs(c) ** 2, axis=0)
    norm = float(np.trapezoid(p, t))
    defect = norm / state.norm2() - 1.0
    meta = {
        "n_r": g.n_r,
        "l_max": g.l_max if l_max is None else l_max,
        "t_min": float(t[0]),
        "t_max": float(t[-1]),
        "dt": float(t[1] - t[0]) if t.size > 1 else 0.0,
        "tau": tau,
        "defect": defect,
    }
    if limit is not None and abs(defect) > limit:
        raise CompletenessError(f"time POVM normalization defect {defect:.3e} exceeds {limit:g}")
    return TimeDistribution(t, p, norm, defect, meta)


def time_uncertainty(state: RadialState, tau: float = 0.0, t_grid=None, coverage: float = 1e-4):
    """Mean detection time and spread ``Delta t`` of the time POVM.

    Warns with :class:`HeavyTailWarning` when less than ``1 - coverage`` of
    the mass falls inside the t grid; the moments are then partial.
    """
    dist = time_distribution(state, tau, t_grid, limit=None)
    t, p = dist.t, dist.density
    mass = np.trapezoid(p, t)
    if 1.0 - mass / state.norm2() > coverage:
        warnings.warn(
            f"only {mass / state.norm2():.6f} of the time distribution inside the grid; moments are partial",
            HeavyTailWarning,
            stacklevel=2,
        )
    mean = float(np.trapezoid(t * p, t) / mass)
    var = float(np.trapezoid((t - mean) ** 2 * p, t) / mass)
    return mean, math.sqrt(max(var, 0.0))


# ---------------------------------------------------------------------------
# time-kernel reconstruction of the NW operator


def _cartesian_samples(state: MomentumState, values: np.ndarray, grid: RadialGrid, order: int = 5):
    cg = state.grid
    theta, phi, w = grid.angular_rule()
    r = grid.r[:, None, None]
    st, ct = np.sin(theta)[None, :, None], np.cos(theta)[None, :, None]
    pts = [r * st * np.cos(phi)[None, None, :], r * st * np.sin(phi)[None, None, :], r * ct * np.ones_like(phi)]
    shape = (grid.n_r, grid.n_theta, grid.n_phi)
    idx = [((p - cg.axes[k][0]) / cg.h[k]) * np.ones(shape) for k, p in enumerate(pts)]
    re = map_coordinates(values.real, idx, order=order, mode="constant", cval=0.0)
    im = map_coordinates(values.imag, idx, order=order, mode="constant", cval=0.0)
    return re + 1j * im, pts


def eq16_reconstruction(
    state: MomentumState,
    j: int,
    t: float,
    l_max: int,
    t_range: float,
    radial: RadialGrid,
    dt: float | None = None,
    channel_report: bool = False,
) -> dict:
    """Check ``X_NW(t) = Q^j(0) - sum_lm int dt' t' (Pi^j/Pi^0) : E(t' + t)``.

    ``E(t)`` is the time POVM density at ``tau = 0`` truncated to
    ``l <= l_max`` and ``|t'| <= t_range``; ``:`` is the symmetric product
    ``(g M + M g)/2`` with ``g = pi^j / E``.  The target
    ``Q^j(0) psi - X_NW(t) psi`` is formed on the Cartesian grid and
    sampled on the radial-angular nodes of ``radial``, whose angular rule is
    kept fixed so that residuals for different ``l_max`` are comparable.

    Returns a dict with the relative residual and diagnostics.
    """
    if not 1 <= j <= 3:
        raise InvalidInputError("j must be 1, 2 or 3")
    if l_max > radial.l_max:
        raise InvalidInputError("l_max exceeds the radial grid's angular resolution")
    xi, m = state.xi, state.grid.mass
    target_cart = q_phys(j, 0.0, xi, m).apply(state).psi - newton_wigner(j, t, xi, m).apply(state).psi
    target, pts = _cartesian_samples(state, target_cart, radial)
    psi_nodes, _ = _cartesian_samples(state, state.psi, radial)

    theta, phi, w_ang = radial.angular_rule()
    r = radial.r
    E = radial.energy
    g_nodes = (pts[j - 1] / r[:, None, None]) * (r / E)[:, None, None]

    n_ch = (l_max + 1) ** 2
    trunc = RadialGrid(radial.n_r, radial.r_min, radial.r_max, l_max, m, radial.n_theta, radial.n_phi)
    if dt is None:
        dt = min(0.05, RESOLUTION_PHASE / (m * max(float(np.max(np.abs(radial.v))), 1.0)))
    n_t = int(math.ceil(t_range / dt))
    tp = dt * np.arange(-n_t, n_t + 1)
    wt = np.full(tp.size, dt)
    wt[0] = wt[-1] = dt / 2
    _check_resolution(radial, tp + t)

    ylm = sph_harm_table(l_max, theta[:, None], phi[None, :])

    def apply_m(samples):
        coeffs, _ = _project(trunc, samples, theta, phi, w_ang)
        rs = RadialState(trunc, coeffs, xi)
        c = time_overlaps(rs, tp + t)  # (n_ch, n_t)
        # (M phi)_lm(r) = sqrt(m/2pi) r^{-3/2} sum_k w_k t'_k e^{-i xi m (t'_k + t) v} c_lm(t'_k + t)
        back = np.exp(-1j * xi * m * np.outer(radial.v, tp + t))  # (n_r, n_t)
        mc = (c * (wt * tp)[None, :]) @ back.T  # (n_ch, n_r)
        mc *= math.sqrt(m / (2 * math.pi)) * r**-1.5
        return mc, np.einsum("cr,cab->rab", mc, ylm)

    mc_psi, m_psi = apply_m(psi_nodes)
    mc_gpsi, m_gpsi = apply_m(g_nodes * psi_nodes)
    recon = 0.5 * (g_nodes * m_psi + m_gpsi)
    mw = radial.measure_weights[:, None, None] * w_ang[None, :, :]
    norm_psi = math.sqrt(float(np.sum(mw * np.abs(psi_nodes) ** 2)))
    resid = math.sqrt(float(np.sum(mw * np.abs(target - recon) ** 2))) / norm_psi
    out = {
        "residual": resid,
        "target_norm": math.sqrt(float(np.sum(mw * np.abs(target) ** 2))) / norm_psi,
        "l_max": l_max,
        "t_range": t_range,
        "dt": dt,
        "t": t,
        "j": j,
    }
    if channel_report:
        per_l = np.zeros(l_max + 1)
        mwr = radial.measure_weights
        for l in range(l_max + 1):
            sl = slice(l * l, (l + 1) ** 2)
            per_l[l] = float(np.sum((np.abs(mc_psi[sl]) ** 2 + np.abs(mc_gpsi[sl]) ** 2) @ mwr))
        out["channel_weight"] = per_l
    return out


def reconstruction_scan(state: MomentumState, j: int, t: float, settings, radial: RadialGrid) -> dict:
    """Residuals over increasing ``(l_max, t_range)`` settings; never raises on non-convergence."""
    rows = [eq16_reconstruction(state, j, t, l, tr, radial) for l, tr in settings]
    res = [r["residual"] for r in rows]
    monotone = all(b < a for a, b in zip(res[:-1], res[1:]))
    return {"rows": rows, "residuals": res, "monotone": monotone, "converged": monotone}


# ---------------------------------------------------------------------------
# position POVM


@dataclass(frozen=True)
class CoordinateMaps:
    """Maps ``pi -> (nu, omega, phi)`` used by the position kernels."""

    nu: Callable
    omega: Callable
    phi: Callable
    label: str = "maps"


def flow_maps(mass: float = 1.0) -> CoordinateMaps:
    """Candidate maps built so that the kernels diagonalize the ``Q^3`` acting rule.

    ``nu = arctan(pi^3/m)``, ``cosh omega = E / sqrt(m^2 + (pi^3)^2)``,
    ``phi = atan2(pi^2, pi^1)``.  They are not asserted to be the maps of
    the original construction; the completeness gate decides.
    """
    m = mass

    def nu(p1, p2, p3):
        return np.arctan(p3 / m)

    def omega(p1, p2, p3):
        rho = np.sqrt(p1 * p1 + p2 * p2)
        return np.arcsinh(rho / np.sqrt(m * m + p3 * p3))

    def phi(p1, p2, p3):
        return np.arctan2(p2, p1)

    return CoordinateMaps(nu, omega, phi, "flow")


def Lambda_from_lam(lam):
    """``Lambda = sqrt(-lambda - 1/4)`` for ``lambda <= -1/4``."""
    lam = np.asarray(lam, float)
    if np.any(lam > -0.25):
        raise InvalidInputError("lambda must be <= -1/4")
    return np.sqrt(-lam - 0.25)


def lam_from_Lambda(Lam):
    return -(np.asarray(Lam, float) ** 2) - 0.25


def _prefactor(mu: int, Lam: float, m: float) -> float:
    return math.sqrt(math.sinh(math.pi * Lam)) * math.exp(float(log_gamma(0.5 + mu + 1j * Lam).real)) / (
        m * (2 * math.pi) ** 1.5
    )


@dataclass(frozen=True)
class PositionPovmKernel:
    z: float
    lam: float
    m_z: int
    maps: CoordinateMaps
    tau: float = 0.0
    xi: int = 1
    mass: float = 1.0

    @property
    def Lambda(self) -> float:
        return float(Lambda_from_lam(self.lam))

    def __call__(self, p1, p2, p3):
        m = self.mass
        nu = self.maps.nu(p1, p2, p3)
        om = self.maps.omega(p1, p2, p3)
        ph = self.maps.phi(p1, p2, p3)
        sec = 1.0 / np.cos(nu)
        mu = abs(self.m_z)
        P = conical_p(ConicalOrder(mu, self.Lambda), np.cosh(om) * np.ones(np.shape(om)))
        phase = np.exp(1j * m * self.tau * np.log(sec) - 1j * m * self.xi * self.z * nu + 1j * self.m_z * ph)
        return _prefactor(mu, self.Lambda, m) * phase * sec**-1.5 * P


class _ConicalTable:
    """Spline tables of ``P^{-mu}_{-1/2+i Lambda}(cosh omega)`` on an omega grid."""

    def __init__(self, omega_max: float, n: int = 1200):
        self.omega = np.linspace(0.0, omega_max * 1.0001 + 1e-12, n)
        self.x = np.cosh(self.omega)
        self._cache: dict = {}

    def __call__(self, mu: int, Lam: float, omega: np.ndarray) -> np.ndarray:
        key = (mu, float(Lam))
        spl = self._cache.get(key)
        if spl is None:
            spl = CubicSpline(self.omega, conical_p(ConicalOrder(mu, Lam), self.x))
            self._cache[key] = spl
        return spl(omega)


@dataclass
class _PositionSetup:
    nus: np.ndarray
    inverse: np.ndarray
    base: np.ndarray
    omega: np.ndarray
    phi: np.ndarray
    table: _ConicalTable


def _position_setup(state: MomentumState, maps: CoordinateMaps, tau: float) -> _PositionSetup:
    g = state.grid
    if g.chart != "pi" or g.ndim != 3:
        raise InvalidInputError("position POVM needs a 3D pi-chart state")
    m = g.mass
    P = tuple(c * np.ones(g.shape) for c in g.coords())
    nu = np.asarray(maps.nu(*P), float) * np.ones(g.shape)
    om = np.asarray(maps.omega(*P), float) * np.ones(g.shape)
    ph = np.asarray(maps.phi(*P), float) * np.ones(g.shape)
    if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(om)) and np.all(np.isfinite(ph))):
        raise MapValidationError(f"coordinate maps {maps.label!r} are not finite on the grid")
    if np.any(np.abs(nu) >= math.pi / 2) or np.any(om < 0):
        raise MapValidationError(f"coordinate maps {maps.label!r} leave their domain")
    sec = 1.0 / np.cos(nu)
    base = g.weights() * np.exp(-1j * m * tau * np.log(sec)) * sec**-1.5 * state.psi
    nus, inv = np.unique(np.round(nu.ravel(), 13), return_inverse=True)
    return _PositionSetup(nus, inv, base.ravel(), om.ravel(), ph.ravel(), _ConicalTable(float(om.max())))


def _slice_weights(setup: _PositionSetup, m_z: int, Lam: float) -> np.ndarray:
    mu = abs(m_z)
    vals = setup.base * np.exp(-1j * m_z * setup.phi) * setup.table(mu, Lam, setup.omega)
    n = setup.nus.size
    return np.bincount(setup.inverse, vals.real, n) + 1j * np.bincount(setup.inverse, vals.imag, n)


def position_overlap(
    state: MomentumState, z, lam: float, m_z: int, maps: CoordinateMaps, tau: float = 0.0, _setup=None
):
    """``<psi^{z,lambda,m_z}|psi>`` with the ``dmu`` measure."""
    setup = _setup or _position_setup(state, maps, tau)
    Lam = float(Lambda_from_lam(lam))
    wk = _slice_weights(setup, m_z, Lam)
    z_arr = np.atleast_1d(np.asarray(z, float))
    m = state.grid.mass
    c = _prefactor(abs(m_z), Lam, m) * (np.exp(1j * m * state.xi * np.outer(z_arr, setup.nus)) @ wk)
    return c if np.ndim(z) else complex(c[0])


@dataclass
class PositionDistribution:
    z: np.ndarray
    density: np.ndarray
    norm: float
    defect: float
    per_mz: dict
    meta: dict = field(default_factory=dict)


def position_distribution(
    state: MomentumState,
    maps: CoordinateMaps,
    z_grid=None,
    tau: float = 0.0,
    m_z_max: int = 8,
    Lambda_max: float = 25.0,
    n_Lambda: int = 40,
    limit: float | None = MAP_DEFECT_LIMIT,
) -> PositionDistribution:
    """``q(z) = sum_{m_z} int dlambda |overlap|^2`` with ``dlambda = 2 Lambda dLambda``.

    The Lambda integral uses Gauss-Legendre nodes on ``[0, Lambda_max]``.
    A completeness defect above ``limit`` raises :class:`MapValidationError`.
    """
    setup = _position_setup(state, maps, tau)
    m = state.grid.mass
    if z_grid is None:
        # nu takes discrete values; half the alias period of the widest gap
        dnu = float(np.diff(setup.nus).max()) if setup.nus.size > 1 else 1.0
        zmax = math.pi / (m * dnu)
        span = float(setup.nus.max() - setup.nus.min()) or 1.0
        dz = min(0.1, math.pi / (2 * m * span))
        n = int(zmax / dz)
        z_grid = dz * np.arange(-n, n + 1)
    z = np.asarray(z_grid, float)
    x, w = roots_legendre(n_Lambda)
    Lams = 0.5 * Lambda_max * (x + 1.0)
    wL = 0.5 * Lambda_max * w
    phases = np.exp(1j * m * state.xi * np.outer(z, setup.nus))
    q = np.zeros(z.size)
    per_mz = {}
    for m_z in range(-m_z_max, m_z_max + 1):
        qm = np.zeros(z.size)
        for Lam, wl in zip(Lams, wL):
            wk = _slice_weights(setup, m_z, Lam)
            c = _prefactor(abs(m_z), Lam, m) * (phases @ wk)
            qm += 2.0 * Lam * wl * np.abs(c) ** 2
        per_mz[m_z] = float(np.trapezoid(qm, z))
        q += qm
    norm = float(np.trapezoid(q, z))
    defect = norm / state.norm2() - 1.0
    meta = {
        "maps": maps.label,
        "m_z_max": m_z_max,
        "Lambda_max": Lambda_max,
        "n_Lambda": n_Lambda,
        "z_min": float(z[0]),
        "z_max": float(z[-1]),
        "defect": defect,
    }
    if limit is not None and abs(defect) > limit:
        raise MapValidationError(f"position POVM completeness defect {defect:.3e} for maps {maps.label!r}")
    return PositionDistribution(z, q, norm, defect, per_mz, meta)
