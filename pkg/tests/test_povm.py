import math

import numpy as np
import pytest
from scipy import integrate

from ptloc.errors import CompletenessError, InvalidInputError, MapValidationError, ResolutionError
from ptloc.povm import (
    CoordinateMaps,
    HeavyTailWarning,
    Lambda_from_lam,
    PositionPovmKernel,
    TimePovmKernel,
    default_t_grid,
    eq16_reconstruction,
    reconstruction_scan,
    flow_maps,
    kernel_overlap,
    lam_from_Lambda,
    position_distribution,
    position_overlap,
    time_distribution,
    time_kernel,
    time_overlap,
    time_overlaps,
    time_uncertainty,
)
from ptloc.specfun import channel_index
from ptloc.state import CartesianGrid, RadialGrid, gaussian_state, radial_from_channels

M = 1.0


@pytest.fixture(scope="module")
def rgrid():
    return RadialGrid(1024, 1e-5, 50.0, 4, M)


# ---------------------------------------------------------------------------
# time POVM


def test_time_overlap_matches_direct_quadrature(rgrid):
    g = lambda r: r * np.exp(-r * r / 4)  # noqa: E731
    s = radial_from_channels(rgrid, {(0, 0): g}, normalize=False)
    for t in (0.0, 0.7, -2.0):
        def part(r, which):
            E = math.hypot(r, M)
            v = math.log(r / (E + M))
            val = math.sqrt(M / (2 * math.pi)) * r * r * (M / E) * r**-1.5 * g(r) * np.exp(1j * M * t * v)
            return val.real if which == 0 else val.imag

        want = sum(
            (1j**k) * integrate.quad(part, rgrid.r_min, rgrid.r_max, args=(k,), limit=400, epsabs=1e-13)[0] for k in (0, 1)
        )
        assert time_overlap(s, t, 0, 0) == pytest.approx(want, rel=1e-7)


def test_time_kernel_closed_form_matches_overlap(rgrid):
    # overlap computed from the pointwise kernel on the radial nodes
    s = radial_from_channels(rgrid, {(1, 1): lambda r: np.exp(-r * r)}, normalize=False)
    k = TimePovmKernel(0.4, 1, 1, 0.0, 1, M)
    r = rgrid.r
    th, ph = 0.7, 0.3
    p = (r * math.sin(th) * math.cos(ph), r * math.sin(th) * math.sin(ph), r * math.cos(th))
    vals = time_kernel(k, *p)
    from ptloc.specfun import spherical_harmonic

    radial = vals / spherical_harmonic(1, 1, th, ph)
    want = np.sum(rgrid.measure_weights * np.conj(radial) * s.channel(1, 1))
    assert time_overlap(s, 0.4, 1, 1) == pytest.approx(want, rel=1e-12)


def test_channel_selection(rgrid):
    s = radial_from_channels(rgrid, {(2, -1): lambda r: np.exp(-r * r)})
    c = time_overlaps(s, np.linspace(-1, 1, 5))
    keep = channel_index(2, -1)
    assert np.abs(np.delete(c, keep, axis=0)).max() == 0.0
    assert np.abs(c[keep]).max() > 0.1


def test_overlap_bounded_by_cauchy_schwarz(rgrid):
    s = radial_from_channels(rgrid, {(0, 0): lambda r: np.exp(-r * r / 4), (1, 0): lambda r: r * np.exp(-r)})
    c = time_overlaps(s, np.linspace(-3, 3, 13))
    kk = kernel_overlap(rgrid, 0.0, 0.0).real
    assert np.all(np.abs(c) ** 2 <= s.channel_norms2()[:, None] * kk + 1e-15)


def test_kernel_non_orthogonality_closed_form():
    # (m/2pi) int_{v0}^{v1} exp((i m dt + eps) v) dv on v < 0; the grid is a trapezoid rule in ln r
    rgrid = RadialGrid(4096, 1e-5, 50.0, 0, M)
    v0, v1 = rgrid.v[0], rgrid.v[-1]
    for dt, eps in ((1.0, 0.05), (2.5, 0.0)):
        a = 1j * M * dt + eps
        want = (M / (2 * math.pi)) * (np.exp(a * v1) - np.exp(a * v0)) / a
        got = kernel_overlap(rgrid, dt, 0.0, 1, eps)
        assert got == pytest.approx(want, rel=5e-5)
        assert abs(got) > 1e-3


STATES = {
    "l0_gauss": {(0, 0): lambda r: np.exp(-r * r / 4)},
    "mixed": {(1, 0): lambda r: r * np.exp(-((r - 1.0) ** 2)), (2, -1): lambda r: r * r * np.exp(-r)},
}


@pytest.mark.parametrize("name", sorted(STATES))
def test_completeness_and_positivity(name):
    defects = []
    for n_r in (256, 512, 1024):
        s = radial_from_channels(RadialGrid(n_r, 1e-5, 50.0, 4, M), STATES[name])
        d = time_distribution(s, limit=None)
        assert np.all(d.density >= 0)
        defects.append(abs(d.defect))
    assert defects[-1] < 1e-3
    assert defects[0] > defects[1] > defects[2]


def test_completeness_gate_raises():
    s = radial_from_channels(RadialGrid(64, 1e-5, 50.0, 0, M), STATES["l0_gauss"])
    with pytest.raises(CompletenessError):
        time_distribution(s)


def test_resolution_guard(rgrid):
    s = radial_from_channels(rgrid, STATES["l0_gauss"])
    with pytest.raises(ResolutionError):
        time_overlaps(s, [1e4])


def test_xi_flip_reverses_time(rgrid):
    prof = {(0, 0): lambda r: np.exp(-r * r / 4) * (1 + 0.5j * r)}
    a = radial_from_channels(rgrid, prof, xi=1)
    b = radial_from_channels(rgrid, prof, xi=-1)
    t = np.linspace(-2, 2, 9)
    pa = np.abs(time_overlaps(a, t)) ** 2
    pb = np.abs(time_overlaps(b, -t)) ** 2
    assert np.allclose(pa, pb, atol=1e-15)


def _v_gaussian_state(grid, v0, w):
    # amplitude Gaussian in v: |c(t)|^2 is Gaussian with std 1/(2 m w)
    return radial_from_channels(
        grid, {(0, 0): lambda r: r**-1.5 * np.exp(-((np.log(r / (np.hypot(r, M) + M)) - v0) ** 2) / (4 * w * w))}
    )


def test_spread_matches_fourier_oracle_and_grows_as_v_support_narrows():
    g = RadialGrid(2048, 1e-5, 50.0, 0, M)
    spreads = {}
    for w in (0.1, 0.25):
        s = _v_gaussian_state(g, -1.5, w)
        mean, dt = time_uncertainty(s)
        assert mean == pytest.approx(0.0, abs=1e-10)
        assert dt == pytest.approx(1 / (2 * M * w), rel=1e-4)
        spreads[w] = dt
    assert spreads[0.1] > spreads[0.25]


def test_moments_stable_under_t_refinement():
    g = RadialGrid(2048, 1e-5, 50.0, 0, M)
    s = radial_from_channels(g, STATES["l0_gauss"])
    tg = default_t_grid(s)
    fine = np.linspace(tg[0], tg[-1], 2 * tg.size - 1)
    m1, d1 = time_uncertainty(s, t_grid=tg)
    m2, d2 = time_uncertainty(s, t_grid=fine)
    assert abs(m1 - m2) < 1e-4 and abs(d1 - d2) < 1e-4
    assert d1 > 1e-6


def test_symmetric_state_mean_at_zero_and_shift_with_tau():
    g = RadialGrid(1024, 1e-5, 50.0, 0, M)
    s = _v_gaussian_state(g, -1.5, 0.2)
    # multiplying by exp(-i xi m a v) shifts the distribution by a
    shifted = radial_from_channels(
        g,
        {(0, 0): lambda r: s.coeffs[0] * np.exp(-1j * M * 0.8 * np.log(r / (np.hypot(r, M) + M)))},
    )
    assert time_uncertainty(shifted)[0] == pytest.approx(time_uncertainty(s)[0] + 0.8, abs=1e-6)


def test_heavy_tail_warning():
    g = RadialGrid(256, 1e-5, 50.0, 0, M)
    s = _v_gaussian_state(g, -1.5, 0.01)
    with pytest.warns(HeavyTailWarning):
        time_uncertainty(s)


# ---------------------------------------------------------------------------
# position reconstruction from the time POVM


@pytest.fixture(scope="module")
def small_cart():
    g = CartesianGrid(48, 5.0, M)
    return gaussian_state(g, (0.3, -0.2, 0.4), 0.6)


def test_reconstruction_residual_decreases(small_cart):
    radial = RadialGrid(512, 1e-3, 6.0, 4, M, n_theta=16, n_phi=32)
    res = reconstruction_scan(small_cart, 1, 0.5, [(1, 3.0), (2, 6.0), (4, 12.0)], radial)
    assert res["monotone"]
    assert res["residuals"][-1] < 0.5 * res["residuals"][0]


def test_reconstruction_channel_report_and_errors(small_cart):
    radial = RadialGrid(256, 1e-3, 6.0, 2, M, n_theta=12, n_phi=24)
    out = eq16_reconstruction(small_cart, 3, 0.0, 2, 3.0, radial, channel_report=True)
    assert out["channel_weight"].shape == (3,)
    assert np.all(out["channel_weight"] >= 0)
    with pytest.raises(InvalidInputError):
        eq16_reconstruction(small_cart, 4, 0.0, 2, 3.0, radial)
    with pytest.raises(InvalidInputError):
        eq16_reconstruction(small_cart, 1, 0.0, 5, 3.0, radial)


# ---------------------------------------------------------------------------
# position POVM


@pytest.fixture(scope="module")
def axial():
    g = CartesianGrid(40, 4.0, M, kijowski_safe=True)
    return gaussian_state(g, (0.0, 0.0, 0.4), 0.5)


@pytest.fixture(scope="module")
def axial_dist(axial):
    return position_distribution(axial, flow_maps(M), m_z_max=2)


def test_lambda_parametrization():
    assert Lambda_from_lam(lam_from_Lambda(3.0)) == pytest.approx(3.0)
    with pytest.raises(InvalidInputError):
        Lambda_from_lam(0.0)


def test_position_completeness_gate(axial_dist):
    assert abs(axial_dist.defect) < 5e-2
    assert np.all(axial_dist.density >= 0)


def test_axial_state_populates_only_mz0(axial_dist):
    total = sum(axial_dist.per_mz.values())
    assert axial_dist.per_mz[0] / total > 1 - 1e-10
    for mz in (1, 2):
        assert axial_dist.per_mz[mz] == pytest.approx(axial_dist.per_mz[-mz], rel=1e-8, abs=1e-14)


def test_bad_maps_fail_the_gate(axial):
    fm = flow_maps(M)
    bad = CoordinateMaps(lambda a, b, c: np.arctan(c / np.sqrt(a * a + b * b + c * c + M * M)), fm.omega, fm.phi, "bad")
    with pytest.raises(MapValidationError):
        position_distribution(axial, bad, m_z_max=2)


def test_position_kernel_matches_overlap(axial):
    fm = flow_maps(M)
    lam = lam_from_Lambda(1.5)
    k = PositionPovmKernel(0.3, float(lam), 1, fm, 0.0, 1, M)
    g = axial.grid
    direct = np.sum(g.weights() * np.conj(k(*g.coords())) * axial.psi)
    assert position_overlap(axial, 0.3, float(lam), 1, fm) == pytest.approx(direct, rel=1e-6, abs=1e-12)


def test_position_z_shift_covariance(axial, axial_dist):
    fm = flow_maps(M)
    a = 4 * (axial_dist.z[1] - axial_dist.z[0])
    nu = fm.nu(*axial.grid.coords())
    shifted = axial.with_psi(axial.psi * np.exp(1j * M * a * nu))
    d2 = position_distribution(shifted, fm, z_grid=axial_dist.z - a, m_z_max=2, limit=None)
    assert np.allclose(d2.density, axial_dist.density, atol=1e-12)
