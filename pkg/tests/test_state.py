import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ptloc.errors import (
    ConfigError,
    IncompatibleStateError,
    InvalidInputError,
    ResolutionError,
    TruncationError,
)
from ptloc.state import (
    CartesianGrid,
    MomentumState,
    RadialGrid,
    edge_fraction,
    gaussian_state,
    inner_product,
    load_state,
    nw_amplitude,
    nw_density,
    nw_state_from_profile,
    nw_transform,
    radial_evaluate,
    radial_from_channels,
    radial_from_function,
    s_chart_from_function,
    s_chart_grid,
    save_state,
    state_from_function,
    to_radial,
    to_s_chart,
)


@pytest.fixture(scope="module")
def grid48():
    return CartesianGrid(48, 5.0, 1.0)


def test_grid_geometry():
    g = CartesianGrid((16, 32, 8), (1.0, 2.0, 4.0), 1.0)
    assert g.h == (0.125, 0.125, 1.0)
    assert g.cell_volume == pytest.approx(0.125 * 0.125)
    assert g.axes[0][0] == -1.0
    assert g.weights().shape == (16, 32, 8)
    with pytest.raises(ValueError):
        g.weights()[0, 0, 0] = 1.0


def test_kijowski_safe_grid_avoids_zero_plane():
    g = CartesianGrid(16, 2.0, 1.0, kijowski_safe=True)
    assert np.min(np.abs(g.axes[2])) == pytest.approx(0.5 * g.h[2])


@pytest.mark.parametrize(
    "kwargs",
    [dict(n=4), dict(pmax=-1.0), dict(mass=0.0), dict(ndim=4), dict(chart="q"), dict(chart="s", ndim=2)],
)
def test_grid_rejects_bad_input(kwargs):
    base = dict(n=16, pmax=2.0, mass=1.0)
    base.update(kwargs)
    with pytest.raises(InvalidInputError):
        CartesianGrid(**base)


def test_gaussian_normalized_and_mean_momentum(grid48):
    s = gaussian_state(grid48, (0.4, -0.2, 0.3), 0.6)
    assert s.norm2() == pytest.approx(1.0, abs=1e-13)
    assert s.normalized
    P = grid48.coords()
    # weights m/E shift the mean slightly; compare with the flat-measure mean
    flat = np.abs(s.psi) ** 2
    for k, c in enumerate((0.4, -0.2, 0.3)):
        assert np.sum(P[k] * flat) / np.sum(flat) == pytest.approx(c, abs=1e-10)


def test_norm_matches_refined_radial_quadrature():
    # oracle: int d^3 pi (m/E) exp(-pi^2/(2 sigma^2)) in spherical coordinates
    sigma, m = 0.5, 1.0
    want, _ = integrate.quad(lambda r: 4 * math.pi * r * r * m / math.hypot(r, m) * math.exp(-r * r / (2 * sigma**2)), 0, 20)
    g = CartesianGrid(64, 4.0, m)
    s = state_from_function(g, lambda a, b, c: np.exp(-(a * a + b * b + c * c) / (4 * sigma**2)), normalize=False)
    assert s.norm2() == pytest.approx(want, rel=1e-6)


def test_gaussian_tail_errors(grid48):
    with pytest.raises(ResolutionError):
        gaussian_state(grid48, (0, 0, 0), 2.0)
    with pytest.raises(InvalidInputError):
        gaussian_state(grid48, (0, 0, 0), -1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_inner_product_hermitian(seed):
    g = CartesianGrid(8, 1.0, 1.0)
    rng = np.random.default_rng(seed)
    a = MomentumState(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    b = MomentumState(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    assert inner_product(a, b) == pytest.approx(np.conj(inner_product(b, a)), abs=1e-12)
    assert inner_product(a, a).real == pytest.approx(a.norm2())


def test_incompatible_states(grid48):
    a = gaussian_state(grid48, (0, 0, 0), 0.6)
    b = gaussian_state(CartesianGrid(32, 5.0, 1.0), (0, 0, 0), 0.6)
    with pytest.raises(IncompatibleStateError):
        inner_product(a, b)
    with pytest.raises(IncompatibleStateError):
        inner_product(a, gaussian_state(grid48, (0, 0, 0), 0.6, xi=-1))


def test_state_validation(grid48):
    with pytest.raises(InvalidInputError):
        MomentumState(grid48, np.zeros((3, 3, 3)))
    with pytest.raises(InvalidInputError):
        MomentumState(grid48, np.full(grid48.shape, np.nan))
    with pytest.raises(InvalidInputError):
        MomentumState(grid48, np.zeros(grid48.shape), xi=0)
    with pytest.raises(InvalidInputError):
        MomentumState(grid48, np.zeros(grid48.shape)).normalize()


def test_nw_parseval_and_direct_sum(grid48):
    s = gaussian_state(grid48, (0.4, -0.2, 0.3), 0.6)
    xs, amp = nw_transform(s, 0.7)
    dx3 = np.prod([x[1] - x[0] for x in xs])
    assert np.sum(np.abs(amp) ** 2) * dx3 == pytest.approx(1.0, abs=1e-12)
    i, j, k = 24, 20, 27
    assert nw_amplitude(s, (xs[0][i], xs[1][j], xs[2][k]), 0.7) == pytest.approx(amp[i, j, k], abs=1e-12)


def test_nw_centroid_drift(grid48):
    s = gaussian_state(grid48, (0.4, -0.2, 0.3), 0.6)
    P = grid48.coords()
    w = grid48.weights() * np.abs(s.psi) ** 2
    for t in (0.0, 0.8):
        xs, dens = nw_density(s, t)
        dx3 = np.prod([x[1] - x[0] for x in xs])
        mesh = np.meshgrid(*xs, indexing="ij", sparse=True)
        for j in range(3):
            want = t * float(np.sum(w * P[j] / grid48.energy()))
            assert float(np.sum(dens * mesh[j]) * dx3) == pytest.approx(want, abs=1e-6)


def test_nw_density_xi_independent_at_t0(grid48):
    a = gaussian_state(grid48, (0.4, -0.2, 0.3), 0.6, xi=1)
    b = gaussian_state(grid48, (0.4, -0.2, 0.3), 0.6, xi=-1)
    assert np.allclose(nw_density(a, 0.0)[1], nw_density(b, 0.0)[1], atol=1e-15)
    assert not np.allclose(nw_density(a, 1.0)[1], nw_density(b, 1.0)[1], atol=1e-6)


def test_nw_states_orthonormal_under_invariant_measure():
    g = CartesianGrid(64, 8.0, 1.0, ndim=1)
    (p,) = g.coords()
    E = g.energy()
    from ptloc.state import _position_axes

    xs = _position_axes(g)[0][28:36]
    dx = xs[1] - xs[0]
    states = [MomentumState(g, np.sqrt(E) * np.exp(-1j * p * x) * math.sqrt(dx / (2 * math.pi))) for x in xs]
    gram = np.array([[inner_product(a, b) for b in states] for a in states])
    assert np.allclose(gram, np.eye(len(xs)), atol=1e-12)
    # the same amplitudes under the flat measure are not orthogonal
    flat = np.array([[np.sum(g.h[0] * np.conj(a.psi) * b.psi) for b in states] for a in states])
    assert np.abs(flat - np.diag(np.diag(flat))).max() > 1e-3


def test_nw_profile_round_trip(grid48):
    s = gaussian_state(grid48, (0.4, -0.2, 0.3), 0.6, phase_x=(0.5, 0, 0))
    xs, amp = nw_transform(s, 0.3)
    back = nw_state_from_profile(grid48, amp, t=0.3, check_alias=False)
    assert np.abs(back.psi - s.psi).max() < 1e-13


def test_nw_profile_alias_check():
    g = CartesianGrid(32, 8.0, 1.0)
    sharp = lambda x, y, z: ((x * x + y * y + z * z) < 0.3).astype(float)  # noqa: E731
    with pytest.raises(ResolutionError):
        nw_state_from_profile(g, sharp)
    smooth = nw_state_from_profile(g, lambda x, y, z: np.exp(-(x * x + y * y + z * z)))
    assert edge_fraction(smooth) < 1e-6


def test_s_chart_isometry_and_resampling():
    sigma, p0 = 0.1, np.array([0.2, -0.1, 2.0])
    g = CartesianGrid(32, 0.8, 1.0, kijowski_safe=True, center=tuple(p0))
    amp = lambda a, b, c: np.exp(-((a - p0[0]) ** 2 + (b - p0[1]) ** 2 + (c - p0[2]) ** 2) / (4 * sigma**2))  # noqa: E731
    s = state_from_function(g, amp)
    nrm = math.sqrt(state_from_function(g, amp, normalize=False).norm2())
    E0 = math.sqrt(p0 @ p0 + 1.0)
    sg = s_chart_grid(32, 0.8, 256, E0 + 1.0, 1.0, center_perp=tuple(p0[:2]))
    direct = s_chart_from_function(sg, lambda a, b, c: amp(a, b, c) / nrm)
    assert direct.norm2() == pytest.approx(1.0, abs=1e-8)
    resampled = to_s_chart(s, sg)
    assert resampled.norm2() == pytest.approx(1.0, abs=1e-6)
    assert np.abs(resampled.psi - direct.psi).max() < 1e-4 * np.abs(direct.psi).max()
    assert np.all(direct.psi[~sg.physical_mask()] == 0)


def test_to_s_chart_requires_matching_transverse_axes():
    g = CartesianGrid(16, 0.8, 1.0, kijowski_safe=True)
    sg = s_chart_grid(16, 1.0, 64, 3.0)
    with pytest.raises(IncompatibleStateError):
        to_s_chart(gaussian_state(g, (0, 0, 0), 0.1), sg)


def test_save_load_round_trip(tmp_path, grid48):
    s = gaussian_state(grid48, (0.4, -0.2, 0.3), 0.6, xi=-1)
    path = str(tmp_path / "s.ptl")
    desc = save_state(s, path, extra={"tag": "x"})
    back = load_state(path)
    assert back.grid == s.grid and back.xi == -1
    assert np.array_equal(back.psi, s.psi)
    side = json.loads(open(path + ".json").read())
    assert side["sha256"] == desc["sha256"] and side["tag"] == "x"


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ptl"
    path.write_bytes(b"NOTASTATE" + bytes(100))
    with pytest.raises(ConfigError):
        load_state(str(path))


def test_radial_channel_selection_and_norm():
    rg = RadialGrid(512, 1e-4, 20.0, 4)
    # p3 exp(-p^2) lives purely in (l, m) = (1, 0)
    s = radial_from_function(rg, lambda r, th, ph: r * np.cos(th) * np.exp(-r * r))
    norms = s.channel_norms2()
    assert norms.sum() == pytest.approx(1.0, abs=1e-12)
    from ptloc.specfun import channel_index

    assert norms[channel_index(1, 0)] == pytest.approx(1.0, abs=1e-12)
    assert s.reconstruction_error < 1e-12


def test_radial_truncation_error():
    rg = RadialGrid(256, 1e-4, 20.0, 2)
    with pytest.raises(TruncationError):
        radial_from_function(rg, lambda r, th, ph: np.exp(-r * r) * np.cos(th) ** 5)


def test_radial_evaluate_reproduces_profile():
    rg = RadialGrid(1024, 1e-4, 20.0, 2)
    s = radial_from_channels(rg, {(0, 0): lambda r: np.exp(-r * r)}, normalize=False)
    pts = np.array([0.3, 0.7, 1.1])
    vals = radial_evaluate(s, pts, 0 * pts, 0 * pts)
    assert np.allclose(vals, np.exp(-pts * pts) / math.sqrt(4 * math.pi), atol=1e-8)


def test_to_radial_preserves_norm():
    g = CartesianGrid(64, 4.0, 1.0)
    s = gaussian_state(g, (0.0, 0.0, 0.0), 0.5)
    rg = RadialGrid(512, 1e-3, 4.0, 2)
    r = to_radial(s, rg)
    assert r.norm2() == pytest.approx(1.0, abs=1e-5)
    assert r.channel_norms2()[0] == pytest.approx(r.norm2(), abs=1e-10)
