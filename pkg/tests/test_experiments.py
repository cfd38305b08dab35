import json
import math

import numpy as np
import pytest

from ptloc.errors import ConfigError, LocalizationError, SingularDomainError
from ptloc.experiments import (
    AmbiguousArrivalWarning,
    ExperimentConfig,
    ExperimentReport,
    bump_profile,
    bump_radial_state,
    hegerfeldt_leakage,
    kijowski_arrival_scan,
    nw_velocity_scan,
    radial_leakage,
    temporal_spread_report,
    verify_suite,
)
from ptloc.state import RadialGrid


def test_config_casting_and_hash():
    c = ExperimentConfig.from_mapping({"mass": "2", "grid_n": "32", "heg_mode": "3d"})
    assert c.mass == 2.0 and c.grid_n == 32 and c.heg_mode == "3d"
    assert c.hash() == ExperimentConfig.from_mapping({"mass": "2.0", "grid_n": "32", "heg_mode": "3d"}).hash()
    assert c.hash() != ExperimentConfig().hash()


@pytest.mark.parametrize(
    "values",
    [{"nope": "1"}, {"mass": "abc"}, {"mass": "-1"}, {"xi": "2"}, {"tol_decomposition": "0"}, {"heg_mode": "x"}, {"heg_times": ""}],
)
def test_config_rejects_bad_values(values):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping(values)


def test_report_csv_format_and_finiteness():
    rep = ExperimentReport("x")
    rep.add("a", 0.1, 1 / 3, 0.0)
    text = rep.to_csv()
    assert text.splitlines()[0] == "series,parameter,value,error"
    assert "0.33333333333333331" in text
    assert float(text.splitlines()[1].split(",")[2]) == 1 / 3
    with pytest.raises(ValueError):
        rep.add("a", 0.1, float("nan"), 0.0)
    with pytest.raises(ValueError):
        rep.add("a", 0.1)
    meta = json.loads(rep.to_json(ExperimentConfig()))
    assert meta["config_hash"] == ExperimentConfig().hash()


def test_bump_profile_support():
    r = np.array([0.0, 0.5, 0.999, 1.0, 2.0])
    b = bump_profile(r, 1.0)
    assert b[0] == 1.0 and np.all(b[3:] == 0.0) and np.all(b[:3] > 0)


def test_hegerfeldt_leakage_positive_and_decreasing_in_radius():
    rep = hegerfeldt_leakage(ExperimentConfig(heg_radii="1,2", heg_times="0,0.1,0.2"))
    for R in ("1", "2"):
        floor = rep.metadata["floors"][f"{float(R)}"]
        assert floor < 1e-8
        vals = rep.column("value", f"R={R}")
        assert vals[0] == floor
        assert vals[1] > 10 * floor and vals[2] > vals[1]
    assert np.all(rep.column("value", "R=2")[1:] < rep.column("value", "R=1")[1:])


def test_radial_leakage_xi_symmetric():
    a = radial_leakage(1.0, [0.1, 0.2], 4096, 40.0, 1.0, 1)
    b = radial_leakage(1.0, [0.1, 0.2], 4096, 40.0, 1.0, -1)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-300)


def test_hegerfeldt_3d_agrees_with_radial():
    rep = hegerfeldt_leakage(ExperimentConfig(heg_mode="3d", heg_radii="1", heg_times="0.2"))
    val, err = rep.rows[0][2], rep.rows[0][3]
    assert err < 0.1 * val


def test_hegerfeldt_clipping_is_localization_failure():
    with pytest.raises(LocalizationError):
        hegerfeldt_leakage(ExperimentConfig(heg_radii="25"))


def test_bump_state_is_normalized_and_spread_positive():
    g = RadialGrid(1024, 1e-5, 50.0, 0)
    s = bump_radial_state(g, 1.0)
    assert s.norm2() == pytest.approx(1.0)
    rep = temporal_spread_report(ExperimentConfig(time_nr=1024, time_lmax=0))
    assert rep.metadata["all_positive"]
    for R in ("1", "2"):
        rows = [r for r in rep.rows if r[0] == f"R={R}"]
        mean, dt = rows[0][2], rows[1][2]
        assert abs(mean) < 1e-10
        assert dt > 1e-6
        assert rows[1][3] < 1e-4 * dt


def test_kijowski_scan_slope():
    rep = kijowski_arrival_scan(ExperimentConfig())
    md = rep.metadata
    assert md["slope_fit"] == pytest.approx(md["slope_quadrature"], rel=1e-8)
    assert md["slope_fit"] == pytest.approx(md["slope_classical"], rel=1e-2)
    assert abs(md["T0_pi_chart"] - md["T0_s_chart"]) < 1e-5
    assert np.all(rep.column("error") > 0)


def test_kijowski_two_sided_packet_warns():
    with pytest.warns(AmbiguousArrivalWarning), pytest.raises(SingularDomainError):
        kijowski_arrival_scan(ExperimentConfig(kij_p3=0.3, kij_sigma_ratio=0.5))


def test_nw_velocity_scan():
    rep = nw_velocity_scan(ExperimentConfig())
    md = rep.metadata
    assert md["max_slope_error"] < 1e-8
    assert all(abs(v) < 1 for v in md["slopes"].values())
    centered = nw_velocity_scan(ExperimentConfig(center_x=0.0, center_y=0.0, center_z=0.0))
    assert all(abs(v) < 1e-12 for v in centered.metadata["slopes"].values())


@pytest.fixture(scope="module")
def suite():
    return verify_suite(ExperimentConfig())


def test_verify_suite_passes_by_default(suite):
    assert suite.metadata["all_passed"], [r for r in suite.rows if not r[3]]
    names = {r[0] for r in suite.rows}
    assert {"poisson_qp", "decomposition_residual[symmetric]", "kijowski_chart_agreement_z0", "time_povm_completeness"} <= names
    scan = suite.metadata["resolution_scan"]
    assert scan[0] > scan[1] > scan[2]


def test_verify_suite_negative_control():
    rep = verify_suite(ExperimentConfig(ordering="left"))
    row = next(r for r in rep.rows if r[0] == "decomposition_residual[left]")
    assert not row[3]
    assert row[1] == pytest.approx(rep.metadata["decomposition_left_control"], rel=1e-2)
    assert not rep.metadata["all_passed"]


def test_reports_are_deterministic():
    c = ExperimentConfig()
    assert hegerfeldt_leakage(c).to_csv() == hegerfeldt_leakage(c).to_csv()
    assert nw_velocity_scan(c).to_csv() == nw_velocity_scan(c).to_csv()
    assert math.isfinite(float(nw_velocity_scan(c).rows[-1][2]))
