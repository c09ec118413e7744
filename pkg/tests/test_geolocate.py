import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isac_uav.exceptions import DegenerateGeometryError
from isac_uav.geolocate import (
    SingleBsFix,
    enumerate_velocity_solutions,
    localize_single,
    solve_velocity,
    velocity_to_spherical,
)
from isac_uav.music import BsEstimate
from isac_uav.scene import BsSite, UavState, direction_from_angles, los_unit_vector, radial_params


def _est(bs_id, rng, az, el, v=0.0):
    return BsEstimate(bs_id, az, el, rng, v, None, None, None)


def _exact(scenario, truths):
    return [_est(s.id, truths[s.id].range, truths[s.id].azimuth, truths[s.id].elevation,
                 truths[s.id].radial_speed) for s in scenario.sites]


def test_localize_table1_from_bs1(scenario, truths):
    rp = truths[1]
    fix = localize_single(scenario.site(1), _est(1, rp.range, rp.azimuth, rp.elevation))
    np.testing.assert_allclose(fix.position, [-7.2873, 6.8487, 39.2624], atol=1e-9)
    assert fix.bs_id == 1


def test_localize_zenith_limit():
    fix = localize_single(BsSite(0, [1.0, 2.0, 3.0]), _est(0, 10.0, 0.0, -np.pi / 2 + 1e-12))
    np.testing.assert_allclose(fix.position, [1.0, 2.0, 13.0], atol=1e-9)


def test_localize_is_linear_in_range():
    bs = BsSite(0, [0.0, 0.0, 0.0])
    a = localize_single(bs, _est(0, 30.0, 1.1, -0.6)).position
    b = localize_single(bs, _est(0, 32.5, 1.1, -0.6)).position
    np.testing.assert_allclose(b - a, 2.5 * direction_from_angles(1.1, -0.6), atol=1e-12)


@pytest.mark.parametrize("triple", list(itertools.combinations(range(4), 3)))
def test_solve_velocity_recovers_table1(scenario, triple):
    sites = [scenario.sites[i] for i in triple]
    speeds = [radial_params(s, scenario.uav).radial_speed for s in sites]
    sol = solve_velocity(sites, scenario.uav.position, speeds)
    np.testing.assert_allclose(sol.vector, scenario.uav.velocity, atol=1e-9)
    mag, az, el = sol.spherical
    assert mag == pytest.approx(23.0, abs=1e-9)
    assert np.rad2deg(az) == pytest.approx(70.0, abs=1e-9)
    assert np.rad2deg(el) == pytest.approx(-40.0, abs=1e-9)
    # every plane constraint holds
    for s, vn in zip(sites, speeds):
        assert abs(-los_unit_vector(s, scenario.uav.position) @ sol.vector - vn) < 1e-9


def test_solve_velocity_zero_speeds(scenario):
    sol = solve_velocity(scenario.sites[:3], scenario.uav.position, [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(sol.vector, 0.0)


def test_solve_velocity_collinear_is_degenerate():
    target = np.array([0.0, 0.0, 30.0])
    # all three BSs on one line through the target share a LoS direction
    sites = [BsSite(i, [-10.0 * i, 0.0, 30.0 - 10.0 * i]) for i in (1, 2, 3)]
    with pytest.raises(DegenerateGeometryError) as info:
        solve_velocity(sites, target, [1.0, 1.0, 1.0])
    assert info.value.bs_ids == (1, 2, 3)


def test_solve_velocity_needs_three():
    with pytest.raises(ValueError):
        solve_velocity([BsSite(0, [0, 0, 0])] * 2, [0, 0, 1], [0.0, 0.0])


def test_enumerate_four_solutions_identical(scenario, truths):
    est = _exact(scenario, truths)
    fixes = [localize_single(s, e) for s, e in zip(scenario.sites, est)]
    sols = enumerate_velocity_solutions(scenario.sites, fixes, est)
    assert [s.bs_triple for s in sols] == [(1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4)]
    assert not sols.skipped
    for s in sols:
        np.testing.assert_allclose(s.vector, scenario.uav.velocity, atol=1e-9)


def test_enumerate_three_bs_and_order(scenario, truths):
    est = _exact(scenario, truths)[:3]
    sites = list(reversed(scenario.sites[:3]))
    fixes = [localize_single(s, e) for s, e in zip(scenario.sites, est)]
    sols = enumerate_velocity_solutions(sites, fixes, est)
    assert len(sols) == 1
    assert sols[0].bs_triple == (1, 2, 3)


def test_enumerate_skips_degenerate_triple():
    target = np.array([0.0, 0.0, 30.0])
    sites = [BsSite(i, [-10.0 * i, 0.0, 30.0 - 10.0 * i]) for i in (1, 2, 3)] + [BsSite(4, [0.0, 20.0, 0.0])]
    fixes = [SingleBsFix(s.id, target) for s in sites]
    est = [_est(s.id, 1.0, 0.0, -0.1, 0.5) for s in sites]
    with pytest.warns(RuntimeWarning):
        sols = enumerate_velocity_solutions(sites, fixes, est)
    assert len(sols) + len(sols.skipped) == 4
    assert sols.skipped[0][0] == (1, 2, 3)


@pytest.mark.parametrize("v, expected", [((1, 0, 0), (1, 0, 0)), ((0, 0, -1), (1, 0, -np.pi / 2)),
                                         ((0, 0, 0), (0, 0, 0)), ((-2, 0, 0), (2, -np.pi, 0))])
def test_velocity_to_spherical(v, expected):
    np.testing.assert_allclose(velocity_to_spherical(v), expected, atol=1e-15)


def test_velocity_spherical_roundtrip(scenario):
    mag, az, el = velocity_to_spherical(scenario.uav.velocity)
    assert mag == pytest.approx(23.0, abs=1e-12)
    assert az == pytest.approx(np.deg2rad(70.0), abs=1e-12)
    assert el == pytest.approx(np.deg2rad(-40.0), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 50), st.floats(-np.pi, np.pi - 1e-6), st.floats(-1.4, 1.4),
       st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100), st.floats(0, 25)), min_size=3, max_size=3))
def test_solve_velocity_exact_for_random_triples(speed, az, el, coords):
    uav = UavState(np.array([1.0, -3.0, 60.0]), speed, az, el)
    sites = [BsSite(i, c) for i, c in enumerate(coords)]
    speeds = [radial_params(s, uav).radial_speed for s in sites]
    try:
        sol = solve_velocity(sites, uav.position, speeds)
    except DegenerateGeometryError:
        return
    a = np.array([los_unit_vector(s, uav.position) for s in sites])
    # conditioning bounds the achievable accuracy
    tol = 1e-12 * np.linalg.cond(a) * max(speed, 1.0) + 1e-9
    np.testing.assert_allclose(sol.vector, uav.velocity, atol=tol)
    assert np.linalg.norm(sol.vector) == pytest.approx(sol.spherical[0], abs=1e-9)
