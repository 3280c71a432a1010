import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import MARS_PHASE, R_MARS, T_EARTH, T_MARS
from ipnsim.ephemeris import (CONSTANTS, DEFAULT_SUN_EXCLUSION, Ephemeris, EphemerisError, OrbitSpec,
                              UnknownBody, segment_blocked)
from ipnsim.units import AU, DAY

SUN = [("Sun", DEFAULT_SUN_EXCLUSION)]


def test_constants():
    assert CONSTANTS.c == 2.99792458e8
    assert CONSTANTS.au == 1.495978707e11
    assert CONSTANTS.au_light_time == pytest.approx(499.005, abs=1e-3)


def test_earth_phase_definition(solar):
    p = solar.position_at("Earth", 0.0)
    assert p.x == pytest.approx(AU) and p.y == pytest.approx(0.0, abs=1e-3)
    p = solar.position_at("Earth", T_EARTH / 2)
    assert p.x == pytest.approx(-AU) and abs(p.y) < 1.0


def test_l4_l5_lead_and_trail_by_sixty_degrees(solar):
    p4 = solar.position_at("EL4", 0.0)
    assert p4.x == pytest.approx(AU * math.cos(math.radians(60)))
    assert p4.y == pytest.approx(AU * math.sin(math.radians(60)))
    p5 = solar.position_at("EL5", 0.0)
    assert p5.y == pytest.approx(-AU * math.sin(math.radians(60)))


def test_l1_l2_hill_offsets(solar):
    hill = AU * (3.0035e-6 / 3.0) ** (1.0 / 3.0)
    assert solar.position_at("EL1", 0.0).x == pytest.approx(AU - hill)
    assert solar.position_at("EL2", 0.0).x == pytest.approx(AU + hill)
    assert hill / AU == pytest.approx(0.0100, abs=1e-4)
    # Jupiter's L1 sits about 0.355 au sunward of the planet
    t = 10 * DAY
    gap = solar.distance("Jupiter", "JL1", t)
    assert gap / AU == pytest.approx(0.3552, abs=1e-3)


def test_l3_opposite_parent(solar):
    for t in (0.0, 50 * DAY, 200 * DAY):
        e, l3 = solar.position_at("Earth", t), solar.position_at("EL3", t)
        assert l3.x == pytest.approx(-e.x, abs=1e-3) and l3.y == pytest.approx(-e.y, abs=1e-3)


def test_planetocentric_adds_parent(solar):
    e, m = solar.position_at("Earth", 0.0), solar.position_at("Moon", 0.0)
    assert m.x - e.x == pytest.approx(384400e3) and m.y - e.y == pytest.approx(0.0, abs=1e-3)


def test_errors(solar):
    with pytest.raises(UnknownBody):
        solar.position_at("Vulcan", 0.0)
    with pytest.raises(ValueError):
        solar.position_at("Earth", -1.0)
    cyclic = Ephemeris({"A": OrbitSpec("circular-planetocentric", 1.0, 1.0, parent="B"),
                        "B": OrbitSpec("circular-planetocentric", 1.0, 1.0, parent="A")})
    with pytest.raises(EphemerisError, match="cyclic"):
        cyclic.position_at("A", 0.0)
    with pytest.raises(EphemerisError):
        OrbitSpec("circular-heliocentric", 0.0, 1.0)
    with pytest.raises(EphemerisError):
        OrbitSpec("lagrangian", parent="Earth", lagrange_point="L6")
    with pytest.raises(ValueError):
        solar.line_of_sight("Earth", "Earth", 0.0)


def test_distance_extremes():
    eph = Ephemeris({"E": OrbitSpec("circular-heliocentric", AU, T_EARTH, 0.0),
                     "M0": OrbitSpec("circular-heliocentric", 1.524 * AU, T_MARS, 0.0),
                     "M1": OrbitSpec("circular-heliocentric", 1.524 * AU, T_MARS, math.pi)})
    assert eph.distance("E", "M0", 0.0) / AU == pytest.approx(0.524)
    assert eph.distance("E", "M1", 0.0) / AU == pytest.approx(2.524)
    assert eph.distance("E", "E", 123.0) == 0.0


def test_line_of_sight_examples():
    eph = Ephemeris({"Sun": OrbitSpec("fixed-point"),
                     "E": OrbitSpec("fixed-point", AU, phase=0.0),
                     "M": OrbitSpec("fixed-point", 1.524 * AU, phase=math.pi),
                     "M2": OrbitSpec("fixed-point", 1.524 * AU, phase=0.0)})
    assert eph.line_of_sight("E", "M", 0.0, SUN) is False
    assert eph.line_of_sight("E", "M2", 0.0, SUN) is True


def test_endpoint_on_exclusion_boundary_is_not_blocked():
    # the closest point is an endpoint, not strictly interior
    assert not segment_blocked((1.0, 0.0), (5.0, 0.0), (0.0, 0.0), 2.0)
    assert segment_blocked((-1.0, 0.5), (1.0, 0.5), (0.0, 0.0), 1.0)
    assert not segment_blocked((-1.0, 1.0), (1.0, 1.0), (0.0, 0.0), 1.0)  # tangent: not closer


def test_synodic_period(solar):
    assert solar.synodic_period("Earth", "Mars") / DAY == pytest.approx(779.93, abs=0.01)
    assert solar.synodic_period("Earth", "Sun") == pytest.approx(T_EARTH)
    twin = Ephemeris({"A": OrbitSpec("circular-heliocentric", AU, 10.0),
                      "B": OrbitSpec("circular-heliocentric", 2 * AU, 10.0)})
    with pytest.raises(EphemerisError):
        twin.synodic_period("A", "B")


def test_earth_mars_distance_envelope(solar):
    ts = np.linspace(0.0, solar.synodic_period("Earth", "Mars"), 200001)
    ex, ey = solar.positions("Earth", ts)
    mx, my = solar.positions("Mars", ts)
    d = np.hypot(mx - ex, my - ey) / AU
    assert 0.52 <= d.min() <= 0.53
    assert 2.51 <= d.max() <= 2.53


def test_conjunction_duration_matches_small_angle_analysis(solar):
    # closed form: near conjunction the Earth-Mars chord passes the Sun at
    # perpendicular distance p = rE*rM*sin(d)/|E-M| with d the angle past
    # alignment; blocking lasts while p < 0.035 au
    re, rm = 1.0, R_MARS / AU
    k = re * rm / (re + rm)  # ~0.6038
    assert k == pytest.approx(0.6038, abs=1e-4)
    delta = 0.035 / k  # angular half-width (small angle)
    rel_rate = 2 * math.pi * (1 / T_EARTH - 1 / T_MARS)
    predicted = 2 * delta / rel_rate / DAY
    # dense sweep straight from the positions (no contact-plan machinery)
    ts = np.arange(250 * DAY, 350 * DAY, 60.0)
    ex, ey = solar.positions("Earth", ts)
    mx, my = solar.positions("Mars", ts)
    dx, dy = mx - ex, my - ey
    u = -(ex * dx + ey * dy) / (dx * dx + dy * dy)
    perp = np.abs(ex * dy - ey * dx) / np.hypot(dx, dy)
    blocked = (u > 0) & (u < 1) & (perp < 0.035 * AU)
    swept = blocked.sum() * 60.0 / DAY
    assert swept == pytest.approx(predicted, abs=0.05)
    assert swept == pytest.approx(14.39, abs=0.02)
    first = ts[blocked][0] / DAY
    assert first == pytest.approx(292.83, abs=0.01)


def _grid(t):
    # 1/1024 s grid: t + T is then exact in binary floating point
    return round(t * 1024) / 1024


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 10.0), st.sampled_from(["Earth", "Mars", "Moon", "EL4", "ML1"]))
def test_periodic(solar, frac, body):
    periods = {"Earth": T_EARTH, "Mars": T_MARS, "EL4": T_EARTH, "ML1": T_MARS}
    if body == "Moon":
        # relative to Earth, whose own period differs
        period = solar.spec("Moon").period
        t = _grid(frac * period)
        a = np.subtract(solar.position_at("Moon", t), solar.position_at("Earth", t))
        b = np.subtract(solar.position_at("Moon", t + period), solar.position_at("Earth", t + period))
    else:
        period = periods[body]
        t = _grid(frac * period)
        a = np.array(solar.position_at(body, t))
        b = np.array(solar.position_at(body, t + period))
    assert np.hypot(*(a - b)) < 1e-3


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 10.0))
def test_periodic_error_bounded_by_time_resolution(solar, frac):
    # for arbitrary float t the sum t + T rounds; the error is speed * ulp
    t = frac * T_MARS
    a = np.array(solar.position_at("Mars", t))
    b = np.array(solar.position_at("Mars", t + T_MARS))
    speed = 2 * math.pi * R_MARS / T_MARS
    assert np.hypot(*(a - b)) <= 1e-3 + 2 * speed * math.ulp(t + T_MARS)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 2000 * DAY), st.permutations(["Earth", "Mars", "Jupiter", "Moon", "EL4"]))
def test_distance_symmetry_and_triangle(solar, t, bodies):
    a, b, c = bodies[:3]
    ab, ba = solar.distance(a, b, t), solar.distance(b, a, t)
    assert ab == ba
    assert ab <= solar.distance(a, c, t) + solar.distance(c, b, t) + 1e-3


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.0, 1600 * DAY), st.sampled_from([("Earth", "Mars"), ("EL4", "Mars"), ("Earth", "Jupiter"),
                                                     ("EL1", "ML1"), ("Moon", "Mars")]))
def test_line_of_sight_symmetric(solar, t, pair):
    a, b = pair
    assert solar.line_of_sight(a, b, t, SUN) == solar.line_of_sight(b, a, t, SUN)


def test_vectorised_positions_match_scalar(solar):
    ts = np.array([0.0, 1.5 * DAY, 400 * DAY])
    xs, ys = solar.positions("EL4", ts)
    for t, x, y in zip(ts, xs, ys):
        p = solar.position_at("EL4", t)
        assert (x, y) == pytest.approx((p.x, p.y))
