import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drsurrogate.core import BodyContact, DegenerateDistance, DrsParams, Restriction
from drsurrogate.risk import (
    car_following_accel,
    default_e_max,
    desired_velocity,
    interactive_accel_1d,
    interactive_acceleration_1d,
    interactive_field,
    log_size,
    log_virtual_energy,
    restriction_acceleration,
    restriction_field,
    speed_acceleration,
    speed_field,
    total_risk,
    virtual_energy,
)

from conftest import random_feasible_params, vehicle

P = DrsParams()


def accel_1d(g, v_f, v_l, a_l=0.0, p=P):
    return interactive_acceleration_1d(vehicle(x=g, v=v_l, a=a_l, id="L"), vehicle(v=v_f, id="F"), p)


# --- virtual energy ------------------------------------------------------------------


def test_virtual_energy_trivial():
    assert virtual_energy(vehicle(length=1, width=1), 0.3, P) == 1.0
    p = DrsParams(s_l=0.0, s_w=0.0)
    assert virtual_energy(vehicle(length=7.0, width=2.5), -1.0, p) == 1.0


def test_virtual_energy_oracle():
    got = virtual_energy(vehicle(v=10.0), -1.0, P)
    assert got == pytest.approx(3.0600584022727177e-24, rel=1e-12)


@given(st.floats(0, 60), st.floats(-1, 1), st.floats(0.5, 20), st.floats(0.5, 5))
def test_log_energy_matches_naive(v, c, length, width):
    veh = vehicle(v=v, length=length, width=width)
    naive = virtual_energy(veh, c, P)
    assert math.exp(log_virtual_energy(veh, c, P)) == pytest.approx(naive, rel=1e-9)


def test_naive_energy_overflows_where_log_does_not():
    veh = vehicle(v=140.0)
    assert math.isfinite(log_virtual_energy(veh, 1.0, P))
    with pytest.raises(OverflowError):
        virtual_energy(veh, 1.0, P)


# --- interactive field -----------------------------------------------------------------


def test_interactive_field_oracle():
    e = interactive_field((-20.0, 0.0), vehicle(), P)
    assert e.magnitude == pytest.approx(0.021820437047359524, rel=1e-12)
    assert e.direction == pytest.approx((-1.0, 0.0))


def test_interactive_field_decays_and_zero_lambda():
    near = interactive_field((-20.0, 0.0), vehicle(v=5.0), P).magnitude
    far = interactive_field((-2e6, 0.0), vehicle(v=5.0), P).magnitude
    assert far < near * 1e-4
    zero = interactive_field((-20.0, 0.0), vehicle(), DrsParams(lam=0.0))
    assert zero.magnitude == 0.0


def test_interactive_field_degenerate():
    with pytest.raises(DegenerateDistance) as info:
        interactive_field((0.0, 0.0), vehicle(id="src"), P)
    assert info.value.source == "src"


def test_interactive_field_direction_rotates_with_heading():
    src = vehicle(theta=math.pi / 2, v=3.0)
    e = interactive_field((0.0, 12.0), src, P)
    assert np.hypot(*e.direction) == pytest.approx(1.0, abs=1e-12)
    assert e.direction == pytest.approx((0.0, 1.0), abs=1e-12)


# --- interactive 1-D -------------------------------------------------------------------


def test_1d_vanishes_at_range():
    a = accel_1d(1e9, 20, 20)
    assert a < 0.0 and a > -1e-6


def test_1d_speed_difference_ordering():
    assert accel_1d(30, 25, 20) < accel_1d(30, 20, 20)


def test_1d_gap_ordering():
    assert accel_1d(40, 20, 20) > accel_1d(30, 20, 20)


def test_1d_degenerate_gap():
    with pytest.raises(DegenerateDistance):
        accel_1d(5e-4, 10, 10)
    with pytest.raises(DegenerateDistance):
        accel_1d(-3.0, 10, 10)


def test_1d_matches_naive_formula():
    g, vf, vl, al = 25.0, 12.0, 10.0, -0.5
    k = g * math.exp(P.w1 * vl) / (1 + P.w2 * vl)
    naive = -P.lam * 4.5**P.s_l * 1.8**P.s_w * math.exp(P.alpha * (vf - vl) - P.beta * al) / k**P.beta2
    assert accel_1d(g, vf, vl, al) == pytest.approx(naive, rel=1e-12)


def test_1d_leader_braking_strengthens_repulsion():
    for g in (5.0, 30.0, 120.0):
        assert accel_1d(g, 15, 15, -2.0) < accel_1d(g, 15, 15, 0.0)


def test_1d_log_domain_survives_extreme_speed_gap():
    a = accel_1d(10.0, 40.0, 0.0)
    assert a == -math.inf or a < -1e80
    assert not math.isnan(a)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_1d_monotone_for_random_params(seed):
    rng = np.random.default_rng(seed)
    (p,) = random_feasible_params(rng, 1)
    v_l, a_l = rng.uniform(0, 40), rng.uniform(-3, 3)
    v_f = rng.uniform(0, 40)
    g = np.linspace(2.0, 200.0, 200)
    a = interactive_accel_1d(g, v_f, v_l, a_l, 4.5, 1.8, p)
    finite = np.isfinite(a) & (a != 0.0)
    assert np.all(np.diff(a[finite]) > 0)
    v = np.linspace(0.0, 40.0, 200)
    a = interactive_accel_1d(30.0, v, v_l, a_l, 4.5, 1.8, p)
    finite = np.isfinite(a) & (a != 0.0)
    assert np.all(np.diff(a[finite]) < 0)


# --- restrictions ----------------------------------------------------------------------


def lane_line(offset, t_omega=1.0):
    return Restriction.segment("line", (-100.0, offset), (100.0, offset), t_omega)


def test_restriction_lateral_oracle():
    e = restriction_field(vehicle(), lane_line(1.6), P)
    assert e.magnitude == pytest.approx(2.0408163265306123, rel=1e-12)
    assert e.direction == pytest.approx((0.0, -1.0))


def test_restriction_zero_severity():
    assert restriction_field(vehicle(), lane_line(1.6, 0.0), P).magnitude == 0.0
    assert np.all(restriction_acceleration(vehicle(v=10.0), lane_line(1.6, 0.0), P) == 0.0)


def test_restriction_decay():
    far = restriction_field(vehicle(), lane_line(1e4), P).magnitude
    assert 0.0 < far < 1e-7


def test_restriction_body_contact():
    with pytest.raises(BodyContact) as info:
        restriction_field(vehicle(), lane_line(0.9), P)
    assert info.value.source == "line"


def test_restriction_accel_at_rest_equals_field():
    r = lane_line(1.6)
    acc = restriction_acceleration(vehicle(v=0.0), r, P)
    assert np.hypot(*acc) == pytest.approx(restriction_field(vehicle(), r, P).magnitude, rel=1e-12)


def test_restriction_accel_speed_factor_oracle():
    # restriction directly behind: repulsion points along the velocity, cos phi = 1
    r = Restriction.point("p", -2.95, 0.0, 1.0)
    acc = restriction_acceleration(vehicle(v=5.0), r, P)
    assert acc[0] == pytest.approx(3.3850578753351658e-12, rel=1e-9)
    assert acc[1] == 0.0


# --- desired velocity and speed surrogate ----------------------------------------------


def test_desired_velocity_examples():
    assert desired_velocity(9.0, DrsParams(gamma=1.0)) == pytest.approx(18.22)
    assert desired_velocity(9.0, DrsParams(gamma=0.0)) == 9.0
    assert desired_velocity(18.0, P) == pytest.approx(21.08, rel=1e-12)


def test_desired_velocity_bounds():
    # raw value 14*18.22 - 13*20 = -4.92
    assert desired_velocity(20.0, P) == pytest.approx(18.22)
    assert desired_velocity(20.0, DrsParams(vd_min=0.0)) == 0.0
    assert desired_velocity(0.0, P) == pytest.approx(2 * 18.22)
    assert desired_velocity(0.0, DrsParams(vd_max=30.0)) == 30.0


def test_speed_acceleration_examples():
    assert speed_acceleration(10.0, 10.0, P) == 0.0
    assert speed_acceleration(9.0, 10.0, P) == pytest.approx(1.554, rel=1e-12)
    assert speed_acceleration(11.0, 10.0, P) == pytest.approx(-1.554, rel=1e-12)
    assert speed_acceleration(12.0, 10.0, P) == pytest.approx(-2.3165639410855223, rel=1e-12)


@given(st.floats(1e-6, 60, allow_nan=False))
def test_speed_acceleration_odd(dv):
    # v_d - 0 = dv and v_d - 2 dv = -dv, both exact in floating point
    assert speed_acceleration(0.0, dv, P) == -speed_acceleration(2 * dv, dv, P)


@given(st.floats(0.05, 3.0), st.floats(1, 40))
def test_speed_acceleration_decreasing_in_v(sigma, v_d):
    p = DrsParams(sigma=sigma)
    v = np.linspace(0, 60, 500)
    assert np.all(np.diff(speed_acceleration(v, v_d, p)) < 0)


def test_speed_acceleration_decreasing_negative_sigma():
    # a_max = E_max sigma' / v_d^sigma' is negative when sigma' < 0
    p = DrsParams(sigma=-1.5, a_max=-0.5).validate()
    v = np.linspace(0, 40, 400)
    v = v[np.abs(v - 20.0) > 1e-9]
    a = speed_acceleration(v, 20.0, p)
    below, above = a[v < 20], a[v > 20]
    assert np.all(np.diff(below) < 0) and np.all(np.diff(above) < 0)


def test_speed_field_examples():
    veh = vehicle(v=15.0)
    assert speed_field(veh, 15.0, P).magnitude == 0.0
    size = math.exp(log_size(4.5, 1.8, P))
    e_max = 3.0
    assert speed_field(vehicle(v=0.0), 15.0, P, e_max).magnitude == pytest.approx(size * e_max, rel=1e-12)
    with pytest.raises(ValueError):
        speed_field(veh, 0.0, P)


def test_speed_field_grows_with_deviation():
    v_d = desired_velocity(17.0, P)
    mags = [speed_field(vehicle(v=v_d + d), v_d, P).magnitude for d in np.linspace(0, 20, 50)]
    assert np.all(np.diff(mags) > 0)
    mags = [speed_field(vehicle(v=v_d - d), v_d, P).magnitude for d in np.linspace(0, v_d, 50)]
    assert np.all(np.diff(mags) > 0)


def test_default_e_max_consistency():
    # a_max = E_max * sigma' / v_d^sigma'
    v_d = 21.0
    e = default_e_max(v_d, P)
    assert e * (P.sigma + 1) / v_d ** (P.sigma + 1) == pytest.approx(P.a_max, rel=1e-12)


# --- total risk ------------------------------------------------------------------------


def test_total_risk_empty_at_desired_speed():
    r = total_risk(vehicle(v=P.v0), [], [], P)
    assert r.total_strength == 0.0
    assert r.a_total == 0.0


def test_total_risk_single_leader_matches_1d():
    ego = vehicle(v=15.0, id="F")
    lead = vehicle(x=25.0, v=14.0, a=-0.3, id="L")
    r = total_risk(ego, [lead], [], P)
    expect = car_following_accel(25.0, 15.0, 14.0, -0.3, 4.5, 1.8, P)
    assert r.a_total == pytest.approx(float(expect), rel=1e-9)
    assert r.a_components[("vehicle", "L")] == pytest.approx(accel_1d(25.0, 15.0, 14.0, -0.3), rel=1e-9)


def test_total_risk_two_identical_leaders_double():
    v_d = desired_velocity(18.0, P)
    ego = vehicle(v=v_d)
    one = total_risk(ego, [vehicle(x=30, y=1.0, v=18.0, id="a")], [], P)
    two = total_risk(ego, [vehicle(x=30, y=1.0, v=18.0, id="a"), vehicle(x=30, y=-1.0, v=18.0, id="b")], [], P)
    assert one.e_speed.magnitude == 0.0
    assert two.total_strength == pytest.approx(2 * one.total_strength, rel=1e-12)


def test_total_risk_is_magnitude_sum_and_clamped():
    ego = vehicle(v=20.0)
    others = [vehicle(x=3.0, v=0.0, id="a"), vehicle(x=-30.0, y=3.5, v=25.0, id="b")]
    restr = [lane_line(1.75), lane_line(-1.75, 2.0)]
    r = total_risk(ego, others, restr, P)
    parts = [e.magnitude for _, e in r.e_interactive] + [e.magnitude for _, e in r.e_restriction]
    assert r.total_strength == pytest.approx(sum(parts) + r.e_speed.magnitude, rel=1e-12)
    assert P.a_phys_min <= r.a_total <= P.a_phys_max


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(5, 80), st.floats(-4, 4), st.floats(0, 35)), min_size=1, max_size=4),
       st.integers(0, 3))
def test_removing_a_component_never_increases_strength(cars, drop):
    ego = vehicle(v=17.0)
    others = [vehicle(x=x, y=y, v=v, id=i) for i, (x, y, v) in enumerate(cars)]
    full = total_risk(ego, others, [lane_line(2.0)], P, leader=None).total_strength
    fewer = others[:drop % len(others)] + others[drop % len(others) + 1:]
    r = total_risk(ego, fewer, [lane_line(2.0)], P)
    # leader choice can change the speed term; compare the field parts only
    def fields(res):
        return sum(e.magnitude for _, e in res.e_interactive) + sum(e.magnitude for _, e in res.e_restriction)
    assert fields(r) <= fields(total_risk(ego, others, [lane_line(2.0)], P))
    assert full >= fields(r)


def test_total_risk_names_offending_source():
    with pytest.raises(DegenerateDistance) as info:
        total_risk(vehicle(), [vehicle(id="ghost")], [], P)
    assert info.value.source == "ghost"
    with pytest.raises(BodyContact) as info:
        total_risk(vehicle(), [], [lane_line(0.5)], P)
    assert info.value.source == "line"
