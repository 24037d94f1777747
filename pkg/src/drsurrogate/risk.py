"""Interactive-vehicle, restriction and speed risk surrogates.

Field strengths and accelerations are products of powers and exponentials
whose exponents reach ~alpha*v (about 108 at 20 m/s with the default
parameters). Everything that feeds an acceleration is therefore evaluated as
``exp(sum of logs)``; :func:`virtual_energy` is the one raw-domain helper and
overflows at highway speeds.

The 1-D car-following functions accept numpy arrays (and ``DrsParams`` whose
fields are arrays) and broadcast, which is what the batch simulator relies on.
"""

from __future__ import annotations

import math
from typing import Hashable, Sequence

import numpy as np

from .core import (
    BodyContact,
    DegenerateDistance,
    DrsParams,
    FieldVector,
    Restriction,
    RiskBreakdown,
    VehicleState,
    rotation,
    speed_factor_log,
    support_distance,
    to_vehicle_frame,
)


def log_size(length, width, params: DrsParams):
    return params.s_l * np.log(length) + params.s_w * np.log(width)


def virtual_energy(veh: VehicleState, cos_phi: float, params: DrsParams) -> float:
    """Raw virtual energy L^s_l W^s_w e^{alpha v cos(phi)}.

    Overflows for alpha*v*cos(phi) > ~709; use :func:`log_virtual_energy`
    when composing fields.
    """
    return (veh.length ** params.s_l) * (veh.width ** params.s_w) * math.exp(
        params.alpha * veh.v * cos_phi
    )


def log_virtual_energy(veh: VehicleState, cos_phi: float, params: DrsParams) -> float:
    return float(log_size(veh.length, veh.width, params)) + params.alpha * veh.v * cos_phi


def _unit(vec) -> np.ndarray:
    n = math.hypot(vec[0], vec[1])
    return np.asarray(vec, dtype=float) / n


def _cos_between(a, b) -> float:
    na, nb = math.hypot(*a), math.hypot(*b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _virtual_offset(subject_xy, other: VehicleState, params: DrsParams):
    """Virtual-distance vector in ``other``'s frame and its length."""
    xl, yl = to_vehicle_frame(subject_xy, other)
    kv = np.array([xl * math.exp(float(speed_factor_log(other.v, params))), yl])
    return kv, math.hypot(kv[0], kv[1])


def interactive_field(
    subject_xy,
    other: VehicleState,
    params: DrsParams,
    cos_phi: float | None = None,
) -> FieldVector:
    """Field of ``other`` evaluated at ``subject_xy``.

    ``cos_phi`` is the cosine between ``other``'s velocity and the vector from
    ``other`` to the subject point; derived from geometry when omitted.
    """
    kv, k = _virtual_offset(subject_xy, other, params)
    if k <= params.eps_dist:
        raise DegenerateDistance(
            f"virtual distance {k:.3g} m to {other.id!r} is within eps", source=other.id
        )
    if cos_phi is None:
        cos_phi = _cos_between(other.heading, np.asarray(subject_xy, float) - other.position)
    if params.lam == 0.0:
        return FieldVector.zero()
    log_mag = (
        math.log(abs(params.lam))
        + log_virtual_energy(other, cos_phi, params)
        + params.beta * other.a * cos_phi
        - params.beta2 * math.log(k)
    )
    # back to the global frame; R is orthonormal so R^T is its inverse
    direction = _unit(rotation(other.theta).T @ kv) * math.copysign(1.0, params.lam)
    return FieldVector(math.exp(log_mag), (float(direction[0]), float(direction[1])))


def interactive_acceleration(
    subject: VehicleState, other: VehicleState, params: DrsParams
) -> np.ndarray:
    """Acceleration vector imposed on ``subject`` by the field of ``other``."""
    e = interactive_field(subject.position, other, params)
    if e.magnitude == 0.0:
        return np.zeros(2)
    cos_ij = _cos_between(subject.heading, other.position - subject.position)
    mag = math.exp(math.log(e.magnitude) + params.alpha * subject.v * cos_ij)
    return mag * np.asarray(e.direction)


def log_virtual_distance_1d(gap, v_leader, params: DrsParams):
    return np.log(gap) + speed_factor_log(v_leader, params)


def interactive_accel_1d(gap, v_f, v_l, a_l, length_l, width_l, params: DrsParams):
    """Array form of the single-lane interactive acceleration (always opposes the gap)."""
    log_mag = (
        np.log(np.abs(params.lam))
        + log_size(length_l, width_l, params)
        + params.alpha * (v_f - v_l)
        - params.beta * a_l
        - params.beta2 * log_virtual_distance_1d(gap, v_l, params)
    )
    return -np.sign(params.lam) * np.exp(log_mag)


def interactive_acceleration_1d(
    leader: VehicleState, follower: VehicleState, params: DrsParams
) -> float:
    """Longitudinal acceleration of ``follower`` due to ``leader`` in one lane.

    Uses centroid gap ``leader.x - follower.x``; the follower is behind the
    leader (cos = -1 seen from the leader, +1 seen from the follower).
    """
    gap = leader.x - follower.x
    if gap <= params.eps_dist:
        raise DegenerateDistance(f"gap {gap:.3g} m is within eps", source=leader.id)
    return float(
        interactive_accel_1d(
            gap, follower.v, leader.v, leader.a, leader.length, leader.width, params
        )
    )


def _restriction_geometry(subject: VehicleState, restr: Restriction, params: DrsParams):
    k_vec = restr.closest_point(subject.position) - subject.position
    dist = math.hypot(k_vec[0], k_vec[1])
    if dist == 0.0:
        raise BodyContact(f"centroid lies on restriction {restr.id!r}", source=restr.id)
    u = k_vec / dist
    k_dim = support_distance(subject.length, subject.width, subject.theta, u)
    if dist <= k_dim + params.eps_dist:
        raise BodyContact(
            f"body edge within eps of restriction {restr.id!r} "
            f"(distance {dist:.3g} m, extent {k_dim:.3g} m)",
            source=restr.id,
        )
    return u, dist - k_dim


def restriction_field(
    subject: VehicleState, restr: Restriction, params: DrsParams
) -> FieldVector:
    u, clearance = _restriction_geometry(subject, restr, params)
    if restr.t_omega == 0.0:
        return FieldVector.zero()
    return FieldVector(restr.t_omega / clearance**2, (float(-u[0]), float(-u[1])))


def restriction_acceleration(
    subject: VehicleState, restr: Restriction, params: DrsParams
) -> np.ndarray:
    e = restriction_field(subject, restr, params)
    if e.magnitude == 0.0:
        return np.zeros(2)
    cos_phi = _cos_between(subject.heading, e.direction)
    mag = math.exp(math.log(e.magnitude) - params.alpha * subject.v * cos_phi)
    return mag * np.asarray(e.direction)


def desired_velocity(v_leader, params: DrsParams):
    """Blend of flow speed and leader speed, bounded to a physical range.

    Lower bound defaults to ``min(v0, v_leader)``: upward extrapolation by a
    weight outside [0, 1] is kept, extrapolation below both reference speeds
    (negative desired speeds with the default weight) is cut. Upper bound
    defaults to ``2 * v0``.
    """
    raw = params.gamma * params.v0 + (1.0 - params.gamma) * v_leader
    lo = np.minimum(params.v0, v_leader) if params.vd_min is None else params.vd_min
    hi = 2.0 * params.v0 if params.vd_max is None else params.vd_max
    out = np.minimum(np.maximum(raw, lo), hi)
    return float(out) if np.ndim(out) == 0 else out


def speed_acceleration(v, v_d, params: DrsParams):
    """Free-driving acceleration towards the desired speed; odd in (v_d - v)."""
    dv = np.asarray(v_d - v, dtype=float)
    mag = np.where(dv == 0.0, 0.0, params.a_max * np.abs(np.where(dv == 0.0, 1.0, dv)) ** params.sigma)
    out = np.sign(dv) * mag
    return float(out) if out.ndim == 0 else out


def default_e_max(v_d: float, params: DrsParams) -> float:
    """Field scale consistent with a_max = E_max * sigma' / v_d^sigma'."""
    sp = params.sigma + 1.0
    return params.a_max * v_d**sp / sp


def speed_field(
    veh: VehicleState, v_d: float, params: DrsParams, e_max: float | None = None
) -> FieldVector:
    if not v_d > 0.0:
        raise ValueError(f"desired velocity must be > 0, got {v_d}")
    if e_max is None:
        e_max = default_e_max(v_d, params)
    dv = abs(v_d - veh.v)
    sp = params.sigma + 1.0
    if dv == 0.0 and sp > 0.0:
        return FieldVector(0.0, tuple(veh.heading))
    value = (
        math.exp(float(log_size(veh.length, veh.width, params)))
        * e_max
        * (dv / v_d) ** sp
    )
    h = veh.heading * math.copysign(1.0, value)
    return FieldVector(abs(value), (float(h[0]), float(h[1])))


def find_leader(
    subject: VehicleState, others: Sequence[VehicleState], lane_half_width: float = 1.75
) -> VehicleState | None:
    """Nearest vehicle ahead of ``subject`` whose lateral offset is within the lane."""
    best, best_x = None, math.inf
    for o in others:
        xl, yl = to_vehicle_frame(o.position, subject)
        if xl > 0.0 and abs(yl) <= lane_half_width and xl < best_x:
            best, best_x = o, xl
    return best


def total_risk(
    subject: VehicleState,
    others: Sequence[VehicleState],
    restrictions: Sequence[Restriction],
    params: DrsParams,
    leader: Hashable | None = None,
    lane_half_width: float = 1.75,
) -> RiskBreakdown:
    """Aggregate all risk sources acting on ``subject``.

    Field strengths are combined by summing magnitudes so opposing sources
    never cancel. Accelerations are summed per source, projected on the
    subject heading, then clamped. The desired velocity uses the vehicle
    ``leader`` (by id) or, if not given, the nearest in-lane vehicle ahead;
    with no leader the flow speed ``v0`` is used.
    """
    heading = subject.heading
    e_int, e_res = [], []
    a_comp, a_vec = {}, {}
    total = 0.0

    for o in others:
        e = interactive_field(subject.position, o, params)
        acc = interactive_acceleration(subject, o, params)
        e_int.append((o.id, e))
        a_vec[("vehicle", o.id)] = acc
        a_comp[("vehicle", o.id)] = float(acc @ heading)
        total += e.magnitude

    for r in restrictions:
        e = restriction_field(subject, r, params)
        acc = restriction_acceleration(subject, r, params)
        e_res.append((r.id, e))
        a_vec[("restriction", r.id)] = acc
        a_comp[("restriction", r.id)] = float(acc @ heading)
        total += e.magnitude

    if leader is not None:
        lead = next(o for o in others if o.id == leader)
    else:
        lead = find_leader(subject, others, lane_half_width)
    v_d = desired_velocity(lead.v if lead is not None else params.v0, params)
    a_s = speed_acceleration(subject.v, v_d, params)
    e_s = speed_field(subject, v_d, params) if v_d > 0.0 else FieldVector.zero()
    a_vec["speed"] = a_s * heading
    a_comp["speed"] = a_s
    total += e_s.magnitude

    a_total = min(max(sum(a_comp.values()), params.a_phys_min), params.a_phys_max)
    return RiskBreakdown(
        e_interactive=e_int,
        e_restriction=e_res,
        e_speed=e_s,
        total_strength=total,
        a_components=a_comp,
        a_vectors=a_vec,
        a_total=a_total,
    )


def car_following_accel(gap, v_f, v_l, a_l, length_l, width_l, params: DrsParams):
    """Unclamped single-lane DRS acceleration: interactive + speed terms (array form)."""
    v_d = desired_velocity(v_l, params)
    return interactive_accel_1d(gap, v_f, v_l, a_l, length_l, width_l, params) + (
        speed_acceleration(v_f, v_d, params)
    )
