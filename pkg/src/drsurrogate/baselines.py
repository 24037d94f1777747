"""Intelligent Driver Model baseline."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Sequence

import numpy as np

from .core import ConstraintViolation, DegenerateDistance, VehicleState

IDM_PARAM_NAMES = ("v_free", "a_max", "b", "s0", "T", "delta")


@dataclass(frozen=True)
class IdmParams:
    v_free: float = 21.9612
    a_max: float = 0.4708
    b: float = 1.1153
    s0: float = 3.0000
    T: float = 1.5754
    delta: float = 4.0000
    a_phys_min: float = -10.0
    a_phys_max: float = 10.0

    def validate(self) -> "IdmParams":
        bad = [n for n in IDM_PARAM_NAMES if not getattr(self, n) > 0.0]
        if bad:
            raise ConstraintViolation(f"IDM parameters must be positive: {', '.join(bad)}")
        if not self.a_phys_min < 0.0 < self.a_phys_max:
            raise ConstraintViolation("a_phys_min < 0 < a_phys_max required")
        return self

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in IDM_PARAM_NAMES], dtype=float)

    @classmethod
    def from_vector(cls, vec: Sequence[float], base: "IdmParams | None" = None) -> "IdmParams":
        base = base or cls()
        return replace(base, **{n: float(v) for n, v in zip(IDM_PARAM_NAMES, vec)})

    @classmethod
    def from_dict(cls, data: dict) -> "IdmParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConstraintViolation(f"unknown IDM parameters: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def net_gap(gap, length_l, length_f):
    """Bumper-to-bumper gap from a centroid gap."""
    return gap - 0.5 * (length_l + length_f)


def desired_gap(v, v_l, p: IdmParams):
    """Desired net gap; the dynamic part is floored at zero as in the usual IDM."""
    dynamic = v * p.T + v * (v - v_l) / (2.0 * np.sqrt(p.a_max * p.b))
    return p.s0 + np.maximum(dynamic, 0.0)


def idm_accel_raw(s, v, v_l, p: IdmParams):
    """Unclamped IDM acceleration for net gap ``s`` (array form)."""
    return p.a_max * (1.0 - (v / p.v_free) ** p.delta - (desired_gap(v, v_l, p) / s) ** 2)


def idm_accel(leader: VehicleState, follower: VehicleState, p: IdmParams) -> float:
    s = net_gap(leader.x - follower.x, leader.length, follower.length)
    if s <= 0.0:
        raise DegenerateDistance(f"net gap {s:.3g} m is not positive", source=leader.id)
    a = float(idm_accel_raw(s, follower.v, leader.v, p))
    return min(max(a, p.a_phys_min), p.a_phys_max)


def equilibrium_gap(v: float, p: IdmParams) -> float:
    """Net gap at which a follower matching a leader's constant speed ``v`` has zero acceleration."""
    return (p.s0 + v * p.T) / math.sqrt(1.0 - (v / p.v_free) ** p.delta)
