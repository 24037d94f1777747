"""Domain types and the geometry shared by the risk, dynamics and calibration code.

Units are SI throughout: metres, seconds, m/s, m/s^2. Headings are radians,
counter-clockwise from the global +x axis.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Hashable, Sequence

import numpy as np


class DrsError(ValueError):
    """Base class for model input errors."""


class DegenerateDistance(DrsError):
    """The subject sits on (or within eps of) a singular field source."""

    def __init__(self, message: str, source: Hashable | None = None):
        super().__init__(message)
        self.source = source


class BodyContact(DrsError):
    """The vehicle body touches or penetrates a restriction."""

    def __init__(self, message: str, source: Hashable | None = None):
        super().__init__(message)
        self.source = source


class ConstraintViolation(DrsError):
    """Parameter set violates an analytic calibration constraint."""


@dataclass(frozen=True)
class VehicleState:
    """Kinematic and geometric snapshot of one vehicle (centroid reference)."""

    id: Hashable
    t: float
    x: float
    y: float
    v: float
    a: float
    theta: float
    length: float
    width: float

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise DrsError(f"vehicle {self.id!r}: non-finite timestamp")
        if not self.v >= 0.0:
            raise DrsError(f"vehicle {self.id!r}: speed must be >= 0, got {self.v}")
        if not (self.length > 0.0 and self.width > 0.0):
            raise DrsError(f"vehicle {self.id!r}: length and width must be > 0")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])


# Default DRS parameters. Parameter names follow the calibration vector order.
DRS_PARAM_NAMES = (
    "v0", "alpha", "beta", "lam", "gamma", "sigma",
    "a_max", "beta2", "s_l", "s_w", "w1", "w2",
)


@dataclass(frozen=True)
class DrsParams:
    """Calibratable DRS parameters plus non-calibrated physical clamps.

    ``vd_min`` / ``vd_max`` bound the desired velocity. ``None`` selects the
    defaults: floor at ``min(v0, v_leader)``, cap at ``2 * v0``.
    """

    v0: float = 18.220
    alpha: float = 5.425
    beta: float = 0.185
    lam: float = 0.374
    gamma: float = 14.000
    sigma: float = 0.576
    a_max: float = 1.554
    beta2: float = 0.984
    s_l: float = 0.068
    s_w: float = 0.007
    w1: float = 0.239
    w2: float = 0.881
    a_phys_min: float = -10.0
    a_phys_max: float = 10.0
    eps_dist: float = 1e-3
    vd_min: float | None = None
    vd_max: float | None = None

    def validate(self) -> "DrsParams":
        problems = constraint_problems(self.lam, self.alpha, self.beta2, self.sigma, self.a_max)
        if not self.a_phys_min < 0.0 < self.a_phys_max:
            problems.append("a_phys_min < 0 < a_phys_max required")
        if not self.eps_dist > 0.0:
            problems.append("eps_dist must be > 0")
        bad = [f.name for f in fields(self) if isinstance(getattr(self, f.name), float)
               and not math.isfinite(getattr(self, f.name))]
        if bad:
            problems.append(f"non-finite values: {', '.join(bad)}")
        if problems:
            raise ConstraintViolation("; ".join(problems))
        return self

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in DRS_PARAM_NAMES], dtype=float)

    @classmethod
    def from_vector(cls, vec: Sequence[float], base: "DrsParams | None" = None) -> "DrsParams":
        base = base or cls()
        return replace(base, **{n: float(v) for n, v in zip(DRS_PARAM_NAMES, vec)})

    @classmethod
    def from_dict(cls, data: dict) -> "DrsParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConstraintViolation(f"unknown DRS parameters: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def constraint_problems(lam, alpha, beta2, sigma, a_max=None) -> list[str]:
    """Return a list of violated analytic constraints (empty when feasible).

    ``a_max`` stands for E_max*(sigma+1)/v_d^(sigma+1) with E_max > 0, so it
    must share the sign of sigma + 1; checked only when given.
    """
    out = []
    if not lam * beta2 > 0.0:
        out.append("lambda*beta2 must be > 0")
    if not lam * alpha > 0.0:
        out.append("lambda*alpha must be > 0")
    if not (sigma > 0.0 or sigma < -1.0):
        out.append("sigma must be > 0 or < -1")
    if a_max is not None and not a_max * (sigma + 1.0) > 0.0:
        out.append("a_max must share the sign of sigma + 1")
    return out


def constraints_satisfied(lam, alpha, beta2, sigma, a_max=None):
    """Vectorised feasibility mask for the analytic constraints."""
    lam, alpha, beta2, sigma = map(np.asarray, (lam, alpha, beta2, sigma))
    ok = (lam * beta2 > 0) & (lam * alpha > 0) & ((sigma > 0) | (sigma < -1))
    if a_max is not None:
        ok = ok & (np.asarray(a_max) * (sigma + 1) > 0)
    return ok


@dataclass(frozen=True)
class Restriction:
    """Static risk source: a point obstacle or a line segment (lane line, barrier)."""

    id: Hashable
    kind: str
    points: tuple[tuple[float, float], ...]
    t_omega: float

    def __post_init__(self):
        if self.kind not in ("point", "segment"):
            raise DrsError(f"restriction {self.id!r}: unknown kind {self.kind!r}")
        need = 1 if self.kind == "point" else 2
        if len(self.points) != need:
            raise DrsError(f"restriction {self.id!r}: {self.kind} needs {need} point(s)")
        if not self.t_omega >= 0.0:
            raise ConstraintViolation(f"restriction {self.id!r}: T_omega must be >= 0")
        if self.kind == "segment" and self.points[0] == self.points[1]:
            raise DrsError(f"restriction {self.id!r}: segment endpoints coincide")

    @classmethod
    def point(cls, id, x, y, t_omega):
        return cls(id, "point", ((float(x), float(y)),), float(t_omega))

    @classmethod
    def segment(cls, id, p, q, t_omega):
        return cls(id, "segment", (tuple(map(float, p)), tuple(map(float, q))), float(t_omega))

    def closest_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        a = np.asarray(self.points[0], dtype=float)
        if self.kind == "point":
            return a
        b = np.asarray(self.points[1], dtype=float)
        ab = b - a
        s = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        return a + s * ab


@dataclass(frozen=True)
class FieldVector:
    magnitude: float
    direction: tuple[float, float]

    @classmethod
    def zero(cls) -> "FieldVector":
        return cls(0.0, (0.0, 0.0))

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * np.asarray(self.direction)


@dataclass(frozen=True)
class RiskBreakdown:
    """Per-surrogate field strengths and acceleration contributions for one vehicle.

    ``a_components`` holds the longitudinal (along-heading) acceleration of
    each source keyed like the field entries; ``a_total`` is their clamped sum.
    """

    e_interactive: list[tuple[Hashable, FieldVector]] = field(default_factory=list)
    e_restriction: list[tuple[Hashable, FieldVector]] = field(default_factory=list)
    e_speed: FieldVector = field(default_factory=FieldVector.zero)
    total_strength: float = 0.0
    a_components: dict = field(default_factory=dict)
    a_vectors: dict = field(default_factory=dict)
    a_total: float = 0.0


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def to_vehicle_frame(point, origin: VehicleState) -> np.ndarray:
    """Express a global point in ``origin``'s body frame (x forward, y left)."""
    d = np.asarray(point, dtype=float) - np.array([origin.x, origin.y])
    return rotation(origin.theta) @ d


def speed_factor_log(v, params: DrsParams):
    """ln of the longitudinal stretch e^{w1 v} / (1 + w2 v) applied to virtual distance."""
    return params.w1 * v - np.log(np.abs(1.0 + params.w2 * v))


def virtual_distance(subject, other: VehicleState, params: DrsParams) -> float:
    xl, yl = to_vehicle_frame(subject, other)
    sx = xl * math.exp(float(speed_factor_log(other.v, params)))
    return math.hypot(sx, yl)


def euclidean_distance(p, q) -> float:
    return math.hypot(q[0] - p[0], q[1] - p[1])


def support_distance(length: float, width: float, theta: float, direction) -> float:
    """Centroid-to-edge extent of an L x W rectangle along a unit ``direction``."""
    u = np.asarray(direction, dtype=float)
    lon = abs(u[0] * math.cos(theta) + u[1] * math.sin(theta))
    lat = abs(-u[0] * math.sin(theta) + u[1] * math.cos(theta))
    return 0.5 * length * lon + 0.5 * width * lat
