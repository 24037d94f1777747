"""Car-following simulation: the recorded leader is replayed, the follower is integrated.

Integration is a ballistic update with piecewise-constant acceleration held
over each step. Speed is floored at zero; when the floor engages inside a
step the follower stops exactly (displacement v^2 / 2|a|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .baselines import IdmParams, idm_accel, idm_accel_raw, net_gap
from .core import DegenerateDistance, DrsParams, VehicleState
from .risk import car_following_accel


class CarFollowingModel(Protocol):
    a_phys_min: float
    a_phys_max: float

    def accel(self, leader: VehicleState, follower: VehicleState) -> float: ...


class DrsModel:
    def __init__(self, params: DrsParams):
        self.params = params
        self.a_phys_min = params.a_phys_min
        self.a_phys_max = params.a_phys_max

    def accel(self, leader: VehicleState, follower: VehicleState) -> float:
        p = self.params
        gap = leader.x - follower.x
        if gap <= p.eps_dist:
            raise DegenerateDistance(f"gap {gap:.3g} m is within eps", source=leader.id)
        a = float(
            car_following_accel(
                gap, follower.v, leader.v, leader.a, leader.length, leader.width, p
            )
        )
        return _clamp(a, p.a_phys_min, p.a_phys_max)


class IdmModel:
    def __init__(self, params: IdmParams):
        self.params = params
        self.a_phys_min = params.a_phys_min
        self.a_phys_max = params.a_phys_max

    def accel(self, leader: VehicleState, follower: VehicleState) -> float:
        return idm_accel(leader, follower, self.params)


class ReplayModel:
    """Plays back a recorded acceleration series.

    ``mode="midpoint"`` interpolates the record at the centre of the step that
    starts at the follower's timestamp, which keeps the constant-acceleration
    step second-order accurate. ``mode="sample"`` returns the nearest sample.
    """

    def __init__(self, t: Sequence[float], a: Sequence[float], a_phys_min=-10.0, a_phys_max=10.0,
                 mode: str = "midpoint"):
        if mode not in ("midpoint", "sample"):
            raise ValueError(f"unknown replay mode {mode!r}")
        self.t = np.asarray(t, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.a_phys_min = a_phys_min
        self.a_phys_max = a_phys_max
        self.mode = mode

    def accel(self, leader: VehicleState, follower: VehicleState) -> float:
        k = int(np.argmin(np.abs(self.t - follower.t)))
        if self.mode == "sample" or k + 1 >= len(self.t):
            return float(self.a[k])
        return 0.5 * float(self.a[k] + self.a[k + 1])


def _clamp(a: float, lo: float, hi: float) -> float:
    if math.isnan(a):
        return a
    return min(max(a, lo), hi)


def kinematic_update(x, v, a, dt):
    """Advance position and speed by one step; works on floats and arrays."""
    v_new = v + a * dt
    stop = v_new < 0.0
    safe_a = np.where(stop, a, -1.0)
    x_new = np.where(stop, x - v * v / (2.0 * safe_a), x + v * dt + 0.5 * a * dt * dt)
    v_new = np.where(stop, 0.0, v_new)
    if np.ndim(x_new) == 0:
        return float(x_new), float(v_new)
    return x_new, v_new


def model_accel(leader: VehicleState, follower: VehicleState, model: CarFollowingModel) -> float:
    """Clamped model acceleration; a degenerate gap maps to full braking."""
    try:
        a = model.accel(leader, follower)
    except DegenerateDistance:
        a = model.a_phys_min
    return _clamp(a, model.a_phys_min, model.a_phys_max)


def step(
    leader: VehicleState, follower: VehicleState, model: CarFollowingModel, dt: float
) -> VehicleState:
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    a = model_accel(leader, follower, model)
    x, v = kinematic_update(follower.x, follower.v, a, dt)
    return VehicleState(
        follower.id, follower.t + dt, x, follower.y, v, a,
        follower.theta, follower.length, follower.width,
    )


class EmptyTrajectory(ValueError):
    pass


def rmse(real, sim) -> float:
    real = np.asarray(real, dtype=float)
    sim = np.asarray(sim, dtype=float)
    if real.shape != sim.shape:
        raise ValueError(f"length mismatch: {real.shape} vs {sim.shape}")
    if real.size == 0:
        raise ValueError("rmse of an empty series")
    return float(np.sqrt(np.mean((real - sim) ** 2)))


@dataclass
class SimulationResult:
    pair_id: str
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    gap: np.ndarray
    rmse_position: float
    collision_flag: bool
    numeric_error: bool = False

    def rows(self):
        for k in range(len(self.t)):
            yield self.t[k], self.x[k], self.v[k], self.a[k], self.gap[k]


def simulate_pair(pair, model: CarFollowingModel, dt: float | None = None) -> SimulationResult:
    """Replay ``pair``'s leader and integrate its follower under ``model``.

    Step sizes follow the pair's timestamps; pass ``dt`` to resample the pair
    to a different uniform cadence first.
    """
    if pair is None or len(pair.t) < 2:
        raise EmptyTrajectory("pair needs at least 2 samples")
    if dt is not None and not np.allclose(np.diff(pair.t), dt, rtol=0, atol=1e-9):
        pair = pair.resample(dt)
    n = len(pair.t)
    xs, vs, acc = np.empty(n), np.empty(n), np.empty(n)
    f = VehicleState(
        pair.follower_id, pair.t[0], pair.x_f[0], 0.0, max(pair.v_f[0], 0.0),
        pair.a_f[0], 0.0, pair.len_f, pair.wid_f,
    )
    bad = False
    for k in range(n):
        lead = pair.leader_state(k)
        xs[k], vs[k] = f.x, f.v
        if k == n - 1:
            acc[k] = model_accel(lead, f, model)
            break
        f = step(lead, f, model, pair.t[k + 1] - pair.t[k])
        acc[k] = f.a
        if not (math.isfinite(f.x) and math.isfinite(f.v)):
            bad = True
    bad = bad or not np.all(np.isfinite(acc))
    gap = pair.x_l - xs
    return SimulationResult(
        pair_id=pair.pair_id,
        t=np.array(pair.t, dtype=float),
        x=xs,
        v=vs,
        a=acc,
        gap=gap,
        rmse_position=rmse(pair.x_f, xs) if not bad else math.inf,
        collision_flag=bool(np.any(gap <= 0.0)),
        numeric_error=bad,
    )


# --- vectorised path used by the calibrator -------------------------------------------


@dataclass
class PairBatch:
    """Pairs padded to a common length; arrays are (T, K)."""

    t: np.ndarray
    x_l: np.ndarray
    v_l: np.ndarray
    a_l: np.ndarray
    x_f: np.ndarray
    v_f0: np.ndarray
    len_l: np.ndarray
    wid_l: np.ndarray
    len_f: np.ndarray
    lengths: np.ndarray

    @classmethod
    def from_pairs(cls, pairs) -> "PairBatch":
        k = len(pairs)
        tmax = max(len(p.t) for p in pairs)
        def pad(attr):
            out = np.zeros((tmax, k))
            for j, p in enumerate(pairs):
                arr = np.asarray(getattr(p, attr), dtype=float)
                out[: len(arr), j] = arr
                out[len(arr):, j] = arr[-1]
            return out
        return cls(
            t=pad("t"), x_l=pad("x_l"), v_l=pad("v_l"), a_l=pad("a_l"), x_f=pad("x_f"),
            v_f0=np.array([max(p.v_f[0], 0.0) for p in pairs]),
            len_l=np.array([p.len_l for p in pairs]),
            wid_l=np.array([p.wid_l for p in pairs]),
            len_f=np.array([p.len_f for p in pairs]),
            lengths=np.array([len(p.t) for p in pairs]),
        )


def simulate_batch(batch: PairBatch, kind: str, params):
    """Simulate every (parameter set, pair) combination at once.

    ``params`` is a ``DrsParams``/``IdmParams`` whose calibrated fields are
    arrays of shape (P, 1). Returns ``(rmse, collided, bad)`` arrays of shape
    (P, K); semantics match :func:`simulate_pair` cell by cell.
    """
    tmax, k = batch.t.shape
    p_count = max([np.shape(v)[0] for v in vars(params).values() if np.ndim(v) == 2] or [1])
    x = np.broadcast_to(batch.x_f[0], (p_count, k)).copy()
    v = np.broadcast_to(batch.v_f0, (p_count, k)).copy()
    sq = np.zeros((p_count, k))
    collided = np.zeros((p_count, k), dtype=bool)
    bad = np.zeros((p_count, k), dtype=bool)
    lo, hi = params.a_phys_min, params.a_phys_max

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for i in range(tmax):
            active = i < batch.lengths
            gap = batch.x_l[i] - x
            collided |= (gap <= 0.0) & active
            sq += np.where(active, (batch.x_f[i] - x) ** 2, 0.0)
            if i == tmax - 1:
                break
            if kind == "drs":
                degenerate = gap <= params.eps_dist
                a = car_following_accel(
                    np.where(degenerate, 1.0, gap), v, batch.v_l[i], batch.a_l[i],
                    batch.len_l, batch.wid_l, params,
                )
            else:
                s = net_gap(gap, batch.len_l, batch.len_f)
                degenerate = s <= 0.0
                a = idm_accel_raw(np.where(degenerate, 1.0, s), v, batch.v_l[i], params)
            a = np.where(degenerate, lo, a)
            bad |= np.isnan(a) & active
            a = np.minimum(np.maximum(a, lo), hi)
            dt = batch.t[i + 1] - batch.t[i]
            xn, vn = kinematic_update(x, v, a, dt)
            step_active = (i + 1) < batch.lengths
            x = np.where(step_active, xn, x)
            v = np.where(step_active, vn, v)
            bad |= ~(np.isfinite(x) & np.isfinite(v))

    err = np.sqrt(sq / batch.lengths)
    err = np.where(bad, np.inf, err)
    return err, collided, bad


def stack_params(vectors: np.ndarray, names: Sequence[str], base):
    """Build a params object whose ``names`` fields are (P, 1) columns of ``vectors``."""
    from dataclasses import replace

    cols = {n: vectors[:, j : j + 1] for j, n in enumerate(names)}
    return replace(base, **cols)
