"""Synthetic leader profiles and model-generated follower trajectories.

Used for fixtures, self-consistency calibration and the demo CLI path; the
real naturalistic dataset is not shipped.
"""

from __future__ import annotations

import math

import numpy as np

from .dataset import TrajectoryPair
from .dynamics import CarFollowingModel, simulate_pair


def time_grid(duration: float, dt: float) -> np.ndarray:
    return dt * np.arange(int(round(duration / dt)) + 1)


def constant_leader(t, v, x0=0.0):
    t = np.asarray(t, dtype=float)
    return x0 + v * t, np.full_like(t, v), np.zeros_like(t)


def sinusoidal_leader(t, v_mean, amplitude, period, x0=0.0):
    t = np.asarray(t, dtype=float)
    w = 2.0 * math.pi / period
    v = v_mean + amplitude * np.sin(w * t)
    x = x0 + v_mean * t + amplitude / w * (1.0 - np.cos(w * t))
    a = amplitude * w * np.cos(w * t)
    return x, v, a


def braking_pulse_leader(t, v_base, decel, t_start, brake_time, hold_time=0.0, x0=0.0):
    """Cruise, brake at ``decel`` for ``brake_time``, hold, then recover at the same rate."""
    t = np.asarray(t, dtype=float)
    knots_t = np.array([0.0, t_start, t_start + brake_time, t_start + brake_time + hold_time,
                        t_start + 2 * brake_time + hold_time, max(t[-1], t_start + 2 * brake_time + hold_time) + 1.0])
    v_low = v_base - decel * brake_time
    if v_low < 0:
        raise ValueError("braking pulse would reverse the leader")
    knots_v = np.array([v_base, v_base, v_low, v_low, v_base, v_base])
    v = np.interp(t, knots_t, knots_v)
    a = np.zeros_like(t)
    a[(t >= t_start) & (t < t_start + brake_time)] = -decel
    rec = t_start + brake_time + hold_time
    a[(t >= rec) & (t < rec + brake_time)] = decel
    # exact integral of a piecewise-linear speed
    kx = np.concatenate([[0.0], np.cumsum(np.diff(knots_t) * 0.5 * (knots_v[1:] + knots_v[:-1]))])
    seg = np.clip(np.searchsorted(knots_t, t, side="right") - 1, 0, len(knots_t) - 2)
    tau = t - knots_t[seg]
    slope = (knots_v[seg + 1] - knots_v[seg]) / (knots_t[seg + 1] - knots_t[seg])
    x = x0 + kx[seg] + knots_v[seg] * tau + 0.5 * slope * tau**2
    return x, v, a


def leader_pair(t, x_l, v_l, a_l, gap0, v_f0, pair_id="synthetic", length=4.5, width=1.8):
    """A pair whose follower series is a placeholder (constant speed from ``gap0`` behind)."""
    x_f = x_l[0] - gap0 + v_f0 * (t - t[0])
    return TrajectoryPair(
        pair_id=pair_id, lane_id="1", leader_id="L", follower_id="F",
        t=np.asarray(t, dtype=float), x_l=np.asarray(x_l, float), v_l=np.asarray(v_l, float),
        a_l=np.asarray(a_l, float), x_f=x_f, v_f=np.full_like(t, v_f0, dtype=float),
        a_f=np.zeros_like(t, dtype=float),
        len_l=length, wid_l=width, len_f=length, wid_f=width,
    )


def generate_pair(model: CarFollowingModel, t, x_l, v_l, a_l, gap0, v_f0, pair_id="synthetic",
                  length=4.5, width=1.8) -> TrajectoryPair:
    """Follower trajectory produced by ``model`` behind the given leader."""
    pair = leader_pair(t, x_l, v_l, a_l, gap0, v_f0, pair_id, length, width)
    res = simulate_pair(pair, model)
    pair.x_f, pair.v_f, pair.a_f = res.x, res.v, res.a
    return pair


def scenario_suite(n: int = 20, duration: float = 30.0, dt: float = 0.1, seed: int = 7):
    """Deterministic mix of constant, sinusoidal and braking-pulse leaders.

    Returns a list of ``(name, t, x_l, v_l, a_l, gap0, v_f0)`` tuples.
    """
    rng = np.random.default_rng(seed)
    t = time_grid(duration, dt)
    out = []
    for i in range(n):
        kind = ("constant", "sinusoidal", "braking")[i % 3]
        v = float(rng.uniform(12.0, 22.0))
        gap0 = float(rng.uniform(15.0, 40.0))
        v_f0 = float(v + rng.uniform(-2.0, 2.0))
        if kind == "constant":
            x, vv, a = constant_leader(t, v, x0=gap0)
        elif kind == "sinusoidal":
            x, vv, a = sinusoidal_leader(t, v, float(rng.uniform(1.0, 3.0)),
                                         float(rng.uniform(8.0, 20.0)), x0=gap0)
        else:
            decel = float(rng.uniform(1.0, 2.5))
            x, vv, a = braking_pulse_leader(t, v, decel, float(rng.uniform(3.0, 8.0)),
                                            float(rng.uniform(2.0, 4.0)), float(rng.uniform(0.0, 5.0)), x0=gap0)
        out.append((f"{kind}_{i:02d}", t, x, vv, a, gap0, v_f0))
    return out
