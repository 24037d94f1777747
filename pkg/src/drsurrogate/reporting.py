"""Boxplot statistics, acceleration/field heatmaps, speed-risk curves and exports.

Export schemas (CSV columns, stable across versions of schema 1):

* simulation: ``pair_id,t,x,v,a,gap``
* heatmap: ``v_F,gap,value,clamped`` (long format, v_F-major)
* boxplot: ``n,median,q1,q3,iqr,lower_adjacent,upper_adjacent``
* calibration: ``parameter,value`` (best parameters, then ``best_loss``)

CSV numbers carry 6 significant digits; JSON keeps full precision.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .baselines import IdmParams, idm_accel_raw, net_gap
from .calibration import CalibrationReport
from .core import DrsParams
from .dynamics import SimulationResult
from .risk import (
    car_following_accel,
    default_e_max,
    desired_velocity,
    log_size,
    log_virtual_distance_1d,
    speed_acceleration,
)


class UnsupportedFormat(ValueError):
    pass


@dataclass(frozen=True)
class BoxplotStats:
    n: int
    median: float
    q1: float
    q3: float
    iqr: float
    lower_adjacent: float
    upper_adjacent: float


def boxplot_stats(values: Sequence[float]) -> BoxplotStats:
    """Quartiles by linear interpolation between order statistics (inclusive)."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("boxplot of an empty sample")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    return BoxplotStats(
        n=int(x.size), median=float(med), q1=float(q1), q3=float(q3), iqr=float(iqr),
        lower_adjacent=float(inside.min()), upper_adjacent=float(inside.max()),
    )


@dataclass(frozen=True)
class AxisSpec:
    name: str
    min: float
    max: float
    steps: int

    @classmethod
    def parse(cls, text: str) -> "AxisSpec":
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError(f"axis {text!r}: expected name:min:max:steps")
        name, lo, hi, steps = parts
        try:
            spec = cls(name, float(lo), float(hi), int(steps))
        except ValueError:
            raise ValueError(f"axis {text!r}: bad number") from None
        return spec.check()

    def check(self) -> "AxisSpec":
        if self.steps < 1:
            raise ValueError(f"axis {self.name}: steps must be >= 1")
        if not (math.isfinite(self.min) and math.isfinite(self.max)):
            raise ValueError(f"axis {self.name}: bounds must be finite")
        if self.steps > 1 and not self.min < self.max:
            raise ValueError(f"axis {self.name}: min must be < max")
        if self.steps == 1 and self.min != self.max:
            raise ValueError(f"axis {self.name}: one step needs min == max")
        return self

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.steps)


@dataclass
class HeatmapGrid:
    """Cells indexed ``[i_vF, j_gap]``; ``clamped`` marks cells pinned to a bound."""

    kind: str
    vf_axis: AxisSpec
    gap_axis: AxisSpec
    values: np.ndarray
    clamped: np.ndarray
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": "drsurrogate.heatmap/1",
            "kind": self.kind,
            "vf_axis": asdict(self.vf_axis),
            "gap_axis": asdict(self.gap_axis),
            "values": self.values.tolist(),
            "clamped": self.clamped.tolist(),
            "metadata": self.metadata,
        }


def _cells(vf_axis: AxisSpec, gap_axis: AxisSpec):
    vf_axis.check()
    gap_axis.check()
    if gap_axis.min <= 0:
        raise ValueError("gap axis must be strictly positive")
    vf = vf_axis.values()
    if vf.min() < 0:
        raise ValueError("follower speed axis must be non-negative")
    return np.meshgrid(vf, gap_axis.values(), indexing="ij")


def accel_heatmap(
    params: DrsParams | IdmParams,
    leader_speed: float,
    vf_axis: AxisSpec,
    gap_axis: AxisSpec,
    leader_accel: float = 0.0,
    length: float = 4.5,
    width: float = 1.8,
) -> HeatmapGrid:
    """Follower acceleration over (follower speed, centroid gap) behind a steady leader."""
    VF, G = _cells(vf_axis, gap_axis)
    lo, hi = params.a_phys_min, params.a_phys_max
    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(params, DrsParams):
            degenerate = G <= params.eps_dist
            raw = car_following_accel(np.where(degenerate, 1.0, G), VF, leader_speed,
                                      leader_accel, length, width, params)
            model = "drs"
        else:
            s = net_gap(G, length, length)
            degenerate = s <= 0.0
            raw = idm_accel_raw(np.where(degenerate, 1.0, s), VF, leader_speed, params)
            model = "idm"
    raw = np.where(degenerate | np.isnan(raw), lo, raw)
    values = np.clip(raw, lo, hi)
    clamped = degenerate | (raw <= lo) | (raw >= hi)
    meta = {"model": model, "leader_speed": leader_speed, "leader_accel": leader_accel,
            "length": length, "width": width, "params": params.to_dict()}
    return HeatmapGrid("acceleration", vf_axis, gap_axis, values, clamped, meta)


def strength_heatmap(
    params: DrsParams,
    leader_speed: float,
    vf_axis: AxisSpec,
    gap_axis: AxisSpec,
    leader_accel: float = 0.0,
    length: float = 4.5,
    width: float = 1.8,
    cap: float = 1e300,
) -> HeatmapGrid:
    """Total DRS field strength (interactive + speed magnitudes) at the follower."""
    VF, G = _cells(vf_axis, gap_axis)
    p = params
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        log_int = (
            np.log(abs(p.lam)) + log_size(length, width, p) - p.alpha * leader_speed
            - p.beta * leader_accel - p.beta2 * log_virtual_distance_1d(G, leader_speed, p)
        )
        v_d = desired_velocity(leader_speed, p)
        sp = p.sigma + 1.0
        e_max = default_e_max(v_d, p)
        speed = np.exp(log_size(length, width, p)) * abs(e_max) * (np.abs(v_d - VF) / v_d) ** sp
        total = np.exp(log_int) + speed
    degenerate = G <= p.eps_dist
    bad = degenerate | ~np.isfinite(total) | (total > cap)
    values = np.where(bad, cap, total)
    meta = {"model": "drs", "leader_speed": leader_speed, "leader_accel": leader_accel,
            "length": length, "width": width, "params": p.to_dict(), "cap": cap}
    return HeatmapGrid("strength", vf_axis, gap_axis, values, bad, meta)


def speed_risk_curves(v_leader: float, v_axis: AxisSpec, params: DrsParams,
                      length: float = 4.5, width: float = 1.8) -> dict:
    """Speed-surrogate field magnitude and acceleration along a follower-speed axis."""
    v_axis.check()
    v = v_axis.values()
    v_d = desired_velocity(v_leader, params)
    sp = params.sigma + 1.0
    size = float(np.exp(log_size(length, width, params)))
    strength = size * default_e_max(v_d, params) * (np.abs(v_d - v) / v_d) ** sp
    return {
        "v_leader": v_leader,
        "v_desired": v_d,
        "v": v,
        "strength": np.abs(strength),
        "acceleration": np.asarray(speed_acceleration(v, v_d, params)),
    }


# --- exports ---------------------------------------------------------------------------


def _g(x) -> str:
    return f"{float(x):.6g}"


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def to_dict(artifact) -> dict:
    if isinstance(artifact, SimulationResult):
        d = asdict(artifact)
        d["schema"] = "drsurrogate.simulation/1"
        return json.loads(json.dumps(d, default=_to_jsonable))
    if isinstance(artifact, HeatmapGrid):
        return artifact.to_dict()
    if isinstance(artifact, BoxplotStats):
        return dict(asdict(artifact), schema="drsurrogate.boxplot/1")
    if isinstance(artifact, CalibrationReport):
        return artifact.to_dict()
    raise UnsupportedFormat(f"cannot export {type(artifact).__name__}")


def export(artifact, fmt: str) -> bytes:
    if fmt == "json":
        return (json.dumps(to_dict(artifact), indent=2, sort_keys=True, default=_to_jsonable) + "\n").encode()
    if fmt != "csv":
        raise UnsupportedFormat(f"unsupported format {fmt!r}; use csv or json")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(artifact, SimulationResult):
        w.writerow(["pair_id", "t", "x", "v", "a", "gap"])
        for row in artifact.rows():
            w.writerow([artifact.pair_id, *map(_g, row)])
    elif isinstance(artifact, HeatmapGrid):
        w.writerow(["v_F", "gap", artifact.kind, "clamped"])
        vf, gp = artifact.vf_axis.values(), artifact.gap_axis.values()
        for i, a in enumerate(vf):
            for j, b in enumerate(gp):
                w.writerow([_g(a), _g(b), _g(artifact.values[i, j]), int(artifact.clamped[i, j])])
    elif isinstance(artifact, BoxplotStats):
        cols = ["n", "median", "q1", "q3", "iqr", "lower_adjacent", "upper_adjacent"]
        w.writerow(cols)
        w.writerow([artifact.n] + [_g(getattr(artifact, c)) for c in cols[1:]])
    elif isinstance(artifact, CalibrationReport):
        w.writerow(["parameter", "value"])
        for k in artifact.free_parameters:
            w.writerow([k, _g(artifact.best_params[k])])
        w.writerow(["best_loss", _g(artifact.best_loss)])
    else:
        raise UnsupportedFormat(f"cannot export {type(artifact).__name__}")
    return buf.getvalue().encode()
