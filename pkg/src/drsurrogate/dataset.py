"""Trajectory CSV ingestion and car-following pair extraction.

Input rows are per-vehicle, per-timestamp samples. Pairs are found frame by
frame: vehicles in the same lane are ordered by x and each vehicle follows its
immediate successor. Adjacent frames of the same (leader, follower) are
stitched into windows; windows are cut around lane changes and dropped when
too short or too irregularly sampled.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Hashable, Iterable, TextIO

import numpy as np

from .core import VehicleState

log = logging.getLogger(__name__)

DEFAULT_COLUMNS = {
    "id": "vehicle_id",
    "t": "time",
    "x": "x",
    "y": "y",
    "lane": "lane_id",
    "v": "speed",
    "a": "acceleration",
    "length": "length",
    "width": "width",
}
OPTIONAL_FIELDS = ("a",)
NUMERIC_FIELDS = ("t", "x", "y", "v", "a", "length", "width")

PAIR_COLUMNS = ("t", "x_L", "v_L", "a_L", "L_L", "W_L", "x_F", "v_F", "a_F", "L_F", "W_F")


class DatasetError(ValueError):
    pass


class MissingColumn(DatasetError):
    pass


class MalformedRow(DatasetError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyFile(DatasetError):
    pass


class TooShort(DatasetError):
    pass


@dataclass(frozen=True, slots=True)
class TrajectoryRecord:
    vehicle_id: str
    t: float
    x: float
    y: float
    lane_id: str
    v: float
    a: float | None
    length: float
    width: float


@dataclass
class ParseResult:
    records: list[TrajectoryRecord]
    rejected: list[tuple[int, str]] = field(default_factory=list)
    has_accel: bool = True


def parse_columns(spec: str | None) -> dict:
    """Parse ``field=header,...`` overrides onto the default column map."""
    cols = dict(DEFAULT_COLUMNS)
    if not spec:
        return cols
    for item in spec.split(","):
        if "=" not in item:
            raise DatasetError(f"bad column mapping {item!r}, expected field=header")
        key, header = (s.strip() for s in item.split("=", 1))
        if key not in DEFAULT_COLUMNS:
            raise DatasetError(f"unknown field {key!r} in column mapping")
        cols[key] = header
    return cols


def parse_csv(source: str | os.PathLike | TextIO, columns: dict | None = None) -> ParseResult:
    """Read trajectory rows; non-finite or non-physical rows are rejected, not fatal."""
    cols = dict(DEFAULT_COLUMNS, **(columns or {}))
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _parse(fh, cols)
    return _parse(source, cols)


def _parse(fh: TextIO, cols: dict) -> ParseResult:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyFile("file has no header row") from None
    header = [h.strip() for h in header]
    index = {h: i for i, h in enumerate(header)}
    missing = [f"{k} ({cols[k]!r})" for k in cols if k not in OPTIONAL_FIELDS and cols[k] not in index]
    if missing:
        raise MissingColumn("missing required column(s): " + ", ".join(missing))
    has_accel = cols["a"] in index

    records, rejected = [], []
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise MalformedRow(line, f"expected {len(header)} fields, got {len(row)}")
        values = {}
        for key in NUMERIC_FIELDS:
            if key == "a" and not has_accel:
                values[key] = None
                continue
            text = row[index[cols[key]]].strip()
            try:
                values[key] = float(text) if text else math.nan
            except ValueError:
                raise MalformedRow(line, f"{cols[key]}: not a number: {text!r}") from None
        bad = [k for k, val in values.items() if val is not None and not math.isfinite(val)]
        if bad:
            rejected.append((line, "non-finite " + ", ".join(cols[k] for k in bad)))
            continue
        if values["v"] < 0 or values["length"] <= 0 or values["width"] <= 0:
            rejected.append((line, "negative speed or non-positive size"))
            continue
        records.append(
            TrajectoryRecord(
                vehicle_id=row[index[cols["id"]]].strip(),
                lane_id=row[index[cols["lane"]]].strip(),
                **values,
            )
        )
    if not records and not rejected:
        raise EmptyFile("file has a header but no data rows")
    for line, why in rejected:
        log.warning("rejected line %d: %s", line, why)
    return ParseResult(records, rejected, has_accel)


def serialize_csv(records: Iterable[TrajectoryRecord], columns: dict | None = None, with_accel=True) -> str:
    cols = dict(DEFAULT_COLUMNS, **(columns or {}))
    keys = [k for k in DEFAULT_COLUMNS if with_accel or k != "a"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([cols[k] for k in keys])
    attr = {"id": "vehicle_id", "lane": "lane_id"}
    for r in records:
        w.writerow([_fmt(getattr(r, attr.get(k, k))) for k in keys])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def finite_difference_accel(t, v) -> np.ndarray:
    """Central differences of speed inside, one-sided at the ends."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if len(v) < 3:
        raise TooShort("finite differencing needs at least 3 samples")
    d = np.diff(t)
    if not np.allclose(d, d[0], rtol=1e-6, atol=1e-9):
        raise DatasetError("finite differencing needs a uniform time step")
    return np.gradient(v, d[0], edge_order=2)


@dataclass
class TrajectoryPair:
    pair_id: str
    lane_id: str
    leader_id: str
    follower_id: str
    t: np.ndarray
    x_l: np.ndarray
    v_l: np.ndarray
    a_l: np.ndarray
    x_f: np.ndarray
    v_f: np.ndarray
    a_f: np.ndarray
    len_l: float
    wid_l: float
    len_f: float
    wid_f: float

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def __len__(self) -> int:
        return len(self.t)

    def leader_state(self, k: int) -> VehicleState:
        return VehicleState(
            self.leader_id, float(self.t[k]), float(self.x_l[k]), 0.0,
            max(float(self.v_l[k]), 0.0), float(self.a_l[k]), 0.0, self.len_l, self.wid_l,
        )

    def follower_state(self, k: int) -> VehicleState:
        return VehicleState(
            self.follower_id, float(self.t[k]), float(self.x_f[k]), 0.0,
            max(float(self.v_f[k]), 0.0), float(self.a_f[k]), 0.0, self.len_f, self.wid_f,
        )

    def check(self) -> None:
        n = len(self.t)
        arrays = (self.x_l, self.v_l, self.a_l, self.x_f, self.v_f, self.a_f)
        if n < 2 or any(len(a) != n for a in arrays):
            raise DatasetError(f"pair {self.pair_id}: series must share a length >= 2")
        if np.any(self.x_l <= self.x_f):
            raise DatasetError(f"pair {self.pair_id}: leader not ahead at every sample")
        if np.any(np.diff(self.t) <= 0):
            raise DatasetError(f"pair {self.pair_id}: timestamps not increasing")

    def resample(self, dt: float) -> "TrajectoryPair":
        grid = self.t[0] + dt * np.arange(int(math.floor(self.duration / dt + 1e-9)) + 1)
        interp = lambda a: np.interp(grid, self.t, a)  # noqa: E731
        return replace(
            self, t=grid,
            x_l=interp(self.x_l), v_l=interp(self.v_l), a_l=interp(self.a_l),
            x_f=interp(self.x_f), v_f=interp(self.v_f), a_f=interp(self.a_f),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PAIR_COLUMNS)
        for k in range(len(self.t)):
            w.writerow([
                repr(float(v)) for v in (
                    self.t[k], self.x_l[k], self.v_l[k], self.a_l[k], self.len_l, self.wid_l,
                    self.x_f[k], self.v_f[k], self.a_f[k], self.len_f, self.wid_f,
                )
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, pair_id: str, lane_id="", leader_id="L", follower_id="F"):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(h.strip() for h in rows[0]) != PAIR_COLUMNS:
            raise MissingColumn(f"pair file {pair_id}: header must be {','.join(PAIR_COLUMNS)}")
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
        if data.ndim != 2 or len(data) < 2:
            raise TooShort(f"pair file {pair_id}: fewer than 2 samples")
        c = {name: data[:, j] for j, name in enumerate(PAIR_COLUMNS)}
        return cls(
            pair_id=pair_id, lane_id=str(lane_id), leader_id=str(leader_id),
            follower_id=str(follower_id), t=c["t"],
            x_l=c["x_L"], v_l=c["v_L"], a_l=c["a_L"],
            x_f=c["x_F"], v_f=c["v_F"], a_f=c["a_F"],
            len_l=float(np.median(c["L_L"])), wid_l=float(np.median(c["W_L"])),
            len_f=float(np.median(c["L_F"])), wid_f=float(np.median(c["W_F"])),
        )


@dataclass
class ExtractionSummary:
    pairs: list[TrajectoryPair]
    dropped_short: int = 0
    dropped_jitter: int = 0
    lane_changes: int = 0


def _modal_step(diffs: np.ndarray) -> float:
    rounded = Counter(np.round(diffs, 6).tolist())
    return max(rounded.items(), key=lambda kv: (kv[1], -kv[0]))[0]


def extract_pairs(
    records: list[TrajectoryRecord],
    min_duration: float = 5.0,
    lane_change_margin: float = 0.5,
    time_quantum: float = 1e-3,
    jitter_tol: float = 0.1,
) -> ExtractionSummary:
    """Find stable leader/follower windows in a trajectory table.

    ``lane_change_margin`` seconds either side of a vehicle's lane switch are
    discarded for every pair involving that vehicle.
    """
    if not records:
        return ExtractionSummary([])
    by_vehicle: dict[str, list[TrajectoryRecord]] = defaultdict(list)
    for r in records:
        by_vehicle[r.vehicle_id].append(r)
    banned: dict[str, list[tuple[float, float]]] = {}
    all_diffs = []
    n_changes = 0
    for vid, rs in by_vehicle.items():
        rs.sort(key=lambda r: r.t)
        ts = np.array([r.t for r in rs])
        if len(ts) > 1:
            all_diffs.append(np.diff(ts))
        cuts = []
        for a, b in zip(rs, rs[1:]):
            if a.lane_id != b.lane_id:
                mid = 0.5 * (a.t + b.t)
                cuts.append((mid - lane_change_margin, mid + lane_change_margin))
        n_changes += len(cuts)
        banned[vid] = cuts
    if not all_diffs:
        return ExtractionSummary([], lane_changes=n_changes)
    diffs = np.concatenate(all_diffs)
    diffs = diffs[diffs > 0]
    if diffs.size == 0:
        return ExtractionSummary([], lane_changes=n_changes)
    base_dt = _modal_step(diffs)

    frames: dict[int, list[TrajectoryRecord]] = defaultdict(list)
    for r in records:
        frames[int(round(r.t / time_quantum))].append(r)

    adjacency: dict[tuple[str, str], list[tuple[TrajectoryRecord, TrajectoryRecord]]] = defaultdict(list)
    for key in sorted(frames):
        lanes = defaultdict(list)
        for r in frames[key]:
            lanes[r.lane_id].append(r)
        for lane, rs in lanes.items():
            rs.sort(key=lambda r: (r.x, r.vehicle_id))
            for fol, lead in zip(rs, rs[1:]):
                if lead.x > fol.x:
                    adjacency[(lead.vehicle_id, fol.vehicle_id)].append((lead, fol))

    def is_banned(vid, t):
        return any(lo <= t <= hi for lo, hi in banned.get(vid, ()))

    out = []
    dropped_short = dropped_jitter = 0
    for (lid, fid), samples in adjacency.items():
        samples = [s for s in samples if not (is_banned(lid, s[0].t) or is_banned(fid, s[1].t))]
        for run in _split_runs(samples, base_dt):
            t = np.array([s[1].t for s in run])
            if len(run) < 2 or t[-1] - t[0] < min_duration - 1e-9:
                dropped_short += 1
                continue
            pair = _build_pair(run, t, jitter_tol)
            if pair is None:
                dropped_jitter += 1
                continue
            out.append(pair)
    out.sort(key=lambda p: (p.t[0], p.lane_id, p.leader_id, p.follower_id))
    return ExtractionSummary(out, dropped_short, dropped_jitter, n_changes)


def _split_runs(samples, base_dt):
    run = []
    for s in samples:
        if run and s[1].t - run[-1][1].t > 1.5 * base_dt:
            yield run
            run = []
        run.append(s)
    if run:
        yield run


def _build_pair(run, t, jitter_tol) -> TrajectoryPair | None:
    lead = [s[0] for s in run]
    fol = [s[1] for s in run]
    d = np.diff(t)
    dt = _modal_step(d)
    if dt <= 0 or np.max(np.abs(d - dt)) > jitter_tol * dt:
        return None

    def series(rs, attr):
        return np.array([getattr(r, attr) for r in rs], dtype=float)

    def accel(rs):
        if all(r.a is not None for r in rs):
            return series(rs, "a")
        v = series(rs, "v")
        if len(v) < 3:
            return np.zeros_like(v)
        return np.gradient(v, t, edge_order=2)

    pair = TrajectoryPair(
        pair_id=f"{fol[0].lane_id}_{lead[0].vehicle_id}_{fol[0].vehicle_id}_{t[0]:.3f}",
        lane_id=fol[0].lane_id,
        leader_id=lead[0].vehicle_id,
        follower_id=fol[0].vehicle_id,
        t=t,
        x_l=series(lead, "x"), v_l=series(lead, "v"), a_l=accel(lead),
        x_f=series(fol, "x"), v_f=series(fol, "v"), a_f=accel(fol),
        len_l=float(np.median(series(lead, "length"))),
        wid_l=float(np.median(series(lead, "width"))),
        len_f=float(np.median(series(fol, "length"))),
        wid_f=float(np.median(series(fol, "width"))),
    )
    if not np.allclose(d, dt, rtol=0, atol=1e-9):
        pair = pair.resample(dt)
    return pair


def write_pairs(pairs: list[TrajectoryPair], directory: str | os.PathLike) -> Path:
    """Write one CSV per pair plus an ``index.json`` with pair metadata."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    index = []
    for p in pairs:
        name = f"{p.pair_id}.csv"
        (root / name).write_text(p.to_csv(), encoding="utf-8")
        index.append({
            "file": name, "pair_id": p.pair_id, "lane_id": p.lane_id,
            "leader_id": p.leader_id, "follower_id": p.follower_id,
            "samples": len(p.t), "duration": round(p.duration, 6),
        })
    (root / "index.json").write_text(json.dumps({"pairs": index}, indent=2) + "\n", encoding="utf-8")
    return root


def read_pairs(directory: str | os.PathLike) -> list[TrajectoryPair]:
    root = Path(directory)
    idx = root / "index.json"
    if idx.exists():
        meta = json.loads(idx.read_text(encoding="utf-8"))["pairs"]
    else:
        meta = [{"file": p.name, "pair_id": p.stem} for p in sorted(root.glob("*.csv"))]
    pairs = []
    for m in meta:
        text = (root / m["file"]).read_text(encoding="utf-8")
        pairs.append(TrajectoryPair.from_csv(
            text, m["pair_id"], m.get("lane_id", ""), m.get("leader_id", "L"), m.get("follower_id", "F"),
        ))
    return pairs
