"""Trajectory RMSE loss and particle swarm calibration with a standby pool.

The swarm is a global-best PSO. A second, smaller standby swarm evolves on
its own and, every ``swap_interval`` iterations, trades its fitter particles
for the weakest particles of the main swarm; displaced particles join the
standby swarm. Particles that violate the analytic parameter constraints are
re-sampled before they are ever evaluated.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .baselines import IDM_PARAM_NAMES, IdmParams
from .core import DRS_PARAM_NAMES, ConstraintViolation, DrsParams, constraints_satisfied
from .dynamics import DrsModel, IdmModel, PairBatch, rmse, simulate_batch, simulate_pair, stack_params

__all__ = [
    "PsoConfig", "CalibrationReport", "EmptyPairs", "rmse", "fitness", "batch_fitness",
    "pso_minimize", "pso_calibrate", "check_bounds", "DEFAULT_BOUNDS",
]

DEFAULT_BOUNDS = {
    "drs": {
        "v0": (5.0, 40.0), "alpha": (0.01, 8.0), "beta": (-1.0, 1.0), "lam": (0.01, 50.0),
        "gamma": (0.0, 20.0), "sigma": (0.05, 2.0), "a_max": (0.1, 5.0), "beta2": (0.1, 3.0),
        "s_l": (0.0, 1.0), "s_w": (0.0, 1.0), "w1": (0.0, 0.5), "w2": (0.0, 2.0),
    },
    "idm": {
        "v_free": (5.0, 40.0), "a_max": (0.1, 5.0), "b": (0.1, 5.0),
        "s0": (0.5, 10.0), "T": (0.3, 4.0), "delta": (1.0, 8.0),
    },
}
PARAM_NAMES = {"drs": DRS_PARAM_NAMES, "idm": IDM_PARAM_NAMES}


class EmptyPairs(ValueError):
    pass


@dataclass
class PsoConfig:
    swarm_size: int = 40
    standby_pool_size: int = 20
    inertia_start: float = 0.72
    inertia_end: float = 0.4
    c1: float = 1.5
    c2: float = 1.5
    max_iters: int = 300
    swap_interval: int = 10
    seed: int = 0
    bounds: dict | None = None
    velocity_clamp: float = 0.2
    stall_tol: float = 1e-4
    stall_iters: int = 30
    max_resample: int = 10_000

    def __post_init__(self):
        if self.swarm_size < 1 or self.standby_pool_size < 1:
            raise ValueError("swarm and standby pool sizes must be >= 1")
        if min(self.c1, self.c2, self.inertia_start, self.inertia_end) < 0:
            raise ValueError("c1, c2 and inertia must be >= 0")
        if self.max_iters < 1 or self.swap_interval < 1:
            raise ValueError("max_iters and swap_interval must be >= 1")


@dataclass
class PsoResult:
    best_x: np.ndarray
    best_loss: float
    history: list[float]
    iterations: int
    rejections: int
    evaluated_violations: int


@dataclass
class CalibrationReport:
    kind: str
    best_params: dict
    best_loss: float
    history: list[float]
    iterations: int
    constraint_rejections: int
    evaluated_violations: int
    n_pairs: int
    seed: int
    config: dict
    free_parameters: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_time")
        d["schema"] = "drsurrogate.calibration/1"
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"


def _make_params(kind: str, base):
    if kind == "drs":
        return base if base is not None else DrsParams()
    if kind == "idm":
        return base if base is not None else IdmParams()
    raise ValueError(f"unknown model kind {kind!r}")


def _model(kind, params):
    return DrsModel(params) if kind == "drs" else IdmModel(params)


def fitness(params, pairs: Sequence, kind: str) -> float:
    """Mean per-pair position RMSE; any collision or numeric failure gives +inf."""
    if not pairs:
        raise EmptyPairs("no pairs to evaluate")
    params.validate()
    model = _model(kind, params)
    errs = []
    for p in pairs:
        res = simulate_pair(p, model)
        if res.collision_flag or res.numeric_error or not math.isfinite(res.rmse_position):
            return math.inf
        errs.append(res.rmse_position)
    return math.fsum(errs) / len(errs)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DRS_THREADS", "1")))
    except ValueError:
        return 1


def batch_fitness(batch: PairBatch, kind: str, names: Sequence[str], X: np.ndarray, base) -> np.ndarray:
    """Vectorised :func:`fitness` over parameter rows ``X`` (P, D)."""
    def run(rows):
        err, collided, bad = simulate_batch(batch, kind, stack_params(rows, names, base))
        err = np.where(collided | bad, np.inf, err)
        # fixed-order reduction so results do not depend on chunking
        return np.array([math.fsum(r) / len(r) for r in err])

    n = _threads()
    if n == 1 or len(X) < 2 * n:
        return run(X)
    chunks = np.array_split(X, n)
    with ThreadPoolExecutor(max_workers=n) as pool:
        return np.concatenate(list(pool.map(run, chunks)))


def _interval_signs(lo: float, hi: float) -> set:
    s = set()
    if hi > 0:
        s.add(1)
    if lo < 0:
        s.add(-1)
    return s


def check_bounds(kind: str, bounds: dict, base) -> None:
    """Raise ConstraintViolation when the box cannot contain a feasible parameter set."""
    names = PARAM_NAMES[kind]
    for n, (lo, hi) in bounds.items():
        if n not in names:
            raise ConstraintViolation(f"unknown parameter {n!r} for {kind}")
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ConstraintViolation(f"bounds for {n} must satisfy lower < upper")
    if kind == "idm":
        bad = [n for n, (lo, hi) in bounds.items() if hi <= 0]
        if bad:
            raise ConstraintViolation(f"no positive value possible for {', '.join(bad)}")
        return

    def rng(n):
        if n in bounds:
            return bounds[n]
        v = getattr(base, n)
        return (v, v)

    def signs(n):
        lo, hi = rng(n)
        if lo == hi:
            return {1} if lo > 0 else ({-1} if lo < 0 else set())
        return _interval_signs(lo, hi)

    common = signs("lam") & signs("alpha") & signs("beta2")
    if not common:
        raise ConstraintViolation("bounds admit no lambda, alpha, beta2 with lambda*alpha > 0 and lambda*beta2 > 0")
    lo, hi = rng("sigma")
    if not (hi > 0 or lo < -1):
        raise ConstraintViolation("sigma bounds lie inside [-1, 0]; need sigma > 0 or sigma < -1")
    a_signs = signs("a_max")
    if not ((1 in a_signs and hi > 0) or (-1 in a_signs and lo < -1)):
        raise ConstraintViolation("bounds admit no a_max sharing the sign of sigma + 1")
    if "t_omega" in bounds and bounds["t_omega"][1] < 0:
        raise ConstraintViolation("T_omega bounds must admit values >= 0")


def _feasible_fn(kind: str, names: Sequence[str], base) -> Callable[[np.ndarray], np.ndarray]:
    if kind != "drs":
        return lambda X: np.all(X > 0, axis=1)
    idx = {n: i for i, n in enumerate(names)}

    def col(X, n):
        return X[:, idx[n]] if n in idx else np.full(len(X), getattr(base, n))

    return lambda X: constraints_satisfied(
        col(X, "lam"), col(X, "alpha"), col(X, "beta2"), col(X, "sigma"), col(X, "a_max"))


def pso_minimize(
    objective: Callable[[np.ndarray], np.ndarray],
    lower: np.ndarray,
    upper: np.ndarray,
    cfg: PsoConfig,
    feasible: Callable[[np.ndarray], np.ndarray] | None = None,
    callback: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> PsoResult:
    """Minimise a batch objective ``objective(X) -> losses`` over a box.

    ``callback(iteration, main_positions, standby_positions)`` is invoked
    after each iteration; tests use it to inspect invariants.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = len(lower)
    span = upper - lower
    vmax = cfg.velocity_clamp * span
    rng = np.random.default_rng(cfg.seed)
    feasible = feasible or (lambda X: np.ones(len(X), dtype=bool))
    stats = {"rejections": 0, "violations": 0}

    def evaluate(X):
        stats["violations"] += int(np.count_nonzero(~feasible(X)))
        f = np.asarray(objective(X), dtype=float)
        return np.where(np.isnan(f), np.inf, f)

    def resample(X, V, mask=None):
        if mask is None:
            mask = ~feasible(X)
        tries = 0
        while np.any(mask):
            stats["rejections"] += int(np.count_nonzero(mask))
            X[mask] = lower + rng.random((int(mask.sum()), dim)) * span
            V[mask] = 0.0
            mask = ~feasible(X)
            tries += 1
            if tries > cfg.max_resample:
                raise ConstraintViolation("could not sample a feasible particle inside the bounds")
        return X, V

    def init(n):
        X = lower + rng.random((n, dim)) * span
        V = (rng.random((n, dim)) - 0.5) * vmax
        X, V = resample(X, V)
        return X, V

    def move(X, V, P, g, w):
        r1 = rng.random(X.shape)
        r2 = rng.random(X.shape)
        V = w * V + cfg.c1 * r1 * (P - X) + cfg.c2 * r2 * (g - X)
        V = np.clip(V, -vmax, vmax)
        X = X + V
        hi = X > upper
        X = np.where(hi, 2 * upper - X, X)
        V = np.where(hi, -V, V)
        lo = X < lower
        X = np.where(lo, 2 * lower - X, X)
        V = np.where(lo, -V, V)
        X = np.clip(X, lower, upper)
        return resample(X, V)

    X, V = init(cfg.swarm_size)
    S, SV = init(cfg.standby_pool_size)
    fX = evaluate(X)
    fS = evaluate(S)
    P, fP = X.copy(), fX.copy()
    SP, fSP = S.copy(), fS.copy()

    def best_of(*cands):
        bx, bf = None, math.inf
        for x, f in cands:
            i = int(np.argmin(f))
            if bx is None or f[i] < bf:
                bx, bf = x[i].copy(), float(f[i])
        return bx, bf

    gx, gf = best_of((P, fP), (SP, fSP))
    history = [gf]
    it = 0
    for it in range(1, cfg.max_iters + 1):
        frac = (it - 1) / max(cfg.max_iters - 1, 1)
        w = cfg.inertia_start + (cfg.inertia_end - cfg.inertia_start) * frac
        X, V = move(X, V, P, gx, w)
        fX = evaluate(X)
        better = fX < fP
        P[better], fP[better] = X[better], fX[better]

        if it % cfg.swap_interval == 0:
            sgx = SP[int(np.argmin(fSP))]
            S, SV = move(S, SV, SP, sgx, w)
            fS = evaluate(S)
            sb = fS < fSP
            SP[sb], fSP[sb] = S[sb], fS[sb]
            order_s = np.argsort(fS, kind="stable")
            order_m = np.argsort(-fX, kind="stable")
            for si, mi in zip(order_s, order_m):
                if not fS[si] < fX[mi]:
                    break
                X[mi], S[si] = S[si].copy(), X[mi].copy()
                V[mi], SV[si] = SV[si].copy(), V[mi].copy()
                fX[mi], fS[si] = fS[si], fX[mi]
                P[mi], SP[si] = SP[si].copy(), P[mi].copy()
                fP[mi], fSP[si] = fSP[si], fP[mi]

        cx, cf = best_of((P, fP), (SP, fSP))
        if cf < gf:
            gx, gf = cx, cf
        history.append(gf)
        if callback is not None:
            callback(it, X, S)
        if it >= cfg.stall_iters and history[-1 - cfg.stall_iters] - gf < cfg.stall_tol:
            break

    return PsoResult(gx, gf, history, it, stats["rejections"], stats["violations"])


def pso_calibrate(pairs: Sequence, kind: str, cfg: PsoConfig | None = None, base=None,
                  callback=None) -> CalibrationReport:
    """Fit ``kind`` ('drs' or 'idm') parameters to ``pairs`` by minimising mean RMSE."""
    if not pairs:
        raise EmptyPairs("calibration needs at least one pair")
    cfg = cfg or PsoConfig()
    base = _make_params(kind, base)
    bounds = dict(cfg.bounds) if cfg.bounds else dict(DEFAULT_BOUNDS[kind])
    check_bounds(kind, bounds, base)
    names = [n for n in PARAM_NAMES[kind] if n in bounds]
    lower = np.array([bounds[n][0] for n in names])
    upper = np.array([bounds[n][1] for n in names])
    batch = PairBatch.from_pairs(pairs)
    started = time.perf_counter()
    res = pso_minimize(
        lambda X: batch_fitness(batch, kind, names, X, base),
        lower, upper, cfg, _feasible_fn(kind, names, base), callback,
    )
    best = dict(base.to_dict(), **{n: float(v) for n, v in zip(names, res.best_x)})
    cfg_echo = asdict(cfg)
    cfg_echo["bounds"] = {n: list(bounds[n]) for n in names}
    return CalibrationReport(
        kind=kind,
        best_params=best,
        best_loss=res.best_loss,
        history=res.history,
        iterations=res.iterations,
        constraint_rejections=res.rejections,
        evaluated_violations=res.evaluated_violations,
        n_pairs=len(pairs),
        seed=cfg.seed,
        config=cfg_echo,
        free_parameters=names,
        wall_time=time.perf_counter() - started,
    )
