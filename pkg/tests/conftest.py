import math

import numpy as np
import pytest

from drsurrogate.core import DrsParams, VehicleState

# Parameters that produce realistic following distances; used to generate
# synthetic ground truth for calibration and fixture checks.
SYNTH_PARAMS = DrsParams(
    v0=25.0, alpha=0.6, beta=0.2, lam=40.0, gamma=0.6, sigma=0.5, a_max=1.0,
    beta2=1.0, s_l=0.1, s_w=0.05, w1=0.05, w2=0.1,
)


def vehicle(x=0.0, y=0.0, v=0.0, a=0.0, theta=0.0, length=4.5, width=1.8, id="v", t=0.0):
    return VehicleState(id, t, x, y, v, a, theta, length, width)


def random_feasible_params(rng, n):
    """Constraint-satisfying DRS draws spanning both sign branches of lam."""
    out = []
    while len(out) < n:
        sign = 1.0 if rng.random() < 0.75 else -1.0
        sigma = rng.uniform(0.05, 2.0) if rng.random() < 0.8 else rng.uniform(-3.0, -1.05)
        p = DrsParams(
            v0=rng.uniform(5, 35), alpha=sign * rng.uniform(0.01, 6), beta=rng.uniform(-1, 1),
            lam=sign * rng.uniform(0.01, 50), gamma=rng.uniform(0, 15), sigma=sigma,
            a_max=math.copysign(rng.uniform(0.1, 5), sigma + 1), beta2=sign * rng.uniform(0.1, 3),
            s_l=rng.uniform(0, 1), s_w=rng.uniform(0, 1), w1=rng.uniform(0, 0.5), w2=rng.uniform(0, 2),
        )
        out.append(p.validate())
    return out


def write_trajectory_csv(path, vehicles, duration=10.0, dt=0.1, with_accel=True, extra_rows=()):
    """``vehicles`` is a list of (id, x0, v, lane) tuples moving at constant speed."""
    n = int(round(duration / dt)) + 1
    head = "vehicle_id,time,x,y,lane_id,speed" + (",acceleration" if with_accel else "") + ",length,width"
    rows = [head]
    for vid, x0, v, lane in vehicles:
        for k in range(n):
            t = k * dt
            lane_k = lane(t) if callable(lane) else lane
            acc = ",0" if with_accel else ""
            rows.append(f"{vid},{t:.1f},{x0 + v * t!r},0,{lane_k},{v!r}{acc},4.5,1.8")
    rows.extend(extra_rows)
    path.write_text("\n".join(rows) + "\n")
    return path


@pytest.fixture
def table1():
    return DrsParams()


@pytest.fixture
def synth_params():
    return SYNTH_PARAMS


def rel_close(a, b, rel):
    return math.isclose(a, b, rel_tol=rel, abs_tol=0.0)


# One line per acceptance criterion, printed at the end of the run.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
