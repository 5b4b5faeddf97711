"""The vanishing-stepsize subgradient recursion and its recorded trajectories.

A run records every iterate x_i, the selected subgradient v_i at x_i, the step
eps_i, the cumulative time t_i = sum_{j<=i} eps_j and the value f(x_i).  The
update is x_{i+1} = x_i - eps_i * v_i.  Iterate i carries time weight eps_i in
every time-average computed downstream.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .oracles import DEFAULT_TOL_ACTIVE, FunctionOracle, SelectionPolicy, _select_tuple

DEFAULT_GUARD_HALFWIDTH = 10.0


class NumericError(RuntimeError):
    """The oracle produced a non-finite value inside the guard box."""


class ThinnedTrajectoryError(RuntimeError):
    """A diagnostic that needs a dense iterate record was given a thinned one."""


@dataclass(frozen=True)
class StepSchedule:
    """Power-law steps eps_i = c / (i + offset)^p with p in (0, 1]."""

    c: float
    p: float = 1.0
    offset: int = 1

    def __post_init__(self):
        if not (self.c > 0):
            raise ValueError("schedule needs c > 0")
        if not (0 < self.p <= 1):
            raise ValueError("schedule needs p in (0, 1] so the steps sum diverges")
        if not (isinstance(self.offset, int) and self.offset >= 1):
            raise ValueError("schedule offset must be a positive integer")

    def eps(self, i: int) -> float:
        return self.c / (i + self.offset) ** self.p

    def eps_array(self, n: int) -> np.ndarray:
        return self.c / np.power(np.arange(n, dtype=np.float64) + self.offset, self.p)


@dataclass
class Trajectory:
    """Recorded run: one row per stored iterate, plus exact whole-run aggregates."""

    points: np.ndarray      # (m, n)
    velocities: np.ndarray  # (m, n), velocities[i] in subdiff(points[i])
    steps: np.ndarray       # (m,)
    times: np.ndarray       # (m,), t_i = sum_{j<=i} eps_j at the stored index
    values: np.ndarray      # (m,)
    indices: np.ndarray     # (m,) original iterate indices
    oracle_id: str = ""
    schedule: StepSchedule | None = None
    policy: SelectionPolicy | None = None
    n_steps: int = 0        # actual steps taken (last index)
    requested_steps: int = 0
    thin: int = 1
    diverged: bool = False
    guard_lo: tuple[float, ...] = ()
    guard_hi: tuple[float, ...] = ()
    total_time: float = 0.0            # exact sum of eps over all iterates
    step_velocity_sum: tuple[float, ...] = ()  # compensated sum of eps_i * v_i over all steps
    f_min: float = math.inf
    f_max: float = -math.inf

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def stored(self) -> int:
        return self.points.shape[0]

    @property
    def is_dense(self) -> bool:
        return self.thin == 1

    def require_dense(self, what: str) -> None:
        if not self.is_dense:
            raise ThinnedTrajectoryError(
                f"{what} needs every iterate, but this trajectory stores every "
                f"{self.thin}-th one; rerun with thin=1")


def _default_guard(n: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    return ((-DEFAULT_GUARD_HALFWIDTH,) * n, (DEFAULT_GUARD_HALFWIDTH,) * n)


def run(oracle: FunctionOracle, x0, schedule: StepSchedule, policy: SelectionPolicy,
        n_steps: int, guard_box=None, thin: int = 1,
        tol_active: float = 0.0) -> Trajectory:
    """Run the recursion for n_steps (or until the guard box is left).

    Returns a trajectory with n_steps + 1 iterates when the run stays inside
    the guard box; an escaping iterate is recorded and flags divergence.

    The recursion evaluates the subdifferential with tol_active = 0 (exact
    arithmetic ties only): a looser tolerance couples into the dynamics by
    flipping the selected piece at near-kink iterates, which skews time
    statistics.  Analysis queries keep the usual relative tolerance.
    """
    if not (isinstance(n_steps, int) and n_steps >= 1):
        raise ValueError("n_steps must be a positive integer")
    if not (isinstance(thin, int) and thin >= 1):
        raise ValueError("thin must be a positive integer")
    start = np.asarray(x0, dtype=float)
    if start.shape != (oracle.dimension,):
        raise ValueError(f"x0 has shape {start.shape}, oracle dimension is {oracle.dimension}")
    if not np.isfinite(start).all():
        raise ValueError("x0 must be finite")
    if guard_box is None:
        lo, hi = _default_guard(oracle.dimension)
    else:
        lo, hi = (tuple(float(v) for v in guard_box[0]),
                  tuple(float(v) for v in guard_box[1]))
        if len(lo) != oracle.dimension or len(hi) != oracle.dimension:
            raise ValueError("guard box dimension mismatch")
        if any(l >= h for l, h in zip(lo, hi)):
            raise ValueError("guard box must have lo < hi on every axis")

    n = oracle.dimension
    kern = oracle.kernel(tol_active)
    rng = policy.make_rng()
    kind = policy.kind
    eps_full = schedule.eps_array(n_steps + 1)
    eps_list = eps_full.tolist()

    pos_buf = array("d")
    vel_buf = array("d")
    val_buf = array("d")
    idx_buf = array("q")

    x = [float(v) for v in start]
    sum_ev = [0.0] * n       # compensated sum of eps_i * v_i
    comp = [0.0] * n
    f_min, f_max = math.inf, -math.inf
    diverged = False
    last_index = 0

    def record(i: int, f: float, v: Sequence[float]) -> None:
        idx_buf.append(i)
        pos_buf.extend(x)
        vel_buf.extend(v)
        val_buf.append(f)

    inside = all(lo[j] <= x[j] <= hi[j] for j in range(n))

    i = 0
    while True:
        f, verts = kern(x)
        if not math.isfinite(f):
            if inside:
                raise NumericError(f"oracle value is {f!r} at iterate {i}")
        v = _select_tuple(kind, verts, rng)
        if i % thin == 0 or not inside or i == n_steps:
            record(i, f, v)
        if f < f_min:
            f_min = f
        if f > f_max:
            f_max = f
        last_index = i
        if not inside:
            diverged = True
            break
        if i == n_steps:
            break
        eps = eps_list[i]
        for j in range(n):
            term = eps * v[j]
            y = term - comp[j]
            t = sum_ev[j] + y
            comp[j] = (t - sum_ev[j]) - y
            sum_ev[j] = t
            x[j] -= term
        inside = all(lo[j] <= x[j] <= hi[j] for j in range(n))
        i += 1

    m = len(idx_buf)
    indices = np.frombuffer(idx_buf, dtype=np.int64).copy()
    points = np.frombuffer(pos_buf, dtype=np.float64).reshape(m, n).copy()
    velocities = np.frombuffer(vel_buf, dtype=np.float64).reshape(m, n).copy()
    values = np.frombuffer(val_buf, dtype=np.float64).copy()
    times_full = np.cumsum(eps_full[: last_index + 1])
    return Trajectory(
        points=points, velocities=velocities,
        steps=eps_full[indices], times=times_full[indices], values=values,
        indices=indices, oracle_id=oracle.name, schedule=schedule, policy=policy,
        n_steps=last_index, requested_steps=n_steps, thin=thin, diverged=diverged,
        guard_lo=lo, guard_hi=hi,
        total_time=float(times_full[-1]),
        step_velocity_sum=tuple(sum_ev),
        f_min=f_min, f_max=f_max)


def time_in_set(traj: Trajectory, indicator: Callable, upto: int | None = None) -> float:
    """Sum of eps_i over stored iterates with indicator(x_i) true and i <= upto."""
    traj.require_dense("time_in_set")
    if upto is None:
        upto = traj.n_steps
    if upto > traj.n_steps:
        raise ValueError(f"upto={upto} exceeds the recorded range {traj.n_steps}")
    pts = traj.points[: upto + 1]
    try:
        mask = np.asarray(indicator(pts), dtype=bool)
        if mask.shape != (pts.shape[0],):
            raise TypeError
    except TypeError:
        mask = np.fromiter((bool(indicator(p)) for p in pts), dtype=bool, count=pts.shape[0])
    return float(traj.steps[: upto + 1][mask].sum())


CSV_FMT = "%.17g"


def save_trajectory_csv(traj: Trajectory, path) -> None:
    """Write stored iterates: header i,t,eps,f,x0..x{n-1},v0..v{n-1}."""
    n = traj.dimension
    cols = ["i", "t", "eps", "f"] + [f"x{j}" for j in range(n)] + [f"v{j}" for j in range(n)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for r in range(traj.stored):
            row = [str(int(traj.indices[r])),
                   CSV_FMT % traj.times[r], CSV_FMT % traj.steps[r], CSV_FMT % traj.values[r]]
            row += [CSV_FMT % v for v in traj.points[r]]
            row += [CSV_FMT % v for v in traj.velocities[r]]
            fh.write(",".join(row) + "\n")


def load_trajectory_csv(path, oracle_id: str = "", schedule: StepSchedule | None = None,
                        policy: SelectionPolicy | None = None, thin: int = 1,
                        diverged: bool = False) -> Trajectory:
    """Read a trajectory CSV back; meta fields come from the caller (manifest)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        n = sum(1 for c in header if c.startswith("x"))
        rows = [line.strip().split(",") for line in fh if line.strip()]
    m = len(rows)
    data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    indices = data[:, 0].astype(np.int64)
    traj = Trajectory(
        points=data[:, 4:4 + n], velocities=data[:, 4 + n:4 + 2 * n],
        steps=data[:, 2], times=data[:, 1], values=data[:, 3], indices=indices,
        oracle_id=oracle_id, schedule=schedule, policy=policy,
        n_steps=int(indices[-1]) if m else 0, requested_steps=int(indices[-1]) if m else 0,
        thin=thin, diverged=diverged,
        total_time=float(data[-1, 1]) if m else 0.0,
        step_velocity_sum=(), f_min=float(data[:, 3].min()) if m else math.inf,
        f_max=float(data[:, 3].max()) if m else -math.inf)
    return traj
