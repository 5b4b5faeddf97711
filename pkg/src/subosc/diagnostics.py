"""Asymptotic diagnostics over recorded trajectories.

All statistics weight iterate i by its step eps_i, matching the time counters
t_N and t_N(U).  Checkpoints are iterate indices; occupation-style statistics
include iterates i <= k, while compensation-style sums run over the first k
steps (i < k), so the telescoped endpoint x_k is always available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import Trajectory
from .oracles import FunctionOracle, PolyhedralFunction, dist_to_critical


def default_checkpoints(n_steps: int, per_decade: int = 4, first: int = 1) -> list[int]:
    """Geometric checkpoint indices round(10^(k/per_decade)), capped at n_steps."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    out: list[int] = []
    k = 0
    while True:
        c = round(10.0 ** (k / per_decade))
        if c > n_steps:
            break
        if c >= first and (not out or c > out[-1]):
            out.append(int(c))
        k += 1
    if not out or out[-1] != n_steps:
        out.append(n_steps)
    return out


@dataclass(frozen=True)
class Cutoff:
    """Radial piecewise-linear bump: 1 on B_eta(center), 0 outside B_delta(center)."""

    center: tuple[float, ...]
    eta: float
    delta: float

    def __post_init__(self):
        if not (0 < self.eta < self.delta):
            raise ValueError("cutoff needs 0 < eta < delta")

    def __call__(self, x) -> np.ndarray | float:
        p = np.asarray(x, dtype=float)
        single = p.ndim == 1
        r = np.linalg.norm(np.atleast_2d(p) - np.asarray(self.center), axis=1)
        psi = np.clip((self.delta - r) / (self.delta - self.eta), 0.0, 1.0)
        return float(psi[0]) if single else psi


@dataclass
class CompensationSeries:
    """R_k = ||sum eps_i v_i psi(x_i)|| / sum eps_i psi(x_i) over the first k steps."""

    checkpoints: np.ndarray
    ratios: np.ndarray        # nan where the cutoff mass is zero
    masses: np.ndarray        # cutoff mass as a fraction of elapsed time


def compensation_ratio(traj: Trajectory, psi: Callable,
                       checkpoints: Sequence[int] | None = None) -> CompensationSeries:
    traj.require_dense("compensation_ratio")
    if checkpoints is None:
        checkpoints = default_checkpoints(traj.n_steps)
    cps = np.asarray(sorted(set(int(k) for k in checkpoints)), dtype=np.int64)
    if cps[0] < 1 or cps[-1] > traj.n_steps:
        raise ValueError("checkpoints must lie in [1, n_steps]")
    m = traj.n_steps
    w = traj.steps[:m] * np.asarray(psi(traj.points[:m]), dtype=float)
    cw = np.cumsum(w)
    cwv = np.cumsum(w[:, None] * traj.velocities[:m], axis=0)
    ce = np.cumsum(traj.steps[:m])
    denom = cw[cps - 1]
    num = np.linalg.norm(cwv[cps - 1], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(denom > 0, num / denom, np.nan)
        masses = np.where(denom > 0, denom / ce[cps - 1], 0.0)
    return CompensationSeries(checkpoints=cps, ratios=ratios, masses=masses)


@dataclass
class IntervalDecomposition:
    """Maximal index intervals inside B_delta(center) that touch B_eta(center)."""

    center: tuple[float, ...]
    eta: float
    delta: float
    intervals: list[tuple[int, int]]      # inclusive index pairs
    interval_times: list[float]           # sum of eps over each interval
    interval_step_sums: np.ndarray        # (k, n) sum of eps_i v_i per interval
    lengths: list[int]

    @property
    def total_time(self) -> float:
        return float(sum(self.interval_times))

    @property
    def compensation_statistic(self) -> float:
        """||sum over the union of eps_i v_i|| / sum of eps_i; nan when empty."""
        if not self.intervals:
            return math.nan
        return float(np.linalg.norm(self.interval_step_sums.sum(axis=0)) / self.total_time)


def interval_decomposition(traj: Trajectory, center, eta: float,
                           delta: float) -> IntervalDecomposition:
    traj.require_dense("interval_decomposition")
    if not (0 < eta < delta):
        raise ValueError("need 0 < eta < delta")
    c = np.asarray(center, dtype=float)
    r = np.linalg.norm(traj.points - c, axis=1)
    in_delta = r <= delta
    in_eta = r <= eta
    edges = np.flatnonzero(np.diff(np.concatenate(([0], in_delta.astype(np.int8), [0]))))
    starts, ends = edges[0::2], edges[1::2] - 1
    intervals, times, sums, lengths = [], [], [], []
    for a, b in zip(starts, ends):
        if not in_eta[a:b + 1].any():
            continue
        intervals.append((int(a), int(b)))
        e = traj.steps[a:b + 1]
        times.append(float(e.sum()))
        sums.append((e[:, None] * traj.velocities[a:b + 1]).sum(axis=0))
        lengths.append(int(b - a + 1))
    step_sums = np.asarray(sums) if sums else np.zeros((0, traj.dimension))
    return IntervalDecomposition(tuple(float(v) for v in c), eta, delta,
                                 intervals, times, step_sums, lengths)


def separation_time(traj: Trajectory, ball_a, ball_b, from_index: int = 0) -> float:
    """Least sum_{p=i}^{l} eps_p with from_index <= i < l, x_i in ball_a, x_l in ball_b.

    Balls are (center, radius) pairs and must be disjoint.  Returns inf when the
    recorded prefix contains no such pair.
    """
    traj.require_dense("separation_time")
    (ca, ra), (cb, rb) = ball_a, ball_b
    ca = np.asarray(ca, dtype=float)
    cb = np.asarray(cb, dtype=float)
    if float(np.linalg.norm(ca - cb)) <= ra + rb:
        raise ValueError("separation balls overlap; they must be disjoint")
    if not (0 <= from_index <= traj.n_steps):
        raise ValueError("from_index outside the recorded range")
    visits_a = np.flatnonzero(np.linalg.norm(traj.points - ca, axis=1) <= ra)
    visits_b = np.flatnonzero(np.linalg.norm(traj.points - cb, axis=1) <= rb)
    if visits_a.size == 0 or visits_b.size == 0:
        return math.inf
    S = np.concatenate(([0.0], np.cumsum(traj.steps)))
    ii = visits_a[visits_a >= from_index]
    if ii.size == 0:
        return math.inf
    pos = np.searchsorted(visits_b, ii + 1)
    ok = pos < visits_b.size
    if not ok.any():
        return math.inf
    ll = visits_b[pos[ok]]
    return float(np.min(S[ll + 1] - S[ii[ok]]))


@dataclass(frozen=True)
class FlaggedCell:
    cell: tuple[int, ...]
    center: tuple[float, ...]
    estimate: float
    mean_point: tuple[float, ...]
    dist_to_critical: float | None


@dataclass
class EssAccReport:
    """Occupation fractions per cell over checkpoints and the flagged tail-persistent cells."""

    lo: np.ndarray
    hi: np.ndarray
    shape: tuple[int, ...]
    checkpoints: np.ndarray
    fractions: np.ndarray        # (n_checkpoints, n_cells + 1); last column = overflow
    estimates: np.ndarray        # (n_cells,) max tail-half fraction per cell
    tau: float
    flagged: list[FlaggedCell]

    def cell_center(self, cell: Sequence[int]) -> np.ndarray:
        w = (self.hi - self.lo) / np.asarray(self.shape)
        return self.lo + (np.asarray(cell, dtype=float) + 0.5) * w


def _cell_flat_indices(points, lo, hi, shape):
    """Flat cell index per point; points outside the box get index n_cells."""
    n_cells = int(np.prod(shape))
    inside = np.all((points >= lo) & (points <= hi), axis=1)
    idx = np.floor((points - lo) / ((hi - lo) / np.asarray(shape))).astype(int)
    idx = np.minimum(idx, np.asarray(shape) - 1)
    flat = np.full(points.shape[0], n_cells, dtype=np.int64)
    if inside.any():
        flat[inside] = np.ravel_multi_index(tuple(idx[inside].T), shape)
    return flat, n_cells


def neighborhood_criticality(oracle: FunctionOracle, point, scale: float) -> float:
    """dist(0, hull of subgradients active within a length-scale of the point).

    The active-set tolerance is widened so pieces that attain the max anywhere
    within `scale` of the point count as active: tol = slope * scale / (1+|f|).
    """
    p = np.asarray(point, dtype=float)
    slope = float(np.linalg.norm(oracle.subdiff(p).vertices, axis=1).max())
    f = abs(oracle.value(p))
    tol = slope * scale / (1.0 + f) if slope > 0 else 0.0
    return dist_to_critical(oracle.subdiff(p, tol_active=tol))


def essacc_estimate(traj: Trajectory, box=None, resolution: int = 64,
                    checkpoints: Sequence[int] | None = None, tau: float = 0.01,
                    oracle: FunctionOracle | None = None) -> EssAccReport:
    """Flag grid cells whose tail-checkpoint occupation fraction exceeds tau.

    The limsup surrogate per cell is the max occupation fraction over the tail
    half of the checkpoint list, which discards burn-in checkpoints.
    """
    traj.require_dense("essacc_estimate")
    if not (0 < tau < 1):
        raise ValueError("tau must lie in (0, 1)")
    n = traj.dimension
    if box is None:
        if traj.guard_lo:
            lo = np.asarray(traj.guard_lo, dtype=float)
            hi = np.asarray(traj.guard_hi, dtype=float)
        else:
            lo = traj.points.min(axis=0)
            hi = traj.points.max(axis=0)
    else:
        lo = np.asarray(box[0], dtype=float)
        hi = np.asarray(box[1], dtype=float)
    shape = (resolution,) * n if isinstance(resolution, int) else tuple(resolution)
    if checkpoints is None:
        checkpoints = default_checkpoints(traj.n_steps)
    cps = np.asarray(sorted(set(int(k) for k in checkpoints)), dtype=np.int64)
    if cps[0] < 0 or cps[-1] > traj.n_steps:
        raise ValueError("checkpoints must lie in [0, n_steps]")

    flat, n_cells = _cell_flat_indices(traj.points, lo, hi, shape)
    mass = np.zeros(n_cells + 1)
    fractions = np.empty((cps.size, n_cells + 1))
    prev = 0
    for row, k in enumerate(cps):
        np.add.at(mass, flat[prev:k + 1], traj.steps[prev:k + 1])
        fractions[row] = mass / traj.times[k]
        prev = int(k) + 1
    tail = fractions[cps.size // 2:, :n_cells]
    estimates = tail.max(axis=0)

    flagged: list[FlaggedCell] = []
    widths = (hi - lo) / np.asarray(shape)
    diag = float(np.linalg.norm(widths))
    for c in np.flatnonzero(estimates > tau):
        cell = tuple(int(v) for v in np.unravel_index(c, shape))
        rows = flat == c
        w = traj.steps[rows]
        mean = tuple(float(v) for v in (w[:, None] * traj.points[rows]).sum(axis=0) / w.sum())
        dist = neighborhood_criticality(oracle, mean, diag) if oracle is not None else None
        center = tuple(float(v) for v in lo + (np.asarray(cell) + 0.5) * widths)
        flagged.append(FlaggedCell(cell, center, float(estimates[c]), mean, dist))
    flagged.sort(key=lambda fc: -fc.estimate)
    return EssAccReport(lo=lo, hi=hi, shape=shape, checkpoints=cps,
                        fractions=fractions, estimates=estimates, tau=tau, flagged=flagged)


def occupied_cells(traj: Trajectory, box, resolution, from_index: int = 0) -> set[tuple[int, ...]]:
    """Cells visited by any iterate with index >= from_index (accumulation surrogate)."""
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    n = traj.dimension
    shape = (resolution,) * n if isinstance(resolution, int) else tuple(resolution)
    sel = traj.indices >= from_index
    flat, n_cells = _cell_flat_indices(traj.points[sel], lo, hi, shape)
    return {tuple(int(v) for v in np.unravel_index(c, shape))
            for c in np.unique(flat) if c < n_cells}


@dataclass(frozen=True)
class PerpReport:
    count: int
    max_abs: float
    mean_abs: float


def perpendicularity(traj: Trajectory, center, radius: float,
                     tangent_basis: Sequence[Sequence[float]],
                     tail_fraction: float = 0.1,
                     min_velocity_norm: float = 0.0) -> PerpReport:
    """Tail statistics of |w . v_i| over iterates near the center, per basis vector w.

    Iterates qualify when they fall in the last tail_fraction of the run, lie
    within `radius` of the center, and carry ||v_i|| >= min_velocity_norm (the
    substantial-oscillation filter).  An empty basis has nothing to project
    onto and reports zero; no qualifying iterates reports nan.
    """
    if not (0 < tail_fraction <= 1):
        raise ValueError("tail_fraction must lie in (0, 1]")
    basis = [np.asarray(w, dtype=float) for w in tangent_basis]
    for w in basis:
        if abs(float(np.linalg.norm(w)) - 1.0) > 1e-9:
            raise ValueError("tangent basis vectors must be unit-norm")
    cutoff_index = math.ceil((1.0 - tail_fraction) * traj.n_steps)
    sel = traj.indices >= cutoff_index
    sel &= np.linalg.norm(traj.points - np.asarray(center, dtype=float), axis=1) <= radius
    if min_velocity_norm > 0:
        sel &= np.linalg.norm(traj.velocities, axis=1) >= min_velocity_norm
    count = int(sel.sum())
    if count == 0:
        return PerpReport(0, math.nan, math.nan)
    if not basis:
        return PerpReport(count, 0.0, 0.0)
    V = traj.velocities[sel]
    dots = np.abs(V @ np.stack(basis).T)   # (count, n_basis)
    return PerpReport(count, float(dots.max()), float(dots.mean(axis=0).max()))


def value_convergence(traj: Trajectory, window: int) -> tuple[float, float]:
    """(max - min, mean) of f over the last `window` stored iterates."""
    if not (isinstance(window, int) and window >= 1):
        raise ValueError("window must be a positive integer")
    if window > traj.stored:
        raise ValueError(f"window {window} exceeds the {traj.stored} stored iterates")
    tail = traj.values[-window:]
    return float(tail.max() - tail.min()), float(tail.mean())


@dataclass(frozen=True)
class Region:
    """Named region with the constant gradient the oracle takes on it."""

    name: str
    gradient: tuple[float, ...]
    indicator: Callable   # (m, n) array -> bool mask


def polyhedral_regions(oracle: PolyhedralFunction) -> list[Region]:
    """One region per affine piece: the set where that piece attains the max.

    Ties go to the lowest piece index, so the regions partition the plane.
    """
    G = np.array([p.gradient for p in oracle.pieces], dtype=float)
    b = np.array([p.offset for p in oracle.pieces], dtype=float)

    def make(r):
        def ind(X):
            return np.argmax(np.asarray(X, dtype=float) @ G.T + b, axis=1) == r
        return ind

    return [Region(f"piece{r}", tuple(float(v) for v in G[r]), make(r))
            for r in range(G.shape[0])]


@dataclass
class RegionOccupation:
    checkpoints: np.ndarray
    names: list[str]
    gradients: np.ndarray     # (R, n)
    fractions: np.ndarray     # (R, n_checkpoints)
    residuals: np.ndarray     # (n_checkpoints,) ||sum_r lambda_r g_r||

    def final_fractions(self) -> np.ndarray:
        return self.fractions[:, -1]

    @property
    def final_residual(self) -> float:
        return float(self.residuals[-1])


def region_occupation(traj: Trajectory, regions: Sequence[Region],
                      checkpoints: Sequence[int] | None = None) -> RegionOccupation:
    """Time fraction per region at each checkpoint, and the mixed-gradient residual."""
    traj.require_dense("region_occupation")
    if checkpoints is None:
        checkpoints = default_checkpoints(traj.n_steps)
    cps = np.asarray(sorted(set(int(k) for k in checkpoints)), dtype=np.int64)
    if cps[0] < 0 or cps[-1] > traj.n_steps:
        raise ValueError("checkpoints must lie in [0, n_steps]")
    masks = np.stack([np.asarray(r.indicator(traj.points), dtype=bool) for r in regions])
    if np.any(masks.sum(axis=0) > 1):
        raise ValueError("regions overlap; they must be pairwise disjoint")
    weighted = np.cumsum(masks * traj.steps, axis=1)
    fractions = weighted[:, cps] / traj.times[cps]
    gradients = np.array([r.gradient for r in regions], dtype=float)
    residuals = np.linalg.norm(fractions.T @ gradients, axis=1)
    return RegionOccupation(checkpoints=cps, names=[r.name for r in regions],
                            gradients=gradients, fractions=fractions, residuals=residuals)
