"""Empirical phase-space measures along a trajectory and closed-measure diagnostics.

The interpolant curve moves from x_i with constant derivative -v_i for a time
eps_i.  Its empirical phase measure is represented by one weighted sample per
iterate: position x_i, curve velocity -v_i, weight eps_i.  On that surrogate we
compute grid-binned centroid (mean-velocity) fields, the closedness defect
against polynomial gradient fields, and the circulation of the subdifferential.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .dynamics import Trajectory
from .oracles import (DEFAULT_TOL_ACTIVE, FunctionOracle, PolyhedralFunction,
                      SelectionPolicy, _select_tuple)


@dataclass
class EmpiricalPhaseMeasure:
    """Weighted position-velocity samples; integration is weight-normalized."""

    positions: np.ndarray   # (m, n)
    velocities: np.ndarray  # (m, n) curve velocities
    weights: np.ndarray     # (m,) positive

    def __post_init__(self):
        if self.positions.shape[0] == 0:
            raise ValueError("empirical measure needs at least one sample")
        if np.any(self.weights <= 0):
            raise ValueError("sample weights must be positive")

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def integrate(self, phi: Callable) -> float:
        """Integral of phi(x, v) against the mass-1 normalized measure."""
        vals = np.asarray(phi(self.positions, self.velocities), dtype=float)
        return float((self.weights * vals).sum() / self.total_weight)


def phase_measure(traj: Trajectory, indices: Iterable[int] | None = None) -> EmpiricalPhaseMeasure:
    """Measure of the trajectory restricted to the given iterate indices.

    Sample i carries position x_i, curve velocity -v_i and weight eps_i.
    """
    if indices is None:
        rows = np.arange(traj.stored)
    else:
        wanted = np.asarray(sorted(set(int(i) for i in indices)), dtype=np.int64)
        if wanted.size == 0:
            raise ValueError("index set must be nonempty")
        rows = np.searchsorted(traj.indices, wanted)
        if np.any(rows >= traj.stored) or np.any(traj.indices[rows] != wanted):
            missing = wanted[(rows >= traj.stored) | (traj.indices[np.minimum(rows, traj.stored - 1)] != wanted)]
            raise ValueError(f"iterate indices not stored in this trajectory: {missing[:5]}")
    return EmpiricalPhaseMeasure(
        positions=traj.points[rows].copy(),
        velocities=-traj.velocities[rows],
        weights=traj.steps[rows].copy())


@dataclass
class GridField:
    """Per-cell time mass, velocity sums and counts on a rectangular grid."""

    lo: np.ndarray
    hi: np.ndarray
    shape: tuple[int, ...]
    mass: np.ndarray       # shape
    vel_sum: np.ndarray    # shape + (n,)
    count: np.ndarray      # shape, int64
    overflow_mass: float
    overflow_vel_sum: np.ndarray
    overflow_count: int

    @property
    def widths(self) -> np.ndarray:
        return (self.hi - self.lo) / np.asarray(self.shape)

    def total_mass(self) -> float:
        return float(self.mass.sum() + self.overflow_mass)

    def centroid(self) -> np.ndarray:
        """Mean velocity per cell; nan where the cell carries no mass."""
        out = np.full(self.vel_sum.shape, np.nan)
        occ = self.mass > 0
        out[occ] = self.vel_sum[occ] / self.mass[occ][..., None]
        return out

    def cell_of(self, x) -> tuple[int, ...]:
        p = np.asarray(x, dtype=float)
        idx = np.floor((p - self.lo) / self.widths).astype(int)
        idx = np.minimum(idx, np.asarray(self.shape) - 1)
        return tuple(int(v) for v in idx)

    def cell_center(self, idx: Sequence[int]) -> np.ndarray:
        return self.lo + (np.asarray(idx, dtype=float) + 0.5) * self.widths

    def mass_weighted_mean_speed(self) -> float:
        """Mass-weighted average of ||centroid|| over occupied cells."""
        occ = self.mass > 0
        vbar = self.vel_sum[occ] / self.mass[occ][..., None]
        speeds = np.linalg.norm(vbar, axis=-1)
        return float((self.mass[occ] * speeds).sum() / self.mass[occ].sum())


def centroid_field(mu: EmpiricalPhaseMeasure, box, resolution) -> GridField:
    """Bin the measure on a grid; samples outside the box go to an overflow cell."""
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    n = mu.positions.shape[1]
    if lo.shape != (n,) or hi.shape != (n,):
        raise ValueError("box endpoints must match the sample dimension")
    if isinstance(resolution, int):
        shape = (resolution,) * n
    else:
        shape = tuple(int(r) for r in resolution)
    if any(r < 1 for r in shape):
        raise ValueError("resolution must be at least one cell per axis")
    widths = (hi - lo) / np.asarray(shape)
    pos = mu.positions
    inside = np.all((pos >= lo) & (pos <= hi), axis=1)
    idx = np.floor((pos[inside] - lo) / widths).astype(int)
    idx = np.minimum(idx, np.asarray(shape) - 1)
    flat = np.ravel_multi_index(tuple(idx.T), shape) if idx.shape[0] else np.array([], dtype=int)
    ncells = int(np.prod(shape))
    w_in = mu.weights[inside]
    mass = np.bincount(flat, weights=w_in, minlength=ncells).reshape(shape)
    vel_sum = np.empty(shape + (n,))
    for j in range(n):
        vel_sum[..., j] = np.bincount(
            flat, weights=w_in * mu.velocities[inside, j], minlength=ncells).reshape(shape)
    count = np.bincount(flat, minlength=ncells).reshape(shape).astype(np.int64)
    out = ~inside
    return GridField(
        lo=lo, hi=hi, shape=shape, mass=mass, vel_sum=vel_sum, count=count,
        overflow_mass=float(mu.weights[out].sum()),
        overflow_vel_sum=(mu.weights[out, None] * mu.velocities[out]).sum(axis=0),
        overflow_count=int(out.sum()))


def _monomial_multi_indices(n: int, degree: int) -> list[tuple[int, ...]]:
    out = []
    for total in range(1, degree + 1):
        for alpha in itertools.product(range(total + 1), repeat=n):
            if sum(alpha) == total:
                out.append(alpha)
    return out


def monomial_label(alpha: Sequence[int]) -> str:
    parts = []
    for j, a in enumerate(alpha):
        if a == 1:
            parts.append(f"x{j}")
        elif a > 1:
            parts.append(f"x{j}^{a}")
    return "*".join(parts) if parts else "1"


def closedness_terms(mu: EmpiricalPhaseMeasure, degree: int,
                     box=None) -> list[tuple[str, float]]:
    """Per-monomial values of the closedness integral, gradient sup-normalized."""
    if degree < 1:
        raise ValueError("test degree must be at least 1")
    pos, vel, w = mu.positions, mu.velocities, mu.weights
    n = pos.shape[1]
    if box is None:
        lo = pos.min(axis=0)
        hi = pos.max(axis=0)
    else:
        lo = np.asarray(box[0], dtype=float)
        hi = np.asarray(box[1], dtype=float)
    m = np.maximum(np.abs(lo), np.abs(hi))
    W = float(w.sum())
    out = []
    for alpha in _monomial_multi_indices(n, degree):
        sup_sq = 0.0
        for j, a in enumerate(alpha):
            if a == 0:
                continue
            s = float(a)
            for k, ak in enumerate(alpha):
                e = ak - (1 if k == j else 0)
                if e:
                    s *= m[k] ** e
            sup_sq += s * s
        sup = math.sqrt(sup_sq)
        if sup == 0.0:
            continue
        total = np.zeros(pos.shape[0])
        for j, a in enumerate(alpha):
            if a == 0:
                continue
            part = np.full(pos.shape[0], float(a))
            for k, ak in enumerate(alpha):
                e = ak - (1 if k == j else 0)
                if e:
                    part = part * pos[:, k] ** e
            total += part * vel[:, j]
        out.append((monomial_label(alpha), float((w * total).sum() / W / sup)))
    return out


def closedness_defect(mu: EmpiricalPhaseMeasure, degree: int, box=None) -> float:
    """Max over normalized monomial gradient fields of |integral grad(phi).v dmu|."""
    terms = closedness_terms(mu, degree, box)
    return max(abs(v) for _, v in terms) if terms else 0.0


def closedness_series(traj: Trajectory, degree: int, checkpoints: Sequence[int],
                      box=None) -> tuple[np.ndarray, np.ndarray]:
    """Defect of the prefix measure (iterates 0..k) at each checkpoint.

    All prefixes share one normalization box (default: the whole trajectory's
    bounding box) so the values are comparable across checkpoints.
    """
    traj.require_dense("closedness_series")
    cps = np.asarray(sorted(set(int(k) for k in checkpoints)), dtype=np.int64)
    if cps[0] < 0 or cps[-1] > traj.n_steps:
        raise ValueError("checkpoints must lie in [0, n_steps]")
    pos = traj.points
    vel = -traj.velocities
    w = traj.steps
    n = pos.shape[1]
    if box is None:
        box = (pos.min(axis=0), pos.max(axis=0))
    m = np.maximum(np.abs(np.asarray(box[0], dtype=float)),
                   np.abs(np.asarray(box[1], dtype=float)))
    best = np.zeros(cps.size)
    W = traj.times[cps]
    for alpha in _monomial_multi_indices(n, degree):
        sup_sq = 0.0
        total = np.zeros(pos.shape[0])
        for j, a in enumerate(alpha):
            if a == 0:
                continue
            s = float(a)
            part = np.full(pos.shape[0], float(a))
            for k, ak in enumerate(alpha):
                e = ak - (1 if k == j else 0)
                if e:
                    s *= m[k] ** e
                    part = part * pos[:, k] ** e
            sup_sq += s * s
            total += part * vel[:, j]
        sup = math.sqrt(sup_sq)
        if sup == 0.0:
            continue
        csum = np.cumsum(w * total)
        best = np.maximum(best, np.abs(csum[cps]) / W / sup)
    return cps, best


@dataclass(frozen=True)
class CirculationResult:
    value: float        # time-averaged circulation of the selected subgradient field
    reference: float    # (f(x_stop) - f(x_start)) / elapsed time
    mode: str
    segments: int

    @property
    def error(self) -> float:
        return abs(self.value - self.reference)


def circulation(traj: Trajectory, oracle: FunctionOracle,
                policy: SelectionPolicy | None = None, subsamples: int = 4,
                mode: str = "auto", start: int = 0, stop: int | None = None,
                tol_active: float = 0.0) -> CirculationResult:
    """Integrate sigma(gamma(t)) . gamma'(t) along the interpolant, sigma from the policy.

    For polyhedral oracles ('exact' mode) every step segment is split exactly at
    active-piece crossings, which makes the integral independent of the policy
    up to floating-point rounding; otherwise a midpoint rule with `subsamples`
    points per segment is used.

    Active pieces along a segment are resolved with exact-tie comparisons
    (tol_active = 0): a loose tolerance can hand a whole subsegment to the
    wrong piece when the trajectory hugs a region boundary.
    """
    traj.require_dense("circulation")
    if subsamples < 1:
        raise ValueError("subsamples must be at least 1")
    if policy is None:
        policy = SelectionPolicy("min-norm")
    if stop is None:
        stop = traj.n_steps
    if not (0 <= start < stop <= traj.n_steps):
        raise ValueError("need 0 <= start < stop <= recorded steps")
    if mode == "auto":
        mode = "exact" if isinstance(oracle, PolyhedralFunction) else "midpoint"
    if mode == "exact" and not isinstance(oracle, PolyhedralFunction):
        raise ValueError("exact segment-crossing integration needs a polyhedral oracle")

    pts = traj.points
    vel = traj.velocities
    eps = traj.steps
    rng = policy.make_rng()
    kind = policy.kind
    contribs: list[float] = []

    if mode == "exact":
        G = np.array([p.gradient for p in oracle.pieces], dtype=float)
        b = np.array([p.offset for p in oracle.pieces], dtype=float)
        W0 = (pts[start:stop] @ G.T + b).tolist()
        W1 = (pts[start + 1:stop + 1] @ G.T + b).tolist()
        k = G.shape[0]
        grads = tuple(tuple(row) for row in G)
        pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
        mvel = (-vel[start:stop]).tolist()
        eps_l = eps[start:stop].tolist()
        rge = range(k)
        for s in range(stop - start):
            a = W0[s]
            w1 = W1[s]
            d = [w1[j] - a[j] for j in rge]
            cuts = {0.0, 1.0}
            for i, j in pairs:
                dd = d[j] - d[i]
                if dd != 0.0:
                    t = (a[i] - a[j]) / dd
                    if 0.0 < t < 1.0:
                        cuts.add(t)
            ts = sorted(cuts)
            minus_v = mvel[s]
            e = eps_l[s]
            for lo_t, hi_t in zip(ts[:-1], ts[1:]):
                tm = 0.5 * (lo_t + hi_t)
                vals = [a[j] + tm * d[j] for j in rge]
                best = max(vals)
                thr = best - tol_active * (1.0 + abs(best))
                active = tuple(grads[j] for j in rge if vals[j] >= thr)
                sigma = _select_tuple(kind, active, rng)
                dot = sum(sg * mv for sg, mv in zip(sigma, minus_v))
                contribs.append(e * (hi_t - lo_t) * dot)
    else:
        kern = oracle.kernel(tol_active)
        m = subsamples
        pts_l = pts[start:stop].tolist()
        vel_l = vel[start:stop].tolist()
        eps_l = eps[start:stop].tolist()
        n = pts.shape[1]
        rge = range(n)
        for s in range(stop - start):
            x = pts_l[s]
            v = vel_l[s]
            e = eps_l[s]
            minus_v = [-vj for vj in v]
            for q in range(m):
                tm = (q + 0.5) / m
                xm = tuple(x[j] - tm * e * v[j] for j in rge)
                _, verts = kern(xm)
                sigma = _select_tuple(kind, verts, rng)
                dot = sum(sg * mv for sg, mv in zip(sigma, minus_v))
                contribs.append((e / m) * dot)

    T = math.fsum(float(v) for v in eps[start:stop])
    value = math.fsum(contribs) / T
    reference = (float(traj.values[stop]) - float(traj.values[start])) / T
    return CirculationResult(value=value, reference=reference,
                             mode=mode, segments=stop - start)
