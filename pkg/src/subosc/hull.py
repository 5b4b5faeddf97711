"""Minimum-norm points and distances for convex hulls of finitely many vertices.

Everything here works on a (k, n) array of hull vertices.  Planar hulls are
handled exactly (point / segment / polygon projection); higher-dimensional
hulls with more than two vertices go through Wolfe's min-norm-point algorithm,
which terminates finitely on the small vertex sets we deal with.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def _project_segment(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Closest point to the origin on the segment [a, b]."""
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        return a.copy()
    t = float(-(a @ d) / dd)
    t = min(1.0, max(0.0, t))
    return a + t * d


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Indices of the convex hull of 2-D points, counter-clockwise (monotone chain)."""
    order = np.lexsort((points[:, 1], points[:, 0]))

    def cross(o, a, b):
        return (points[a, 0] - points[o, 0]) * (points[b, 1] - points[o, 1]) - (
            points[a, 1] - points[o, 1]
        ) * (points[b, 0] - points[o, 0])

    lower: list[int] = []
    for idx in order:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], idx) <= 0:
            lower.pop()
        lower.append(int(idx))
    upper: list[int] = []
    for idx in order[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], idx) <= 0:
            upper.pop()
        upper.append(int(idx))
    return np.array(lower[:-1] + upper[:-1], dtype=int)


def _min_norm_2d(vertices: np.ndarray) -> np.ndarray:
    """Exact min-norm point for a planar polytope."""
    hull = _convex_hull_2d(vertices)
    if len(hull) <= 1:
        return vertices[hull[0]].copy() if len(hull) else vertices[0].copy()
    if len(hull) == 2:
        return _project_segment(vertices[hull[0]], vertices[hull[1]])
    # origin inside? all cross products of consecutive edges vs origin same sign
    pts = vertices[hull]
    nxt = np.roll(pts, -1, axis=0)
    cr = pts[:, 0] * (nxt[:, 1] - pts[:, 1]) - pts[:, 1] * (nxt[:, 0] - pts[:, 0])
    if np.all(cr >= 0.0) or np.all(cr <= 0.0):
        return np.zeros(2)
    best = None
    best_norm = np.inf
    for a, b in zip(pts, nxt):
        cand = _project_segment(a, b)
        nn = float(cand @ cand)
        if nn < best_norm:
            best_norm = nn
            best = cand
    return best


def _affine_minimizer(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-norm point over the affine hull of the rows of S, with affine weights."""
    k = S.shape[0]
    M = np.ones((k, k)) + S @ S.T
    try:
        beta = np.linalg.solve(M, np.ones(k))
    except np.linalg.LinAlgError:
        beta, *_ = np.linalg.lstsq(M, np.ones(k), rcond=None)
    s = beta.sum()
    if s == 0.0:
        alpha = np.full(k, 1.0 / k)
    else:
        alpha = beta / s
    return alpha @ S, alpha


def _min_norm_wolfe(vertices: np.ndarray, tol: float = _EPS) -> np.ndarray:
    """Wolfe's min-norm-point algorithm over conv(vertices)."""
    k = vertices.shape[0]
    scale = 1.0 + float(np.abs(vertices).max(initial=0.0))
    start = int(np.argmin(np.einsum("ij,ij->i", vertices, vertices)))
    active = [start]
    lam = np.array([1.0])
    x = vertices[start].astype(float).copy()
    for _ in range(16 * k + 64):
        dots = vertices @ x
        j = int(np.argmin(dots))
        if dots[j] >= float(x @ x) - tol * scale * scale or j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        while True:
            S = vertices[active]
            y, alpha = _affine_minimizer(S)
            if np.all(alpha > _EPS):
                x, lam = y, alpha
                break
            mask = alpha <= _EPS
            theta = np.min(lam[mask] / (lam[mask] - alpha[mask]))
            theta = min(1.0, max(0.0, float(theta)))
            lam = (1.0 - theta) * lam + theta * alpha
            keep = lam > _EPS
            if keep.all():
                keep[int(np.argmin(lam))] = False
            active = [a for a, kp in zip(active, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
            x = lam @ vertices[active]
    return x


def min_norm_point(vertices: np.ndarray) -> np.ndarray:
    """Point of minimum Euclidean norm in the convex hull of the given vertices."""
    V = np.asarray(vertices, dtype=float)
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError("vertices must be a nonempty (k, n) array")
    k, n = V.shape
    if k == 1:
        return V[0].copy()
    if k == 2:
        return _project_segment(V[0], V[1])
    if n == 1:
        lo, hi = float(V.min()), float(V.max())
        return np.array([min(hi, max(lo, 0.0))])
    if n == 2:
        return _min_norm_2d(V)
    return _min_norm_wolfe(V)


def dist_to_hull(point: np.ndarray, vertices: np.ndarray) -> float:
    """Euclidean distance from a point to conv(vertices)."""
    V = np.asarray(vertices, dtype=float)
    p = np.asarray(point, dtype=float)
    return float(np.linalg.norm(min_norm_point(V - p)))
