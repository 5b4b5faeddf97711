"""Shared test utilities: synthetic trajectories and naive reference scans."""

import math

import numpy as np

from subosc import Trajectory


def make_synthetic(seed: int, n: int | None = None) -> Trajectory:
    """Reflected random walk with a schedule-like decreasing step sequence."""
    rng = np.random.default_rng(seed)
    if n is None:
        n = int(rng.integers(1500, 3000))
    c = rng.uniform(0.05, 1.0)
    p = rng.uniform(0.5, 1.0)
    steps = c / np.power(np.arange(n + 1) + 1.0, p)
    walk = np.cumsum(rng.normal(scale=0.05, size=(n + 1, 2)), axis=0)
    pts = 1.0 - np.abs(np.mod(walk + 1.0, 4.0) - 2.0)   # reflect into [-1, 1]
    vels = rng.normal(size=(n + 1, 2))
    return Trajectory(points=pts, velocities=vels, steps=steps,
                      times=np.cumsum(steps), values=np.zeros(n + 1),
                      indices=np.arange(n + 1), n_steps=n, requested_steps=n)


def naive_intervals(traj, center, eta, delta):
    """Quadratic-style scan for the maximal touching intervals."""
    r = np.linalg.norm(traj.points - np.asarray(center), axis=1)
    ind = r <= delta
    ine = r <= eta
    out = []
    i = 0
    m = traj.stored
    while i < m:
        if ind[i]:
            j = i
            while j + 1 < m and ind[j + 1]:
                j += 1
            if ine[i:j + 1].any():
                out.append((i, j))
            i = j + 1
        else:
            i += 1
    return out


def naive_separation(traj, ball_a, ball_b, from_index):
    """Brute-force minimum over all qualifying (i, l) visit pairs."""
    (ca, ra), (cb, rb) = ball_a, ball_b
    S = np.concatenate(([0.0], np.cumsum(traj.steps)))
    va = [i for i in range(traj.stored)
          if np.linalg.norm(traj.points[i] - np.asarray(ca)) <= ra and i >= from_index]
    vb = [i for i in range(traj.stored)
          if np.linalg.norm(traj.points[i] - np.asarray(cb)) <= rb]
    best = math.inf
    for i in va:
        for l in vb:
            if l > i:
                best = min(best, float(S[l + 1] - S[i]))
    return best
