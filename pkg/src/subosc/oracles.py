"""Path-differentiable test functions with exact Clarke subdifferential oracles.

An oracle exposes `value(x)` and `subdiff(x)`; the subdifferential is always
reported as the convex hull of finitely many vertices (a singleton at smooth
points).  Subgradient selection policies pick one element of that hull.

The built-in catalog:

* ``tripod``    -- max(-2x, x+y, x-y); unique minimum at the origin where the
                   three constant-gradient regions meet.
* ``absvalley`` -- |x| in the plane; the whole y-axis is critical.
* ``nsbanana``  -- 100|y - x^2| + |1 - x|; a sharp curved valley with its
                   bottom at (1, 1).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hull import dist_to_hull, min_norm_point

DEFAULT_TOL_ACTIVE = 1e-9

POLICY_KINDS = ("first-active", "min-norm", "random-vertex", "random-hull")


@dataclass(frozen=True)
class SubdiffDescription:
    """Convex hull of finitely many subgradient vertices at one point."""

    kind: str
    vertices: np.ndarray  # (k, n)

    @staticmethod
    def from_vertices(vertices: np.ndarray | Sequence[Sequence[float]]) -> "SubdiffDescription":
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        if V.shape[0] == 0:
            raise ValueError("subdifferential needs at least one vertex")
        kind = "singleton" if V.shape[0] == 1 else "vertex-hull"
        return SubdiffDescription(kind, V)

    @property
    def is_singleton(self) -> bool:
        return self.vertices.shape[0] == 1


def dist_to_critical(sd: SubdiffDescription) -> float:
    """dist(0, conv(vertices)); zero exactly when the point is Clarke-critical."""
    return float(np.linalg.norm(min_norm_point(sd.vertices)))


@dataclass(frozen=True)
class SelectionPolicy:
    """How one element of the subdifferential hull is picked at each iterate."""

    kind: str = "first-active"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown selection policy {self.kind!r}; choose from {POLICY_KINDS}")

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def _select_tuple(kind: str, verts: tuple, rng: np.random.Generator | None) -> tuple:
    """Selection on tuple-of-tuples vertices (hot path)."""
    if len(verts) == 1 or kind == "first-active":
        return verts[0]
    if kind == "min-norm":
        return tuple(min_norm_point(np.asarray(verts, dtype=float)))
    if rng is None:
        raise ValueError("random selection kinds need a generator")
    if kind == "random-vertex":
        return verts[int(rng.integers(0, len(verts)))]
    w = rng.dirichlet(np.ones(len(verts)))
    V = np.asarray(verts, dtype=float)
    return tuple((w @ V).tolist())


def select(policy: SelectionPolicy, sd: SubdiffDescription,
           rng: np.random.Generator | None = None) -> np.ndarray:
    """One subgradient from the hull, per the policy; reproducible given the seed."""
    if rng is None and policy.kind in ("random-vertex", "random-hull"):
        rng = policy.make_rng()
    verts = tuple(tuple(row) for row in sd.vertices)
    return np.asarray(_select_tuple(policy.kind, verts, rng), dtype=float)


@dataclass(frozen=True)
class Stratum:
    """Declared affine stratum: anchor point plus an orthonormal tangent basis."""

    anchor: tuple[float, ...]
    tangent_basis: tuple[tuple[float, ...], ...]
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.tangent_basis)

    def contains(self, point: Sequence[float], tol: float = 1e-9) -> bool:
        d = np.asarray(point, dtype=float) - np.asarray(self.anchor)
        for b in self.tangent_basis:
            d = d - (d @ np.asarray(b)) * np.asarray(b)
        return float(np.linalg.norm(d)) <= tol


class FunctionOracle:
    """Base oracle: exact value and Clarke subdifferential of a test function."""

    def __init__(self, name: str, dimension: int,
                 lipschitz_bound: float | None = None,
                 strata: tuple[Stratum, ...] = ()):
        self.name = name
        self.dimension = dimension
        self.lipschitz_bound = lipschitz_bound
        self.strata = strata

    def kernel(self, tol_active: float = DEFAULT_TOL_ACTIVE) -> Callable:
        """Step closure: x (sequence of floats) -> (f(x), active gradient vertices)."""
        raise NotImplementedError

    def _check_point(self, x) -> np.ndarray:
        p = np.asarray(x, dtype=float)
        if p.shape != (self.dimension,):
            raise ValueError(
                f"point of shape {p.shape} passed to {self.name!r} (dimension {self.dimension})")
        if not np.isfinite(p).all():
            raise ValueError("point has non-finite entries")
        return p

    def value(self, x) -> float:
        p = self._check_point(x)
        f, _ = self.kernel()(tuple(p))
        return f

    def subdiff(self, x, tol_active: float = DEFAULT_TOL_ACTIVE) -> SubdiffDescription:
        p = self._check_point(x)
        _, verts = self.kernel(tol_active)(tuple(p))
        return SubdiffDescription.from_vertices(np.asarray(verts, dtype=float))

    def stratum_containing(self, point, tol: float = 1e-9) -> Stratum | None:
        """Smallest-dimension declared stratum whose affine span contains the point."""
        hits = [s for s in self.strata if s.contains(point, tol)]
        if not hits:
            return None
        return min(hits, key=lambda s: s.dim)


@dataclass(frozen=True)
class AffinePiece:
    """One affine piece g.x + b of a polyhedral max."""

    gradient: tuple[float, ...]
    offset: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(g) for g in self.gradient):
            raise ValueError("affine piece gradient must be finite")

    def value(self, x) -> float:
        return float(np.asarray(self.gradient) @ np.asarray(x, dtype=float) + self.offset)


class PolyhedralFunction(FunctionOracle):
    """f(x) = max over affine pieces; subdifferential = hull of active gradients."""

    def __init__(self, pieces: Sequence[AffinePiece], name: str = "polyhedral",
                 strata: tuple[Stratum, ...] = ()):
        if not pieces:
            raise ValueError("polyhedral function needs at least one piece")
        dims = {len(p.gradient) for p in pieces}
        if len(dims) != 1:
            raise ValueError("all pieces must share one dimension")
        self.pieces = tuple(pieces)
        lip = max(math.hypot(*p.gradient) if len(p.gradient) == 2
                  else float(np.linalg.norm(p.gradient)) for p in pieces)
        super().__init__(name, dims.pop(), lipschitz_bound=lip, strata=strata)

    @staticmethod
    def from_rows(rows: Sequence[Sequence[float]], name: str = "polyhedral") -> "PolyhedralFunction":
        """Rows of n+1 floats: gradient components then the offset."""
        pieces = [AffinePiece(tuple(float(v) for v in row[:-1]), float(row[-1])) for row in rows]
        return PolyhedralFunction(pieces, name=name)

    def kernel(self, tol_active: float = DEFAULT_TOL_ACTIVE) -> Callable:
        grads = tuple(p.gradient for p in self.pieces)
        offs = tuple(p.offset for p in self.pieces)
        if self.dimension == 2:
            rows = tuple((g[0], g[1], b) for g, b in zip(grads, offs))

            def kern2(x):
                x0, x1 = x
                best = -math.inf
                vals = []
                for g0, g1, b in rows:
                    s = g0 * x0 + g1 * x1 + b
                    vals.append(s)
                    if s > best:
                        best = s
                thr = best - tol_active * (1.0 + abs(best))
                verts = tuple(grads[j] for j, s in enumerate(vals) if s >= thr)
                return best, verts

            return kern2

        def kern(x):
            best = -math.inf
            vals = []
            for g, b in zip(grads, offs):
                s = b
                for gj, xj in zip(g, x):
                    s += gj * xj
                vals.append(s)
                if s > best:
                    best = s
            thr = best - tol_active * (1.0 + abs(best))
            verts = tuple(grads[j] for j, s in enumerate(vals) if s >= thr)
            return best, verts

        return kern


class SmoothTerm:
    """Differentiable additive term given by closed-form value/gradient callables."""

    def __init__(self, value_fn: Callable, grad_fn: Callable, label: str = ""):
        self.value_fn = value_fn
        self.grad_fn = grad_fn
        self.label = label

    def kernel_fn(self) -> Callable:
        vf, gf = self.value_fn, self.grad_fn

        def term(x):
            return float(vf(x)), tuple(gf(x)), None, math.inf

        return term


class AbsTerm:
    """scale * |inner(x)| for a smooth inner function; kinks where inner vanishes."""

    def __init__(self, inner_fn: Callable, inner_grad_fn: Callable,
                 scale: float = 1.0, label: str = ""):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.inner_fn = inner_fn
        self.inner_grad_fn = inner_grad_fn
        self.scale = scale
        self.label = label

    def kernel_fn(self) -> Callable:
        vf, gf, c = self.inner_fn, self.inner_grad_fn, self.scale

        def term(x):
            w = float(vf(x))
            g = gf(x)
            s = c if w >= 0.0 else -c
            active = tuple(s * gj for gj in g)
            alt = tuple(-a for a in active)
            return c * abs(w), active, alt, 2.0 * c * abs(w)

        return term


class CompositeFunction(FunctionOracle):
    """Additive combination of smooth and absolute-value terms."""

    def __init__(self, terms: Sequence, dimension: int, name: str = "composite",
                 lipschitz_bound: float | None = None, strata: tuple[Stratum, ...] = ()):
        if not terms:
            raise ValueError("composite function needs at least one term")
        self.terms = tuple(terms)
        super().__init__(name, dimension, lipschitz_bound=lipschitz_bound, strata=strata)

    def kernel(self, tol_active: float = DEFAULT_TOL_ACTIVE) -> Callable:
        fns = tuple(t.kernel_fn() for t in self.terms)
        n = self.dimension

        def kern(x):
            f = 0.0
            parts = []
            for fn in fns:
                v, g, alt, gap = fn(x)
                f += v
                parts.append((g, alt, gap))
            thr = tol_active * (1.0 + abs(f))
            base = [0.0] * n
            kinked = []
            for g, alt, gap in parts:
                for j in range(n):
                    base[j] += g[j]
                if alt is not None and gap <= thr:
                    kinked.append((g, alt))
            if not kinked:
                return f, (tuple(base),)
            verts = []
            for combo in itertools.product((0, 1), repeat=len(kinked)):
                v = list(base)
                for pick, (g, alt) in zip(combo, kinked):
                    if pick:
                        for j in range(n):
                            v[j] += alt[j] - g[j]
                verts.append(tuple(v))
            return f, tuple(verts)

        return kern


def eval_oracle(oracle: FunctionOracle, x) -> float:
    """Exact function value; raises on dimension mismatch."""
    return oracle.value(x)


def subdifferential(oracle: FunctionOracle, x,
                    tol_active: float = DEFAULT_TOL_ACTIVE) -> SubdiffDescription:
    """Clarke subdifferential description, with relative active-set tolerance."""
    if tol_active < 0:
        raise ValueError("tol_active must be nonnegative")
    return oracle.subdiff(x, tol_active)


_SQ10 = math.sqrt(10.0)


def tripod() -> PolyhedralFunction:
    """max(-2x, x+y, x-y): three constant-gradient wedges meeting at the origin."""
    strata = (
        Stratum((0.0, 0.0), (), name="apex"),
        Stratum((0.0, 0.0), (((1.0, 0.0)),), name="edge-23"),
        Stratum((0.0, 0.0), ((-1.0 / _SQ10, 3.0 / _SQ10),), name="edge-12"),
        Stratum((0.0, 0.0), ((-1.0 / _SQ10, -3.0 / _SQ10),), name="edge-13"),
    )
    return PolyhedralFunction(
        [AffinePiece((-2.0, 0.0)), AffinePiece((1.0, 1.0)), AffinePiece((1.0, -1.0))],
        name="tripod", strata=strata)


def absvalley() -> PolyhedralFunction:
    """|x| in the plane; critical set is the whole y-axis."""
    strata = (Stratum((0.0, 0.0), ((0.0, 1.0),), name="valley-axis"),)
    return PolyhedralFunction(
        [AffinePiece((1.0, 0.0)), AffinePiece((-1.0, 0.0))],
        name="absvalley", strata=strata)


def nsbanana() -> CompositeFunction:
    """100|y - x^2| + |1 - x|: nonsmooth curved valley, minimum at (1, 1)."""
    wall = AbsTerm(lambda x: x[1] - x[0] * x[0],
                   lambda x: (-2.0 * x[0], 1.0),
                   scale=100.0, label="valley-wall")
    pull = AbsTerm(lambda x: 1.0 - x[0],
                   lambda x: (-1.0, 0.0),
                   scale=1.0, label="x-pull")
    # declared bound valid on the default [-10, 10]^2 guard box
    lip = 100.0 * math.sqrt(401.0) + 1.0
    strata = (Stratum((1.0, 1.0), (), name="bottom"),)
    return CompositeFunction([wall, pull], dimension=2, name="nsbanana",
                             lipschitz_bound=lip, strata=strata)


BUILTINS: dict[str, Callable[[], FunctionOracle]] = {
    "tripod": tripod,
    "absvalley": absvalley,
    "nsbanana": nsbanana,
}


def builtin(name: str) -> FunctionOracle:
    """Instantiate a built-in oracle by name."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory()


def hull_distance(point, sd: SubdiffDescription) -> float:
    """Distance from an arbitrary vector to the hull described by sd."""
    return dist_to_hull(point, sd.vertices)
