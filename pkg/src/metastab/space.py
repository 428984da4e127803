"""Convex bodies, metric projections and nonexpansive operators.

Euclidean points are plain ``numpy`` float arrays.  The exact regime used
for the shift counterexample works with :class:`SparseL1`, a finitely
supported sequence of ``Fraction`` entries under the l1 norm.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .counterfn import CounterFn

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# points


@dataclass(frozen=True)
class SparseL1:
    """Finitely supported sequence with exact rational entries, l1 norm."""

    entries: Mapping[int, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        clean = {int(i): Fraction(v) for i, v in dict(self.entries).items() if Fraction(v) != 0}
        if any(i < 0 for i in clean):
            raise ValueError("sequence indices must be natural numbers")
        object.__setattr__(self, "entries", clean)

    @classmethod
    def constant_prefix(cls, value: Fraction, length: int) -> "SparseL1":
        return cls({i: value for i in range(length)})

    def __getitem__(self, i: int) -> Fraction:
        return self.entries.get(i, Fraction(0))

    def __sub__(self, other: "SparseL1") -> "SparseL1":
        keys = set(self.entries) | set(other.entries)
        return SparseL1({i: self[i] - other[i] for i in keys})

    def __add__(self, other: "SparseL1") -> "SparseL1":
        keys = set(self.entries) | set(other.entries)
        return SparseL1({i: self[i] + other[i] for i in keys})

    def scale(self, c: Fraction) -> "SparseL1":
        return SparseL1({i: c * v for i, v in self.entries.items()})

    def norm(self) -> Fraction:
        return sum((abs(v) for v in self.entries.values()), Fraction(0))

    @property
    def support(self) -> list[int]:
        return sorted(self.entries)


Point = Union[np.ndarray, SparseL1]


def as_point(x) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    if p.ndim != 1:
        raise ValueError("points must be one-dimensional coordinate vectors")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


def norm(x: Point):
    if isinstance(x, SparseL1):
        return x.norm()
    return float(np.linalg.norm(x))


def distance(x: Point, y: Point):
    if isinstance(x, SparseL1) != isinstance(y, SparseL1):
        raise TypeError("cannot mix l1 and Euclidean points")
    return norm(x - y)


def inner(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.dot(x, y))


def convex_combine(gamma: float, u: Point, v: Point) -> Point:
    """``(1 - gamma) u + gamma v``; gamma outside [0, 1] is clamped."""
    if isinstance(u, SparseL1) != isinstance(v, SparseL1):
        raise TypeError("cannot mix l1 and Euclidean points")
    if not 0 <= gamma <= 1:
        log.warning("convex_combine: gamma=%r clamped to [0, 1]", gamma)
        gamma = min(max(gamma, 0), 1)
    if isinstance(u, SparseL1):
        g = Fraction(gamma)
        return u.scale(1 - g) + v.scale(g)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if gamma == 0:
        return u.copy()
    if gamma == 1:
        return v.copy()
    return (1 - gamma) * u + gamma * v


# ---------------------------------------------------------------------------
# convex bodies


class ConvexBody:
    kind: str
    dim: int
    b: int

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"no exact projection onto a {self.kind}")

    def diameter(self) -> float:
        raise NotImplementedError

    def center(self) -> np.ndarray:
        raise NotImplementedError

    def extreme_points(self) -> list[np.ndarray]:
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _set_b(self, b: Optional[int]) -> None:
        diam = self.diameter()
        if b is None:
            b = max(1, math.ceil(diam - 1e-12))
        if int(b) != b or b < 1:
            raise ValueError(f"diameter bound must be a positive integer, got {b!r}")
        if diam > b + 1e-12:
            raise ValueError(f"diameter bound {b} is below the body's diameter {diam:.6g}")
        self.b = int(b)


class Ball(ConvexBody):
    kind = "ball"

    def __init__(self, center, radius: float, b: Optional[int] = None):
        self.c = as_point(center)
        self.radius = float(radius)
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        self.dim = self.c.size
        self._set_b(b)

    def contains(self, x, tol=1e-9):
        return float(np.linalg.norm(x - self.c)) <= self.radius + tol

    def project(self, x):
        d = x - self.c
        r = float(np.linalg.norm(d))
        if r <= self.radius:
            return np.array(x, dtype=float)
        return self.c + d * (self.radius / r)

    def diameter(self):
        return 2 * self.radius

    def center(self):
        return self.c.copy()

    def extreme_points(self):
        pts = []
        for i in range(self.dim):
            for s in (1.0, -1.0):
                e = np.zeros(self.dim)
                e[i] = s * self.radius
                pts.append(self.c + e)
        return pts

    def random_point(self, rng):
        d = rng.standard_normal(self.dim)
        d /= np.linalg.norm(d) or 1.0
        return self.c + d * self.radius * rng.random() ** (1.0 / self.dim)

    def describe(self):
        return {"kind": "ball", "center": self.c.tolist(), "radius": self.radius, "b": self.b}


class Box(ConvexBody):
    kind = "box"

    def __init__(self, lo, hi, b: Optional[int] = None):
        self.lo, self.hi = as_point(lo), as_point(hi)
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("box needs lo <= hi coordinatewise")
        self.dim = self.lo.size
        self._set_b(b)

    def contains(self, x, tol=1e-9):
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def project(self, x):
        return np.clip(x, self.lo, self.hi)

    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def center(self):
        return (self.lo + self.hi) / 2

    def extreme_points(self):
        return [np.array(v) for v in itertools.product(*zip(self.lo, self.hi))]

    def random_point(self, rng):
        return self.lo + (self.hi - self.lo) * rng.random(self.dim)

    def describe(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist(), "b": self.b}


class Segment(ConvexBody):
    kind = "segment"

    def __init__(self, start, end, b: Optional[int] = None):
        self.p, self.q = as_point(start), as_point(end)
        if self.p.shape != self.q.shape:
            raise ValueError("segment endpoints differ in dimension")
        self.dim = self.p.size
        self._set_b(b)

    def contains(self, x, tol=1e-9):
        return float(np.linalg.norm(self.project(x) - x)) <= tol

    def project(self, x):
        d = self.q - self.p
        dd = float(np.dot(d, d))
        if dd == 0:
            return self.p.copy()
        t = min(max(float(np.dot(x - self.p, d)) / dd, 0.0), 1.0)
        return self.p + t * d

    def diameter(self):
        return float(np.linalg.norm(self.q - self.p))

    def center(self):
        return (self.p + self.q) / 2

    def extreme_points(self):
        return [self.p.copy(), self.q.copy()]

    def random_point(self, rng):
        return self.p + rng.random() * (self.q - self.p)

    def describe(self):
        return {"kind": "segment", "start": self.p.tolist(), "end": self.q.tolist(), "b": self.b}


class Polytope(ConvexBody):
    """Bounded intersection of halfspaces ``A x <= c``.

    Membership, sampling and the diameter are exact (via vertex
    enumeration); metric projection is not offered.
    """

    kind = "intersection-of-halfspaces"

    def __init__(self, A, c, b: Optional[int] = None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.c = np.asarray(c, dtype=float)
        if self.A.shape[0] != self.c.size:
            raise ValueError("halfspace matrix and offsets differ in length")
        self.dim = self.A.shape[1]
        self.vertices = self._enumerate_vertices()
        if len(self.vertices) < 1:
            raise ValueError("halfspace intersection is empty")
        self._check_bounded()
        self._set_b(b)

    def _enumerate_vertices(self) -> np.ndarray:
        verts = []
        for rows in itertools.combinations(range(len(self.c)), self.dim):
            M = self.A[list(rows)]
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, self.c[list(rows)])
            if np.all(self.A @ v <= self.c + 1e-9):
                if not any(np.allclose(v, w) for w in verts):
                    verts.append(v)
        return np.array(verts)

    def _check_bounded(self) -> None:
        # bounded iff no nonzero direction d has A d <= 0
        from scipy.optimize import linprog

        for i in range(self.dim):
            for s in (1.0, -1.0):
                obj = np.zeros(self.dim)
                obj[i] = -s
                res = linprog(obj, A_ub=self.A, b_ub=self.c, bounds=[(None, None)] * self.dim)
                if res.status == 3:
                    raise ValueError("halfspace intersection is unbounded")

    def contains(self, x, tol=1e-9):
        return bool(np.all(self.A @ x <= self.c + tol))

    def diameter(self):
        V = self.vertices
        return max(float(np.linalg.norm(V[i] - V[j])) for i in range(len(V)) for j in range(i, len(V)))

    def center(self):
        return self.vertices.mean(axis=0)

    def extreme_points(self):
        return [v.copy() for v in self.vertices]

    def random_point(self, rng):
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        for _ in range(100000):
            x = lo + (hi - lo) * rng.random(self.dim)
            if self.contains(x, tol=0.0):
                return x
        return self.center()

    def describe(self):
        return {"kind": "halfspaces", "A": self.A.tolist(), "c": self.c.tolist(), "b": self.b}


def project(body: ConvexBody, x) -> np.ndarray:
    return body.project(as_point(x))


def sample_points(body: ConvexBody, count: int, seed: int,
                  extra: Sequence[np.ndarray] = ()) -> list[np.ndarray]:
    """Deterministic sample of ``count`` members of ``body``.

    The center comes first, then the extreme points, then any caller
    supplied points (kept only if they are members), then uniform draws.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    pts = [body.center()] + body.extreme_points()
    pts += [as_point(p) for p in extra if body.contains(as_point(p))]
    rng = np.random.default_rng(seed)
    while len(pts) < count:
        pts.append(body.random_point(rng))
    return pts[:count]


# ---------------------------------------------------------------------------
# operators


class Operator:
    """A map on points.  Subclasses that are affine expose ``affine()``."""

    kind = "operator"

    def __call__(self, x: Point) -> Point:
        raise NotImplementedError

    def affine(self) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """``(A, c)`` with ``op(x) = A x + c`` when the operator is affine."""
        return None

    def apply_many(self, X: np.ndarray) -> np.ndarray:
        aff = self.affine()
        if aff is not None:
            A, c = aff
            return X @ A.T + c
        return np.array([self(x) for x in X])

    def describe(self) -> dict:
        return {"kind": self.kind}


class IdentityOp(Operator):
    kind = "identity"

    def __init__(self, dim: int):
        self.dim = dim

    def __call__(self, x):
        return x.copy() if isinstance(x, np.ndarray) else x

    def affine(self):
        return np.eye(self.dim), np.zeros(self.dim)


class ConstantOp(Operator):
    kind = "constant"

    def __init__(self, c):
        self.c = as_point(c)

    def __call__(self, x):
        return self.c.copy()

    def affine(self):
        d = self.c.size
        return np.zeros((d, d)), self.c.copy()

    def describe(self):
        return {"kind": "constant", "c": self.c.tolist()}


class Rotation(Operator):
    """Rotation by ``angle`` radians about ``about`` in the plane of the first two coordinates."""

    kind = "rotation"

    def __init__(self, angle: float, about, dim: Optional[int] = None):
        self.angle = float(angle)
        self.about = as_point(about)
        self.dim = dim or self.about.size
        if self.dim < 2:
            raise ValueError("rotation needs at least two dimensions")
        R = np.eye(self.dim)
        cs, sn = math.cos(self.angle), math.sin(self.angle)
        # snap so that quarter turns are exact
        cs, sn = (round(cs) if abs(cs - round(cs)) < 1e-15 else cs,
                  round(sn) if abs(sn - round(sn)) < 1e-15 else sn)
        R[:2, :2] = [[cs, -sn], [sn, cs]]
        self.matrix = R

    def __call__(self, x):
        return self.about + self.matrix @ (x - self.about)

    def affine(self):
        return self.matrix.copy(), self.about - self.matrix @ self.about

    def describe(self):
        return {"kind": "rotation", "angle": self.angle, "about": self.about.tolist()}


class Reflection(Operator):
    """Reflection across the hyperplane through ``point`` with unit normal ``normal``."""

    kind = "reflection"

    def __init__(self, normal, point):
        n = as_point(normal)
        self.normal = n / np.linalg.norm(n)
        self.point = as_point(point)

    def __call__(self, x):
        return x - 2 * np.dot(x - self.point, self.normal) * self.normal

    def affine(self):
        n = self.normal
        A = np.eye(n.size) - 2 * np.outer(n, n)
        return A, 2 * np.dot(self.point, n) * n

    def describe(self):
        return {"kind": "reflection", "normal": self.normal.tolist(), "point": self.point.tolist()}


class LineProjection(Operator):
    """Orthogonal projection onto the line ``point + t * direction``."""

    kind = "line-projection"

    def __init__(self, direction, point=None):
        d = as_point(direction)
        self.direction = d / np.linalg.norm(d)
        self.point = np.zeros(d.size) if point is None else as_point(point)

    def __call__(self, x):
        return self.point + np.dot(x - self.point, self.direction) * self.direction

    def affine(self):
        P = np.outer(self.direction, self.direction)
        return P, self.point - P @ self.point

    def describe(self):
        return {"kind": "line-projection", "direction": self.direction.tolist(),
                "point": self.point.tolist()}


class MetricProjection(Operator):
    kind = "projection"

    def __init__(self, body: ConvexBody):
        self.body = body

    def __call__(self, x):
        return self.body.project(x)

    def describe(self):
        return {"kind": "projection", "body": self.body.describe()}


class PointNegation(Operator):
    """``x -> 2 c - x``."""

    kind = "negation"

    def __init__(self, center):
        self.center = as_point(center)

    def __call__(self, x):
        return 2 * self.center - x

    def affine(self):
        d = self.center.size
        return -np.eye(d), 2 * self.center

    def describe(self):
        return {"kind": "negation", "center": self.center.tolist()}


class Composition(Operator):
    """Applies ``ops`` in list order: ``ops[-1](...ops[0](x))``."""

    kind = "composition"

    def __init__(self, ops: Sequence[Operator]):
        if not ops:
            raise ValueError("composition of no operators")
        self.ops = list(ops)

    def __call__(self, x):
        for op in self.ops:
            x = op(x)
        return x

    def affine(self):
        parts = [op.affine() for op in self.ops]
        if any(p is None for p in parts):
            return None
        A, c = parts[0]
        for B, d in parts[1:]:
            A, c = B @ A, B @ c + d
        return A, c

    def describe(self):
        return {"kind": "composition", "ops": [op.describe() for op in self.ops]}


class ConvexCombinationOp(Operator):
    kind = "convex-combination"

    def __init__(self, weights: Sequence[float], ops: Sequence[Operator]):
        w = np.asarray(weights, dtype=float)
        if len(w) != len(ops) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must be nonnegative, sum to 1 and match the operators")
        self.weights, self.ops = w, list(ops)

    def __call__(self, x):
        return sum(w * op(x) for w, op in zip(self.weights, self.ops))

    def affine(self):
        parts = [op.affine() for op in self.ops]
        if any(p is None for p in parts):
            return None
        A = sum(w * p[0] for w, p in zip(self.weights, parts))
        c = sum(w * p[1] for w, p in zip(self.weights, parts))
        return A, c

    def describe(self):
        return {"kind": "convex-combination", "weights": self.weights.tolist(),
                "ops": [op.describe() for op in self.ops]}


class L1Shift(Operator):
    """Right shift ``(x0, x1, ...) -> (0, x0, x1, ...)`` on l1 sequences."""

    kind = "l1-shift"

    def __call__(self, x: SparseL1) -> SparseL1:
        if not isinstance(x, SparseL1):
            raise TypeError("the shift acts on l1 sequences")
        return SparseL1({i + 1: v for i, v in x.entries.items()})


def residual(op: Operator, x: Point):
    """``||op(x) - x||`` in the point's own norm."""
    return distance(op(x), x)


@dataclass(frozen=True)
class OperatorFamily:
    operators: tuple
    tau: Optional[CounterFn] = None

    def __post_init__(self):
        object.__setattr__(self, "operators", tuple(self.operators))
        if not self.operators:
            raise ValueError("operator family is empty")
        if self.tau is not None and not self.tau.monotone:
            raise ValueError("tau must be monotone")

    @property
    def ell(self) -> int:
        return len(self.operators)

    def at(self, n: int) -> Operator:
        """The operator used at step ``n``: ``T_{n mod ell}``."""
        return self.operators[n % self.ell]


# ---------------------------------------------------------------------------
# descriptors


def parse_body(desc: dict) -> ConvexBody:
    kind = desc["kind"]
    b = desc.get("b")
    if kind == "ball":
        return Ball(desc["center"], desc["radius"], b)
    if kind == "box":
        return Box(desc["lo"], desc["hi"], b)
    if kind == "segment":
        return Segment(desc["start"], desc["end"], b)
    if kind in ("halfspaces", "intersection-of-halfspaces"):
        return Polytope(desc["A"], desc["c"], b)
    raise ValueError(f"unknown body kind {kind!r}")


def parse_operator(desc: dict, dim: int, body: Optional[ConvexBody] = None) -> Operator:
    kind = desc["kind"]
    zero = [0.0] * dim
    if kind == "identity":
        return IdentityOp(dim)
    if kind == "constant":
        return ConstantOp(desc["c"])
    if kind == "rotation":
        angle = desc.get("angle")
        if angle is None:
            angle = math.radians(desc["degrees"])
        return Rotation(angle, desc.get("about", zero), dim)
    if kind == "reflection":
        return Reflection(desc["normal"], desc.get("point", zero))
    if kind == "line-projection":
        return LineProjection(desc["direction"], desc.get("point", zero))
    if kind == "projection":
        target = parse_body(desc["body"]) if "body" in desc else body
        if target is None:
            raise ValueError("projection needs a body")
        return MetricProjection(target)
    if kind == "negation":
        return PointNegation(desc.get("center", zero))
    if kind == "composition":
        return Composition([parse_operator(d, dim, body) for d in desc["ops"]])
    if kind == "convex-combination":
        return ConvexCombinationOp(desc["weights"], [parse_operator(d, dim, body) for d in desc["ops"]])
    if kind == "l1-shift":
        return L1Shift()
    raise ValueError(f"unknown operator kind {kind!r}")
