"""CSG solids, line/solid interval intersection and analytic body metrics.

Everything here is vectorised over batches of lines: a batch of ``n`` lines is
a pair of ``(n, 3)`` arrays (origins, unit directions) and the intersection of
the batch with a solid is an :class:`IntervalBatch`, a ragged list of
parameter intervals grouped by line index.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

#: relative intersection tolerance, scaled by the bounding radius of the body
REL_EPS = 1e-9


class GeometryError(ValueError):
    """Malformed solid description."""


class UnsupportedMetrics(GeometryError):
    """No analytic volume/surface is known for a solid and none was supplied."""


class EmptyIntersection(ValueError):
    """A decomposition was requested for a line or ray that misses the body."""


# --------------------------------------------------------------------------
# intervals


@dataclass(frozen=True)
class IntervalSet:
    """Sorted, disjoint parameter intervals of one line inside a body."""

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        for a, b in ivs:
            if not a < b:
                raise ValueError(f"empty interval ({a}, {b})")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if not b0 < a1:
                raise ValueError("intervals must be sorted and disjoint")
        object.__setattr__(self, "intervals", ivs)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __bool__(self):
        return bool(self.intervals)

    @property
    def total_length(self) -> float:
        return math.fsum(b - a for a, b in self.intervals)

    def lengths(self) -> list[float]:
        return [b - a for a, b in self.intervals]


@dataclass
class IntervalBatch:
    """Ragged intervals for a batch of lines.

    ``line`` holds the owning line index of every interval; entries are
    sorted by line and then by ``lo``.
    """

    line: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_lines: int

    @classmethod
    def empty(cls, n_lines: int) -> "IntervalBatch":
        return cls(np.empty(0, np.int64), np.empty(0), np.empty(0), n_lines)

    @classmethod
    def from_sets(cls, sets: Sequence[IntervalSet]) -> "IntervalBatch":
        line, lo, hi = [], [], []
        for i, s in enumerate(sets):
            for a, b in s:
                line.append(i)
                lo.append(a)
                hi.append(b)
        return cls(np.asarray(line, np.int64), np.asarray(lo, float),
                   np.asarray(hi, float), len(sets))

    def __len__(self):
        return self.line.size

    def counts(self) -> np.ndarray:
        """Number of intervals on each line."""
        return np.bincount(self.line, minlength=self.n_lines)

    def offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.counts())))

    def to_set(self, i: int) -> IntervalSet:
        sel = self.line == i
        return IntervalSet(tuple(zip(self.lo[sel].tolist(), self.hi[sel].tolist())))

    def to_sets(self) -> list[IntervalSet]:
        off = self.offsets()
        lo, hi = self.lo.tolist(), self.hi.tolist()
        return [IntervalSet(tuple(zip(lo[off[i]:off[i + 1]], hi[off[i]:off[i + 1]])))
                for i in range(self.n_lines)]

    def take_lines(self, keep: np.ndarray) -> "IntervalBatch":
        """Restrict to the lines flagged in the boolean mask ``keep``, renumbered."""
        new_index = np.cumsum(keep) - 1
        sel = keep[self.line]
        return IntervalBatch(new_index[self.line[sel]], self.lo[sel], self.hi[sel],
                             int(keep.sum()))

    def clip(self, t_min: float | np.ndarray, t_max: float | np.ndarray = np.inf,
             eps: float = 0.0) -> "IntervalBatch":
        """Intersect every line's set with ``[t_min, t_max]`` (per-line bounds allowed)."""
        t_min = np.broadcast_to(np.asarray(t_min, float), (self.n_lines,))[self.line]
        t_max = np.broadcast_to(np.asarray(t_max, float), (self.n_lines,))[self.line]
        lo = np.maximum(self.lo, t_min)
        hi = np.minimum(self.hi, t_max)
        keep = hi - lo > eps
        return IntervalBatch(self.line[keep], lo[keep], hi[keep], self.n_lines)

    def total_lengths(self) -> np.ndarray:
        return np.bincount(self.line, weights=self.hi - self.lo, minlength=self.n_lines)


def _cleanup(b: IntervalBatch, eps: float) -> IntervalBatch:
    """Merge gaps shorter than ``eps`` and drop intervals shorter than ``eps``."""
    if len(b) == 0:
        return b
    new_group = np.ones(len(b), bool)
    new_group[1:] = (b.line[1:] != b.line[:-1]) | (b.lo[1:] - b.hi[:-1] >= eps)
    starts = np.flatnonzero(new_group)
    line = b.line[starts]
    lo = b.lo[starts]
    hi = np.maximum.reduceat(b.hi, starts)
    keep = hi - lo >= eps
    return IntervalBatch(line[keep], lo[keep], hi[keep], b.n_lines)


def _sweep(children: Sequence[IntervalBatch], weights: Sequence[int], inside,
           eps: float) -> IntervalBatch:
    """Combine interval batches by a running signed count of open intervals.

    Each child contributes ``+w`` at interval starts and ``-w`` at ends; a
    point is inside the result when ``inside(count)`` holds.
    """
    n_lines = children[0].n_lines
    line = np.concatenate([np.concatenate([c.line, c.line]) for c in children])
    t = np.concatenate([np.concatenate([c.lo, c.hi]) for c in children])
    delta = np.concatenate([np.concatenate([np.full(len(c), w), np.full(len(c), -w)])
                            for c, w in zip(children, weights)]).astype(np.int64)
    if line.size == 0:
        return IntervalBatch.empty(n_lines)
    order = np.lexsort((t, line))
    line, t, delta = line[order], t[order], delta[order]
    # per-line deltas sum to zero, so a global cumsum restarts at every line
    state = inside(np.cumsum(delta))
    # coincident events act together: keep the state after the last event at each (line, t)
    last = np.ones(t.size, bool)
    last[:-1] = (t[1:] != t[:-1]) | (line[1:] != line[:-1])
    line, t, state = line[last], t[last], state[last]
    prev = np.empty_like(state)
    prev[0] = False
    prev[1:] = state[:-1]
    prev[1:][line[1:] != line[:-1]] = False
    opening = np.flatnonzero(state & ~prev)
    closing = np.flatnonzero(~state & prev)
    out = IntervalBatch(line[opening], t[opening], t[closing], n_lines)
    return _cleanup(out, eps)


def interval_boolean(op: str, a: IntervalSet, b: IntervalSet, eps: float = 0.0) -> IntervalSet:
    """Set union/intersection/difference of two interval sets on one line."""
    ba, bb = IntervalBatch.from_sets([a]), IntervalBatch.from_sets([b])
    return _combine(op, [ba, bb], eps).to_set(0)


def _combine(op: str, parts: Sequence[IntervalBatch], eps: float) -> IntervalBatch:
    if op == "union":
        return _sweep(parts, [1] * len(parts), lambda s: s >= 1, eps)
    if op == "intersection":
        k = len(parts)
        return _sweep(parts, [1] * k, lambda s: s == k, eps)
    if op == "difference":
        if len(parts) != 2:
            raise GeometryError("difference takes exactly two operands")
        return _sweep(parts, [1, -1], lambda s: s == 1, eps)
    raise GeometryError(f"unknown boolean op {op!r}")


# --------------------------------------------------------------------------
# solids


def _as_vec(v, name="vector") -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise GeometryError(f"{name} must be three finite numbers, got {v!r}")
    return a


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec(self.center, "sphere center"))
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise GeometryError("sphere radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    def raw_intervals(self, origins, dirs):
        oc = origins - self.center
        b = np.einsum("ij,ij->i", dirs, oc)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius ** 2
        disc = b * b - c
        hit = disc > 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        # stable roots: q = -b - sign(b) sqrt(disc); t1 = q, t2 = c / q
        q = -b - np.copysign(sq, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            t2 = np.where(hit, c / np.where(q == 0, 1.0, q), 0.0)
        lo = np.minimum(q, t2)
        hi = np.maximum(q, t2)
        idx = np.flatnonzero(hit)
        return IntervalBatch(idx, lo[idx], hi[idx], origins.shape[0])

    def contains(self, p):
        d = p - self.center
        return np.einsum("ij,ij->i", d, d) < self.radius ** 2

    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    def bounding_sphere(self):
        return self.center, self.radius

    def to_json(self):
        return {"sphere": {"center": self.center.tolist(), "radius": self.radius}}


@dataclass(frozen=True, eq=False)
class Box:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo, hi = _as_vec(self.min, "box min"), _as_vec(self.max, "box max")
        if not np.all(lo < hi):
            raise GeometryError("box min must be below max componentwise")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def raw_intervals(self, origins, dirs):
        n = origins.shape[0]
        t_near = np.full(n, -np.inf)
        t_far = np.full(n, np.inf)
        for ax in range(3):
            o, d = origins[:, ax], dirs[:, ax]
            par = d == 0
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (self.min[ax] - o) / d
                t2 = (self.max[ax] - o) / d
            a = np.where(par, -np.inf, np.minimum(t1, t2))
            b = np.where(par, np.inf, np.maximum(t1, t2))
            outside = par & ((o <= self.min[ax]) | (o >= self.max[ax]))
            a = np.where(outside, np.inf, a)
            t_near = np.maximum(t_near, a)
            t_far = np.minimum(t_far, b)
        idx = np.flatnonzero(t_near < t_far)
        return IntervalBatch(idx, t_near[idx], t_far[idx], n)

    def contains(self, p):
        return np.all((p > self.min) & (p < self.max), axis=1)

    def bbox(self):
        return self.min.copy(), self.max.copy()

    def bounding_sphere(self):
        c = 0.5 * (self.min + self.max)
        return c, float(np.linalg.norm(self.max - c))

    def to_json(self):
        return {"box": {"min": self.min.tolist(), "max": self.max.tolist()}}


@dataclass(frozen=True, eq=False)
class Union:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise GeometryError("union needs at least one child")

    def contains(self, p):
        return np.any([c.contains(p) for c in self.children], axis=0)

    def bbox(self):
        boxes = [c.bbox() for c in self.children]
        return (np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0))

    def bounding_sphere(self):
        spheres = [c.bounding_sphere() for c in self.children]
        lo, hi = self.bbox()
        center = 0.5 * (lo + hi)
        r = max(float(np.linalg.norm(c - center)) + rad for c, rad in spheres)
        return center, r

    def to_json(self):
        return {"union": [c.to_json() for c in self.children]}


@dataclass(frozen=True, eq=False)
class Intersection:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise GeometryError("intersection needs at least one child")

    def contains(self, p):
        return np.all([c.contains(p) for c in self.children], axis=0)

    def bbox(self):
        boxes = [c.bbox() for c in self.children]
        return (np.max([b[0] for b in boxes], axis=0), np.min([b[1] for b in boxes], axis=0))

    def bounding_sphere(self):
        return min((c.bounding_sphere() for c in self.children), key=lambda s: s[1])

    def to_json(self):
        return {"intersection": [c.to_json() for c in self.children]}


@dataclass(frozen=True, eq=False)
class Difference:
    a: object
    b: object

    @property
    def children(self):
        return (self.a, self.b)

    def contains(self, p):
        return self.a.contains(p) & ~self.b.contains(p)

    def bbox(self):
        return self.a.bbox()

    def bounding_sphere(self):
        return self.a.bounding_sphere()

    def to_json(self):
        return {"difference": [self.a.to_json(), self.b.to_json()]}


_PRIMITIVES = (Sphere, Box)


def intersect_lines(solid, origins, dirs, eps: float) -> IntervalBatch:
    """Intervals of every line of the batch inside ``solid``."""
    origins = np.atleast_2d(np.asarray(origins, float))
    dirs = np.atleast_2d(np.asarray(dirs, float))
    if isinstance(solid, _PRIMITIVES):
        return _cleanup(solid.raw_intervals(origins, dirs), eps)
    parts = [intersect_lines(c, origins, dirs, eps) for c in solid.children]
    if isinstance(solid, Union):
        return _combine("union", parts, eps)
    if isinstance(solid, Intersection):
        return _combine("intersection", parts, eps)
    return _combine("difference", parts, eps)


def solid_from_json(node) -> object:
    """Build a solid from the JSON CSG node format."""
    if not isinstance(node, dict) or len(node) != 1:
        raise GeometryError(f"CSG node must be an object with exactly one key, got {node!r}")
    (kind, arg), = node.items()
    try:
        if kind == "sphere":
            return Sphere(arg["center"], float(arg["radius"]))
        if kind == "box":
            return Box(arg["min"], arg["max"])
        if kind in ("union", "intersection"):
            children = tuple(solid_from_json(c) for c in arg)
            return Union(children) if kind == "union" else Intersection(children)
        if kind == "difference":
            if len(arg) != 2:
                raise GeometryError("difference takes exactly two operands")
            return Difference(solid_from_json(arg[0]), solid_from_json(arg[1]))
    except (KeyError, TypeError) as exc:
        raise GeometryError(f"bad {kind!r} node: missing or malformed field {exc}") from exc
    raise GeometryError(f"unknown CSG node {kind!r}")


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class BodyMetrics:
    volume: float
    surface: float
    hull_surface: float | None
    bounding_center: np.ndarray
    bounding_radius: float
    #: convex, or a convex body with disjoint convex holes strictly inside it
    convex_with_holes: bool = False
    convex: bool = False

    @property
    def mean_chord(self) -> float:
        """Cauchy mean chord 4V/S."""
        return 4.0 * self.volume / self.surface

    @property
    def diameter_bound(self) -> float:
        return 2.0 * self.bounding_radius


@dataclass
class _Analytic:
    volume: float
    surface: float
    hull_surface: float | None
    convex: bool
    #: convex, or a disjoint union of convex pieces (usable as holes)
    pieces_convex: bool
    holed: bool = False


def _separated(a, b) -> bool:
    (ca, ra), (cb, rb) = a.bounding_sphere(), b.bounding_sphere()
    if np.linalg.norm(ca - cb) > ra + rb:
        return True
    (la, ha), (lb, hb) = a.bbox(), b.bbox()
    return bool(np.any(ha < lb) or np.any(hb < la))


def _strictly_inside(inner, outer) -> bool:
    """Conservative test that ``inner`` lies in the interior of convex ``outer``."""
    c, r = inner.bounding_sphere()
    if isinstance(outer, Sphere) and np.linalg.norm(c - outer.center) + r < outer.radius:
        return True
    if isinstance(outer, Box) and np.all(c - r > outer.min) and np.all(c + r < outer.max):
        return True
    lo, hi = inner.bbox()
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])
                        for z in (lo[2], hi[2])])
    return bool(np.all(outer.contains(corners)))


def _analytic(solid) -> _Analytic:
    if isinstance(solid, Sphere):
        v = 4.0 / 3.0 * math.pi * solid.radius ** 3
        s = 4.0 * math.pi * solid.radius ** 2
        return _Analytic(v, s, s, True, True)
    if isinstance(solid, Box):
        e = solid.max - solid.min
        v = float(np.prod(e))
        s = 2.0 * float(e[0] * e[1] + e[1] * e[2] + e[0] * e[2])
        return _Analytic(v, s, s, True, True)
    if isinstance(solid, Union):
        if len(solid.children) == 1:
            return _analytic(solid.children[0])
        parts = [_analytic(c) for c in solid.children]
        kids = solid.children
        for i in range(len(kids)):
            for j in range(i + 1, len(kids)):
                if not _separated(kids[i], kids[j]):
                    raise UnsupportedMetrics("union of overlapping solids has no analytic metrics")
        return _Analytic(math.fsum(p.volume for p in parts), math.fsum(p.surface for p in parts),
                         None, False, all(p.convex for p in parts))
    if isinstance(solid, Difference):
        a = _analytic(solid.a)
        b = _analytic(solid.b)
        if not a.convex or not _strictly_inside(solid.b, solid.a):
            raise UnsupportedMetrics("difference is analytic only for a hole strictly inside "
                                     "a convex solid")
        return _Analytic(a.volume - b.volume, a.surface + b.surface, a.hull_surface,
                         False, False, holed=b.pieces_convex)
    if isinstance(solid, Intersection) and len(solid.children) == 1:
        return _analytic(solid.children[0])
    raise UnsupportedMetrics(f"no analytic metrics for {type(solid).__name__}")


def is_convex(solid) -> bool:
    """True for solids known to be convex (primitives and their intersections)."""
    if isinstance(solid, _PRIMITIVES):
        return True
    if isinstance(solid, Intersection):
        return all(is_convex(c) for c in solid.children)
    if isinstance(solid, Union) and len(solid.children) == 1:
        return is_convex(solid.children[0])
    return False


def metrics(solid, override: dict | None = None) -> BodyMetrics:
    """Analytic V, S, S* and bounding sphere; ``override`` supplies missing values."""
    center, radius = solid.bounding_sphere()
    override = override or {}
    try:
        a = _analytic(solid)
    except UnsupportedMetrics:
        if "volume" not in override or "surface" not in override:
            raise
        a = _Analytic(float("nan"), float("nan"), None, is_convex(solid), False)
    volume = float(override.get("volume", a.volume))
    surface = float(override.get("surface", a.surface))
    hull = override.get("hull_surface", a.hull_surface)
    hull = None if hull is None else float(hull)
    if not (volume > 0 and surface > 0):
        raise GeometryError("volume and surface must be positive")
    convex = is_convex(solid)
    return BodyMetrics(volume, surface, hull, center, float(radius),
                       convex_with_holes=convex or a.holed,
                       convex=convex)


# --------------------------------------------------------------------------
# body = solid + metrics + tolerance


@dataclass(frozen=True, eq=False)
class Body:
    """A solid together with its metrics and intersection tolerance."""

    solid: object
    metrics: BodyMetrics
    name: str = "body"
    eps: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "eps", REL_EPS * self.metrics.bounding_radius)

    @classmethod
    def from_solid(cls, solid, override: dict | None = None, name: str = "body") -> "Body":
        return cls(solid, metrics(solid, override), name)

    def intersect(self, origins, dirs) -> IntervalBatch:
        return intersect_lines(self.solid, origins, dirs, self.eps)

    def intersect_line(self, origin, direction) -> IntervalSet:
        return intersect_line(self.solid, origin, direction, self.eps)

    def contains(self, p) -> np.ndarray:
        return self.solid.contains(np.atleast_2d(np.asarray(p, float)))

    def to_json(self) -> dict:
        m = self.metrics
        return {"solid": self.solid.to_json(),
                "metrics": {"volume": m.volume, "surface": m.surface,
                            "hull_surface": m.hull_surface}}


def intersect_line(solid, origin, direction, eps: float | None = None) -> IntervalSet:
    """All maximal parameter intervals where the line ``origin + t*direction`` is inside."""
    d = np.asarray(direction, float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise GeometryError("line direction must be a unit vector")
    if eps is None:
        eps = REL_EPS * solid.bounding_sphere()[1]
    return intersect_lines(solid, np.asarray(origin, float)[None], d[None], eps).to_set(0)


def contains(solid, p) -> bool:
    return bool(solid.contains(np.asarray(p, float)[None])[0])


def load_body(source: str | Path | dict) -> Body:
    """Load a body from a JSON file path or an already-parsed dict."""
    if isinstance(source, dict):
        doc, name = source, "body"
    else:
        path = Path(source)
        name = path.stem
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise GeometryError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if "solid" not in doc:
        raise GeometryError("body file needs a 'solid' key")
    unknown = set(doc) - {"solid", "metrics", "name"}
    if unknown:
        raise GeometryError(f"unknown body keys: {sorted(unknown)}")
    override = doc.get("metrics") or {}
    bad = set(override) - {"volume", "surface", "hull_surface"}
    if bad:
        raise GeometryError(f"unknown metrics keys: {sorted(bad)}")
    solid = solid_from_json(doc["solid"])
    return Body.from_solid(solid, override, doc.get("name", name))


def estimate_volume_mc(body: Body, rng: np.random.Generator, n: int) -> tuple[float, float]:
    """Hit-or-miss volume estimate over the solid's bounding box."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = body.solid.bbox()
    if np.any(hi <= lo):
        return 0.0, 0.0
    box_volume = float(np.prod(hi - lo))
    hits = 0
    chunk = 1 << 18
    done = 0
    while done < n:
        m = min(chunk, n - done)
        p = lo + (hi - lo) * rng.random((m, 3))
        hits += int(body.solid.contains(p).sum())
        done += m
    f = hits / n
    return box_volume * f, box_volume * math.sqrt(f * (1.0 - f) / n)


def sphere(radius: float = 1.0, center: Iterable[float] = (0, 0, 0)) -> Sphere:
    return Sphere(np.asarray(center, float), radius)


def shell(outer: float = 1.0, inner: float = 0.5, center: Iterable[float] = (0, 0, 0)) -> Difference:
    return Difference(sphere(outer, center), sphere(inner, center))


def box(lo: Iterable[float] = (0, 0, 0), hi: Iterable[float] = (1, 1, 1)) -> Box:
    return Box(np.asarray(lo, float), np.asarray(hi, float))
