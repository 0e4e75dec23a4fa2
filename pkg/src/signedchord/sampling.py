"""Seedable substreams and the random line, ray and point measures.

Three ways of throwing lines at a body are provided:

* mu-lines: the invariant (uniform, isotropic) measure on lines, realised as
  an isotropic direction plus a foot point uniform on the disc of the bounding
  sphere orthogonal to it;
* nu-rays: a uniform interior point plus an isotropic direction;
* point pairs: two independent uniform interior points.

Work is split into a fixed plan of substreams so the random numbers consumed
by chunk ``k`` depend only on ``(seed, domain, k)``; the number of worker
processes never changes a result.
"""
from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Sequence

import numpy as np

from .geometry import Body, IntervalBatch

DEFAULT_SEED = 20080917
DEFAULT_STREAMS = 16


class RejectionStall(RuntimeError):
    """Interior-point rejection sampling is accepting almost nothing."""


@dataclass(frozen=True)
class RandomSource:
    """One reproducible substream: ``(seed, domain, stream_id)`` fixes the sequence."""

    seed: int
    stream_id: int = 0
    domain: str = ""

    def generator(self) -> np.random.Generator:
        key = (zlib.crc32(self.domain.encode()), int(self.stream_id))
        ss = np.random.SeedSequence(int(self.seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class StreamPlan:
    """Split ``n`` samples into ``streams`` chunks, one substream each."""

    seed: int = DEFAULT_SEED
    streams: int = DEFAULT_STREAMS
    workers: int = 1

    def chunks(self, n: int) -> list[int]:
        k = max(1, min(self.streams, n)) if n > 0 else 0
        if k == 0:
            return []
        base, extra = divmod(n, k)
        return [base + (i < extra) for i in range(k)]

    def sources(self, domain: str, n: int) -> list[tuple[RandomSource, int]]:
        return [(RandomSource(self.seed, i, domain), m) for i, m in enumerate(self.chunks(n))]


def _call(args):
    func, source, m, extra = args
    return func(source.generator(), m, *extra)


def fan_out(func: Callable, plan: StreamPlan, domain: str, n: int, *args,
            merge: Callable | None = None):
    """Run ``func(rng, m, *args)`` on every chunk of the plan and merge in order.

    ``merge`` defaults to ``a.merge(b)``.  With ``plan.workers > 1`` the chunks
    run in worker processes; the merge order stays the chunk order.
    """
    jobs = [(func, src, m, args) for src, m in plan.sources(domain, n)]
    if not jobs:
        raise ValueError("nothing to sample (n < 1)")
    if plan.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            parts = list(pool.map(_call, jobs))
    else:
        parts = [_call(j) for j in jobs]
    merge = merge or (lambda a, b: a.merge(b))
    return reduce(merge, parts)


# --------------------------------------------------------------------------
# primitive measures


def sample_isotropic_direction(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Unit vectors uniform on the sphere, shape ``(n, 3)`` (or ``(3,)`` if ``n`` is None)."""
    m = 1 if n is None else n
    z = 2.0 * rng.random(m) - 1.0
    phi = 2.0 * math.pi * rng.random(m)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    out = np.column_stack((s * np.cos(phi), s * np.sin(phi), z))
    return out[0] if n is None else out


def orthonormal_frame(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing each row of ``d`` to an orthonormal frame."""
    helper = np.zeros_like(d)
    use_x = np.abs(d[:, 0]) < 0.9
    helper[use_x, 0] = 1.0
    helper[~use_x, 1] = 1.0
    u = np.cross(helper, d)
    u /= np.linalg.norm(u, axis=1)[:, None]
    v = np.cross(d, u)
    return u, v


def sample_mu_lines(rng: np.random.Generator, center, radius: float,
                    n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n`` mu-random lines meeting the sphere ``(center, radius)``.

    Returns ``(origins, directions)``; each origin is the foot point of the
    line in the plane through ``center`` orthogonal to its direction.
    """
    if radius <= 0:
        raise ValueError("bounding radius must be positive")
    d = sample_isotropic_direction(rng, n)
    u, v = orthonormal_frame(d)
    rho = radius * np.sqrt(rng.random(n))
    ang = 2.0 * math.pi * rng.random(n)
    origins = (np.asarray(center, float) + (rho * np.cos(ang))[:, None] * u
               + (rho * np.sin(ang))[:, None] * v)
    return origins, d


def sample_mu_line(rng: np.random.Generator, bounding: tuple) -> tuple[np.ndarray, np.ndarray]:
    o, d = sample_mu_lines(rng, bounding[0], bounding[1], 1)
    return o[0], d[0]


def sample_interior_points(rng: np.random.Generator, body: Body, n: int,
                           window: int = 1_000_000) -> np.ndarray:
    """``n`` points uniform in the body by rejection from its bounding box."""
    lo, hi = body.solid.bbox()
    out = np.empty((n, 3))
    filled = 0
    tried = accepted = 0
    while filled < n:
        need = n - filled
        batch = max(1024, min(1 << 20, int(2 * need)))
        p = lo + (hi - lo) * rng.random((batch, 3))
        p = p[body.solid.contains(p)]
        tried += batch
        accepted += len(p)
        if tried >= window:
            if accepted < 1e-6 * tried:
                raise RejectionStall(f"acceptance {accepted}/{tried} below 1e-6")
            tried = accepted = 0
        take = min(need, len(p))
        out[filled:filled + take] = p[:take]
        filled += take
    return out


def sample_interior_point(rng: np.random.Generator, body: Body) -> np.ndarray:
    return sample_interior_points(rng, body, 1)[0]


def sample_nu_rays(rng: np.random.Generator, body: Body, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Interior-radiator rays: uniform interior origins with isotropic directions."""
    p = sample_interior_points(rng, body, n)
    return p, sample_isotropic_direction(rng, n)


def sample_nu_ray(rng: np.random.Generator, body: Body) -> tuple[np.ndarray, np.ndarray]:
    p, d = sample_nu_rays(rng, body, 1)
    return p[0], d[0]


def sample_point_pairs(rng: np.random.Generator, body: Body, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Two independent uniform interior points per sample."""
    return sample_interior_points(rng, body, n), sample_interior_points(rng, body, n)


def sample_point_pair(rng: np.random.Generator, body: Body) -> tuple[np.ndarray, np.ndarray]:
    a, b = sample_point_pairs(rng, body, 1)
    return a[0], b[0]


def hitting_mu_lines(rng: np.random.Generator, body: Body, n_hits: int,
                     center=None, radius: float | None = None):
    """Draw mu-lines until ``n_hits`` of them meet the body.

    Returns ``(origins, dirs, intervals, n_tried)`` for the hitting lines only;
    ``n_tried`` counts every drawn line up to and including the last hit.
    """
    if center is None:
        center, radius = body.metrics.bounding_center, body.metrics.bounding_radius
    origins, dirs, batches = [], [], []
    got = 0
    tried = 0
    rate = 1.0
    while got < n_hits:
        need = n_hits - got
        m = int(min(1 << 20, max(256, math.ceil(1.1 * need / max(rate, 1e-3)) + 16)))
        o, d = sample_mu_lines(rng, center, radius, m)
        iv = body.intersect(o, d)
        hit = iv.counts() > 0
        hit_idx = np.flatnonzero(hit)
        rate = max(len(hit_idx) / m, 1e-3)
        if len(hit_idx) >= need:
            last = hit_idx[need - 1]
            hit[last + 1:] = False
            tried += int(last) + 1
        else:
            tried += m
        origins.append(o[hit])
        dirs.append(d[hit])
        batches.append(iv.take_lines(hit))
        got += int(hit.sum())
    return (np.concatenate(origins), np.concatenate(dirs), concat_batches(batches), tried)


def concat_batches(batches: Sequence[IntervalBatch]) -> IntervalBatch:
    offset = 0
    line, lo, hi = [], [], []
    for b in batches:
        line.append(b.line + offset)
        lo.append(b.lo)
        hi.append(b.hi)
        offset += b.n_lines
    return IntervalBatch(np.concatenate(line), np.concatenate(lo), np.concatenate(hi), offset)
