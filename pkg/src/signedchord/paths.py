"""Polygonal paths: the kink-pairing length identity and scattering walks.

Walks enter the body at the first crossing of a mu-random line (uniform,
isotropic incidence), fly exponential distances with mean free path
``mfp`` and scatter isotropically until they leave.  In a nonconvex body a
walk crosses exterior gaps in a straight line without scattering; only the
in-body length is accumulated.  The mean in-body length of walks in a convex
body equals the mean chord ``4V/S`` whatever the mean free path.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import NonConvexUnsupported, agrees
from .geometry import Body
from .sampling import StreamPlan, fan_out, hitting_mu_lines, sample_isotropic_direction
from .signedhist import SignedHistogram, Tally

DEFAULT_MAX_STEPS = 1_000_000
TRUNCATION_LIMIT = 1e-3


@dataclass(frozen=True)
class WalkConfig:
    mfp: float
    body: Body
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if not self.mfp > 0:
            raise ValueError("mean free path must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class PathRecord:
    vertices: list[np.ndarray]
    in_body_length: float
    n_scatters: int
    truncated: bool
    legs: list[float] = field(default_factory=list)


def _first_hits(body: Body, pos, dirs):
    """In-body parameter intervals ahead of each position, with the one at ``t = 0`` first."""
    iv = body.intersect(pos, dirs).clip(0.0, eps=body.eps)
    counts = iv.counts()
    off = iv.offsets()
    has = counts > 0
    lo0 = np.full(len(pos), np.inf)
    hi0 = np.zeros(len(pos))
    lo0[has] = iv.lo[off[:-1][has]]
    hi0[has] = iv.hi[off[:-1][has]]
    inside = has & (lo0 <= body.eps)
    # next interval strictly ahead of the current one
    k_next = off[:-1] + inside.astype(np.int64)
    has_next = counts > inside.astype(np.int64)
    nxt = np.full(len(pos), np.inf)
    nxt[has_next] = iv.lo[k_next[has_next]]
    return inside, np.where(inside, hi0, 0.0), nxt


@dataclass
class WalkBatch:
    lengths: np.ndarray
    n_scatters: np.ndarray
    truncated: np.ndarray


def simulate_walks(config: WalkConfig, rng: np.random.Generator, n: int) -> WalkBatch:
    """``n`` independent entering walks, advanced together."""
    body = config.body
    o, d, iv, _ = hitting_mu_lines(rng, body, n)
    pos = o + iv.lo[iv.offsets()[:-1]][:, None] * d
    dirs = d.copy()
    length = np.zeros(n)
    scat = np.zeros(n, np.int64)
    trunc = np.zeros(n, bool)
    active = np.arange(n)
    while active.size:
        inside, s, nxt = _first_hits(body, pos[active], dirs[active])
        f = rng.exponential(config.mfp, active.size)
        hit = inside & (f < s)
        length[active] += np.where(hit, f, s)
        # scattering
        h = active[hit]
        pos[h] += f[hit, None] * dirs[h]
        dirs[h] = sample_isotropic_direction(rng, h.size)
        scat[h] += 1
        over = scat[h] >= config.max_steps
        trunc[h[over]] = True
        # leaving the current segment: jump to the next one or stop
        moving = ~hit & np.isfinite(nxt)
        m = active[moving]
        pos[m] += nxt[moving, None] * dirs[m]
        keep = np.zeros(n, bool)
        keep[h[~over]] = True
        keep[m] = True
        active = np.flatnonzero(keep)
    return WalkBatch(length, scat, trunc)


def simulate_entering_walk(config: WalkConfig, rng: np.random.Generator) -> PathRecord:
    """One walk with its vertices (entry, scattering points, exit)."""
    body = config.body
    o, d, iv, _ = hitting_mu_lines(rng, body, 1)
    pos = o[0] + iv.lo[0] * d[0]
    dirn = d[0].copy()
    vertices = [pos.copy()]
    legs: list[float] = []
    total = 0.0
    n_scat = 0
    leg = 0.0
    while True:
        inside, s, nxt = _first_hits(body, pos[None], dirn[None])
        f = rng.exponential(config.mfp)
        if inside[0] and f < s[0]:
            total += f
            leg += f
            pos = pos + f * dirn
            vertices.append(pos.copy())
            legs.append(leg)
            leg = 0.0
            dirn = sample_isotropic_direction(rng)
            n_scat += 1
            if n_scat >= config.max_steps:
                return PathRecord(vertices, total, n_scat, True, legs)
            continue
        total += s[0]
        leg += s[0]
        if np.isfinite(nxt[0]):
            pos = pos + nxt[0] * dirn
            continue
        vertices.append(pos + s[0] * dirn)
        legs.append(leg)
        return PathRecord(vertices, total, n_scat, False, legs)


# --------------------------------------------------------------------------
# mean path length


@dataclass
class WalkTally:
    lengths: Tally
    hist: SignedHistogram
    n: int = 0
    n_truncated: int = 0
    n_scatters: int = 0

    def merge(self, other):
        return WalkTally(self.lengths.merge(other.lengths), self.hist.merge(other.hist),
                         self.n + other.n, self.n_truncated + other.n_truncated,
                         self.n_scatters + other.n_scatters)


def _walk_chunk(rng, m, config: WalkConfig, edges):
    w = simulate_walks(config, rng, m)
    hist = SignedHistogram(edges)
    hist.fill(w.lengths)
    return WalkTally(Tally().fill(w.lengths), hist, m, int(w.truncated.sum()), int(w.n_scatters.sum()))


def run_walks(config: WalkConfig, plan: StreamPlan | None = None, n: int = 100_000,
              bins: int = 64) -> WalkTally:
    """Fan walks out over the plan's substreams; lengths are histogrammed on [0, diameter]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    edges = np.linspace(0.0, config.body.metrics.diameter_bound, bins + 1)
    domain = f"walk:{config.body.name}:{config.mfp!r}"
    return fan_out(_walk_chunk, plan or StreamPlan(), domain, n, config, edges)


@dataclass
class MeanPathRow:
    body: str
    mfp: float
    n: int
    mean: float
    stderr: float
    reference: float
    z: float
    mean_scatters: float
    truncated_fraction: float
    passed: bool
    flag: str = ""

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "passed"}
        out["pass"] = self.passed
        return out

    CSV_HEADER = "body,mfp,n,mean,stderr,reference,z,mean_scatters,truncated_fraction,pass,flag"

    def to_csv(self) -> str:
        return (f"{self.body},{self.mfp:.9g},{self.n},{self.mean:.9g},{self.stderr:.9g},"
                f"{self.reference:.9g},{self.z:.9g},{self.mean_scatters:.9g},"
                f"{self.truncated_fraction:.9g},{int(self.passed)},{self.flag}")


def mean_path_report(configs: list[WalkConfig], plan: StreamPlan | None = None,
                     n: int = 100_000, zmax: float = 4.0) -> list[MeanPathRow]:
    """Mean in-body walk length per configuration against ``4V/S``."""
    rows = []
    if n < 1:
        return rows
    for cfg in configs:
        t = run_walks(cfg, plan, n)
        mean, err = t.lengths.mean()
        ref = cfg.body.metrics.mean_chord
        ok, z = agrees(mean, err, ref, zmax=zmax)
        frac = t.n_truncated / t.n
        flag = "truncation" if frac > TRUNCATION_LIMIT else ""
        rows.append(MeanPathRow(cfg.body.name, cfg.mfp, t.n, mean, err, ref, z,
                                t.n_scatters / t.n, frac, ok and not flag, flag))
    return rows


# --------------------------------------------------------------------------
# kink pairing


def _exit_distance(body: Body, pos, dirs) -> np.ndarray:
    """Distance from an interior point to the boundary of a convex body along ``dirs``."""
    iv = body.intersect(pos, dirs)
    counts = iv.counts()
    off = iv.offsets()
    out = np.zeros(len(pos))
    has = counts > 0
    out[has] = np.maximum(iv.hi[off[:-1][has]], 0.0)
    return out


def _chord_through(body: Body, p, q) -> np.ndarray:
    u = q - p
    nrm = np.linalg.norm(u, axis=1)
    return body.intersect(p, u / nrm[:, None]).total_lengths()


@dataclass
class KinkReport:
    n: int
    max_rel_residual: float
    n_failed: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.n_failed == 0

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "passed"}
        out["pass"] = self.passed
        return out

    def merge(self, other):
        return KinkReport(self.n + other.n, max(self.max_rel_residual, other.max_rel_residual),
                          self.n_failed + other.n_failed, self.tolerance)


def _kink_chunk(rng, m, body: Body, tol: float, straight: bool):
    o, d, iv, _ = hitting_mu_lines(rng, body, m)
    a_t = iv.lo[iv.offsets()[:-1]]
    c_t = iv.hi[iv.offsets()[:-1]]
    A = o + a_t[:, None] * d
    u = rng.random(m)
    B = A + (u * (c_t - a_t))[:, None] * d
    d2 = d.copy() if straight else sample_isotropic_direction(rng, m)
    C2 = B + _exit_distance(body, B, d2)[:, None] * d2
    F = B + _exit_distance(body, B, d)[:, None] * d
    D = B - _exit_distance(body, B, -d2)[:, None] * d2
    dist = lambda p, q: np.linalg.norm(q - p, axis=1)  # noqa: E731
    lhs = dist(A, B) + dist(B, C2) + dist(F, B) + dist(B, D)
    rhs = _chord_through(body, A, F) + _chord_through(body, C2, D)
    rel = np.abs(lhs - rhs) / rhs
    return KinkReport(m, float(rel.max()), int((rel > tol).sum()), tol)


def kink_pair_check(body: Body, plan: StreamPlan | None = None, n: int = 10_000,
                    tol: float = 1e-9, straight: bool = False) -> KinkReport:
    """Check the kink-pairing length identity on ``n`` sampled one-kink paths.

    A path ``A -> B -> C'`` (``A`` on a mu-chord, ``B`` uniform on it, a fresh
    direction to the exit ``C'``) is paired with its reflection through ``B``,
    extended to the boundary points ``F`` and ``D``.  The two kinked paths
    together are exactly the two straight chords ``AF`` and ``C'D``.
    ``straight=True`` uses a zero kink angle.
    """
    if not body.metrics.convex:
        raise NonConvexUnsupported("kink pairing is defined for convex bodies")
    if n < 1:
        raise ValueError("n must be >= 1")
    return fan_out(_kink_chunk, plan or StreamPlan(), "kink", n, body, tol, straight)
