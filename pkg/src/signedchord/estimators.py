"""Signed radii/chord decompositions and the distribution estimators built on them.

A ray from an interior point that leaves and re-enters the body ``n`` times
crosses the surface at ``R_1 < R_2 < ... < R_{2n-1}``; the in-body length is
the alternating sum ``R_1 - R_2 + R_3 - ...``, so every ray contributes ``n``
positive and ``n - 1`` negative radii of unit charge.

A line meeting the body in ``n`` segments with boundaries ``L_0 < ... <
L_{2n-1}`` contributes the ``n`` segments, and for every pair ``j < k`` of
segments the two spans ``[L_2j, L_2k+1]`` and ``[L_2j+1, L_2k]`` with charge
+1 and the two spans ``[L_2j, L_2k]`` and ``[L_2j+1, L_2k+1]`` with charge
-1.  The charge-weighted sum of any ``F(length)`` with ``F'' = phi`` then
equals the double integral of ``phi(x' - x)`` over ordered point pairs of the
line inside the body.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_coeffs

from .geometry import Body, EmptyIntersection, IntervalBatch, IntervalSet
from .sampling import (StreamPlan, concat_batches, fan_out, hitting_mu_lines,
                       sample_interior_points, sample_isotropic_direction, sample_nu_rays,
                       sample_point_pairs)
from .signedhist import (DensityTable, MomentAccumulator, SignedHistogram, Tally)

DEFAULT_BINS = 256

SEGMENT, POSITIVE, NEGATIVE = 0, 1, 2


class NonConvexUnsupported(ValueError):
    """The check is only defined for convex bodies."""


class GridTooCoarse(ValueError):
    """Too few grid points to differentiate twice."""


# --------------------------------------------------------------------------
# single-line decompositions


@dataclass(frozen=True)
class RadiiDecomposition:
    signed_radii: tuple[tuple[float, int], ...]
    first_radius: float
    osd_length: float

    @property
    def signed_sum(self) -> float:
        return math.fsum(r * s for r, s in self.signed_radii)

    @property
    def signed_count(self) -> int:
        return sum(s for _, s in self.signed_radii)


@dataclass(frozen=True)
class ChordDecomposition:
    segments: tuple[float, ...]
    positives: tuple[float, ...]
    negatives: tuple[float, ...]
    n_intervals: int
    ocd_length: float

    @property
    def signed_lengths(self) -> list[tuple[float, int]]:
        return ([(x, 1) for x in self.segments] + [(x, 1) for x in self.positives]
                + [(x, -1) for x in self.negatives])

    @property
    def signed_count(self) -> int:
        return len(self.segments) + len(self.positives) - len(self.negatives)


def radii_decompose(intervals: IntervalSet, eps: float = 1e-12) -> RadiiDecomposition:
    """Boundary radii of a ray whose origin sits at ``t = 0`` inside the body."""
    ivs = [(a, b) for a, b in intervals if b > 0]
    if not ivs or ivs[0][0] > eps:
        raise EmptyIntersection("ray origin is not inside the body")
    radii = [ivs[0][1]]
    for a, b in ivs[1:]:
        radii += [a, b]
    signed = tuple((r, 1 if k % 2 == 0 else -1) for k, r in enumerate(radii))
    osd = math.fsum(b - max(a, 0.0) for a, b in ivs)
    return RadiiDecomposition(signed, radii[0], osd)


def chord_decompose(intervals: IntervalSet) -> ChordDecomposition:
    """Signed segment lengths of one chord (``2n^2 - n`` of them for ``n`` intervals)."""
    if not intervals:
        raise EmptyIntersection("line misses the body")
    t0 = intervals.intervals[0][0]
    L = [x - t0 for ab in intervals for x in ab]
    n = len(intervals)
    segments = tuple(L[2 * k + 1] - L[2 * k] for k in range(n))
    pos, neg = [], []
    for k in range(1, n):
        for j in range(k):
            pos += [L[2 * k] - L[2 * j + 1], L[2 * k + 1] - L[2 * j]]
            neg += [L[2 * k] - L[2 * j], L[2 * k + 1] - L[2 * j + 1]]
    return ChordDecomposition(segments, tuple(pos), tuple(neg), n, math.fsum(segments))


# --------------------------------------------------------------------------
# batch decompositions


def decompose_chords(batch: IntervalBatch):
    """Vectorised :func:`chord_decompose` over every non-empty line of a batch.

    Returns ``(lengths, charges, kind, line)`` arrays, ``kind`` being
    ``SEGMENT``, ``POSITIVE`` or ``NEGATIVE``.
    """
    counts = batch.counts()
    off = batch.offsets()
    out_len, out_q, out_kind, out_line = [], [], [], []
    for n in np.unique(counts[counts > 0]):
        lines = np.flatnonzero(counts == n)
        idx = off[lines][:, None] + np.arange(n)[None, :]
        L = np.empty((lines.size, 2 * n))
        L[:, 0::2] = batch.lo[idx]
        L[:, 1::2] = batch.hi[idx]
        L -= L[:, :1]
        pieces = [(L[:, 2 * k + 1] - L[:, 2 * k], 1, SEGMENT) for k in range(n)]
        for k in range(1, n):
            for j in range(k):
                pieces += [(L[:, 2 * k] - L[:, 2 * j + 1], 1, POSITIVE),
                           (L[:, 2 * k + 1] - L[:, 2 * j], 1, POSITIVE),
                           (L[:, 2 * k] - L[:, 2 * j], -1, NEGATIVE),
                           (L[:, 2 * k + 1] - L[:, 2 * j + 1], -1, NEGATIVE)]
        for length, q, kind in pieces:
            out_len.append(length)
            out_q.append(np.full(lines.size, q, np.int8))
            out_kind.append(np.full(lines.size, kind, np.int8))
            out_line.append(lines)
    if not out_len:
        e = np.empty(0)
        return e, e.astype(np.int8), e.astype(np.int8), e.astype(np.int64)
    lengths = np.concatenate(out_len)
    line = np.concatenate(out_line)
    order = np.argsort(line, kind="stable")
    return (lengths[order], np.concatenate(out_q)[order].astype(float),
            np.concatenate(out_kind)[order], line[order])


def decompose_radii(batch: IntervalBatch):
    """Vectorised :func:`radii_decompose` for rays already clipped to ``t >= 0``.

    Returns ``(radii, signs, k, ray)`` with ``k`` the 1-based crossing index.
    """
    counts = batch.counts()
    off = batch.offsets()
    first = np.zeros(len(batch), bool)
    first[off[:-1][counts > 0]] = True
    # crossing values: hi of every interval, lo of every non-first interval
    rad = np.concatenate([batch.hi, batch.lo[~first]])
    ray = np.concatenate([batch.line, batch.line[~first]])
    pos_in_ray = np.arange(len(batch)) - off[batch.line]
    k_hi = 2 * pos_in_ray + 1
    k_lo = 2 * pos_in_ray[~first]
    k = np.concatenate([k_hi, k_lo])
    order = np.lexsort((k, ray))
    rad, ray, k = rad[order], ray[order], k[order]
    signs = np.where(k % 2 == 1, 1.0, -1.0)
    return rad, signs, k, ray


# --------------------------------------------------------------------------
# result containers


def _merge_fields(a, b, out):
    for name in a.__dataclass_fields__:
        x, y = getattr(a, name), getattr(b, name)
        if hasattr(x, "merge"):
            setattr(out, name, x.merge(y))
        elif name.startswith("max_"):
            setattr(out, name, max(x, y))
        elif name.startswith("min_"):
            setattr(out, name, min(x, y))
        else:
            setattr(out, name, x + y)
    return out


@dataclass
class ChordEstimate:
    """Accumulated chord statistics; ``mu_pm`` is the signed chord distribution."""

    mu_pm: SignedHistogram
    mu_1: SignedHistogram
    mu_plus: SignedHistogram
    mu_minus: SignedHistogram
    mu_O: SignedHistogram
    mom_pm: MomentAccumulator
    mom_M: MomentAccumulator
    mom_O: MomentAccumulator
    n_intervals: Tally
    n_lines: int = 0
    n_tried: int = 0
    max_sq_residual: float = 0.0
    max_count_residual: float = 0.0

    def merge(self, other: "ChordEstimate") -> "ChordEstimate":
        return _merge_fields(self, other, ChordEstimate(*[None] * 9))

    @property
    def total_charge(self) -> float:
        return self.mu_pm.total_charge

    def c_M(self) -> tuple[float, float]:
        """Mean number of segments per hitting line (the integral of mu_1)."""
        return self.n_intervals.mean()

    def tables(self) -> dict[str, DensityTable]:
        n = self.n_lines
        return {
            "mu_pm": self.mu_pm.normalize(),
            "mu_1": self.mu_1.normalize(n),
            "mu_plus": self.mu_plus.normalize(n),
            "mu_minus": self.mu_minus.normalize(n),
            "mu_M": self.mu_1.normalize(),
            "mu_O": self.mu_O.normalize(n),
        }

    def overlap_min(self) -> float:
        t = self.tables()
        return float(np.min(t["mu_1"].density + t["mu_plus"].density - t["mu_minus"].density))


@dataclass
class RadiiEstimate:
    iota_pm: SignedHistogram
    iota_1: SignedHistogram
    iota_plus: SignedHistogram
    iota_minus: SignedHistogram
    iota_O: SignedHistogram
    mom_pm: MomentAccumulator
    mom_O: MomentAccumulator
    n_rays: int = 0
    n_rejected: int = 0
    max_sum_residual: float = 0.0
    max_count_residual: float = 0.0

    def merge(self, other: "RadiiEstimate") -> "RadiiEstimate":
        return _merge_fields(self, other, RadiiEstimate(*[None] * 7))

    def tables(self) -> dict[str, DensityTable]:
        n = self.n_rays
        return {name: getattr(self, name).normalize(n)
                for name in ("iota_pm", "iota_1", "iota_plus", "iota_minus", "iota_O")}

    def overlap_min(self) -> float:
        t = self.tables()
        return float(np.min(t["iota_1"].density + t["iota_plus"].density
                            - t["iota_minus"].density))


def _edges(body: Body, bins: int, hi: float | None) -> np.ndarray:
    if bins < 1:
        raise ValueError("need at least one bin")
    top = body.metrics.diameter_bound if hi is None else float(hi)
    return np.linspace(0.0, top, bins + 1)


# --------------------------------------------------------------------------
# chords


def _chord_chunk(rng, m, body: Body, edges):
    _, _, iv, tried = hitting_mu_lines(rng, body, m)
    lengths, q, kind, line = decompose_chords(iv)
    counts = iv.counts()
    ocd = iv.total_lengths()
    est = ChordEstimate(*(SignedHistogram(edges) for _ in range(5)),
                        MomentAccumulator(), MomentAccumulator(), MomentAccumulator(), Tally())
    est.mu_pm.fill(lengths, q, line, m)
    seg = kind == SEGMENT
    pos = kind == POSITIVE
    neg = kind == NEGATIVE
    est.mu_1.fill(lengths[seg], None, line[seg], m)
    est.mu_plus.fill(lengths[pos], None, line[pos], m)
    est.mu_minus.fill(lengths[neg], None, line[neg], m)
    est.mu_O.fill(ocd)
    est.mom_pm.fill(lengths, q, line, m)
    est.mom_M.fill(lengths[seg], None, line[seg], m)
    est.mom_O.fill(ocd)
    est.n_intervals.fill(counts)
    est.n_lines = m
    est.n_tried = tried
    sq = np.bincount(line, q * lengths ** 2, m)
    est.max_sq_residual = float(np.max(np.abs(sq - ocd ** 2) / ocd ** 2)) if m else 0.0
    net = np.bincount(line, q, m)
    est.max_count_residual = float(np.max(np.abs(net - counts))) if m else 0.0
    return est


def estimate_chords(body: Body, plan: StreamPlan | None = None, n_lines: int = 100_000,
                    bins: int = DEFAULT_BINS, hi: float | None = None) -> ChordEstimate:
    """Signed, multi-chord and one-chord distributions from ``n_lines`` hitting mu-lines."""
    if n_lines < 1:
        raise ValueError("n_lines must be >= 1")
    plan = plan or StreamPlan()
    return fan_out(_chord_chunk, plan, "chords", n_lines, body, _edges(body, bins, hi))


# --------------------------------------------------------------------------
# radii


def nu_ray_intervals(rng, body: Body, m: int):
    """``m`` nu-rays with their in-body intervals clipped to ``t >= 0``.

    Rays whose origin lands within the intersection tolerance of the surface
    are redrawn.  Returns ``(origins, dirs, intervals, n_rejected)``.
    """
    origins, dirs, parts = [], [], []
    got = rejected = 0
    while got < m:
        need = m - got
        o, d = sample_nu_rays(rng, body, need)
        iv = body.intersect(o, d).clip(0.0, eps=body.eps)
        counts = iv.counts()
        off = iv.offsets()
        ok = counts > 0
        first_lo = np.full(need, np.inf)
        first_lo[ok] = iv.lo[off[:-1][ok]]
        ok &= first_lo <= body.eps
        rejected += int((~ok).sum())
        iv = iv.take_lines(ok)
        # snap the first crossing to the origin
        starts = iv.offsets()[:-1][iv.counts() > 0]
        iv.lo[starts] = 0.0
        origins.append(o[ok])
        dirs.append(d[ok])
        parts.append(iv)
        got += int(ok.sum())
    return np.concatenate(origins), np.concatenate(dirs), concat_batches(parts), rejected


def _radii_chunk(rng, m, body: Body, edges):
    _, _, iv, rejected = nu_ray_intervals(rng, body, m)
    rad, signs, k, ray = decompose_radii(iv)
    osd = iv.total_lengths()
    est = RadiiEstimate(*(SignedHistogram(edges) for _ in range(5)),
                        MomentAccumulator(), MomentAccumulator())
    est.iota_pm.fill(rad, signs, ray, m)
    one = k == 1
    plus = (k % 2 == 1) & ~one
    minus = k % 2 == 0
    est.iota_1.fill(rad[one], None, ray[one], m)
    est.iota_plus.fill(rad[plus], None, ray[plus], m)
    est.iota_minus.fill(rad[minus], None, ray[minus], m)
    est.iota_O.fill(osd)
    est.mom_pm.fill(rad, signs, ray, m)
    est.mom_O.fill(osd)
    est.n_rays = m
    est.n_rejected = rejected
    sums = np.bincount(ray, signs * rad, m)
    est.max_sum_residual = float(np.max(np.abs(sums - osd) / osd))
    est.max_count_residual = float(np.max(np.abs(np.bincount(ray, signs, m) - 1.0)))
    return est


def estimate_radii(body: Body, plan: StreamPlan | None = None, n_rays: int = 100_000,
                   bins: int = DEFAULT_BINS, hi: float | None = None) -> RadiiEstimate:
    """Signed radii distributions from ``n_rays`` interior-radiator rays."""
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    plan = plan or StreamPlan()
    return fan_out(_radii_chunk, plan, "radii", n_rays, body, _edges(body, bins, hi))


# --------------------------------------------------------------------------
# distances and the autocorrelation function


@dataclass
class GammaTable:
    """Autocorrelation ``gamma`` (normalised to ``gamma(0) = 1``) on uniform bins.

    ``gamma[i]`` is the ``l**2``-weighted mean of gamma over bin ``i``.
    ``counts`` are the raw pair counts, kept for exact multinomial errors.
    """

    lo: np.ndarray
    hi: np.ndarray
    gamma: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    n_pairs: int
    volume: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return float(self.hi[0] - self.lo[0])

    @property
    def weights(self) -> np.ndarray:
        """Factor turning a pair count into a gamma value."""
        return self.volume / (self.n_pairs * 4.0 * math.pi / 3.0 * (self.hi ** 3 - self.lo ** 3))

    def slope0(self, n_fit: int = 5) -> tuple[float, float]:
        """``gamma'(0)`` by a weighted linear fit through ``(0, 1)`` over the first bins."""
        nz = np.flatnonzero(self.counts > 0)[:n_fit]
        if nz.size == 0:
            raise GridTooCoarse("no populated bins near zero")
        x = self.centers[nz]
        w = 1.0 / np.maximum(self.stderr[nz], 1e-300) ** 2
        a = np.sum(w * (self.gamma[nz] - 1.0) * x) / np.sum(w * x * x)
        return float(a), float(1.0 / math.sqrt(np.sum(w * x * x)))


@dataclass
class DistanceEstimate:
    eta: SignedHistogram
    n_pairs: int = 0
    sum_distance: Tally = field(default_factory=Tally)

    def merge(self, other):
        return DistanceEstimate(self.eta.merge(other.eta), self.n_pairs + other.n_pairs,
                                self.sum_distance.merge(other.sum_distance))

    def gamma_table(self, volume: float) -> GammaTable:
        counts = self.eta.charge_per_bin.copy()
        lo, hi = self.eta.edges[:-1], self.eta.edges[1:]
        n = self.n_pairs
        p = counts / n
        shell = 4.0 * math.pi / 3.0 * (hi ** 3 - lo ** 3)
        gamma = volume * p / shell
        stderr = volume * np.sqrt(p * (1 - p) / n) / shell
        return GammaTable(lo.copy(), hi.copy(), gamma, stderr, counts, n, volume)


def _distance_chunk(rng, m, body: Body, edges):
    a, b = sample_point_pairs(rng, body, m)
    r = np.linalg.norm(b - a, axis=1)
    est = DistanceEstimate(SignedHistogram(edges), m)
    est.eta.fill(r)
    est.sum_distance.fill(r)
    return est


def estimate_distances(body: Body, plan: StreamPlan | None = None, n_pairs: int = 100_000,
                       bins: int = DEFAULT_BINS, hi: float | None = None) -> DistanceEstimate:
    """Pair-distance density ``eta``; ``.gamma_table(V)`` converts it to gamma."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    plan = plan or StreamPlan()
    return fan_out(_distance_chunk, plan, "distances", n_pairs, body, _edges(body, bins, hi))


# --------------------------------------------------------------------------
# second derivative of gamma


@dataclass
class CLDTable:
    centers: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    slope0: float
    window: int


def savgol_second_derivative(values: np.ndarray, h: float, window: int) -> np.ndarray:
    """Local-quadratic second derivative; the edges use the nearest full window."""
    if window % 2 == 0 or window < 3:
        raise ValueError("window must be odd and >= 3")
    c = savgol_coeffs(window, 2, deriv=2, delta=h, use="dot")
    half = window // 2
    n = values.size
    out = np.empty(n)
    for i in range(n):
        s = min(max(i - half, 0), n - window)
        if s == i - half:
            out[i] = c @ values[s:s + window]
        else:
            # fit on the shifted window, evaluate the quadratic's curvature
            x = (np.arange(s, s + window) - i) * h
            out[i] = 2.0 * np.polyfit(x, values[s:s + window], 2)[0]
    return out


def _savgol_matrix(n: int, h: float, window: int) -> np.ndarray:
    eye = np.eye(n)
    return np.stack([savgol_second_derivative(eye[:, j], h, window) for j in range(n)], axis=1)


def signed_cld_from_gamma(table: GammaTable, window: int = 7,
                          slope0: float | None = None) -> CLDTable:
    """Signed chord density as ``gamma'' / |gamma'(0)|`` by smoothed differentiation.

    ``slope0`` is ``|gamma'(0)|``; by default it comes from
    :meth:`GammaTable.slope0`.  Errors propagate the per-bin gamma errors
    through the (linear) smoothing operator.
    """
    n = table.gamma.size
    if n < 8:
        raise GridTooCoarse("need at least 8 grid points")
    if window > n:
        raise GridTooCoarse("smoothing window exceeds the grid")
    h = table.width
    if slope0 is None:
        slope0 = abs(table.slope0()[0])
    A = _savgol_matrix(n, h, window)
    d2 = A @ table.gamma
    err = np.sqrt((A ** 2) @ (table.stderr ** 2))
    return CLDTable(table.centers, d2 / slope0, err / slope0, float(slope0), window)


def smoothed_reference(density: np.ndarray, h: float, window: int) -> np.ndarray:
    """Apply the same smoothing to a piecewise-constant density.

    The density is integrated twice exactly to bin centres and passed through
    the local-quadratic second-derivative filter, so the difference to the
    raw density is the smoothing bias of :func:`signed_cld_from_gamma`.
    """
    n = density.size
    # G'' = density, G(0) = G'(0) = 0; exact at bin centres for piecewise-constant density
    first = np.concatenate(([0.0], np.cumsum(density) * h))          # G' at edges
    second = np.concatenate(([0.0], np.cumsum(first[:-1] * h + 0.5 * density * h * h)))
    centers_val = second[:-1] + first[:-1] * (h / 2) + 0.5 * density * (h / 2) ** 2
    return _savgol_matrix(n, h, window) @ centers_val


# --------------------------------------------------------------------------
# randomness relations


@dataclass
class RandomnessEstimate:
    mu: SignedHistogram
    mu_l1: SignedHistogram
    mu_l4: SignedHistogram
    nu: SignedHistogram
    lam: SignedHistogram
    mom_mu: MomentAccumulator

    def merge(self, other):
        return _merge_fields(self, other, RandomnessEstimate(*[None] * 6))


def _chord_through(body: Body, points, dirs):
    iv = body.intersect(points, dirs)
    return iv.total_lengths()


def _randomness_chunk(rng, m, body: Body, edges):
    est = RandomnessEstimate(*(SignedHistogram(edges) for _ in range(5)), MomentAccumulator())
    _, _, iv, _ = hitting_mu_lines(rng, body, m)
    l_mu = iv.total_lengths()
    est.mu.fill(l_mu)
    est.mu_l1.fill(l_mu, l_mu)
    est.mu_l4.fill(l_mu, l_mu ** 4)
    est.mom_mu.fill(l_mu)
    p = sample_interior_points(rng, body, m)
    d = sample_isotropic_direction(rng, m)
    est.nu.fill(_chord_through(body, p, d))
    a, b = sample_point_pairs(rng, body, m)
    u = b - a
    norm = np.linalg.norm(u, axis=1)
    good = norm > 0
    est.lam.fill(_chord_through(body, a[good], u[good] / norm[good, None]))
    return est


@dataclass
class CheckRecord:
    """One identity check: measured value against a reference."""

    name: str
    value: float
    stderr: float
    reference: float
    tolerance: str
    passed: bool | None
    z: float | None = None
    note: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "value": self.value, "stderr": self.stderr,
                "reference": self.reference, "z": self.z, "tolerance": self.tolerance,
                "pass": self.passed, "note": self.note}


def z_score(value, stderr, reference, ref_stderr=0.0) -> float:
    err = math.hypot(stderr, ref_stderr)
    if err == 0:
        return 0.0 if abs(value - reference) <= 1e-12 else math.copysign(math.inf, value - reference)
    return (value - reference) / err


def agrees(value: float, stderr: float, reference: float, ref_stderr: float = 0.0,
           zmax: float = 4.0) -> tuple[bool, float]:
    """``(|z| < zmax, z)``, with differences below 1e-12 absolute counting as exact."""
    z = z_score(value, stderr, reference, ref_stderr)
    return abs(value - reference) <= 1e-12 or abs(z) < zmax, z


def binwise_record(name: str, a: DensityTable, b: DensityTable, min_fraction: float,
                   zmax: float = 4.0, bias=None, poisson_floor: bool = True) -> CheckRecord:
    """Fraction of populated bins where two densities agree within ``zmax`` sigma.

    With ``poisson_floor`` (for ``a`` a plain count histogram) the variance
    of ``a`` is floored at the Poisson variance implied by the reference
    density ``b``, so empty bins of ``a`` are judged against the expected
    count rather than against zero error.
    """
    var_a = a.stderr ** 2
    if poisson_floor:
        var_a = np.maximum(var_a, np.maximum(b.density, 0.0) / (max(a.n_events, 1) * a.width))
    err = np.sqrt(var_a + b.stderr ** 2)
    diff = np.abs(a.density - b.density)
    allowed = zmax * err + (0.0 if bias is None else np.abs(bias))
    used = (err > 0) | (diff > 0)
    ok = diff[used] <= allowed[used]
    frac = float(ok.mean()) if ok.size else 1.0
    return CheckRecord(name, frac, 0.0, min_fraction, f">= {min_fraction:.0%} bins within "
                       f"{zmax:g} sigma" + (" + smoothing bias" if bias is not None else ""),
                       frac >= min_fraction, note=f"{int(ok.sum())}/{ok.size} bins")


def check_randomness_relations(body: Body, plan: StreamPlan | None = None, n: int = 100_000,
                               bins: int = 64) -> list[CheckRecord]:
    """nu-chords are l-weighted and lambda-chords l^4-weighted mu-chords."""
    if not body.metrics.convex:
        raise NonConvexUnsupported("randomness relations are checked for convex bodies only")
    plan = plan or StreamPlan()
    est = fan_out(_randomness_chunk, plan, "randomness", n, body, _edges(body, bins, None))
    V, S = body.metrics.volume, body.metrics.surface
    l4, l4_err = est.mom_mu.moment(4)
    l1, l1_err = est.mom_mu.moment(1)
    ref4 = 12 * V * V / (math.pi * S)
    ref1 = 4 * V / S
    ok4, z4 = agrees(l4, l4_err, ref4)
    ok1, z1 = agrees(l1, l1_err, ref1)
    return [
        binwise_record("nu_reweighting", est.nu.normalize(), est.mu_l1.normalize(), 0.99),
        binwise_record("lambda_reweighting", est.lam.normalize(), est.mu_l4.normalize(), 0.99),
        CheckRecord("mean_chord_mu", l1, l1_err, ref1, "4 sigma", ok1, z1),
        CheckRecord("fourth_moment_mu", l4, l4_err, ref4, "4 sigma", ok4, z4),
    ]
