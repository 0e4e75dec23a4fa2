"""Charge-weighted histograms and moment accumulators for signed distributions.

Samples carry a charge (+1 or -1 for the signed decompositions) and belong to
a *primary event*: the line or ray that produced them.  Samples of one event
are correlated, so second-moment bookkeeping is done per event, which gives
clustered (sandwich) standard errors for every density and moment.

Merging two accumulators sums their fields.  Histogram fields are float
arrays that stay integer-valued for unit charges, and moment sums are kept as
exact rationals, so merges are associative and commutative bit-for-bit.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats


class ZeroCharge(ValueError):
    """Normalisation by a vanishing total charge."""


class EdgeMismatch(ValueError):
    """Histograms with different binnings cannot be merged."""


def _exact(a) -> Fraction:
    """Exact sum of a float array.

    Each value is split as ``(hi * 2**26 + lo) * 2**(e - 52)`` with integer
    ``hi, lo < 2**26``; the integer parts are summed per exponent in int64,
    which cannot overflow below 2**37 terms.
    """
    x = np.asarray(a, float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot sum non-finite values exactly")
    m, e = np.frexp(x)
    mi = np.ldexp(m, 53).astype(np.int64)  # |mi| < 2**53, exact
    hi, lo = np.divmod(mi, 1 << 26)
    if x.size == 0:
        return Fraction(0)
    order = np.argsort(e, kind="stable")
    e, hi, lo = e[order], hi[order], lo[order]
    start = np.flatnonzero(np.r_[True, e[1:] != e[:-1]])
    s_hi = np.add.reduceat(hi, start)
    s_lo = np.add.reduceat(lo, start)
    total = Fraction(0)
    for ek, sh, sl in zip(e[start].tolist(), s_hi.tolist(), s_lo.tolist()):
        total += Fraction((sh << 26) + sl) * Fraction(2) ** (ek - 53)
    return total


def _compact_events(n: int, events) -> tuple[np.ndarray, int]:
    if events is None:
        return np.arange(n), n
    _, inv = np.unique(np.asarray(events), return_inverse=True)
    inv = inv.ravel()
    return inv, int(inv.max()) + 1 if n else 0


class SignedHistogram:
    """Uniform-width histogram of signed samples with an overflow bucket.

    Per bin it stores the net charge, the per-event sum of squared charge and
    the cross term with each event's total charge, plus counts of positive
    and negative samples.  Samples outside ``[edges[0], edges[-1])`` go to the
    overflow bucket, never dropped.
    """

    def __init__(self, edges):
        edges = np.asarray(edges, float)
        if edges.ndim != 1 or edges.size < 2 or not np.all(np.diff(edges) > 0):
            raise ValueError("bin edges must be strictly ascending")
        widths = np.diff(edges)
        if not np.allclose(widths, widths[0], rtol=1e-9, atol=0):
            raise ValueError("only uniform bin widths are supported")
        self.edges = edges
        nb = edges.size - 1
        # slot nb is the overflow bucket
        self._charge = np.zeros(nb + 1)
        self._sq = np.zeros(nb + 1)
        self._cross = np.zeros(nb + 1)
        self._plus = np.zeros(nb + 1, np.int64)
        self._minus = np.zeros(nb + 1, np.int64)
        self.total_sq = 0.0
        self.n_events = 0

    @classmethod
    def uniform(cls, lo: float, hi: float, bins: int) -> "SignedHistogram":
        return cls(np.linspace(lo, hi, bins + 1))

    # views -----------------------------------------------------------------
    @property
    def bins(self) -> int:
        return self.edges.size - 1

    @property
    def width(self) -> float:
        return (self.edges[-1] - self.edges[0]) / self.bins

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def charge_per_bin(self) -> np.ndarray:
        return self._charge[:-1]

    @property
    def sq_charge_per_bin(self) -> np.ndarray:
        return self._sq[:-1]

    @property
    def overflow_charge(self) -> float:
        return float(self._charge[-1])

    @property
    def n_plus(self) -> int:
        return int(self._plus.sum())

    @property
    def n_minus(self) -> int:
        return int(self._minus.sum())

    @property
    def total_charge(self) -> float:
        return float(self._charge.sum())

    # filling ---------------------------------------------------------------
    def _slot(self, lengths):
        idx = np.floor((lengths - self.edges[0]) / self.width).astype(np.int64)
        idx[(idx < 0) | (idx >= self.bins) | (lengths >= self.edges[-1])] = self.bins
        return idx

    def fill(self, lengths, charges=None, events=None, n_events: int | None = None):
        """Add samples; ``events`` labels the primary event of each sample.

        ``n_events`` is the number of primary events this fill represents,
        including events that produced no sample here (defaults to the number
        of distinct labels).
        """
        lengths = np.asarray(lengths, float).ravel()
        if np.any(~np.isfinite(lengths)) or np.any(lengths < 0):
            raise ValueError("lengths must be finite and non-negative")
        q = np.ones_like(lengths) if charges is None else np.asarray(charges, float).ravel()
        ev, n_distinct = _compact_events(lengths.size, events)
        slot = self._slot(lengths)
        nb1 = self.bins + 1
        self._charge += np.bincount(slot, q, nb1)
        self._plus += np.bincount(slot[q > 0], minlength=nb1)
        self._minus += np.bincount(slot[q < 0], minlength=nb1)
        q_event = np.bincount(ev, q, n_distinct)
        key = ev * nb1 + slot
        ukey, inv = np.unique(key, return_inverse=True)
        c = np.bincount(inv.ravel(), q, ukey.size)
        u_slot = ukey % nb1
        u_ev = ukey // nb1
        self._sq += np.bincount(u_slot, c * c, nb1)
        self._cross += np.bincount(u_slot, c * q_event[u_ev], nb1)
        self.total_sq += float(np.dot(q_event, q_event))
        self.n_events += n_distinct if n_events is None else int(n_events)
        return self

    def accumulate(self, length: float, charge: float = 1.0):
        """Add one sample as its own primary event."""
        return self.fill([length], [charge])

    def merge(self, other: "SignedHistogram") -> "SignedHistogram":
        if other.edges.shape != self.edges.shape or not np.array_equal(other.edges, self.edges):
            raise EdgeMismatch("histograms have different bin edges")
        out = SignedHistogram(self.edges)
        for name in ("_charge", "_sq", "_cross", "_plus", "_minus"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.total_sq = self.total_sq + other.total_sq
        out.n_events = self.n_events + other.n_events
        return out

    def copy(self) -> "SignedHistogram":
        return self.merge(SignedHistogram(self.edges))

    # normalisation ---------------------------------------------------------
    def normalize(self, total_charge: float | None = None) -> "DensityTable":
        """Density per unit length.

        With ``total_charge=None`` the histogram's own net charge (overflow
        included) is the normaliser and errors follow the ratio estimator.
        An explicit ``total_charge`` is treated as a fixed constant, such as
        the number of sampled rays.
        """
        h = self.width
        if total_charge is None:
            q = self.total_charge
            if q == 0:
                raise ZeroCharge("total charge is zero")
            r = self._charge / q
            var = (self._sq - 2.0 * r * self._cross + r * r * self.total_sq) / (q * q)
        else:
            q = float(total_charge)
            if q == 0:
                raise ZeroCharge("total charge is zero")
            n = max(self.n_events, 1)
            var = (self._sq - self._charge ** 2 / n) / (q * q)
        var = np.maximum(var, 0.0)
        return DensityTable(
            lo=self.edges[:-1].copy(), hi=self.edges[1:].copy(),
            density=self._charge[:-1] / (q * h), stderr=np.sqrt(var[:-1]) / h,
            charge=self._charge[:-1].copy(), n_plus=self._plus[:-1].copy(),
            n_minus=self._minus[:-1].copy(), total_charge=q,
            overflow_fraction=float(self._charge[-1] / q),
            n_events=self.n_events)


def normalize(hist: SignedHistogram, total_charge: float | None = None) -> "DensityTable":
    return hist.normalize(total_charge)


def merge(a: SignedHistogram, b: SignedHistogram) -> SignedHistogram:
    return a.merge(b)


@dataclass
class DensityTable:
    lo: np.ndarray
    hi: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    charge: np.ndarray
    n_plus: np.ndarray
    n_minus: np.ndarray
    total_charge: float
    overflow_fraction: float
    n_events: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return float(self.hi[0] - self.lo[0])

    def integral(self) -> float:
        return float(self.density.sum() * self.width)

    def to_csv(self, meta: dict | None = None) -> str:
        """CSV with 9 significant digits and trailing ``# key=value`` lines."""
        buf = io.StringIO()
        buf.write("bin_lo,bin_hi,density,stderr,charge,n_plus,n_minus\n")
        for row in zip(self.lo, self.hi, self.density, self.stderr, self.charge,
                       self.n_plus, self.n_minus):
            lo, hi, d, e, c, p, m = row
            buf.write(f"{lo:.9g},{hi:.9g},{d:.9g},{e:.9g},{c:.9g},{int(p)},{int(m)}\n")
        buf.write(f"# total_charge={self.total_charge:.9g}\n")
        buf.write(f"# n_events={self.n_events}\n")
        buf.write(f"# overflow_fraction={self.overflow_fraction:.9g}\n")
        for k, v in (meta or {}).items():
            buf.write(f"# {k}={v}\n")
        return buf.getvalue()


def read_csv(text: str) -> tuple[DensityTable, dict]:
    """Parse the output of :meth:`DensityTable.to_csv`."""
    rows, meta = [], {}
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif line and not line.startswith("bin_lo"):
            rows.append([float(x) for x in line.split(",")])
    a = np.array(rows)
    table = DensityTable(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5].astype(np.int64),
                         a[:, 6].astype(np.int64), float(meta.get("total_charge", "nan")),
                         float(meta.get("overflow_fraction", "nan")),
                         int(meta.get("n_events", "0")))
    return table, meta


# --------------------------------------------------------------------------
# moments and scalar tallies


class MomentAccumulator:
    """Signed power sums ``sum q * l**k`` for ``k = 0..4``, clustered by primary event."""

    K = 5

    def __init__(self):
        zero = [Fraction(0)] * self.K
        self.s = list(zero)    # sum over events of y_k
        self.ss = list(zero)   # sum of y_k**2
        self.sc = list(zero)   # sum of y_k * y_0
        self.n_events = 0
        self.n_plus = 0
        self.n_minus = 0

    def fill(self, lengths, charges=None, events=None, n_events: int | None = None):
        lengths = np.asarray(lengths, float).ravel()
        q = np.ones_like(lengths) if charges is None else np.asarray(charges, float).ravel()
        ev, n_distinct = _compact_events(lengths.size, events)
        y = np.stack([np.bincount(ev, q * lengths ** k, n_distinct) for k in range(self.K)])
        for k in range(self.K):
            self.s[k] += _exact(y[k])
            self.ss[k] += _exact(y[k] * y[k])
            self.sc[k] += _exact(y[k] * y[0])
        self.n_plus += int((q > 0).sum())
        self.n_minus += int((q < 0).sum())
        self.n_events += n_distinct if n_events is None else int(n_events)
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        out = MomentAccumulator()
        out.s = [a + b for a, b in zip(self.s, other.s)]
        out.ss = [a + b for a, b in zip(self.ss, other.ss)]
        out.sc = [a + b for a, b in zip(self.sc, other.sc)]
        out.n_events = self.n_events + other.n_events
        out.n_plus = self.n_plus + other.n_plus
        out.n_minus = self.n_minus + other.n_minus
        return out

    @property
    def total_charge(self) -> float:
        return float(self.s[0])

    def moment(self, k: int, normalizer: float | None = None) -> tuple[float, float]:
        """``<l**k>`` normalised by the total charge (or a fixed ``normalizer``)."""
        if not 0 <= k < self.K:
            raise ValueError("k must be in 0..4")
        if normalizer is None:
            q = self.s[0]
            if q == 0:
                raise ZeroCharge("total charge is zero")
            r = self.s[k] / q
            var = (self.ss[k] - 2 * r * self.sc[k] + r * r * self.ss[0]) / (q * q)
        else:
            q = Fraction(normalizer)
            if q == 0:
                raise ZeroCharge("normalizer is zero")
            r = self.s[k] / q
            n = max(self.n_events, 1)
            var = (self.ss[k] - self.s[k] ** 2 / n) / (q * q)
        return float(r), math.sqrt(max(float(var), 0.0))


def moment(acc: MomentAccumulator, k: int, normalizer: float | None = None):
    return acc.moment(k, normalizer)


class Tally:
    """Mergeable sums for a ratio ``sum(y) / sum(z)`` over iid primary events.

    With ``z`` omitted it is a plain sample mean of ``y``.
    """

    def __init__(self):
        self.n = 0
        self.sy = self.sz = self.syy = self.szz = self.syz = Fraction(0)

    def fill(self, y, z=None):
        y = np.asarray(y, float).ravel()
        z = np.ones_like(y) if z is None else np.asarray(z, float).ravel()
        self.n += y.size
        self.sy += _exact(y)
        self.sz += _exact(z)
        self.syy += _exact(y * y)
        self.szz += _exact(z * z)
        self.syz += _exact(y * z)
        return self

    def merge(self, other: "Tally") -> "Tally":
        out = Tally()
        out.n = self.n + other.n
        for name in ("sy", "sz", "syy", "szz", "syz"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out

    def ratio(self) -> tuple[float, float]:
        if self.sz == 0:
            raise ZeroCharge("denominator is zero")
        r = self.sy / self.sz
        var = (self.syy - 2 * r * self.syz + r * r * self.szz) / (self.sz * self.sz)
        if self.n > 1:
            var *= Fraction(self.n, self.n - 1)
        return float(r), math.sqrt(max(float(var), 0.0))

    mean = ratio


# --------------------------------------------------------------------------
# comparisons


def two_sample_test(a: SignedHistogram, b: SignedHistogram, min_count: int = 20):
    """Chi-square homogeneity test of two unsigned histograms with equal edges.

    Adjacent bins are pooled until each pooled bin holds at least
    ``min_count`` combined samples; overflow is a bin of its own.
    Returns ``(statistic, dof, p_value)``.
    """
    if not np.array_equal(a.edges, b.edges):
        raise EdgeMismatch("histograms have different bin edges")
    ca, cb = a._charge, b._charge
    if np.any(ca < 0) or np.any(cb < 0):
        raise ValueError("two-sample test needs non-negative counts")
    pooled_a, pooled_b = [], []
    acc_a = acc_b = 0.0
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        if acc_a + acc_b >= min_count:
            pooled_a.append(acc_a)
            pooled_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if pooled_a:
            pooled_a[-1] += acc_a
            pooled_b[-1] += acc_b
        else:
            pooled_a.append(acc_a)
            pooled_b.append(acc_b)
    ra, rb = np.array(pooled_a), np.array(pooled_b)
    na, nb = ra.sum(), rb.sum()
    if len(ra) < 2 or na == 0 or nb == 0:
        return 0.0, 0, 1.0
    stat = float(np.sum((math.sqrt(nb / na) * ra - math.sqrt(na / nb) * rb) ** 2 / (ra + rb)))
    dof = len(ra) - 1
    return stat, dof, float(stats.chi2.sf(stat, dof))


def binwise_z(a: DensityTable, b: DensityTable, floor: float = 0.0) -> np.ndarray:
    """Per-bin z-scores of two independent density tables (NaN where both errors vanish)."""
    err = np.sqrt(a.stderr ** 2 + b.stderr ** 2 + floor ** 2)
    diff = a.density - b.density
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, diff / err, np.where(diff == 0, 0.0, np.inf))
    return z
