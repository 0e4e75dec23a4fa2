"""Piecewise-constant density fields, optical lengths and the nonuniform Dirac analogues.

A field is an ordered list of ``(solid, rho)`` regions inside a convex hull;
later regions override earlier ones where they overlap and the background
density is zero.  Optical lengths are exact interval sums.

Test functions are applied to *optical* distances throughout, so the
nonuniform functional reads ``iint rho rho' phi(O(r, r')) / (4 pi |r - r'|^2)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dirac import TestFunction
from .estimators import CheckRecord, agrees
from .geometry import (Body, Box, Difference, GeometryError, IntervalBatch, Sphere, Union,
                       UnsupportedMetrics, _analytic, intersect_lines, metrics, solid_from_json)
from .sampling import (StreamPlan, fan_out, hitting_mu_lines, sample_interior_points,
                       sample_isotropic_direction, sample_mu_lines, sample_point_pairs)
from .signedhist import MomentAccumulator, SignedHistogram, Tally


class FieldError(GeometryError):
    """Invalid density-field description."""


@dataclass
class DensityField:
    """Painter's-order piecewise-constant density inside a convex hull."""

    regions: list[tuple[object, float]]
    hull: object
    name: str = "field"
    resolved: list[object] = field(init=False, repr=False)
    hull_body: Body = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.hull, (Sphere, Box)):
            raise FieldError("hull must be a sphere or a box")
        for _, rho in self.regions:
            if not (math.isfinite(rho) and rho >= 0):
                raise FieldError("region densities must be finite and >= 0")
        self.hull_body = Body.from_solid(self.hull, name=f"{self.name}-hull")
        for solid, _ in self.regions:
            if not _inside_hull(self.hull, solid):
                raise FieldError("every region must lie inside the hull")
        self.resolved = []
        for i, (solid, _) in enumerate(self.regions):
            later = [s for s, _ in self.regions[i + 1:]]
            if not later:
                self.resolved.append(solid)
            else:
                self.resolved.append(Difference(solid, later[0] if len(later) == 1 else Union(tuple(later))))

    @property
    def rhos(self) -> np.ndarray:
        return np.array([rho for _, rho in self.regions], float)

    @property
    def eps(self) -> float:
        return self.hull_body.eps

    @classmethod
    def from_json(cls, source) -> "DensityField":
        """Load ``{"hull": <solid>, "regions": [{"solid": <solid>, "rho": x}, ...]}``."""
        if isinstance(source, (str, Path)):
            try:
                data = json.loads(Path(source).read_text())
            except json.JSONDecodeError as exc:
                raise FieldError(f"{source}: line {exc.lineno}: {exc.msg}") from None
        else:
            data = source
        if not isinstance(data, dict) or "hull" not in data or "regions" not in data:
            raise FieldError("field file needs keys 'hull' and 'regions'")
        extra = set(data) - {"hull", "regions", "name"}
        if extra:
            raise FieldError(f"unknown field keys {sorted(extra)}")
        regions = []
        for k, reg in enumerate(data["regions"]):
            if not isinstance(reg, dict) or set(reg) != {"solid", "rho"}:
                raise FieldError(f"regions[{k}] needs exactly the keys 'solid' and 'rho'")
            regions.append((solid_from_json(reg["solid"]), float(reg["rho"])))
        return cls(regions, solid_from_json(data["hull"]), data.get("name", "field"))

    @classmethod
    def uniform(cls, solid, rho: float = 1.0, hull=None) -> "DensityField":
        return cls([(solid, rho)], solid if hull is None else hull)

    def to_json(self) -> dict:
        return {"hull": self.hull.to_json(),
                "regions": [{"solid": s.to_json(), "rho": r} for s, r in self.regions]}

    # evaluation ------------------------------------------------------------
    def density_at(self, p) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, float))
        out = np.zeros(len(p))
        for solid, rho in self.regions:
            out = np.where(solid.contains(p), rho, out)
        return out

    def region_intervals(self, origins, dirs) -> list[IntervalBatch]:
        return [intersect_lines(s, origins, dirs, self.eps) for s in self.resolved]

    def optical(self, origins, dirs, t_min=-np.inf, t_max=np.inf) -> np.ndarray:
        """Optical length along each line between the parameters ``t_min`` and ``t_max``."""
        origins = np.atleast_2d(origins)
        out = np.zeros(len(origins))
        for iv, rho in zip(self.region_intervals(origins, dirs), self.rhos):
            if rho == 0:
                continue
            out += rho * iv.clip(t_min, t_max).total_lengths()
        return out


def _inside_hull(hull, solid) -> bool:
    """Sufficient test: the region's bounding sphere or bounding box lies in the hull."""
    tol = 1e-12 * hull.bounding_sphere()[1]
    c, r = solid.bounding_sphere()
    lo, hi = solid.bbox()
    if isinstance(hull, Sphere):
        if np.linalg.norm(c - hull.center) + r <= hull.radius + tol:
            return True
        corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])
                            for z in (lo[2], hi[2])])
        return bool(np.all(np.linalg.norm(corners - hull.center, axis=1) <= hull.radius + tol))
    return bool(np.all(lo >= hull.min - tol) and np.all(hi <= hull.max + tol))


def load_field(source) -> DensityField:
    return DensityField.from_json(source)


def optical_length(fld: DensityField, p, q) -> float:
    """``int rho`` along the straight segment from ``p`` to ``q``."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    d = q - p
    L = float(np.linalg.norm(d))
    if L == 0:
        raise ValueError("p and q must differ")
    return float(fld.optical(p[None], (d / L)[None], 0.0, L)[0])


def optical_lengths(fld: DensityField, p, q) -> np.ndarray:
    """Vectorised :func:`optical_length` over rows of ``p`` and ``q``."""
    d = q - p
    L = np.linalg.norm(d, axis=1)
    if np.any(L == 0):
        raise ValueError("p and q must differ")
    t_max = L
    dirs = d / L[:, None]
    origins = np.atleast_2d(p)
    out = np.zeros(len(p))
    for iv, rho in zip(fld.region_intervals(origins, dirs), fld.rhos):
        if rho:
            out += rho * iv.clip(0.0, t_max).total_lengths()
    return out


# --------------------------------------------------------------------------
# optical chord distribution


@dataclass
class MuTildeEstimate:
    hist: SignedHistogram
    moments: MomentAccumulator
    w_sq: Tally
    n_lines: int = 0
    n_tried: int = 0

    def merge(self, other):
        return MuTildeEstimate(self.hist.merge(other.hist), self.moments.merge(other.moments),
                               self.w_sq.merge(other.w_sq), self.n_lines + other.n_lines,
                               self.n_tried + other.n_tried)


def _mu_tilde_chunk(rng, m, fld: DensityField, edges):
    o, d, _, tried = hitting_mu_lines(rng, fld.hull_body, m)
    w = fld.optical(o, d)
    est = MuTildeEstimate(SignedHistogram(edges), MomentAccumulator(), Tally(), m, tried)
    est.hist.fill(w)
    est.moments.fill(w)
    est.w_sq.fill(w * w)
    return est


def default_optical_range(fld: DensityField) -> float:
    top = float(fld.rhos.max()) if len(fld.regions) else 0.0
    return max(top, 1e-300) * fld.hull_body.metrics.diameter_bound


def estimate_mu_tilde(fld: DensityField, plan: StreamPlan | None = None, n_lines: int = 100_000,
                      bins: int = 256, hi: float | None = None) -> MuTildeEstimate:
    """Optical chord lengths ``W`` of mu-lines through the hull, one event per hitting line."""
    if n_lines < 1:
        raise ValueError("n_lines must be >= 1")
    top = default_optical_range(fld) if hi is None else hi
    edges = np.linspace(0.0, top, bins + 1)
    return fan_out(_mu_tilde_chunk, plan or StreamPlan(), "mu-tilde", n_lines, fld, edges)


# --------------------------------------------------------------------------
# optical radii: G and the nonuniform Dirac identity


@dataclass
class RadiusSums:
    """Per-ray sums ``a = V_hull rho Phi(w)`` and ``b = V_hull rho w``."""

    t: Tally
    n: int = 0

    def merge(self, other):
        return RadiusSums(self.t.merge(other.t), self.n + other.n)


def _radius_chunk(rng, m, fld: DensityField, phi: TestFunction | None):
    hb = fld.hull_body
    p = sample_interior_points(rng, hb, m)
    d = sample_isotropic_direction(rng, m)
    rho = fld.density_at(p)
    w = fld.optical(p, d, 0.0)
    V = hb.metrics.volume
    b = V * rho * w
    a = b if phi is None else V * rho * phi.antiderivative(w)
    return RadiusSums(Tally().fill(a, b), m)


def _mean_and_err(s: RadiusSums, which: str) -> tuple[float, float]:
    t, n = s.t, s.n
    tot, sq = (t.sy, t.syy) if which == "a" else (t.sz, t.szz)
    mean = tot / n
    var = (sq / n - mean * mean) / max(n - 1, 1)
    return float(mean), math.sqrt(max(float(var), 0.0))


def estimate_G(fld: DensityField, plan: StreamPlan | None = None,
               n: int = 100_000) -> tuple[float, float]:
    """``G = iint rho rho' / (4 pi |r - r'|^2)`` via forward optical radii.

    For unit density on a body this is ``V * int gamma`` with ``gamma(0) = 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    s = fan_out(_radius_chunk, plan or StreamPlan(), "optical-radii", n, fld, None)
    return _mean_and_err(s, "b")


@dataclass
class OpticalReport:
    phi: str
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    G: float
    G_stderr: float
    C_mu: float
    C_mu_stderr: float
    z: float
    passed: bool

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "passed"}
        out["pass"] = self.passed
        return out


def dirac_optical(fld: DensityField, phi: TestFunction, plan: StreamPlan | None = None,
                  n: int = 100_000, zmax: float = 4.0) -> OpticalReport:
    """Compare the optical-radii form with ``C_mu * E[Lambda_phi(W)]``, ``C_mu = 2G/<W^2>``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    plan = plan or StreamPlan()
    rs = fan_out(_radius_chunk, plan, "optical-radii", n, fld, phi)
    lines = fan_out(_lambda_chunk, plan, "mu-tilde", n, fld, phi)
    t = rs.t
    N = rs.n
    lhs, lhs_err = _mean_and_err(rs, "a")
    G, G_err = _mean_and_err(rs, "b")
    if lines.sz == 0:
        raise ValueError("all optical chords vanish; C_mu is undefined")
    R, R_err = lines.ratio()                       # E[Lambda_phi(W)] / E[W^2]
    wsq, wsq_err = _plain_mean(lines.n, lines.sz, lines.szz)
    C = 2.0 * G / wsq
    C_err = 2.0 * math.hypot(G_err / wsq, G * wsq_err / wsq ** 2)
    rhs = 2.0 * G * R
    rhs_err = 2.0 * math.hypot(R * G_err, G * R_err)
    # lhs and G share rays: variance of mean(a - 2 R b) plus the line-sample part
    k = 2.0 * R
    mean_d = (t.sy - k * t.sz) / N
    var_d = ((t.syy - 2 * k * t.syz + k * k * t.szz) / N - mean_d * mean_d) / max(N - 1, 1)
    diff_err = math.sqrt(max(float(var_d), 0.0) + (2.0 * G * R_err) ** 2)
    diff = lhs - rhs
    z = 0.0 if diff_err == 0 else diff / diff_err
    passed = abs(diff) <= 1e-12 * max(1.0, abs(lhs)) or abs(z) < zmax
    return OpticalReport(str(phi), lhs, lhs_err, rhs, rhs_err, G, G_err, C, C_err, z, passed)


def _lambda_chunk(rng, m, fld: DensityField, phi: TestFunction):
    o, d, _, _ = hitting_mu_lines(rng, fld.hull_body, m)
    w = fld.optical(o, d)
    return Tally().fill(phi.lambda_phi(w), w * w)


# --------------------------------------------------------------------------
# mass, interface jumps and the fourth-moment constant


def field_mass(fld: DensityField) -> float | None:
    """Exact ``sum rho_i V_i`` when no two regions overlap and each volume is analytic."""
    vols = []
    for k, (solid, _) in enumerate(fld.regions):
        try:
            vols.append(_analytic(solid).volume)
        except UnsupportedMetrics:
            return None
    for i in range(len(fld.regions)):
        for j in range(i + 1, len(fld.regions)):
            ci, ri = fld.regions[i][0].bounding_sphere()
            cj, rj = fld.regions[j][0].bounding_sphere()
            if np.linalg.norm(np.asarray(ci) - np.asarray(cj)) < ri + rj:
                return None
    return float(sum(v * rho for v, (_, rho) in zip(vols, fld.regions)))


def _jump_sums(fld: DensityField, origins, dirs) -> np.ndarray:
    """``sum (Delta rho)^2`` over every density discontinuity along each line."""
    n = len(origins)
    ts, lines, deltas = [], [], []
    for iv, rho in zip(fld.region_intervals(origins, dirs), fld.rhos):
        if rho == 0 or len(iv) == 0:
            continue
        ts += [iv.lo, iv.hi]
        lines += [iv.line, iv.line]
        deltas += [np.full(len(iv), rho), np.full(len(iv), -rho)]
    if not ts:
        return np.zeros(n)
    t = np.concatenate(ts)
    line = np.concatenate(lines)
    delta = np.concatenate(deltas)
    order = np.lexsort((t, line))
    t, line, delta = t[order], line[order], delta[order]
    new_group = np.ones(t.size, bool)
    new_group[1:] = (line[1:] != line[:-1]) | (t[1:] - t[:-1] > fld.eps)
    gid = np.cumsum(new_group) - 1
    jump = np.bincount(gid, delta)
    gline = line[new_group]
    return np.bincount(gline, jump * jump, n)


def _jump_chunk(rng, m, fld: DensityField):
    met = fld.hull_body.metrics
    o, d = sample_mu_lines(rng, met.bounding_center, met.bounding_radius, m)
    return Tally().fill(_jump_sums(fld, o, d))


def _pair_chunk(rng, m, fld: DensityField):
    a, b = sample_point_pairs(rng, fld.hull_body, m)
    return Tally().fill(fld.density_at(a) * fld.density_at(b), fld.density_at(a))


def check_B3(fld: DensityField, plan: StreamPlan | None = None, n: int = 100_000) -> list[CheckRecord]:
    """The fourth-moment constant ``3 M^2 / (pi <l^4>)`` of the density's chord measure.

    ``<l^4> = 12 int x^2 gamma / |gamma'(0)|`` with the unnormalised
    ``gamma``: ``int x^2 gamma = V_hull^2 E[rho rho'] / (4 pi)`` from uniform hull
    pairs and ``|gamma'(0)| = (pi R_b^2 / 2) E[sum (Delta rho)^2]`` from the
    density jumps along mu-lines through the hull's bounding sphere.  For unit
    density on a body the constant equals ``S / 4``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    plan = plan or StreamPlan()
    met = fld.hull_body.metrics
    Vh, Rb = met.volume, met.bounding_radius
    pairs = fan_out(_pair_chunk, plan, "b3-pairs", n, fld)
    jumps = fan_out(_jump_chunk, plan, "b3-jumps", n, fld)
    e_rr, e_rr_err = _plain_mean(pairs.n, pairs.sy, pairs.syy)
    M = field_mass(fld)
    if M is None:
        m_mean, m_err = _plain_mean(pairs.n, pairs.sz, pairs.szz)
        M, M_err, m_source = Vh * m_mean, Vh * m_err, "monte-carlo"
    else:
        M_err, m_source = 0.0, "analytic"
    x2g = Vh * Vh * e_rr / (4 * math.pi)
    x2g_err = Vh * Vh * e_rr_err / (4 * math.pi)
    j, j_err = _plain_mean(jumps.n, jumps.sy, jumps.syy)
    slope = 0.5 * math.pi * Rb * Rb * j
    slope_err = 0.5 * math.pi * Rb * Rb * j_err
    records = [CheckRecord("mass", M, M_err, math.nan, "reported", None, note=m_source),
               CheckRecord("gamma_slope0", slope, slope_err, math.nan, "reported", None),
               CheckRecord("int_x2_gamma", x2g, x2g_err, math.nan, "reported", None)]
    if M == 0 or slope == 0 or x2g == 0:
        records.append(CheckRecord("C_mu_fourth_moment", math.nan, math.nan, math.nan,
                                   "degenerate", None, note="zero density"))
        return records
    l4 = 12.0 * x2g / slope
    l4_err = l4 * math.hypot(x2g_err / x2g, slope_err / slope)
    C = 3.0 * M * M / (math.pi * l4)
    C_err = C * math.hypot(2 * M_err / M, l4_err / l4) if M else math.nan
    records.append(CheckRecord("fourth_moment", l4, l4_err, math.nan, "reported", None))
    ref, tol = _uniform_reference(fld)
    if ref is None:
        records.append(CheckRecord("C_mu_fourth_moment", C, C_err, math.nan, "reported", None))
    else:
        ok, z = agrees(C, C_err, ref)
        records.append(CheckRecord("C_mu_fourth_moment", C, C_err, ref, "4 sigma", ok, z,
                                   note="reference S/4 of the unit-density body"))
    return records


def _plain_mean(n, s, ss) -> tuple[float, float]:
    mean = s / n
    var = (ss / n - mean * mean) / max(n - 1, 1)
    return float(mean), math.sqrt(max(float(var), 0.0))


def _uniform_reference(fld: DensityField):
    """``rho^2 S / 4`` when the field is a single analytic region of density ``rho``."""
    if len(fld.regions) != 1:
        return None, None
    solid, rho = fld.regions[0]
    try:
        S = metrics(solid).surface
    except UnsupportedMetrics:
        return None, None
    return rho * rho * S / 4.0, "4 sigma"
