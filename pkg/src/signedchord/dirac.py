"""The Dirac chord functional ``D(phi) = integral gamma(x) phi(x) dx`` by independent routes.

``gamma`` is normalised to ``gamma(0) = 1``.  The routes are

* ``pairs``:  ``V * E[phi(R) / (4 pi R^2)]`` over uniform point pairs;
* ``gamma``:  bin-wise quadrature against the tabulated ``gamma``;
* ``radii``:  ``E[sum_k sign_k Phi(R_k)]`` over interior-radiator rays,
  with ``Phi`` the antiderivative of ``phi``;
* ``chords``: ``ell^-1 * E[sum charge * Lambda_phi(length)] / E[charge]`` over
  mu-lines, with ``Lambda_phi(x) = int_0^x (x - r) phi(r) dr``.

All four agree for convex and nonconvex bodies alike.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .estimators import (GammaTable, decompose_chords, decompose_radii, estimate_distances,
                         nu_ray_intervals, agrees)
from .geometry import Body
from .sampling import StreamPlan, fan_out, hitting_mu_lines, sample_point_pairs
from .signedhist import Tally

METHODS = ("gamma", "radii", "chords", "pairs")


class UnboundedWeight(ValueError):
    """``phi(x) / x**2`` is unbounded near zero, so the pair estimator has infinite variance."""


# --------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """A non-negative test function with closed-form single and double integrals.

    ``kind`` is ``"exp"`` (``exp(-a x)``), ``"pow"`` (``x**p``), ``"ind"``
    (``1[x < l0]``) or ``"table"`` (piecewise linear on ``grid`` starting at
    0, zero beyond the last grid point).  ``scale`` multiplies everything.
    """

    __test__ = False  # not a pytest class

    kind: str
    param: float = 0.0
    scale: float = 1.0
    grid: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    label: str = ""

    def __post_init__(self):
        if self.kind == "exp":
            if not self.param > 0:
                raise ValueError("exp rate must be > 0")
        elif self.kind == "pow":
            if self.param < 0 or self.param != int(self.param):
                raise ValueError("power must be a non-negative integer")
        elif self.kind == "ind":
            if not self.param > 0:
                raise ValueError("indicator cut-off must be > 0")
        elif self.kind == "table":
            g, v = np.asarray(self.grid, float), np.asarray(self.values, float)
            if g.size < 2 or g.size != v.size or g[0] != 0 or np.any(np.diff(g) <= 0):
                raise ValueError("table needs an ascending grid starting at 0 with matching values")
            if np.any(v < 0):
                raise ValueError("table values must be non-negative")
        else:
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("scale must be > 0")

    # construction helpers ------------------------------------------------
    @classmethod
    def exp(cls, alpha: float = 1.0, scale: float = 1.0) -> "TestFunction":
        return cls("exp", float(alpha), scale)

    @classmethod
    def power(cls, p: int, scale: float = 1.0) -> "TestFunction":
        return cls("pow", float(p), scale)

    @classmethod
    def indicator(cls, l0: float, scale: float = 1.0) -> "TestFunction":
        return cls("ind", float(l0), scale)

    @classmethod
    def table(cls, grid, values, scale: float = 1.0) -> "TestFunction":
        return cls("table", 0.0, scale, tuple(map(float, grid)), tuple(map(float, values)))

    @classmethod
    def parse(cls, text: str) -> "TestFunction":
        """Parse ``[factor*]kind:arg``, e.g. ``exp:1.0``, ``pow:2``, ``4pi*pow:2``.

        The factor is a number, ``pi``, or a number followed by ``pi``.
        ``table:<path>`` reads a two-column ``x,phi`` CSV.
        """
        scale = 1.0
        body = text.strip()
        if "*" in body:
            factor, body = body.split("*", 1)
            m = re.fullmatch(r"\s*([0-9.eE+-]*)\s*(pi)?\s*", factor)
            if not m or not (m.group(1) or m.group(2)):
                raise ValueError(f"bad factor {factor!r} in test function {text!r}")
            scale = float(m.group(1)) if m.group(1) else 1.0
            if m.group(2):
                scale *= math.pi
        kind, sep, arg = body.partition(":")
        if not sep:
            raise ValueError(f"test function {text!r} must look like kind:arg")
        kind = kind.strip()
        if kind == "table":
            data = np.loadtxt(arg.strip(), delimiter=",", ndmin=2)
            f = cls.table(data[:, 0], data[:, 1], scale)
        else:
            try:
                value = float(arg)
            except ValueError:
                raise ValueError(f"bad argument {arg!r} in test function {text!r}") from None
            f = cls(kind, value, scale)
        return TestFunction(f.kind, f.param, f.scale, f.grid, f.values, text.strip())

    def __str__(self) -> str:
        if self.label:
            return self.label
        arg = {"exp": self.param, "pow": int(self.param), "ind": self.param}.get(self.kind, "")
        prefix = "" if self.scale == 1 else f"{self.scale!r}*"
        return f"{prefix}{self.kind}:{arg}"

    # evaluation ----------------------------------------------------------
    def _table_parts(self, x):
        g = np.asarray(self.grid)
        v = np.asarray(self.values)
        h = np.diff(g)
        k = np.diff(v) / h
        Phi = np.concatenate(([0.0], np.cumsum(v[:-1] * h + 0.5 * k * h * h)))
        Lam = np.concatenate(([0.0], np.cumsum(Phi[:-1] * h + 0.5 * v[:-1] * h * h
                                                + k * h ** 3 / 6.0)))
        i = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
        s = x - g[i]
        inside = x < g[-1]
        phi = np.where(inside, v[i] + k[i] * s, 0.0)
        Phi_x = np.where(inside, Phi[i] + v[i] * s + 0.5 * k[i] * s * s, Phi[-1])
        Lam_x = np.where(inside, Lam[i] + Phi[i] * s + 0.5 * v[i] * s * s + k[i] * s ** 3 / 6.0,
                         Lam[-1] + Phi[-1] * (x - g[-1]))
        return phi, Phi_x, Lam_x

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.kind == "exp":
            out = np.exp(-self.param * x)
        elif self.kind == "pow":
            out = x ** int(self.param)
        elif self.kind == "ind":
            out = (x < self.param).astype(float)
        else:
            out = self._table_parts(x)[0]
        return self.scale * out

    def antiderivative(self, x):
        """``Phi(x) = int_0^x phi``."""
        x = np.asarray(x, float)
        a = self.param
        if self.kind == "exp":
            out = -np.expm1(-a * x) / a
        elif self.kind == "pow":
            out = x ** (int(a) + 1) / (a + 1)
        elif self.kind == "ind":
            out = np.minimum(x, a)
        else:
            out = self._table_parts(x)[1]
        return self.scale * out

    def lambda_phi(self, x):
        """``Lambda_phi(x) = int_0^x (x - r) phi(r) dr``."""
        x = np.asarray(x, float)
        a = self.param
        if self.kind == "exp":
            ax = a * x
            direct = (ax + np.expm1(-ax)) / (a * a)
            series = x * x * (0.5 - ax / 6.0 + ax * ax / 24.0 - ax ** 3 / 120.0)
            out = np.where(ax < 1e-3, series, direct)
        elif self.kind == "pow":
            out = x ** (int(a) + 2) / ((a + 1) * (a + 2))
        elif self.kind == "ind":
            m = np.minimum(x, a)
            out = m * x - 0.5 * m * m
        else:
            out = self._table_parts(x)[2]
        return self.scale * out

    @property
    def weight_bounded(self) -> bool:
        """Whether ``phi(x) / x**2`` stays bounded as ``x -> 0``."""
        if self.kind == "pow":
            return self.param >= 2
        if self.kind == "table":
            return self.values[0] == 0 and self.values[1] == 0
        return False

    def over_x2(self, x):
        """``phi(x) / x**2``, evaluated without a 0/0 at the origin."""
        x = np.asarray(x, float)
        if self.kind == "pow" and self.param >= 2:
            return self.scale * x ** (int(self.param) - 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, self(x) / (x * x), 0.0)


def lambda_phi(phi: TestFunction, x):
    return phi.lambda_phi(x)


# --------------------------------------------------------------------------
# estimates


@dataclass
class DiracEstimate:
    value: float
    stderr: float
    method: str
    n_samples: int
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"method": self.method, "value": self.value, "stderr": self.stderr,
                "n_samples": self.n_samples, **self.extra}


def _pairs_chunk(rng, m, body: Body, phi: TestFunction):
    a, b = sample_point_pairs(rng, body, m)
    r = np.linalg.norm(b - a, axis=1)
    return Tally().fill(body.metrics.volume * phi.over_x2(r) / (4.0 * math.pi))


def dirac_pairs(body: Body, phi: TestFunction, plan: StreamPlan | None = None,
                n: int = 100_000) -> DiracEstimate:
    """Direct pair estimator; admitted only when ``phi(x)/x**2`` is bounded."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not phi.weight_bounded:
        raise UnboundedWeight(f"phi={phi} gives phi(x)/x^2 unbounded near 0")
    t = fan_out(_pairs_chunk, plan or StreamPlan(), "dirac-pairs", n, body, phi)
    v, e = t.mean()
    return DiracEstimate(v, e, "pairs", n)


def dirac_gamma(table: GammaTable, phi: TestFunction) -> DiracEstimate:
    """Bin-wise quadrature ``sum_i gamma_i * int_bin phi``.

    The error is the multinomial variance of the underlying pair counts with
    each bin's count floored at ``min(1, e)``, where ``e = 1 / weight`` is the
    bin's expected count at ``gamma = 1``, an upper bound since ``gamma <= 1``.
    Bins next to ``x = 0`` carry weights of order ``1 / x**2`` and expect far
    less than one pair; without the floor an empty near bin would hide most
    of the variance.
    """
    w = table.weights
    a = w * (phi.antiderivative(table.hi) - phi.antiderivative(table.lo))
    n = table.n_pairs
    value = float(np.sum(a * table.counts))
    floor = np.minimum(1.0, 1.0 / w)
    var = np.sum(a * a * np.maximum(table.counts, floor)) - value ** 2 / n
    return DiracEstimate(value, math.sqrt(max(var, 0.0)), "gamma", n)


def _radii_chunk(rng, m, body: Body, phi: TestFunction):
    _, _, iv, _ = nu_ray_intervals(rng, body, m)
    rad, signs, _, ray = decompose_radii(iv)
    return Tally().fill(np.bincount(ray, signs * phi.antiderivative(rad), m))


def dirac_radii(body: Body, phi: TestFunction, plan: StreamPlan | None = None,
                n: int = 100_000) -> DiracEstimate:
    """Mean over interior rays of the signed sum of ``Phi`` at the boundary radii."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t = fan_out(_radii_chunk, plan or StreamPlan(), "dirac-radii", n, body, phi)
    v, e = t.mean()
    return DiracEstimate(v, e, "radii", n)


def _chords_chunk(rng, m, body: Body, phi: TestFunction, ell: str):
    _, _, iv, _ = hitting_mu_lines(rng, body, m)
    lengths, q, _, line = decompose_chords(iv)
    y = np.bincount(line, q * phi.lambda_phi(lengths), m)
    z = np.bincount(line, q if ell == "cauchy" else q * lengths ** 4, m)
    return Tally().fill(y, z)


def dirac_chords(body: Body, phi: TestFunction, plan: StreamPlan | None = None,
                 n: int = 100_000, ell: str = "cauchy") -> DiracEstimate:
    """Signed-chord estimator ``ell^-1 * sum(q Lambda_phi) / sum(q)``.

    ``ell="cauchy"`` uses ``ell = 4V/S``; ``ell="fourth_moment"`` uses the
    empirical ``pi <l^4> / (3V)`` from the same lines.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if ell not in ("cauchy", "fourth_moment"):
        raise ValueError("ell must be 'cauchy' or 'fourth_moment'")
    t = fan_out(_chords_chunk, plan or StreamPlan(), "dirac-chords", n, body, phi, ell)
    r, e = t.ratio()
    V = body.metrics.volume
    factor = 1.0 / body.metrics.mean_chord if ell == "cauchy" else 3.0 * V / math.pi
    return DiracEstimate(r * factor, e * factor, "chords", n, {"ell": ell})


# --------------------------------------------------------------------------
# cross-check


@dataclass
class CrossCheck:
    phi: str
    estimates: dict[str, DiracEstimate]
    comparisons: list[dict]
    reference: float | None = None

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.comparisons)

    def to_json(self) -> dict:
        return {"phi": self.phi, "reference": self.reference,
                "estimates": {k: v.to_json() for k, v in self.estimates.items()},
                "comparisons": self.comparisons, "pass": self.passed}


def cross_check(body: Body, phi: TestFunction, plan: StreamPlan | None = None,
                n: int = 100_000, methods=("gamma", "radii", "chords", "pairs"),
                bins: int = 256, reference: float | None = None,
                zmax: float = 4.0) -> CrossCheck:
    """Run the requested routes and compare every pair within ``zmax`` combined sigma.

    ``pairs`` is skipped silently for test functions with unbounded weight.
    With ``reference`` given, each route is also compared to it.
    """
    plan = plan or StreamPlan()
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    est: dict[str, DiracEstimate] = {}
    for m in methods:
        if m == "gamma":
            table = estimate_distances(body, plan, n, bins).gamma_table(body.metrics.volume)
            est[m] = dirac_gamma(table, phi)
        elif m == "radii":
            est[m] = dirac_radii(body, phi, plan, n)
        elif m == "chords":
            est[m] = dirac_chords(body, phi, plan, n)
        elif m == "pairs" and phi.weight_bounded:
            est[m] = dirac_pairs(body, phi, plan, n)
    comps = []
    for a, b in combinations(est, 2):
        ok, z = agrees(est[a].value, est[a].stderr, est[b].value, est[b].stderr, zmax)
        comps.append({"a": a, "b": b, "z": z, "pass": ok})
    if reference is not None:
        for a, e in est.items():
            ok, z = agrees(e.value, e.stderr, reference, zmax=zmax)
            comps.append({"a": a, "b": "reference", "z": z, "pass": ok})
    return CrossCheck(str(phi), est, comps, reference)

