"""Command-line front end: reproducible CSV/JSON runs of every estimator and identity check.

Exit codes: 0 success, 1 an identity check failed, 2 usage or configuration error.
JSON floats carry 17 significant digits and CSV floats 9, so repeated runs
with the same seed and stream plan are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dirac import METHODS, TestFunction, cross_check
from .estimators import (CheckRecord, GridTooCoarse, NonConvexUnsupported, agrees,
                         check_randomness_relations, estimate_chords, estimate_distances,
                         estimate_radii, signed_cld_from_gamma)
from .geometry import GeometryError, load_body
from .nonuniform import check_B3, dirac_optical, estimate_mu_tilde, load_field
from .paths import MeanPathRow, WalkConfig, kink_pair_check, mean_path_report
from .sampling import DEFAULT_SEED, DEFAULT_STREAMS, RejectionStall, StreamPlan
from .signedhist import DensityTable, ZeroCharge

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad command-line configuration."""


# --------------------------------------------------------------------------
# output


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with floats written to 17 significant digits; non-finite floats become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (np.generic,)):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _meta(args, extra: dict | None = None) -> dict:
    meta = {"seed": args.seed, "streams": args.streams, "samples": args.samples}
    if getattr(args, "body", None):
        meta["body"] = Path(args.body).name
    meta.update(extra or {})
    return meta


def _plan(args) -> StreamPlan:
    return StreamPlan(args.seed, args.streams, args.workers)


# --------------------------------------------------------------------------
# identity suite


def _ratio_check(name, num, den, ref, note=""):
    (a, ea), (b, eb) = num, den
    r = a / b
    err = abs(r) * math.hypot(ea / a if a else 0.0, eb / b if b else 0.0)
    ok, z = agrees(r, err, ref[0], ref[1])
    return CheckRecord(name, r, err, ref[0], "4 sigma (combined)", ok, z, note)


def identities(body, plan: StreamPlan, n: int, bins: int = 256) -> tuple[dict, bool]:
    """Every applicable identity for one body; returns ``(report, all_passed)``."""
    m = body.metrics
    V, S = m.volume, m.surface
    recs: list[CheckRecord] = []

    ch = estimate_chords(body, plan, n, bins)
    l1 = ch.mom_pm.moment(1)
    l2 = ch.mom_pm.moment(2)
    l4 = ch.mom_pm.moment(4)
    cM = ch.c_M()
    ok, z = agrees(*l1, m.mean_chord)
    recs.append(CheckRecord("mean_chord", *l1, m.mean_chord, "4 sigma", ok, z, "signed chords vs 4V/S"))
    if m.hull_surface is not None:
        ref = S / m.hull_surface
        ok, z = agrees(*cM, ref)
        asserted = m.convex_with_holes
        recs.append(CheckRecord("c_M", *cM, ref, "4 sigma" if asserted else "reported",
                                ok if asserted else None, z, "mean segments per line vs S/S*"))
    else:
        recs.append(CheckRecord("c_M", *cM, math.nan, "reported", None, note="no hull surface"))
    n_lines = ch.n_lines
    recs.append(_ratio_check("mean_ratio_one_chord", ch.mom_O.moment(1), l1, cM))
    recs.append(_ratio_check("second_moment_ratio_one_chord", ch.mom_O.moment(2), l2, cM))
    ell = math.pi * l4[0] / (3 * V)
    ell_err = math.pi * l4[1] / (3 * V)
    ok, z = agrees(ell, ell_err, m.mean_chord)
    recs.append(CheckRecord("ell_N_fourth_moment", ell, ell_err, m.mean_chord, "4 sigma", ok, z,
                            "pi <l^4> / (3V) vs 4V/S"))
    recs.append(CheckRecord("chord_square_sum_exact", ch.max_sq_residual, 0.0, 0.0, "<= 1e-9 relative",
                            ch.max_sq_residual <= 1e-9, note=f"{n_lines} lines"))
    recs.append(CheckRecord("chord_charge_count_exact", ch.max_count_residual, 0.0, 0.0, "== 0",
                            ch.max_count_residual == 0))
    recs.append(CheckRecord("chord_overlap_min", ch.overlap_min(), 0.0, math.nan, "reported", None,
                            "min over bins of mu_1 + mu_plus - mu_minus"))

    ra = estimate_radii(body, plan, n, bins)
    nr = ra.n_rays
    norm = ra.mom_pm.moment(0, nr)
    recs.append(CheckRecord("radii_normalisation", norm[0], norm[1], 1.0, "exact (1e-12)",
                            abs(norm[0] - 1.0) <= 1e-12))
    tab = ra.tables()
    ip = ra.iota_plus.total_charge / nr
    im = ra.iota_minus.total_charge / nr
    ip_err = float(np.sqrt(np.sum(tab["iota_plus"].stderr ** 2))) * tab["iota_plus"].width
    im_err = float(np.sqrt(np.sum(tab["iota_minus"].stderr ** 2))) * tab["iota_minus"].width
    ok, z = agrees(ip, ip_err, im, im_err)
    recs.append(CheckRecord("radii_plus_minus_balance", ip, ip_err, im, "4 sigma", ok, z))
    a, b = ra.mom_pm.moment(1, nr)[0], ra.mom_O.moment(1, nr)[0]
    recs.append(CheckRecord("radii_first_moment", a, 0.0, b, "1e-12 relative",
                            abs(a - b) <= 1e-12 * abs(b)))
    recs.append(CheckRecord("radii_signed_sum_exact", ra.max_sum_residual, 0.0, 0.0, "<= 1e-9 relative",
                            ra.max_sum_residual <= 1e-9))
    recs.append(CheckRecord("radii_overlap_min", ra.overlap_min(), 0.0, math.nan, "reported", None))

    if m.convex:
        recs += check_randomness_relations(body, plan, n, min(bins, 64))

    dirac = {}
    for phi, ref in (("exp:1", None), ("4pi*pow:2", V)):
        cc = cross_check(body, TestFunction.parse(phi), plan, n, bins=bins, reference=ref)
        dirac[phi] = cc.to_json()
        recs.append(CheckRecord(f"dirac_{phi}", float(len(cc.comparisons)), 0.0, math.nan,
                                "pairwise 4 sigma", cc.passed, note="see dirac section"))

    checks = {r.name: r.to_json() for r in recs}
    passed = all(r.passed is not False for r in recs)
    return {"checks": checks, "dirac": dirac, "pass": passed}, passed


# --------------------------------------------------------------------------
# subcommands


def cmd_describe(args) -> int:
    body = load_body(args.body)
    m = body.metrics
    lines = [f"V={m.volume:.5f}", f"S={m.surface:.5f}",
             f"S*={m.hull_surface:.5f}" if m.hull_surface is not None else "S*=unknown",
             f"<l>_Cauchy={m.mean_chord:.5f}",
             f"bounding_center={','.join(f'{x:.5f}' for x in m.bounding_center)}",
             f"bounding_radius={m.bounding_radius:.5f}",
             f"convex={str(m.convex).lower()}",
             f"convex_with_holes={str(m.convex_with_holes).lower()}"]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _table_out(args, table: DensityTable, extra: dict) -> int:
    _emit(table.to_csv(_meta(args, extra)), args.out)
    return EXIT_OK


def cmd_sample_chords(args) -> int:
    body = load_body(args.body)
    est = estimate_chords(body, _plan(args), args.samples, args.bins, args.range)
    return _table_out(args, est.tables()[args.dist], {"distribution": args.dist})


def cmd_sample_radii(args) -> int:
    body = load_body(args.body)
    est = estimate_radii(body, _plan(args), args.samples, args.bins, args.range)
    return _table_out(args, est.tables()[args.dist], {"distribution": args.dist})


def _gamma_as_table(g) -> DensityTable:
    zeros = np.zeros(g.gamma.size, np.int64)
    return DensityTable(g.lo, g.hi, g.gamma, g.stderr, g.counts, g.counts.astype(np.int64), zeros,
                        float(g.n_pairs), 0.0, g.n_pairs)


def cmd_sample_distances(args) -> int:
    body = load_body(args.body)
    est = estimate_distances(body, _plan(args), args.samples, args.bins, args.range)
    if args.dist == "eta":
        return _table_out(args, est.eta.normalize(), {"distribution": "eta"})
    g = est.gamma_table(body.metrics.volume)
    slope, slope_err = g.slope0()
    return _table_out(args, _gamma_as_table(g), {"distribution": "gamma",
                                                 "gamma_slope0": f"{slope:.9g}",
                                                 "gamma_slope0_stderr": f"{slope_err:.9g}"})


def cmd_signed_cld(args) -> int:
    body = load_body(args.body)
    g = estimate_distances(body, _plan(args), args.samples, args.bins, args.range).gamma_table(
        body.metrics.volume)
    slope0 = 1.0 / body.metrics.mean_chord if args.slope0 == "cauchy" else None
    c = signed_cld_from_gamma(g, args.window, slope0)
    zeros = np.zeros(c.density.size, np.int64)
    table = DensityTable(g.lo, g.hi, c.density, c.stderr, g.counts, zeros, zeros, 1.0, 0.0, g.n_pairs)
    return _table_out(args, table, {"distribution": "signed_cld_from_gamma", "window": args.window,
                                    "gamma_slope0_abs": f"{c.slope0:.9g}"})


def cmd_dirac(args) -> int:
    body = load_body(args.body)
    phi = TestFunction.parse(args.phi)
    methods = [s.strip() for s in args.methods.split(",") if s.strip()]
    bad = set(methods) - set(METHODS)
    if bad:
        raise UsageError(f"unknown methods {sorted(bad)}; choose from {','.join(METHODS)}")
    cc = cross_check(body, phi, _plan(args), args.samples, methods, args.bins)
    report = {"meta": _meta(args), **cc.to_json()}
    _emit(dumps(report) + "\n", args.out)
    return EXIT_OK if cc.passed else EXIT_FAIL


def cmd_optical(args) -> int:
    fld = load_field(args.field)
    plan = _plan(args)
    phi = TestFunction.parse(args.phi)
    rep = dirac_optical(fld, phi, plan, args.samples)
    b3 = check_B3(fld, plan, args.samples)
    mt = estimate_mu_tilde(fld, plan, args.samples, args.bins, args.range)
    moments = {f"k{k}": dict(zip(("value", "stderr"), mt.moments.moment(k))) for k in range(5)}
    ok = rep.passed and all(r.passed is not False for r in b3)
    report = {"meta": _meta(args, {"field": Path(args.field).name}), "optical": rep.to_json(),
              "fourth_moment_constant": {r.name: r.to_json() for r in b3},
              "mu_tilde_moments": moments, "pass": ok}
    _emit(dumps(report) + "\n", args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_walk(args) -> int:
    body = load_body(args.body)
    mfps = [float(x) for x in args.mfp.split(",")]
    configs = [WalkConfig(m, body, args.max_steps) for m in mfps]
    rows = mean_path_report(configs, _plan(args), args.samples)
    lines = [MeanPathRow.CSV_HEADER] + [r.to_csv() for r in rows]
    lines += [f"# {k}={v}" for k, v in _meta(args).items()]
    if args.kink:
        k = kink_pair_check(body, _plan(args), args.kink)
        lines.append(f"# kink_instances={k.n}")
        lines.append(f"# kink_max_rel_residual={k.max_rel_residual:.9g}")
        ok = k.passed
    else:
        ok = True
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if ok and all(r.passed for r in rows) else EXIT_FAIL


def cmd_identities(args) -> int:
    body = load_body(args.body)
    report, ok = identities(body, _plan(args), args.samples, args.bins)
    _emit(dumps({"meta": _meta(args), **report}) + "\n", args.out)
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# argument parsing


def _positive_int(minimum: int):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}")
        return v
    return parse


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _range(text):
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    if len(parts) == 2 and parts[0] == 0:
        parts = parts[1:]
    if len(parts) != 1 or not parts[0] > 0:
        raise argparse.ArgumentTypeError("range is HI or 0,HI with HI > 0")
    return parts[0]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="signedchord", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    common.add_argument("--streams", type=_positive_int(1), default=DEFAULT_STREAMS,
                        help="substreams the samples are split over (fixes the results)")
    common.add_argument("--workers", type=_positive_int(1), default=1,
                        help="worker processes (changes run time only)")
    common.add_argument("--samples", type=_positive_int(1), default=100_000)
    common.add_argument("--bins", type=_positive_int(8), default=256)
    common.add_argument("--range", type=_range, default=None, help="histogram upper edge")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, needs="body", **kw):
        sp = sub.add_parser(name, parents=[common], **kw)
        if needs == "body":
            sp.add_argument("--body", required=True, help="body JSON file")
        elif needs == "field":
            sp.add_argument("--field", required=True, help="density-field JSON file")
        sp.set_defaults(func=func)
        return sp

    add("describe", cmd_describe, help="print body metrics")
    sp = add("sample-chords", cmd_sample_chords, help="signed chord distributions (CSV)")
    sp.add_argument("--dist", default="mu_pm",
                    choices=["mu_pm", "mu_1", "mu_plus", "mu_minus", "mu_M", "mu_O"])
    sp = add("sample-radii", cmd_sample_radii, help="signed radii distributions (CSV)")
    sp.add_argument("--dist", default="iota_pm",
                    choices=["iota_pm", "iota_1", "iota_plus", "iota_minus", "iota_O"])
    sp = add("sample-distances", cmd_sample_distances, help="pair distances or gamma (CSV)")
    sp.add_argument("--dist", default="gamma", choices=["eta", "gamma"])
    sp = add("signed-cld", cmd_signed_cld, help="signed chord density from gamma'' (CSV)")
    sp.add_argument("--window", type=_positive_int(3), default=7)
    sp.add_argument("--slope0", choices=["fit", "cauchy"], default="fit",
                    help="|gamma'(0)| from a fit or from S/(4V)")
    sp = add("dirac", cmd_dirac, help="Dirac functional cross-check (JSON)")
    sp.add_argument("--phi", default="exp:1.0")
    sp.add_argument("--methods", default="gamma,radii,chords,pairs")
    sp = add("optical", cmd_optical, needs="field", help="nonuniform identities (JSON)")
    sp.add_argument("--phi", default="exp:1.0")
    sp = add("walk", cmd_walk, help="scattering-walk mean path lengths (CSV)")
    sp.add_argument("--mfp", default="0.25,0.5,1,2,4", help="comma-separated mean free paths")
    sp.add_argument("--max-steps", type=_positive_int(1), default=1_000_000)
    sp.add_argument("--kink", type=_positive_int(0), default=0,
                    help="also check the kink-pairing identity on this many paths")
    add("identities", cmd_identities, help="full identity suite (JSON)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, GeometryError, NonConvexUnsupported, GridTooCoarse, ZeroCharge,
            RejectionStall, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"signedchord {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


run = main


if __name__ == "__main__":
    sys.exit(main())
