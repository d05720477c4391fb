"""Command-line interface: portraits, geometry reports, capacities, tuple scans and corpus runs.

Exit codes: 0 success, 2 usage error, 3 precondition refused, 4 internal cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from . import dynamics as dyn
from . import heights_abc as abc
from . import julia_geometry as geo
from .exactnum import ARCH, fmt_rat, fmt_real, parse_rat

EXIT_OK, EXIT_USAGE, EXIT_PRECONDITION, EXIT_CAP = 0, 2, 3, 4

CSV_COLUMNS = [
    "d",
    "c",
    "n_points",
    "max_period",
    "difference_height_max",
    "coprimality_violations",
    "quantization",
    "global_diameter_residual",
    "transformation_residual",
    "top_kind",
    "top_quality",
    "min_triple_gap",
]

CSV_HELP = """\
scan CSV columns, in order:
  d, c                      degree and parameter of z^d + c
  n_points, max_period      size of the rational preperiodic portrait, longest cycle
  difference_height_max     max over pairs of h(p_i - p_j) - (h(c)/d + log 4); expected <= 0
  coprimality_violations    primes shared by two same-period periodic points; expected 0
  quantization              per bad prime p not dividing d: "p:pass" or "p:<violations>"; "n/a" if none apply
  global_diameter_residual  sum over places of log d_v(portrait); expected 0
  transformation_residual   max archimedean |lambda(f(z)) - d lambda(z)| over z in {0, 1/2, c}
  top_kind, top_quality     best h/rad among hexagons, quadrilaterals and abc triples
  min_triple_gap            min over same-period pairs of h(P) - ((d-1)/d h(c) + rad(P))
"""


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class CorpusSpec:
    degrees: tuple[int, ...] = (2,)
    a_max: int = 50
    denominators: tuple[int, ...] = (1, 4, 16)
    exclude: tuple[Fraction, ...] = ()

    def __post_init__(self):
        if not self.degrees or any(d < 2 for d in self.degrees):
            raise UsageError("degrees must be a nonempty list of integers >= 2")
        if self.a_max < 0 or not self.denominators or any(b < 1 for b in self.denominators):
            raise UsageError("need a_max >= 0 and positive denominators")

    def maps(self) -> list[dyn.UnicriticalMap]:
        """Every z^d + a/b with b a d-th power and a/b already in lowest terms."""
        out = []
        skip = set(self.exclude)
        for d in self.degrees:
            seen = set()
            for b in self.denominators:
                if round(b ** (1 / d)) ** d != b:
                    continue
                for a in range(-self.a_max, self.a_max + 1):
                    if math.gcd(a, b) != 1:
                        continue
                    c = Fraction(a, b)
                    if c in seen or c in skip:
                        continue
                    seen.add(c)
                    out.append(dyn.UnicriticalMap(d, c))
        return out


@dataclass(frozen=True)
class RunConfig:
    n_max_escape: int = 12
    epsilon_list: tuple[float, ...] = (0.5,)
    thresholds: tuple[float, float] = abc.DEFAULT_THRESHOLDS
    seed: int = 0
    workers: int = 1
    budget: int = 2000

    def __post_init__(self):
        if self.n_max_escape < 1 or self.workers < 1 or self.budget < 0:
            raise UsageError("caps and worker counts must be >= 1")
        if any(t <= 0 for t in self.thresholds):
            raise UsageError("thresholds must be positive")


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    """Rationals to "a/b", floats to 12 significant digits, recursively."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, Fraction):
        return fmt_rat(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
        return float(fmt_real(obj))
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return str(obj)


def _emit(obj: dict, out) -> None:
    out.write(json.dumps(_clean(obj), indent=2) + "\n")


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return fmt_real(x)
    if isinstance(x, Fraction):
        return fmt_rat(x)
    return str(x)


# ---------------------------------------------------------------------------
# commands


def _map(args) -> dyn.UnicriticalMap:
    try:
        c = parse_rat(args.c)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.d < 2:
        raise UsageError("d must be >= 2")
    return dyn.UnicriticalMap(args.d, c)


def cmd_portrait(args, out) -> int:
    f = _map(args)
    P = dyn.find_preperiodic(f)
    if args.json:
        _emit(P.to_json(), out)
        return EXIT_OK
    out.write(f"{f}: {len(P)} rational preperiodic points\n")
    if P.reason is not None:
        out.write(f"empty: {P.reason}\n")
    for z in P.points:
        out.write(f"  {fmt_rat(z):>12} -> {fmt_rat(P.successor[z]):<12} tail {P.tail(z)}  period {P.period(z)}\n")
    for cyc in P.cycles():
        out.write("cycle: " + " -> ".join(fmt_rat(z) for z in cyc) + "\n")
    return EXIT_OK


def cmd_geometry(args, out) -> int:
    f = _map(args)
    geo.check_prime(f, args.p)
    P = dyn.find_preperiodic(f)
    rep = geo.geometry_report(f, P.points, args.p, eps=args.eps)
    rep = {"schema": 1, "d": f.d, "c": fmt_rat(f.c), "n_points": len(P), **rep}
    if len(P) < 2:
        rep["note"] = "fewer than two rational preperiodic points; diameters undefined"
    if args.json:
        _emit(rep, out)
        return EXIT_OK
    out.write(f"{f} at p = {args.p}: v_p(c) = {rep['vp_c']}, {len(P)} points\n")
    q = rep["quantization"]
    out.write(f"quantization: {q if q == 'pass' else 'violations ' + json.dumps(q)}\n")
    for m, blocks in rep["clusters"].items():
        out.write(f"level {m}: {len(blocks)} clusters\n")
    eq = rep["equid"]
    out.write(f"level-2 counts {eq['counts']}, eps = {eq['eps']}: {'equidistributed' if eq['passes'] else 'not equidistributed'}\n")
    if "note" in rep:
        out.write(rep["note"] + "\n")
    else:
        out.write(f"log d_p(T) / lambda_p(c) = {fmt_real(rep['log_dv_over_lambda'])}\n")
        out.write(f"idealization margin = {fmt_real(rep['idealization_margin'])}\n")
    return EXIT_OK


def _parse_weights(text: str, d: int) -> geo.WeightVector:
    if text == "uniform":
        return geo.WeightVector.uniform(d)
    try:
        ws = tuple(parse_rat(t) for t in text.split(","))
        return geo.WeightVector(d, 2, ws)
    except ValueError as e:
        raise UsageError(f"bad weights: {e}") from None


def _smallest_prime_not_dividing(d: int) -> int:
    p = 2
    while d % p == 0 or any(p % q == 0 for q in range(2, p)):
        p += 1
    return p


def cmd_capacity(args, out) -> int:
    d = args.d
    if d < 2:
        raise UsageError("d must be >= 2")
    vp_c = args.vp_c if args.vp_c is not None else -d
    if vp_c >= 0 or vp_c % d:
        raise UsageError("vp-c must be a negative multiple of d")
    if args.m_max < 2:
        raise UsageError("m-max must be >= 2")
    p = args.prime or _smallest_prime_not_dividing(d)
    f = dyn.UnicriticalMap(d, Fraction(p) ** vp_c)
    k2 = _parse_weights(args.weights, d)
    rows = []
    for m in range(2, args.m_max + 1):
        w = geo.refine_weights(k2, m)
        rows.append({
            "m": m,
            "log_gamma": geo.log_gamma_coefficient(w),
            "energy": geo.energy(geo.TreeMeasure(w, p, f)),
            "increment": geo.telescoping_increment(k2, m),
            "residual": geo.telescoping_check(k2, f, p, m),
        })
    limit = geo.gamma_limit(k2, f, p)
    if args.json:
        _emit({"schema": 1, "d": d, "p": p, "vp_c": vp_c, "unit": "lambda_v(c)",
               "weights": list(k2.weights), "rows": rows, "limit_exponent": limit}, out)
        return EXIT_OK
    out.write(f"d = {d}, p = {p}, v_p(c) = {vp_c}; all values are multiples of lambda_v(c)\n")
    out.write(f"{'m':>3} {'log gamma':>14} {'energy':>14} {'increment':>14} {'residual':>14}\n")
    for r in rows:
        out.write(f"{r['m']:>3} " + " ".join(f"{fmt_rat(r[k]) + '·λ_v(c)':>14}" for k in ("log_gamma", "energy", "increment", "residual")) + "\n")
    out.write(f"limit exponent: {fmt_rat(limit)}·λ_v(c)\n")
    return EXIT_OK


def _scan_output(rep: abc.ScanReport, args, out) -> int:
    if args.json:
        _emit({"schema": 1, **rep.to_json()}, out)
        return EXIT_OK
    out.write(f"{rep.kind}: {rep.evaluated} evaluated of {rep.total}, {rep.degenerate} degenerate ({rep.note})\n")
    for t in rep.top:
        q = t.report
        out.write(f"  quality {fmt_real(q.quality):>14}  h {fmt_real(q.h):>14}  rad {fmt_real(q.rad):>14}  ({', '.join(q.tuple.to_json())})\n")
    return EXIT_OK


def cmd_hexagons(args, out) -> int:
    f = _map(args)
    P = dyn.find_preperiodic(f)
    try:
        if args.kind == "quad":
            zeta = parse_rat(args.zeta) if args.zeta is not None else None
            rep = abc.quadrilateral_scan(P, zeta, args.budget, args.seed, args.thresholds)
        else:
            rep = abc.hexagon_scan(P, args.budget, args.seed, args.thresholds)
    except ValueError as e:
        raise geo.PreconditionError(str(e)) from None
    return _scan_output(rep, args, out)


def cmd_abc_triples(args, out) -> int:
    f = _map(args)
    P = dyn.find_preperiodic(f)
    try:
        rep = abc.triple_scan(P, args.budget, args.seed, args.thresholds)
    except ValueError as e:
        raise geo.PreconditionError(str(e)) from None
    if args.json:
        body = rep.to_json()
        body["min_triple_gap"] = abc.min_triple_gap(P, args.xi)
        _emit({"schema": 1, **body}, out)
        return EXIT_OK
    _scan_output(rep, args, out)
    out.write(f"min triple gap (xi = {args.xi}): {fmt_real(abc.min_triple_gap(P, args.xi))}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# corpus scan


def scan_row(f: dyn.UnicriticalMap, config: RunConfig) -> dict:
    """One CSV row of invariant checks and summary statistics for a single map."""
    P = dyn.find_preperiodic(f)
    row = {k: None for k in CSV_COLUMNS}
    row.update(d=f.d, c=fmt_rat(f.c), n_points=len(P), max_period=P.max_period)
    row["difference_height_max"] = dyn.portrait_difference_height_max(P)
    row["coprimality_violations"] = len(dyn.newton_coprimality_violations(f, P))

    quant = []
    for p in f.bad_places:
        try:
            q = geo.quantization_check(f, P.points, p)
        except geo.PreconditionError:
            continue
        quant.append(f"{p}:pass" if q.passes else f"{p}:{len(q.violations)}")
    row["quantization"] = ";".join(quant) if quant else "n/a"

    if len(P) >= 2:
        row["global_diameter_residual"] = geo.global_diameter_residual(P.points)

    worst = 0.0
    for z in (Fraction(0), Fraction(1, 2), f.c):
        chk = dyn.check_transformation_rule(f, z, ARCH, config.n_max_escape)
        if not chk.cap_too_small:
            worst = max(worst, chk.residual)
    row["transformation_residual"] = worst

    reports = []
    if len(P) >= 5:
        reports.append(abc.hexagon_scan(P, config.budget, config.seed, config.thresholds))
    if len(P) >= 3:
        reports.append(abc.quadrilateral_scan(P, None, config.budget, config.seed, config.thresholds))
    if abc.same_period_pairs(P):
        reports.append(abc.triple_scan(P, config.budget, config.seed, config.thresholds))
        row["min_triple_gap"] = abc.min_triple_gap(P)
    best = None
    for rep in reports:
        q = rep.best_quality
        if q is not None and not math.isnan(q) and (best is None or q > best[1]):
            best = (rep.kind, q)
    if best is not None:
        row["top_kind"], row["top_quality"] = best
    return row


def _scan_row_args(item):
    return scan_row(*item)


def run_scan(corpus: CorpusSpec, config: RunConfig) -> list[dict]:
    maps = corpus.maps()
    items = [(f, config) for f in maps]
    if config.workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            # map() yields in input order regardless of completion order
            return list(ex.map(_scan_row_args, items, chunksize=4))
    return [scan_row(f, config) for f, config in items]


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_cell(r[k]) for k in CSV_COLUMNS])
    return buf.getvalue()


def scan_summary(rows: list[dict]) -> dict:
    def worst(key):
        vals = [r[key] for r in rows if r[key] is not None]
        return max(vals) if vals else None

    return {
        "schema": 1,
        "maps": len(rows),
        "total_points": sum(r["n_points"] for r in rows),
        "max_period": max((r["max_period"] for r in rows), default=0),
        "coprimality_violations": sum(r["coprimality_violations"] for r in rows),
        "quantization_failures": sum(1 for r in rows if r["quantization"] not in ("n/a",) and not all(
            part.endswith(":pass") for part in r["quantization"].split(";"))),
        "difference_height_max": worst("difference_height_max"),
        "global_diameter_residual_max": max((abs(r["global_diameter_residual"]) for r in rows
                                             if r["global_diameter_residual"] is not None), default=None),
        "transformation_residual_max": worst("transformation_residual"),
        "top_quality": worst("top_quality"),
        "min_triple_gap": min((r["min_triple_gap"] for r in rows if r["min_triple_gap"] is not None), default=None),
    }


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_scan(args, out) -> int:
    try:
        exclude = tuple(parse_rat(t) for t in args.exclude.split(",") if t.strip()) if args.exclude else ()
    except ValueError as e:
        raise UsageError(str(e)) from None
    corpus = CorpusSpec(args.degrees, args.a_max, args.denominators, exclude)
    config = RunConfig(args.n_max, args.eps_list, args.thresholds, args.seed, args.workers, args.budget)
    rows = run_scan(corpus, config)
    text = rows_to_csv(rows)
    summary = scan_summary(rows)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(text)
        summary_out = out
    else:
        out.write(text)
        summary_out = sys.stderr
    if args.json:
        _emit(summary, summary_out)
    else:
        summary_out.write(" ".join(f"{k}={_cell(v)}" for k, v in summary.items() if k != "schema") + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PREPERLAB_WORKERS", "1")))
    except ValueError:
        return 1


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    def dflt(v):
        return argparse.SUPPRESS if suppress else v

    p.add_argument("--json", action="store_true", default=dflt(False), help="machine-readable JSON output")
    p.add_argument("--csv", metavar="PATH", default=dflt(None), help="write scan CSV to PATH")
    p.add_argument("--seed", type=int, default=dflt(0), help="sampling seed (default 0)")
    p.add_argument("--workers", type=int, default=dflt(None),
                   help="worker processes for corpus scans (default $PREPERLAB_WORKERS or 1)")
    p.add_argument("--n-max", type=int, default=dflt(12), help="iteration cap for escape rates (default 12)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="preperlab",
        description="Rational preperiodic points of z^d + c and the arithmetic built on them.",
        epilog=CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    def map_args(p):
        p.add_argument("-d", type=int, required=True, help="degree d >= 2")
        p.add_argument("-c", required=True, help='parameter c as "a/b"')

    p = sub.add_parser("portrait", parents=[common], help="rational preperiodic points and their graph")
    map_args(p)
    p.set_defaults(func=cmd_portrait)

    p = sub.add_parser("geometry", parents=[common], help="disk-tree geometry at a bad prime p not dividing d")
    map_args(p)
    p.add_argument("-p", type=int, required=True, help="bad prime")
    p.add_argument("--eps", type=float, default=0.5, help="equidistribution tolerance (default 0.5)")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("capacity", parents=[common], help="tree energies and telescoping residuals")
    p.add_argument("-d", type=int, required=True)
    p.add_argument("--vp-c", type=int, default=None, help="v_p(c), a negative multiple of d (default -d)")
    p.add_argument("--prime", type=int, default=None, help="prime p not dividing d (default: smallest)")
    p.add_argument("--weights", default="uniform", help='d^2 level-2 weights "w1,w2,..." or "uniform"')
    p.add_argument("--m-max", type=int, default=5)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("hexagons", parents=[common], help="rank hexagons (or quadrilaterals) by h/rad")
    map_args(p)
    p.add_argument("--kind", choices=["hexagon", "quad"], default="hexagon")
    p.add_argument("--zeta", default=None, help="root of unity for quadrilaterals: 1 or -1")
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--thresholds", type=_float_list, default=abc.DEFAULT_THRESHOLDS)
    p.set_defaults(func=cmd_hexagons)

    p = sub.add_parser("abc-triples", parents=[common], help="abc triples from same-period periodic points")
    map_args(p)
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--xi", type=float, default=0.0)
    p.add_argument("--thresholds", type=_float_list, default=abc.DEFAULT_THRESHOLDS)
    p.set_defaults(func=cmd_abc_triples)

    p = sub.add_parser("scan", parents=[common], help="run every check over a corpus of maps",
                       epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--degrees", type=_int_list, default=(2,))
    p.add_argument("--a-max", type=int, default=50)
    p.add_argument("--denominators", type=_int_list, default=(1, 4, 16))
    p.add_argument("--exclude", default="", help="comma-separated c values to skip")
    p.add_argument("--budget", type=int, default=2000, help="tuples per map and kind before sampling")
    p.add_argument("--eps-list", type=_float_list, default=(0.5,))
    p.add_argument("--thresholds", type=_float_list, default=abc.DEFAULT_THRESHOLDS)
    p.set_defaults(func=cmd_scan)
    return parser


def _glue_negative_values(argv: list[str]) -> list[str]:
    """Turn ``-c -29/16`` into ``-c=-29/16`` so argparse does not read the value as a flag."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in ("-c", "--zeta", "--exclude") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.workers is None:
        args.workers = _default_workers()
    if getattr(args, "thresholds", None) is not None and len(args.thresholds) != 2:
        sys.stderr.write("preperlab: error: --thresholds needs two values\n")
        return EXIT_USAGE
    try:
        return args.func(args, out)
    except UsageError as e:
        sys.stderr.write(f"preperlab: error: {e}\n")
        return EXIT_USAGE
    except (geo.PreconditionError, abc.UnsupportedRootOfUnity) as e:
        sys.stderr.write(f"preperlab: refused: {e}\n")
        return EXIT_PRECONDITION
    except dyn.RootFindingError as e:
        sys.stderr.write(f"preperlab: cap exceeded: {e}\n")
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
