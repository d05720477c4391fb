"""Acceptance criteria, one test each; conftest prints a PASS/FAIL line per criterion."""

from __future__ import annotations

import itertools
import math
import random
import time
from fractions import Fraction
from functools import lru_cache


from oracles import brute_force_preperiodic
from preperlab import cli
from preperlab.dynamics import (
    ARCH,
    UnicriticalMap,
    check_transformation_rule,
    difference_height_margin,
    f3_roots,
    find_preperiodic,
    newton_coprimality_violations,
)
from preperlab.exactnum import Place, product_formula_residual
from preperlab.heights_abc import (
    DegenerateTuple,
    build_hexagon,
    build_quadrilateral,
    periodic_abc_triple,
    proj_height,
    quality_report,
    same_period_pairs,
    support_and_rad,
)
from preperlab.julia_geometry import (
    PreconditionError,
    WeightVector,
    gamma_limit,
    global_diameter_residual,
    quantization_check,
    telescoping_check,
)

F = Fraction


def tag(record_property, n: int, detail: str) -> None:
    record_property("criterion", n)
    record_property("detail", detail)


@lru_cache(maxsize=None)
def default_corpus() -> tuple:
    """The default scan corpus: d = 2, |a| <= 50, b in {1, 4, 16}."""
    return tuple(cli.CorpusSpec().maps())


@lru_cache(maxsize=None)
def extended_corpus() -> tuple:
    """Corpus with odd bad primes so the disk-tree precondition applies."""
    maps = cli.CorpusSpec((2,), 50, (1, 4, 9, 16, 25, 36, 49, 225)).maps()
    maps += cli.CorpusSpec((3,), 50, (1, 8, 27, 125)).maps()
    return tuple(maps)


@lru_cache(maxsize=None)
def portrait(f: UnicriticalMap):
    return find_preperiodic(f)


def test_portraits_match_brute_force(record_property):
    start = time.perf_counter()
    cs = sorted({F(a, b) for b in (1, 2, 4) for a in range(-50, 51) if math.gcd(a, b) == 1})
    mismatches = [c for c in cs if find_preperiodic(UnicriticalMap(2, c)).successor != brute_force_preperiodic(2, c)]
    P = find_preperiodic(UnicriticalMap(2, F(-29, 16)))
    cycle = P.cycles()
    elapsed = time.perf_counter() - start
    tag(record_property, 1, f"{len(cs)} maps, {len(mismatches)} mismatches, -29/16: {len(P)} points, "
        f"cycles {[[str(z) for z in cyc] for cyc in cycle]}, {elapsed:.1f}s")
    assert mismatches == []
    assert len(P) == 8 and len(cycle) == 1 and set(cycle[0]) == {F(-1, 4), F(-7, 4), F(5, 4)}
    assert elapsed < 60


def test_product_formula(record_property):
    rng = random.Random(20240101)
    worst = 0.0
    for _ in range(1000):
        x = F(rng.randint(1, 10**12) * rng.choice((-1, 1)), rng.randint(1, 10**12))
        worst = max(worst, abs(product_formula_residual(x)))
    tag(record_property, 2, f"1000 rationals, max |residual| = {worst:.3g}")
    assert worst < 1e-9


def test_global_diameter(record_property):
    worst, count = 0.0, 0
    for f in default_corpus() + extended_corpus():
        P = portrait(f)
        if len(P) >= 2:
            worst = max(worst, abs(global_diameter_residual(P.points)))
            count += 1
    tag(record_property, 3, f"{count} portraits, max |residual| = {worst:.3g}")
    assert worst < 1e-9


def test_distance_quantization(record_property):
    checked, pairs, violations = 0, 0, []
    for f in default_corpus() + extended_corpus():
        pts = portrait(f).points
        for p in f.bad_places:
            try:
                q = quantization_check(f, pts, p)
            except PreconditionError:
                continue
            checked += 1
            pairs += len(q.k_indices) + len(q.violations)
            violations += [(f.d, str(f.c), p, v) for v in q.violations]
    tag(record_property, 4, f"{checked} (map, prime) cases, {pairs} pairs, {len(violations)} violations")
    assert checked > 0 and pairs > 0
    assert violations == []


def test_telescoping_steps(record_property):
    rng = random.Random(7)
    total, nonzero = 0, 0
    for d in (2, 3):
        p = 5
        f = UnicriticalMap(d, F(1, p**d))
        for m in range(2, 6):
            for _ in range(100):
                raw = [rng.randint(0, 30) for _ in range(d * d)]
                if not any(raw):
                    raw[0] = 1
                k2 = WeightVector(d, 2, tuple(F(x, sum(raw)) for x in raw))
                total += 1
                nonzero += telescoping_check(k2, f, p, m) != 0
    uniform_limits = [gamma_limit(WeightVector.uniform(d), UnicriticalMap(d, F(1, 5**d)), 5) for d in (2, 3)]
    uniform_steps = [telescoping_check(WeightVector.uniform(d), UnicriticalMap(d, F(1, 5**d)), 5, m)
                     for d in (2, 3) for m in range(2, 6)]
    tag(record_property, 5, f"{nonzero}/{total} random weight vectors give a nonzero residual; "
        f"uniform residuals {sorted(set(map(str, uniform_steps)))}, uniform limits {list(map(str, uniform_limits))}")
    assert all(r == 0 for r in uniform_steps) and all(q == 0 for q in uniform_limits)
    assert nonzero == 0


def test_difference_height_bound(record_property):
    worst, pairs = -math.inf, 0
    for f in default_corpus() + extended_corpus():
        pts = portrait(f).points
        for x, y in itertools.combinations(pts, 2):
            worst = max(worst, difference_height_margin(f, x, y))
            pairs += 1
    tag(record_property, 6, f"{pairs} pairs, max margin = {worst:.6g}")
    assert worst <= 0


def test_periodic_coprimality(record_property):
    maps = default_corpus() + extended_corpus()
    bad = [(f.d, str(f.c), v) for f in maps for v in newton_coprimality_violations(f, portrait(f))]
    tag(record_property, 7, f"{len(maps)} maps, {len(bad)} violations")
    assert bad == []


def _corpus_tuples(rng: random.Random, per_map: int = 6):
    for f in default_corpus():
        pts = portrait(f).points
        if len(pts) >= 5:
            for _ in range(per_map):
                try:
                    yield build_hexagon(*rng.sample(pts, 5))
                except DegenerateTuple:
                    pass
        if len(pts) >= 3:
            for zeta in (1, -1):
                for _ in range(per_map // 2):
                    try:
                        yield build_quadrilateral(*rng.sample(pts, 3), zeta, d=f.d)
                    except DegenerateTuple:
                        pass
        for p1, p2 in same_period_pairs(portrait(f)):
            yield periodic_abc_triple(f, p1, p2)


def test_tuple_algebra(record_property):
    rng = random.Random(11)
    tuples = list(_corpus_tuples(rng))
    not_zero = [P for P in tuples if sum(P.coords) != 0]
    scale_failures = 0
    for P in tuples:
        base = quality_report(P)
        base_rad = support_and_rad(P)
        for _ in range(100):
            s = F(rng.randint(1, 10**6) * rng.choice((-1, 1)), rng.randint(1, 10**6))
            Q = P.scaled(s)
            q = quality_report(Q)
            same = (proj_height(Q) == base.h and support_and_rad(Q) == base_rad
                    and (q.quality == base.quality or (math.isnan(q.quality) and math.isnan(base.quality))))
            scale_failures += not same
    kinds = {k: sum(P.kind == k for P in tuples) for k in ("hexagon", "quad", "triple")}
    tag(record_property, 8, f"{len(tuples)} tuples {kinds}, {len(not_zero)} nonzero sums, "
        f"{scale_failures} scaling mismatches over {100 * len(tuples)} rescalings")
    assert all(kinds.values())
    assert not_zero == [] and scale_failures == 0


def test_spot_values(record_property):
    f = UnicriticalMap(2, F(-29, 16))
    T = periodic_abc_triple(f, F(-1, 4), F(-7, 4))
    qt = quality_report(T)
    H = quality_report((F(1, 2), -1, -1, F(3, 2), -1, 1))
    tag(record_property, 9, f"triple {T.primitive()}: h = {qt.h:.12g}, rad = {qt.rad:.12g}, quality = {qt.quality:.12g}; "
        f"hexagon: h = {H.h:.12g}, rad = {H.rad:.12g}")
    assert T.primitive() in ((1, -49, 48), (-1, 49, -48))
    assert abs(qt.h - math.log(49)) < 1e-9 and abs(qt.rad - math.log(42)) < 1e-9
    # the quoted 1.0414 is approximate; log 49 / log 42 = 1.04124..., which the log tolerances pin down
    assert abs(qt.quality - math.log(49) / math.log(42)) < 1e-9
    assert round(qt.quality, 3) == round(1.0414, 3)
    assert abs(H.h - math.log(3)) < 1e-9 and abs(H.rad - math.log(6)) < 1e-9


def test_escape_rate_transformation_rule(record_property):
    rng = random.Random(3)
    finite_bad, arch_worst, capped, checks = 0, 0.0, 0, 0
    for _ in range(500):
        d = rng.choice((2, 3))
        b = rng.choice((1, 2, 3, 5, 6)) ** d
        c = F(rng.randint(-60, 60), b)
        f = UnicriticalMap(d, c)
        z = F(rng.randint(-40, 40), rng.randint(1, 12))
        for v in [ARCH] + [Place(p) for p in sorted(set(f.bad_places) | {2, 3, 5, 7})]:
            chk = check_transformation_rule(f, z, v)
            if chk.cap_too_small:
                capped += 1
                continue
            checks += 1
            if v.is_archimedean:
                arch_worst = max(arch_worst, chk.residual)
            else:
                finite_bad += chk.exact_finite_residual != 0
    tag(record_property, 10, f"500 pairs, {checks} place checks ({capped} flagged cap-too-small), "
        f"{finite_bad} nonzero finite residuals, max archimedean residual {arch_worst:.3g}")
    assert finite_bad == 0 and arch_worst < 1e-8


def test_degree_two_f3_roots(record_property):
    worst, roots = 0.0, 0
    maps = default_corpus()
    for f in maps:
        c = complex(float(f.c))
        for beta in f3_roots(f):
            w = beta
            for _ in range(3):
                w = w * w + c
            worst = max(worst, abs(w) / (1e-10 * (1 + abs(beta)) ** 8))
            roots += 1
    tag(record_property, 11, f"{len(maps)} maps, {roots} roots, max |f^3(beta)| / (1e-10 (1+|beta|)^8) = {worst:.3g}")
    assert roots == 8 * len(maps) and worst < 1


def test_default_scan(record_property, tmp_path):
    runs = []
    for i in range(2):
        path = tmp_path / f"scan{i}.csv"
        start = time.perf_counter()
        with open(tmp_path / "summary.json", "w") as summary:
            code = cli.main(["scan", "--workers", "1", "--seed", "0", "--csv", str(path), "--json"], out=summary)
        runs.append((code, time.perf_counter() - start, path.read_bytes()))
    (c0, t0, b0), (c1, t1, b1) = runs
    rows = len(b0.splitlines()) - 1
    tag(record_property, 12, f"exit codes {c0},{c1}; {rows} rows; {t0:.1f}s and {t1:.1f}s; "
        f"byte-identical: {b0 == b1}")
    assert c0 == c1 == 0
    assert max(t0, t1) < 300
    assert b0 == b1
