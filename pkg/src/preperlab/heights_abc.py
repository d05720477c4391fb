"""Projective heights, radicals and the sum-zero tuples built from preperiodic points.

A tuple (x_1, ..., x_n) of nonzero rationals is treated as a point of
projective space, so its height h and radical rad do not change when every
coordinate is multiplied by the same nonzero rational.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Iterable

from .dynamics import Portrait, UnicriticalMap, portrait_difference_height_max
from .exactnum import (
    LogNumber,
    Rational,
    factorize,
    fmt_rat,
    lambda_v,
    log_abs,
    valuation,
)
from .julia_geometry import check_prime, slice_fraction

HEXAGON = "hexagon"
QUAD = "quad"
TRIPLE = "triple"
RAW = "raw"

STRESS_NOTE = "stress value only; the exceptional set is unknown and ignored"

DEFAULT_THRESHOLDS = (600, 800)
TOP_K = 10


class DegenerateTuple(ValueError):
    pass


class DegenerateHexagon(DegenerateTuple):
    pass


class UnsupportedRootOfUnity(ValueError):
    pass


@dataclass(frozen=True)
class ProjTuple:
    coords: tuple[Fraction, ...]
    kind: str = RAW

    def __post_init__(self):
        cs = tuple(Fraction(x) for x in self.coords)
        object.__setattr__(self, "coords", cs)
        if len(cs) < 3:
            raise ValueError("need at least three coordinates")
        if any(x == 0 for x in cs):
            raise DegenerateTuple("all coordinates must be nonzero")
        if self.kind != RAW and sum(cs) != 0:
            raise ValueError(f"{self.kind} coordinates must sum to 0")

    def scaled(self, s: Rational) -> "ProjTuple":
        s = Fraction(s)
        if s == 0:
            raise ValueError("scale must be nonzero")
        return ProjTuple(tuple(s * x for x in self.coords), self.kind)

    def primitive(self) -> tuple[int, ...]:
        """The integer representative with gcd 1 and the sign of the first coordinate kept."""
        den = reduce(math.lcm, (x.denominator for x in self.coords))
        ints = [int(x * den) for x in self.coords]
        g = reduce(math.gcd, ints)
        return tuple(n // abs(g) for n in ints)

    def primes(self) -> list[int]:
        out: set[int] = set()
        for x in self.coords:
            out |= factorize(abs(x.numerator)).keys()
            out |= factorize(x.denominator).keys()
        return sorted(out)

    def to_json(self) -> list[str]:
        return [fmt_rat(x) for x in self.coords]


def _as_tuple(P) -> ProjTuple:
    return P if isinstance(P, ProjTuple) else ProjTuple(tuple(P))


# ---------------------------------------------------------------------------
# heights and radicals


def proj_height_log(P) -> LogNumber:
    """h(P) place by place: sum_p -min_i v_p(x_i) log p + log max_i |x_i|."""
    P = _as_tuple(P)
    out = LogNumber(arch=max(log_abs(x) for x in P.coords))
    for p in P.primes():
        out = out + LogNumber({p: -min(valuation(x, p) for x in P.coords)})
    return out


def proj_height(P) -> float:
    """h(P) = log max |n_i| for the primitive integer representative."""
    return math.log(max(abs(n) for n in _as_tuple(P).primitive()))


def support(P) -> frozenset[int]:
    """Primes at which the coordinates do not all share one valuation."""
    P = _as_tuple(P)
    out: set[int] = set()
    # with gcd 1 some coordinate is a p-unit, so p is in the support iff it divides some n_i
    for n in P.primitive():
        out |= factorize(abs(n)).keys()
    return frozenset(out)


def support_and_rad(P) -> tuple[frozenset[int], float]:
    I = support(P)
    return I, math.fsum(math.log(p) for p in sorted(I))


def rad_log(P) -> LogNumber:
    return LogNumber({p: 1 for p in support(P)})


@dataclass(frozen=True)
class QualityReport:
    tuple: ProjTuple
    h: float
    rad: float

    @property
    def quality(self) -> float:
        """h/rad; inf when only rad vanishes, nan when both do (the point (1 : ... : +-1))."""
        if self.rad > 0:
            return self.h / self.rad
        return math.inf if self.h > 0 else math.nan

    def abcd_margin(self, eps: float = 0.0, C: float = 0.0) -> float:
        return self.h - (1 + eps) * self.rad - C


def quality_report(P) -> QualityReport:
    P = _as_tuple(P)
    _, rad = support_and_rad(P)
    return QualityReport(P, proj_height(P), rad)


def abcd_margin(P, eps: float = 0.0, C: float = 0.0) -> float:
    """h(P) - (1+eps) rad(P) - C; positive means the tuple stresses the inequality."""
    P = _as_tuple(P)
    if sum(P.coords) != 0:
        raise ValueError("coordinates must sum to 0")
    return quality_report(P).abcd_margin(eps, C)


# ---------------------------------------------------------------------------
# adelic goodness


@dataclass(frozen=True)
class AdelicGoodnessReport:
    good_prime_sum: float
    arch_sum: float
    passes: bool
    margins: tuple[float, float]  # both >= 0 iff passes


def is_adelically_good(a: Rational, f: UnicriticalMap, thresholds: tuple[float, float] = DEFAULT_THRESHOLDS) -> AdelicGoodnessReport:
    """Good-prime valuation sum at most h(c)/t1, and archimedean-plus-{p | d} log sum at least -h(c)/t2."""
    a = Fraction(a)
    if a == 0:
        raise ValueError("a must be nonzero")
    hc = f.h_c
    if hc <= 0:
        raise ValueError("h(c) = 0: the thresholds degenerate")
    t1, t2 = thresholds
    if t1 <= 0 or t2 <= 0:
        raise ValueError("thresholds must be positive")
    bad = set(f.bad_places)
    primes = factorize(abs(a.numerator)).keys() | factorize(a.denominator).keys()
    good = LogNumber({p: valuation(a, p) for p in primes if p not in bad})
    near = LogNumber(arch=log_abs(a)) + LogNumber({p: -valuation(a, p) for p in factorize(f.d)})
    g, r = float(good), float(near)
    m1 = hc / t1 - g
    m2 = r + hc / t2
    return AdelicGoodnessReport(g, r, m1 >= 0 and m2 >= 0, (m1, m2))


# ---------------------------------------------------------------------------
# tuple builders


def build_hexagon(p1: Rational, p2: Rational, p3: Rational, p4: Rational, p5: Rational) -> ProjTuple:
    p1, p2, p3, p4, p5 = (Fraction(x) for x in (p1, p2, p3, p4, p5))
    sides = (p2 - p1, p1 - p3, -p1 - p4, p5 + p1, p3 - p5, p4 - p2)
    for i, x in enumerate(sides):
        if x == 0:
            raise DegenerateHexagon(f"side x_{i} vanishes")
    return ProjTuple(sides, HEXAGON)


def build_quadrilateral(p1: Rational, p2: Rational, p3: Rational, zeta: Rational, d: int | None = None) -> ProjTuple:
    """(p2 - p1, zeta p1 - p2, p3 - zeta p1, p1 - p3) with zeta = +-1, the rational roots of unity."""
    zeta = Fraction(zeta)
    if zeta not in (1, -1):
        raise UnsupportedRootOfUnity(f"zeta = {fmt_rat(zeta)} is not a root of unity in Q")
    if d is not None and zeta**d != 1:
        raise UnsupportedRootOfUnity(f"zeta = {fmt_rat(zeta)} does not satisfy zeta^{d} = 1")
    p1, p2, p3 = (Fraction(x) for x in (p1, p2, p3))
    sides = (p2 - p1, zeta * p1 - p2, p3 - zeta * p1, p1 - p3)
    for i, x in enumerate(sides):
        if x == 0:
            raise DegenerateTuple(f"side x_{i} vanishes")
    return ProjTuple(sides, QUAD)


def exact_period(f: UnicriticalMap, z: Rational, cap: int = 64) -> int | None:
    """Least n <= cap with f^n(z) = z, or None."""
    z = Fraction(z)
    bound = 2 * max(1, abs(f.c))  # no preperiodic point is this large
    w = z
    for n in range(1, cap + 1):
        w = f(w)
        if abs(w) > bound:
            return None
        if w == z:
            return n
    return None


def periodic_abc_triple(f: UnicriticalMap, p1: Rational, p2: Rational) -> ProjTuple:
    """(p1^d, -p2^d, -(f(p1) - f(p2))), which sums to zero because p1^d - p2^d = f(p1) - f(p2)."""
    p1, p2 = Fraction(p1), Fraction(p2)
    if p1 == p2:
        raise DegenerateTuple("p1 and p2 must be distinct")
    if p1 == 0 or p2 == 0:
        raise DegenerateTuple("p1 and p2 must be nonzero")
    n1, n2 = exact_period(f, p1), exact_period(f, p2)
    if n1 is None or n2 is None:
        raise DegenerateTuple("p1 and p2 must be periodic")
    if n1 != n2:
        raise DegenerateTuple(f"periods differ: {n1} != {n2}")
    diff = f(p1) - f(p2)
    if diff == 0:
        raise DegenerateTuple("f(p1) = f(p2)")
    return ProjTuple((p1**f.d, -(p2**f.d), -diff), TRIPLE)


def triple_height_gap(f: UnicriticalMap, p1: Rational, p2: Rational, xi: float = 0.0) -> float:
    """h(P) - ((d-1-xi)/d h(c) + rad(P)) for the periodic triple P of (p1, p2)."""
    if not 0 <= xi < 1:
        raise ValueError("xi must lie in [0, 1)")
    q = quality_report(periodic_abc_triple(f, p1, p2))
    return q.h - ((f.d - 1 - xi) / f.d * f.h_c + q.rad)


def h_plus_minus(P) -> tuple[LogNumber, LogNumber]:
    """(h_+, h_-) with h_+ the height of (1, x_1, ..., x_n) and h_- = h_+ - h >= 0."""
    P = _as_tuple(P)
    hp = LogNumber(arch=max(0.0, max(log_abs(x) for x in P.coords)))
    for p in P.primes():
        hp = hp + LogNumber({p: -min(0, *(valuation(x, p) for x in P.coords))})
    return hp, hp - proj_height_log(P)


def chi_indicator(f: UnicriticalMap, pj: Rational, p1: Rational, zeta: Rational, p: int) -> LogNumber:
    """lambda_p(c) if pj - p1 and pj - zeta p1 both have valuation v_p(c)/d, else 0."""
    vc = check_prime(f, p)
    pj, p1, zeta = Fraction(pj), Fraction(p1), Fraction(zeta)
    a, b = pj - p1, pj - zeta * p1
    if a != 0 and b != 0 and f.d * valuation(a, p) == vc and f.d * valuation(b, p) == vc:
        return lambda_v(f.c, p)
    return LogNumber.zero()


PLACE_CLASSES = ("S11", "S12", "S2", "arch_and_d")


def per_place_breakdown(P, f: UnicriticalMap) -> dict[str, LogNumber]:
    """Sum of log max_i |x_i|_v - rad_v(P) over each class of places.

    S11: bad primes not dividing d where all |x_i|_p agree; S12: the other
    bad primes not dividing d; S2: good primes not dividing d; arch_and_d:
    the archimedean place with the primes dividing d.
    """
    P = _as_tuple(P)
    I = support(P)
    bad = set(f.bad_places)
    out = {k: LogNumber.zero() for k in PLACE_CLASSES}
    out["arch_and_d"] = LogNumber(arch=max(log_abs(x) for x in P.coords))
    for p in sorted(set(P.primes()) | set(factorize(f.d))):
        vals = [valuation(x, p) for x in P.coords]
        term = LogNumber({p: -min(vals) - (1 if p in I else 0)})
        if f.d % p == 0:
            key = "arch_and_d"
        elif p in bad:
            key = "S11" if len(set(vals)) == 1 else "S12"
        else:
            key = "S2"
        out[key] = out[key] + term
    return out


def equal_sides_primes(P, f: UnicriticalMap) -> list[int]:
    """Bad primes not dividing d at which every coordinate has the same valuation."""
    P = _as_tuple(P)
    return [p for p in f.bad_places if f.d % p and len({valuation(x, p) for x in P.coords}) == 1]


def equal_sides_slice(P, f: UnicriticalMap) -> float | None:
    sigma = [p for p in f.bad_places if f.d % p]
    if not sigma:
        return None
    return slice_fraction(f, equal_sides_primes(P, f), sigma)


# ---------------------------------------------------------------------------
# scans over a portrait


@dataclass
class ScoredTuple:
    report: QualityReport
    adelically_good: list[bool] | None
    equal_sides_slice: float | None

    def sort_key(self):
        q = self.report.quality
        return (math.isnan(q), -q if not math.isnan(q) else 0.0, self.report.tuple.coords)

    def to_json(self) -> dict:
        q = self.report
        return {
            "kind": q.tuple.kind,
            "coords": q.tuple.to_json(),
            "h": q.h,
            "rad": q.rad,
            "quality": q.quality,
            "adelically_good": self.adelically_good,
            "equal_sides_slice": self.equal_sides_slice,
        }


@dataclass
class ScanReport:
    kind: str
    total: int  # size of the full candidate space
    evaluated: int
    degenerate: int
    top: list[ScoredTuple] = field(default_factory=list)
    adelic_good_fraction: float | None = None
    mean_equal_sides_slice: float | None = None
    difference_height_max: float | None = None
    note: str = STRESS_NOTE

    @property
    def best_quality(self) -> float | None:
        return self.top[0].report.quality if self.top else None

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "total": self.total,
            "evaluated": self.evaluated,
            "degenerate": self.degenerate,
            "adelic_good_fraction": self.adelic_good_fraction,
            "mean_equal_sides_slice": self.mean_equal_sides_slice,
            "difference_height_max": self.difference_height_max,
            "note": self.note,
            "top": [t.to_json() for t in self.top],
        }


def _select(space_size: int, enumerate_all, sample_one, budget: int, seed: int) -> Iterable:
    if budget <= 0:
        return []
    if space_size <= budget:
        return enumerate_all()
    rng = random.Random(seed)
    return [sample_one(rng) for _ in range(budget)]


def _scan(kind: str, f: UnicriticalMap, portrait: Portrait, space_size: int, candidates: Iterable, build,
          thresholds: tuple[float, float]) -> ScanReport:
    scored: list[ScoredTuple] = []
    degenerate = 0
    good_count = coord_count = 0
    slices = []
    hc_ok = f.h_c > 0
    good_cache: dict[Fraction, bool] = {}
    for args in candidates:
        try:
            P = build(*args)
        except DegenerateTuple:
            degenerate += 1
            continue
        good = None
        if hc_ok:
            good = []
            for x in P.coords:
                if x not in good_cache:
                    good_cache[x] = is_adelically_good(x, f, thresholds).passes
                good.append(good_cache[x])
            good_count += sum(good)
            coord_count += len(good)
        sl = equal_sides_slice(P, f)
        if sl is not None:
            slices.append(sl)
        scored.append(ScoredTuple(quality_report(P), good, sl))
    scored.sort(key=ScoredTuple.sort_key)
    # different orderings of the same points can give the same tuple
    top, seen = [], set()
    for t in scored:
        if t.report.tuple.coords not in seen:
            seen.add(t.report.tuple.coords)
            top.append(t)
            if len(top) == TOP_K:
                break
    return ScanReport(
        kind=kind,
        total=space_size,
        evaluated=len(scored),
        degenerate=degenerate,
        top=top,
        adelic_good_fraction=good_count / coord_count if coord_count else None,
        mean_equal_sides_slice=math.fsum(slices) / len(slices) if slices else None,
        difference_height_max=portrait_difference_height_max(portrait),
    )


def _perm_count(n: int, k: int) -> int:
    return math.perm(n, k) if n >= k else 0


def hexagon_scan(portrait: Portrait, budget: int = 2000, seed: int = 0,
                 thresholds: tuple[float, float] = DEFAULT_THRESHOLDS) -> ScanReport:
    pts = list(portrait.points)
    if len(pts) < 5:
        raise ValueError(f"hexagons need at least 5 preperiodic points, portrait has {len(pts)}")
    cands = _select(_perm_count(len(pts), 5), lambda: itertools.permutations(pts, 5),
                    lambda rng: rng.sample(pts, 5), budget, seed)
    return _scan(HEXAGON, portrait.f, portrait, _perm_count(len(pts), 5), cands, build_hexagon, thresholds)


def quadrilateral_scan(portrait: Portrait, zeta: Rational | None = None, budget: int = 2000, seed: int = 0,
                       thresholds: tuple[float, float] = DEFAULT_THRESHOLDS) -> ScanReport:
    f = portrait.f
    if zeta is None:
        zeta = -1 if f.d % 2 == 0 else 1
    pts = list(portrait.points)
    if len(pts) < 3:
        raise ValueError(f"quadrilaterals need at least 3 preperiodic points, portrait has {len(pts)}")

    def build(a, b, c):
        return build_quadrilateral(a, b, c, zeta, f.d)

    zeta = Fraction(zeta)
    if zeta not in (1, -1) or zeta**f.d != 1:
        raise UnsupportedRootOfUnity(f"zeta = {fmt_rat(zeta)} is not a rational root of unity with zeta^{f.d} = 1")
    n = _perm_count(len(pts), 3)
    cands = _select(n, lambda: itertools.permutations(pts, 3), lambda rng: rng.sample(pts, 3), budget, seed)
    return _scan(QUAD, f, portrait, n, cands, build, thresholds)


def same_period_pairs(portrait: Portrait) -> list[tuple[Fraction, Fraction]]:
    f = portrait.f
    per = [z for z in portrait.periodic_points() if z != 0]
    out = []
    for a, b in itertools.combinations(per, 2):
        if portrait.period(a) == portrait.period(b) and f(a) != f(b):
            out.append((a, b))
    return out


def triple_scan(portrait: Portrait, budget: int = 2000, seed: int = 0,
                thresholds: tuple[float, float] = DEFAULT_THRESHOLDS) -> ScanReport:
    f = portrait.f
    pairs = same_period_pairs(portrait)
    if not pairs:
        raise ValueError("abc triples need two nonzero periodic points of equal period with distinct images")
    cands = _select(len(pairs), lambda: pairs, lambda rng: rng.choice(pairs), budget, seed)
    return _scan(TRIPLE, f, portrait, len(pairs), cands, lambda a, b: periodic_abc_triple(f, a, b), thresholds)


def min_triple_gap(portrait: Portrait, xi: float = 0.0) -> float | None:
    gaps = [triple_height_gap(portrait.f, a, b, xi) for a, b in same_period_pairs(portrait)]
    return min(gaps) if gaps else None
