"""The unicritical family z^d + c over Q: orbits, rational preperiodic portraits,
local escape rates and the algebraic checks on periodic points."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

from .exactnum import (
    ARCH,
    VAL_INF,
    LogNumber,
    Place,
    Rational,
    factorize,
    fmt_rat,
    height_bound_int,
    height_scalar,
    lambda_v,
    log_abs,
    parse_rat,
    valuation,
)


class RootFindingError(RuntimeError):
    pass


@dataclass(frozen=True)
class UnicriticalMap:
    d: int
    c: Fraction

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"degree must be an integer >= 2, got {self.d}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "c", parse_rat(self.c))

    def __call__(self, z: Rational) -> Fraction:
        return Fraction(z) ** self.d + self.c

    def iterate(self, z: Rational, n: int) -> Fraction:
        z = Fraction(z)
        for _ in range(n):
            z = self(z)
        return z

    @cached_property
    def bad_places(self) -> tuple[int, ...]:
        return bad_places(self)

    @cached_property
    def h_c(self) -> float:
        return height_scalar(self.c)

    def __str__(self):
        return f"z^{self.d} + {fmt_rat(self.c)}"


def bad_places(f: UnicriticalMap) -> tuple[int, ...]:
    """Primes p with v_p(c) < 0."""
    return tuple(sorted(factorize(f.c.denominator)))


# ---------------------------------------------------------------------------
# portraits


@dataclass(frozen=True)
class EmptyReason:
    prime: int
    vp_c: int
    d: int

    def __str__(self):
        return f"v_{self.prime}(c) = {self.vp_c} not divisible by d = {self.d}"


@dataclass(frozen=True)
class CandidateGrid:
    denominator: int
    bound: int

    def __contains__(self, z) -> bool:
        z = Fraction(z)
        return z.denominator == self.denominator and abs(z.numerator) <= self.bound

    def points(self) -> list[Fraction]:
        b = self.denominator
        return [Fraction(a, b) for a in range(-self.bound, self.bound + 1) if math.gcd(a, b) == 1]


def _iroot_ceil(n: int, k: int) -> int:
    """Smallest integer r >= 0 with r**k >= n."""
    if n <= 0:
        return 0
    r = int(round(n ** (1.0 / k))) if n.bit_length() < 1000 else 1 << (n.bit_length() // k + 1)
    while r**k < n:
        r += 1
    while r > 0 and (r - 1) ** k >= n:
        r -= 1
    return r


def preperiodic_candidate_grid(f: UnicriticalMap) -> CandidateGrid | EmptyReason:
    """Finite superset of the rational preperiodic points of f.

    At a bad prime only v_p(z) = v_p(c)/d avoids escape, which fixes the
    denominator; the archimedean bound is |z| < 2 max(1, |c|)^(1/d).
    """
    b = 1
    for p, e in factorize(f.c.denominator).items():
        if e % f.d:
            return EmptyReason(p, -e, f.d)
        b *= p ** (e // f.d)
    big = max(Fraction(1), abs(f.c))
    # smallest A with (A/b)^d >= 2^d * max(1, |c|)
    target = (2 * b) ** f.d * big
    bound = _iroot_ceil(math.ceil(target), f.d)
    return CandidateGrid(b, bound)


@dataclass
class Portrait:
    f: UnicriticalMap
    points: list[Fraction]
    successor: dict[Fraction, Fraction]
    classification: dict[Fraction, tuple[int, int]]  # z -> (tail, period)
    reason: EmptyReason | None = None
    rejected: list[Fraction] = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def tail(self, z) -> int:
        return self.classification[Fraction(z)][0]

    def period(self, z) -> int:
        return self.classification[Fraction(z)][1]

    def periodic_points(self) -> list[Fraction]:
        return [z for z in self.points if self.classification[z][0] == 0]

    def cycles(self) -> list[list[Fraction]]:
        seen: set[Fraction] = set()
        out = []
        for z in self.periodic_points():
            if z in seen:
                continue
            cyc = [z]
            w = self.successor[z]
            while w != z:
                cyc.append(w)
                w = self.successor[w]
            seen.update(cyc)
            out.append(cyc)
        return out

    @property
    def max_period(self) -> int:
        return max((p for _, p in self.classification.values()), default=0)

    def to_json(self) -> dict:
        out = {
            "schema": 1,
            "d": self.f.d,
            "c": fmt_rat(self.f.c),
            "points": [
                {
                    "z": fmt_rat(z),
                    "tail": self.classification[z][0],
                    "period": self.classification[z][1],
                    "image": fmt_rat(self.successor[z]),
                }
                for z in self.points
            ],
            "bad_places": list(self.f.bad_places),
        }
        if self.reason is not None:
            out["reason"] = str(self.reason)
        return out


def classify_functional_graph(succ: dict) -> dict:
    """(tail, period) for every node of a functional graph closed under succ."""
    out: dict = {}
    for start in succ:
        if start in out:
            continue
        path = []
        index = {}
        z = start
        while z not in out and z not in index:
            index[z] = len(path)
            path.append(z)
            z = succ[z]
        if z in index:
            k = index[z]
            period = len(path) - k
            for w in path[k:]:
                out[w] = (0, period)
            path = path[:k]
        for w in reversed(path):
            t, per = out[succ[w]]
            out[w] = (t + 1, per)
    return out


def find_preperiodic(f: UnicriticalMap) -> Portrait:
    """All Q-rational preperiodic points of f with tail/period data."""
    grid = preperiodic_candidate_grid(f)
    if isinstance(grid, EmptyReason):
        return Portrait(f, [], {}, {}, reason=grid)
    candidates = grid.points()
    image = {z: f(z) for z in candidates}
    # 0 = unknown, 1 = preperiodic, 2 = escapes the grid
    state: dict[Fraction, int] = {}
    rejected = []
    for start in candidates:
        if start in state:
            continue
        path = []
        on_path = set()
        z = start
        verdict = 0
        while True:
            if z not in grid:
                verdict = 2
                break
            if z in state:
                verdict = state[z]
                break
            if z in on_path:
                verdict = 1
                break
            on_path.add(z)
            path.append(z)
            z = image[z]
        for w in path:
            state[w] = verdict
        if verdict == 2:
            rejected.extend(path)
    points = sorted(z for z, s in state.items() if s == 1)
    succ = {z: image[z] for z in points}
    return Portrait(f, points, succ, classify_functional_graph(succ), rejected=sorted(rejected))


# ---------------------------------------------------------------------------
# escape rates


@dataclass(frozen=True)
class EscapeRateResult:
    value: LogNumber
    status: str  # "escaped" | "bounded" | "capped"
    n: int

    @property
    def escaped(self) -> bool:
        return self.status == "escaped"

    def real_value(self) -> float:
        return self.value.real_value()


ESCAPED, BOUNDED, CAPPED = "escaped", "bounded", "capped"


def _escape_radius(f: UnicriticalMap) -> float:
    d = f.d
    return max(2.0 ** (1.0 / (d - 1)), (2.0 * abs(float(f.c))) ** (1.0 / d))


def _past_escape_radius(f: UnicriticalMap, z: Fraction) -> bool:
    # exact test of |z| > max(2^(1/(d-1)), (2|c|)^(1/d))
    a = abs(z)
    return a ** (f.d - 1) > 2 and a**f.d > 2 * abs(f.c)


def _arch_tail(f: UnicriticalMap, L: float, sign: int, n: int) -> float:
    """(1/d^n) log|z_n| plus the remaining log(1 + c/z^d) corrections, given
    L = log|z_n| and sign(z_n) with |z_n| past the escape radius."""
    d = f.d
    cf = float(f.c)
    value = L / d**n
    m = n
    while True:
        s = sign**d
        expo = -d * L
        if expo < -745.0 or cf == 0.0:
            break
        t = cf * s * math.exp(expo)
        corr = math.log1p(t)
        L = d * L + corr
        sign = s
        m += 1
        term = corr / d**m
        value += term
        if abs(term) < 1e-18 * max(1.0, abs(value)):
            break
    return value


def _float_escape(f: UnicriticalMap, x: float, n: int, n_max: int, logR: float) -> EscapeRateResult:
    """Continue a non-preperiodic archimedean orbit in floating point from step n.

    Exact rationals would double their digit count every step while the
    orbit wanders inside the filled Julia set.
    """
    cf = float(f.c)
    for m in range(n, n_max + 1):
        if x != 0.0 and math.log(abs(x)) > logR:
            val = _arch_tail(f, math.log(abs(x)), 1 if x > 0 else -1, m)
            return EscapeRateResult(LogNumber(arch=val), ESCAPED, m)
        x = x**f.d + cf
    return EscapeRateResult(LogNumber(), CAPPED, n_max)


def _unit_part(x: Fraction, p: int, vx: int, mod: int) -> int:
    x = x / Fraction(p) ** vx
    return x.numerator * pow(x.denominator, -1, mod) % mod


def _padic_escape(f: UnicriticalMap, z: Fraction, p: int, n: int, n_max: int, lam_c: int) -> EscapeRateResult:
    """Continue a non-preperiodic orbit at a bad prime with fixed p-adic precision.

    z is carried as p^v * u with u a unit known modulo p^prec.  Valuations
    stay exact; precision is only lost to cancellation, and if it runs out
    the iterate is so close to 0 that the next one has valuation v_p(c)
    and escapes.
    """
    d = f.d
    vc = -lam_c
    prec = 64 + (n_max - n + 2) * lam_c * d
    mod = p**prec
    v = valuation(z, p)
    u = _unit_part(z, p, v, mod)
    uc = _unit_part(f.c, p, vc, mod)
    for m in range(n, n_max + 1):
        if -v * d > lam_c:
            return EscapeRateResult(LogNumber({p: Fraction(-v, d**m)}), ESCAPED, m)
        av, au = d * v, pow(u, d, mod)
        if av < vc:
            v, u = av, (au + uc * p ** (vc - av)) % mod
        elif av > vc:
            v, u = vc, (uc + au * p ** (av - vc)) % mod
        else:
            s = (au + uc) % mod
            if s == 0:
                # v_p(f^(m+1)(z)) >= vc + prec, so the iterate after it has valuation vc
                if m + 2 <= n_max:
                    return EscapeRateResult(LogNumber({p: Fraction(lam_c, d ** (m + 2))}), ESCAPED, m + 2)
                return EscapeRateResult(LogNumber(), CAPPED, n_max)
            k = 0
            while s % p == 0:
                s //= p
                k += 1
            prec -= k
            mod = p**prec
            v, u, uc = av + k, s % mod, uc % mod
    return EscapeRateResult(LogNumber(), CAPPED, n_max)


def escape_rate(f: UnicriticalMap, z: Rational, v, n_max: int = 12) -> EscapeRateResult:
    """Local canonical height lim (1/d^n) lambda_v(f^n(z)).

    Exact at finite places.  At the archimedean place the tail of the limit is
    summed in floating point once the orbit passes the escape radius.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    v = Place.parse(v)
    z = Fraction(z)
    d = f.d
    seen = set()
    if v.is_archimedean:
        logR = math.log(_escape_radius(f))
        # preperiodic points have H(z)^d <= 2^d H(c); past that only escape matters
        hmax = _iroot_ceil(2**d * height_bound_int(f.c), d)
        for n in range(n_max + 1):
            if _past_escape_radius(f, z):
                val = _arch_tail(f, log_abs(z), 1 if z > 0 else -1, n)
                return EscapeRateResult(LogNumber(arch=val), ESCAPED, n)
            if z in seen:
                return EscapeRateResult(LogNumber(), BOUNDED, n)
            if height_bound_int(z) > hmax:
                return _float_escape(f, float(z), n, n_max, logR)
            seen.add(z)
            z = f(z)
        return EscapeRateResult(LogNumber(), CAPPED, n_max)

    p = v.p
    lam_c = 0 if f.c == 0 else max(0, -valuation(f.c, p))
    hmax = _iroot_ceil(2**d * height_bound_int(f.c), d)
    for n in range(n_max + 1):
        vz = valuation(z, p)
        if vz is not VAL_INF and -vz > 0 and Fraction(-vz) > Fraction(lam_c, d):
            return EscapeRateResult(LogNumber({p: Fraction(-vz, d**n)}), ESCAPED, n)
        if lam_c == 0 and (vz is VAL_INF or vz >= 0):
            # good reduction: p-integral orbits stay p-integral
            return EscapeRateResult(LogNumber(), BOUNDED, n)
        if z in seen:
            return EscapeRateResult(LogNumber(), BOUNDED, n)
        if height_bound_int(z) > hmax:
            return _padic_escape(f, z, p, n, n_max, lam_c)
        seen.add(z)
        z = f(z)
    return EscapeRateResult(LogNumber(), CAPPED, n_max)


@dataclass(frozen=True)
class TransformationCheck:
    residual: float
    exact_finite_residual: LogNumber | None
    cap_too_small: bool
    at_z: EscapeRateResult
    at_fz: EscapeRateResult


def check_transformation_rule(f: UnicriticalMap, z: Rational, v, n_max: int = 12) -> TransformationCheck:
    """|lambda_hat(f(z)) - d * lambda_hat(z)| at the place v."""
    v = Place.parse(v)
    a = escape_rate(f, z, v, n_max)
    b = escape_rate(f, f(z), v, n_max)
    if (a.status == CAPPED) != (b.status == CAPPED) and (a.escaped or b.escaped):
        return TransformationCheck(math.nan, None, True, a, b)
    diff = b.value - a.value * f.d
    exact = None if v.is_archimedean else diff
    return TransformationCheck(abs(diff.real_value()), exact, False, a, b)


# ---------------------------------------------------------------------------
# algebraic facts about periodic points


def newton_coprimality_violations(f: UnicriticalMap, portrait: Portrait) -> list[tuple[int, Fraction, Fraction]]:
    """Primes dividing two distinct nonzero periodic points of the same period."""
    by_period: dict[int, list[Fraction]] = {}
    for z in portrait.periodic_points():
        if z != 0:
            by_period.setdefault(portrait.period(z), []).append(z)
    out = []
    for pts in by_period.values():
        for i, x in enumerate(pts):
            if x.numerator in (1, -1):
                continue
            for p in factorize(abs(x.numerator)):
                for y in pts[i + 1 :]:
                    if valuation(y, p) > 0:
                        out.append((p, x, y))
    return sorted(out)


def difference_height_margin(f: UnicriticalMap, p1: Rational, p2: Rational) -> float:
    """h(p1 - p2) - (h(c)/d + log 4); nonpositive for preperiodic p1, p2."""
    return height_scalar(Fraction(p1) - Fraction(p2)) - (f.h_c / f.d + math.log(4))


def difference_height_holds_exact(f: UnicriticalMap, p1: Rational, p2: Rational) -> bool:
    """Integer form of difference_height_margin <= 0:  H(p1-p2)^d <= 4^d H(c)."""
    return height_bound_int(Fraction(p1) - Fraction(p2)) ** f.d <= 4**f.d * height_bound_int(f.c)


def portrait_difference_height_max(portrait: Portrait) -> float | None:
    pts = portrait.points
    f = portrait.f
    vals = [difference_height_margin(f, x, y) for i, x in enumerate(pts) for y in pts[i + 1 :]]
    return max(vals) if vals else None


# ---------------------------------------------------------------------------
# roots of the third iterate


def iterate_poly_coeffs(f: UnicriticalMap, n: int) -> list[Fraction]:
    """Coefficients of f^n(z), highest degree first, exact."""
    coeffs = [Fraction(1), Fraction(0)]  # z
    for _ in range(n):
        power = [Fraction(1)]
        for _ in range(f.d):
            power = _poly_mul(power, coeffs)
        power[-1] += f.c
        coeffs = power
    return coeffs


def _poly_mul(a: list, b: list) -> list:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _horner(coeffs, z):
    acc = 0j
    for a in coeffs:
        acc = acc * z + a
    return acc


def durand_kerner(coeffs: list, max_iter: int = 500, tol: float = 1e-13, radius: float | None = None,
                  evaluate=None) -> list[complex]:
    """All complex roots of a polynomial by simultaneous (Weierstrass) iteration.

    Converged once every update is below tol relative to max(1, |root|).
    evaluate, if given, computes the monic polynomial more stably than
    Horner on the coefficients (e.g. by iterating a map).
    """
    cs = [complex(a) for a in coeffs]
    if cs[0] != 1:
        cs = [a / cs[0] for a in cs]
    if evaluate is None:
        evaluate = lambda z: _horner(cs, z)  # noqa: E731
    n = len(cs) - 1
    if n < 1:
        return []
    if radius is None:
        # Fujiwara bound on the root moduli
        radius = 2 * max(abs(a) ** (1.0 / k) for k, a in enumerate(cs[1:], 1)) or 1.0
    seed = 0.9 * cmath.exp(0.4j)
    roots = [radius * seed * cmath.exp(2j * math.pi * k / n) for k in range(n)]
    for _ in range(max_iter):
        biggest = 0.0
        for i in range(n):
            zi = roots[i]
            denom = 1.0 + 0j
            for j in range(n):
                if j != i:
                    denom *= zi - roots[j]
            if denom == 0:
                denom = 1e-300
            step = evaluate(zi) / denom
            roots[i] = zi - step
            # relative size: absolute 1e-13 is below double precision for large roots
            biggest = max(biggest, abs(step) / max(1.0, abs(zi)))
        if biggest < tol:
            return roots
    raise RootFindingError(f"simultaneous iteration did not converge in {max_iter} steps")


def _poly_trim(a: list) -> list:
    i = 0
    while i < len(a) - 1 and a[i] == 0:
        i += 1
    return a[i:]


def _poly_divmod(a: list, b: list) -> tuple[list, list]:
    """Exact division of coefficient lists (highest degree first)."""
    a, b = _poly_trim(list(a)), _poly_trim(list(b))
    if len(a) < len(b):
        return [Fraction(0)], a
    q = []
    rem = list(a)
    for _ in range(len(a) - len(b) + 1):
        t = rem[0] / b[0]
        q.append(t)
        rem = [x - t * y for x, y in zip(rem, b + [0] * (len(rem) - len(b)))][1:]
    return q, _poly_trim(rem or [Fraction(0)])


def _poly_monic_gcd(a: list, b: list) -> list:
    a, b = _poly_trim(list(a)), _poly_trim(list(b))
    while b != [0]:
        a, b = b, _poly_divmod(a, b)[1]
    return [x / a[0] for x in a]


def _poly_deriv(a: list) -> list:
    n = len(a) - 1
    return [x * (n - i) for i, x in enumerate(a[:-1])] or [Fraction(0)]


def squarefree_factors(coeffs: list) -> list[tuple[list, int]]:
    """Yun's decomposition over Q: [(g_k, k)] with coeffs = lc * prod g_k^k, each g_k squarefree."""
    a = [Fraction(x) for x in _poly_trim(list(coeffs))]
    a = [x / a[0] for x in a]
    out = []
    g = _poly_monic_gcd(a, _poly_deriv(a))
    w = _poly_divmod(a, g)[0]
    k = 1
    while len(w) > 1:
        y = _poly_monic_gcd(w, g)
        z = _poly_divmod(w, y)[0]
        if len(z) > 1:
            out.append((z, k))
        w, g = y, _poly_divmod(g, y)[0]
        k += 1
    return out


def f3_roots(f: UnicriticalMap, max_iter: int = 500, tol: float = 1e-13) -> list[complex]:
    """Roots of f^3 with multiplicity.

    Repeated roots (when 0 is periodic, e.g. c = 0 or -1) stall the
    simultaneous iteration, so it runs on each squarefree factor.
    """
    coeffs = iterate_poly_coeffs(f, 3)
    factors = squarefree_factors(coeffs)
    radius = _escape_radius(f)
    if len(factors) == 1 and factors[0][1] == 1:
        # expanded coefficients lose precision for large |c|; iterate the map instead
        roots = durand_kerner(coeffs, max_iter, tol, radius, evaluate=lambda z: _iterate_complex(f, z, 3))
    else:
        roots = []
        for g, k in factors:
            roots += durand_kerner(g, max_iter=max_iter, tol=tol, radius=radius) * k
    for beta in roots:
        val = _iterate_complex(f, beta, 3)
        if abs(val) >= 1e-10 * (1 + abs(beta)) ** (f.d**3):
            raise RootFindingError(f"root {beta} has residual {abs(val)}")
    return roots


def _iterate_complex(f: UnicriticalMap, z: complex, n: int) -> complex:
    c = complex(float(f.c))
    for _ in range(n):
        z = z**f.d + c
    return z


def min_distance_to_f3_roots(f: UnicriticalMap, y: Rational) -> tuple[float, float]:
    """(min over roots beta of f^3 of log|y - beta|, (3/d - 2) lambda_inf(c)).

    Returns -inf for the distance when y is itself a root (checked exactly).
    """
    y = Fraction(y)
    bound = (Fraction(3, f.d) - 2) * lambda_v(f.c, ARCH).real_value() + 0.0
    if f.iterate(y, 3) == 0:
        return -math.inf, bound
    roots = f3_roots(f)
    dist = min(abs(complex(float(y)) - b) for b in roots)
    return (math.log(dist) if dist > 0 else -math.inf), bound
