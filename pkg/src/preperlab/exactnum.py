"""Exact rationals, places of Q, valuations and symbolic logarithms.

Rationals are plain :class:`fractions.Fraction` values (always reduced, positive
denominator).  Quantities of the form ``sum q_p log p + a`` are carried as
:class:`LogNumber` so that identities at finite places can be checked exactly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache, total_ordering
from typing import Iterable, Mapping, Union

Rational = Union[int, Fraction]

TRIAL_DIVISION_BOUND = 10**6
# Deterministic for n < 3.3e24; a strong probable-prime test beyond that.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


@total_ordering
class _ValuationInfinity:
    """Sentinel for v_p(0).  Only comparisons are allowed."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "VAL_INF"

    def __str__(self):
        return "inf"

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        if other is self:
            return False
        if isinstance(other, (int, Fraction)):
            return False
        return NotImplemented

    def __hash__(self):
        return hash("VAL_INF")

    def __reduce__(self):
        return (_ValuationInfinity, ())


VAL_INF = _ValuationInfinity()


# ---------------------------------------------------------------------------
# rationals


_RAT_RE = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+))?\s*$")


def parse_rat(text: str | Rational) -> Fraction:
    """Parse ``"a/b"`` or ``"a"``; raises ValueError on anything else."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    m = _RAT_RE.match(text)
    if not m:
        raise ValueError(f"not a rational number: {text!r}")
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) is not None else 1
    if den == 0:
        raise ValueError(f"zero denominator: {text!r}")
    return Fraction(num, den)


def fmt_rat(x: Rational) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def fmt_real(x: float) -> str:
    return f"{x:.12g}"


def log_abs(x: Rational) -> float:
    """log|x| for a nonzero rational, safe for huge numerators/denominators."""
    x = Fraction(x)
    if x == 0:
        raise ValueError("log of zero")
    return math.log(abs(x.numerator)) - math.log(x.denominator)


# ---------------------------------------------------------------------------
# primes and factorization


def _is_probable_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def is_prime(n: int) -> bool:
    return _is_probable_prime(n)


@lru_cache(maxsize=1)
def _small_primes() -> tuple[int, ...]:
    limit = TRIAL_DIVISION_BOUND
    sieve = bytearray([1]) * (limit + 1)
    sieve[0:2] = b"\x00\x00"
    for i in range(2, int(limit**0.5) + 1):
        if sieve[i]:
            sieve[i * i :: i] = bytearray(len(range(i * i, limit + 1, i)))
    return tuple(i for i, flag in enumerate(sieve) if flag)


def _pollard_rho(n: int) -> int:
    """Return a nontrivial factor of the odd composite n (Brent's variant)."""
    for c in range(1, 200):
        y, r, q, g = 2, 1, 1, 1
        x = ys = 2
        m = 128
        while g == 1:
            x = y
            for _ in range(r):
                y = (y * y + c) % n
            k = 0
            while k < r and g == 1:
                ys = y
                for _ in range(min(m, r - k)):
                    y = (y * y + c) % n
                    q = q * abs(x - y) % n
                g = math.gcd(q, n)
                k += m
            r *= 2
        if g == n:
            g = 1
            while g == 1:
                ys = (ys * ys + c) % n
                g = math.gcd(abs(x - ys), n)
        if g != n:
            return g
    raise ArithmeticError(f"pollard rho failed on {n}")


def _factor_large(n: int, out: dict[int, int]) -> None:
    if n == 1:
        return
    if _is_probable_prime(n):
        out[n] = out.get(n, 0) + 1
        return
    f = _pollard_rho(n)
    _factor_large(f, out)
    _factor_large(n // f, out)


@lru_cache(maxsize=65536)
def _factorize_cached(n: int) -> tuple[tuple[int, int], ...]:
    out: dict[int, int] = {}
    rest = n
    checked_prime = False
    for p in _small_primes():
        if p * p > rest:
            break
        if rest % p == 0:
            e = 0
            while rest % p == 0:
                rest //= p
                e += 1
            out[p] = e
            checked_prime = False
        elif p > 1000 and not checked_prime:
            # a large prime cofactor would otherwise cost a full trial pass
            if _is_probable_prime(rest):
                break
            checked_prime = True
    if rest > 1:
        _factor_large(rest, out)
    return tuple(sorted(out.items()))


def factorize(n: int) -> dict[int, int]:
    """Prime factorization of a positive integer as ``{prime: exponent}``."""
    if n < 1:
        raise ValueError(f"factorize needs n >= 1, got {n}")
    return dict(_factorize_cached(int(n)))


def prime_support(x: Rational) -> set[int]:
    """Primes dividing the numerator or denominator of a nonzero rational."""
    x = Fraction(x)
    primes = set(factorize(x.denominator))
    if x.numerator:
        primes |= set(factorize(abs(x.numerator)))
    return primes


# ---------------------------------------------------------------------------
# places and valuations


@dataclass(frozen=True, order=True)
class Place:
    """A place of Q: ``Place(None)`` is the archimedean one, ``Place(p)`` is p-adic."""

    p: int | None = None

    def __post_init__(self):
        if self.p is not None and not is_prime(self.p):
            raise ValueError(f"{self.p} is not prime")

    @property
    def is_archimedean(self) -> bool:
        return self.p is None

    def __str__(self):
        return "inf" if self.p is None else str(self.p)

    @classmethod
    def parse(cls, v: "Place | int | str | None") -> "Place":
        if isinstance(v, Place):
            return v
        if v is None or (isinstance(v, str) and v.lower() in ("inf", "oo", "infinity", "∞")):
            return cls(None)
        return cls(int(v))


ARCH = Place(None)


def valuation(x: Rational, p: int):
    """v_p(x); returns :data:`VAL_INF` for x = 0."""
    x = Fraction(x)
    if x == 0:
        return VAL_INF
    v = 0
    n, d = x.numerator, x.denominator
    while n % p == 0:
        n //= p
        v += 1
    while d % p == 0:
        d //= p
        v -= 1
    return v


def log_abs_v(x: Rational, v: Place) -> "LogNumber":
    """log|x|_v for nonzero x."""
    v = Place.parse(v)
    x = Fraction(x)
    if x == 0:
        raise ValueError("log|0|_v is -infinity")
    if v.is_archimedean:
        return LogNumber(arch=log_abs(x))
    return LogNumber({v.p: -valuation(x, v.p)})


# ---------------------------------------------------------------------------
# symbolic logarithms


def _clean_terms(terms: Mapping[int, Rational] | Iterable) -> dict[int, Fraction]:
    items = terms.items() if isinstance(terms, Mapping) else terms
    out: dict[int, Fraction] = {}
    for p, q in items:
        q = Fraction(q)
        if q:
            out[int(p)] = out.get(int(p), Fraction(0)) + q
    return {p: q for p, q in sorted(out.items()) if q}


@dataclass(frozen=True)
class LogNumber:
    """``arch + sum(q_p * log p)`` with exact rational q_p."""

    finite: dict[int, Fraction] = field(default_factory=dict)
    arch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "finite", _clean_terms(self.finite))
        object.__setattr__(self, "arch", float(self.arch))

    @classmethod
    def zero(cls) -> "LogNumber":
        return cls()

    @classmethod
    def log_of(cls, x: Rational) -> "LogNumber":
        """log x for a positive rational, kept fully symbolic."""
        x = Fraction(x)
        if x <= 0:
            raise ValueError("log_of needs a positive rational")
        terms = dict(factorize(x.numerator))
        for p, e in factorize(x.denominator).items():
            terms[p] = terms.get(p, 0) - e
        return cls(terms)

    def real_value(self) -> float:
        return self.arch + sum(float(q) * math.log(p) for p, q in self.finite.items())

    __float__ = real_value

    def finite_value(self) -> float:
        return sum(float(q) * math.log(p) for p, q in self.finite.items())

    @property
    def finite_is_zero(self) -> bool:
        return not self.finite

    def is_exact(self) -> bool:
        return self.arch == 0.0

    def finite_sign(self) -> int:
        """Exact sign of the finite part."""
        if not self.finite:
            return 0
        approx = self.finite_value()
        scale = sum(abs(float(q)) * math.log(p) for p, q in self.finite.items())
        if abs(approx) > 1e-9 * scale:
            return 1 if approx > 0 else -1
        # too close to call in floating point: compare integer prime powers
        den = math.lcm(*(q.denominator for q in self.finite.values()))
        up, down = 1, 1
        for p, q in self.finite.items():
            e = q * den
            if e > 0:
                up *= p ** int(e)
            else:
                down *= p ** int(-e)
        return (up > down) - (up < down)

    def coefficient(self, p: int) -> Fraction:
        return self.finite.get(p, Fraction(0))

    def __add__(self, other):
        if isinstance(other, LogNumber):
            terms = dict(self.finite)
            for p, q in other.finite.items():
                terms[p] = terms.get(p, Fraction(0)) + q
            return LogNumber(terms, self.arch + other.arch)
        if isinstance(other, (int, float)) and not isinstance(other, bool):
            return LogNumber(self.finite, self.arch + other)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return LogNumber({p: -q for p, q in self.finite.items()}, -self.arch)

    def __sub__(self, other):
        if isinstance(other, LogNumber):
            return self + (-other)
        if isinstance(other, (int, float)):
            return LogNumber(self.finite, self.arch - other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scale):
        if isinstance(scale, (int, Fraction)):
            s = Fraction(scale)
            return LogNumber({p: q * s for p, q in self.finite.items()}, self.arch * float(s))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scale):
        if isinstance(scale, (int, Fraction)):
            return self * (1 / Fraction(scale))
        return NotImplemented

    def __eq__(self, other):
        if isinstance(other, LogNumber):
            return self.finite == other.finite and self.arch == other.arch
        if isinstance(other, (int, float)) and other == 0:
            return not self.finite and self.arch == 0.0
        return NotImplemented

    def __hash__(self):
        return hash((tuple(self.finite.items()), self.arch))

    def __repr__(self):
        parts = [f"{fmt_rat(q)}*log({p})" for p, q in self.finite.items()]
        if self.arch or not parts:
            parts.append(repr(self.arch))
        return "LogNumber(" + " + ".join(parts) + ")"

    def to_json(self) -> dict:
        return {
            "finite": {str(p): fmt_rat(q) for p, q in self.finite.items()},
            "arch": self.arch,
            "value": self.real_value(),
        }


# ---------------------------------------------------------------------------
# local heights


def lambda_v(x: Rational, v: Place | int | str) -> LogNumber:
    """lambda_v(x) = log max(1, |x|_v); exact at finite places."""
    v = Place.parse(v)
    x = Fraction(x)
    if v.is_archimedean:
        if abs(x) <= 1:
            return LogNumber()
        return LogNumber(arch=log_abs(x))
    if x == 0:
        return LogNumber()
    return LogNumber({v.p: max(0, -valuation(x, v.p))})


def product_formula_residual(x: Rational) -> float:
    """sum over all places of log|x|_v; zero up to float error in the archimedean term."""
    x = Fraction(x)
    if x == 0:
        raise ValueError("product formula needs x != 0")
    total = log_abs_v(x, ARCH)
    for p in sorted(prime_support(x)):
        total = total + log_abs_v(x, Place(p))
    return total.real_value()


def height_scalar(x: Rational) -> float:
    """Naive height of (x : 1), i.e. log max(|num|, den)."""
    return height_scalar_log(x).real_value()


def height_scalar_log(x: Rational) -> LogNumber:
    """Height of (x : 1) by its place decomposition; exact finite part."""
    x = Fraction(x)
    out = lambda_v(x, ARCH)
    for p, e in factorize(x.denominator).items():
        out = out + LogNumber({p: e})
    return out


def height_bound_int(x: Rational) -> int:
    """H(x) = max(|num|, den), so that height_scalar(x) = log H(x)."""
    x = Fraction(x)
    return max(abs(x.numerator), x.denominator)
