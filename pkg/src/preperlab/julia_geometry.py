"""Ultrametric geometry of rational preperiodic points at a bad prime p not dividing d.

At such a prime the filled Julia set of z^d + c sits inside a d-ary tree of
closed disks: level m consists of d^m disks of radius |c|_p^(1/d - m(d-1)/d).
Everything here is exact; a distance or capacity is stored as the rational
exponent q in |c|_p^q, i.e. as a multiple of lambda_p(c) = log|c|_p.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .dynamics import UnicriticalMap
from .exactnum import (
    ARCH,
    VAL_INF,
    LogNumber,
    Place,
    Rational,
    factorize,
    fmt_rat,
    lambda_v,
    log_abs_v,
    valuation,
)


PRECONDITION = "a bad prime p with p not dividing d and d dividing v_p(c)"


class PreconditionError(ValueError):
    """The prime is not bad, divides d, or d does not divide v_p(c)."""


def check_prime(f: UnicriticalMap, p: int) -> int:
    """Validate (f, p) for the disk-tree picture and return v_p(c)."""
    if p not in f.bad_places:
        raise PreconditionError(f"p = {p} is not a bad prime of {f}; need {PRECONDITION}")
    if f.d % p == 0:
        raise PreconditionError(f"p = {p} divides d = {f.d}; need {PRECONDITION}")
    vc = valuation(f.c, p)
    if vc % f.d:
        raise PreconditionError(f"v_{p}(c) = {vc} not divisible by d = {f.d}; need {PRECONDITION}")
    return vc


def radius_exponent(d: int, m: int) -> Fraction:
    """Exponent e_m with r_m = |c|_p^e_m."""
    if m < 0:
        raise ValueError("level must be >= 0")
    return Fraction(1, d) - Fraction(m * (d - 1), d)


@dataclass(frozen=True)
class DiskLevel:
    d: int
    m: int

    @property
    def radius_exponent(self) -> Fraction:
        return radius_exponent(self.d, self.m)

    @property
    def fundamental_modulus(self) -> Fraction:
        return Fraction(self.d - 1, self.d)

    def radius_valuation(self, vc: int) -> Fraction:
        """Valuation threshold: |x| <= r_m iff v_p(x) >= this."""
        return self.radius_exponent * vc


# ---------------------------------------------------------------------------
# pairwise valuations


@dataclass(frozen=True)
class ValMatrix:
    points: tuple[Fraction, ...]
    p: int
    entries: tuple[tuple, ...]

    def __len__(self):
        return len(self.points)

    def off_diagonal(self):
        n = len(self.points)
        for i in range(n):
            for j in range(i + 1, n):
                yield i, j, self.entries[i][j]

    def is_ultrametric(self) -> bool:
        n = len(self.points)
        e = self.entries
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if e[i][k] < min(e[i][j], e[j][k]):
                        return False
        return True


def _distinct(T: Iterable[Rational]) -> list[Fraction]:
    pts = [Fraction(z) for z in T]
    if len(set(pts)) != len(pts):
        raise ValueError("points must be pairwise distinct")
    return pts


def pairwise_valuation_matrix(T: Iterable[Rational], p: int) -> ValMatrix:
    pts = _distinct(T)
    n = len(pts)
    rows = [[VAL_INF] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            rows[i][j] = rows[j][i] = valuation(pts[i] - pts[j], p)
    vm = ValMatrix(tuple(pts), p, tuple(tuple(r) for r in rows))
    if n <= 60:
        assert vm.is_ultrametric(), "ultrametric inequality failed"
    return vm


# ---------------------------------------------------------------------------
# quantized distances and clusters


@dataclass(frozen=True)
class QuantizationResult:
    p: int
    vp_c: int
    k_indices: dict = field(default_factory=dict)  # (z_i, z_j) -> k
    violations: list = field(default_factory=list)  # (z_i, z_j, v)

    @property
    def passes(self) -> bool:
        return not self.violations


def quantization_check(f: UnicriticalMap, T: Iterable[Rational], p: int) -> QuantizationResult:
    """Solve v_p(z_i - z_j) = (1/d - k(d-1)/d) v_p(c) for k on every pair."""
    vc = check_prime(f, p)
    d = f.d
    vm = pairwise_valuation_matrix(T, p)
    ks, bad = {}, []
    for i, j, v in vm.off_diagonal():
        k = Fraction(vc - d * v, vc * (d - 1))
        pair = (vm.points[i], vm.points[j])
        if k.denominator == 1 and k >= 0:
            ks[pair] = int(k)
        else:
            bad.append((*pair, v))
    return QuantizationResult(p, vc, ks, bad)


def cluster_at_level(f: UnicriticalMap, T: Iterable[Rational], p: int, m: int) -> list[list[Fraction]]:
    """Blocks of points lying in a common level-m disk, each sorted, ordered by first element."""
    vc = check_prime(f, p)
    pts = sorted(_distinct(T))
    thresh = DiskLevel(f.d, m).radius_valuation(vc)
    blocks: list[list[Fraction]] = []
    # closed balls in an ultrametric space: comparing against any representative suffices
    for z in pts:
        for b in blocks:
            if valuation(z - b[0], p) >= thresh:
                b.append(z)
                break
        else:
            blocks.append([z])
    return blocks


def level2_counts(f: UnicriticalMap, T: Iterable[Rational], p: int) -> list[int]:
    """Point counts for the d^2 level-2 disks, in tree order.

    Slot i*d + j is the j-th child of the i-th level-1 disk; disks without
    points are padded with zero.  Which physical disk gets which slot is
    arbitrary, but siblings stay adjacent, which is all the energy sees.
    """
    d = f.d
    pts = _distinct(T)
    counts = [0] * (d * d)
    parents = cluster_at_level(f, pts, p, 1)
    if len(parents) > d:
        raise AssertionError(f"{len(parents)} level-1 clusters exceed d = {d}")
    for i, parent in enumerate(parents):
        kids = cluster_at_level(f, parent, p, 2)
        if len(kids) > d:
            raise AssertionError(f"{len(kids)} level-2 clusters under one parent exceed d = {d}")
        for j, kid in enumerate(kids):
            counts[i * d + j] = len(kid)
    return counts


# ---------------------------------------------------------------------------
# equidistribution


@dataclass(frozen=True)
class EquidistributionResult:
    passes: bool
    eps: Fraction
    lower: Fraction
    upper: Fraction
    margins: list  # per bucket: min(count - lower, upper - count)


def epsilon_equidistribution(counts: Sequence[int], n: int, eps) -> EquidistributionResult:
    """Check (1-eps) n/N < b_i < (1+eps) n/N for the N = len(counts) buckets."""
    if sum(counts) != n:
        raise ValueError(f"counts sum to {sum(counts)}, not n = {n}")
    e = eps if isinstance(eps, Fraction) else Fraction(str(eps))
    N = len(counts)
    lower = (1 - e) * n / N
    upper = (1 + e) * n / N
    margins = [min(b - lower, upper - b) for b in counts]
    return EquidistributionResult(all(x > 0 for x in margins), e, lower, upper, margins)


# ---------------------------------------------------------------------------
# transfinite diameters


def transfinite_diameter(T: Iterable[Rational], v: Place | int | str | None) -> LogNumber:
    """log d_v(T) = (1/(n(n-1))) sum_{i != j} log|z_i - z_j|_v."""
    pts = _distinct(T)
    n = len(pts)
    if n < 2:
        raise ValueError("transfinite diameter needs at least two points")
    place = Place.parse(v)
    total = LogNumber.zero()
    for i in range(n):
        for j in range(i + 1, n):
            total = total + log_abs_v(pts[i] - pts[j], place)
    return total * Fraction(2, n * (n - 1))


def global_diameter_residual(T: Iterable[Rational]) -> float:
    """Sum of log d_v(T) over all places of Q; zero by the product formula."""
    pts = _distinct(T)
    if len(pts) < 2:
        raise ValueError("transfinite diameter needs at least two points")
    primes: set[int] = set()
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            x = pts[i] - pts[j]
            primes |= factorize(abs(x.numerator)).keys() | factorize(x.denominator).keys()
    total = transfinite_diameter(pts, ARCH)
    for p in sorted(primes):
        total = total + transfinite_diameter(pts, p)
    return float(total)


def log_dv_over_lambda(f: UnicriticalMap, T: Iterable[Rational], p: int) -> Fraction:
    """log d_p(T) / lambda_p(c), exactly."""
    vc = check_prime(f, p)
    pts = _distinct(T)
    n = len(pts)
    if n < 2:
        raise ValueError("transfinite diameter needs at least two points")
    s = sum(valuation(pts[i] - pts[j], p) for i in range(n) for j in range(i + 1, n))
    # log|x|_p = -v log p and lambda = -vc log p
    return Fraction(2 * s, n * (n - 1) * vc)


# ---------------------------------------------------------------------------
# weighted capacities on the disk tree


@dataclass(frozen=True)
class WeightVector:
    d: int
    level: int
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        w = tuple(Fraction(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if self.level < 2:
            raise ValueError("weight vectors live at level >= 2")
        if len(w) != self.d**self.level:
            raise ValueError(f"need {self.d ** self.level} weights, got {len(w)}")
        if any(x < 0 or x > 1 for x in w):
            raise ValueError("weights must lie in [0, 1]")
        if sum(w) != 1:
            raise ValueError(f"weights sum to {sum(w)}, not 1")

    @classmethod
    def uniform(cls, d: int, level: int = 2) -> "WeightVector":
        n = d**level
        return cls(d, level, (Fraction(1, n),) * n)

    @classmethod
    def from_counts(cls, d: int, counts: Sequence[int]) -> "WeightVector":
        n = sum(counts)
        return cls(d, 2, tuple(Fraction(c, n) for c in counts))

    def block_sums(self, level: int) -> list[Fraction]:
        """Total weight in each ancestor disk at the given level."""
        size = self.d ** (self.level - level)
        w = self.weights
        return [sum(w[i : i + size]) for i in range(0, len(w), size)]

    def square_sum(self, level: int) -> Fraction:
        return sum((x * x for x in self.block_sums(level)), Fraction(0))


def refine_weights(k2: WeightVector, m: int) -> WeightVector:
    """Push the weights down to level m, splitting each disk's mass evenly among its children."""
    if m < k2.level:
        raise ValueError(f"cannot refine level {k2.level} to level {m}")
    w = list(k2.weights)
    d = k2.d
    for _ in range(m - k2.level):
        w = [x / d for x in w for _ in range(d)]
    return WeightVector(d, m, tuple(w))


def log_gamma_coefficient(w: WeightVector) -> Fraction:
    """log gamma of the discrete measure on the level-m disk points, in units of lambda.

    sum_{i,j} w_i w_j e(anc(i, j)), where anc is the deepest common ancestor
    level (m on the diagonal).  Grouping pairs by that level and writing S_l
    for the sum of squared block masses at level l gives
    sum_{l<m} e_l (S_l - S_{l+1}) + e_m S_m.
    """
    d, m = w.d, w.level
    S = [w.square_sum(l) for l in range(m + 1)]
    total = sum((radius_exponent(d, l) * (S[l] - S[l + 1]) for l in range(m)), Fraction(0))
    return total + radius_exponent(d, m) * S[m]


@dataclass(frozen=True)
class TreeMeasure:
    weight_vector: WeightVector
    prime: int
    map: UnicriticalMap

    def __post_init__(self):
        if self.weight_vector.d != self.map.d:
            raise ValueError("weight vector degree does not match the map")
        check_prime(self.map, self.prime)

    @property
    def lambda_c(self) -> LogNumber:
        return lambda_v(self.map.c, self.prime)


def energy(tm: TreeMeasure) -> Fraction:
    """Energy I(mu) = q * lambda_p(c); returns q."""
    return -log_gamma_coefficient(tm.weight_vector)


def telescoping_increment(k2: WeightVector, m: int) -> Fraction:
    """log gamma at level m minus log gamma at level m+1, in units of lambda.

    Equals (d-1)/d^2 times the level-m square sum, so it depends on how
    concentrated the weights are, not only on m.
    """
    return log_gamma_coefficient(refine_weights(k2, m)) - log_gamma_coefficient(refine_weights(k2, m + 1))


def telescoping_constant(d: int, m: int) -> Fraction:
    """Weight-independent step 1/d^(m+1) - 1/d^(m+2)."""
    return Fraction(1, d ** (m + 1)) - Fraction(1, d ** (m + 2))


def telescoping_check(k2: WeightVector, f: UnicriticalMap, p: int, m: int) -> Fraction:
    """Exact residual of the level-m step against the weight-independent constant."""
    TreeMeasure(k2, p, f)
    if m < 2:
        raise ValueError("level must be >= 2")
    return telescoping_increment(k2, m) - telescoping_constant(k2.d, m)


def gamma_limit_exponent(k2: WeightVector) -> Fraction:
    """Exponent q with gamma(mu_k) = |c|_p^q for the limit measure of the refinements.

    The level-m steps form a geometric series with ratio 1/d, summing to
    S_2/d where S_2 is the level-2 square sum.
    """
    if k2.level != 2:
        raise ValueError("expected a level-2 weight vector")
    return log_gamma_coefficient(k2) - k2.square_sum(2) / k2.d


def gamma_limit(k2: WeightVector, f: UnicriticalMap, p: int) -> Fraction:
    TreeMeasure(k2, p, f)
    return gamma_limit_exponent(k2)


# ---------------------------------------------------------------------------
# slices of bad primes


def slice_fraction(f: UnicriticalMap, S: Iterable[int], Sigma: Iterable[int] | None = None) -> float:
    """Share of sum_{p in Sigma} lambda_p(c) carried by the primes in S."""
    if Sigma is None:
        Sigma = [p for p in f.bad_places if f.d % p]
    sigma = set(Sigma)
    s = set(S)
    if not s <= sigma:
        raise ValueError(f"{sorted(s - sigma)} not in the ambient set {sorted(sigma)}")
    top = sum((lambda_v(f.c, p) for p in sorted(s)), LogNumber.zero())
    bottom = sum((lambda_v(f.c, p) for p in sorted(sigma)), LogNumber.zero())
    if bottom.finite_is_zero:
        raise ValueError("ambient set carries no weight")
    return top.finite_value() / bottom.finite_value()


# ---------------------------------------------------------------------------
# reports


def empirical_weights(f: UnicriticalMap, T: Iterable[Rational], p: int) -> WeightVector:
    return WeightVector.from_counts(f.d, level2_counts(f, T, p))


def idealization_margin(f: UnicriticalMap, T: Iterable[Rational], p: int) -> Fraction:
    """log d_p(T)/lambda_p(c) minus the limit capacity exponent of T's level-2 distribution."""
    pts = _distinct(T)
    return log_dv_over_lambda(f, pts, p) - gamma_limit(empirical_weights(f, pts, p), f, p)


def geometry_report(f: UnicriticalMap, T: Iterable[Rational], p: int, eps=0.5, levels: Sequence[int] = (0, 1, 2, 3)) -> dict:
    pts = sorted(_distinct(T))
    vc = check_prime(f, p)
    q = quantization_check(f, pts, p)
    counts = level2_counts(f, pts, p) if pts else [0] * f.d**2
    eq = epsilon_equidistribution(counts, len(pts), eps)
    out = {
        "p": p,
        "vp_c": vc,
        "quantization": "pass" if q.passes else [[fmt_rat(a), fmt_rat(b), v] for a, b, v in q.violations],
        "clusters": {str(m): [[fmt_rat(z) for z in b] for b in cluster_at_level(f, pts, p, m)] for m in levels},
        "equid": {"eps": float(eq.eps), "counts": counts, "passes": eq.passes},
        "log_dv_over_lambda": None,
        "idealization_margin": None,
    }
    if len(pts) >= 2:
        out["log_dv_over_lambda"] = float(log_dv_over_lambda(f, pts, p))
        out["idealization_margin"] = float(idealization_margin(f, pts, p))
    return out
