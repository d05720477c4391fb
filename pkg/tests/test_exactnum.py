from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_valuation, trial_factor
from preperlab.exactnum import (
    ARCH,
    VAL_INF,
    LogNumber,
    Place,
    factorize,
    fmt_rat,
    height_scalar,
    height_scalar_log,
    is_prime,
    lambda_v,
    log_abs_v,
    parse_rat,
    product_formula_residual,
    valuation,
)

nonzero_rats = st.builds(Fraction, st.integers(-10**8, 10**8).filter(bool), st.integers(1, 10**8))


@pytest.mark.parametrize("n, expected", [(48, {2: 4, 3: 1}), (1, {}), (10403, {101: 1, 103: 1}), (2, {2: 1})])
def test_factorize_examples(n, expected):
    assert factorize(n) == expected


def test_factorize_rejects_nonpositive():
    with pytest.raises(ValueError):
        factorize(0)


def test_factorize_beyond_trial_division():
    # both factors exceed the trial-division bound
    p, q = 1_000_003, 1_000_033
    assert factorize(p * q) == {p: 1, q: 1}
    assert factorize(p**2 * 12) == {2: 2, 3: 1, p: 2}
    big = (1 << 61) - 1
    assert is_prime(big)
    assert factorize(big * 7) == {7: 1, big: 1}


@given(st.integers(min_value=1, max_value=10**7))
def test_factorize_matches_trial_division(n):
    assert factorize(n) == trial_factor(n)


@given(st.integers(min_value=1, max_value=10**18))
@settings(max_examples=60)
def test_factorize_product_and_primality(n):
    fm = factorize(n)
    assert math.prod(p**e for p, e in fm.items()) == n
    assert all(is_prime(p) and e > 0 for p, e in fm.items())


def test_valuation_examples():
    assert valuation(Fraction(-29, 16), 2) == -4
    assert valuation(0, 7) is VAL_INF
    assert valuation(48, 3) == 1


def test_valuation_sentinel_is_comparison_only():
    assert VAL_INF > 10**100
    assert not VAL_INF < 5
    assert VAL_INF == VAL_INF
    with pytest.raises(TypeError):
        VAL_INF + 1
    with pytest.raises(TypeError):
        -VAL_INF


@given(nonzero_rats, nonzero_rats, st.sampled_from([2, 3, 5, 7, 11, 101]))
def test_valuation_additive(x, y, p):
    assert valuation(x * y, p) == valuation(x, p) + valuation(y, p)
    assert valuation(x, p) == naive_valuation(x, p)


def test_lambda_examples():
    assert lambda_v(Fraction(-29, 16), 2) == LogNumber({2: 4})
    assert lambda_v(Fraction(3, 5), 2) == 0
    assert lambda_v(Fraction(1, 2), ARCH) == 0
    assert lambda_v(Fraction(-29, 16), "inf").real_value() == pytest.approx(math.log(29 / 16))


@given(st.fractions(max_denominator=10**6), st.sampled_from([None, 2, 3, 5, 13]))
def test_lambda_nonnegative(x, p):
    assert lambda_v(x, p).real_value() >= 0


@pytest.mark.parametrize("x", [6, 1, Fraction(-29, 16)])
def test_product_formula_examples(x):
    assert abs(product_formula_residual(x)) < 1e-12


def test_product_formula_rejects_zero():
    with pytest.raises(ValueError):
        product_formula_residual(0)


@given(nonzero_rats)
def test_product_formula_finite_terms_exact(x):
    total = log_abs_v(x, ARCH)
    for p in set(trial_factor(abs(x.numerator))) | set(trial_factor(x.denominator)):
        total = total + log_abs_v(x, Place(p))
    # the finite places contribute exactly -log|x|
    assert total.finite == (-LogNumber.log_of(abs(x))).finite
    assert abs(total.real_value()) < 1e-9


def test_height_examples():
    assert height_scalar(Fraction(-29, 16)) == pytest.approx(math.log(29))
    assert height_scalar(0) == 0
    assert height_scalar(7) == pytest.approx(math.log(7))


@given(nonzero_rats)
def test_height_inversion_symmetric(x):
    assert height_scalar(x) == pytest.approx(height_scalar(1 / x), abs=1e-12)
    assert height_scalar(x) == pytest.approx(math.log(max(abs(x.numerator), x.denominator)), abs=1e-12)


def test_height_log_is_exact_at_finite_places():
    h = height_scalar_log(Fraction(-29, 16))
    assert h.finite == {2: 4}


@given(st.dictionaries(st.sampled_from([2, 3, 5, 7]), st.fractions(max_denominator=50), max_size=4),
       st.dictionaries(st.sampled_from([2, 3, 5, 7]), st.fractions(max_denominator=50), max_size=4),
       st.fractions(max_denominator=30).filter(lambda s: s != 0))
def test_lognumber_exact_linear_algebra(a, b, s):
    x, y = LogNumber(a), LogNumber(b)
    assert (x + y) - y == x
    assert (x * s) / s == x
    assert (x - x).finite_is_zero
    assert all(q != 0 for q in (x + y).finite.values())
    sign = (x - y).finite_sign()
    diff = (x - y).real_value()
    if abs(diff) > 1e-9:
        assert sign == (1 if diff > 0 else -1)


def test_lognumber_json():
    j = LogNumber({2: Fraction(3, 2)}, 0.5).to_json()
    assert j["finite"] == {"2": "3/2"}
    assert j["arch"] == 0.5
    assert j["value"] == pytest.approx(1.5 * math.log(2) + 0.5)


@pytest.mark.parametrize("text, value", [("-29/16", Fraction(-29, 16)), ("7", Fraction(7)), (" 2/4 ", Fraction(1, 2))])
def test_parse_rat(text, value):
    assert parse_rat(text) == value


@pytest.mark.parametrize("text", ["abc", "1/0", "1.5", "", "1//2"])
def test_parse_rat_rejects(text):
    with pytest.raises(ValueError):
        parse_rat(text)


@given(st.fractions(max_denominator=10**6))
def test_rat_round_trip(x):
    s = fmt_rat(x)
    assert parse_rat(s) == x
    assert ("/" in s) == (x.denominator != 1)


def test_place_parse():
    assert Place.parse("inf") == ARCH
    assert Place.parse(None).is_archimedean
    assert Place.parse(5).p == 5
    with pytest.raises(ValueError):
        Place(4)
