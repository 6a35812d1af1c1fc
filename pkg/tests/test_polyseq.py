import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st

from wickbench.polyseq import (IDENTITY_TAGS, MPoly, PolySeq, consistency_nullspace,
                               expansion_coefficient, hermite_q, hermite_seq, laguerre_lambda,
                               laguerre_seq, monomial_seq, umbral_compose, umbral_inverse,
                               vandermonde_coeffs, verify_identity)

x, u = MPoly.variables(2)


def as_mpoly(p):
    return MPoly(p.terms)


def test_hermite_q_small_cases():
    assert as_mpoly(hermite_q(4)) == x ** 4 - 6 * x ** 2 * u + 3 * u ** 2
    assert as_mpoly(hermite_q(0)) == MPoly.const(1)
    assert as_mpoly(hermite_q(1)) == x
    assert hermite_q(4)(Fraction(2), Fraction(1)) == 16 - 24 + 3


def test_hermite_q_matches_recurrence_at_unit_variance():
    # H_{n+1} = x H_n - n H_{n-1}, built independently in one variable
    h = [{0: 1}, {1: 1}]
    for n in range(1, 6):
        nxt = {k + 1: c for k, c in h[n].items()}
        for k, c in h[n - 1].items():
            nxt[k] = nxt.get(k, 0) - n * c
        h.append({k: c for k, c in nxt.items() if c})
    for n in range(7):
        seq = hermite_seq(1, 6)
        assert seq.rows[n] == {k: Fraction(c) for k, c in h[n].items()}


def test_laguerre_lambda_small_cases():
    assert as_mpoly(laguerre_lambda(1)) == x
    assert as_mpoly(laguerre_lambda(2)) == x ** 2 - 2 * x * u
    assert laguerre_seq(1, 3).rows[3] == {3: 1, 2: -6, 1: 6}


def test_neutral_element_and_inverse_examples():
    P = hermite_seq(Fraction(3, 7), 8)
    e = monomial_seq(8)
    assert umbral_compose(P, e) == P and umbral_compose(e, P) == P
    assert umbral_inverse(e) == e
    assert umbral_inverse(hermite_seq(1, 10)) == hermite_seq(-1, 10)
    assert umbral_inverse(laguerre_seq(1, 10)) == laguerre_seq(-1, 10)
    assert umbral_compose(hermite_seq(Fraction(5, 2), 10), hermite_seq(Fraction(-5, 2), 10)) == monomial_seq(10)


def test_compose_rejects_mismatched_caps():
    with pytest.raises(ValueError):
        umbral_compose(monomial_seq(3), monomial_seq(4))


int_rows = st.integers(0, 6).flatmap(
    lambda cap: st.tuples(*[st.tuples(st.lists(st.integers(-4, 4), min_size=n, max_size=n),
                                      st.integers(1, 4) | st.integers(-4, -1))
                            for n in range(cap + 1)]))


def to_seq(spec):
    return PolySeq.from_rows([lo + [d] for lo, d in spec])


@given(int_rows, int_rows, int_rows)
def test_composition_is_associative(a, b, c):
    cap = min(len(a), len(b), len(c)) - 1
    P, R, S = (to_seq(s[:cap + 1]) for s in (a, b, c))
    assert umbral_compose(umbral_compose(P, R), S) == umbral_compose(P, umbral_compose(R, S))


@given(int_rows)
def test_inverse_is_two_sided(a):
    P = to_seq(a)
    e = monomial_seq(P.cap)
    Pi = umbral_inverse(P)
    assert umbral_compose(P, Pi) == e and umbral_compose(Pi, P) == e


rationals = st.fractions(min_value=-10, max_value=10, max_denominator=12)


@given(rationals, rationals)
def test_one_parameter_subgroups(u1, u2):
    assert umbral_compose(hermite_seq(u1, 8), hermite_seq(u2, 8)) == hermite_seq(u1 + u2, 8)
    assert umbral_compose(laguerre_seq(u1, 8), laguerre_seq(u2, 8)) == laguerre_seq(u1 + u2, 8)


@given(rationals, rationals, rationals, st.integers(0, 8))
def test_change_of_variance_pointwise(xv, u1, u2, n):
    # Q_n(x, u1 + u2) = sum_k C(n,2k) Q_{n-2k}(x, u1) Q_{2k}(0, u2)
    lhs = hermite_q(n)(xv, u1 + u2)
    rhs = sum(math.comb(n, m) * hermite_q(n - m)(xv, u1) * hermite_q(m)(Fraction(0), u2)
              for m in range(0, n + 1, 2))
    assert lhs == rhs


@pytest.mark.parametrize("tag", IDENTITY_TAGS)
def test_verify_identity_passes(tag):
    rep = verify_identity(tag, 6)
    assert rep.passed and rep.first_failure is None
    assert rep.to_json()["pass"] is True


def test_verify_identity_examples():
    assert verify_identity("change_var", 2).per_n[2]
    assert verify_identity("combi", 3).passed
    assert verify_identity("reexp_laguerre", 6).passed
    with pytest.raises(KeyError):
        verify_identity("nope", 3)
    with pytest.raises(ValueError):
        verify_identity("binomial", 0)


def test_nullspace_closed_forms_and_nesting():
    h8 = consistency_nullspace("hermite", 8)
    assert len(h8) == 1
    assert h8[0][1] == Fraction(-1, 6) and h8[0][2] == Fraction(1, 40)
    for k, a in enumerate(h8[0]):
        assert a == Fraction((-1) ** k, 2 ** (k + 1) * math.factorial(k)) / Fraction(2 * k + 1, 2)
    l8 = consistency_nullspace("laguerre", 8)
    assert len(l8) == 1 and l8[0][1] == Fraction(-1, 2)
    h2 = consistency_nullspace("hermite", 2)
    assert h2[0] == h8[0][:3]
    with pytest.raises(ValueError):
        consistency_nullspace("hermite", 1)


def test_vandermonde_examples():
    with mpmath.workdps(60):
        c0, c1 = vandermonde_coeffs((1, 2), 1)
        assert abs(c0 - 2) < mpmath.mpf(10) ** -40
        assert abs(c1 + 2 * mpmath.sqrt(2)) < mpmath.mpf(10) ** -40
        assert vandermonde_coeffs((1,), 0)[0] == 1
        al = (1, 2, 4)
        c = vandermonde_coeffs(al, 2)
        for k in range(3):
            res = sum(ci * mpmath.mpf(a) ** (-(k + mpmath.mpf(1) / 2)) for ci, a in zip(c, al))
            assert abs(res - (1 if k == 2 else 0)) < mpmath.mpf(10) ** -25
    with pytest.raises(ValueError):
        vandermonde_coeffs((1, 3, 2), 2)


def test_expansion_coefficients():
    assert expansion_coefficient(0).rational == 2
    assert expansion_coefficient(1).rational == Fraction(-1, 3)
    assert expansion_coefficient(3).rational == Fraction(-1, 168)
    assert abs(float(expansion_coefficient(0)) - 2 / math.sqrt(2 * math.pi)) < 1e-15
