import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerlab import diffcore as dc
from finslerlab.errors import DomainEvalError


def test_second_derivative_of_square():
    f = lambda xs, ys: ys[0] * ys[0]
    assert dc.derive(f, [0.0, 0.0], [1.0, 2.0], (2, 2)) == pytest.approx(2.0)


def test_bilinear_mixed_partial():
    f = lambda xs, ys: xs[0] * ys[1]
    # variables are ordered x1, x2, y1, y2; slots 0 and 3
    assert dc.derive(f, [3.0, 0.0], [0.0, 5.0], (0, 3)) == pytest.approx(1.0)


def test_third_derivative_of_quadratic_vanishes():
    f = lambda xs, ys: ys[0] * ys[0] + ys[1] * ys[1]
    assert dc.derive(f, [0.0, 0.0], [1.0, 2.0], (2, 2, 2)) == 0.0


def test_mixed_partials_permutation_invariant():
    f = lambda xs, ys: dc.exp(xs[0] * ys[0]) * dc.sin(xs[1] + ys[1] * ys[1])
    pt = ([0.4, 0.7], [1.1, -0.3])
    base = dc.derive(f, *pt, (0, 1, 2, 3))
    for perm in [(1, 0, 2, 3), (3, 2, 1, 0), (2, 0, 3, 1)]:
        assert dc.derive(f, *pt, perm) == pytest.approx(base, rel=1e-12)


def test_analytic_composition_exact():
    f = lambda xs, ys: dc.exp(xs[0]) * dc.sqrt(ys[0])
    val = dc.derive(f, [0.3], [1.7], (0, 0, 1))
    truth = math.exp(0.3) * 0.5 * 1.7 ** (-0.5)
    assert val == pytest.approx(truth, rel=1e-14)


def test_order_cap_enforced():
    f = lambda xs, ys: ys[0] * ys[0]
    with pytest.raises(ValueError):
        dc.derive(f, [0.0], [1.0], (1, 1, 1, 1, 1))


def test_value_matches_plain_evaluation():
    f = lambda xs, ys: dc.sqrt(xs[0] * xs[0] + ys[0] * ys[0]) + dc.cos(ys[0])
    space = dc.taylor_space(2, 4)
    xs, ys = space.lift_point([0.6], [0.8])
    jet = f(xs, ys)
    assert jet.value == pytest.approx(math.sqrt(1.0) + math.cos(0.8), rel=1e-15)


def test_domain_error_on_sqrt_of_negative():
    f = lambda xs, ys: dc.sqrt(xs[0] - 10.0)
    with pytest.raises(DomainEvalError):
        dc.derive(f, [1.0], [1.0], (0,))


def test_fd_check_cubic():
    f = lambda xs, ys: ys[0] * ys[0] * ys[0]
    ad, fd, rel = dc.fd_check(f, [0.0], [2.0], (1,), h=1e-4)
    assert ad == pytest.approx(12.0, rel=1e-14)
    assert rel < 1e-7


def test_fd_check_exponential():
    f = lambda xs, ys: dc.exp(xs[0])
    ad, fd, rel = dc.fd_check(f, [0.0], [1.0], (0,))
    assert ad == pytest.approx(1.0, rel=1e-14)
    assert rel < 1e-7


def test_fd_check_constant():
    f = lambda xs, ys: 7.5
    ad, fd, rel = dc.fd_check(f, [0.0], [1.0], (1,))
    assert ad == 0.0
    assert abs(fd) < 1e-12


@st.composite
def _polys(draw):
    # sparse integer polynomial in (x1, y1, y2): list of (coef, ex, e1, e2)
    terms = draw(st.lists(
        st.tuples(st.integers(-4, 4), st.integers(0, 2), st.integers(0, 2),
                  st.integers(0, 2)),
        min_size=1, max_size=4))
    return terms


def _poly_eval(terms, x, y1, y2):
    return sum(c * x**ex * y1**e1 * y2**e2 for c, ex, e1, e2 in terms)


def _poly_diff(terms, var):
    out = []
    for c, ex, e1, e2 in terms:
        e = [ex, e1, e2]
        if e[var] > 0:
            c2 = c * e[var]
            e[var] -= 1
            out.append((c2, *e))
    return out


@settings(max_examples=60, deadline=None)
@given(_polys(), _polys())
def test_product_rule_exact_on_polynomials(p, q):
    """d(pq) = p dq + q dp, to machine precision, via the Taylor product."""

    def f(xs, ys):
        pv = sum(c * xs[0]**ex * ys[0]**e1 * ys[1]**e2 for c, ex, e1, e2 in p)
        qv = sum(c * xs[0]**ex * ys[0]**e1 * ys[1]**e2 for c, ex, e1, e2 in q)
        return pv * qv

    pt_x, pt_y = [0.5, 0.0], [1.25, -0.75]
    for var, slot in ((0, 0), (1, 2), (2, 3)):
        got = dc.derive(f, pt_x, pt_y, (slot,))
        dp, dq = _poly_diff(p, var), _poly_diff(q, var)
        want = (_poly_eval(dp, 0.5, 1.25, -0.75) * _poly_eval(q, 0.5, 1.25, -0.75)
                + _poly_eval(p, 0.5, 1.25, -0.75) * _poly_eval(dq, 0.5, 1.25, -0.75))
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 3))
def test_partial_extraction_matches_monomial(e1, e2):
    """Differentiating y1^e1 y2^e2 to exactly (e1, e2) leaves e1! e2!."""
    if e1 + e2 > 4:
        return

    def f(xs, ys):
        return ys[0]**e1 * ys[1]**e2

    got = dc.derive(f, [0.0, 0.0], [1.3, 0.7], (2,) * e1 + (3,) * e2)
    assert got == pytest.approx(math.factorial(e1) * math.factorial(e2),
                                rel=1e-12)
