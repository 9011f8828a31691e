import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hopmat.stats import EmptySample, Method, RankTestResult, mann_whitney_u


def brute_force_p(n1: int, n2: int, u_obs: int) -> Fraction:
    """Exact two-sided p by enumerating every placement of sample a among the pooled ranks."""
    n = n1 + n2
    counts: dict[int, int] = {}
    for ranks_a in itertools.combinations(range(n), n1):
        # U counts pairs (a, b) with a > b; rank r of a beats r - (a values below it) b values
        u = sum(r - i for i, r in enumerate(ranks_a))
        counts[u] = counts.get(u, 0) + 1
    total = math.comb(n, n1)
    lower = Fraction(sum(c for u, c in counts.items() if u <= u_obs), total)
    upper = Fraction(sum(c for u, c in counts.items() if u >= u_obs), total)
    return min(Fraction(1), 2 * min(lower, upper))


def test_worked_example():
    r = mann_whitney_u([1, 2], [3, 4])
    assert r.u == 0
    assert r.method is Method.EXACT
    assert r.p == pytest.approx(1 / 3, abs=1e-15)
    assert brute_force_p(2, 2, 0) == Fraction(1, 3)


def test_separated_decades():
    r = mann_whitney_u(range(1, 11), range(11, 21))
    assert r.u == 0 and r.method is Method.EXACT
    assert r.p == pytest.approx(2 / math.comb(20, 10), rel=1e-9)
    assert r.significant and r.star == "*"


def test_identical_samples():
    r = mann_whitney_u([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.u == 4.5
    assert r.method is Method.NORMAL_APPROX  # ties force the approximation
    assert r.p == pytest.approx(1.0)
    assert not r.significant and r.star == ""


def test_all_values_tied():
    r = mann_whitney_u([2.0, 2.0], [2.0, 2.0, 2.0])
    assert r.p == 1.0 and r.u == 3.0


def test_large_samples_use_normal_approximation():
    r = mann_whitney_u(np.arange(15.0), np.arange(15.0) + 0.5)
    assert r.method is Method.NORMAL_APPROX


def test_rejects_empty_and_nonfinite():
    with pytest.raises(EmptySample):
        mann_whitney_u([], [1.0])
    with pytest.raises(ValueError):
        mann_whitney_u([math.nan], [1.0])


def test_result_validation():
    with pytest.raises(ValueError):
        RankTestResult(5.0, 0.5, 2, 2, Method.EXACT)
    with pytest.raises(ValueError):
        RankTestResult(1.0, 1.5, 2, 2, Method.EXACT)


def test_exhaustive_agreement_with_enumeration():
    checked = 0
    for n in range(2, 11):
        for n1 in range(1, n):
            n2 = n - n1
            for ranks_a in itertools.combinations(range(n), n1):
                a = [float(r) for r in ranks_a]
                b = [float(r) for r in range(n) if r not in ranks_a]
                res = mann_whitney_u(a, b)
                u_obs = sum(r - i for i, r in enumerate(ranks_a))
                assert res.u == u_obs
                assert res.method is Method.EXACT
                assert res.p == pytest.approx(float(brute_force_p(n1, n2, u_obs)), rel=1e-12, abs=1e-15)
                checked += 1
    assert checked == sum(2**n - 2 for n in range(2, 11))


samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=15)
# integers keep shifted and transformed values exact, so ranks are preserved
int_samples = st.lists(st.integers(-1000, 1000), min_size=1, max_size=15)


def same_result(r0, r1):
    assert (r1.u, r1.method) == (r0.u, r0.method)
    assert r1.p == pytest.approx(r0.p, rel=1e-12)


@given(samples, samples)
def test_antisymmetry(a, b):
    ab, ba = mann_whitney_u(a, b), mann_whitney_u(b, a)
    assert ab.u + ba.u == len(a) * len(b)
    assert ab.p == pytest.approx(ba.p, rel=1e-12)


@given(int_samples, int_samples, st.integers(-10**6, 10**6))
def test_shift_invariance(a, b, c):
    a, b = np.array(a, dtype=float), np.array(b, dtype=float)
    same_result(mann_whitney_u(a, b), mann_whitney_u(a + c, b + c))


@given(int_samples, int_samples)
def test_monotone_transform_invariance(a, b):
    a, b = np.array(a, dtype=float), np.array(b, dtype=float)

    def f(x):
        return x**3 + 5.0 * x  # strictly increasing, exact for these integers

    same_result(mann_whitney_u(a, b), mann_whitney_u(f(a), f(b)))


@given(samples, samples)
def test_result_ranges(a, b):
    r = mann_whitney_u(a, b)
    assert 0 <= r.u <= r.n1 * r.n2
    assert 0.0 <= r.p <= 1.0
