import math
from fractions import Fraction

import numpy as np
import pytest

from diophlab.errors import ValidationError
from diophlab.problem import ApproximationProblem, validate
from diophlab.theory import (
    TheoryConstants,
    constants,
    divisor_sum_check,
    inner_divisor_sum,
    max_pq_partial_sum,
    n_solutions,
    n_solutions_brute,
    overlap_length,
    sigma2_series,
    theta_infinity,
    zeta,
)

P21 = validate(
    ApproximationProblem(m=2, n=1, weights=(Fraction(1, 2), Fraction(1, 2)), thetas=(1.0, 1.0))
)
P22 = validate(ApproximationProblem(m=2, n=2, weights=(1, 1), thetas=(1.0, 1.0)))


def _zeta3_reference():
    # independent oracle: partial sum to 10^6 plus Euler-Maclaurin tail head
    K = 10**6
    terms = [k**-3.0 for k in range(1, K)]
    return math.fsum(terms) + K**-2.0 / 2.0 + 0.5 * K**-3.0 + 3.0 / 12.0 * K**-4.0


def test_zeta_closed_forms():
    assert zeta(2.0) == pytest.approx(math.pi**2 / 6.0, abs=1e-12)
    assert zeta(4.0) == pytest.approx(math.pi**4 / 90.0, abs=1e-12)
    assert zeta(3.0) == pytest.approx(_zeta3_reference(), abs=1e-12)


def test_zeta_rejects_pole():
    with pytest.raises(ValidationError):
        zeta(1.0)
    with pytest.raises(ValidationError):
        zeta(0.5)


def test_constants_values():
    c = constants(P21)
    assert c.C == pytest.approx(8.0, rel=1e-14)
    expected = 16.0 * (2.0 * zeta(2.0) / zeta(3.0) - 1.0)
    assert c.sigma2 == pytest.approx(expected, rel=1e-13)
    assert c.sigma2 == pytest.approx(2.0 * c.C * c.zeta_ratio, rel=1e-14)
    assert not c.m_warning


def test_constants_guards():
    p = validate(ApproximationProblem(m=1, n=1, weights=(1,), thetas=(1.0,)))
    with pytest.raises(ValidationError, match="m \\+ n >= 3"):
        constants(p)
    p12 = validate(ApproximationProblem(m=1, n=2, weights=(2,), thetas=(1.0,)))
    c = constants(p12)
    assert c.m_warning  # computed, but the CLT statement needs m >= 2
    with pytest.raises(ValidationError):
        TheoryConstants(C=-1.0, sigma2=1.0, zeta_ratio=1.0)


def test_overlap_length_examples():
    assert overlap_length(0, 1, 1) == 1.0
    assert overlap_length(5, 1, 1) == 0.0
    assert overlap_length(1, 2, 1) == pytest.approx(math.log(2.0), rel=1e-14)


def test_overlap_windows_tile_the_line():
    rng = np.random.default_rng(8)
    for _ in range(50):
        p = int(rng.integers(1, 50))
        q = int(rng.integers(1, 50))
        total = sum(overlap_length(s, p, q) for s in range(-30, 31))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_theta_symmetry_and_far_lag():
    for s in range(6):
        assert theta_infinity(P21, s, 600) == pytest.approx(
            theta_infinity(P21, -s, 600), abs=1e-12
        )
    assert theta_infinity(P21, 40, 1000) == 0.0


def test_theta_requires_dimension():
    p = validate(ApproximationProblem(m=1, n=1, weights=(1,), thetas=(1.0,)))
    with pytest.raises(ValidationError):
        theta_infinity(p, 0, 100)


def test_max_pq_partial_sum_tail():
    for d, P in ((3, 500), (3, 2000), (4, 500)):
        limit = 2.0 * zeta(float(d - 1)) - zeta(float(d))
        err = abs(max_pq_partial_sum(d, P) - limit)
        assert err <= 4.0 * P ** (-(d - 2))


@pytest.mark.parametrize("prob", [P21, P22])
def test_sigma2_series_identity(prob):
    c = constants(prob)
    S = int(math.ceil(math.log(2000))) + 2
    total = sigma2_series(prob, S=S, Pmax=2000)
    assert abs(total - c.sigma2) <= 1e-3 * c.sigma2
    # and the literal sum over theta_infinity agrees with the fused series
    direct = sum(theta_infinity(prob, s, 700) for s in range(-8, 9))
    fused = sigma2_series(prob, S=8, Pmax=700)
    assert direct == pytest.approx(fused, rel=1e-9)


def test_theta_numeric_matches_exact_for_indicators():
    theta = theta_infinity  # exact path

    def g(r):
        return 1.0 if 1.0 <= r <= math.e else 0.0

    def h(x):
        return 1.0 if abs(x) <= 1.0 else 0.0

    from diophlab.theory import theta_infinity_numeric

    for s in (0, 1, 2, 3):
        numeric = theta_infinity_numeric(
            P21, s, 300, g, (1.0, math.e), (h, h), ((-1.0, 1.0), (-1.0, 1.0))
        )
        exact = theta(P21, s, 300)
        assert numeric == pytest.approx(exact, rel=1e-6)


def test_theta_numeric_smooth_profile_symmetry():
    from diophlab.theory import theta_infinity_numeric

    def g(r):  # smooth bump on [1, e]
        if not 1.0 < r < math.e:
            return 0.0
        t = (r - 1.0) / (math.e - 1.0)
        return (t * (1.0 - t)) ** 2

    def h(x):  # even triangular profile
        return max(0.0, 1.0 - abs(x))

    args = (g, (1.0, math.e), (h, h), ((-1.0, 1.0), (-1.0, 1.0)))
    vals = {s: theta_infinity_numeric(P21, s, 120, *args) for s in (-2, -1, 0, 1, 2)}
    assert all(v >= 0.0 for v in vals.values())
    assert vals[1] == pytest.approx(vals[-1], rel=1e-6)
    assert vals[2] == pytest.approx(vals[-2], rel=1e-6)
    assert vals[0] > vals[2]


def test_n_solutions_examples():
    assert n_solutions(1, 1, 7) == 15
    assert n_solutions(6, 4, 6) == 5
    assert n_solutions(5, 2, 4) == 1
    with pytest.raises(ValidationError):
        n_solutions(5, 7, 4)
    with pytest.raises(ValidationError):
        n_solutions(5, 0, 4)


def test_n_solutions_against_brute_force():
    for q in range(1, 121):
        for ell in sorted({1, min(2, q), max(q // 2, 1), max(q - 1, 1), q}):
            for P in (q, 2 * q, 5 * q):
                assert n_solutions(q, ell, P) == n_solutions_brute(q, ell, P)
                assert n_solutions(q, -ell, P) == n_solutions_brute(q, -ell, P)


def test_divisor_sum_growth_ratios():
    r1a = divisor_sum_check(100, 1)
    r1b = divisor_sum_check(200, 1)
    assert abs(r1a.ratio - r1b.ratio) <= 0.25 * max(r1a.ratio, r1b.ratio)
    r2a = divisor_sum_check(100, 2)
    r2b = divisor_sum_check(400, 2)
    assert abs(r2a.ratio - r2b.ratio) <= 0.25 * max(r2a.ratio, r2b.ratio)
    assert r1a.inner_bound_holds and r1b.inner_bound_holds
    assert r2a.inner_bound_holds and r2b.inner_bound_holds


def test_divisor_sum_inner_exact():
    assert inner_divisor_sum(12, 1, 12) == sum(
        n_solutions_brute(12, ell, 12) for ell in range(1, 13)
    )
    report = divisor_sum_check(50, 1)
    assert report.total == sum(inner_divisor_sum(q, 1, q) for q in range(1, 51))


def test_divisor_sum_caps():
    with pytest.raises(ValidationError):
        divisor_sum_check(20000, 1)
    with pytest.raises(ValidationError):
        divisor_sum_check(100, 4)
