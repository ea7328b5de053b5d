import math
from fractions import Fraction

import numpy as np
import pytest

from diophlab.counting import (
    Convention,
    CountingKernel,
    MatrixU,
    count_block,
    count_direct,
    normalize_clt,
)
from diophlab.errors import CapExceededError, ValidationError
from diophlab.oracles import brute_force_block, brute_force_count, slow_reference_count
from diophlab.problem import ApproximationProblem, Norm, validate

P11 = validate(ApproximationProblem(m=1, n=1, weights=(1,), thetas=(0.5,)))
P21 = validate(
    ApproximationProblem(m=2, n=1, weights=(Fraction(1, 2), Fraction(1, 2)), thetas=(1.0, 1.0))
)
U0 = MatrixU(np.zeros((1, 1)))


def test_count_direct_trivial_u0():
    assert count_direct(P11, U0, 10.0).total == 18
    assert count_direct(P11, U0, 10.0, Convention.POSITIVE_Q).total == 9


def test_count_blocks_u0():
    assert count_block(P11, U0, 0) == 4
    # q with e <= |q| < e^2 is {3,...,7}: confirmed by the explicit-p oracle
    assert count_block(P11, U0, 1) == 10
    assert brute_force_block(P11, U0, 1) == 10


def test_count_frozen_dyadic_irrational():
    u = MatrixU(np.array([[math.sqrt(2) - 1.0], [math.sqrt(3) - 1.0]]))
    res = count_direct(P21, u, 1000.0)
    assert res.total == 60  # frozen from the explicit-p enumerator
    assert brute_force_count(P21, u, 1000.0) == 60


def test_block_additivity_exact():
    rng = np.random.default_rng(99)
    for _ in range(4):
        u = MatrixU(rng.random((2, 1)))
        N = int(rng.integers(3, 9))
        res = count_direct(P21, u, math.e**N)
        assert len(res.per_block) == N
        assert res.total == sum(res.per_block)
        assert res.per_block == tuple(count_block(P21, u, s) for s in range(N))


def test_sign_symmetry_exact():
    rng = np.random.default_rng(5)
    for _ in range(5):
        u = MatrixU(rng.random((2, 1)))
        T = float(rng.uniform(20, 300))
        both = count_direct(P21, u, T, Convention.BOTH_SIGNS).total
        pos = count_direct(P21, u, T, Convention.POSITIVE_Q).total
        assert both == 2 * pos
        # the oracle enumerates signs literally, so this checks the doubling
        assert brute_force_count(P21, u, T, Convention.POSITIVE_Q) == pos


def test_monotonicity_in_T_and_theta():
    rng = np.random.default_rng(11)
    u = MatrixU(rng.random((2, 1)))
    totals = [count_direct(P21, u, T).total for T in (50.0, 100.0, 200.0, 400.0)]
    assert totals == sorted(totals)
    bigger = validate(
        ApproximationProblem(m=2, n=1, weights=(Fraction(1, 2), Fraction(1, 2)), thetas=(1.5, 1.5))
    )
    assert count_direct(bigger, u, 200.0).total >= count_direct(P21, u, 200.0).total


def test_oracle_equivalence_small():
    rng = np.random.default_rng(17)
    problems = {
        (1, 1): validate(ApproximationProblem(m=1, n=1, weights=(1,), thetas=(0.8,))),
        (2, 1): P21,
        (1, 2): validate(ApproximationProblem(m=1, n=2, weights=(2,), thetas=(0.6,))),
        (2, 2): validate(
            ApproximationProblem(m=2, n=2, weights=(1, 1), thetas=(1.0, 0.7), norm=Norm.EUCLIDEAN)
        ),
    }
    for (m, n), prob in problems.items():
        for _ in range(3):
            u = MatrixU(rng.random((m, n)))
            T = float(rng.uniform(8, 60 if n == 2 else 200))
            assert count_direct(prob, u, T).total == brute_force_count(prob, u, T)


def test_fraction_reference_cross_check():
    rng = np.random.default_rng(23)
    u = MatrixU(rng.random((2, 1)))
    assert count_direct(P21, u, 40.0).total == slow_reference_count(P21, u, 40.0)


def test_boundary_is_exact_not_float():
    # theta = 1, w = 1: at q = 1 the p-interval is exactly (-1, 1), so the
    # endpoints are integers and the strict inequality must exclude them
    p = validate(ApproximationProblem(m=1, n=1, weights=(1,), thetas=(1.0,)))
    res = count_direct(p, U0, 2.0)
    assert res.total == 2  # q = +-1, p = 0 only
    assert slow_reference_count(p, U0, 2.0) == 2


def test_dyadic_u_boundary_storm():
    # low-denominator dyadic u maximizes exact boundary hits; the escalation
    # path must agree with the all-Fraction reference on every one of them
    p = validate(ApproximationProblem(m=2, n=1, weights=(Fraction(1, 2), Fraction(1, 2)), thetas=(1.0, 0.5)))
    grid = [0.0, 0.25, 0.5, 0.75]
    for a in grid:
        for b in grid:
            u = MatrixU(np.array([[a], [b]]))
            assert count_direct(p, u, 30.0).total == slow_reference_count(p, u, 30.0)
    # integer-radius thetas make rho hit integers exactly at square q
    p2 = validate(ApproximationProblem(m=1, n=1, weights=(1,), thetas=(2.0,)))
    for a in grid:
        u = MatrixU(np.array([[a]]))
        assert count_direct(p2, u, 25.0).total == slow_reference_count(p2, u, 25.0)


def test_block_oracle_euclidean():
    p22 = validate(
        ApproximationProblem(m=2, n=2, weights=(1, 1), thetas=(1.0, 0.7), norm=Norm.EUCLIDEAN)
    )
    rng = np.random.default_rng(3)
    for _ in range(2):
        u = MatrixU(rng.random((2, 2)))
        for s in (0, 1, 2):
            assert count_block(p22, u, s) == brute_force_block(p22, u, s)


def test_count_up_to_matches_direct_inside_kernel():
    rng = np.random.default_rng(31)
    u = MatrixU(rng.random((2, 1)))
    kernel = CountingKernel(P21, 0, 6)
    for T in (9.0, 55.5, 148.4):
        assert kernel.count_up_to(u, T) == count_direct(P21, u, T).total


def test_positive_q_requires_n1():
    p = validate(ApproximationProblem(m=1, n=2, weights=(2,), thetas=(0.6,)))
    with pytest.raises(ValidationError, match="n = 1"):
        count_direct(p, MatrixU(np.zeros((1, 2))), 10.0, Convention.POSITIVE_Q)


def test_enumeration_cap():
    with pytest.raises(CapExceededError):
        count_direct(P21, MatrixU(np.zeros((2, 1))), 1e6, cap=1000)


def test_matrix_u_validation():
    with pytest.raises(ValidationError):
        MatrixU(np.array([[1.0]]))  # 1 is outside [0, 1)
    with pytest.raises(ValidationError):
        MatrixU(np.array([[-0.1]]))
    with pytest.raises(ValidationError):
        count_direct(P21, MatrixU(np.zeros((1, 1))), 10.0)  # wrong shape


def test_normalize_clt():
    C = 8.0
    T = math.e**5
    assert normalize_clt(int(C * 5), T, C, 1.0) == pytest.approx(0.0, abs=1e-9)
    count = C * 5 + math.sqrt(5)
    assert normalize_clt(count, T, C, 1.0) == pytest.approx(1.0, rel=1e-12)
    # frozen arithmetic on the oracle count of the dyadic-irrational example
    assert normalize_clt(60, 1000.0, 8.0, 27.79) == pytest.approx(1.8026969070697845, rel=1e-12)
    with pytest.raises(ValidationError):
        normalize_clt(1, 1.0, C, 1.0)
