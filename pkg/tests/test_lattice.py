import math
from fractions import Fraction

import numpy as np
import pytest

from diophlab.counting import MatrixU, count_block
from diophlab.errors import CapExceededError, ValidationError
from diophlab.lattice import (
    DiagonalFlow,
    UnimodularLattice,
    _fincke_pohst,
    _lll_reduce,
    alpha,
    apply_flow,
    lattice_from_u,
    siegel_transform_box,
    siegel_transform_points,
    truncated_siegel,
)
from diophlab.problem import ApproximationProblem, Norm, WeightedBoxFunction, validate

P11 = validate(ApproximationProblem(m=1, n=1, weights=(1,), thetas=(0.5,)))
P21 = validate(
    ApproximationProblem(m=2, n=1, weights=(Fraction(1, 2), Fraction(1, 2)), thetas=(1.0, 1.0))
)


def test_lattice_from_u_examples():
    u0 = MatrixU(np.zeros((2, 1)))
    lat = lattice_from_u(P21, u0)
    assert np.array_equal(lat.basis, np.eye(3))
    assert lat.provenance == (u0, 0)

    lat2 = lattice_from_u(P11, MatrixU([[0.5]]))
    assert np.allclose(lat2.basis, np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_unimodular_validation():
    with pytest.raises(ValidationError, match="determinant"):
        UnimodularLattice(np.diag([2.0, 1.0]))


def test_flow_exponents_and_group_law():
    flow = DiagonalFlow.from_problem(P21)
    assert sum(flow.exponents, Fraction(0)) == 0
    with pytest.raises(ValidationError):
        DiagonalFlow((Fraction(1), Fraction(1)))

    rng = np.random.default_rng(2)
    lat = lattice_from_u(P21, MatrixU(rng.random((2, 1))))
    assert np.array_equal(apply_flow(lat, 0, P21).basis, lat.basis)
    back = apply_flow(apply_flow(lat, 2, P21), -2, P21)
    assert np.max(np.abs(back.basis - lat.basis)) < 1e-12
    assert abs(np.linalg.det(apply_flow(lat, 3, P21).basis)) == pytest.approx(1.0, rel=1e-12)
    assert apply_flow(lat, 2, P21).provenance[1] == 2


def test_siegel_box_examples():
    lat = lattice_from_u(P11, MatrixU(np.zeros((1, 1))))
    cell = WeightedBoxFunction.counting_cell(P11)
    assert siegel_transform_box(cell, lat, 0) == 4
    assert siegel_transform_box(cell, lat, 1) == 10
    narrow = WeightedBoxFunction(upsilon1=1.41, upsilon2=1.414, thetas=(0.5,), weights=(1,))
    assert siegel_transform_box(narrow, lat, 0) == 0


def test_siegel_box_requires_provenance():
    bare = UnimodularLattice(np.eye(2))
    cell = WeightedBoxFunction.counting_cell(P11)
    with pytest.raises(ValidationError, match="provenance"):
        siegel_transform_box(cell, bare, 0)
    flowed = apply_flow(lattice_from_u(P11, MatrixU(np.zeros((1, 1)))), 1, P11)
    with pytest.raises(ValidationError, match="unflowed"):
        siegel_transform_box(cell, flowed, 0)


def test_tessellation_identity_n1():
    rng = np.random.default_rng(7)
    cell = WeightedBoxFunction.counting_cell(P21)
    for _ in range(5):
        u = MatrixU(rng.random((2, 1)))
        lat = lattice_from_u(P21, u)
        for s in range(7):
            assert siegel_transform_box(cell, lat, s) == count_block(P21, u, s)


@pytest.mark.parametrize(
    "prob",
    [
        validate(ApproximationProblem(m=1, n=2, weights=(2,), thetas=(0.6,))),
        validate(
            ApproximationProblem(m=2, n=2, weights=(1, 1), thetas=(1.0, 0.7), norm=Norm.EUCLIDEAN)
        ),
    ],
)
def test_tessellation_identity_n2(prob):
    rng = np.random.default_rng(13)
    cell = WeightedBoxFunction.counting_cell(prob)
    for _ in range(2):
        u = MatrixU(rng.random((prob.m, prob.n)))
        lat = lattice_from_u(prob, u)
        for s in range(4):
            got = siegel_transform_box(cell, lat, s, norm=prob.norm)
            assert got == count_block(prob, u, s)


def _points_oracle(box, lat):
    """Independent Fraction-based box count over a generous integer window."""
    d = lat.dimension
    inv = np.linalg.inv(lat.basis)
    corners = np.array(
        [[box[k][0] if (mask >> k) & 1 else box[k][1] for k in range(d)] for mask in range(2**d)]
    )
    pre = corners @ inv.T
    lo = np.floor(pre.min(axis=0)).astype(int) - 2
    hi = np.ceil(pre.max(axis=0)).astype(int) + 2
    basis_frac = [[Fraction(x) for x in row] for row in lat.basis]
    count = 0
    import itertools

    for z in itertools.product(*[range(lo[k], hi[k] + 1) for k in range(d)]):
        if not any(z):
            continue
        ok = True
        for i in range(d):
            coord = sum(basis_frac[i][k] * z[k] for k in range(d))
            if not (Fraction(box[i][0]) <= coord <= Fraction(box[i][1])):
                ok = False
                break
        count += ok
    return count


def test_siegel_points_examples():
    z2 = UnimodularLattice(np.eye(2))
    assert siegel_transform_points([(-1.5, 1.5)] * 2, z2) == 8
    assert siegel_transform_points([(0.25, 0.75)] * 2, z2) == 0
    lat = lattice_from_u(
        validate(ApproximationProblem(m=1, n=1, weights=(1,), thetas=(1.0,))), MatrixU([[0.5]])
    )
    box = [(-1.0, 1.0), (-1.0, 1.0)]
    assert siegel_transform_points(box, lat) == 6
    assert _points_oracle(box, lat) == 6


def test_siegel_points_random_oracle():
    rng = np.random.default_rng(3)
    for _ in range(4):
        u = MatrixU(rng.random((2, 1)))
        lat = lattice_from_u(P21, u)
        box = [(-1.5, 1.2), (-0.75, 2.0), (-2.0, 0.5)]
        assert siegel_transform_points(box, lat) == _points_oracle(box, lat)


def test_siegel_points_cap():
    with pytest.raises(CapExceededError):
        siegel_transform_points([(-50.0, 50.0)] * 2, UnimodularLattice(np.eye(2)), cap=100)


def _alpha_exhaustive(basis, radius):
    """Brute subspace scan by Gram determinants over an enumeration ball."""
    import itertools

    coords = _fincke_pohst(basis, radius, 10**7)
    V = coords.astype(float) @ basis.T
    d = basis.shape[0]
    out = 1.0
    for j in range(1, d):
        best = math.inf
        for combo in itertools.combinations(range(len(V)), j):
            X = np.array([coords[c] for c in combo], dtype=float)
            if np.linalg.matrix_rank(X) < j:
                continue
            M = V[list(combo)]
            g = float(np.linalg.det(M @ M.T))
            if g > 1e-12:
                best = min(best, math.sqrt(g))
        if best < math.inf:
            out = max(out, 1.0 / best)
    return out


def test_alpha_integer_lattices():
    for d in (2, 3):
        lat = UnimodularLattice(np.eye(d))
        assert alpha(lat) == pytest.approx(1.0, abs=1e-9)
        assert _alpha_exhaustive(np.eye(d), 3.0) == pytest.approx(1.0, abs=1e-9)


def test_alpha_diagonal_values():
    lat = UnimodularLattice(np.diag([math.e, 1 / math.e]))
    assert alpha(lat) == pytest.approx(math.e, rel=1e-12)
    assert alpha(UnimodularLattice(np.diag([2.0, 1.0, 0.5]))) == pytest.approx(2.0, rel=1e-12)
    assert alpha(UnimodularLattice(np.diag([4.0, 0.5, 0.5, 1.0]))) == pytest.approx(4.0, rel=1e-12)


def test_alpha_at_least_one_and_matches_exhaustive():
    rng = np.random.default_rng(10)
    for _ in range(20):
        u = MatrixU(rng.random((2, 1)))
        s = int(rng.integers(0, 8))
        lat = apply_flow(lattice_from_u(P21, u), s, P21)
        a = alpha(lat)
        assert a >= 1.0
    # full agreement with the exhaustive scan on a few moderate lattices
    for _ in range(3):
        u = MatrixU(rng.random((2, 1)))
        lat = apply_flow(lattice_from_u(P21, u), 3, P21)
        a = alpha(lat)
        assert a == pytest.approx(_alpha_exhaustive(lat.basis, 2.5 / min(a, 2.5) + 2.5), rel=1e-9)


def test_alpha_uncertified_above_five():
    with pytest.warns(RuntimeWarning, match="uncertified"):
        assert alpha(UnimodularLattice(np.eye(6))) == pytest.approx(1.0)


def test_truncated_siegel():
    cell = WeightedBoxFunction.counting_cell(P11)
    lat = lattice_from_u(P11, MatrixU(np.zeros((1, 1))))
    assert truncated_siegel(cell, lat, 1.0, s=0) == 4.0  # alpha(Z^2) = 1 <= L
    skew = UnimodularLattice(np.diag([math.e, 1 / math.e]), provenance=None)
    assert truncated_siegel([(-1.0, 1.0), (-1.0, 1.0)], skew, 2.0, s=0) == 0.0  # alpha = e > 2
    # points (0, +-1/e) and (0, +-2/e) lie in the box once the cutoff admits alpha = e
    assert truncated_siegel([(-1.0, 1.0), (-1.0, 1.0)], skew, 3.0, s=0) == 4.0
    with pytest.raises(ValidationError):
        truncated_siegel(cell, lat, 0.5, s=0)


def test_truncated_matches_plain_at_large_L():
    # at L = 100 the truncation should not bite on at least 99% of samples
    rng = np.random.default_rng(21)
    cell = WeightedBoxFunction.counting_cell(P21)
    agree = 0
    total = 2000
    for _ in range(total):
        u = MatrixU(rng.random((2, 1)))
        lat = lattice_from_u(P21, u)
        full = float(siegel_transform_box(cell, lat, 0))
        trunc = truncated_siegel(cell, lat, 100.0, s=0)
        agree += trunc == full
    assert agree / total >= 0.99


def test_growth_bound_alpha():
    # pilot fit of f_hat <= K * alpha, then assert with safety factor 2
    rng = np.random.default_rng(33)
    cell = WeightedBoxFunction.counting_cell(P21)

    def ratio(idx_rng):
        u = MatrixU(idx_rng.random((2, 1)))
        lat = lattice_from_u(P21, u)
        s = int(idx_rng.integers(0, 6))
        val = siegel_transform_box(cell, lat, s)
        a = alpha(apply_flow(lat, s, P21))
        return val / a

    pilot = max(ratio(rng) for _ in range(200))
    K = 2.0 * max(pilot, 1.0)
    for _ in range(1000):
        assert ratio(rng) <= K


def test_uniform_l1_and_l2_bounds_in_s():
    # means and second moments of the shell counts stay bounded in s (m = 2)
    rng = np.random.default_rng(44)
    from diophlab.counting import CountingKernel

    means, seconds = [], []
    for s in (0, 2, 4, 6, 8, 10, 12):
        kernel = CountingKernel(P21, s, s + 1)
        S = 400 if s >= 10 else 1000
        vals = []
        for i in range(S):
            u = MatrixU(rng.random((2, 1)))
            vals.append(kernel.block_counts(u)[0])
        vals = np.array(vals, dtype=float)
        means.append(vals.mean())
        seconds.append(np.mean(vals**2))
    assert max(means) <= 4.0 * means[-1] + 20.0  # no growth trend
    assert max(seconds) <= 200.0  # bounded second moment, f in L^2 for m >= 2


def test_fincke_pohst_counts_ball_points():
    # number of nonzero integer points with norm <= R in Z^2, one per sign pair
    coords = _fincke_pohst(np.eye(2), 2.0, 10**6)
    # ||x|| <= 2: (0,±1),(0,±2),(±1,0),(±2,0),(±1,±1),(±2,±... no: (1,1) norm sqrt2, (2,1) norm sqrt5 > 2
    # points: (0,1),(0,2),(1,0),(2,0),(1,1),(1,-1),(1,2)? sqrt5 no. total pairs:
    assert coords.shape[0] == 6
    red = _lll_reduce(np.array([[1.0, 7.0], [0.0, 1.0]]))
    assert abs(abs(np.linalg.det(red)) - 1.0) < 1e-9
    assert np.max(np.linalg.norm(red, axis=0)) < 3.0
