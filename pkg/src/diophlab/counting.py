"""Direct computation of the approximant counts Delta_T and their radial blocks.

The count for one denominator q is a product over the m forms of the number
of integers in an open interval, so no p is ever enumerated here.  Interval
endpoints are evaluated in double precision; whenever an endpoint lands
within relative margin 1e-9 of an integer the decision is escalated to exact
rational arithmetic (entries of u are dyadic, q is integral, weights are
rational, so the strict inequality can be settled by cross-powering).

Radial shells use integer thresholds ceil(e^s) computed in high precision
once and cached, which makes the tessellation identity against the lattice
module exact rather than approximate.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np
from mpmath import mp

from diophlab.errors import CapExceededError, ValidationError
from diophlab.problem import ApproximationProblem, Norm

DEFAULT_CAP = 2**31
_BOUNDARY_MARGIN = 1e-9


def enumeration_cap() -> int:
    cap = os.environ.get("DIOPH_CAP")
    return int(cap) if cap else DEFAULT_CAP


class Convention(Enum):
    BOTH_SIGNS = "both"
    POSITIVE_Q = "positive"


@dataclass(frozen=True)
class MatrixU:
    """An m x n matrix with dyadic entries in [0, 1)."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValidationError("u must be a 2-d matrix")
        if np.any(arr < 0) or np.any(arr >= 1):
            raise ValidationError("entries of u must lie in [0, 1)")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def row_fractions(self, i: int):
        return tuple(Fraction(x) for x in self.entries[i])


@dataclass(frozen=True)
class CountResult:
    total: int
    per_block: tuple
    T: float
    convention: Convention


# ---------------------------------------------------------------------------
# exact radial thresholds

@lru_cache(maxsize=None)
def _ceil_exp(x: int) -> int:
    """Smallest integer >= e^x, settled in high-precision arithmetic."""
    if x < 0:
        raise ValidationError("negative exponent in radial threshold")
    with mp.workdps(60 + x):
        return int(mp.ceil(mp.e**x))


def _sup_radius_below(T: float) -> int:
    """Largest integer k with k < T (T a dyadic real)."""
    frac = Fraction(T)
    k = math.floor(frac)
    if frac == k:
        k -= 1
    return k


def block_radius_range(s: int) -> tuple[int, int]:
    """Integer radii k with e^s <= k < e^{s+1}, inclusive bounds."""
    return _ceil_exp(s), _ceil_exp(s + 1) - 1


def block_sq_radius_range(s: int) -> tuple[int, int]:
    """Integer squared radii Q with e^{2s} <= Q < e^{2s+2}, inclusive bounds."""
    return _ceil_exp(2 * s), _ceil_exp(2 * s + 2) - 1


# ---------------------------------------------------------------------------
# exact open-interval count (escalation path)

def _exact_open_count(c: Fraction, theta: Fraction, w: Fraction, norm_pow) -> int:
    """#{p in Z : |p + c| < theta * ||q||^{-w}} by exact comparison.

    ``norm_pow`` is ("int", k) for integer radius k = ||q|| or ("sq", Q) for
    Q = ||q||_2^2.  The strict inequality is cross-powered to integer
    exponents so every comparison is exact.
    """
    a, b = w.numerator, w.denominator
    kind, val = norm_pow
    if kind == "int":
        radius = float(theta) * float(val) ** (-float(w))
        rhs = theta**b

        def admits(p: int) -> bool:
            return abs(p + c) ** b * val**a < rhs

    elif kind == "sq":
        radius = float(theta) * float(val) ** (-float(w) / 2.0)
        rhs = theta ** (2 * b)

        def admits(p: int) -> bool:
            return abs(p + c) ** (2 * b) * val**a < rhs

    else:  # pragma: no cover - internal misuse
        raise ValidationError(f"bad norm_pow {norm_pow!r}")

    center = -float(c)
    lo = math.floor(center - radius) - 2
    hi = math.ceil(center + radius) + 2
    return sum(1 for p in range(lo, hi + 1) if admits(p))


# ---------------------------------------------------------------------------
# per-q interval counts

def per_q_product_counts(
    problem: ApproximationProblem,
    u: MatrixU,
    q_int: np.ndarray,
    *,
    norm_int: np.ndarray | None = None,
    norm_sq: np.ndarray | None = None,
    rho: np.ndarray | None = None,
) -> np.ndarray:
    """prod_i #{p_i : |p_i + <u_i, q>| < theta_i ||q||^{-w_i}} for each column q.

    ``q_int`` is an (n, K) integer array; exactly one of ``norm_int`` (integer
    radii) / ``norm_sq`` (integer squared Euclidean radii) must be given.
    ``rho`` may carry precomputed interval radii theta_i * ||q||^{-w_i}.
    """
    if u.m != problem.m or u.n != problem.n:
        raise ValidationError("u has wrong shape for the problem")
    if (norm_int is None) == (norm_sq is None):
        raise ValidationError("need exactly one of norm_int / norm_sq")
    q_float = q_int.astype(np.float64)
    if rho is None:
        norm_f = norm_int.astype(np.float64) if norm_int is not None else np.sqrt(
            norm_sq.astype(np.float64)
        )
        w = problem.weights_float()
        rho = np.stack([problem.thetas[i] * norm_f ** (-w[i]) for i in range(problem.m)])

    def norm_pow_at(j: int):
        if norm_int is not None:
            return ("int", int(norm_int[j]))
        return ("sq", int(norm_sq[j]))

    prod = np.ones(q_float.shape[1], dtype=np.int64)
    for i in range(problem.m):
        t = u.entries[i] @ q_float  # <u_i, q>
        hi = rho[i] - t
        lo = -rho[i] - t
        cnt = np.ceil(hi) - np.floor(lo) - 1.0
        margin_hi = np.abs(hi - np.rint(hi))
        margin_lo = np.abs(lo - np.rint(lo))
        sus = (margin_hi < _BOUNDARY_MARGIN * np.maximum(1.0, np.abs(hi))) | (
            margin_lo < _BOUNDARY_MARGIN * np.maximum(1.0, np.abs(lo))
        )
        cnt_i = cnt.astype(np.int64)
        if np.any(sus):
            u_row = u.row_fractions(i)
            theta = Fraction(problem.thetas[i])
            w_i = problem.weights[i]
            for j in np.nonzero(sus)[0]:
                c = sum(u_row[k] * int(q_int[k, j]) for k in range(problem.n))
                cnt_i[j] = _exact_open_count(c, theta, w_i, norm_pow_at(j))
        prod *= cnt_i
    return prod


# ---------------------------------------------------------------------------
# counting kernel

class CountingKernel:
    """Precomputed q-grid and interval radii for the shells s_lo <= s < s_hi.

    Denominators are enumerated from the positive half-space only (first
    nonzero coordinate of q positive); the both-signs count is exactly twice
    that by the symmetry (p, q) <-> (-p, -q).  Build once, then map
    ``block_counts``/``count_up_to`` over many samples: the q-grid and the
    radii theta_i * ||q||^{-w_i} do not depend on u.
    """

    def __init__(self, problem: ApproximationProblem, s_lo: int, s_hi: int, cap: int | None = None):
        if not 0 <= s_lo < s_hi:
            raise ValidationError("need 0 <= s_lo < s_hi")
        self.problem = problem
        self.s_lo = int(s_lo)
        self.s_hi = int(s_hi)
        cap = enumeration_cap() if cap is None else cap
        self._build(cap)

    def _build(self, cap: int) -> None:
        p = self.problem
        if p.n == 1:
            k_lo, k_hi = _ceil_exp(self.s_lo), _ceil_exp(self.s_hi) - 1
            if k_hi - k_lo + 1 > cap:
                raise CapExceededError(
                    f"radial range needs {k_hi - k_lo + 1} points > cap {cap}"
                    " (set DIOPH_CAP to raise)"
                )
            q = np.arange(k_lo, k_hi + 1, dtype=np.int64)
            self.q_int = q.reshape(1, -1)
            self.norm_int = q  # ||q|| exactly, as integers
            self.norm_sq = None
            bounds = np.array([_ceil_exp(j) for j in range(self.s_lo + 1, self.s_hi)])
            self.block_of = self.s_lo + np.searchsorted(bounds, q, side="right").astype(np.int64)
            norm_f = q.astype(np.float64)
        else:
            if p.norm is Norm.SUP:
                k_max = _ceil_exp(self.s_hi) - 1
            else:
                k_max = int(math.isqrt(_ceil_exp(2 * self.s_hi) - 1))
            if (2 * k_max + 1) ** p.n > cap:
                raise CapExceededError(
                    f"q-box has {(2 * k_max + 1) ** p.n} points > cap {cap}"
                    " (set DIOPH_CAP to raise)"
                )
            axes = [np.arange(-k_max, k_max + 1, dtype=np.int64)] * p.n
            grids = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([g.ravel() for g in grids])  # (n, K)
            # lexicographically positive representative of each {q, -q} pair
            lead = np.zeros(pts.shape[1], dtype=np.int64)
            undecided = np.ones(pts.shape[1], dtype=bool)
            for j in range(p.n):
                sgn = np.sign(pts[j])
                lead = np.where(undecided & (sgn != 0), sgn, lead)
                undecided &= sgn == 0
            pts = pts[:, lead > 0]
            if p.norm is Norm.SUP:
                nint = np.max(np.abs(pts), axis=0)
                keep = (nint >= _ceil_exp(self.s_lo)) & (nint <= _ceil_exp(self.s_hi) - 1)
                pts, nint = pts[:, keep], nint[keep]
                self.norm_int = nint
                self.norm_sq = None
                bounds = np.array([_ceil_exp(j) for j in range(self.s_lo + 1, self.s_hi)])
                self.block_of = self.s_lo + np.searchsorted(bounds, nint, side="right").astype(np.int64)
                norm_f = nint.astype(np.float64)
            else:
                nsq = np.sum(pts * pts, axis=0)
                keep = (nsq >= _ceil_exp(2 * self.s_lo)) & (nsq <= _ceil_exp(2 * self.s_hi) - 1)
                pts, nsq = pts[:, keep], nsq[keep]
                self.norm_int = None
                self.norm_sq = nsq
                bounds = np.array([_ceil_exp(2 * j) for j in range(self.s_lo + 1, self.s_hi)])
                self.block_of = self.s_lo + np.searchsorted(bounds, nsq, side="right").astype(np.int64)
                norm_f = np.sqrt(nsq.astype(np.float64))
            self.q_int = pts
        self.q_float = self.q_int.astype(np.float64)
        # per-form interval radii theta_i * ||q||^{-w_i}; sample independent
        w = p.weights_float()
        self.rho = np.stack([p.thetas[i] * norm_f ** (-w[i]) for i in range(p.m)])

    @property
    def n_shells(self) -> int:
        return self.s_hi - self.s_lo

    # -- per-sample work ---------------------------------------------------

    def _counts_per_q(self, u: MatrixU) -> np.ndarray:
        return per_q_product_counts(
            self.problem,
            u,
            self.q_int,
            norm_int=self.norm_int,
            norm_sq=self.norm_sq,
            rho=self.rho,
        )

    def _apply_convention(self, value, convention: Convention):
        if convention is Convention.BOTH_SIGNS:
            return value * 2
        if self.problem.n != 1:
            raise ValidationError("PositiveQ convention requires n = 1")
        return value

    def block_counts(self, u: MatrixU, convention: Convention = Convention.BOTH_SIGNS) -> np.ndarray:
        """Counts for the shells s = s_lo .. s_hi-1, in that order."""
        per_q = self._counts_per_q(u)
        out = np.bincount(
            self.block_of - self.s_lo, weights=per_q, minlength=self.n_shells
        ).astype(np.int64)
        return self._apply_convention(out, convention)

    def count_up_to(self, u: MatrixU, T: float, convention: Convention = Convention.BOTH_SIGNS) -> int:
        """Count with e^{s_lo} <= ||q|| < T, T within the kernel's range."""
        per_q = self._counts_per_q(u)
        if self.norm_int is not None:
            mask = self.norm_int <= _sup_radius_below(T)
        else:
            mask = self.norm_sq < Fraction(T) ** 2
        return int(self._apply_convention(int(per_q[mask].sum()), convention))


def _blocks_needed_for(T: float) -> int:
    if not T > 1:
        raise ValidationError("count_direct needs T > 1")
    n = max(1, int(math.ceil(math.log(T))))
    while _ceil_exp(n) - 1 < _sup_radius_below(T):
        n += 1
    return n


def count_direct(
    problem: ApproximationProblem,
    u: MatrixU,
    T: float,
    convention: Convention = Convention.BOTH_SIGNS,
    cap: int | None = None,
) -> CountResult:
    """|{(p, q) : 0 < ||q|| < T, |p_i + <u_i, q>| < theta_i ||q||^{-w_i}}|.

    ``per_block`` holds the counts split by the shells e^s <= ||q|| < e^{s+1};
    when T = e^N the blocks are exactly the shell counts for s = 0..N-1 and
    they sum to the total.
    """
    if convention is Convention.POSITIVE_Q and problem.n != 1:
        raise ValidationError("PositiveQ convention requires n = 1")
    n_blocks = _blocks_needed_for(T)
    kernel = CountingKernel(problem, 0, n_blocks, cap=cap)
    per_q = kernel._counts_per_q(u)
    if kernel.norm_int is not None:
        mask = kernel.norm_int <= _sup_radius_below(T)
    else:
        mask = kernel.norm_sq < Fraction(T) ** 2
    factor = 2 if convention is Convention.BOTH_SIGNS else 1
    blocks = (
        np.bincount(kernel.block_of[mask], weights=per_q[mask], minlength=n_blocks).astype(np.int64)
        * factor
    )
    total = int(blocks.sum())
    return CountResult(
        total=total, per_block=tuple(int(b) for b in blocks), T=float(T), convention=convention
    )


def count_block(
    problem: ApproximationProblem,
    u: MatrixU,
    s: int,
    convention: Convention = Convention.BOTH_SIGNS,
    cap: int | None = None,
) -> int:
    """Count restricted to the shell e^s <= ||q|| < e^{s+1}."""
    if s < 0:
        raise ValidationError("block index s must be >= 0")
    kernel = CountingKernel(problem, s, s + 1, cap=cap)
    return int(kernel.block_counts(u, convention)[0])


def normalize_clt(count: int, T: float, C: float, variance: float) -> float:
    """(count - C log T) / sqrt(log T); ``variance`` rides along for reports."""
    if not T > 1:
        raise ValidationError("normalize_clt needs T > 1")
    logT = math.log(T)
    return (count - C * logT) / math.sqrt(logT)
