"""Problem definition: weighted approximation systems, norms, geometric constants.

Conventions fixed here and relied on everywhere else:

* weights are exact rationals and must sum to n exactly;
* thresholds theta_i and radial bounds are dyadic reals (IEEE doubles read
  as exact dyadic rationals), so boundary comparisons can be escalated to
  exact arithmetic;
* ``omega_n`` integrates ||z||^{-n} over the *Euclidean* unit sphere with
  surface measure (for n = 1 the sphere is {-1, +1} with counting measure),
  which makes ``domain_volume`` equal C * log(T) for any of the supported
  norms;
* counting domains are radially half-open [1, T), box test functions default
  to closed radial bounds, and the x-side inequality is always strict.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

from scipy.integrate import quad

from diophlab.errors import ValidationError


class Norm(Enum):
    SUP = "sup"
    EUCLIDEAN = "euclidean"


def _as_fraction(w) -> Fraction:
    if isinstance(w, Fraction):
        return w
    if isinstance(w, int):
        return Fraction(w)
    if isinstance(w, str):
        return Fraction(w)
    if isinstance(w, float):
        # doubles are exact dyadic rationals
        return Fraction(w)
    raise ValidationError(f"cannot interpret weight {w!r} as an exact rational")


@dataclass(frozen=True)
class ApproximationProblem:
    """Parameters of the system |p_i + <u_i, q>| < theta_i ||q||^{-w_i}.

    m forms in n variables; weights w_i > 0 with sum w_i = n (checked in
    exact rational arithmetic); thresholds theta_i > 0; ``norm`` is the norm
    applied to the denominator vector q.
    """

    m: int
    n: int
    weights: tuple
    thetas: tuple
    norm: Norm = Norm.SUP

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(_as_fraction(w) for w in self.weights))
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        if not isinstance(self.norm, Norm):
            object.__setattr__(self, "norm", Norm(self.norm))

    @property
    def dimension(self) -> int:
        return self.m + self.n

    def weights_float(self):
        return tuple(float(w) for w in self.weights)

    def to_json(self) -> str:
        return json.dumps(
            {
                "m": self.m,
                "n": self.n,
                "weights": [f"{w.numerator}/{w.denominator}" for w in self.weights],
                "thetas": list(self.thetas),
                "norm": self.norm.value,
            }
        )

    @staticmethod
    def from_json(text: str) -> "ApproximationProblem":
        obj = json.loads(text)
        return validate(
            ApproximationProblem(
                m=int(obj["m"]),
                n=int(obj["n"]),
                weights=tuple(Fraction(w) for w in obj["weights"]),
                thetas=tuple(float(t) for t in obj["thetas"]),
                norm=Norm(obj["norm"]),
            )
        )


def validate(problem: ApproximationProblem) -> ApproximationProblem:
    """Return ``problem`` unchanged iff every invariant holds.

    Raises ValidationError naming the violated invariant.
    """
    if problem.m < 1:
        raise ValidationError("m must be a positive integer")
    if problem.n < 1:
        raise ValidationError("n must be a positive integer")
    if len(problem.weights) != problem.m:
        raise ValidationError(f"expected {problem.m} weights, got {len(problem.weights)}")
    if len(problem.thetas) != problem.m:
        raise ValidationError(f"expected {problem.m} thetas, got {len(problem.thetas)}")
    if any(w <= 0 for w in problem.weights):
        raise ValidationError("all weights must be > 0")
    if any(t <= 0 for t in problem.thetas):
        raise ValidationError("all thetas must be > 0")
    total = sum(problem.weights, Fraction(0))
    if total != problem.n:
        raise ValidationError(
            f"weight sum {total} != n = {problem.n} (checked in exact rational arithmetic)"
        )
    return problem


@dataclass(frozen=True)
class Annulus:
    """Radial shell {y : t_low <= ||y|| < t_high} (half-open by convention).

    ``log_low``/``log_high`` optionally carry exact (rational) logarithms of
    the bounds, so log-lengths of adjacent shells add without rounding.
    """

    t_low: float
    t_high: float
    log_low: Fraction | None = field(default=None, compare=False)
    log_high: Fraction | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.t_low < 0:
            raise ValidationError("annulus needs t_low >= 0")
        if not self.t_high > self.t_low:
            raise ValidationError("annulus needs t_high > t_low")

    @staticmethod
    def from_exponents(s_low, s_high) -> "Annulus":
        """Shell e^{s_low} <= ||y|| < e^{s_high} with exact log bounds."""
        lo = Fraction(s_low)
        hi = Fraction(s_high)
        return Annulus(math.exp(float(lo)), math.exp(float(hi)), lo, hi)

    def log_length(self) -> float:
        if self.log_low is not None and self.log_high is not None:
            return float(self.log_high - self.log_low)
        if self.t_low == 0:
            raise ValidationError("log-length undefined for t_low = 0")
        return math.log(self.t_high) - math.log(self.t_low)

    def log_length_exact(self) -> Fraction:
        if self.log_low is None or self.log_high is None:
            raise ValidationError("annulus was not built from exact exponents")
        return self.log_high - self.log_low


@dataclass(frozen=True)
class WeightedBoxFunction:
    """Indicator of {(x, y): u1 <= ||y|| <= u2, |x_i| < theta_i ||y||^{-w_i}}.

    The x-side inequality is always strict; the radial bounds carry explicit
    closed/open flags (closed by default, counting domains use [u1, u2)).
    """

    upsilon1: float
    upsilon2: float
    thetas: tuple
    weights: tuple
    lower_closed: bool = True
    upper_closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        object.__setattr__(self, "weights", tuple(_as_fraction(w) for w in self.weights))
        if not (0 < self.upsilon1 < self.upsilon2):
            raise ValidationError("need 0 < upsilon1 < upsilon2")
        if any(t <= 0 for t in self.thetas):
            raise ValidationError("all thetas must be > 0")

    @staticmethod
    def counting_cell(problem: ApproximationProblem) -> "WeightedBoxFunction":
        """The unit cell [1, e) x {|x_i| < theta_i ||y||^{-w_i}} of the tessellation."""
        return WeightedBoxFunction(
            upsilon1=1.0,
            upsilon2=math.e,
            thetas=problem.thetas,
            weights=problem.weights,
            lower_closed=True,
            upper_closed=False,
        )


def norm_eval(v: Sequence[float], norm: Norm) -> float:
    """||v|| for the supported norms; accepts integer or real vectors."""
    if isinstance(norm, str):
        norm = Norm(norm)
    if norm is Norm.SUP:
        return max(abs(float(x)) for x in v) if len(v) else 0.0
    if norm is Norm.EUCLIDEAN:
        return math.sqrt(sum(float(x) * float(x) for x in v))
    raise ValidationError(f"unsupported norm {norm}")


def unit_ball_volume(norm: Norm, n: int) -> float:
    """Volume of {||y|| <= 1} by recursive one-dimensional slice quadrature.

    Used only as the independent cross-check path for ``omega_n``.
    """
    if n == 0:
        return 1.0
    if isinstance(norm, str):
        norm = Norm(norm)

    if norm is Norm.SUP:
        # slice at y_n = t is the full (n-1)-dimensional unit ball
        inner = unit_ball_volume(norm, n - 1)
        val, _ = quad(lambda t: inner, -1.0, 1.0, epsabs=1e-12, epsrel=1e-12)
        return val
    if norm is Norm.EUCLIDEAN:
        inner = unit_ball_volume(norm, n - 1)
        val, _ = quad(
            lambda t: inner * (1.0 - t * t) ** ((n - 1) / 2.0),
            -1.0,
            1.0,
            epsabs=1e-12,
            epsrel=1e-12,
        )
        return val
    raise ValidationError(f"unsupported norm {norm}")


def omega_n(norm: Norm, n: int, method: str = "closed") -> float:
    """The constant such that integral of ||y||^{-n} over {a <= ||y|| < b} is
    omega_n * log(b/a).

    Equivalently the integral of ||z||^{-n} over the Euclidean unit sphere
    (counting measure of mass 2 for n = 1).  ``method="quadrature"`` computes
    n * vol{||y|| <= 1} by slice quadrature instead of the closed form.
    """
    if isinstance(norm, str):
        norm = Norm(norm)
    if n < 1:
        raise ValidationError("omega_n needs n >= 1")
    if method == "quadrature":
        return n * unit_ball_volume(norm, n)
    if method != "closed":
        raise ValidationError(f"unknown omega_n method {method!r}")
    if norm is Norm.SUP:
        return float(n * 2**n)
    if norm is Norm.EUCLIDEAN:
        return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    raise ValidationError(f"unsupported norm {norm}")


def mean_constant(problem: ApproximationProblem) -> float:
    """C = 2^m * prod(theta_i) * omega_n, the per-unit-log expected count."""
    prod = 1.0
    for t in problem.thetas:
        prod *= t
    return (2.0**problem.m) * prod * omega_n(problem.norm, problem.n)


def domain_volume(problem: ApproximationProblem, T: float) -> float:
    """Volume of {1 <= ||y|| < T, |x_i| < theta_i ||y||^{-w_i}} = C log T."""
    if not T > 1:
        if T == 1:
            return 0.0
        raise ValidationError("domain_volume needs T >= 1")
    return mean_constant(problem) * math.log(T)


def domain_volume_annulus(problem: ApproximationProblem, annulus: Annulus) -> float:
    """Volume of the same box family restricted to a radial shell."""
    if annulus.t_low <= 0:
        raise ValidationError("annulus must avoid ||y|| = 0")
    if annulus.log_low is not None and annulus.log_high is not None:
        return mean_constant(problem) * float(annulus.log_length_exact())
    return mean_constant(problem) * annulus.log_length()


