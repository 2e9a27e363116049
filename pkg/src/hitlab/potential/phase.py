"""Polarity phase diagram of the gamma_{H,beta} family.

For B with variance function r^H log^beta(1/r) in R^d, points are hit with
positive probability when 1/gamma^d is integrable at 0 and are polar when d
exceeds 1/H, or equals it with beta < 0. The strip d = 1/H, 0 <= beta < 1/d
is not decided by the available bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import DomainError
from ..variance import PowerLog, VarianceModel, check_admissible, local_scaling_limit
from .kernels import (
    KernelOrGauge,
    constant_kernel,
    power_log_gauge,
    power_log_kernel,
    trivial_gauge,
)

NON_POLAR = "NonPolar"
POLAR = "Polar"
GAP = "GapUnknown"
BOUNDARY = "BoundaryCase"

_EQ = 1e-12


def _is_one(x: float) -> bool:
    return math.isclose(x, 1.0, rel_tol=0.0, abs_tol=_EQ)


def polarity_classify(H: float, beta: float, d: int) -> str:
    """Whether points are polar for B^{H,beta} in R^d."""
    check_admissible(H, beta)
    if d < 1:
        raise DomainError("dimension must be >= 1")
    dH = d * H
    if _is_one(dH):
        db = d * beta
        if _is_one(db):
            return BOUNDARY
        if db > 1.0:
            return NON_POLAR
        return POLAR if beta < 0 else GAP
    return NON_POLAR if dH < 1.0 else POLAR


@dataclass(frozen=True)
class TexaCase:
    """Which hitting bounds are available and with which functions.

    The lower bound is C * capacity with kernel ``lower_kernel`` = 1 /
    ``lower_phi``; the upper bound is C * H_phi with ``upper_gauge``.
    """

    cases: tuple
    label: str
    lower_phi: KernelOrGauge
    lower_kernel: KernelOrGauge
    upper_gauge: KernelOrGauge | None
    upper_established: bool

    @property
    def case_id(self):
        return self.cases[0] if len(self.cases) == 1 else self.cases


def _lower(alpha: float, b: float):
    """phi = x^alpha log^b(1/x) and its reciprocal kernel."""
    if alpha == 0 and b == 0:
        return trivial_gauge(), constant_kernel(1.0)
    return power_log_gauge(alpha, b), power_log_kernel(alpha, -b)


def texa_case_select(H: float, beta: float, d: int) -> TexaCase:
    """Case assignment for the gamma_{H,beta} hitting bounds in R^d."""
    check_admissible(H, beta)
    if d < 1:
        raise DomainError("dimension must be >= 1")
    if H == 0.0:
        phi, K = _lower(0, 0)
        return TexaCase(("corex1",), "H=0: lower bound with phi = 1", phi, K, None, False)
    if H == 1.0 and d > 1:
        phi, K = _lower(d - 1.0, beta)
        return TexaCase(("corex1",), "H=1: both bounds with phi = x^(d-1) log^beta(1/x)",
                        phi, K, phi, True)
    dH = d * H
    if _is_one(dH):
        if beta < 0:
            up = power_log_gauge(0.0, beta / H)
            phi, K = _lower(0.0, beta / H - 1.0)
            return TexaCase((2, 3), "d=1/H, beta<0: upper log^(beta/H), lower log^(beta/H-1)",
                            phi, K, up, True)
        if beta < 1.0 / d and not _is_one(d * beta):
            phi, K = _lower(0.0, beta / H - 1.0)
            return TexaCase((3,), "d=1/H, 0<=beta<1/d: lower with log^(beta/H-1)", phi, K, None, False)
        phi, K = _lower(0, 0)
        return TexaCase((4,), "d=1/H, beta>=1/d: lower with phi = 1", phi, K, None, False)
    if dH > 1.0:
        phi, K = _lower(d - 1.0 / H, beta / H)
        return TexaCase((1,), "d>1/H: both bounds with phi = x^(d-1/H) log^(beta/H)(1/x)",
                        phi, K, phi, True)
    phi, K = _lower(0, 0)
    return TexaCase((5,), "d<1/H: lower with phi = 1", phi, K, None, False)


@dataclass(frozen=True)
class CommensurabilityResult:
    commensurate: bool
    limit: float
    status: str


def commensurability_check(model: VarianceModel, d: int, tol: float = 1e-6) -> CommensurabilityResult:
    """Strict test d * lim r gamma'(r)/gamma(r) > 1.

    Equality within ``tol`` is reported as ``Boundary`` and counts as not
    commensurate.
    """
    est = local_scaling_limit(model)
    if not est.stable:
        return CommensurabilityResult(False, est.value, "Inconclusive")
    x = d * est.value
    if abs(x - 1.0) <= tol:
        return CommensurabilityResult(False, est.value, "Boundary")
    return CommensurabilityResult(x > 1.0, est.value, "Commensurate" if x > 1.0 else "NotCommensurate")


def symbolic_series_verdict(H: float, beta_prime: float) -> str:
    """Exact verdict of sum 2^-n K(q^n) at the critical ratio.

    With q**(d - 1/H) = 1/2 and K(x) = x^(1/H-d) log^(-beta'/H)(1/x) the terms
    are proportional to n^(-beta'/H).
    """
    return "Converges" if beta_prime / H > 1.0 else "Diverges"


def symbolic_premeasure_trend(H: float, beta: float) -> str:
    """Exact trend of 2^n phi(q^n) at the critical ratio for phi =
    x^(d-1/H) log^(beta/H)(1/x): proportional to n^(beta/H)."""
    if beta == 0:
        return "Bounded"
    return "ToZero" if beta < 0 else "ToInfinity"


def model_polarity(model: PowerLog, d: int) -> str:
    return polarity_classify(model.H, model.beta, d)
