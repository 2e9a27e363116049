"""Linear Cantor sets, their capacity series and Hausdorff premeasures.

A Cantor set with level ratios q_1, q_2, ... in (0, 1/2) is built from [0, 1]
by replacing each level-(n-1) interval with its two end pieces of relative
length q_n. Level n has 2**n intervals of common length prod_{i<=n} q_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..errors import DomainError, ResourceError
from .kernels import CAPACITY_KERNEL, KernelOrGauge

MAX_LEVEL = 22
EXACT_LEVEL = 14
DELTA = 0.05
GEO_TOL = 0.01  # per-level log decay rate treated as geometric


def critical_ratio(H: float, d: int) -> float:
    """q with 2 q**(d - 1/H) = 1, i.e. a set of dimension d - 1/H."""
    s = d - 1.0 / H if H > 0 else -math.inf
    if not 0.0 < s < 1.0:
        raise DomainError(f"critical Cantor ratio needs 0 < d - 1/H < 1, got d - 1/H = {s:.6g}")
    return 2.0 ** (-1.0 / s)


@dataclass(frozen=True)
class CantorSpec:
    """Ratio data of a Cantor set on the first axis of R^d.

    kind is ``constant`` (param ``q``), ``list`` (param ``q`` a list, the
    last value repeated), or ``corex3`` (params ``c``, ``s`` and ``variant``).

    The ``corex3`` family is the slightly fattened critical set: with
    s = d - 1/H and q_c = 2**(-1/s), the ``corrected`` variant solves
    q_n**-s = 2 (1 - c/n), so that 2**-n prod q_i**-s = prod (1 - c/i) decays
    like n**-c. The ``literal`` variant q_n = (1/2 (1 - c/n))**(1/s) gives
    the reciprocal product instead. For small n, where 1 - c/n <= 0 or the
    corrected value leaves [q_c, 1/2), both variants use q_c.
    """

    kind: str
    params: dict
    embedding_dim: int = 1

    def __post_init__(self):
        if self.embedding_dim < 1:
            raise DomainError("embedding dimension must be >= 1")
        if self.kind == "constant":
            q = self.params["q"]
            if not 0 < q < 0.5:
                raise DomainError("Cantor ratio must lie in (0, 1/2)")
        elif self.kind == "list":
            qs = list(self.params["q"])
            if not qs or any(not 0 < q < 0.5 for q in qs):
                raise DomainError("Cantor ratios must lie in (0, 1/2)")
        elif self.kind == "corex3":
            s = float(self.params["s"])
            if not 0 < s < 1:
                raise DomainError("corex3 sequence needs s = d - 1/H in (0, 1)")
            if self.params.get("variant", "corrected") not in ("corrected", "literal"):
                raise DomainError("corex3 variant must be 'corrected' or 'literal'")
        else:
            raise DomainError(f"unknown Cantor ratio kind {self.kind!r}")

    @classmethod
    def constant(cls, q, embedding_dim: int = 1) -> "CantorSpec":
        if isinstance(q, str):
            q = Fraction(q)
        return cls("constant", {"q": q}, embedding_dim)

    @classmethod
    def corex3(cls, c: float, H: float, d: int, variant: str = "corrected") -> "CantorSpec":
        s = d - 1.0 / H
        critical_ratio(H, d)
        return cls("corex3", {"c": float(c), "s": s, "variant": variant}, d)

    def ratio(self, n: int):
        """q_n for n >= 1 (exact Fraction when given as one)."""
        if n < 1:
            raise DomainError("levels start at 1")
        if self.kind == "constant":
            return self.params["q"]
        if self.kind == "list":
            qs = self.params["q"]
            return qs[min(n, len(qs)) - 1]
        c, s = self.params["c"], self.params["s"]
        qc = 2.0 ** (-1.0 / s)
        f = 1.0 - c / n
        if self.params.get("variant", "corrected") == "corrected":
            q = (0.5 / f) ** (1.0 / s) if f > 0 else math.inf
            return q if qc <= q < 0.5 else qc
        return (0.5 * f) ** (1.0 / s) if f > 0 else qc

    def log_ratios(self, N: int) -> np.ndarray:
        return np.log(np.array([float(self.ratio(n)) for n in range(1, N + 1)]))

    def log_diameters(self, N: int) -> np.ndarray:
        """log prod_{i<=n} q_i for n = 1..N, accumulated in log space."""
        return np.cumsum(self.log_ratios(N))

    def dimension(self, N: int = 2000) -> float:
        """ln 2 / ln(1/q) for a constant ratio; the level-N value otherwise."""
        if self.kind == "constant":
            return math.log(2.0) / math.log(1.0 / float(self.params["q"]))
        return N * math.log(2.0) / -float(self.log_diameters(N)[-1])

    def to_dict(self) -> dict:
        params = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in self.params.items()}
        return {"kind": self.kind, "params": params, "embedding_dim": self.embedding_dim}

    @classmethod
    def from_dict(cls, desc: dict) -> "CantorSpec":
        params = dict(desc["params"])
        if desc["kind"] == "constant":
            q = params["q"]
            params["q"] = Fraction(q) if isinstance(q, str) else float(q)
        return cls(desc["kind"], params, int(desc.get("embedding_dim", 1)))


@dataclass(frozen=True)
class CantorLevel:
    left: np.ndarray
    length: float
    exact: list | None = field(default=None, repr=False)

    @property
    def intervals(self) -> list:
        if self.exact is not None:
            return list(self.exact)
        return [(float(x), float(x + self.length)) for x in self.left]

    @property
    def endpoints(self) -> np.ndarray:
        return np.sort(np.concatenate([self.left, self.left + self.length]))


def cantor_build(spec: CantorSpec, level: int) -> CantorLevel:
    """The 2**level intervals of the level-``level`` approximation."""
    if level < 0:
        raise DomainError("level must be >= 0")
    if level > MAX_LEVEL:
        raise ResourceError(f"level {level} would need 2**{level} intervals (limit 2**{MAX_LEVEL})")
    ratios = [spec.ratio(n) for n in range(1, level + 1)]
    exact = None
    if level <= EXACT_LEVEL:
        lefts, length = [Fraction(0)], Fraction(1)
        for q in ratios:
            new = length * Fraction(q)
            lefts = lefts + [x + length - new for x in lefts]
            length = new
        lefts.sort()
        exact = [(x, x + length) for x in lefts]
        left = np.array([float(x) for x in lefts])
        return CantorLevel(left, float(length), exact)
    left, length = np.zeros(1), 1.0
    for q in ratios:
        new = length * float(q)
        left = np.concatenate([left, left + (length - new)])
        length = new
    return CantorLevel(np.sort(left), length, exact)


def cantor_points(spec: CantorSpec, level: int, include_endpoints: bool = False):
    """Atoms for capacity estimates: interval midpoints (or all endpoints)."""
    lev = cantor_build(spec, level)
    if include_endpoints:
        x = lev.endpoints
        radius = np.full(len(x), lev.length / 4.0)
    else:
        x = lev.left + 0.5 * lev.length
        radius = np.full(len(x), lev.length / 2.0)
    pts = np.zeros((len(x), spec.embedding_dim))
    pts[:, 0] = x
    return pts, radius


@dataclass(frozen=True)
class SeriesResult:
    log_terms: np.ndarray
    terms: np.ndarray
    partial_sums: np.ndarray
    tail_exponent: float
    verdict: str


def _tail_exponent(log_terms: np.ndarray) -> float:
    n = np.arange(1, len(log_terms) + 1, dtype=float)
    tail = slice(len(n) // 2, None)
    return float(np.polyfit(np.log(n[tail]), log_terms[tail], 1)[0])


def _tail_rates(log_terms: np.ndarray) -> tuple[float, float]:
    """Fit log a_n = c + r n + p log n over the tail half; returns (r, p)."""
    n = np.arange(1, len(log_terms) + 1, dtype=float)
    tail = slice(len(n) // 2, None)
    A = np.column_stack([np.ones_like(n), n, np.log(n)])[tail]
    coef = np.linalg.lstsq(A, log_terms[tail], rcond=None)[0]
    return float(coef[1]), float(coef[2])


def series_verdict(log_terms: np.ndarray, delta: float = DELTA, geo_tol: float = GEO_TOL) -> tuple[float, str]:
    """Classify sum a_n from log a_n.

    A geometric tail (per-level rate beyond geo_tol) decides by its sign;
    otherwise the power-law exponent is compared with -1.
    """
    log_terms = np.asarray(log_terms, float)
    p = _tail_exponent(log_terms)
    r, _ = _tail_rates(log_terms)
    if r < -geo_tol:
        return p, "Converges"
    if r > geo_tol:
        return p, "Diverges"
    if p < -1.0 - delta:
        return p, "Converges"
    if p > -1.0 + delta:
        return p, "Diverges"
    return p, "Inconclusive"


def cantor_capacity_series(spec: CantorSpec, kernel: KernelOrGauge, N: int) -> SeriesResult:
    """Terms a_n = 2**-n K(prod_{i<=n} q_i) of the capacity-positivity series."""
    if N < 8:
        raise DomainError("need N >= 8 terms")
    if kernel.kind != CAPACITY_KERNEL:
        raise DomainError("the capacity series needs a capacity kernel")
    n = np.arange(1, N + 1, dtype=float)
    log_terms = -n * math.log(2.0) + np.asarray(kernel.log_eval(spec.log_diameters(N)), float)
    terms = np.exp(log_terms)
    p, verdict = series_verdict(log_terms)
    return SeriesResult(log_terms, terms, np.cumsum(terms), p, verdict)


@dataclass(frozen=True)
class PremeasureResult:
    log_sequence: np.ndarray
    sequence: np.ndarray
    trend: str
    tail_exponent: float


def hausdorff_premeasure(spec: CantorSpec, gauge: KernelOrGauge, N: int) -> PremeasureResult:
    """s_n = 2**n phi(prod_{i<=n} q_i), the gauge sum of the level-n cover."""
    if not gauge.valid_gauge:
        raise DomainError("hausdorff_premeasure needs a valid gauge")
    if N < 4:
        raise DomainError("need N >= 4 levels")
    n = np.arange(1, N + 1, dtype=float)
    log_s = n * math.log(2.0) + np.asarray(gauge.log_eval(spec.log_diameters(N)), float)
    tail = log_s[N // 2:]
    if np.ptp(tail) <= 1e-9 * max(1.0, float(np.max(np.abs(tail)))):
        p, trend = 0.0, "Bounded"
    else:
        p = _tail_exponent(log_s)
        trend = "ToZero" if p < -DELTA else "ToInfinity" if p > DELTA else "Bounded"
    return PremeasureResult(log_s, np.exp(log_s), trend, p)


def singleton_premeasure(gauge: KernelOrGauge, eps) -> np.ndarray:
    """phi(2 eps): the one-ball cover of a point."""
    return np.asarray(gauge(2.0 * np.asarray(eps, dtype=float)), dtype=float)
