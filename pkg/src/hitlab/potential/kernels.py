"""Capacity kernels and Hausdorff gauges.

Kernels and gauges are stored through their logarithm as a function of
log(x). That way a kernel can be evaluated at the diameter of a level-500
Cantor interval, or a gauge at 1e-400, without overflow or underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import integrate

from ..errors import DomainError, NumericalError
from ..variance import PowerLog, VarianceModel

CAPACITY_KERNEL = "CapacityKernel"
HAUSDORFF_GAUGE = "HausdorffGauge"


@dataclass(frozen=True, eq=False)
class KernelOrGauge:
    """A positive scalar function of a distance.

    ``log_fn`` maps log x to log f(x) and must accept arrays. For kernels
    ``limit_at_zero`` is the value at 0 (possibly inf); gauges vanish there
    when ``valid`` is true.
    """

    kind: str
    name: str
    log_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    limit_at_zero: float
    valid: bool = True
    params: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict, repr=False)

    @property
    def monotone(self) -> str:
        return "NonIncreasing" if self.kind == CAPACITY_KERNEL else "NonDecreasing"

    @property
    def valid_gauge(self) -> bool:
        return self.kind == HAUSDORFF_GAUGE and self.valid

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.limit_at_zero)

    def log_eval(self, log_x):
        out = np.asarray(self.log_fn(np.asarray(log_x, dtype=float)), dtype=float)
        return float(out) if out.ndim == 0 else out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(np.isnan(x)):
            raise DomainError("kernels and gauges take non-negative arguments")
        pos = x > 0.0
        with np.errstate(divide="ignore"):
            lx = np.log(np.where(pos, x, 1.0))
        vals = np.exp(np.asarray(self.log_fn(lx), dtype=float))
        at_zero = self.limit_at_zero if self.kind == CAPACITY_KERNEL else 0.0
        out = np.where(pos, vals, at_zero)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name, **self.params}


def constant_kernel(value: float = 1.0) -> KernelOrGauge:
    if value <= 0:
        raise DomainError("a kernel must be positive")
    lv = math.log(value)
    return KernelOrGauge(CAPACITY_KERNEL, "constant", lambda t: np.full_like(np.asarray(t, float), lv),
                         float(value), True, {"value": float(value)})


def trivial_gauge() -> KernelOrGauge:
    """phi = 1, the trivial lower-bound function. Not a Hausdorff gauge."""
    return KernelOrGauge(HAUSDORFF_GAUGE, "one", lambda t: np.zeros_like(np.asarray(t, float)),
                         1.0, False, {})


def newtonian_kernel(beta: float) -> KernelOrGauge:
    """r^-beta for beta > 0, log(e / min(r, 1)) for beta = 0, 1 for beta < 0."""
    beta = float(beta)
    if beta > 0:
        fn = lambda t: -beta * np.asarray(t, float)
        lim = math.inf
    elif beta == 0:
        fn = lambda t: np.log1p(-np.minimum(np.asarray(t, float), 0.0))
        lim = math.inf
    else:
        fn = lambda t: np.zeros_like(np.asarray(t, float))
        lim = 1.0
    return KernelOrGauge(CAPACITY_KERNEL, "newtonian", fn, lim, True, {"beta": beta})


def power_log_kernel(alpha: float, b: float) -> KernelOrGauge:
    """K(x) = x^-alpha log^b(1/x), frozen at its value beyond x_m.

    x_m = exp(-max(1, -b/alpha)) is where the formula stops being
    non-increasing, so the extension is continuous and monotone.
    """
    alpha, b = float(alpha), float(b)
    if alpha < 0 or (alpha == 0 and b < 0):
        raise DomainError("x^-alpha log^b(1/x) is not a kernel: it vanishes at 0")
    L_m = min(max(1.0, -b / alpha), 1e300) if alpha > 0 else 1.0

    def fn(t):
        L = np.maximum(-np.asarray(t, float), L_m)
        return alpha * L + b * np.log(L)

    lim = math.inf if (alpha > 0 or b > 0) else 1.0
    return KernelOrGauge(CAPACITY_KERNEL, "power_log", fn, lim, True, {"alpha": alpha, "b": b})


def power_log_gauge(alpha: float, b: float) -> KernelOrGauge:
    """phi(x) = x^alpha log^b(1/x), frozen at its value beyond x_m.

    Valid (non-decreasing near 0 with limit 0) iff alpha > 0, or alpha = 0
    and b < 0.
    """
    alpha, b = float(alpha), float(b)
    valid = alpha > 0 or (alpha == 0 and b < 0)
    L_m = min(max(1.0, b / alpha), 1e300) if alpha > 0 else 1.0

    def fn(t):
        L = np.maximum(-np.asarray(t, float), L_m)
        return -alpha * L + b * np.log(L)

    lim = 0.0 if valid else math.inf
    return KernelOrGauge(HAUSDORFF_GAUGE, "power_log", fn, lim, valid, {"alpha": alpha, "b": b})


def reciprocal(g: KernelOrGauge) -> KernelOrGauge:
    """1/phi as a capacity kernel, the kernel paired with a gauge."""
    if g.kind != HAUSDORFF_GAUGE:
        raise DomainError("reciprocal expects a gauge")
    fn = lambda t: -np.asarray(g.log_fn(t), float)
    lim = math.inf if g.valid else 1.0 / g.limit_at_zero if g.limit_at_zero > 0 else math.inf
    return KernelOrGauge(CAPACITY_KERNEL, f"1/{g.name}", fn, lim, True, {"of": g.to_dict()})


# ---------------------------------------------------------------------------
# v(r) = int_r^w gamma(s)^-d ds
# ---------------------------------------------------------------------------


def _log_integrand(model: VarianceModel, d: int, u):
    """log of gamma(s)^-d * s at s = exp(-u): the integrand of v in u = log(1/s)."""
    u = np.asarray(u, float)
    return -u - d * np.asarray(model.log_gamma(-u), float)


def integrable_at_zero(model: VarianceModel, d: int) -> bool:
    """Whether int_0 gamma^-d converges."""
    if isinstance(model, PowerLog):
        dH = d * model.H
        if math.isclose(dH, 1.0, rel_tol=0.0, abs_tol=1e-12):
            return d * model.beta > 1.0
        return dH < 1.0
    # numeric trend: does the tail of v flatten out
    lv = [_log_v_quad(model, d, -u, model.log_r_max) for u in (100.0, 200.0, 400.0)]
    return bool(lv[2] - lv[1] < 1e-6 and lv[1] - lv[0] < 1e-3)


def _log_v_quad(model: VarianceModel, d: int, log_r: float, log_w: float) -> float:
    """log v by adaptive quadrature in u, rescaled by the integrand's peak."""
    u0, u1 = -log_w, -log_r
    if u1 <= u0:
        return -math.inf
    ends = _log_integrand(model, d, np.array([u0, 0.5 * (u0 + u1), u1]))
    m = float(np.max(ends))
    # geometric breakpoints keep quad honest over very long ranges
    pts = np.unique(np.concatenate([[u0], np.geomspace(max(u0, 1e-3), u1, 40), [u1]]))
    pts = pts[(pts >= u0) & (pts <= u1)]
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, err = integrate.quad(lambda u: math.exp(float(_log_integrand(model, d, u)) - m), lo, hi,
                                  epsabs=0.0, epsrel=1e-11, limit=200)
        total += val
    if not total > 0.0 or not math.isfinite(total):
        raise NumericalError("v-integral quadrature failed")
    return m + math.log(total)


def v_integral(model: VarianceModel, d: int, r: float, window: float) -> float:
    """v(r) = int_r^window gamma(s)^-d ds by adaptive quadrature."""
    if not r > 0:
        raise DomainError("v_integral needs r > 0")
    if not (r <= window <= model.r_max * (1 + 1e-12)):
        raise DomainError("need 0 < r <= window <= r_max")
    if r == window:
        return 0.0
    return math.exp(_log_v_quad(model, d, math.log(r), math.log(window)))


class VTable:
    """Cumulative v(exp(-u)) on panels in u, for fast vectorized evaluation.

    Panel sums are kept as logarithms so that exponentially growing
    integrands (dH > 1) stay representable. Beyond ``u_max`` log v is
    extrapolated by a fit in (u, log u), which is exact to leading order for
    power-log integrands.
    """

    _nodes, _weights = np.polynomial.legendre.leggauss(20)

    def __init__(self, model: VarianceModel, d: int, window: float, u_max: float | None = None):
        self.model, self.d = model, d
        self.u0 = -math.log(window)
        if u_max is None:
            # slowly varying (critical) integrands are tabulated much further out
            f = _log_integrand(model, d, np.array([1e3, 2e3]))
            u_max = 1e6 if abs(f[1] - f[0]) < 50.0 else 2000.0
        u_max = max(u_max, self.u0 + 50.0)
        self.edges = self._make_edges(u_max)
        lo, hi = self.edges[:-1], self.edges[1:]
        logs = self._log_panel(lo, hi)
        self.log_cum = np.concatenate([[-np.inf], np.logaddexp.accumulate(logs)])
        self.u_max = float(self.edges[-1])
        tail = self.edges > 0.75 * self.u_max
        A = np.column_stack([np.ones(tail.sum()), self.edges[tail], np.log(self.edges[tail])])
        self._tail_coef, *_ = np.linalg.lstsq(A, self.log_cum[tail], rcond=None)
        self.log_total = self._log_total()

    def _make_edges(self, u_max: float) -> np.ndarray:
        """Panels fine near u0, then widening while the integrand changes by
        at most a factor e**3 across a panel."""
        edges = list(self.u0 + np.geomspace(1e-6, 1.0, 25))
        edges.insert(0, self.u0)
        u = edges[-1]
        while u < u_max and len(edges) < 200_000:
            w = max(1.0, 0.05 * u)
            fu = float(_log_integrand(self.model, self.d, u))
            while w > 0.05 and abs(float(_log_integrand(self.model, self.d, u + w)) - fu) > 3.0:
                w *= 0.5
            u = min(u + w, u_max)
            edges.append(u)
        return np.asarray(edges)

    def _log_panel(self, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        half = 0.5 * (hi - lo)
        u = 0.5 * (hi + lo)[:, None] + half[:, None] * self._nodes[None, :]
        f = _log_integrand(self.model, self.d, u)
        m = np.max(f, axis=1)
        with np.errstate(divide="ignore"):
            s = np.log(np.sum(self._weights[None, :] * np.exp(f - m[:, None]), axis=1) * half)
        return np.where(hi > lo, m + s, -np.inf)

    def _log_total(self) -> float:
        """log v(0) when int_0 converges, else inf."""
        if not integrable_at_zero(self.model, self.d):
            return math.inf
        U = self.u_max
        fU = float(_log_integrand(self.model, self.d, U))
        m = self.model
        if isinstance(m, PowerLog) and math.isclose(self.d * m.H, 1.0, rel_tol=0.0, abs_tol=1e-12):
            p = self.d * m.beta
            extra = (1.0 - p) * math.log(U) - math.log(p - 1.0)  # int_U^inf u^-p du
        else:
            val, _ = integrate.quad(lambda u: math.exp(float(_log_integrand(m, self.d, u)) - fU),
                                    U, math.inf, epsabs=0.0, epsrel=1e-10, limit=200)
            extra = fU + math.log(val) if val > 0 else -math.inf
        return float(np.logaddexp(self.log_cum[-1], extra))

    def log_v(self, u):
        """log v(exp(-u)) for u >= u0 (array)."""
        u = np.atleast_1d(np.asarray(u, float))
        out = np.full(u.shape, -np.inf)
        inside = (u > self.u0) & (u <= self.u_max)
        if inside.any():
            ui = u[inside]
            p = np.clip(np.searchsorted(self.edges, ui, side="right") - 1, 0, len(self.edges) - 2)
            part = self._log_panel(self.edges[p], ui)
            out[inside] = np.logaddexp(self.log_cum[p], part)
        beyond = u > self.u_max
        if beyond.any():
            ub = u[beyond]
            if math.isfinite(self.log_total):
                out[beyond] = self.log_total
            else:
                c = self._tail_coef
                out[beyond] = c[0] + c[1] * ub + c[2] * np.log(ub)
        return out


def kernel_K(model: VarianceModel, d: int, a: float, b: float, u_max: float | None = None) -> KernelOrGauge:
    """K(x) = max{1, v(gamma^-1(x))} with v(r) = int_r^{b-a} gamma^-d.

    For x >= gamma(b - a) the kernel equals 1.
    """
    if not 0 < a < b:
        raise DomainError("need 0 < a < b")
    window = b - a
    if window > model.r_max * (1 + 1e-12):
        raise DomainError("b - a exceeds the domain of gamma")
    window = min(window, model.r_max)
    table = VTable(model, d, window, u_max)
    log_gw = float(model.log_gamma(math.log(window)))

    def fn(t):
        t = np.asarray(t, float)
        shape = t.shape
        t = t.ravel()
        out = np.zeros(t.shape)
        small = t < log_gw
        if small.any():
            log_r = np.atleast_1d(model.log_inverse(t[small]))
            out[small] = np.maximum(0.0, table.log_v(-log_r))
        return out.reshape(shape) if shape else out[0]

    lim = math.exp(max(0.0, table.log_total)) if math.isfinite(table.log_total) else math.inf
    return KernelOrGauge(CAPACITY_KERNEL, "K_gamma", fn, lim, True,
                         {"model": model.to_dict(), "d": d, "a": a, "b": b}, {"table": table})


def gauge_phi(model: VarianceModel, d: int) -> KernelOrGauge:
    """phi(x) = x^d / gamma^-1(x), frozen at its value beyond gamma(r_max)."""
    log_top = float(model.log_gamma(model.log_r_max))

    def fn(t):
        t = np.minimum(np.asarray(t, float), log_top)
        return d * t - np.asarray(model.log_inverse(t), float)

    if isinstance(model, PowerLog):
        if model.H == 0:
            valid = False
        else:
            dH = d * model.H
            if math.isclose(dH, 1.0, rel_tol=0.0, abs_tol=1e-12):
                valid = model.beta < 0
            else:
                valid = dH > 1.0
    else:
        grid = np.linspace(log_top - 1.0, log_top - 200.0, 200)  # decreasing x
        vals = np.asarray(fn(grid))
        slope = (vals[-1] - vals[-21]) / (grid[-1] - grid[-21])
        valid = bool(np.all(np.diff(vals) <= 1e-12 * np.abs(vals[1:]).max()) and slope > 1e-3)
    return KernelOrGauge(HAUSDORFF_GAUGE, "phi_gamma", fn, 0.0 if valid else math.nan, valid,
                         {"model": model.to_dict(), "d": d})


def kernel_from_dict(desc: dict) -> KernelOrGauge:
    """Rebuild a kernel or gauge from ``to_dict`` output (analytic families)."""
    from ..variance import model_from_dict

    name = desc.get("name")
    kind = desc.get("kind", CAPACITY_KERNEL)
    if name == "newtonian":
        return newtonian_kernel(desc["beta"])
    if name == "constant":
        return constant_kernel(desc.get("value", 1.0))
    if name == "one":
        return trivial_gauge()
    if name == "power_log":
        maker = power_log_kernel if kind == CAPACITY_KERNEL else power_log_gauge
        return maker(desc["alpha"], desc["b"])
    if name == "K_gamma":
        return kernel_K(model_from_dict(desc["model"]), int(desc["d"]), desc["a"], desc["b"])
    if name == "phi_gamma":
        return gauge_phi(model_from_dict(desc["model"]), int(desc["d"]))
    raise DomainError(f"unknown kernel/gauge {name!r}")
