"""Per-coordinate scaling triples.

A :class:`PsiTriple` bundles one coordinate's smooth nonvanishing scaling
function ``psi`` on an open interval, its derivative, the anchored primitive
``xi`` (the antiderivative of ``1/psi`` with ``xi(anchor) = 0``), and the
inverse ``phi`` of that primitive.  Named kinds get closed forms; the custom
kind falls back to memoized adaptive quadrature for ``xi`` and safeguarded
Newton/bisection for ``phi``.

Because ``psi`` never vanishes, ``xi`` is strictly monotone, crosses zero at
the anchor, and changing the anchor only shifts ``xi`` by a constant.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expr as ex
from . import kernels
from .errors import (EvalDomainError, OutOfImageError, PsiValidationError)

__all__ = ["Interval", "PsiTriple", "make_psi"]

_INF = float("inf")

KINDS = ("constant", "linear", "power", "exponential", "custom")

_KIND_CODES = {
    "constant": kernels.PSI_CONSTANT,
    "linear": kernels.PSI_LINEAR,
    "power": kernels.PSI_POWER,
    "exponential": kernels.PSI_EXPONENTIAL,
    "custom": kernels.PSI_CUSTOM,
}

# lattice spacing for memoized quadrature checkpoints (custom kind)
_LATTICE = 0.5
_SIMPSON_TOL = 1e-13
_INVERT_TOL = 1e-12
# numeric primitives only reach this far from the anchor; beyond it the
# lattice walk would dominate runtime for no practical gain
_MAX_SEGMENTS = 16384
_PROBE_SPAN = 13  # image probing stops at anchor +- 2**_PROBE_SPAN


@dataclass(frozen=True)
class Interval:
    """Open interval (lo, hi); endpoints may be infinite."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")

    def contains(self, w: float) -> bool:
        return self.lo < w < self.hi

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def clipped(self, bound: float = 10.0) -> "Interval":
        """Finite sub-interval for sampling; unbounded ends are clipped."""
        lo = self.lo if math.isfinite(self.lo) else -bound
        hi = self.hi if math.isfinite(self.hi) else bound
        if not lo < hi:  # interval lies entirely beyond the clip bound
            if math.isfinite(self.lo):
                lo, hi = self.lo, self.lo + 2 * bound
            else:
                lo, hi = self.hi - 2 * bound, self.hi
        return Interval(lo, hi)

    def __str__(self):
        return f"({self.lo}, {self.hi})"

REAL_LINE = Interval(-_INF, _INF)
POSITIVE = Interval(0.0, _INF)


def _default_anchor(domain: Interval) -> float:
    if domain.bounded:
        return 0.5 * (domain.lo + domain.hi)
    if domain.lo == 0.0 and domain.hi == _INF:
        return 1.0
    if not math.isfinite(domain.lo) and not math.isfinite(domain.hi):
        return 0.0
    if math.isfinite(domain.lo):
        return domain.lo + 1.0
    return domain.hi - 1.0


class PsiTriple:
    """One coordinate's (psi, xi, phi) with domain, anchor, and image."""

    def __init__(self, kind, params, domain, anchor, expression=None,
                 derivative_expression=None):
        self.kind = kind
        self.params = dict(params)
        self.domain = domain
        self.xi_anchor = anchor
        self.expression = expression
        self.derivative_expression = derivative_expression
        self._memo_lock = threading.Lock()
        self._forward = [0.0]   # xi at anchor + i * _LATTICE
        self._backward = [0.0]  # xi at anchor - i * _LATTICE
        self.image = self._compute_image()

    # -- scalar evaluations -------------------------------------------------

    def psi(self, w: float) -> float:
        if not self.domain.contains(w):
            raise EvalDomainError(
                f"{w!r} outside scaling domain {self.domain}")
        value = self._psi_raw(w)
        if not math.isfinite(value) or value == 0.0:
            raise EvalDomainError(f"scaling function degenerate at {w!r}")
        return value

    def psi_prime(self, w: float) -> float:
        if not self.domain.contains(w):
            raise EvalDomainError(
                f"{w!r} outside scaling domain {self.domain}")
        k, p = self.kind, self.params
        if k == "constant":
            return 0.0
        if k == "linear":
            return p["a"]
        if k == "power":
            return p["a"] * p["p"] * math.pow(w, p["p"] - 1.0)
        if k == "exponential":
            return p["a"] * p["b"] * math.exp(p["b"] * w)
        return ex.evaluate(self.derivative_expression, (w,))

    def xi(self, w: float) -> float:
        """Anchored primitive of 1/psi; strictly monotone on the domain."""
        if not self.domain.contains(w):
            raise EvalDomainError(
                f"{w!r} outside scaling domain {self.domain}")
        return self._xi_inside(w)

    def phi(self, v: float) -> float:
        """Inverse of xi; accepts arguments inside the recorded image."""
        if not self.image.contains(v):
            raise OutOfImageError(
                f"{v!r} outside primitive image {self.image}")
        k, p = self.kind, self.params
        a0 = self.xi_anchor
        try:
            if k == "constant":
                return a0 + p["c"] * v
            if k == "linear":
                return a0 * math.exp(p["a"] * v)
            if k == "power":
                if p["p"] == 1.0:
                    return a0 * math.exp(p["a"] * v)
                q = 1.0 - p["p"]
                return math.pow(math.pow(a0, q) + p["a"] * q * v, 1.0 / q)
            if k == "exponential":
                if p["b"] == 0.0:
                    return a0 + p["a"] * v
                inner = math.exp(-p["b"] * a0) - p["a"] * p["b"] * v
                return -math.log(inner) / p["b"]
        except (ValueError, OverflowError):
            # rounding at the very edge of the image interval
            raise OutOfImageError(
                f"{v!r} at the boundary of primitive image {self.image}")
        return self._phi_custom(v)

    def xi_many(self, values: np.ndarray) -> np.ndarray:
        """Vectorized xi over an array (loops only for the custom kind)."""
        w = np.asarray(values, dtype=np.float64)
        k, p = self.kind, self.params
        a0 = self.xi_anchor
        if k == "constant":
            return (w - a0) / p["c"]
        if k == "linear":
            return np.log(w / a0) / p["a"]
        if k == "power":
            if p["p"] == 1.0:
                return np.log(w / a0) / p["a"]
            q = 1.0 - p["p"]
            return (np.power(w, q) - math.pow(a0, q)) / (p["a"] * q)
        if k == "exponential":
            if p["b"] == 0.0:
                return (w - a0) / p["a"]
            b = p["b"]
            return (math.exp(-b * a0) - np.exp(-b * w)) / (p["a"] * b)
        return np.array([self._xi_inside(float(v)) for v in w.ravel()]
                        ).reshape(w.shape)

    # -- kernel descriptors --------------------------------------------------

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.kind]

    def kernel_params(self):
        p = self.params
        if self.kind == "constant":
            return (p["c"], 0.0, 0.0)
        if self.kind == "linear":
            return (p["a"], 0.0, 0.0)
        if self.kind == "power":
            return (p["a"], p["p"], 0.0)
        if self.kind == "exponential":
            return (p["a"], p["b"], 0.0)
        return (0.0, 0.0, 0.0)

    def kernel_programs(self):
        if self.kind != "custom":
            return None, None
        return self.expression.compile(), self.derivative_expression.compile()

    # -- internals ------------------------------------------------------------

    def _psi_raw(self, w: float) -> float:
        k, p = self.kind, self.params
        try:
            if k == "constant":
                return p["c"]
            if k == "linear":
                return p["a"] * w
            if k == "power":
                return p["a"] * math.pow(w, p["p"])
            if k == "exponential":
                return p["a"] * math.exp(p["b"] * w)
            return ex.evaluate(self.expression, (w,))
        except (ValueError, OverflowError):
            return _INF
        except EvalDomainError:
            return _INF

    def _xi_inside(self, w: float) -> float:
        k, p = self.kind, self.params
        a0 = self.xi_anchor
        if k == "constant":
            return (w - a0) / p["c"]
        if k == "linear":
            return math.log(w / a0) / p["a"]
        if k == "power":
            if p["p"] == 1.0:
                return math.log(w / a0) / p["a"]
            q = 1.0 - p["p"]
            return (math.pow(w, q) - math.pow(a0, q)) / (p["a"] * q)
        if k == "exponential":
            if p["b"] == 0.0:
                return (w - a0) / p["a"]
            b = p["b"]
            return (math.exp(-b * a0) - math.exp(-b * w)) / (p["a"] * b)
        return self._xi_custom(w)

    def _inv_psi(self, w: float) -> float:
        value = self._psi_raw(w)
        if not math.isfinite(value) or value == 0.0:
            raise EvalDomainError(
                f"scaling function degenerate at {w!r} during quadrature")
        return 1.0 / value

    def _xi_custom(self, w: float) -> float:
        """Quadrature from the anchor, memoized on a lattice of checkpoints.

        Long integration ranges are split into fixed half-unit segments whose
        cumulative integrals are cached, so repeated nearby evaluations (the
        common pattern in trajectories and inversions) only pay for the final
        fractional segment.
        """
        offset = w - self.xi_anchor
        segments = int(abs(offset) / _LATTICE)
        if segments > _MAX_SEGMENTS:
            raise EvalDomainError(
                f"{w!r} too far from anchor {self.xi_anchor!r} for the "
                "numeric primitive")
        direction = 1.0 if offset >= 0 else -1.0
        with self._memo_lock:
            values = self._forward if direction > 0 else self._backward
            while len(values) <= segments:
                i = len(values)
                a = self.xi_anchor + direction * (i - 1) * _LATTICE
                b = self.xi_anchor + direction * i * _LATTICE
                values.append(values[-1] + _adaptive_simpson(
                    self._inv_psi, a, b, _SIMPSON_TOL))
            base = values[segments]
        start = self.xi_anchor + direction * segments * _LATTICE
        return base + _adaptive_simpson(self._inv_psi, start, w, _SIMPSON_TOL)

    def _phi_custom(self, v: float) -> float:
        increasing = self._psi_raw(self.xi_anchor) > 0.0
        lo_w, hi_w = self._bracket(v, increasing)
        return self._newton_bisect(v, lo_w, hi_w)

    def _bracket(self, v: float, increasing: bool):
        """Expanding search for w-interval with xi spanning v."""
        if v == 0.0:
            return self.xi_anchor, self.xi_anchor
        move_up = (v > 0.0) == increasing
        boundary = self.domain.hi if move_up else self.domain.lo
        a = self.xi_anchor
        xa = 0.0
        step = _LATTICE
        for _ in range(300):
            if math.isfinite(boundary):
                b = 0.5 * (a + boundary)
            else:
                b = a + step if move_up else a - step
                step *= 2.0
            try:
                xb = self._xi_custom(b)
            except EvalDomainError:
                break
            if (xb >= v) == (xa < v):
                return (a, b) if a < b else (b, a)
            a, xa = b, xb
        raise OutOfImageError(
            f"{v!r} not reachable within the scaling domain {self.domain}")

    def _newton_bisect(self, v: float, lo_w: float, hi_w: float) -> float:
        """Safeguarded Newton on xi(w) = v; bisection keeps the bracket."""
        if lo_w == hi_w:
            return lo_w
        w = 0.5 * (lo_w + hi_w)
        f_lo = self._xi_custom(lo_w) - v
        for _ in range(200):
            fw = self._xi_custom(w) - v
            if fw == 0.0:
                return w
            if (fw < 0.0) == (f_lo < 0.0):
                lo_w, f_lo = w, fw
            else:
                hi_w = w
            slope = self._psi_raw(w)
            candidate = w - fw * slope if math.isfinite(slope) else None
            if candidate is None or not lo_w < candidate < hi_w:
                candidate = 0.5 * (lo_w + hi_w)
            if abs(candidate - w) <= _INVERT_TOL * max(1.0, abs(w)):
                return candidate
            w = candidate
        return w

    def _compute_image(self) -> Interval:
        k, p = self.kind, self.params
        if k == "custom":
            lo_v = self._probe_image_end(self.domain.lo, toward_hi=False)
            hi_v = self._probe_image_end(self.domain.hi, toward_hi=True)
            lo_v, hi_v = min(lo_v, hi_v), max(lo_v, hi_v)
            if not lo_v < hi_v:  # pragma: no cover - defensive
                raise PsiValidationError("degenerate primitive image")
            return Interval(lo_v, hi_v)
        ends = [self._xi_limit(self.domain.lo, from_above=True),
                self._xi_limit(self.domain.hi, from_above=False)]
        return Interval(min(ends), max(ends))

    def _xi_limit(self, endpoint: float, from_above: bool) -> float:
        """Limit of xi at a domain endpoint (closed-form kinds only)."""
        k, p = self.kind, self.params
        a0 = self.xi_anchor
        if k == "constant" or (k == "exponential" and p["b"] == 0.0):
            c = p["c"] if k == "constant" else p["a"]
            if not math.isfinite(endpoint):
                return endpoint * math.copysign(1.0, c)
            return (endpoint - a0) / c
        if k == "linear" or (k == "power" and p["p"] == 1.0):
            a = p["a"]
            if endpoint == 0.0:  # w/a0 -> 0+ so ln -> -inf
                return -_INF if a > 0 else _INF
            if not math.isfinite(endpoint):
                return _INF if a > 0 else -_INF
            return math.log(endpoint / a0) / a
        if k == "power":
            a, q = p["a"], 1.0 - p["p"]
            if endpoint == 0.0:
                top = 0.0 if q > 0 else _INF
            elif not math.isfinite(endpoint):
                top = _INF if q > 0 else 0.0
            else:
                top = math.pow(endpoint, q)
            return (top - math.pow(a0, q)) / (a * q)
        # exponential with b != 0
        a, b = p["a"], p["b"]
        if not math.isfinite(endpoint):
            decay = 0.0 if b * endpoint > 0 else _INF
        else:
            try:
                decay = math.exp(-b * endpoint)
            except OverflowError:
                decay = _INF
        return (math.exp(-b * a0) - decay) / (a * b)

    def _probe_image_end(self, endpoint: float, toward_hi: bool) -> float:
        """Best-effort image bound: cumulative quadrature along a geometric
        ladder toward the endpoint; stops when increments stall, the span cap
        is hit, or the integrand degenerates.  Bounded work: each ladder
        segment uses fixed-resolution Simpson, precision is not the point."""
        a0 = self.xi_anchor
        w_prev = a0
        total = 0.0
        last_increment = None
        steps = 60 if math.isfinite(endpoint) else _PROBE_SPAN
        for k in range(1, steps + 1):
            if math.isfinite(endpoint):
                w_next = endpoint - (endpoint - a0) * 2.0 ** (-k)
            else:
                w_next = a0 + (2.0 ** k) * (1.0 if toward_hi else -1.0)
            if w_next == w_prev:
                break
            try:
                inc = _composite_simpson(self._inv_psi, w_prev, w_next, 256)
            except (EvalDomainError, OverflowError):
                break
            if not math.isfinite(total + inc):
                break
            total += inc
            w_prev = w_next
            if last_increment is not None and abs(inc) <= 1e-14 * max(
                    1.0, abs(total)) and abs(last_increment) <= 1e-14 * max(
                    1.0, abs(total)):
                break
            last_increment = inc
        return total

    def __repr__(self):
        return (f"PsiTriple(kind={self.kind!r}, params={self.params}, "
                f"domain={self.domain}, anchor={self.xi_anchor})")


def _adaptive_simpson(f, a, b, tol):
    """Adaptive Simpson quadrature with Richardson extrapolation."""
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fb, fm, whole, tol, 60)


def _composite_simpson(f, a, b, panels):
    """Fixed-resolution Simpson rule (bounded work, for image probing)."""
    h = (b - a) / panels
    total = f(a) + f(b)
    for i in range(1, panels):
        total += f(a + i * h) * (4.0 if i % 2 else 2.0)
    return total * h / 3.0


def _simpson_rec(f, a, b, fa, fb, fm, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    half = 0.5 * tol
    return (_simpson_rec(f, a, m, fa, fm, flm, left, half, depth - 1)
            + _simpson_rec(f, m, b, fm, fb, frm, right, half, depth - 1))


def _validate_named(kind, params, domain):
    if kind == "constant":
        if params["c"] == 0.0:
            raise PsiValidationError("constant scaling must be nonzero")
    elif kind == "linear":
        if params["a"] == 0.0:
            raise PsiValidationError("linear scaling needs a != 0")
        if domain.lo < 0.0 < domain.hi:
            raise PsiValidationError(
                f"linear scaling vanishes at 0 inside {domain}")
    elif kind == "power":
        if params["a"] == 0.0:
            raise PsiValidationError("power scaling needs a != 0")
        if domain.lo < 0.0:
            raise PsiValidationError(
                "power scaling requires a domain within (0, inf)")
    elif kind == "exponential":
        if params["a"] == 0.0:
            raise PsiValidationError("exponential scaling needs a != 0")


def _validate_custom(expression, derivative, domain, samples=1024):
    """Dense sign check on a compactified grid plus near-endpoint probes."""
    ts = (np.arange(1, samples + 1) - 0.5) / samples
    lo, hi = domain.lo, domain.hi
    if domain.bounded:
        grid = lo + ts * (hi - lo)
    elif math.isfinite(lo):
        grid = lo + ts / (1.0 - ts)
    elif math.isfinite(hi):
        grid = hi - ts / (1.0 - ts)
    else:
        grid = np.tan(np.pi * (ts - 0.5))
    sign = 0.0
    for w in grid:
        try:
            value = ex.evaluate(expression, (float(w),))
            ex.evaluate(derivative, (float(w),))
        except EvalDomainError as err:
            raise PsiValidationError(
                f"custom scaling not evaluable at {float(w)!r}: {err}")
        if value == 0.0:
            raise PsiValidationError(
                f"custom scaling vanishes at {float(w)!r}")
        if sign == 0.0:
            sign = math.copysign(1.0, value)
        elif math.copysign(1.0, value) != sign:
            raise PsiValidationError(
                f"custom scaling changes sign near {float(w)!r}")


def make_psi(kind: str, domain: Interval, anchor: Optional[float] = None,
             **params) -> PsiTriple:
    """Build a scaling triple.

    Kinds and parameters: ``constant`` (c), ``linear`` (a), ``power`` (a, p),
    ``exponential`` (a, b), ``custom`` (expression — string or parsed, single
    variable).  The anchor defaults to the domain midpoint (1 for (0, inf));
    ``xi(anchor) = 0``.
    """
    if kind not in KINDS:
        raise PsiValidationError(f"unknown scaling kind {kind!r}")
    if not isinstance(domain, Interval):
        domain = Interval(*domain)
    if anchor is None:
        anchor = _default_anchor(domain)
    anchor = float(anchor)
    if not domain.contains(anchor):
        raise PsiValidationError(
            f"anchor {anchor!r} outside domain {domain}")

    expression = derivative = None
    if kind == "custom":
        raw = params.pop("expression", None)
        if raw is None:
            raise PsiValidationError("custom scaling needs expression=...")
        expression = raw if isinstance(raw, ex.Expression) else ex.parse(raw, 1)
        derivative = ex.differentiate(expression, 0)
        if params:
            raise PsiValidationError(
                f"unexpected parameters {sorted(params)} for custom kind")
        _validate_custom(expression, derivative, domain)
        clean = {}
    else:
        wanted = {"constant": ("c",), "linear": ("a",), "power": ("a", "p"),
                  "exponential": ("a", "b")}[kind]
        missing = [name for name in wanted if name not in params]
        extra = [name for name in params if name not in wanted]
        if missing or extra:
            raise PsiValidationError(
                f"kind {kind!r} takes parameters {wanted}; "
                f"missing {missing}, unexpected {extra}")
        clean = {name: float(params[name]) for name in wanted}
        _validate_named(kind, clean, domain)

    return PsiTriple(kind, clean, domain, anchor, expression, derivative)
