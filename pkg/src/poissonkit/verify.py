"""Structure-matrix checks: skew-symmetry, Jacobi identities, rank constancy.

Everything here works on evaluation callbacks (``Jfun(x) -> n x n`` and
``dJfun(x) -> n x n x n`` with the last axis the derivative direction), so
candidate matrices from outside the built-in family can be checked too.
Residuals are reported raw and scale-normalized by
``max(1, max|J| * max|dJ|)`` so tolerances carry across instances of wildly
different magnitude.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import DomainViolation, PoissonKitError
from .family import FamilySpec, eval_J, eval_J_partials

__all__ = [
    "ResidualReport", "check_skew", "jacobi_residual", "jacobi_residual_fd",
    "fd_partials", "float_rank", "sample_points", "verify_family",
]

_FD_SCALE = float(np.finfo(np.float64).eps) ** (1.0 / 3.0)


def float_rank(matrix, rtol: float = 1e-9) -> int:
    """Numerical rank by completely pivoted Gaussian elimination.

    An elimination step is taken while the largest remaining entry exceeds
    ``rtol`` times the largest pivot seen (the matrix scale).
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("rank needs a 2-d array")
    rows, cols = a.shape
    scale = np.abs(a).max(initial=0.0)
    if scale == 0.0:
        return 0
    r = 0
    while r < min(rows, cols):
        sub = np.abs(a[r:, r:])
        i, j = np.unravel_index(sub.argmax(), sub.shape)
        if sub[i, j] <= rtol * scale:
            break
        a[[r, r + i]] = a[[r + i, r]]
        a[:, [r, r + j]] = a[:, [r + j, r]]
        a[r + 1:] -= np.outer(a[r + 1:, r] / a[r, r], a[r])
        r += 1
    return r


def _call(fun, x):
    try:
        return fun(np.asarray(x, dtype=np.float64))
    except DomainViolation as err:
        raise DomainViolation(
            f"{err} while evaluating at {np.asarray(x).tolist()}",
            coordinate=err.coordinate)


def check_skew(Jfun: Callable, points) -> float:
    """Max |J_ij + J_ji| over the sample points (0 for honest assemblies)."""
    worst = 0.0
    for x in np.atleast_2d(np.asarray(points, dtype=np.float64)):
        J = _call(Jfun, x)
        worst = max(worst, float(np.abs(J + J.T).max()))
    return worst


def jacobi_residual(Jfun: Callable, dJfun: Callable, x) -> float:
    """Max over index triples of the Jacobi sum, with analytic partials."""
    J = _call(Jfun, x)
    dJ = _call(dJfun, x)
    value, _ = kernels.jacobi_max(J, dJ)
    return value


def fd_partials(Jfun: Callable, x, h: Optional[float] = None) -> np.ndarray:
    """Central-difference partials dJ[i, j, l]; the independent oracle path."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    J0 = _call(Jfun, x)
    dJ = np.empty(J0.shape + (n,))
    for l in range(n):
        hl = h if h is not None else _FD_SCALE * max(1.0, abs(x[l]))
        xp, xm = x.copy(), x.copy()
        xp[l] += hl
        xm[l] -= hl
        dJ[:, :, l] = (_call(Jfun, xp) - _call(Jfun, xm)) / (2.0 * hl)
    return dJ


def jacobi_residual_fd(Jfun: Callable, x, h: Optional[float] = None) -> float:
    """Jacobi sum with finite-difference partials; anti-regression oracle."""
    J = _call(Jfun, np.asarray(x, dtype=np.float64))
    dJ = fd_partials(Jfun, x, h)
    value, _ = kernels.jacobi_max(J, dJ)
    return value


@dataclass
class ResidualReport:
    """Verification sweep outcome; reproducible from the recorded seed."""

    n: int
    points: int
    seed: int
    inset: float
    expected_rank: int
    max_skew: float = 0.0
    max_jacobi: float = 0.0
    max_jacobi_normalized: float = 0.0
    max_jacobi_fd: float = 0.0
    max_jacobi_fd_normalized: float = 0.0
    worst_triple: Tuple[int, int, int] = (0, 0, 0)
    worst_point: Tuple[float, ...] = ()
    rank_histogram: Dict[int, int] = field(default_factory=dict)

    def rank_constant(self) -> bool:
        return set(self.rank_histogram) <= {self.expected_rank}

    def passed(self, tol: float = 1e-9, tol_fd: float = 1e-6) -> bool:
        return (self.max_skew == 0.0
                and self.max_jacobi_normalized < tol
                and self.max_jacobi_fd_normalized < tol_fd
                and self.rank_constant())

    def to_text(self) -> str:
        ranks = ", ".join(f"rank {r}: {c}" for r, c in
                          sorted(self.rank_histogram.items()))
        lines = [
            f"structure-matrix verification ({self.points} points, "
            f"seed {self.seed}, inset {self.inset:g})",
            f"  max skew asymmetry          {self.max_skew:.17g}",
            f"  max Jacobi residual         {self.max_jacobi:.17g} "
            f"(normalized {self.max_jacobi_normalized:.17g})",
            f"  max Jacobi residual (FD)    {self.max_jacobi_fd:.17g} "
            f"(normalized {self.max_jacobi_fd_normalized:.17g})",
            f"  worst triple                (i, j, k) = "
            f"{tuple(v + 1 for v in self.worst_triple)} at x = "
            f"{list(self.worst_point)}",
            f"  rank histogram              {ranks or 'empty'} "
            f"(expected {self.expected_rank})",
        ]
        return "\n".join(lines)

    def to_json(self) -> str:
        payload = {
            "n": self.n,
            "points": self.points,
            "seed": self.seed,
            "inset": self.inset,
            "expected_rank": self.expected_rank,
            "max_skew": self.max_skew,
            "max_jacobi": self.max_jacobi,
            "max_jacobi_normalized": self.max_jacobi_normalized,
            "max_jacobi_fd": self.max_jacobi_fd,
            "max_jacobi_fd_normalized": self.max_jacobi_fd_normalized,
            "worst_triple": list(self.worst_triple),
            "worst_point": list(self.worst_point),
            "rank_histogram": {str(k): v for k, v in
                               sorted(self.rank_histogram.items())},
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def sample_points(spec: FamilySpec, count: int, seed: int = 0,
                  inset: float = 0.1,
                  windows: Optional[Sequence[Tuple[float, float]]] = None,
                  clip: float = 10.0) -> np.ndarray:
    """Valid sample points for a family instance.

    Points are drawn uniformly in lambda space (each lambda_i inside its
    scaling domain, clipped to a finite window and shrunk by ``inset`` from
    each side) and mapped through x = L lambda, which guarantees the scaling
    domains hold; draws whose x leaves the declared box are rejected.
    """
    rng = np.random.default_rng(seed)
    if windows is None:
        windows = []
        for t in spec.psis:
            iv = t.domain.clipped(clip)
            windows.append((iv.lo, iv.hi))
    spans = []
    for lo, hi in windows:
        pad = inset * (hi - lo)
        spans.append((lo + pad, hi - pad))
    Lf = spec.pack.Lf
    out = np.empty((count, spec.n))
    have = 0
    for _ in range(1000 * count):
        lam = np.array([rng.uniform(lo, hi) for lo, hi in spans])
        x = Lf @ lam
        if all(spec.box[i].contains(float(x[i])) for i in range(spec.n)):
            out[have] = x
            have += 1
            if have == count:
                return out
    raise PoissonKitError(
        "could not draw valid sample points; the declared box and the "
        "scaling domains may be incompatible")


def verify_family(spec: FamilySpec, points: int = 100, seed: int = 0,
                  inset: float = 0.1,
                  windows: Optional[Sequence[Tuple[float, float]]] = None,
                  rank_rtol: float = 1e-9) -> ResidualReport:
    """Full sweep: skew (exact), Jacobi analytic + FD, rank constancy."""
    xs = sample_points(spec, points, seed=seed, inset=inset, windows=windows)
    report = ResidualReport(n=spec.n, points=points, seed=seed, inset=inset,
                            expected_rank=spec.rank)
    for x in xs:
        J = eval_J(spec, x)
        dJ = eval_J_partials(spec, x)
        report.max_skew = max(report.max_skew,
                              float(np.abs(J + J.T).max()))
        scale = max(1.0, float(np.abs(J).max()) * max(1.0, float(np.abs(dJ).max())))
        raw, triple = kernels.jacobi_max(J, dJ)
        if raw / scale >= report.max_jacobi_normalized:
            report.worst_triple = triple
            report.worst_point = tuple(float(v) for v in x)
        report.max_jacobi = max(report.max_jacobi, raw)
        report.max_jacobi_normalized = max(report.max_jacobi_normalized,
                                           raw / scale)
        fd_raw, _ = kernels.jacobi_max(J, fd_partials(
            lambda p: eval_J(spec, p), x))
        report.max_jacobi_fd = max(report.max_jacobi_fd, fd_raw)
        report.max_jacobi_fd_normalized = max(report.max_jacobi_fd_normalized,
                                              fd_raw / scale)
        r = float_rank(J, rtol=rank_rtol)
        report.rank_histogram[r] = report.rank_histogram.get(r, 0) + 1
    return report
