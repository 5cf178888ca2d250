"""Structure-matrix family: constant core S, mixing matrix L, scalings psi.

A :class:`FamilySpec` holds the full datum.  The structure matrix at a point
is assembled as ``J(x) = M S M^T`` with ``M = L diag(psi_k(lambda_k(x)))``
and ``lambda(x) = Lambda x``, which keeps it exactly skew-symmetric entry by
entry.  Constant matrices stay exact rationals; evaluation uses cached float
copies inside a kernel pack.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import DomainViolation, SkewnessError
from .psi import Interval, PsiTriple, REAL_LINE
from .ratlinalg import RatMat, invert, kernel_basis

__all__ = ["FamilySpec", "build_family", "separable", "eval_J",
           "eval_J_partials", "lambdas"]


class FamilySpec:
    """Validated family instance; treat as immutable after construction."""

    def __init__(self, S: RatMat, L: RatMat, Lambda: RatMat,
                 psis: Tuple[PsiTriple, ...], box: Tuple[Interval, ...],
                 rank: int, kernel_vectors):
        self.n = S.rows
        self.S = S
        self.L = L
        self.Lambda = Lambda
        self.psis = psis
        self.box = box
        self.rank = rank
        self.kernel_vectors = kernel_vectors
        self.pack = kernels.FamilyPack(
            self.n,
            L.to_float(), S.to_float(), Lambda.to_float(),
            [t.kind_code for t in psis],
            [t.kernel_params() for t in psis],
            [t.domain.lo for t in psis],
            [t.domain.hi for t in psis],
            [t.kernel_programs()[0] for t in psis],
            [t.kernel_programs()[1] for t in psis],
            [iv.lo for iv in box],
            [iv.hi for iv in box],
        )

    def __repr__(self):
        kinds = ",".join(t.kind for t in self.psis)
        return (f"FamilySpec(n={self.n}, rank={self.rank}, psis=[{kinds}])")


def build_family(S: RatMat, L: RatMat, psis: Sequence[PsiTriple],
                 box: Optional[Sequence[Interval]] = None) -> FamilySpec:
    """Validate and assemble a family instance.

    ``box`` is the declared x-domain (defaults to all of R^n); membership of
    both x and every lambda_i(x) is re-checked at each evaluation, because
    for general L the containment lambda_i(box) in Omega_i is not automatic.
    """
    n = S.rows
    if not S.is_square or not L.is_square or L.rows != n:
        raise ValueError("S and L must be square matrices of equal size")
    if len(psis) != n:
        raise ValueError(f"expected {n} scaling triples, got {len(psis)}")
    if not S.is_skew():
        raise SkewnessError("S must be exactly skew-symmetric")
    Lambda = invert(L)
    vectors, rank = kernel_basis(S)
    if box is None:
        box = tuple(REAL_LINE for _ in range(n))
    else:
        box = tuple(iv if isinstance(iv, Interval) else Interval(*iv)
                    for iv in box)
        if len(box) != n:
            raise ValueError(f"expected {n} box intervals, got {len(box)}")
    return FamilySpec(S, L, Lambda, tuple(psis), box, rank, tuple(vectors))


def separable(S: RatMat, psis: Sequence[PsiTriple],
              box: Optional[Sequence[Interval]] = None) -> FamilySpec:
    """Special case L = I: J_ij(x) = S_ij psi_i(x_i) psi_j(x_j)."""
    if box is None:
        box = tuple(t.domain for t in psis)
    return build_family(S, RatMat.identity(S.rows), psis, box)


def _check_box(spec: FamilySpec, x: np.ndarray):
    for i in range(spec.n):
        if not spec.box[i].contains(float(x[i])):
            raise DomainViolation(
                f"x{i + 1} = {float(x[i])!r} outside declared domain "
                f"{spec.box[i]}", coordinate=i)


def lambdas(spec: FamilySpec, x) -> np.ndarray:
    """lambda(x) = Lambda @ x (float path)."""
    return spec.pack.Lamf @ np.asarray(x, dtype=np.float64)


def eval_J(spec: FamilySpec, x) -> np.ndarray:
    """Structure matrix at x; exactly skew by assembly.

    Raises :class:`DomainViolation` naming the coordinate when x leaves the
    declared box or some lambda_i(x) leaves the scaling domain Omega_i.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.n,):
        raise ValueError(f"point must have shape ({spec.n},)")
    _check_box(spec, x)
    psiv = kernels.psi_values(spec.pack, spec.pack.Lamf @ x)
    return kernels.assemble_J(spec.pack, psiv)


def eval_J_partials(spec: FamilySpec, x) -> np.ndarray:
    """All partial derivatives dJ[i, j, l] = d J_ij / d x_l at x.

    Chain rule on the assembly formula (derivation in docs/derivation.md):
    dJ_ij/dx_l = sum_{k,m} L_ik S_km L_jm [psi_k' Lam_kl psi_m
                                           + psi_k psi_m' Lam_ml].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.n,):
        raise ValueError(f"point must have shape ({spec.n},)")
    _check_box(spec, x)
    lam = spec.pack.Lamf @ x
    psiv = kernels.psi_values(spec.pack, lam)
    psipv = kernels.psi_prime_values(spec.pack, lam)
    return kernels.assemble_dJ(spec.pack, psiv, psipv)
