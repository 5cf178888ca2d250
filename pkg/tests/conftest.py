"""Shared helpers: finite-difference oracles and random-instance generators."""

import math
from fractions import Fraction

import numpy as np
import pytest

from poissonkit import expr as ex
from poissonkit.errors import EvalDomainError
from poissonkit.ratlinalg import RatMat

FD_STEP_SCALE = float(np.finfo(float).eps) ** (1.0 / 3.0)


def fd_step(x):
    return FD_STEP_SCALE * max(1.0, abs(x))


def central_diff(f, x, i, h=None):
    """Central finite difference of f at x along coordinate i."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = fd_step(x[i])
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


# ---------------------------------------------------------------------------
# Random expressions


def random_expression(rng, dimension, depth=3):
    """Random expression over the full grammar, built as a string."""

    def leaf():
        if rng.random() < 0.55:
            return f"x{rng.integers(1, dimension + 1)}"
        value = rng.uniform(-2.0, 2.0)
        return f"({value:.4f})" if value < 0 else f"{value:.4f}"

    def build(d):
        if d <= 0 or rng.random() < 0.2:
            return leaf()
        choice = rng.random()
        if choice < 0.45:
            op = rng.choice(["+", "-", "*", "/"])
            return f"({build(d - 1)} {op} {build(d - 1)})"
        if choice < 0.8:
            fn = rng.choice(["ln", "exp", "sqrt", "sin", "cos", "tan", "arctan"])
            return f"{fn}({build(d - 1)})"
        exponent = rng.choice(["2", "3", "0.5"])
        return f"({build(d - 1)})^{exponent}"

    return ex.parse(build(depth), dimension)


def random_smooth_sample(rng, dimension=3, depth=3, bound=1e4):
    """(expression, point) pair where e and all FD probes evaluate cleanly.

    The two-step Richardson check below keeps only points where the central
    difference is itself trustworthy, so the oracle never blames the symbolic
    derivative for its own truncation error.
    """
    while True:
        e = random_expression(rng, dimension, depth)
        point = rng.uniform(-2.0, 2.0, size=dimension)
        try:
            value = e(point)
            fds = []
            for i in range(dimension):
                h = fd_step(point[i])
                fd1 = central_diff(e.__call__, point, i, h)
                fd2 = central_diff(e.__call__, point, i, h / 2.0)
                fds.append((fd1, fd2))
        except (EvalDomainError, ValueError):
            continue
        if abs(value) > bound:
            continue
        if any(abs(f1) > bound or abs(f1 - f2) > 1e-7 * max(1.0, abs(f1))
               for f1, f2 in fds):
            continue
        return e, point, [f2 for _, f2 in fds]


# ---------------------------------------------------------------------------
# Random exact matrices


def random_invertible_ratmat(rng, n, lo=-3, hi=3):
    from poissonkit.ratlinalg import invert
    from poissonkit.errors import SingularMatrixError

    while True:
        entries = [[Fraction(int(rng.integers(lo, hi + 1))) for _ in range(n)]
                   for _ in range(n)]
        m = RatMat.from_rows(entries)
        try:
            invert(m)
        except SingularMatrixError:
            continue
        return m


def random_skew_ratmat(rng, n, rank=None):
    """Random exact skew matrix; rank prescribed via congruence when given."""
    from poissonkit.ratlinalg import canonical_skew_pattern

    if rank is None:
        upper = [[Fraction(int(rng.integers(-3, 4))) for _ in range(n)]
                 for _ in range(n)]
        rows = [[upper[i][j] if i < j else (-upper[j][i] if i > j else Fraction(0))
                 for j in range(n)] for i in range(n)]
        return RatMat.from_rows(rows)
    assert rank % 2 == 0 and 0 <= rank <= n
    q = random_invertible_ratmat(rng, n)
    return q @ canonical_skew_pattern(n, rank) @ q.transpose()


# ---------------------------------------------------------------------------
# Family instances


def kmk_family(r=1.0):
    """The 3-d epidemic-model instance: S, L, psi = (sqrt(r) w, sqrt(r) w, 1)."""
    from poissonkit.family import build_family
    from poissonkit.psi import POSITIVE, REAL_LINE, make_psi

    S = RatMat.from_rows([[0, 1, 0], [-1, 0, 0], [0, 0, 0]])
    L = RatMat.from_rows([[1, 0, 0], [0, 1, 0], [-1, -1, 1]])
    a = math.sqrt(r)
    psis = (
        make_psi("linear", POSITIVE, anchor=1.0, a=a),
        make_psi("linear", POSITIVE, anchor=1.0, a=a),
        make_psi("constant", REAL_LINE, anchor=0.0, c=1.0),
    )
    return build_family(S, L, psis, box=(POSITIVE, POSITIVE, POSITIVE))


def random_family(rng, n, kinds=("constant", "linear", "exponential", "custom")):
    """Random instance plus per-coordinate lambda-space sampling windows.

    Sampling in lambda space (x = L lam) guarantees every lambda_i lands in
    its scaling domain, which is how valid x points are generated for
    arbitrary L.
    """
    from poissonkit.family import build_family
    from poissonkit.psi import POSITIVE, REAL_LINE, make_psi

    r = 2 * int(rng.integers(0, n // 2 + 1))
    S = random_skew_ratmat(rng, n, rank=r)
    L = random_invertible_ratmat(rng, n)
    psis, windows = [], []
    for _ in range(n):
        kind = kinds[int(rng.integers(0, len(kinds)))]
        sign = -1.0 if rng.random() < 0.3 else 1.0
        if kind == "constant":
            psis.append(make_psi("constant", REAL_LINE,
                                 c=sign * rng.uniform(0.5, 2.0)))
            windows.append((-2.0, 2.0))
        elif kind == "linear":
            psis.append(make_psi("linear", POSITIVE, anchor=1.0,
                                 a=sign * rng.uniform(0.5, 2.0)))
            windows.append((0.5, 2.0))
        elif kind == "exponential":
            psis.append(make_psi("exponential", REAL_LINE,
                                 a=sign * rng.uniform(0.5, 2.0),
                                 b=rng.uniform(-0.6, 0.6)))
            windows.append((-2.0, 2.0))
        else:
            psis.append(make_psi("custom", REAL_LINE, expression="1 + w^2"))
            windows.append((-2.0, 2.0))
    return build_family(S, L, psis), windows


def lambda_space_points(rng, spec, windows, count):
    """Valid sample points: draw lambda in the windows, map x = L lam."""
    lam = np.column_stack([rng.uniform(lo, hi, size=count)
                           for lo, hi in windows])
    return lam @ spec.L.to_float().T


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
