import numpy as np
import pytest

from poissonkit.errors import (DomainViolation, SingularMatrixError,
                               SkewnessError)
from poissonkit.family import (build_family, eval_J, eval_J_partials,
                               lambdas, separable)
from poissonkit.psi import Interval, POSITIVE, REAL_LINE, make_psi
from poissonkit.ratlinalg import RatMat

from conftest import (central_diff, fd_step, kmk_family,
                      lambda_space_points, random_family)

KMK_PATTERN = np.array([[0.0, 1.0, -1.0], [-1.0, 0.0, 1.0], [1.0, -1.0, 0.0]])


def test_build_kmk_has_rank_two():
    spec = kmk_family(r=1.0)
    assert spec.rank == 2
    assert spec.Lambda == RatMat.from_rows([[1, 0, 0], [0, 1, 0], [1, 1, 1]])


def test_build_zero_core_has_rank_zero():
    S = RatMat.zeros(3, 3)
    L = RatMat.from_rows([[2, 0, 0], [0, 1, 1], [0, 0, 1]])
    psis = tuple(make_psi("constant", REAL_LINE, c=1.0) for _ in range(3))
    spec = build_family(S, L, psis)
    assert spec.rank == 0
    assert np.all(eval_J(spec, [0.3, -1.0, 2.0]) == 0.0)


def test_build_rejects_singular_L():
    S = RatMat.zeros(2, 2)
    L = RatMat.from_rows([[1, 1], [1, 1]])
    psis = tuple(make_psi("constant", REAL_LINE, c=1.0) for _ in range(2))
    with pytest.raises(SingularMatrixError):
        build_family(S, L, psis)


def test_build_rejects_non_skew_S():
    S = RatMat.from_rows([[0, 1], [1, 0]])
    psis = tuple(make_psi("constant", REAL_LINE, c=1.0) for _ in range(2))
    with pytest.raises(SkewnessError):
        build_family(S, RatMat.identity(2), psis)


def test_kmk_closed_form_at_reference_point():
    spec = kmk_family(r=1.0)
    J = eval_J(spec, [1.0, 2.0, 3.0])
    assert J == pytest.approx(2.0 * KMK_PATTERN, rel=1e-13)


@pytest.mark.parametrize("r", [1.0, 2.5])
def test_kmk_closed_form_at_random_points(r, rng):
    spec = kmk_family(r=r)
    for _ in range(50):
        x = rng.uniform(0.1, 10.0, size=3)
        expected = r * x[0] * x[1] * KMK_PATTERN
        assert eval_J(spec, x) == pytest.approx(expected, rel=1e-12)


def test_constant_scalings_reproduce_core():
    S = RatMat.from_rows([[0, 2, 0], [-2, 0, 1], [0, -1, 0]])
    psis = tuple(make_psi("constant", REAL_LINE, c=1.0) for _ in range(3))
    spec = build_family(S, RatMat.identity(3), psis)
    for x in ([0.0, 0.0, 0.0], [3.0, -1.0, 0.5]):
        assert np.array_equal(eval_J(spec, x), S.to_float())


def test_separable_two_dim_product():
    S = RatMat.from_rows([[0, 1], [-1, 0]])
    psis = (make_psi("linear", POSITIVE, a=1.0),
            make_psi("linear", POSITIVE, a=1.0))
    spec = separable(S, psis)
    J = eval_J(spec, [3.0, 5.0])
    assert J[0, 1] == pytest.approx(15.0, rel=1e-14)


def test_separable_cyclic_quadratic(rng):
    S = RatMat.from_rows([[0, 1, -1], [-1, 0, 1], [1, -1, 0]])
    psis = tuple(make_psi("linear", POSITIVE, a=1.0) for _ in range(3))
    spec = separable(S, psis)
    Sf = S.to_float()
    for _ in range(25):
        x = rng.uniform(0.2, 5.0, size=3)
        J = eval_J(spec, x)
        expected = Sf * np.outer(x, x)
        assert J == pytest.approx(expected, rel=1e-13)


def test_separable_lambda_is_identity(rng):
    psis = tuple(make_psi("constant", REAL_LINE, c=2.0) for _ in range(3))
    spec = separable(RatMat.zeros(3, 3), psis)
    x = rng.uniform(-4, 4, size=3)
    assert np.array_equal(lambdas(spec, x), x)


def test_general_reduces_to_separable_when_L_identity(rng):
    for _ in range(5):
        spec, windows = random_family(rng, 3)
        spec_sep = separable(spec.S, spec.psis,
                             box=tuple(REAL_LINE for _ in range(3)))
        Sf = spec.S.to_float()
        for _ in range(10):
            lam = np.array([rng.uniform(lo + 0.1, hi - 0.1)
                            for lo, hi in windows])
            psi_at = np.array([t.psi(v) for t, v in zip(spec.psis, lam)])
            expected = Sf * np.outer(psi_at, psi_at)
            assert eval_J(spec_sep, lam) == pytest.approx(expected, rel=1e-13)


def test_eval_J_exactly_skew(rng):
    for _ in range(5):
        spec, windows = random_family(rng, 4)
        for x in lambda_space_points(rng, spec, windows, 20):
            J = eval_J(spec, x)
            assert np.array_equal(J, -J.T)
            assert np.all(np.diag(J) == 0.0)


def test_partials_vanish_for_constant_scalings():
    psis = tuple(make_psi("constant", REAL_LINE, c=1.5) for _ in range(3))
    L = RatMat.from_rows([[1, 2, 0], [0, 1, 0], [1, 0, 3]])
    S = RatMat.from_rows([[0, 1, 0], [-1, 0, 2], [0, -2, 0]])
    spec = build_family(S, L, psis)
    dJ = eval_J_partials(spec, [0.5, -1.0, 2.0])
    assert np.all(dJ == 0.0)


def test_kmk_partial_closed_form():
    spec = kmk_family(r=1.0)
    dJ = eval_J_partials(spec, [1.0, 2.0, 3.0])
    # J_12 = x1 x2, so d J_12 / d x1 = x2 = 2
    assert dJ[0, 1, 0] == pytest.approx(2.0, rel=1e-13)
    assert dJ[0, 1, 1] == pytest.approx(1.0, rel=1e-13)
    assert dJ[0, 1, 2] == 0.0


def test_partials_match_finite_differences(rng):
    for n in (3, 4):
        for _ in range(4):
            spec, windows = random_family(rng, n)
            for x in lambda_space_points(rng, spec, windows, 5):
                dJ = eval_J_partials(spec, x)
                for l in range(n):
                    h = fd_step(x[l])
                    xp, xm = x.copy(), x.copy()
                    xp[l] += h
                    xm[l] -= h
                    fd = (eval_J(spec, xp) - eval_J(spec, xm)) / (2 * h)
                    assert dJ[:, :, l] == pytest.approx(
                        fd, rel=1e-6, abs=1e-6)


def test_partials_skew_in_leading_indices(rng):
    spec, windows = random_family(rng, 4)
    for x in lambda_space_points(rng, spec, windows, 10):
        dJ = eval_J_partials(spec, x)
        assert np.array_equal(dJ, -dJ.transpose(1, 0, 2))


def test_domain_violation_names_coordinate():
    spec = kmk_family()
    with pytest.raises(DomainViolation) as err:
        eval_J(spec, [-1.0, 2.0, 3.0])
    assert err.value.coordinate == 0

    # same data but with an unrestricted box: the lambda check fires instead
    spec_free = build_family(spec.S, spec.L, spec.psis)
    with pytest.raises(DomainViolation) as err:
        eval_J(spec_free, [-1.0, 2.0, 3.0])
    assert err.value.coordinate == 0


def test_lambda_violation_beyond_box():
    # x inside a generous box while lambda_3 = x1+x2+x3 stays valid but
    # lambda_1 = x1 leaves (0, inf)
    spec = kmk_family()
    wide = build_family(spec.S, spec.L, spec.psis,
                        box=[Interval(-5.0, 5.0)] * 3)
    with pytest.raises(DomainViolation) as err:
        eval_J(wide, [2.0, -1.0, 3.0])
    assert err.value.coordinate == 1
