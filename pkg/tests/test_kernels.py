"""Cross-checks between the compiled kernels and the pure-Python reference."""

import math

import numpy as np
import pytest

from poissonkit import _pykernels
from poissonkit import expr as ex
from poissonkit import kernels

from conftest import kmk_family, lambda_space_points, random_family, \
    random_expression

try:
    from poissonkit import _ckernels
    HAVE_EXT = True
except ImportError:
    _ckernels = None
    HAVE_EXT = False

needs_ext = pytest.mark.skipif(not HAVE_EXT, reason="compiled kernels absent")


def _pack_args(pack):
    return (pack.ops, pack.args, pack.consts, pack.index)


@needs_ext
def test_eval_program_parity(rng):
    for _ in range(60):
        e = random_expression(rng, 3, depth=4)
        prog = e.compile()
        for _ in range(10):
            x = rng.uniform(-3, 3, size=3)
            a = _pykernels.eval_program(prog.ops, prog.args, prog.consts,
                                        prog.max_stack, x)
            b = _ckernels.eval_program(prog.ops, prog.args, prog.consts,
                                       prog.max_stack, x)
            if math.isnan(a) or math.isnan(b):
                assert math.isnan(a) and math.isnan(b)
            else:
                assert a == pytest.approx(b, rel=1e-15, abs=1e-300)


@needs_ext
def test_eval_program_many_parity(rng):
    e = ex.parse("sin(x1)*exp(x2) - x3^2", 3)
    prog = e.compile()
    pts = np.ascontiguousarray(rng.uniform(-2, 2, size=(200, 3)))
    a = _pykernels.eval_program_many(prog.ops, prog.args, prog.consts,
                                     prog.max_stack, pts)
    b = _ckernels.eval_program_many(prog.ops, prog.args, prog.consts,
                                    prog.max_stack, pts)
    assert a == pytest.approx(b, rel=1e-15)


@needs_ext
def test_psi_and_assembly_parity(rng):
    for n in (3, 5):
        for _ in range(4):
            spec, windows = random_family(rng, n)
            fp = spec.pack
            for x in lambda_space_points(rng, spec, windows, 10):
                lam = fp.Lamf @ x
                out_a = np.empty(n)
                out_b = np.empty(n)
                sa = _pykernels.psi_values(fp.kind, fp.par, fp.dom_lo,
                                           fp.dom_hi, *_pack_args(fp.psi_pack),
                                           lam, out_a)
                sb = _ckernels.psi_values(fp.kind, fp.par, fp.dom_lo,
                                          fp.dom_hi, *_pack_args(fp.psi_pack),
                                          lam, out_b)
                assert sa == sb == -1
                assert out_a == pytest.approx(out_b, rel=1e-15)

                pa = np.empty(n)
                pb = np.empty(n)
                sa = _pykernels.psi_prime_values(
                    fp.kind, fp.par, fp.dom_lo, fp.dom_hi,
                    *_pack_args(fp.psi_prime_pack), lam, pa)
                sb = _ckernels.psi_prime_values(
                    fp.kind, fp.par, fp.dom_lo, fp.dom_hi,
                    *_pack_args(fp.psi_prime_pack), lam, pb)
                assert sa == sb == -1
                assert pa == pytest.approx(pb, rel=1e-15)

                Ja = np.empty((n, n))
                Jb = np.empty((n, n))
                _pykernels.assemble_J(fp.Lf, fp.Sf, out_a, Ja)
                _ckernels.assemble_J(fp.Lf, fp.Sf, out_b, Jb)
                scale = max(1.0, np.abs(Ja).max())
                assert np.allclose(Ja, Jb, rtol=1e-13, atol=1e-13 * scale)

                da = np.empty((n, n, n))
                db = np.empty((n, n, n))
                _pykernels.assemble_dJ(fp.Lf, fp.Sf, fp.Lamf, out_a, pa, da)
                _ckernels.assemble_dJ(fp.Lf, fp.Sf, fp.Lamf, out_b, pb, db)
                dscale = max(1.0, np.abs(da).max())
                assert np.allclose(da, db, rtol=1e-12, atol=1e-12 * dscale)

                ra = _pykernels.jacobi_max(Ja, da)
                rb = _ckernels.jacobi_max(Jb, db)
                assert abs(ra[0] - rb[0]) <= 1e-9 * max(1.0, scale * dscale)


@needs_ext
def test_psi_domain_violation_parity():
    spec = kmk_family()
    fp = spec.pack
    lam = np.array([-1.0, 2.0, 6.0])  # lambda_1 outside (0, inf)
    out = np.empty(3)
    sa = _pykernels.psi_values(fp.kind, fp.par, fp.dom_lo, fp.dom_hi,
                               *_pack_args(fp.psi_pack), lam, out)
    sb = _ckernels.psi_values(fp.kind, fp.par, fp.dom_lo, fp.dom_hi,
                              *_pack_args(fp.psi_pack), lam, out)
    assert sa == sb == 0


def _grad_pack(spec, h_text):
    H = ex.parse(h_text, spec.n)
    return kernels.ProgramPack(
        [ex.differentiate(H, i).compile() for i in range(spec.n)])


@needs_ext
def test_rhs_and_rk4_parity(rng):
    spec = kmk_family()
    gp = _grad_pack(spec, "x3")
    fp = spec.pack
    for _ in range(10):
        x = rng.uniform(0.3, 3.0, size=3)
        oa = np.empty(3)
        ob = np.empty(3)
        sa = _pykernels.rhs(fp.Lf, fp.Sf, fp.Lamf, fp.kind, fp.par,
                            fp.dom_lo, fp.dom_hi, *_pack_args(fp.psi_pack),
                            *_pack_args(gp), x, oa)
        sb = _ckernels.rhs(fp.Lf, fp.Sf, fp.Lamf, fp.kind, fp.par,
                           fp.dom_lo, fp.dom_hi, *_pack_args(fp.psi_pack),
                           *_pack_args(gp), x, ob)
        assert sa == sb == -1
        assert oa == pytest.approx(ob, rel=1e-14)

    x0 = np.array([1.0, 2.0, 3.0])
    nsteps = 500
    sa_states = np.empty((nsteps + 1, 3))
    sb_states = np.empty((nsteps + 1, 3))
    ca = _pykernels.rk4_path(fp.Lf, fp.Sf, fp.Lamf, fp.kind, fp.par,
                             fp.dom_lo, fp.dom_hi, *_pack_args(fp.psi_pack),
                             *_pack_args(gp), x0, 1e-2, nsteps,
                             fp.box_lo, fp.box_hi, sa_states)
    cb = _ckernels.rk4_path(fp.Lf, fp.Sf, fp.Lamf, fp.kind, fp.par,
                            fp.dom_lo, fp.dom_hi, *_pack_args(fp.psi_pack),
                            *_pack_args(gp), x0, 1e-2, nsteps,
                            fp.box_lo, fp.box_hi, sb_states)
    assert ca == cb == (0, nsteps, -1)
    assert sa_states == pytest.approx(sb_states, rel=1e-9, abs=1e-12)


@needs_ext
def test_rk4_domain_exit_parity():
    # H = x2 gives dx3/dt = -x1 x2 < 0: x3 crosses the orthant floor
    spec = kmk_family()
    gp = _grad_pack(spec, "x2")
    fp = spec.pack
    x0 = np.array([1.0, 1.0, 1.0])
    nsteps = 2000
    a_states = np.empty((nsteps + 1, 3))
    b_states = np.empty((nsteps + 1, 3))
    ca = _pykernels.rk4_path(fp.Lf, fp.Sf, fp.Lamf, fp.kind, fp.par,
                             fp.dom_lo, fp.dom_hi, *_pack_args(fp.psi_pack),
                             *_pack_args(gp), x0, 1e-2, nsteps,
                             fp.box_lo, fp.box_hi, a_states)
    cb = _ckernels.rk4_path(fp.Lf, fp.Sf, fp.Lamf, fp.kind, fp.par,
                            fp.dom_lo, fp.dom_hi, *_pack_args(fp.psi_pack),
                            *_pack_args(gp), x0, 1e-2, nsteps,
                            fp.box_lo, fp.box_hi, b_states)
    assert ca == cb
    assert ca[0] in (1, 2)  # the trajectory must leave the positive orthant
    steps = ca[1]
    assert a_states[:steps + 1] == pytest.approx(b_states[:steps + 1],
                                                 rel=1e-9, abs=1e-12)


def test_facade_reports_backend():
    assert kernels.BACKEND in ("cython", "python")


def test_opcode_table_matches_reference():
    # _ckernels pins expr.OPCODES as C constants; catch accidental renumber
    assert ex.OPCODES == {
        "const": 0, "var": 1, "neg": 2, "add": 3, "sub": 4, "mul": 5,
        "div": 6, "pow": 7, "ln": 8, "exp": 9, "sqrt": 10, "sin": 11,
        "cos": 12, "tan": 13, "arctan": 14,
    }
