"""Backend facade for the hot kernels.

At import time this module picks the compiled Cython backend when available
and falls back to the pure-Python reference implementation otherwise.  Set
``POISSONKIT_PURE_PYTHON=1`` to force the fallback (used by the benchmark and
by tests that compare the two).

The facade also owns the packed array formats the backends consume:
:class:`ProgramPack` flattens compiled expressions, :class:`FamilyPack`
flattens one structure-matrix family (constant matrices, scaling-function
descriptors, domains).
"""

import os

import numpy as np

from . import _pykernels
from .errors import DomainViolation, EvalDomainError
from .expr import Program

if os.environ.get("POISSONKIT_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND_NAME

PSI_CONSTANT = _pykernels.PSI_CONSTANT
PSI_LINEAR = _pykernels.PSI_LINEAR
PSI_POWER = _pykernels.PSI_POWER
PSI_EXPONENTIAL = _pykernels.PSI_EXPONENTIAL
PSI_CUSTOM = _pykernels.PSI_CUSTOM

MAX_STACK = 256  # stack buffer bound shared with the compiled backend

_EMPTY_I32 = np.zeros(0, dtype=np.int32)
_EMPTY_F64 = np.zeros(0, dtype=np.float64)


class ProgramPack:
    """A list of compiled expressions flattened into contiguous arrays.

    ``index[i] = (ops_offset, ops_length, consts_offset, max_stack)``; an
    absent program is a zero-length row.
    """

    __slots__ = ("ops", "args", "consts", "index", "count")

    def __init__(self, programs):
        ops, args, consts, index = [], [], [], []
        for prog in programs:
            if prog is None:
                index.append((0, 0, 0, 0))
                continue
            if prog.max_stack > MAX_STACK:
                raise ValueError("expression too deeply nested to compile")
            index.append((len(ops), len(prog.ops), len(consts),
                          prog.max_stack))
            ops.extend(prog.ops.tolist())
            args.extend(prog.args.tolist())
            consts.extend(prog.consts.tolist())
        self.count = len(index)
        self.ops = np.asarray(ops, dtype=np.int32) if ops else _EMPTY_I32
        self.args = np.asarray(args, dtype=np.int32) if args else _EMPTY_I32
        self.consts = (np.asarray(consts, dtype=np.float64)
                       if consts else _EMPTY_F64)
        self.index = np.asarray(index, dtype=np.int32).reshape(self.count, 4)


class FamilyPack:
    """Flat float/int view of one family instance for the kernels."""

    __slots__ = ("n", "Lf", "Sf", "Lamf", "kind", "par", "dom_lo", "dom_hi",
                 "psi_pack", "psi_prime_pack", "box_lo", "box_hi")

    def __init__(self, n, Lf, Sf, Lamf, kinds, params, dom_lo, dom_hi,
                 psi_programs, psi_prime_programs, box_lo, box_hi):
        self.n = n
        self.Lf = np.ascontiguousarray(Lf, dtype=np.float64)
        self.Sf = np.ascontiguousarray(Sf, dtype=np.float64)
        self.Lamf = np.ascontiguousarray(Lamf, dtype=np.float64)
        self.kind = np.asarray(kinds, dtype=np.int32)
        self.par = np.ascontiguousarray(params, dtype=np.float64).reshape(n, 3)
        self.dom_lo = np.asarray(dom_lo, dtype=np.float64)
        self.dom_hi = np.asarray(dom_hi, dtype=np.float64)
        self.psi_pack = ProgramPack(psi_programs)
        self.psi_prime_pack = ProgramPack(psi_prime_programs)
        self.box_lo = np.asarray(box_lo, dtype=np.float64)
        self.box_hi = np.asarray(box_hi, dtype=np.float64)


def eval_program(program: Program, x) -> float:
    """Raw evaluation of a compiled expression; NaN = domain violation."""
    return _impl.eval_program(program.ops, program.args, program.consts,
                              program.max_stack,
                              np.asarray(x, dtype=np.float64))


def eval_program_checked(program: Program, x) -> float:
    value = eval_program(program, x)
    if not np.isfinite(value):
        raise EvalDomainError("expression evaluation left the real domain")
    return value


def eval_program_many(program: Program, points) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    return _impl.eval_program_many(program.ops, program.args, program.consts,
                                   program.max_stack, pts)


def psi_values(fp: FamilyPack, lam) -> np.ndarray:
    out = np.empty(fp.n, dtype=np.float64)
    pk = fp.psi_pack
    status = _impl.psi_values(fp.kind, fp.par, fp.dom_lo, fp.dom_hi,
                              pk.ops, pk.args, pk.consts, pk.index,
                              np.asarray(lam, dtype=np.float64), out)
    if status >= 0:
        raise DomainViolation(
            f"lambda_{status + 1} = {lam[status]!r} violates the domain of "
            f"scaling function {status + 1}", coordinate=status)
    return out


def psi_prime_values(fp: FamilyPack, lam) -> np.ndarray:
    out = np.empty(fp.n, dtype=np.float64)
    pk = fp.psi_prime_pack
    status = _impl.psi_prime_values(fp.kind, fp.par, fp.dom_lo, fp.dom_hi,
                                    pk.ops, pk.args, pk.consts, pk.index,
                                    np.asarray(lam, dtype=np.float64), out)
    if status >= 0:
        raise DomainViolation(
            f"lambda_{status + 1} = {lam[status]!r} violates the domain of "
            f"scaling function {status + 1}", coordinate=status)
    return out


def assemble_J(fp: FamilyPack, psiv) -> np.ndarray:
    out = np.empty((fp.n, fp.n), dtype=np.float64)
    _impl.assemble_J(fp.Lf, fp.Sf, np.asarray(psiv, dtype=np.float64), out)
    return out


def assemble_dJ(fp: FamilyPack, psiv, psipv) -> np.ndarray:
    out = np.empty((fp.n, fp.n, fp.n), dtype=np.float64)
    _impl.assemble_dJ(fp.Lf, fp.Sf, fp.Lamf,
                      np.asarray(psiv, dtype=np.float64),
                      np.asarray(psipv, dtype=np.float64), out)
    return out


def jacobi_max(J, dJ):
    """Returns (max_abs_residual, (i, j, k) witness)."""
    value, i, j, k = _impl.jacobi_max(
        np.ascontiguousarray(J, dtype=np.float64),
        np.ascontiguousarray(dJ, dtype=np.float64))
    return value, (i, j, k)


def rhs(fp: FamilyPack, grad_pack: ProgramPack, x) -> np.ndarray:
    out = np.empty(fp.n, dtype=np.float64)
    pk, gp = fp.psi_pack, grad_pack
    status = _impl.rhs(fp.Lf, fp.Sf, fp.Lamf, fp.kind, fp.par,
                       fp.dom_lo, fp.dom_hi,
                       pk.ops, pk.args, pk.consts, pk.index,
                       gp.ops, gp.args, gp.consts, gp.index,
                       np.asarray(x, dtype=np.float64), out)
    if status == -2:
        raise EvalDomainError("vector field evaluation left the real domain")
    if status >= 0:
        raise DomainViolation(
            f"lambda_{status + 1} violates its domain", coordinate=status)
    return out


def rk4_path(fp: FamilyPack, grad_pack: ProgramPack, x0, h, nsteps):
    """Returns (states, code, steps_done, coord); states[:steps_done+1] valid.

    code: 0 completed, 1 lambda-domain violation, 2 box exit, 3 non-finite.
    """
    states = np.empty((nsteps + 1, fp.n), dtype=np.float64)
    pk, gp = fp.psi_pack, grad_pack
    code, steps_done, coord = _impl.rk4_path(
        fp.Lf, fp.Sf, fp.Lamf, fp.kind, fp.par, fp.dom_lo, fp.dom_hi,
        pk.ops, pk.args, pk.consts, pk.index,
        gp.ops, gp.args, gp.consts, gp.index,
        np.asarray(x0, dtype=np.float64), float(h), int(nsteps),
        fp.box_lo, fp.box_hi, states)
    return states, code, steps_done, coord
