"""Pure-Python/numpy fallback for the hot evaluation kernels.

This module is the reference implementation of the kernel contract; the
compiled module ``_ckernels`` mirrors it operation for operation.  All
functions work on plain arrays, return error codes instead of raising, and
signal scalar domain violations with NaN so the two backends stay
interchangeable.

Error-code conventions:
  * ``eval_program``             NaN result = domain violation.
  * ``psi_values`` family        -1 ok, else the violating coordinate.
  * ``rhs``                      -1 ok, 0..n-1 lambda violation, -2 non-finite
                                 gradient or field.
  * ``rk4_path``                 (code, steps_done, coord) with code 0 = ran to
                                 completion, 1 = lambda domain violation,
                                 2 = state left the box, 3 = non-finite state.
"""

import math

import numpy as np

from .expr import OPCODES

BACKEND_NAME = "python"

# psi kind codes (mirrored as C constants in _ckernels.pyx)
PSI_CONSTANT = 0
PSI_LINEAR = 1
PSI_POWER = 2
PSI_EXPONENTIAL = 3
PSI_CUSTOM = 4

_OP_CONST = OPCODES["const"]
_OP_VAR = OPCODES["var"]
_OP_NEG = OPCODES["neg"]
_OP_ADD = OPCODES["add"]
_OP_SUB = OPCODES["sub"]
_OP_MUL = OPCODES["mul"]
_OP_DIV = OPCODES["div"]
_OP_POW = OPCODES["pow"]
_OP_LN = OPCODES["ln"]
_OP_EXP = OPCODES["exp"]
_OP_SQRT = OPCODES["sqrt"]
_OP_SIN = OPCODES["sin"]
_OP_COS = OPCODES["cos"]
_OP_TAN = OPCODES["tan"]
_OP_ATAN = OPCODES["arctan"]

_NAN = float("nan")


def eval_program(ops, args, consts, max_stack, x):
    """Stack-machine evaluation; NaN signals any domain violation."""
    stack = [0.0] * max_stack
    top = -1
    for at in range(len(ops)):
        op = ops[at]
        if op == _OP_CONST:
            top += 1
            stack[top] = consts[args[at]]
            continue
        if op == _OP_VAR:
            top += 1
            stack[top] = x[args[at]]
            continue
        if op == _OP_NEG:
            stack[top] = -stack[top]
            continue
        if op <= _OP_POW:  # binary
            b = stack[top]
            top -= 1
            a = stack[top]
            if op == _OP_ADD:
                v = a + b
            elif op == _OP_SUB:
                v = a - b
            elif op == _OP_MUL:
                v = a * b
            elif op == _OP_DIV:
                if b == 0.0:
                    return _NAN
                v = a / b
            else:
                try:
                    v = math.pow(a, b)
                except (ValueError, OverflowError):
                    return _NAN
        else:  # unary functions
            a = stack[top]
            try:
                if op == _OP_LN:
                    if a <= 0.0:
                        return _NAN
                    v = math.log(a)
                elif op == _OP_EXP:
                    v = math.exp(a)
                elif op == _OP_SQRT:
                    if a < 0.0:
                        return _NAN
                    v = math.sqrt(a)
                elif op == _OP_SIN:
                    v = math.sin(a)
                elif op == _OP_COS:
                    v = math.cos(a)
                elif op == _OP_TAN:
                    v = math.tan(a)
                else:
                    v = math.atan(a)
            except (ValueError, OverflowError):
                return _NAN
        if not math.isfinite(v):
            return _NAN
        stack[top] = v
    return stack[top]


def eval_program_many(ops, args, consts, max_stack, points):
    out = np.empty(points.shape[0], dtype=np.float64)
    for i in range(points.shape[0]):
        out[i] = eval_program(ops, args, consts, max_stack, points[i])
    return out


def _psi_scalar(kind, p0, p1, w,
                pk_ops, pk_args, pk_consts, pk_index, prog_row):
    if kind == PSI_CONSTANT:
        return p0
    if kind == PSI_LINEAR:
        return p0 * w
    if kind == PSI_POWER:
        try:
            v = p0 * math.pow(w, p1)
        except (ValueError, OverflowError):
            return _NAN
        return v
    if kind == PSI_EXPONENTIAL:
        try:
            v = p0 * math.exp(p1 * w)
        except OverflowError:
            return _NAN
        return v
    off, length, coff, mstack = pk_index[prog_row]
    return eval_program(pk_ops[off:off + length], pk_args[off:off + length],
                        pk_consts[coff:], mstack, (w,))


def psi_values(kind, par, dom_lo, dom_hi,
               pk_ops, pk_args, pk_consts, pk_index, lam, out):
    """All psi_k(lambda_k); returns -1 or the violating coordinate."""
    n = len(lam)
    for k in range(n):
        w = lam[k]
        if not (dom_lo[k] < w < dom_hi[k]):
            return k
        v = _psi_scalar(kind[k], par[k, 0], par[k, 1], w,
                        pk_ops, pk_args, pk_consts, pk_index, k)
        if not math.isfinite(v) or v == 0.0:
            return k
        out[k] = v
    return -1


def psi_prime_values(kind, par, dom_lo, dom_hi,
                     pk_ops, pk_args, pk_consts, pk_index, lam, out):
    """All psi_k'(lambda_k); zero values are legitimate here."""
    n = len(lam)
    for k in range(n):
        w = lam[k]
        if not (dom_lo[k] < w < dom_hi[k]):
            return k
        kk = kind[k]
        if kk == PSI_CONSTANT:
            v = 0.0
        elif kk == PSI_LINEAR:
            v = par[k, 0]
        elif kk == PSI_POWER:
            try:
                v = par[k, 0] * par[k, 1] * math.pow(w, par[k, 1] - 1.0)
            except (ValueError, OverflowError):
                return k
        elif kk == PSI_EXPONENTIAL:
            try:
                v = par[k, 0] * par[k, 1] * math.exp(par[k, 1] * w)
            except OverflowError:
                return k
        else:
            off, length, coff, mstack = pk_index[k]
            v = eval_program(pk_ops[off:off + length],
                             pk_args[off:off + length],
                             pk_consts[coff:], mstack, (w,))
        if not math.isfinite(v):
            return k
        out[k] = v
    return -1


def assemble_J(Lf, Sf, psiv, out):
    """J = M S M^T with M = L diag(psi); exactly skew by mirrored assembly."""
    M = Lf * psiv
    T = M @ Sf @ M.T
    upper = np.triu(T, 1)
    np.subtract(upper, upper.T, out=out)


def assemble_dJ(Lf, Sf, Lamf, psiv, psipv, out):
    """dJ[i,j,l] = d J_ij / d x_l via the chain rule; exactly skew in (i,j)."""
    A = Lf * psiv
    B = Lf * psipv
    G = Sf @ A.T
    T1 = np.einsum("ik,kj,kl->ijl", B, G, Lamf, optimize=True)
    np.subtract(T1, T1.transpose(1, 0, 2), out=out)


def jacobi_max(J, dJ):
    """Max |sum_l J_li d_l J_jk + J_lj d_l J_ki + J_lk d_l J_ij| and witness."""
    R = np.einsum("li,jkl->ijk", J, dJ, optimize=True)
    total = R + R.transpose(1, 2, 0) + R.transpose(2, 0, 1)
    flat = np.abs(total).argmax()
    i, j, k = np.unravel_index(flat, total.shape)
    return abs(total[i, j, k]), int(i), int(j), int(k)


def _rhs_parts(Lf, Sf, Lamf, kind, par, dom_lo, dom_hi,
               pk_ops, pk_args, pk_consts, pk_index,
               g_ops, g_args, g_consts, g_index, x):
    n = len(x)
    lam = Lamf @ x
    psiv = np.empty(n)
    status = psi_values(kind, par, dom_lo, dom_hi,
                        pk_ops, pk_args, pk_consts, pk_index, lam, psiv)
    if status >= 0:
        return status, None
    J = np.empty((n, n))
    assemble_J(Lf, Sf, psiv, J)
    g = np.empty(n)
    for i in range(n):
        off, length, coff, mstack = g_index[i]
        v = eval_program(g_ops[off:off + length], g_args[off:off + length],
                         g_consts[coff:], mstack, x)
        if not math.isfinite(v):
            return -2, None
        g[i] = v
    field = J @ g
    if not np.isfinite(field).all():
        return -2, None
    return -1, field


def rhs(Lf, Sf, Lamf, kind, par, dom_lo, dom_hi,
        pk_ops, pk_args, pk_consts, pk_index,
        g_ops, g_args, g_consts, g_index, x, out):
    status, field = _rhs_parts(Lf, Sf, Lamf, kind, par, dom_lo, dom_hi,
                               pk_ops, pk_args, pk_consts, pk_index,
                               g_ops, g_args, g_consts, g_index, x)
    if status == -1:
        out[:] = field
    return status


def rk4_path(Lf, Sf, Lamf, kind, par, dom_lo, dom_hi,
             pk_ops, pk_args, pk_consts, pk_index,
             g_ops, g_args, g_consts, g_index,
             x0, h, nsteps, box_lo, box_hi, states):
    """Fixed-step classical Runge-Kutta; fills states[0..steps_done]."""
    def f(x):
        return _rhs_parts(Lf, Sf, Lamf, kind, par, dom_lo, dom_hi,
                          pk_ops, pk_args, pk_consts, pk_index,
                          g_ops, g_args, g_consts, g_index, x)

    n = len(x0)
    x = np.array(x0, dtype=np.float64)
    states[0] = x
    half = 0.5 * h
    sixth = h / 6.0
    for step in range(nsteps):
        st, k1 = f(x)
        if st != -1:
            return (1 if st >= 0 else 3), step, max(st, 0)
        st, k2 = f(x + half * k1)
        if st != -1:
            return (1 if st >= 0 else 3), step, max(st, 0)
        st, k3 = f(x + half * k2)
        if st != -1:
            return (1 if st >= 0 else 3), step, max(st, 0)
        st, k4 = f(x + h * k3)
        if st != -1:
            return (1 if st >= 0 else 3), step, max(st, 0)
        x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for d in range(n):
            if not math.isfinite(x[d]):
                return 3, step, d
            if not (box_lo[d] < x[d] < box_hi[d]):
                return 2, step, d
        states[step + 1] = x
    return 0, nsteps, -1
