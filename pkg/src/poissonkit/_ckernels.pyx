# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled evaluation kernels.

Mirror of ``_pykernels.py`` (the reference implementation): same signatures,
same error-code conventions, same NaN-on-domain-violation semantics.  Keep
the two in lockstep; tests/test_kernels.py cross-checks them on random data.
"""

from libc.math cimport (atan, cos, exp, isfinite, log, sin, sqrt, tan)
from libc.math cimport pow as cpow
from libc.math cimport NAN

import numpy as np

BACKEND_NAME = "cython"

PSI_CONSTANT = 0
PSI_LINEAR = 1
PSI_POWER = 2
PSI_EXPONENTIAL = 3
PSI_CUSTOM = 4

# opcode values pinned to expr.OPCODES
cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_NEG = 2
    OP_ADD = 3
    OP_SUB = 4
    OP_MUL = 5
    OP_DIV = 6
    OP_POW = 7
    OP_LN = 8
    OP_EXP = 9
    OP_SQRT = 10
    OP_SIN = 11
    OP_COS = 12
    OP_TAN = 13
    OP_ATAN = 14

cdef enum:
    K_CONSTANT = 0
    K_LINEAR = 1
    K_POWER = 2
    K_EXPONENTIAL = 3
    K_CUSTOM = 4

cdef enum:
    STACK_CAP = 256


cdef double _eval_c(const int* ops, const int* args, const double* consts,
                    Py_ssize_t length, const double* x) noexcept nogil:
    cdef double stack[STACK_CAP]
    cdef Py_ssize_t at
    cdef int top = -1
    cdef int op
    cdef double a, b, v
    if length == 0:
        return NAN
    for at in range(length):
        op = ops[at]
        if op == OP_CONST:
            top += 1
            stack[top] = consts[args[at]]
            continue
        if op == OP_VAR:
            top += 1
            stack[top] = x[args[at]]
            continue
        if op == OP_NEG:
            stack[top] = -stack[top]
            continue
        if op <= OP_POW:
            b = stack[top]
            top -= 1
            a = stack[top]
            if op == OP_ADD:
                v = a + b
            elif op == OP_SUB:
                v = a - b
            elif op == OP_MUL:
                v = a * b
            elif op == OP_DIV:
                if b == 0.0:
                    return NAN
                v = a / b
            else:
                v = cpow(a, b)
        else:
            a = stack[top]
            if op == OP_LN:
                if a <= 0.0:
                    return NAN
                v = log(a)
            elif op == OP_EXP:
                v = exp(a)
            elif op == OP_SQRT:
                if a < 0.0:
                    return NAN
                v = sqrt(a)
            elif op == OP_SIN:
                v = sin(a)
            elif op == OP_COS:
                v = cos(a)
            elif op == OP_TAN:
                v = tan(a)
            else:
                v = atan(a)
        if not isfinite(v):
            return NAN
        stack[top] = v
    return stack[top]


cdef inline const int* _iptr(const int[::1] view) noexcept nogil:
    return &view[0] if view.shape[0] > 0 else <const int*> 0


cdef inline const double* _dptr(const double[::1] view) noexcept nogil:
    return &view[0] if view.shape[0] > 0 else <const double*> 0


def eval_program(const int[::1] ops, const int[::1] args,
                 const double[::1] consts, int max_stack,
                 const double[::1] x):
    return _eval_c(_iptr(ops), _iptr(args), _dptr(consts), ops.shape[0],
                   _dptr(x))


def eval_program_many(const int[::1] ops, const int[::1] args,
                      const double[::1] consts, int max_stack,
                      const double[:, ::1] points):
    cdef Py_ssize_t m = points.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef const int* po = _iptr(ops)
    cdef const int* pa = _iptr(args)
    cdef const double* pc = _dptr(consts)
    cdef Py_ssize_t length = ops.shape[0]
    with nogil:
        for i in range(m):
            out[i] = _eval_c(po, pa, pc, length, &points[i, 0])
    return out_arr


cdef int _psi_values_c(Py_ssize_t n, const int* kind, const double* par,
                       const double* dom_lo, const double* dom_hi,
                       const int* pk_ops, const int* pk_args,
                       const double* pk_consts, const int* pk_index,
                       const double* lam, double* out) noexcept nogil:
    cdef Py_ssize_t k
    cdef int kk
    cdef double w, v
    for k in range(n):
        w = lam[k]
        if not (dom_lo[k] < w < dom_hi[k]):
            return <int> k
        kk = kind[k]
        if kk == K_CONSTANT:
            v = par[3 * k]
        elif kk == K_LINEAR:
            v = par[3 * k] * w
        elif kk == K_POWER:
            v = par[3 * k] * cpow(w, par[3 * k + 1])
        elif kk == K_EXPONENTIAL:
            v = par[3 * k] * exp(par[3 * k + 1] * w)
        else:
            v = _eval_c(pk_ops + pk_index[4 * k], pk_args + pk_index[4 * k],
                        pk_consts + pk_index[4 * k + 2],
                        pk_index[4 * k + 1], &w)
        if not isfinite(v) or v == 0.0:
            return <int> k
        out[k] = v
    return -1


cdef int _psi_prime_values_c(Py_ssize_t n, const int* kind, const double* par,
                             const double* dom_lo, const double* dom_hi,
                             const int* pk_ops, const int* pk_args,
                             const double* pk_consts, const int* pk_index,
                             const double* lam, double* out) noexcept nogil:
    cdef Py_ssize_t k
    cdef int kk
    cdef double w, v
    for k in range(n):
        w = lam[k]
        if not (dom_lo[k] < w < dom_hi[k]):
            return <int> k
        kk = kind[k]
        if kk == K_CONSTANT:
            v = 0.0
        elif kk == K_LINEAR:
            v = par[3 * k]
        elif kk == K_POWER:
            v = par[3 * k] * par[3 * k + 1] * cpow(w, par[3 * k + 1] - 1.0)
        elif kk == K_EXPONENTIAL:
            v = par[3 * k] * par[3 * k + 1] * exp(par[3 * k + 1] * w)
        else:
            v = _eval_c(pk_ops + pk_index[4 * k], pk_args + pk_index[4 * k],
                        pk_consts + pk_index[4 * k + 2],
                        pk_index[4 * k + 1], &w)
        if not isfinite(v):
            return <int> k
        out[k] = v
    return -1


def psi_values(const int[::1] kind, const double[:, ::1] par,
               const double[::1] dom_lo, const double[::1] dom_hi,
               const int[::1] pk_ops, const int[::1] pk_args,
               const double[::1] pk_consts, const int[:, ::1] pk_index,
               const double[::1] lam, double[::1] out):
    return _psi_values_c(lam.shape[0], _iptr(kind), &par[0, 0],
                         _dptr(dom_lo), _dptr(dom_hi),
                         _iptr(pk_ops), _iptr(pk_args), _dptr(pk_consts),
                         &pk_index[0, 0], _dptr(lam), &out[0])


def psi_prime_values(const int[::1] kind, const double[:, ::1] par,
                     const double[::1] dom_lo, const double[::1] dom_hi,
                     const int[::1] pk_ops, const int[::1] pk_args,
                     const double[::1] pk_consts, const int[:, ::1] pk_index,
                     const double[::1] lam, double[::1] out):
    return _psi_prime_values_c(lam.shape[0], _iptr(kind), &par[0, 0],
                               _dptr(dom_lo), _dptr(dom_hi),
                               _iptr(pk_ops), _iptr(pk_args),
                               _dptr(pk_consts), &pk_index[0, 0],
                               _dptr(lam), &out[0])


cdef void _assemble_J_c(Py_ssize_t n, const double* Lf, const double* Sf,
                        const double* psiv, double* M, double* MS,
                        double* J) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for k in range(n):
            M[i * n + k] = Lf[i * n + k] * psiv[k]
    for i in range(n):
        for k in range(n):
            acc = 0.0
            for j in range(n):
                acc += M[i * n + j] * Sf[j * n + k]
            MS[i * n + k] = acc
    for i in range(n):
        J[i * n + i] = 0.0
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(n):
                acc += MS[i * n + k] * M[j * n + k]
            J[i * n + j] = acc
            J[j * n + i] = -acc


def assemble_J(const double[:, ::1] Lf, const double[:, ::1] Sf,
               const double[::1] psiv, double[:, ::1] out):
    cdef Py_ssize_t n = Lf.shape[0]
    work = np.empty((2, n, n), dtype=np.float64)
    cdef double[:, :, ::1] w = work
    _assemble_J_c(n, &Lf[0, 0], &Sf[0, 0], _dptr(psiv),
                  &w[0, 0, 0], &w[1, 0, 0], &out[0, 0])


cdef void _assemble_dJ_c(Py_ssize_t n, const double* Lf, const double* Sf,
                         const double* Lamf, const double* psiv,
                         const double* psipv, double* A, double* B,
                         double* G, double* T1, double* dJ) noexcept nogil:
    cdef Py_ssize_t i, j, k, l, m
    cdef double acc
    for i in range(n):
        for k in range(n):
            A[i * n + k] = Lf[i * n + k] * psiv[k]
            B[i * n + k] = Lf[i * n + k] * psipv[k]
    for k in range(n):
        for j in range(n):
            acc = 0.0
            for m in range(n):
                acc += Sf[k * n + m] * A[j * n + m]
            G[k * n + j] = acc
    for i in range(n):
        for j in range(n):
            for l in range(n):
                acc = 0.0
                for k in range(n):
                    acc += B[i * n + k] * G[k * n + j] * Lamf[k * n + l]
                T1[(i * n + j) * n + l] = acc
    for i in range(n):
        for j in range(n):
            for l in range(n):
                dJ[(i * n + j) * n + l] = (T1[(i * n + j) * n + l]
                                           - T1[(j * n + i) * n + l])


def assemble_dJ(const double[:, ::1] Lf, const double[:, ::1] Sf,
                const double[:, ::1] Lamf, const double[::1] psiv,
                const double[::1] psipv, double[:, :, ::1] out):
    cdef Py_ssize_t n = Lf.shape[0]
    work = np.empty((3, n, n), dtype=np.float64)
    t1 = np.empty((n, n, n), dtype=np.float64)
    cdef double[:, :, ::1] w = work
    cdef double[:, :, ::1] t = t1
    _assemble_dJ_c(n, &Lf[0, 0], &Sf[0, 0], &Lamf[0, 0], _dptr(psiv),
                   _dptr(psipv), &w[0, 0, 0], &w[1, 0, 0], &w[2, 0, 0],
                   &t[0, 0, 0], &out[0, 0, 0])


def jacobi_max(const double[:, ::1] J, const double[:, :, ::1] dJ):
    cdef Py_ssize_t n = J.shape[0]
    cdef Py_ssize_t i, j, k, l
    cdef double best = 0.0
    cdef double total
    cdef Py_ssize_t bi = 0, bj = 0, bk = 0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    total = 0.0
                    for l in range(n):
                        total += (J[l, i] * dJ[j, k, l]
                                  + J[l, j] * dJ[k, i, l]
                                  + J[l, k] * dJ[i, j, l])
                    if total < 0.0:
                        total = -total
                    if total > best:
                        best = total
                        bi, bj, bk = i, j, k
    return best, bi, bj, bk


cdef int _rhs_c(Py_ssize_t n, const double* Lf, const double* Sf,
                const double* Lamf, const int* kind, const double* par,
                const double* dom_lo, const double* dom_hi,
                const int* pk_ops, const int* pk_args,
                const double* pk_consts, const int* pk_index,
                const int* g_ops, const int* g_args,
                const double* g_consts, const int* g_index,
                const double* x, double* lam, double* psiv, double* M,
                double* MS, double* J, double* g,
                double* field) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc, v
    cdef int status
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += Lamf[i * n + j] * x[j]
        lam[i] = acc
    status = _psi_values_c(n, kind, par, dom_lo, dom_hi,
                           pk_ops, pk_args, pk_consts, pk_index, lam, psiv)
    if status >= 0:
        return status
    _assemble_J_c(n, Lf, Sf, psiv, M, MS, J)
    for i in range(n):
        v = _eval_c(g_ops + g_index[4 * i], g_args + g_index[4 * i],
                    g_consts + g_index[4 * i + 2], g_index[4 * i + 1], x)
        if not isfinite(v):
            return -2
        g[i] = v
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += J[i * n + j] * g[j]
        if not isfinite(acc):
            return -2
        field[i] = acc
    return -1


def rhs(const double[:, ::1] Lf, const double[:, ::1] Sf,
        const double[:, ::1] Lamf, const int[::1] kind,
        const double[:, ::1] par, const double[::1] dom_lo,
        const double[::1] dom_hi,
        const int[::1] pk_ops, const int[::1] pk_args,
        const double[::1] pk_consts, const int[:, ::1] pk_index,
        const int[::1] g_ops, const int[::1] g_args,
        const double[::1] g_consts, const int[:, ::1] g_index,
        const double[::1] x, double[::1] out):
    cdef Py_ssize_t n = x.shape[0]
    work = np.empty((3 * n + 3 * n * n,), dtype=np.float64)
    cdef double[::1] w = work
    cdef double* lam = &w[0]
    cdef double* psiv = lam + n
    cdef double* g = psiv + n
    cdef double* M = g + n
    cdef double* MS = M + n * n
    cdef double* J = MS + n * n
    return _rhs_c(n, &Lf[0, 0], &Sf[0, 0], &Lamf[0, 0], _iptr(kind),
                  &par[0, 0], _dptr(dom_lo), _dptr(dom_hi),
                  _iptr(pk_ops), _iptr(pk_args), _dptr(pk_consts),
                  &pk_index[0, 0], _iptr(g_ops), _iptr(g_args),
                  _dptr(g_consts), &g_index[0, 0], _dptr(x),
                  lam, psiv, M, MS, J, g, &out[0])


def rk4_path(const double[:, ::1] Lf, const double[:, ::1] Sf,
             const double[:, ::1] Lamf, const int[::1] kind,
             const double[:, ::1] par, const double[::1] dom_lo,
             const double[::1] dom_hi,
             const int[::1] pk_ops, const int[::1] pk_args,
             const double[::1] pk_consts, const int[:, ::1] pk_index,
             const int[::1] g_ops, const int[::1] g_args,
             const double[::1] g_consts, const int[:, ::1] g_index,
             const double[::1] x0, double h, int nsteps,
             const double[::1] box_lo, const double[::1] box_hi,
             double[:, ::1] states):
    cdef Py_ssize_t n = x0.shape[0]
    work = np.empty((11 * n + 3 * n * n,), dtype=np.float64)
    cdef double[::1] wv = work
    cdef double* x = &wv[0]
    cdef double* xs = x + n
    cdef double* k1 = xs + n
    cdef double* k2 = k1 + n
    cdef double* k3 = k2 + n
    cdef double* k4 = k3 + n
    cdef double* lam = k4 + n
    cdef double* psiv = lam + n
    cdef double* g = psiv + n
    cdef double* M = g + n
    cdef double* MS = M + n * n
    cdef double* J = MS + n * n
    cdef const double* pLf = &Lf[0, 0]
    cdef const double* pSf = &Sf[0, 0]
    cdef const double* pLam = &Lamf[0, 0]
    cdef const int* pkind = _iptr(kind)
    cdef const double* ppar = &par[0, 0]
    cdef const double* plo = _dptr(dom_lo)
    cdef const double* phi = _dptr(dom_hi)
    cdef const int* ppo = _iptr(pk_ops)
    cdef const int* ppa = _iptr(pk_args)
    cdef const double* ppc = _dptr(pk_consts)
    cdef const int* ppi = &pk_index[0, 0]
    cdef const int* pgo = _iptr(g_ops)
    cdef const int* pga = _iptr(g_args)
    cdef const double* pgc = _dptr(g_consts)
    cdef const int* pgi = &g_index[0, 0]
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0
    cdef Py_ssize_t step = 0, d
    cdef int status, code = 0
    cdef Py_ssize_t coord = -1
    cdef double acc

    for d in range(n):
        x[d] = x0[d]
        states[0, d] = x[d]

    with nogil:
        while step < nsteps:
            status = _rhs_c(n, pLf, pSf, pLam, pkind, ppar, plo, phi,
                            ppo, ppa, ppc, ppi, pgo, pga, pgc, pgi,
                            x, lam, psiv, M, MS, J, g, k1)
            if status != -1:
                code = 1 if status >= 0 else 3
                coord = status if status >= 0 else 0
                break
            for d in range(n):
                xs[d] = x[d] + half * k1[d]
            status = _rhs_c(n, pLf, pSf, pLam, pkind, ppar, plo, phi,
                            ppo, ppa, ppc, ppi, pgo, pga, pgc, pgi,
                            xs, lam, psiv, M, MS, J, g, k2)
            if status != -1:
                code = 1 if status >= 0 else 3
                coord = status if status >= 0 else 0
                break
            for d in range(n):
                xs[d] = x[d] + half * k2[d]
            status = _rhs_c(n, pLf, pSf, pLam, pkind, ppar, plo, phi,
                            ppo, ppa, ppc, ppi, pgo, pga, pgc, pgi,
                            xs, lam, psiv, M, MS, J, g, k3)
            if status != -1:
                code = 1 if status >= 0 else 3
                coord = status if status >= 0 else 0
                break
            for d in range(n):
                xs[d] = x[d] + h * k3[d]
            status = _rhs_c(n, pLf, pSf, pLam, pkind, ppar, plo, phi,
                            ppo, ppa, ppc, ppi, pgo, pga, pgc, pgi,
                            xs, lam, psiv, M, MS, J, g, k4)
            if status != -1:
                code = 1 if status >= 0 else 3
                coord = status if status >= 0 else 0
                break
            for d in range(n):
                acc = k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]
                x[d] = x[d] + sixth * acc
            for d in range(n):
                if not isfinite(x[d]):
                    code = 3
                    coord = d
                    break
                if not (box_lo[d] < x[d] < box_hi[d]):
                    code = 2
                    coord = d
                    break
            if code != 0:
                break
            for d in range(n):
                states[step + 1, d] = x[d]
            step += 1

    return code, step, coord
