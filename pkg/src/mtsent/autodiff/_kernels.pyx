# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled numeric kernels.

Same functions, loop order and arithmetic as kernels_py so results are
bitwise identical; only the execution speed differs.
"""

from libc.math cimport exp, log, sqrt

NAME = "compiled"


def fill(double[::1] x, double c, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        x[i] = c


def vec_scale(double[::1] out, double[::1] x, double c, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = c * x[i]


def scale_inplace(double[::1] x, double c, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        x[i] = c * x[i]


def vec_add(double[::1] out, double[::1] a, double[::1] b, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = a[i] + b[i]


def vec_accum(double[::1] y, double[::1] x, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        y[i] += x[i]


def vec_axpy_accum(double[::1] y, double[::1] x, double a, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        y[i] += a * x[i]


def dot(double[::1] a, double[::1] b, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def sumsq(double[::1] x, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += x[i] * x[i]
    return s


def matvec(double[::1] out, double[::1] w, double[::1] x,
           Py_ssize_t m, Py_ssize_t n):
    cdef Py_ssize_t i, j, base
    cdef double s
    for i in range(m):
        base = i * n
        s = 0.0
        for j in range(n):
            s += w[base + j] * x[j]
        out[i] = s


def matvec_t_accum(double[::1] gx, double[::1] w, double[::1] g,
                   Py_ssize_t m, Py_ssize_t n):
    cdef Py_ssize_t i, j, base
    cdef double gi
    for i in range(m):
        base = i * n
        gi = g[i]
        if gi != 0.0:
            for j in range(n):
                gx[j] += w[base + j] * gi


def ger_accum(double[::1] gw, double[::1] g, double[::1] x,
              Py_ssize_t m, Py_ssize_t n):
    cdef Py_ssize_t i, j, base
    cdef double gi
    for i in range(m):
        base = i * n
        gi = g[i]
        if gi != 0.0:
            for j in range(n):
                gw[base + j] += gi * x[j]


def gather_rows(double[::1] out, double[::1] table, list ids,
                Py_ssize_t t, Py_ssize_t d):
    cdef Py_ssize_t r, j, src, dst
    for r in range(t):
        src = <Py_ssize_t> ids[r] * d
        dst = r * d
        for j in range(d):
            out[dst + j] = table[src + j]


def scatter_rows_accum(double[::1] gtable, list ids, double[::1] g,
                       Py_ssize_t t, Py_ssize_t d):
    cdef Py_ssize_t r, j, src, dst
    for r in range(t):
        dst = <Py_ssize_t> ids[r] * d
        src = r * d
        for j in range(d):
            gtable[dst + j] += g[src + j]


def mean_rows(double[::1] out, double[::1] x, Py_ssize_t t, Py_ssize_t d):
    cdef Py_ssize_t r, j
    cdef double s, inv
    inv = 1.0 / t
    for j in range(d):
        s = 0.0
        for r in range(t):
            s += x[r * d + j]
        out[j] = s * inv


def mean_rows_grad_accum(double[::1] gx, double[::1] g,
                         Py_ssize_t t, Py_ssize_t d):
    cdef Py_ssize_t r, j, base
    cdef double inv = 1.0 / t
    for r in range(t):
        base = r * d
        for j in range(d):
            gx[base + j] += g[j] * inv


def softmax_xent_forward(double[::1] probs, double[::1] logits,
                         Py_ssize_t n, Py_ssize_t gold):
    cdef Py_ssize_t i
    cdef double m, z, e, inv
    m = logits[0]
    for i in range(1, n):
        if logits[i] > m:
            m = logits[i]
    z = 0.0
    for i in range(n):
        e = exp(logits[i] - m)
        probs[i] = e
        z += e
    inv = 1.0 / z
    for i in range(n):
        probs[i] = probs[i] * inv
    return log(z) + m - logits[gold]


def softmax_xent_grad_accum(double[::1] glogits, double[::1] probs,
                            Py_ssize_t gold, double gscale, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        glogits[i] += gscale * probs[i]
    glogits[gold] -= gscale


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                Py_ssize_t n, double lr_t, double beta1, double beta2,
                double eps):
    cdef Py_ssize_t i
    cdef double gi, mi, vi
    cdef double b1c = 1.0 - beta1
    cdef double b2c = 1.0 - beta2
    for i in range(n):
        gi = g[i]
        mi = beta1 * m[i] + b1c * gi
        vi = beta2 * v[i] + b2c * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr_t * mi / (sqrt(vi) + eps)
