"""Pure-Python numeric kernels.

Reference implementation of the hot loops used by the tensor engine.
The compiled module ``_kernels`` exposes the same functions with the same
loop and summation order, so both backends produce bitwise-identical
results; which one is active is decided in :mod:`mtsent.autodiff.backend`.

All float buffers are flat row-major ``array('d')`` values; token id lists
are plain Python lists of ints.
"""

import math

NAME = "python"


def fill(x, c, n):
    for i in range(n):
        x[i] = c


def vec_scale(out, x, c, n):
    # out = c * x
    for i in range(n):
        out[i] = c * x[i]


def scale_inplace(x, c, n):
    for i in range(n):
        x[i] = c * x[i]


def vec_add(out, a, b, n):
    for i in range(n):
        out[i] = a[i] + b[i]


def vec_accum(y, x, n):
    # y += x
    for i in range(n):
        y[i] += x[i]


def vec_axpy_accum(y, x, a, n):
    # y += a * x
    for i in range(n):
        y[i] += a * x[i]


def dot(a, b, n):
    s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def sumsq(x, n):
    s = 0.0
    for i in range(n):
        s += x[i] * x[i]
    return s


def matvec(out, w, x, m, n):
    # out = W @ x with W stored row-major (m, n)
    for i in range(m):
        base = i * n
        s = 0.0
        for j in range(n):
            s += w[base + j] * x[j]
        out[i] = s


def matvec_t_accum(gx, w, g, m, n):
    # gx += W^T @ g
    for i in range(m):
        base = i * n
        gi = g[i]
        if gi != 0.0:
            for j in range(n):
                gx[j] += w[base + j] * gi


def ger_accum(gw, g, x, m, n):
    # gw += outer(g, x)
    for i in range(m):
        base = i * n
        gi = g[i]
        if gi != 0.0:
            for j in range(n):
                gw[base + j] += gi * x[j]


def gather_rows(out, table, ids, t, d):
    for r in range(t):
        src = ids[r] * d
        dst = r * d
        for j in range(d):
            out[dst + j] = table[src + j]


def scatter_rows_accum(gtable, ids, g, t, d):
    for r in range(t):
        dst = ids[r] * d
        src = r * d
        for j in range(d):
            gtable[dst + j] += g[src + j]


def mean_rows(out, x, t, d):
    # out = column mean of the (t, d) matrix x
    inv = 1.0 / t
    for j in range(d):
        s = 0.0
        for r in range(t):
            s += x[r * d + j]
        out[j] = s * inv


def mean_rows_grad_accum(gx, g, t, d):
    inv = 1.0 / t
    for r in range(t):
        base = r * d
        for j in range(d):
            gx[base + j] += g[j] * inv


def softmax_xent_forward(probs, logits, n, gold):
    """Writes softmax(logits) into probs; returns the cross-entropy loss
    against the gold index.  Numerically stable via max subtraction."""
    m = logits[0]
    for i in range(1, n):
        if logits[i] > m:
            m = logits[i]
    z = 0.0
    for i in range(n):
        e = math.exp(logits[i] - m)
        probs[i] = e
        z += e
    inv = 1.0 / z
    for i in range(n):
        probs[i] = probs[i] * inv
    return math.log(z) + m - logits[gold]


def softmax_xent_grad_accum(glogits, probs, gold, gscale, n):
    for i in range(n):
        glogits[i] += gscale * probs[i]
    glogits[gold] -= gscale


def adam_update(p, g, m, v, n, lr_t, beta1, beta2, eps):
    """One Adam-style update; lr_t carries the step-size bias correction."""
    b1c = 1.0 - beta1
    b2c = 1.0 - beta2
    for i in range(n):
        gi = g[i]
        mi = beta1 * m[i] + b1c * gi
        vi = beta2 * v[i] + b2c * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr_t * mi / (math.sqrt(vi) + eps)
