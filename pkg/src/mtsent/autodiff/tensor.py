"""Define-by-run reverse-mode autodiff over dense double tensors.

Small on purpose: exactly the operations the sentiment model and the
uncertainty-weighted loss need (embedding lookup, affine maps, mean
pooling, concatenation, scaling, softmax cross-entropy, and elementwise
scalar arithmetic). Values are flat row-major ``array('d')`` buffers and
the numeric inner loops are dispatched through :mod:`mtsent.autodiff.backend`
to either the compiled or the pure-Python kernels.

Each operation's output tensor keeps references to its inputs and a
backward closure, so the graph is rebuilt on every forward pass. A
:class:`Tape` is the topologically ordered list of recorded operations
reachable from a root tensor; ``backward(loss)`` builds one and runs the
adjoint sweep. Leaf gradients accumulate across backward calls until
``zero_grad``.
"""

import math
from array import array

from . import backend

_CHECKED = False
_NO_GRAD = False


def set_checked(enabled):
    """Toggle finiteness validation of tensor values at creation time."""
    global _CHECKED
    _CHECKED = bool(enabled)


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _NO_GRAD
        self._prev = _NO_GRAD
        _NO_GRAD = True
        return self

    def __exit__(self, *exc):
        global _NO_GRAD
        _NO_GRAD = self._prev
        return False


def _numel(shape):
    n = 1
    for s in shape:
        if s <= 0:
            raise ValueError(f"non-positive dimension in shape {shape}")
        n *= s
    return n


def _zeros(n):
    return array("d", bytes(8 * n))


class Tensor:
    """Dense double tensor with an optional gradient buffer."""

    __slots__ = ("shape", "data", "requires_grad", "grad", "_op", "_parents", "_bw")

    def __init__(self, data, shape=None, requires_grad=False):
        if isinstance(data, (int, float)):
            buf = array("d", [float(data)])
            inferred = ()
        else:
            buf = data if isinstance(data, array) else array("d", data)
            inferred = (len(buf),)
        if shape is None:
            shape = inferred
        shape = tuple(shape)
        if len(buf) != _numel(shape):
            raise ValueError(
                f"data of length {len(buf)} does not fill shape {shape}"
            )
        if _CHECKED:
            for v in buf:
                if not math.isfinite(v):
                    raise ValueError(f"non-finite value {v!r} in tensor data")
        self.shape = shape
        self.data = buf
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._op = None
        self._parents = ()
        self._bw = None

    @classmethod
    def zeros(cls, shape, requires_grad=False):
        shape = tuple(shape)
        return cls(_zeros(_numel(shape)), shape, requires_grad)

    @property
    def numel(self):
        return len(self.data)

    def is_leaf(self):
        return self._bw is None

    def item(self):
        if len(self.data) != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return self.data[0]

    def tolist(self):
        flat = list(self.data)
        if len(self.shape) == 2:
            r, c = self.shape
            return [flat[i * c:(i + 1) * c] for i in range(r)]
        return flat

    def ensure_grad(self):
        if self.grad is None:
            self.grad = _zeros(len(self.data))
        return self.grad

    def zero_grad(self):
        if self.grad is not None:
            backend.K.fill(self.grad, 0.0, len(self.grad))

    def backward(self):
        backward(self)

    def __repr__(self):
        head = ", ".join(f"{v:.4g}" for v in list(self.data)[:6])
        if len(self.data) > 6:
            head += ", ..."
        return f"Tensor(shape={self.shape}, [{head}])"


def _make(op, shape, data, parents, bw):
    rg = (not _NO_GRAD) and any(p.requires_grad for p in parents)
    out = Tensor(data, shape, requires_grad=rg)
    if rg:
        out._op = op
        out._parents = tuple(parents)
        out._bw = bw
    return out


class Tape:
    """Operations reachable from a root, ordered inputs-before-outputs."""

    def __init__(self, root):
        self.root = root
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            t, done = stack.pop()
            if done:
                order.append(t)
                continue
            if id(t) in visited:
                continue
            visited.add(id(t))
            stack.append((t, True))
            for p in t._parents:
                if id(p) not in visited and p._parents:
                    stack.append((p, False))
        self.records = [t for t in order if t._parents]

    def leaves(self):
        seen = {}
        for t in self.records:
            for p in t._parents:
                if p.requires_grad and p._bw is None:
                    seen[id(p)] = p
        return list(seen.values())

    def backprop(self):
        root = self.root
        adj = {id(root): array("d", [1.0] * len(root.data))}
        K = backend.K
        for t in reversed(self.records):
            g = adj.pop(id(t), None)
            if g is None:
                continue
            gins = []
            for p in t._parents:
                if not p.requires_grad:
                    gins.append(None)
                elif p._bw is None:
                    gins.append(p.ensure_grad())
                else:
                    buf = adj.get(id(p))
                    if buf is None:
                        buf = _zeros(len(p.data))
                        adj[id(p)] = buf
                    gins.append(buf)
            t._bw(g, gins)
        _ = K


def backward(loss):
    """Adjoint sweep from a scalar loss; accumulates into leaf ``grad``."""
    if loss.shape != ():
        raise ValueError(f"backward requires a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward on a tensor with no recorded operations")
    if loss._bw is None:
        g = loss.ensure_grad()
        g[0] += 1.0
        return
    Tape(loss).backprop()


def _check_vec(t, name):
    if len(t.shape) != 1:
        raise ValueError(f"{name} must be 1-D, got shape {t.shape}")


def _check_same_shape(a, b, op):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# tensor-valued ops


def embed(table, ids):
    """Gather rows of an embedding table; ids is a list of row indices."""
    if len(table.shape) != 2:
        raise ValueError(f"embed table must be 2-D, got shape {table.shape}")
    v, d = table.shape
    ids = list(ids)
    if not ids:
        raise ValueError("embed: empty id list")
    for i in ids:
        if not 0 <= i < v:
            raise IndexError(f"embed: id {i} out of range for table rows {v}")
    t = len(ids)
    out = _zeros(t * d)
    backend.K.gather_rows(out, table.data, ids, t, d)

    def bw(g, gins):
        if gins[0] is not None:
            backend.K.scatter_rows_accum(gins[0], ids, g, t, d)

    return _make("embed", (t, d), out, (table,), bw)


def embed_one(table, idx):
    """Gather a single row of an embedding table as a vector."""
    if len(table.shape) != 2:
        raise ValueError(f"embed table must be 2-D, got shape {table.shape}")
    v, d = table.shape
    if not 0 <= idx < v:
        raise IndexError(f"embed: id {idx} out of range for table rows {v}")
    out = _zeros(d)
    backend.K.gather_rows(out, table.data, [idx], 1, d)

    def bw(g, gins):
        if gins[0] is not None:
            backend.K.scatter_rows_accum(gins[0], [idx], g, 1, d)

    return _make("embed_one", (d,), out, (table,), bw)


def affine(w, b, x):
    """w @ x + b for w of shape (m, n), b (m,), x (n,)."""
    if len(w.shape) != 2:
        raise ValueError(f"affine weight must be 2-D, got shape {w.shape}")
    m, n = w.shape
    _check_vec(x, "affine input")
    _check_vec(b, "affine bias")
    if x.shape[0] != n or b.shape[0] != m:
        raise ValueError(
            f"affine: weight {w.shape} incompatible with bias {b.shape} "
            f"and input {x.shape}"
        )
    out = _zeros(m)
    K = backend.K
    K.matvec(out, w.data, x.data, m, n)
    K.vec_accum(out, b.data, m)

    def bw(g, gins):
        gw, gb, gx = gins
        if gw is not None:
            backend.K.ger_accum(gw, g, x.data, m, n)
        if gb is not None:
            backend.K.vec_accum(gb, g, m)
        if gx is not None:
            backend.K.matvec_t_accum(gx, w.data, g, m, n)

    return _make("affine", (m,), out, (w, b, x), bw)


def mean_pool(x, axis=0):
    """Mean over rows of a 2-D tensor (axis 0 only)."""
    if axis != 0 or len(x.shape) != 2:
        raise ValueError(
            f"mean_pool supports axis 0 on 2-D tensors, got axis={axis} "
            f"shape={x.shape}"
        )
    t, d = x.shape
    out = _zeros(d)
    backend.K.mean_rows(out, x.data, t, d)

    def bw(g, gins):
        if gins[0] is not None:
            backend.K.mean_rows_grad_accum(gins[0], g, t, d)

    return _make("mean_pool", (d,), out, (x,), bw)


def concat(xs):
    """Concatenate 1-D tensors."""
    xs = list(xs)
    if not xs:
        raise ValueError("concat: empty input list")
    for x in xs:
        _check_vec(x, "concat input")
    sizes = [x.shape[0] for x in xs]
    total = sum(sizes)
    out = _zeros(total)
    off = 0
    mv_out = memoryview(out)
    for x, n in zip(xs, sizes):
        backend.K.vec_accum(mv_out[off:off + n], x.data, n)
        off += n

    def bw(g, gins):
        mv = memoryview(g)
        o = 0
        for gin, n in zip(gins, sizes):
            if gin is not None:
                backend.K.vec_accum(gin, mv[o:o + n], n)
            o += n

    return _make("concat", (total,), out, tuple(xs), bw)


def scale(x, c):
    """Multiply every entry by the Python float c."""
    c = float(c)
    if not math.isfinite(c):
        raise ValueError(f"scale factor must be finite, got {c!r}")
    n = len(x.data)
    out = _zeros(n)
    backend.K.vec_scale(out, x.data, c, n)

    def bw(g, gins):
        if gins[0] is not None:
            backend.K.vec_axpy_accum(gins[0], g, c, n)

    return _make("scale", x.shape, out, (x,), bw)


def add(a, b):
    """Elementwise sum of two same-shape tensors."""
    _check_same_shape(a, b, "add")
    n = len(a.data)
    out = _zeros(n)
    backend.K.vec_add(out, a.data, b.data, n)

    def bw(g, gins):
        for gin in gins:
            if gin is not None:
                backend.K.vec_accum(gin, g, n)

    return _make("add", a.shape, out, (a, b), bw)


def mul(a, b):
    """Elementwise product of two same-shape tensors."""
    _check_same_shape(a, b, "mul")
    n = len(a.data)
    out = array("d", [a.data[i] * b.data[i] for i in range(n)])

    def bw(g, gins):
        ga, gb = gins
        for i in range(n):
            if ga is not None:
                ga[i] += g[i] * b.data[i]
            if gb is not None:
                gb[i] += g[i] * a.data[i]

    return _make("mul", a.shape, out, (a, b), bw)


def neg(x):
    return scale(x, -1.0)


def add_const(x, c):
    c = float(c)
    n = len(x.data)
    out = array("d", [x.data[i] + c for i in range(n)])

    def bw(g, gins):
        if gins[0] is not None:
            backend.K.vec_accum(gins[0], g, n)

    return _make("add_const", x.shape, out, (x,), bw)


def _exp_overflow_safe(v):
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def exp(x):
    n = len(x.data)
    vals = [_exp_overflow_safe(x.data[i]) for i in range(n)]
    out = array("d", vals)

    def bw(g, gins):
        if gins[0] is not None:
            gin = gins[0]
            for i in range(n):
                gin[i] += g[i] * vals[i]

    return _make("exp", x.shape, out, (x,), bw)


def log(x):
    n = len(x.data)
    for i in range(n):
        if x.data[i] <= 0.0:
            raise ValueError(f"log of non-positive value {x.data[i]!r}")
    out = array("d", [math.log(x.data[i]) for i in range(n)])
    xvals = list(x.data)

    def bw(g, gins):
        if gins[0] is not None:
            gin = gins[0]
            for i in range(n):
                gin[i] += g[i] / xvals[i]

    return _make("log", x.shape, out, (x,), bw)


def softplus(x):
    """Numerically stable ln(1 + e^x); gradient is the logistic sigmoid."""
    n = len(x.data)
    vals = _zeros(n)
    for i in range(n):
        v = x.data[i]
        vals[i] = max(v, 0.0) + math.log1p(_exp_overflow_safe(-abs(v)))
    xvals = list(x.data)

    def bw(g, gins):
        if gins[0] is not None:
            gin = gins[0]
            for i in range(n):
                v = xvals[i]
                if v >= 0:
                    s = 1.0 / (1.0 + _exp_overflow_safe(-v))
                else:
                    e = _exp_overflow_safe(v)
                    s = e / (1.0 + e)
                gin[i] += g[i] * s

    return _make("softplus", x.shape, vals, (x,), bw)


def softmax_xent(logits, gold):
    """Cross-entropy of softmax(logits) against the gold index, as a scalar."""
    _check_vec(logits, "softmax_xent logits")
    n = logits.shape[0]
    if not 0 <= gold < n:
        raise IndexError(f"gold index {gold} out of range for {n} classes")
    probs = _zeros(n)
    loss = backend.K.softmax_xent_forward(probs, logits.data, n, gold)

    def bw(g, gins):
        if gins[0] is not None:
            backend.K.softmax_xent_grad_accum(gins[0], probs, gold, g[0], n)

    out = _make("softmax_xent", (), array("d", [loss]), (logits,), bw)
    return out


def sum_scalars(xs, weights=None):
    """Weighted sum of scalar tensors (unweighted when weights is None)."""
    xs = list(xs)
    if not xs:
        raise ValueError("sum_scalars: empty input list")
    for x in xs:
        if x.shape != ():
            raise ValueError(f"sum_scalars expects scalars, got shape {x.shape}")
    if weights is not None:
        weights = [float(w) for w in weights]
        if len(weights) != len(xs):
            raise ValueError(
                f"sum_scalars: {len(xs)} terms but {len(weights)} weights"
            )
        s = 0.0
        for x, w in zip(xs, weights):
            s += w * x.data[0]
    else:
        s = 0.0
        for x in xs:
            s += x.data[0]

    def bw(g, gins):
        g0 = g[0]
        if weights is None:
            for gin in gins:
                if gin is not None:
                    gin[0] += g0
        else:
            for gin, w in zip(gins, weights):
                if gin is not None:
                    gin[0] += g0 * w

    return _make("sum_scalars", (), array("d", [s]), tuple(xs), bw)
