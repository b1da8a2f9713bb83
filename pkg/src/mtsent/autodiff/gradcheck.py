"""Central finite-difference validation of analytic gradients."""

from dataclasses import dataclass

from .tensor import backward


@dataclass
class GradCheckReport:
    ok: bool
    max_rel_error: float
    checked: int
    worst: tuple  # (tensor position, flat index, analytic, numeric)

    def __str__(self):
        status = "ok" if self.ok else "FAIL"
        return (
            f"gradient check {status}: max rel error {self.max_rel_error:.3e} "
            f"over {self.checked} entries, worst at tensor {self.worst[0]} "
            f"index {self.worst[1]} (analytic {self.worst[2]:.6e}, "
            f"numeric {self.worst[3]:.6e})"
        )


def gradient_check(f, wrt, eps=1e-4, tol=1e-4):
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` is a zero-argument callable that rebuilds a scalar loss from the
    current values of the tensors in ``wrt`` (a tensor or a sequence of
    tensors, each with ``requires_grad``). Every entry of every tensor is
    perturbed by ``eps`` in both directions. The relative error of an
    entry is ``|a - n| / max(0.01, |a|, |n|)``; the check passes when the
    maximum over all entries is below ``tol``. ``f`` must be pure: same
    values in, same loss out.
    """
    tensors = [wrt] if hasattr(wrt, "data") else list(wrt)
    for t in tensors:
        if not t.requires_grad:
            raise ValueError("gradient_check target does not require grad")
        t.zero_grad()
    loss = f()
    backward(loss)
    analytic = [list(t.grad) if t.grad is not None else [0.0] * t.numel
                for t in tensors]

    max_rel = 0.0
    worst = (0, 0, 0.0, 0.0)
    checked = 0
    for ti, t in enumerate(tensors):
        buf = t.data
        for i in range(len(buf)):
            orig = buf[i]
            buf[i] = orig + eps
            fp = f().item()
            buf[i] = orig - eps
            fm = f().item()
            buf[i] = orig
            num = (fp - fm) / (2.0 * eps)
            a = analytic[ti][i]
            rel = abs(a - num) / max(1e-2, abs(a), abs(num))
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = (ti, i, a, num)
    return GradCheckReport(ok=max_rel < tol, max_rel_error=max_rel,
                           checked=checked, worst=worst)
