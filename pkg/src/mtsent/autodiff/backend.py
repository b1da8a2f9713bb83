"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the
pure-Python kernels are the fallback. ``MTSENT_BACKEND=python`` (or
``=compiled``) forces a choice at import time, and :func:`use` switches at
runtime (the benchmark and the parity tests rely on this). Call sites must
go through ``backend.K`` so the switch takes effect everywhere.
"""

import os

from . import kernels_py

try:
    from . import _kernels
except ImportError:
    _kernels = None

K = kernels_py if _kernels is None else _kernels

_forced = os.environ.get("MTSENT_BACKEND")
if _forced == "python":
    K = kernels_py
elif _forced == "compiled":
    if _kernels is None:
        raise ImportError(
            "MTSENT_BACKEND=compiled but the compiled kernels are not built"
        )
    K = _kernels
elif _forced not in (None, ""):
    raise ValueError(f"unknown MTSENT_BACKEND value: {_forced!r}")


def available():
    names = ["python"]
    if _kernels is not None:
        names.append("compiled")
    return names


def active():
    return K.NAME


def use(name):
    """Select the kernel backend by name ('python' or 'compiled')."""
    global K
    if name == "python":
        K = kernels_py
    elif name == "compiled":
        if _kernels is None:
            raise ValueError("compiled kernels are not built")
        K = _kernels
    else:
        raise ValueError(f"unknown backend: {name!r}")
    return K
