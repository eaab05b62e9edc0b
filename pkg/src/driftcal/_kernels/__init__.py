"""Hot loss kernels with a compiled core and a numpy fallback.

`brier_loss_dtemp` and `nll_loss_dtemp` evaluate the summed loss of
softmax(z_i / T_i) together with d(loss)/dT_i per sample. They sit inside
the optimizer loop, so the compiled version matters for large buffers.

Backend selection: the Cython extension if it built, else numpy. Set
DRIFTCAL_KERNEL=numpy (or =cython) to force one; forcing cython when the
extension is missing raises at import.
"""

import os

from . import _numpy_impl

softmax = _numpy_impl.softmax

_requested = os.environ.get("DRIFTCAL_KERNEL", "auto").lower()

if _requested not in ("auto", "numpy", "cython"):
    raise ImportError(f"DRIFTCAL_KERNEL must be auto, numpy or cython, got {_requested!r}")

if _requested == "numpy":
    _impl = _numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import _accel as _impl

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _numpy_impl
        BACKEND = "numpy"

import numpy as _np


def _as_kernel_args(logits, labels, temps):
    z = _np.ascontiguousarray(logits, dtype=_np.float64)
    y = _np.ascontiguousarray(labels, dtype=_np.int64)
    t = _np.ascontiguousarray(temps, dtype=_np.float64)
    return z, y, t


def brier_loss_dtemp(logits, labels, temps):
    """Summed Brier score and per-sample temperature derivative."""
    return _impl.brier_loss_dtemp(*_as_kernel_args(logits, labels, temps))


def nll_loss_dtemp(logits, labels, temps):
    """Summed NLL and per-sample temperature derivative."""
    return _impl.nll_loss_dtemp(*_as_kernel_args(logits, labels, temps))


def get_backends():
    """All importable backends, keyed by name (used by tests and benchmarks)."""
    backends = {"numpy": _numpy_impl}
    try:
        from . import _accel

        backends["cython"] = _accel
    except ImportError:
        pass
    return backends
