"""Kernel backend selection.

The compiled extension is used when importable; setting
``OBSREWARD_PURE_PYTHON=1`` forces the numpy fallback. Both backends expose
``counter_uniforms(seed, streams, n_slots)`` and ``bt_loss_grad(diffs, w, lam)``.
The RNG kernel is bit-identical across backends; the BT kernel agrees to
rounding (different summation order).
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("OBSREWARD_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

counter_uniforms = _impl.counter_uniforms
bt_loss_grad = _impl.bt_loss_grad
