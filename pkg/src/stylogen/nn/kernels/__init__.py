"""Kernel backend selection.

The compiled Cython core is preferred when present; the pure numpy fallback
is used otherwise. ``STYLOGEN_KERNELS=python`` or ``=compiled`` in the
environment forces one side (the latter raises if the extension is missing).
"""

import os

from . import pyref

_requested = os.environ.get("STYLOGEN_KERNELS", "auto").lower()

if _requested in ("python", "py", "pure"):
    impl = pyref
    BACKEND = "python"
elif _requested in ("compiled", "c", "cython"):
    from . import _core as impl

    BACKEND = "compiled"
elif _requested in ("auto", ""):
    try:
        from . import _core as impl

        BACKEND = "compiled"
    except ImportError:
        impl = pyref
        BACKEND = "python"
else:
    raise RuntimeError(f"unknown STYLOGEN_KERNELS value {_requested!r}")

conv1d_fwd = impl.conv1d_fwd
conv1d_bwd = impl.conv1d_bwd
gru_fwd = impl.gru_fwd
gru_bwd = impl.gru_bwd
lstm_fwd = impl.lstm_fwd
lstm_bwd = impl.lstm_bwd
