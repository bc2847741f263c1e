"""Kernel backend selection.

The compiled extension (``_fast``) is preferred when importable; the numpy
reference (``_pyref``) is the fallback. Override with GNUQ_BACKEND=python or
GNUQ_BACKEND=compiled (the latter raises if the extension is missing).
"""

import os

_choice = os.environ.get("GNUQ_BACKEND", "auto")
if _choice not in ("auto", "compiled", "python"):
    raise RuntimeError(
        f"GNUQ_BACKEND must be auto, compiled or python, got {_choice!r}"
    )

if _choice == "python":
    from . import _pyref as _impl
elif _choice == "compiled":
    from . import _fast as _impl
else:
    try:
        from . import _fast as _impl
    except ImportError:
        from . import _pyref as _impl

BACKEND = "compiled" if _impl.__name__.endswith("_fast") else "python"

HEAD_BINARY = _impl.HEAD_BINARY
HEAD_SOFTMAX = _impl.HEAD_SOFTMAX
HEAD_IDENTITY = _impl.HEAD_IDENTITY

loss_grad = _impl.loss_grad
probs = _impl.probs
gradnorm = _impl.gradnorm
