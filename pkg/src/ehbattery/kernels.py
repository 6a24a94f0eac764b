"""Pick the frame-loop backend at import time.

The compiled Cython kernel is used when it was built; otherwise (or when the
environment variable ``EHBATTERY_PURE_PYTHON`` is set) the pure-Python loop
takes over.  Both expose :func:`advance` with the same signature.
"""
import os

from . import _trace_py

POLICY_CODES = {"constant": 0, "waterfilling": 1, "nostorage": 2}
SUM_FIELDS = ("harvested", "consumed", "overflow", "charge_loss", "discharge_loss", "rate", "stored", "drawn")
COUNT_FIELDS = ("frames", "outages", "full", "demand_met")

python_advance = _trace_py.advance

try:
    from ._trace_kernel import advance as compiled_advance
except ImportError:  # extension not built
    compiled_advance = None

if compiled_advance is not None and not os.environ.get("EHBATTERY_PURE_PYTHON"):
    advance = compiled_advance
    BACKEND = "cython"
else:
    advance = python_advance
    BACKEND = "python"


def get_advance(backend=None):
    """Return the kernel for ``backend`` ("cython", "python" or None for default)."""
    if backend is None:
        return advance
    if backend == "python":
        return python_advance
    if backend == "cython":
        if compiled_advance is None:
            raise ImportError("the compiled trace kernel is not built")
        return compiled_advance
    raise ValueError(f"unknown backend {backend!r}")
