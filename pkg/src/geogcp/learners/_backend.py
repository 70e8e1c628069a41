"""Kernel backend selection.

The compiled extension is used when importable; ``GEOGCP_BACKEND=python``
forces the numpy fallback and ``GEOGCP_BACKEND=compiled`` makes a missing
extension an import error.
"""
import logging
import os

logger = logging.getLogger(__name__)

_requested = os.environ.get("GEOGCP_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "python", "compiled"):
    raise ImportError(f"GEOGCP_BACKEND must be auto, python or compiled, got {_requested!r}")

kernels = None
if _requested != "python":
    try:
        from . import _tree_c as kernels
    except ImportError:
        if _requested == "compiled":
            raise
        logger.debug("compiled tree kernels unavailable, using numpy fallback")

if kernels is None:
    from . import _tree_py as kernels

BACKEND = "compiled" if kernels.__name__.endswith("_tree_c") else "python"


def get_kernels(name=None):
    """Return the kernel module for ``name`` ('compiled' or 'python'), default active."""
    if name is None:
        return kernels
    if name == "python":
        from . import _tree_py
        return _tree_py
    if name == "compiled":
        from . import _tree_c
        return _tree_c
    raise ValueError(f"unknown backend {name!r}")
