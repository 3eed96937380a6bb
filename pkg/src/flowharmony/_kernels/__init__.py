"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
always available.  Set FLOWHARMONY_BACKEND=python (or =compiled) to force a
backend; "compiled" raises if the extension was not built.
"""

import os

from . import _python

_requested = os.environ.get("FLOWHARMONY_BACKEND", "auto")

if _requested == "python":
    _impl = _python
else:
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _python

BACKEND = _impl.BACKEND_NAME
propagate_codes = _impl.propagate_codes
group_sums = _impl.group_sums
block_match = _impl.block_match
displacement_order = _python.displacement_order


def get_backend(name="auto"):
    """Return the kernel module for `name` ('auto', 'compiled', 'python')."""
    if name == "python":
        return _python
    if name == "compiled":
        from . import _core

        return _core
    if name != "auto":
        raise ValueError(f"unknown backend {name!r}")
    return _impl
