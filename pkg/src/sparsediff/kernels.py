"""Backend selection for the simulation kernel.

The compiled extension is used when it imports; otherwise the NumPy version.
Set ``SPARSEDIFF_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

ATTRACTOR_NONE = _kernels_py.ATTRACTOR_NONE
ATTRACTOR_ZA = _kernels_py.ATTRACTOR_ZA
ATTRACTOR_RZA = _kernels_py.ATTRACTOR_RZA

try:
    if os.environ.get("SPARSEDIFF_BACKEND", "").lower() == "python":
        raise ImportError("fallback forced by SPARSEDIFF_BACKEND")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def get_kernel(name=None):
    """Return ``simulate_batch`` for ``name`` ("cython" | "python"), default the active one."""
    name = name or BACKEND
    if name == "python":
        return _kernels_py.simulate_batch
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernel not available; build the extension first")
        return _compiled.simulate_batch
    raise ValueError(f"unknown backend {name!r}")


simulate_batch = get_kernel()
