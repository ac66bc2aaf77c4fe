"""Kernel backend selection.

The compiled extension is used when present; ``SPADSIM_PURE_PYTHON=1``
forces the NumPy fallback.  Both backends implement the contract described
in ``_kernels_py`` and produce identical streams.
"""

import os

if os.environ.get("SPADSIM_PURE_PYTHON", "") == "1":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels


def backend_name() -> str:
    """Name of the active kernel backend: "cython" or "python"."""
    return kernels.backend_name()
