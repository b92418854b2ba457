"""Kernel backend selection: numba JIT by default, pure NumPy on request.

The environment variable ``MMFEM1D_BACKEND`` picks the backend:

* ``auto`` (default) -- use numba if it imports, otherwise plain Python.
* ``numba``          -- require numba, raise if unavailable.
* ``numpy``          -- skip JIT compilation entirely (slow, for debugging,
                        benchmarking and environments without numba).

The choice is made once at import time; all kernels in ``_core`` are
decorated with :func:`jit` so both backends run the same source.
"""

import os

_CHOICE = os.environ.get("MMFEM1D_BACKEND", "auto").strip().lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"MMFEM1D_BACKEND must be 'auto', 'numba' or 'numpy', got {_CHOICE!r}"
    )

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the numpy backend
    _HAVE_NUMBA = False

if _CHOICE == "numba" and not _HAVE_NUMBA:
    raise ImportError("MMFEM1D_BACKEND=numba but numba is not importable")

USING_NUMBA = _HAVE_NUMBA and _CHOICE != "numpy"


def jit(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if USING_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return func


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"
