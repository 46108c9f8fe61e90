"""Kernel backend selection.

The compiled extension `tailsim._kernels` is preferred when importable; the
numpy module `tailsim._kernels_py` is the fallback.  Set TAILSIM_KERNELS to
"python" or "c" to force a backend (forcing "c" raises if the extension is
missing).  Both backends expose the same functions; results agree to
floating-point roundoff but are not bit-identical across backends, so all
bit-exactness guarantees are per-backend.
"""

import os

_forced = os.environ.get("TAILSIM_KERNELS", "").strip().lower()
if _forced not in ("", "c", "python"):
    raise RuntimeError("TAILSIM_KERNELS must be 'c' or 'python', got %r" % (_forced,))

if _forced == "python":
    from tailsim import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from tailsim import _kernels as kernels

        BACKEND = "c"
    except ImportError:
        if _forced == "c":
            raise
        from tailsim import _kernels_py as kernels

        BACKEND = "python"


def backend_name():
    """Name of the active kernel backend: 'c' or 'python'."""
    return BACKEND
