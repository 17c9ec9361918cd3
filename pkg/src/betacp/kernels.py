"""Kernel backend selection.

The inner loops (per-entry reconstruction and the scatter-add of update
numerators/denominators) exist twice: a compiled Cython extension and a
NumPy fallback. The extension is preferred when importable; set
``BETACP_PURE_PYTHON=1`` to force the fallback. Both use the same
accumulation order and are compiled without fast-math, so results agree
to the last few ulps; ``benchmarks/bench_kernels.py`` compares speed.
"""

import os

if os.environ.get("BETACP_PURE_PYTHON", "0") not in ("", "0"):
    from . import _kernels_py as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl  # type: ignore[no-redef]

        BACKEND = "numpy"

predict_entries = _impl.predict_entries
mode_update_terms = _impl.mode_update_terms
bias_update_terms = _impl.bias_update_terms


def backend() -> str:
    """Name of the active kernel backend: "cython" or "numpy"."""
    return BACKEND
