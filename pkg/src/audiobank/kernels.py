"""Backend selection for the hot inner loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``AUDIOBANK_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("AUDIOBANK_PURE_PYTHON"):
    from ._kernels_py import correlate_valid, smo_solve

    BACKEND = "python"
else:
    try:
        from ._kernels import correlate_valid, smo_solve

        BACKEND = "cython"
    except ImportError:
        from ._kernels_py import correlate_valid, smo_solve

        BACKEND = "python"

__all__ = ["BACKEND", "correlate_valid", "smo_solve"]
