"""Select the compiled pair-sum core, falling back to numpy.

Set ``BOSEPAIR_PURE_PYTHON=1`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("BOSEPAIR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._core import pair_distance_matrix_apply, pair_distance_sum  # noqa: F401

        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from ._core_py import pair_distance_matrix_apply, pair_distance_sum  # noqa: F401
