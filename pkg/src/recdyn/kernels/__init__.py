"""Hot-loop kernels with a compiled core and a pure-python fallback.

The compiled extension is preferred; set RECDYN_PURE_PYTHON=1 to force the
fallback (used by the backend-equivalence tests and the benchmark).
Both backends implement the same arithmetic in the same order.
"""

from __future__ import annotations

import os

if os.environ.get("RECDYN_PURE_PYTHON") == "1":
    from ._mf_sgd_py import sgd_epoch

    BACKEND = "python"
else:
    try:
        from ._mf_sgd_c import sgd_epoch  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._mf_sgd_py import sgd_epoch  # type: ignore[no-redef]

        BACKEND = "python"

__all__ = ["sgd_epoch", "BACKEND"]
