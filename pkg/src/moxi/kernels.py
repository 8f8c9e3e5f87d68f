"""Backend selection for the enumeration kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module is loaded.  Setting ``MOXI_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from moxi import _kernels_py

if os.environ.get("MOXI_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from moxi import _kernels_cy as _impl  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

block_marginal_sum = _impl.block_marginal_sum
deletion_marginal_sum = _impl.deletion_marginal_sum
all_shapley = _impl.all_shapley
popcounts = _impl.popcounts
