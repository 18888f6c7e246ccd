"""Backend selection for the hot kernels.

The default path JIT-compiles the kernels with numba; set MATPIVOT_NO_NUMBA=1
(or any of 1/true/yes) to force the pure-numpy fallback.  Both backends expose
the same functions; ``benchmarks/bench_kernels.py`` compares them.
"""

import os

_flag = os.environ.get("MATPIVOT_NO_NUMBA", "").strip().lower()
_DISABLED = _flag in ("1", "true", "yes")

if not _DISABLED:
    try:
        from . import _kernels_numba as kernels
    except ImportError:
        from . import _kernels_numpy as kernels
else:
    from . import _kernels_numpy as kernels

BACKEND = kernels.BACKEND

svd_values = kernels.svd_values
svd_values_batch = kernels.svd_values_batch
svd_full = kernels.svd_full
svd_full_batch = kernels.svd_full_batch
simulate_batch = kernels.simulate_batch
