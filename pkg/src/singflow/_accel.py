"""Optional numba acceleration.

Hot kernels are written once in numpy style and JIT-compiled when numba is
available. Set SINGFLOW_NUMBA=0 to force the pure-numpy/python path (useful
for debugging and for the kernel benchmark). Either way every kernel exposes
``.py_func`` pointing at the uncompiled implementation.
"""

import os

NUMBA_ENABLED = os.environ.get("SINGFLOW_NUMBA", "1") != "0"

if NUMBA_ENABLED:
    try:
        from numba import njit as _njit
    except ImportError:
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    def maybe_njit(fn):
        return _njit(cache=True)(fn)
else:
    def maybe_njit(fn):
        fn.py_func = fn
        return fn
