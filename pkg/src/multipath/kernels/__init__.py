"""Hot kernels: candidate ranking, mass-threshold pruning, sampler support.

The compiled extension (``_fast``, Cython) is used when it built; otherwise
the pure-Python twin (``pure``) takes over. Set ``MULTIPATH_PURE=1`` to force
the fallback. Both expose the same functions and are kept behaviorally
identical (see tests and benchmarks/bench_kernels.py).
"""

import os

from . import pure

if os.environ.get("MULTIPATH_PURE") == "1":
    _impl = pure
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND
MASS_SLACK = _impl.MASS_SLACK

topk_indices = _impl.topk_indices
prune_prefix = _impl.prune_prefix
nucleus_prefix = _impl.nucleus_prefix
log_sum_exp = _impl.log_sum_exp


def backend_name() -> str:
    """Which kernel implementation is active: "fast" or "pure"."""
    return BACKEND
