"""Backend selection for the hot inner loops.

The compiled extension is used when it imports; otherwise the pure-Python
twin is used. Set ``TOMOGUARD_PURE_PYTHON=1`` to force the fallback.
"""
import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("TOMOGUARD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on build
        log.debug("compiled kernels unavailable, using pure-Python fallback")
    else:
        _impl = _compiled
        BACKEND = "cython"

nnls_fit = _impl.nnls_fit
batch_fit_losses = _impl.batch_fit_losses
single_linkage_cophenetic = _impl.single_linkage_cophenetic
zhang_shasha = _impl.zhang_shasha

__all__ = [
    "BACKEND",
    "nnls_fit",
    "batch_fit_losses",
    "single_linkage_cophenetic",
    "zhang_shasha",
]
