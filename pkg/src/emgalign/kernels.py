"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``EMGALIGN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as python_backend

try:
    if os.environ.get("EMGALIGN_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _ckernels as _compiled
except ImportError:
    _compiled = None

compiled_backend = _compiled
BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else python_backend

lfilter_rows = _impl.lfilter_rows
window_features = _impl.window_features
jacobi_eigh = _impl.jacobi_eigh
perplexity_search = _impl.perplexity_search
tsne_gradient = _impl.tsne_gradient

__all__ = [
    "BACKEND",
    "compiled_backend",
    "python_backend",
    "lfilter_rows",
    "window_features",
    "jacobi_eigh",
    "perplexity_search",
    "tsne_gradient",
]
