"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``PORTSEL_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py as pure
from ._kernels_py import (  # math shared by both backends
    PROB_EPS,
    dlogits_multiclass,
    dlogits_multilabel,
    sigmoid,
    softmax,
)

compiled = None
if not os.environ.get("PORTSEL_PURE_PYTHON"):
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else pure
BACKEND = "compiled" if compiled is not None else "python"

hashed_counts = _impl.hashed_counts
sgd_epoch = _impl.sgd_epoch
fnv1a64 = _impl.fnv1a64
salted_basis = _impl.salted_basis

__all__ = [
    "BACKEND",
    "PROB_EPS",
    "compiled",
    "dlogits_multiclass",
    "dlogits_multilabel",
    "fnv1a64",
    "hashed_counts",
    "pure",
    "salted_basis",
    "sgd_epoch",
    "sigmoid",
    "softmax",
]
