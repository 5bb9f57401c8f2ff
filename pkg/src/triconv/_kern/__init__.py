"""Kernel selection: compiled extension when available, numpy otherwise.

Set TRICONV_KERNELS=python or =compiled to force a choice (the latter raises
if the extension is missing).  `IMPL` records what was selected.
"""

import os

from . import numpy_impl

_NAMES = [
    "pair_table", "pair_bin_third", "pair_value", "pair_reduce_first",
    "pair_reduce_second", "hoelder_max", "dense_bucketize",
    "dense_reduce_first", "dense_reduce_second",
]

compiled = None
try:
    from . import _pairscan as compiled
except ImportError:
    compiled = None

_choice = os.environ.get("TRICONV_KERNELS", "auto").lower()
if _choice == "python":
    _mod = numpy_impl
elif _choice == "compiled":
    if compiled is None:
        raise ImportError("TRICONV_KERNELS=compiled but the extension "
                          "triconv._kern._pairscan is not built")
    _mod = compiled
else:
    _mod = compiled if compiled is not None else numpy_impl

IMPL = "compiled" if _mod is compiled and compiled is not None else "numpy"

for _name in _NAMES:
    globals()[_name] = getattr(_mod, _name)

__all__ = _NAMES + ["IMPL", "compiled", "numpy_impl"]
