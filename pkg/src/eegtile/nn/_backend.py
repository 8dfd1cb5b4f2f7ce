"""Backend selection for the convolution patch kernels.

The compiled extension is preferred for float32 work; set
EEGTILE_PURE_NUMPY=1 to force the NumPy fallback (used by the benchmark
and by environments without a compiler). float64 inputs always take the
NumPy path because the extension is single-precision.
"""
import os

import numpy as np

from . import _patchops_np

_force_numpy = os.environ.get("EEGTILE_PURE_NUMPY", "").strip() not in ("", "0")

if not _force_numpy:
    try:
        from . import _patchops as _compiled
    except ImportError:
        _compiled = None
else:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def backend_name():
    return BACKEND


def im2col_nhwc(xp, kh, kw, sh, sw, oh, ow):
    if _compiled is not None and xp.dtype == np.float32:
        return _compiled.im2col_nhwc(np.ascontiguousarray(xp),
                                     kh, kw, sh, sw, oh, ow)
    return _patchops_np.im2col_nhwc(xp, kh, kw, sh, sw, oh, ow)


def col2im_nhwc(cols, kh, kw, sh, sw, oh, ow, shape):
    if _compiled is not None and cols.dtype == np.float32:
        return _compiled.col2im_nhwc(np.ascontiguousarray(cols),
                                     kh, kw, sh, sw, oh, ow, shape)
    return _patchops_np.col2im_nhwc(cols, kh, kw, sh, sw, oh, ow, shape)
