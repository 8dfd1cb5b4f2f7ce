"""Pure-NumPy twin of the compiled patch kernels.

Dtype-agnostic, so it also serves the float64 path used by the
finite-difference oracles.
"""
import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col_nhwc(xp, kh, kw, sh, sw, oh, ow):
    B, Hp, Wp, C = xp.shape
    sB, sH, sW, sC = xp.strides
    patches = as_strided(
        xp,
        shape=(B, oh, ow, kh, kw, C),
        strides=(sB, sh * sH, sw * sW, sH, sW, sC),
        writeable=False,
    )
    # reshape copies, giving the same contiguous layout the C kernel writes
    return patches.reshape(B, oh * ow, kh * kw * C)


def col2im_nhwc(cols, kh, kw, sh, sw, oh, ow, shape):
    B, Hp, Wp, C = shape
    gx = np.zeros(shape, dtype=cols.dtype)
    cols6 = cols.reshape(B, oh, ow, kh, kw, C)
    for di in range(kh):
        for dj in range(kw):
            gx[:, di:di + sh * (oh - 1) + 1:sh,
               dj:dj + sw * (ow - 1) + 1:sw, :] += cols6[:, :, :, di, dj, :]
    return gx
