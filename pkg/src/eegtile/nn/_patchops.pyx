# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled patch extraction/scatter kernels for strided 2-D convolution.

Single-precision NHWC only; the NumPy fallback (_patchops_np) covers other
dtypes. Both backends produce identical column matrices, so the backend
choice never changes results, only speed.
"""
import numpy as np


def im2col_nhwc(const float[:, :, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw,
                Py_ssize_t sh, Py_ssize_t sw, Py_ssize_t oh, Py_ssize_t ow):
    """Gather every kh x kw patch of a padded NHWC batch.

    Returns (B, oh*ow, kh*kw*C) with patch elements laid out row-major in
    (kh, kw, C) order, matching kernels.reshape(kh*kw*C, F).
    """
    cdef Py_ssize_t B = xp.shape[0], C = xp.shape[3]
    cols_arr = np.empty((B, oh * ow, kh * kw * C), dtype=np.float32)
    cdef float[:, :, ::1] cols = cols_arr
    cdef Py_ssize_t b, i, j, di, dj, c, q
    cdef const float *src
    cdef float *dst
    with nogil:
        for b in range(B):
            for i in range(oh):
                for j in range(ow):
                    dst = &cols[b, i * ow + j, 0]
                    q = 0
                    for di in range(kh):
                        for dj in range(kw):
                            src = &xp[b, i * sh + di, j * sw + dj, 0]
                            for c in range(C):
                                dst[q] = src[c]
                                q += 1
    return cols_arr


def col2im_nhwc(const float[:, :, ::1] cols, Py_ssize_t kh, Py_ssize_t kw,
                Py_ssize_t sh, Py_ssize_t sw, Py_ssize_t oh, Py_ssize_t ow,
                shape):
    """Scatter-add columns back onto a zeroed padded NHWC batch
    (adjoint of im2col_nhwc)."""
    gx_arr = np.zeros(shape, dtype=np.float32)
    cdef float[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t B = gx.shape[0], C = gx.shape[3]
    cdef Py_ssize_t b, i, j, di, dj, c, q
    cdef const float *src
    cdef float *dst
    with nogil:
        for b in range(B):
            for i in range(oh):
                for j in range(ow):
                    src = &cols[b, i * ow + j, 0]
                    q = 0
                    for di in range(kh):
                        for dj in range(kw):
                            dst = &gx[b, i * sh + di, j * sw + dj, 0]
                            for c in range(C):
                                dst[c] += src[q]
                                q += 1
    return gx_arr
