"""Strided 2-D convolution with ceil-mode SAME padding.

Layout is NHWC (batch, height, width, channels) row-major; kernels are
[kh, kw, in_ch, out_ch]. Output spatial size is always ceil(in/stride):
total padding max((ceil(n/s)-1)*s + k - n, 0), split floor(total/2) at the
start and the remainder at the end. That asymmetric split is what turns
125 -> 63 -> 32 -> 16 with a 4x4/stride-2 kernel.
"""
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from . import _backend


@dataclass
class ConvLayerState:
    """Kernels + bias of one convolution layer (4x4 kernel, stride 2)."""

    kernels: np.ndarray  # [kh, kw, in_ch, out_ch]
    bias: np.ndarray     # [out_ch]
    stride: int = 2

    @property
    def in_channels(self):
        return self.kernels.shape[2]

    @property
    def out_channels(self):
        return self.kernels.shape[3]


def same_pad(size, kernel, stride):
    """(begin, end) zero padding so output size is ceil(size/stride)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv_output_size(size, stride):
    return -(-size // stride)


def _check_input(x, layer):
    if x.ndim != 4:
        raise ShapeError(f"expected a 4-D (B,H,W,C) input, got shape {x.shape}")
    if x.shape[3] != layer.in_channels:
        raise ShapeError(
            f"input has {x.shape[3]} channels (shape {x.shape}) but layer "
            f"kernels expect {layer.in_channels} (shape {layer.kernels.shape})")


def _pad_and_cols(x, layer):
    B, H, W, C = x.shape
    kh, kw, _, _ = layer.kernels.shape
    s = layer.stride
    ph0, ph1 = same_pad(H, kh, s)
    pw0, pw1 = same_pad(W, kw, s)
    oh, ow = conv_output_size(H, s), conv_output_size(W, s)
    xp = np.pad(x, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0)))
    cols = _backend.im2col_nhwc(xp, kh, kw, s, s, oh, ow)
    return cols, (ph0, pw0, xp.shape, oh, ow)


def conv2d_forward(x, layer, return_cache=False):
    """Convolve an NHWC batch; returns (B, ceil(H/s), ceil(W/s), out_ch)."""
    _check_input(x, layer)
    B = x.shape[0]
    kh, kw, cin, cout = layer.kernels.shape
    cols, geom = _pad_and_cols(x, layer)
    kflat = layer.kernels.reshape(kh * kw * cin, cout).astype(x.dtype, copy=False)
    oh, ow = geom[3], geom[4]
    out = cols.reshape(B * oh * ow, -1) @ kflat
    out += layer.bias.astype(x.dtype, copy=False)
    out = out.reshape(B, oh, ow, cout)
    if return_cache:
        return out, (cols, geom)
    return out


def conv2d_backward(x, layer, grad_out, cache=None):
    """Gradients of sum(grad_out * conv2d_forward(x, layer)).

    Returns (grad_input, grad_kernels, grad_bias); recomputes the column
    matrix unless the forward cache is supplied.
    """
    _check_input(x, layer)
    B, H, W, C = x.shape
    kh, kw, cin, cout = layer.kernels.shape
    s = layer.stride
    oh, ow = conv_output_size(H, s), conv_output_size(W, s)
    if grad_out.shape != (B, oh, ow, cout):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match the forward "
            f"output shape {(B, oh, ow, cout)}")
    if cache is None:
        cols, geom = _pad_and_cols(x, layer)
    else:
        cols, geom = cache
    ph0, pw0, padded_shape = geom[0], geom[1], geom[2]

    g2 = grad_out.reshape(B * oh * ow, cout)
    cols2 = cols.reshape(B * oh * ow, -1)
    grad_kernels = (cols2.T @ g2).reshape(kh, kw, cin, cout)
    grad_bias = grad_out.sum(axis=(0, 1, 2))

    kflat = layer.kernels.reshape(kh * kw * cin, cout).astype(x.dtype, copy=False)
    gcols = (g2 @ kflat.T).reshape(B, oh * ow, kh * kw * cin)
    gxp = _backend.col2im_nhwc(gcols, kh, kw, s, s, oh, ow, padded_shape)
    grad_input = gxp[:, ph0:ph0 + H, pw0:pw0 + W, :]
    return np.ascontiguousarray(grad_input), grad_kernels, grad_bias


def conv2d_forward_naive(x, layer):
    """Quadruple-loop reference convolution, float64 accumulation.

    Slow; kept as the independent oracle for the fast path.
    """
    _check_input(x, layer)
    B, H, W, C = x.shape
    kh, kw, cin, cout = layer.kernels.shape
    s = layer.stride
    ph0, _ = same_pad(H, kh, s)
    pw0, _ = same_pad(W, kw, s)
    oh, ow = conv_output_size(H, s), conv_output_size(W, s)
    k = layer.kernels.astype(np.float64)
    out = np.zeros((B, oh, ow, cout))
    for b in range(B):
        for i in range(oh):
            for j in range(ow):
                for f in range(cout):
                    acc = float(layer.bias[f])
                    for di in range(kh):
                        ii = i * s + di - ph0
                        if ii < 0 or ii >= H:
                            continue
                        for dj in range(kw):
                            jj = j * s + dj - pw0
                            if jj < 0 or jj >= W:
                                continue
                            for c in range(C):
                                acc += float(x[b, ii, jj, c]) * k[di, dj, c, f]
                    out[b, i, j, f] = acc
    return out
