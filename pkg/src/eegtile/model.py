"""The compact tile-classification network.

Architecture: 3 x (Conv 4x4 stride 2 -> BatchNorm2D -> ReLU) with 32/64/128
filters, global average pooling, FC 128->100 -> BatchNorm1D -> ReLU,
FC 100->classes. Works on any NHWC input with spatial dims >= 8 and one
channel-depth plane; a 125x125x1 tile flows 63x63x32 -> 32x32x64 ->
16x16x128 -> 128 -> 100 -> classes.
"""
import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagicError, FormatError, ShapeError, TruncatedPayloadError
from .nn import (
    BatchNormState,
    ConvLayerState,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    fc_backward,
    fc_forward,
    gap,
    gap_backward,
    relu,
    relu_backward,
    softmax_cross_entropy,
)

KERNEL = 4
STRIDE = 2
FILTERS = (32, 64, 128)
FC_HIDDEN = 100
MIN_SPATIAL = 8  # three stride-2 layers need at least 8 -> 4 -> 2 -> 1

CHECKPOINT_MAGIC = b"EGTCKPT1"


@dataclass
class NetworkParams:
    """All learnable parameters plus batchnorm running statistics."""

    conv: list          # 3 x ConvLayerState
    bn2d: list          # 3 x BatchNormState
    fc1_w: np.ndarray   # [128, 100]
    fc1_b: np.ndarray
    bn1d: BatchNormState
    fc2_w: np.ndarray   # [100, classes]
    fc2_b: np.ndarray
    classes: int


def init_he(seed, classes, input_shape=(125, 125, 1), dtype=np.float32):
    """He-initialized network, fully determined by the seed.

    Rectified layers draw Normal(0, sqrt(2/fan_in)); the output layer has
    no rectifier, so it draws Normal(0, sqrt(1/fan_in)). Biases start at
    zero, batchnorm at the identity map.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    in_ch = input_shape[2]
    rng = np.random.default_rng(seed)

    def he(shape, fan_in, gain=2.0):
        return rng.standard_normal(shape, dtype=np.float32).astype(dtype) \
            * np.sqrt(gain / fan_in, dtype=dtype)

    conv, bn2d = [], []
    prev = in_ch
    for f in FILTERS:
        conv.append(ConvLayerState(
            kernels=he((KERNEL, KERNEL, prev, f), KERNEL * KERNEL * prev),
            bias=np.zeros(f, dtype=dtype),
            stride=STRIDE,
        ))
        bn2d.append(BatchNormState.identity(f, dtype=dtype))
        prev = f
    fc1_w = he((FILTERS[-1], FC_HIDDEN), FILTERS[-1])
    fc2_w = he((FC_HIDDEN, classes), FC_HIDDEN, gain=1.0)
    return NetworkParams(
        conv=conv,
        bn2d=bn2d,
        fc1_w=fc1_w,
        fc1_b=np.zeros(FC_HIDDEN, dtype=dtype),
        bn1d=BatchNormState.identity(FC_HIDDEN, dtype=dtype),
        fc2_w=fc2_w,
        fc2_b=np.zeros(classes, dtype=dtype),
        classes=classes,
    )


def named_params(params):
    """Trainable arrays in a fixed order (running stats excluded)."""
    out = []
    for i, (c, bn) in enumerate(zip(params.conv, params.bn2d), start=1):
        out.append((f"conv{i}.kernels", c.kernels))
        out.append((f"conv{i}.bias", c.bias))
        out.append((f"bn2d{i}.gamma", bn.gamma))
        out.append((f"bn2d{i}.beta", bn.beta))
    out.append(("fc1.weights", params.fc1_w))
    out.append(("fc1.bias", params.fc1_b))
    out.append(("bn1d.gamma", params.bn1d.gamma))
    out.append(("bn1d.beta", params.bn1d.beta))
    out.append(("fc2.weights", params.fc2_w))
    out.append(("fc2.bias", params.fc2_b))
    return out


def named_state(params):
    """Trainables plus batchnorm running statistics (checkpoint contents)."""
    out = named_params(params)
    for i, bn in enumerate(params.bn2d, start=1):
        out.append((f"bn2d{i}.running_mean", bn.running_mean))
        out.append((f"bn2d{i}.running_var", bn.running_var))
    out.append(("bn1d.running_mean", params.bn1d.running_mean))
    out.append(("bn1d.running_var", params.bn1d.running_var))
    return out


def count_params(params):
    return sum(arr.size for _, arr in named_params(params))


def copy_params(params, dtype=None):
    """Deep copy, optionally cast (float64 copies feed the gradient oracles)."""
    def cast(a):
        return a.astype(dtype) if dtype is not None else a.copy()

    return NetworkParams(
        conv=[ConvLayerState(cast(c.kernels), cast(c.bias), c.stride)
              for c in params.conv],
        bn2d=[BatchNormState(cast(b.gamma), cast(b.beta), cast(b.running_mean),
                             cast(b.running_var), b.momentum, b.epsilon)
              for b in params.bn2d],
        fc1_w=cast(params.fc1_w),
        fc1_b=cast(params.fc1_b),
        bn1d=BatchNormState(cast(params.bn1d.gamma), cast(params.bn1d.beta),
                            cast(params.bn1d.running_mean),
                            cast(params.bn1d.running_var),
                            params.bn1d.momentum, params.bn1d.epsilon),
        fc2_w=cast(params.fc2_w),
        fc2_b=cast(params.fc2_b),
        classes=params.classes,
    )


def _check_batch(params, batch):
    if batch.ndim != 4:
        raise ShapeError(f"expected NHWC batch, got shape {batch.shape}")
    if batch.shape[1] < MIN_SPATIAL or batch.shape[2] < MIN_SPATIAL:
        raise ShapeError(
            f"spatial dims {batch.shape[1]}x{batch.shape[2]} too small; "
            f"three stride-2 layers need at least {MIN_SPATIAL}x{MIN_SPATIAL}")
    if batch.shape[3] != params.conv[0].in_channels:
        raise ShapeError(
            f"batch depth {batch.shape[3]} != network input depth "
            f"{params.conv[0].in_channels}")


def _forward_full(params, batch, train):
    """Forward pass keeping every intermediate needed by the backward."""
    _check_batch(params, batch)
    caches = []
    h = batch
    for c, bn in zip(params.conv, params.bn2d):
        conv_out, conv_cache = conv2d_forward(h, c, return_cache=True)
        bn_out, bn_cache = batchnorm_forward(conv_out, bn, train, return_cache=True)
        r = relu(bn_out)
        caches.append((h, conv_out, bn_out, conv_cache, bn_cache))
        h = r
    pooled = gap(h)
    fc1_out = fc_forward(pooled, params.fc1_w, params.fc1_b)
    bn1d_out, bn1d_cache = batchnorm_forward(fc1_out, params.bn1d, train,
                                             return_cache=True)
    hidden = relu(bn1d_out)
    logits = fc_forward(hidden, params.fc2_w, params.fc2_b)
    tail = (h, pooled, fc1_out, bn1d_out, bn1d_cache, hidden)
    return logits, caches, tail


def forward(params, batch, train=False):
    """Logits [batch x classes] for an NHWC batch."""
    logits, _, _ = _forward_full(params, batch, train)
    return logits


def trace_shapes(params, height, width):
    """Realized per-stage output shapes for a 1-example input, in order:
    three conv blocks (H, W, C), pooled width, hidden width, classes."""
    x = np.zeros((1, height, width, params.conv[0].in_channels),
                 dtype=np.float32)
    logits, caches, tail = _forward_full(params, x, train=False)
    shapes = [cache[1].shape[1:] for cache in caches]
    shapes.append(tail[1].shape[1])   # gap output
    shapes.append(tail[2].shape[1])   # fc1 output
    shapes.append(logits.shape[1])
    return shapes


def _backward_full(params, grad_logits, caches, tail):
    last_relu, pooled, fc1_out, bn1d_out, bn1d_cache, hidden = tail
    grads = {}
    g, grads["fc2.weights"], grads["fc2.bias"] = fc_backward(
        hidden, params.fc2_w, grad_logits)
    g = relu_backward(bn1d_out, g)
    g, grads["bn1d.gamma"], grads["bn1d.beta"] = batchnorm_backward(
        fc1_out, params.bn1d, g, cache=bn1d_cache)
    g, grads["fc1.weights"], grads["fc1.bias"] = fc_backward(
        pooled, params.fc1_w, g)
    g = gap_backward(last_relu, g)
    for i in range(len(params.conv) - 1, -1, -1):
        h, conv_out, bn_out, conv_cache, bn_cache = caches[i]
        g = relu_backward(bn_out, g)
        g, grads[f"bn2d{i + 1}.gamma"], grads[f"bn2d{i + 1}.beta"] = \
            batchnorm_backward(conv_out, params.bn2d[i], g, cache=bn_cache)
        g, grads[f"conv{i + 1}.kernels"], grads[f"conv{i + 1}.bias"] = \
            conv2d_backward(h, params.conv[i], g, cache=conv_cache)
    return grads


def loss_batch(params, batch, labels, train=True, return_logits=False):
    """Mean cross-entropy over the batch and its gradient for every
    trainable parameter (a dict keyed like named_params)."""
    labels = np.asarray(labels, dtype=np.int64)
    if batch.shape[0] == 0:
        raise ShapeError("empty batch")
    if labels.shape != (batch.shape[0],):
        raise ShapeError(
            f"labels shape {labels.shape} != ({batch.shape[0]},)")
    if np.any(labels < 0) or np.any(labels >= params.classes):
        raise ShapeError(f"labels out of range for {params.classes} classes")
    logits, caches, tail = _forward_full(params, batch, train)
    losses, grad_logits = softmax_cross_entropy(logits, labels)
    loss = float(losses.mean())
    grads = _backward_full(params, grad_logits / batch.shape[0], caches, tail)
    if return_logits:
        return loss, grads, logits
    return loss, grads


def save_checkpoint(params, path):
    """Binary checkpoint: magic, length-prefixed manifest of (name, dims,
    offset) entries, then raw little-endian float32 data."""
    entries = named_state(params)
    manifest = io.BytesIO()
    manifest.write(struct.pack("<I", len(entries)))
    offset = 0
    blobs = []
    for name, arr in entries:
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        nb = name.encode("utf-8")
        manifest.write(struct.pack("<H", len(nb)))
        manifest.write(nb)
        manifest.write(struct.pack("<B", arr.ndim))
        manifest.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        manifest.write(struct.pack("<Q", offset))
        blobs.append(raw)
        offset += len(raw)
    mbytes = manifest.getvalue()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(mbytes)))
        fh.write(mbytes)
        for raw in blobs:
            fh.write(raw)


def _read_exact(fh, n, what):
    raw = fh.read(n)
    if len(raw) != n:
        raise TruncatedPayloadError(
            f"checkpoint ends inside {what}: wanted {n} bytes, got {len(raw)}")
    return raw


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise BadMagicError(
                f"not a checkpoint: magic {magic!r} != {CHECKPOINT_MAGIC!r}")
        (mlen,) = struct.unpack("<I", _read_exact(fh, 4, "manifest length"))
        manifest = io.BytesIO(_read_exact(fh, mlen, "manifest"))
        data = fh.read()
    (count,) = struct.unpack("<I", manifest.read(4))
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", manifest.read(2))
        name = manifest.read(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<B", manifest.read(1))
        dims = struct.unpack(f"<{ndim}I", manifest.read(4 * ndim))
        (offset,) = struct.unpack("<Q", manifest.read(8))
        nbytes = 4 * int(np.prod(dims, dtype=np.int64)) if ndim else 4
        if offset + nbytes > len(data):
            raise TruncatedPayloadError(
                f"checkpoint data for {name!r} runs past end of file")
        arr = np.frombuffer(data[offset:offset + nbytes], dtype="<f4")
        arrays[name] = arr.reshape(dims).astype(np.float32)
    return _params_from_arrays(arrays)


def _params_from_arrays(arrays):
    def take(name):
        if name not in arrays:
            raise FormatError(f"checkpoint is missing array {name!r}")
        return arrays[name]

    conv, bn2d = [], []
    for i in range(1, 4):
        conv.append(ConvLayerState(kernels=take(f"conv{i}.kernels"),
                                   bias=take(f"conv{i}.bias"), stride=STRIDE))
        bn2d.append(BatchNormState(
            gamma=take(f"bn2d{i}.gamma"), beta=take(f"bn2d{i}.beta"),
            running_mean=take(f"bn2d{i}.running_mean"),
            running_var=take(f"bn2d{i}.running_var")))
    fc2_b = take("fc2.bias")
    return NetworkParams(
        conv=conv, bn2d=bn2d,
        fc1_w=take("fc1.weights"), fc1_b=take("fc1.bias"),
        bn1d=BatchNormState(
            gamma=take("bn1d.gamma"), beta=take("bn1d.beta"),
            running_mean=take("bn1d.running_mean"),
            running_var=take("bn1d.running_var")),
        fc2_w=take("fc2.weights"), fc2_b=fc2_b,
        classes=fc2_b.shape[0],
    )
