"""Batchnorm, ReLU, global average pooling, fully connected layers, and
the softmax cross-entropy head. Each forward has an explicit backward
with the same gradient contract as conv2d_backward (no autodiff graph).

Batchnorm handles both 4-D (per-channel over batch x space) and 2-D
(per-feature over batch) inputs; features are the last axis either way.
Running statistics track the biased batch moments.
"""
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError, ShapeError


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5

    @classmethod
    def identity(cls, features, dtype=np.float32):
        return cls(
            gamma=np.ones(features, dtype=dtype),
            beta=np.zeros(features, dtype=dtype),
            running_mean=np.zeros(features, dtype=dtype),
            running_var=np.ones(features, dtype=dtype),
        )

    @property
    def features(self):
        return self.gamma.shape[0]


def _bn_axes(x, state):
    if x.ndim not in (2, 4):
        raise ShapeError(f"batchnorm expects a 2-D or 4-D input, got {x.shape}")
    if x.shape[-1] != state.features:
        raise ShapeError(
            f"input has {x.shape[-1]} features (shape {x.shape}) but the "
            f"batchnorm state holds {state.features}")
    return tuple(range(x.ndim - 1))


def batchnorm_forward(x, state, train, return_cache=False):
    """Normalize per feature. Train mode uses batch statistics and updates
    the running stats in place; eval mode reads the running stats and never
    mutates the state."""
    axes = _bn_axes(x, state)
    gamma = state.gamma.astype(x.dtype, copy=False)
    beta = state.beta.astype(x.dtype, copy=False)
    if not train:
        # fold running stats into one scale/shift pass
        inv_std = 1.0 / np.sqrt(state.running_var.astype(x.dtype, copy=False)
                                + state.epsilon)
        scale = gamma * inv_std
        shift = beta - state.running_mean.astype(x.dtype, copy=False) * scale
        out = x * scale
        out += shift
        if return_cache:
            xhat = (x - state.running_mean.astype(x.dtype, copy=False)) * inv_std
            return out, (xhat, inv_std, False)
        return out
    mean = x.mean(axis=axes)
    xhat = x - mean
    var = np.mean(np.square(xhat), axis=axes)
    state.running_mean += state.momentum * (mean - state.running_mean)
    state.running_var += state.momentum * (var - state.running_var)
    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    xhat *= inv_std
    out = xhat * gamma
    out += beta
    if return_cache:
        return out, (xhat, inv_std, True)
    return out


def batchnorm_backward(x, state, grad_out, cache=None):
    """Returns (grad_input, grad_gamma, grad_beta)."""
    axes = _bn_axes(x, state)
    if grad_out.shape != x.shape:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} != input shape {x.shape}")
    if cache is None:
        # no cache -> assume train mode and recompute the batch statistics
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var + np.asarray(state.epsilon, dtype=x.dtype))
        xhat = (x - mean) * inv_std
        train = True
    else:
        xhat, inv_std, train = cache
    gamma = state.gamma.astype(x.dtype, copy=False)
    grad_gamma = (grad_out * xhat).sum(axis=axes)
    grad_beta = grad_out.sum(axis=axes)
    if not train:
        rv = state.running_var.astype(x.dtype, copy=False)
        grad_input = grad_out * (gamma / np.sqrt(rv + state.epsilon))
        return grad_input, grad_gamma, grad_beta
    m = float(np.prod([x.shape[a] for a in axes]))  # python float keeps x.dtype
    gxhat = grad_out * gamma
    s1 = gxhat.sum(axis=axes)
    s2 = (gxhat * xhat).sum(axis=axes)
    grad_input = gxhat
    grad_input -= s1 * (1.0 / m)
    grad_input -= xhat * (s2 * (1.0 / m))
    grad_input *= inv_std
    return grad_input, grad_gamma, grad_beta


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


def gap(x):
    """Global average pooling: (B, H, W, C) -> (B, C)."""
    if x.ndim != 4:
        raise ShapeError(f"gap expects a 4-D input, got {x.shape}")
    return x.mean(axis=(1, 2))


def gap_backward(x, grad_out):
    B, H, W, C = x.shape
    if grad_out.shape != (B, C):
        raise ShapeError(f"grad_out shape {grad_out.shape} != {(B, C)}")
    scale = np.asarray(1.0 / (H * W), dtype=x.dtype)
    return np.broadcast_to(grad_out[:, None, None, :] * scale, x.shape).copy()


def fc_forward(x, weights, bias):
    """Affine map: (B, in) @ [in, out] + [out]."""
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError(
            f"input width {x.shape[-1]} (shape {x.shape}) does not match "
            f"weight shape {weights.shape}")
    return x @ weights.astype(x.dtype, copy=False) + bias.astype(x.dtype, copy=False)


def fc_backward(x, weights, grad_out):
    """Returns (grad_input, grad_weights, grad_bias)."""
    if grad_out.shape != (x.shape[0], weights.shape[1]):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} != {(x.shape[0], weights.shape[1])}")
    w = weights.astype(x.dtype, copy=False)
    return grad_out @ w.T, x.T @ grad_out, grad_out.sum(axis=0)


def softmax_cross_entropy(logits, target):
    """Stabilized -log softmax(logits)[target] with its logit gradient.

    1-D logits with an integer target give (scalar loss, grad vector);
    2-D (B, classes) logits with an index array give per-example losses
    and gradients, unreduced.
    """
    logits = np.asarray(logits)
    if not np.all(np.isfinite(logits)):
        raise NumericError("logits contain non-finite values")
    squeeze = logits.ndim == 1
    z = np.atleast_2d(logits)
    if z.shape[1] < 2:
        raise ShapeError(f"need at least 2 classes, got logits shape {logits.shape}")
    t = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if np.any(t < 0) or np.any(t >= z.shape[1]):
        raise ShapeError(f"target {target} out of range for {z.shape[1]} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    rows = np.arange(z.shape[0])
    loss = -logp[rows, t]
    grad = np.exp(logp)
    grad[rows, t] -= 1
    grad = grad.astype(logits.dtype, copy=False)
    if squeeze:
        return float(loss[0]), grad[0]
    return loss, grad
