"""Dense-array layer primitives with explicit forward/backward pairs."""

from ._backend import backend_name
from .conv import (
    ConvLayerState,
    conv2d_backward,
    conv2d_forward,
    conv2d_forward_naive,
    conv_output_size,
    same_pad,
)
from .layers import (
    BatchNormState,
    batchnorm_backward,
    batchnorm_forward,
    fc_backward,
    fc_forward,
    gap,
    gap_backward,
    relu,
    relu_backward,
    softmax_cross_entropy,
)

__all__ = [
    "backend_name",
    "ConvLayerState",
    "conv2d_forward",
    "conv2d_backward",
    "conv2d_forward_naive",
    "conv_output_size",
    "same_pad",
    "BatchNormState",
    "batchnorm_forward",
    "batchnorm_backward",
    "relu",
    "relu_backward",
    "gap",
    "gap_backward",
    "fc_forward",
    "fc_backward",
    "softmax_cross_entropy",
]
