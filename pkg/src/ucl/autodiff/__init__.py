"""Dense arrays with reverse-mode automatic differentiation."""

from .gradcheck import grad_check
from .nn import (
    BatchNormState,
    batch_norm2d,
    conv2d,
    conv_output_size,
    depthwise_conv2d,
    depthwise_separable_conv2d,
    global_avg_pool2d,
    max_pool2d,
)
from .ops import (
    DomainError,
    add,
    clamp_min,
    cross_entropy,
    div,
    exp,
    l2_norm,
    leaky_relu,
    linear,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    power,
    relu,
    reshape,
    softmax,
    sqrt,
    sub,
    transpose,
)
from .ops import sum as reduce_sum
from .tensor import (
    BackwardError,
    ComputationRecord,
    Tensor,
    as_tensor,
    backward,
    default_dtype,
    grad_enabled,
    no_grad,
    precision,
    set_default_dtype,
)

__all__ = [
    "BackwardError", "BatchNormState", "ComputationRecord", "DomainError", "Tensor",
    "add", "as_tensor", "backward", "batch_norm2d", "clamp_min", "conv2d", "conv_output_size",
    "cross_entropy", "default_dtype", "depthwise_conv2d", "depthwise_separable_conv2d", "div",
    "exp", "global_avg_pool2d", "grad_check", "grad_enabled", "l2_norm", "leaky_relu", "linear",
    "log", "log_softmax", "matmul", "max_pool2d", "mean", "mul", "neg", "no_grad", "power",
    "precision", "reduce_sum", "relu", "reshape", "set_default_dtype", "softmax", "sqrt", "sub",
    "transpose",
]
