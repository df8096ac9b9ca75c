"""Differentiable numerical core: tensors, primitives, Adam, gradcheck."""
from .gradcheck import DeterminismError, GradcheckReport, finite_diff_gradcheck
from .params import InvariantError, ParamStore, adam_step, kaiming_uniform
from .tensor import (
    NumericError,
    ShapeError,
    Tensor,
    add,
    affine,
    attention,
    as_tensor,
    broadcast_to,
    canonical_sum,
    clamp_min,
    concat,
    conv_padding,
    div,
    exp,
    get_dtype,
    index,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neighborhood3x3,
    pool_sites,
    precision,
    relu,
    reshape,
    set_precision,
    softmax,
    sqrt,
    sub,
    temporal_conv,
    tensor,
    transpose,
    weighted_sum,
)
from .tensor import sum as tsum
from . import kernels
