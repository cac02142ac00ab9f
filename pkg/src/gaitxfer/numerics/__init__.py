"""Minimal dense-tensor numerics with reverse-mode autodiff.

Covers exactly what the temporal 1-D CNN / MLP pipeline needs: stride-1
same-padded convolution, affine layers, ReLU/dropout, global average
pooling, channel concatenation, batch norm, MSE and softmax cross-entropy
losses, Adam/SGD, and a central-difference gradient checker.
"""

from gaitxfer.numerics.tensor import (
    Tensor,
    add,
    avg_pool_same,
    batchnorm1d,
    channel_concat,
    conv1d,
    dense_affine,
    dropout,
    global_avg_pool,
    loss,
    mse_loss,
    mul,
    pointwise,
    reduce_sum,
    relu,
    softmax,
    softmax_cross_entropy,
)
from gaitxfer.numerics.layers import (
    AvgPoolSame,
    BatchNorm1d,
    Conv1d,
    Dense,
    Dropout,
    ReLU,
    Stack,
)
from gaitxfer.numerics.optim import (
    OptimizerState,
    ParameterSet,
    collect_grads,
    make_optimizer_state,
    optimizer_step,
    zero_grads,
)
from gaitxfer.numerics.gradcheck import grad_check

__all__ = [
    "Tensor",
    "add",
    "avg_pool_same",
    "batchnorm1d",
    "channel_concat",
    "conv1d",
    "dense_affine",
    "dropout",
    "global_avg_pool",
    "loss",
    "mse_loss",
    "mul",
    "pointwise",
    "reduce_sum",
    "relu",
    "softmax",
    "softmax_cross_entropy",
    "AvgPoolSame",
    "BatchNorm1d",
    "Conv1d",
    "Dense",
    "Dropout",
    "ReLU",
    "Stack",
    "OptimizerState",
    "ParameterSet",
    "collect_grads",
    "make_optimizer_state",
    "optimizer_step",
    "zero_grads",
    "grad_check",
]
