"""Minimal dense-tensor library with reverse-mode automatic differentiation.

Only the operations the covariance forecasting network needs: elementwise
arithmetic, matmul, activations, softmax, reductions, shape ops, same-pad
3-d convolution, dropout, LSTM/BiLSTM cells, multi-head self-attention,
and Adam. Buffers are float64 throughout.
"""

from .tensor import (
    Tensor,
    add,
    backward,
    concat,
    conv3d_same,
    dropout,
    matmul,
    mean,
    mul,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    stack,
    tensor_sum,
    tanh,
    transpose,
)
from .layers import (
    BiLstmLayerParams,
    ConvKernel3d,
    LstmCellParams,
    MhaParams,
    bilstm_stack,
    conv3d,
    init_bilstm_stack,
    init_conv_kernel,
    init_lstm_cell,
    init_mha,
    lstm_cell,
    multi_head_attention,
    uniform_init,
)
from .optim import AdamState, adam_step, zero_grads
from .serialize import load_arrays, save_arrays

__all__ = [
    "Tensor",
    "add",
    "mul",
    "matmul",
    "sigmoid",
    "tanh",
    "sqrt",
    "softmax",
    "tensor_sum",
    "mean",
    "reshape",
    "transpose",
    "concat",
    "stack",
    "conv3d_same",
    "conv3d",
    "dropout",
    "backward",
    "ConvKernel3d",
    "LstmCellParams",
    "BiLstmLayerParams",
    "MhaParams",
    "lstm_cell",
    "bilstm_stack",
    "multi_head_attention",
    "uniform_init",
    "init_conv_kernel",
    "init_lstm_cell",
    "init_bilstm_stack",
    "init_mha",
    "AdamState",
    "adam_step",
    "zero_grads",
    "save_arrays",
    "load_arrays",
]
