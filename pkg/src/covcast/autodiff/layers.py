"""Network layers: 3-d convolution kernel, LSTM cells, BiLSTM stacks, and multi-head attention.

Weights are initialized uniformly in +-1/sqrt(fan_in); biases start at
zero. The attention projections carry no bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor,
    concat,
    conv3d_same as _conv3d_op,
    matmul,
    mul,
    reshape,
    sigmoid,
    softmax,
    stack,
    tanh,
    transpose,
)

__all__ = [
    "ConvKernel3d",
    "LstmCellParams",
    "BiLstmLayerParams",
    "MhaParams",
    "uniform_init",
    "init_conv_kernel",
    "init_lstm_cell",
    "init_bilstm_stack",
    "init_mha",
    "conv3d",
    "lstm_cell",
    "bilstm_stack",
    "multi_head_attention",
]


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    scale = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


@dataclass
class ConvKernel3d:
    """Cubic single-channel convolution kernel with a scalar bias."""

    weights: Tensor  # (ks, ks, ks)
    bias: Tensor  # ()

    def __post_init__(self):
        ks = self.weights.shape[0]
        if self.weights.shape != (ks, ks, ks):
            raise ValueError(f"kernel must be cubic, got {self.weights.shape}")
        if ks % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {ks}")

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[0]


def init_conv_kernel(rng: np.random.Generator, kernel_size: int) -> ConvKernel3d:
    if kernel_size % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {kernel_size}")
    weights = uniform_init(rng, (kernel_size,) * 3, kernel_size**3)
    return ConvKernel3d(weights=weights, bias=Tensor(np.zeros(()), requires_grad=True))


def conv3d(x: Tensor, kernel: ConvKernel3d) -> Tensor:
    """Same-padding stride-one convolution; output shape equals input shape."""
    return _conv3d_op(x, kernel.weights, kernel.bias)


@dataclass
class LstmCellParams:
    """Gate weights over the concatenated [previous hidden, input] vector."""

    w_f: Tensor
    w_i: Tensor
    w_o: Tensor
    w_c: Tensor
    b_f: Tensor
    b_i: Tensor
    b_o: Tensor
    b_c: Tensor

    @property
    def hidden(self) -> int:
        return self.w_f.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_f.shape[0] - self.hidden


def init_lstm_cell(rng: np.random.Generator, input_size: int, hidden: int) -> LstmCellParams:
    fan_in = hidden + input_size
    weights = {k: uniform_init(rng, (fan_in, hidden), fan_in) for k in ("w_f", "w_i", "w_o", "w_c")}
    biases = {k: Tensor(np.zeros(hidden), requires_grad=True) for k in ("b_f", "b_i", "b_o", "b_c")}
    return LstmCellParams(**weights, **biases)


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmCellParams):
    """One LSTM step: sigmoid forget/input/output gates, tanh candidate.

    The forget gate scales the carried cell state, the input gate admits
    the candidate, and the output gate modulates tanh of the new cell
    state. Returns (hidden, cell).
    """
    if x.shape[-1] != params.input_size or h_prev.shape[-1] != params.hidden:
        raise ValueError(
            f"shape mismatch: x has {x.shape[-1]} features, cell expects {params.input_size}"
        )
    zcat = concat([h_prev, x], axis=-1)
    f = sigmoid(matmul(zcat, params.w_f) + params.b_f)
    i = sigmoid(matmul(zcat, params.w_i) + params.b_i)
    o = sigmoid(matmul(zcat, params.w_o) + params.b_o)
    c_tilde = tanh(matmul(zcat, params.w_c) + params.b_c)
    c = mul(f, c_prev) + mul(i, c_tilde)
    h = mul(o, tanh(c))
    return h, c


@dataclass
class BiLstmLayerParams:
    forward: LstmCellParams
    backward: LstmCellParams


def init_bilstm_stack(
    rng: np.random.Generator, input_size: int, hidden: int, layers: int
) -> list[BiLstmLayerParams]:
    if layers < 1:
        raise ValueError(f"need at least one layer, got {layers}")
    stack_params = []
    size = input_size
    for _ in range(layers):
        stack_params.append(
            BiLstmLayerParams(
                forward=init_lstm_cell(rng, size, hidden),
                backward=init_lstm_cell(rng, size, hidden),
            )
        )
        size = 2 * hidden  # each layer emits concatenated directions
    return stack_params


def _run_direction(x: Tensor, params: LstmCellParams, reverse: bool) -> list[Tensor]:
    batch, length = x.shape[0], x.shape[1]
    h = Tensor(np.zeros((batch, params.hidden)))
    c = Tensor(np.zeros((batch, params.hidden)))
    steps = range(length - 1, -1, -1) if reverse else range(length)
    outputs: list[Tensor | None] = [None] * length
    for t in steps:
        h, c = lstm_cell(x[:, t, :], h, c, params)
        outputs[t] = h
    return outputs  # type: ignore[return-value]


def bilstm_stack(x: Tensor, layers: list[BiLstmLayerParams]) -> Tensor:
    """Stacked bidirectional LSTM over a (batch, length, features) sequence.

    Each layer runs an ordinary forward pass and an independent pass over
    the reversed sequence; the two hidden states are concatenated per time
    step and the result feeds the next layer. All time steps of the last
    layer are returned, shape (batch, length, 2 * hidden).
    """
    out = x
    for layer in layers:
        fwd = _run_direction(out, layer.forward, reverse=False)
        bwd = _run_direction(out, layer.backward, reverse=True)
        steps = [concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]
        out = stack(steps, axis=1)
    return out


@dataclass
class MhaParams:
    """Bias-free query/key/value/output projections and the head count."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_c: Tensor
    heads: int

    def __post_init__(self):
        dim = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v", "w_c"):
            if getattr(self, name).shape != (dim, dim):
                raise ValueError(f"{name} must be square of size {dim}")
        if dim % self.heads != 0:
            raise ValueError(f"head count {self.heads} must divide model width {dim}")


def init_mha(rng: np.random.Generator, width: int, heads: int) -> MhaParams:
    if width % heads != 0:
        raise ValueError(f"head count {heads} must divide model width {width}")
    ws = {k: uniform_init(rng, (width, width), width) for k in ("w_q", "w_k", "w_v", "w_c")}
    return MhaParams(heads=heads, **ws)


def multi_head_attention(h: Tensor, params: MhaParams) -> Tensor:
    """Scaled dot-product self-attention on feature slices, then re-projection.

    Queries, keys, and values are linear maps of the input; each of the
    ``heads`` feature slices attends independently with softmax(QK'/sqrt(d_k))V
    and the concatenated heads are mixed by the output projection.
    """
    batch, length, width = h.shape
    heads = params.heads
    d_k = width // heads

    def split_heads(t: Tensor) -> Tensor:
        return transpose(reshape(t, (batch, length, heads, d_k)), (0, 2, 1, 3))

    q = split_heads(matmul(h, params.w_q))
    k = split_heads(matmul(h, params.w_k))
    v = split_heads(matmul(h, params.w_v))
    scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d_k))
    weights = softmax(scores, axis=-1)
    context = matmul(weights, v)  # (batch, heads, length, d_k)
    merged = reshape(transpose(context, (0, 2, 1, 3)), (batch, length, width))
    return matmul(merged, params.w_c)
