"""Neural building blocks: embedding lookup, LSTM/BiLSTM, 1-D convolution
over time, inverted dropout, and linear maps.

Everything here is expressed in terms of the ops in :mod:`emoconv.tensor`,
so each layer's backward pass comes for free and is covered by the same
finite-difference harness.

Initialization convention (used by every init_* helper): weight matrices are
uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases are zero except the
LSTM forget gate, which starts at 1 so memory cells default to remembering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

# LSTM gate block order within the stacked weight matrices.
GATE_ORDER = ("input", "forget", "cell", "output")


@dataclass
class EmbeddingMatrix:
    """Token-id rows of word vectors; row 0 is PAD and stays zero."""
    vocab_size: int
    dim: int
    table: T.Tensor
    frozen: bool = False

    @classmethod
    def from_array(cls, values, frozen: bool = False) -> "EmbeddingMatrix":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-d, got shape {arr.shape}")
        return cls(vocab_size=arr.shape[0], dim=arr.shape[1],
                   table=T.Tensor(arr, requires_grad=True), frozen=frozen)


@dataclass
class LstmDirection:
    """One scan direction: W [4h x input], U [4h x hidden], b [4h]."""
    w: T.Tensor
    u: T.Tensor
    b: T.Tensor
    hidden_size: int


@dataclass
class LstmLayerParams:
    input_size: int
    hidden_size: int
    fwd: LstmDirection
    bwd: LstmDirection

    def named(self, prefix: str) -> dict[str, T.Tensor]:
        out = {}
        for tag, d in (("fwd", self.fwd), ("bwd", self.bwd)):
            out[f"{prefix}.{tag}.w"] = d.w
            out[f"{prefix}.{tag}.u"] = d.u
            out[f"{prefix}.{tag}.b"] = d.b
        return out


@dataclass
class ConvFilterBank:
    """Per kernel size k: weights [filters x (k*dim)] and bias [filters]."""
    kernel_sizes: tuple[int, ...]
    filters_per_size: int
    dim: int
    weights: list[T.Tensor] = field(default_factory=list)
    biases: list[T.Tensor] = field(default_factory=list)

    @property
    def output_dim(self) -> int:
        return len(self.kernel_sizes) * self.filters_per_size


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return T.Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def init_lstm_direction(rng, input_size: int, hidden_size: int) -> LstmDirection:
    w = _uniform(rng, (4 * hidden_size, input_size), input_size)
    u = _uniform(rng, (4 * hidden_size, hidden_size), hidden_size)
    b = np.zeros(4 * hidden_size)
    b[hidden_size:2 * hidden_size] = 1.0  # forget gate
    return LstmDirection(w=w, u=u, b=T.Tensor(b, requires_grad=True),
                         hidden_size=hidden_size)


def init_lstm_params(rng, input_size: int, hidden_size: int) -> LstmLayerParams:
    if input_size < 1 or hidden_size < 1:
        raise ValueError(f"sizes must be >= 1, got input {input_size}, hidden {hidden_size}")
    return LstmLayerParams(input_size, hidden_size,
                           fwd=init_lstm_direction(rng, input_size, hidden_size),
                           bwd=init_lstm_direction(rng, input_size, hidden_size))


def init_linear(rng, out_size: int, in_size: int) -> tuple[T.Tensor, T.Tensor]:
    w = _uniform(rng, (out_size, in_size), in_size)
    b = T.Tensor(np.zeros(out_size), requires_grad=True)
    return w, b


def init_conv_bank(rng, dim: int, kernel_sizes=(1, 2, 3),
                   filters_per_size: int = 300) -> ConvFilterBank:
    bank = ConvFilterBank(tuple(kernel_sizes), filters_per_size, dim)
    for k in bank.kernel_sizes:
        bank.weights.append(_uniform(rng, (filters_per_size, k * dim), k * dim))
        bank.biases.append(T.Tensor(np.zeros(filters_per_size), requires_grad=True))
    return bank


def embedding_lookup(table: EmbeddingMatrix, ids) -> T.Tensor:
    """Rows of the embedding table as an [n x dim] tensor.

    When the table is frozen the result is a gradient-free constant, so the
    table receives exactly-zero gradients without any masking downstream.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError(f"ids must be a non-empty 1-d sequence, got shape {ids.shape}")
    for i in ids:
        if not 0 <= i < table.vocab_size:
            raise ValueError(f"token id {int(i)} out of range for vocabulary "
                             f"of size {table.vocab_size}")
    values = table.table.values[ids]
    if table.frozen or not table.table.requires_grad:
        return T.constant(values)
    shape = table.table.shape

    def backward_fn(g):
        z = np.zeros(shape)
        np.add.at(z, ids, g)
        return (z,)

    return T.from_op(values.copy(), "embedding_lookup", (table.table,), backward_fn)


def lstm_step(direction: LstmDirection, x_t: T.Tensor,
              h_prev: T.Tensor, c_prev: T.Tensor) -> tuple[T.Tensor, T.Tensor]:
    """One LSTM cell update.

    pre = W x + U h + b, split into the four gate blocks (input, forget,
    cell, output); c = f*c_prev + i*g; h = o*tanh(c).
    """
    h = direction.hidden_size
    if x_t.shape != (direction.w.shape[1],) or h_prev.shape != (h,) or c_prev.shape != (h,):
        raise ValueError(f"lstm_step shapes disagree: x {x_t.shape} vs W {direction.w.shape}, "
                         f"h {h_prev.shape}, c {c_prev.shape}, hidden {h}")
    pre = T.add(T.add(T.matvec(direction.w, x_t), T.matvec(direction.u, h_prev)),
                direction.b)
    i = T.sigmoid(T.narrow(pre, 0, 0, h))
    f = T.sigmoid(T.narrow(pre, 0, h, h))
    g = T.tanh(T.narrow(pre, 0, 2 * h, h))
    o = T.sigmoid(T.narrow(pre, 0, 3 * h, h))
    c = T.add(T.mul(f, c_prev), T.mul(i, g))
    h_out = T.mul(o, T.tanh(c))
    return h_out, c


def _scan(direction: LstmDirection, steps: list[T.Tensor]) -> list[T.Tensor]:
    h = T.constant(np.zeros(direction.hidden_size))
    c = T.constant(np.zeros(direction.hidden_size))
    out = []
    for x_t in steps:
        h, c = lstm_step(direction, x_t, h, c)
        out.append(h)
    return out


def bilstm_encode(layers: list[LstmLayerParams], seq: T.Tensor, valid_length: int,
                  dropout_rate: float, training: bool, rng) -> T.Tensor:
    """Stacked bidirectional encoding: [n x input] -> [n x 2*hidden].

    The forward direction scans positions 0..valid_length-1 left to right,
    the backward direction right to left, both from zero initial state; each
    position's output is the concatenation [h_f; h_b].  Layer k+1 consumes
    layer k's output, with dropout between layers and on the final output
    when training.  Rows at or beyond valid_length are zero.
    """
    if not layers:
        raise ValueError("bilstm_encode needs at least one layer")
    if seq.values.ndim != 2 or seq.shape[0] == 0:
        raise ValueError(f"bilstm_encode needs a non-empty [n x input] tensor, got {seq.shape}")
    n = seq.shape[0]
    if not 1 <= valid_length <= n:
        raise ValueError(f"valid_length {valid_length} out of range [1, {n}]")

    steps = [T.take_row(seq, t) for t in range(valid_length)]
    out = None
    for layer in layers:
        h_fwd = _scan(layer.fwd, steps)
        h_bwd = _scan(layer.bwd, steps[::-1])[::-1]
        merged = [T.concat([f, b], axis=0) for f, b in zip(h_fwd, h_bwd)]
        out = T.stack_rows(merged)
        out = dropout(out, dropout_rate, training, rng)
        steps = [T.take_row(out, t) for t in range(valid_length)]
    if valid_length < n:
        pad = T.constant(np.zeros((n - valid_length, out.shape[1])))
        out = T.concat([out, pad], axis=0)
    return out


def conv1d_over_time(bank: ConvFilterBank, seq: T.Tensor, valid_length: int) -> T.Tensor:
    """Multi-width convolution with global max pooling.

    For each kernel size k, every length-k window of valid positions goes
    through the affine filters and a rectifier, then the maximum over windows
    is kept, giving filters_per_size values per kernel size; the banks'
    outputs concatenate in kernel-size order.  Sequences shorter than k are
    zero-padded at the end to a single window.
    """
    if seq.values.ndim != 2 or seq.shape[1] != bank.dim:
        raise ValueError(f"sequence dim {seq.shape} does not match bank dim {bank.dim}")
    n = seq.shape[0]
    if not 1 <= valid_length <= n:
        raise ValueError(f"valid_length {valid_length} out of range [1, {n}]")
    pooled = []
    for k, w, b in zip(bank.kernel_sizes, bank.weights, bank.biases):
        if valid_length >= k:
            windows = [T.reshape(T.narrow(seq, 0, t, k), (k * bank.dim,))
                       for t in range(valid_length - k + 1)]
        else:
            pad = T.constant(np.zeros((k - valid_length, bank.dim)))
            short = T.concat([T.narrow(seq, 0, 0, valid_length), pad], axis=0)
            windows = [T.reshape(short, (k * bank.dim,))]
        activ = T.relu(T.linear_rows(T.stack_rows(windows), w, b))
        pooled.append(T.max_over_time(activ, len(windows)))
    return T.concat(pooled, axis=0)


def dropout(x: T.Tensor, rate: float, training: bool, rng) -> T.Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by
    1/(1-rate); identity when rate is 0 or not training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return T.mul(x, T.constant(mask))


def linear(weight: T.Tensor, bias: T.Tensor, x: T.Tensor) -> T.Tensor:
    if weight.values.ndim != 2 or x.values.ndim != 1 or bias.shape != (weight.shape[0],):
        raise ValueError(f"linear shapes disagree: W {weight.shape}, b {bias.shape}, x {x.shape}")
    return T.add(T.matvec(weight, x), bias)
