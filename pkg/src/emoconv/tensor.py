"""Dense float64 tensors with reverse-mode automatic differentiation.

Graphs are built define-by-run: every operation returns a new ``Tensor``
holding the numeric result, references to its inputs, and a closure that maps
the output gradient to input gradients.  ``backward`` walks the recorded
graph once, in reverse topological order, and accumulates gradients into the
``grad`` field of every leaf that has ``requires_grad`` set.

All arithmetic is 64-bit.  Broadcasting is restricted to scalar-vs-tensor;
binary operations otherwise require exact shape agreement, which keeps every
backward rule a direct transcription of its forward definition.

Thread safety: a graph and its tensors belong to one thread between
construction and ``backward``.  Distinct graphs may run on distinct threads;
leaf values may be read concurrently as long as no update is in flight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class Tensor:
    """Shape + float64 values + gradient slot + record of the producing op."""

    __slots__ = ("values", "grad", "requires_grad", "op", "parents", "backward_fn")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op: str | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op!r})"

    # Arithmetic sugar; every dunder routes through the recorded ops below.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def tensor_new(shape: Sequence[int], values, requires_grad: bool = False) -> Tensor:
    """Build a leaf tensor from an explicit shape and row-major values."""
    shape = tuple(int(d) for d in shape)
    if any(d < 1 for d in shape):
        raise ValueError(f"all dimensions must be >= 1, got shape {shape}")
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    want = math.prod(shape)
    if flat.size != want:
        raise ValueError(f"values length {flat.size} != shape product {want} for shape {shape}")
    return Tensor(flat.reshape(shape).copy(), requires_grad=requires_grad)


def constant(values) -> Tensor:
    """Leaf tensor that never receives gradient (inputs, masks, targets)."""
    return Tensor(values, requires_grad=False)


def from_op(values: np.ndarray, op: str, parents: tuple[Tensor, ...],
            backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    """Register an operation result in the graph.

    ``backward_fn`` receives the gradient of the output and returns one
    gradient array (or None) per parent, in parent order.  Returned arrays
    must not be mutated afterwards; accumulation here is purely functional.
    """
    out = Tensor(values)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out.parents = parents
        out.backward_fn = backward_fn
    else:
        out.op = op
    return out


def backward(loss: Tensor) -> None:
    """Populate the grad of every requires_grad leaf reachable from ``loss``.

    Leaves that do not appear in the graph keep ``grad=None``; read them with
    ``grad_of``, which treats None as zero.  Repeated calls accumulate until
    ``reset_grads`` is invoked.
    """
    if loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    buffers: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = buffers.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.values)
                node.grad += g
            continue
        parent_grads = node.backward_fn(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            held = buffers.get(id(parent))
            buffers[id(parent)] = pg if held is None else held + pg


def _topo_order(root: Tensor) -> list[Tensor]:
    """Post-order over parent edges: leaves first, root last. Structural,
    hence bit-for-bit reproducible across identical graphs."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def reset_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def grad_of(t: Tensor) -> np.ndarray:
    """Gradient of a leaf after backward; zeros if the leaf was unreachable."""
    if t.grad is None:
        return np.zeros_like(t.values)
    return t.grad


# ---------------------------------------------------------------------------
# Matrix products


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ValueError(f"matmul needs 2-d operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    av, bv = a.values, b.values

    def backward_fn(g):
        return g @ bv.T, av.T @ g

    return from_op(av @ bv, "matmul", (a, b), backward_fn)


def matvec(w: Tensor, x: Tensor) -> Tensor:
    """w [m x k] times x [k] -> [m]."""
    if w.values.ndim != 2 or x.values.ndim != 1:
        raise ValueError(f"matvec needs a matrix and a vector, got {w.shape} and {x.shape}")
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"matvec dimensions differ: {w.shape} vs {x.shape}")
    wv, xv = w.values, x.values

    def backward_fn(g):
        return np.outer(g, xv), wv.T @ g

    return from_op(wv @ xv, "matvec", (w, x), backward_fn)


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise ValueError(f"transpose needs a 2-d tensor, got shape {a.shape}")

    def backward_fn(g):
        return (g.T,)

    return from_op(a.values.T, "transpose", (a,), backward_fn)


# ---------------------------------------------------------------------------
# Elementwise operations


def _as_operand(other):
    if isinstance(other, Tensor):
        return other
    if isinstance(other, (int, float, np.floating, np.integer)):
        return float(other)
    raise TypeError(f"unsupported operand type {type(other).__name__}")


def _binary(op: str, a: Tensor, b, fwd, grad_a, grad_b) -> Tensor:
    b = _as_operand(b)
    if not isinstance(b, Tensor):
        av = a.values
        out = fwd(av, b)

        def backward_scalar(g):
            return (grad_a(g, av, b),)

        return from_op(out, op, (a,), backward_scalar)

    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} are not "
                         "exact-match or scalar-broadcast compatible")
    av, bv = a.values, b.values

    def backward_fn(g):
        return (_unbroadcast(grad_a(g, av, bv), av.shape),
                _unbroadcast(grad_b(g, av, bv), bv.shape))

    return from_op(fwd(av, bv), op, (a, b), backward_fn)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=np.float64).reshape(shape)


def add(a: Tensor, b) -> Tensor:
    return _binary("add", a, b,
                   lambda x, y: x + y,
                   lambda g, x, y: g,
                   lambda g, x, y: g)


def sub(a: Tensor, b) -> Tensor:
    return _binary("sub", a, b,
                   lambda x, y: x - y,
                   lambda g, x, y: g,
                   lambda g, x, y: -g)


def mul(a: Tensor, b) -> Tensor:
    return _binary("mul", a, b,
                   lambda x, y: x * y,
                   lambda g, x, y: g * y,
                   lambda g, x, y: g * x)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def backward_fn(g):
        return (g * s,)

    return from_op(a.values * s, "scale", (a,), backward_fn)


def _sigmoid_values(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid_values(a.values)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return from_op(out, "sigmoid", (a,), backward_fn)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def backward_fn(g):
        return (g * (1.0 - out * out),)

    return from_op(out, "tanh", (a,), backward_fn)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)

    def backward_fn(g):
        return (g * out,)

    return from_op(out, "exp", (a,), backward_fn)


def log(a: Tensor) -> Tensor:
    v = a.values
    bad = np.flatnonzero(v.reshape(-1) <= 0.0)
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"log of non-positive value {v.reshape(-1)[i]} at flat index {i}")

    def backward_fn(g):
        return (g / v,)

    return from_op(np.log(v), "log", (a,), backward_fn)


def relu(a: Tensor) -> Tensor:
    v = a.values

    def backward_fn(g):
        return (g * (v > 0.0),)

    return from_op(np.maximum(v, 0.0), "relu", (a,), backward_fn)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    v = a.values
    floor = float(floor)

    def backward_fn(g):
        return (g * (v > floor),)

    return from_op(np.maximum(v, floor), "clamp_min", (a,), backward_fn)


_ELEMENTWISE_BINARY = {"add": add, "sub": sub, "mul": mul, "scale": scale}
_ELEMENTWISE_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "exp": exp, "log": log}


def elementwise(kind: str, a: Tensor, b=None) -> Tensor:
    """Dispatch by kind: add, sub, mul, scale take a second operand;
    sigmoid, tanh, exp, log are unary."""
    if kind in _ELEMENTWISE_BINARY:
        if b is None:
            raise ValueError(f"elementwise {kind!r} needs a second operand")
        return _ELEMENTWISE_BINARY[kind](a, b)
    if kind in _ELEMENTWISE_UNARY:
        if b is not None:
            raise ValueError(f"elementwise {kind!r} is unary")
        return _ELEMENTWISE_UNARY[kind](a)
    raise ValueError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# Shape manipulation


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(d) for d in shape)
    if math.prod(shape) != a.size:
        raise ValueError(f"cannot reshape {a.shape} ({a.size} values) to {shape}")
    old = a.shape

    def backward_fn(g):
        return (g.reshape(old),)

    return from_op(a.values.reshape(shape), "reshape", (a,), backward_fn)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ValueError("concat needs at least one part")
    ndim = parts[0].values.ndim
    if not 0 <= axis < ndim:
        raise ValueError(f"concat axis {axis} out of range for {ndim}-d tensors")
    for p in parts[1:]:
        if p.values.ndim != ndim:
            raise ValueError(f"concat rank mismatch: {parts[0].shape} vs {p.shape}")
        for ax in range(ndim):
            if ax != axis and p.shape[ax] != parts[0].shape[ax]:
                raise ValueError(f"concat shape mismatch on axis {ax}: "
                                 f"{parts[0].shape} vs {p.shape}")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        slicer = [slice(None)] * ndim
        grads = []
        for i in range(len(sizes)):
            slicer[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    out = np.concatenate([p.values for p in parts], axis=axis)
    return from_op(out, "concat", tuple(parts), backward_fn)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries along ``axis``."""
    ndim = a.values.ndim
    if not 0 <= axis < ndim:
        raise ValueError(f"narrow axis {axis} out of range for shape {a.shape}")
    if start < 0 or length < 1 or start + length > a.shape[axis]:
        raise ValueError(f"narrow [{start}:{start + length}] out of range "
                         f"for axis {axis} of shape {a.shape}")
    slicer = [slice(None)] * ndim
    slicer[axis] = slice(start, start + length)
    slicer = tuple(slicer)
    full_shape = a.shape

    def backward_fn(g):
        z = np.zeros(full_shape)
        z[slicer] = g
        return (z,)

    return from_op(a.values[slicer], "narrow", (a,), backward_fn)


def take_row(a: Tensor, index: int) -> Tensor:
    """Row ``index`` of a matrix as a vector."""
    if a.values.ndim != 2:
        raise ValueError(f"take_row needs a 2-d tensor, got shape {a.shape}")
    if not 0 <= index < a.shape[0]:
        raise ValueError(f"row {index} out of range for shape {a.shape}")
    full_shape = a.shape

    def backward_fn(g):
        z = np.zeros(full_shape)
        z[index] = g
        return (z,)

    return from_op(a.values[index], "take_row", (a,), backward_fn)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors into a matrix, one tensor per row."""
    if not rows:
        raise ValueError("stack_rows needs at least one row")
    width = rows[0].shape
    for r in rows:
        if r.values.ndim != 1 or r.shape != width:
            raise ValueError(f"stack_rows needs equal-length vectors, got {width} and {r.shape}")

    def backward_fn(g):
        return tuple(g[i] for i in range(len(rows)))

    out = np.stack([r.values for r in rows])
    return from_op(out, "stack_rows", tuple(rows), backward_fn)


def take_per_row(a: Tensor, columns) -> Tensor:
    """Pick one entry per row: out[i] = a[i, columns[i]]."""
    if a.values.ndim != 2:
        raise ValueError(f"take_per_row needs a 2-d tensor, got shape {a.shape}")
    cols = np.asarray(columns, dtype=np.int64)
    n, c = a.shape
    if cols.shape != (n,):
        raise ValueError(f"need one column index per row: {cols.shape} vs {n} rows")
    if cols.min(initial=0) < 0 or cols.max(initial=0) >= c:
        raise ValueError(f"column index out of range [0, {c}) in {cols.tolist()}")
    rows = np.arange(n)
    full_shape = a.shape

    def backward_fn(g):
        z = np.zeros(full_shape)
        z[rows, cols] = g
        return (z,)

    return from_op(a.values[rows, cols], "take_per_row", (a,), backward_fn)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape

    def backward_fn(g):
        return (np.broadcast_to(g, shape),)

    return from_op(np.asarray(a.values.sum()), "sum_all", (a,), backward_fn)


def linear_rows(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map of each row: out = x @ w.T + b, with b added to every row.

    x is [n x k], w is [m x k], b is [m]; the result is [n x m].  This is the
    one place a vector broadcasts over rows, so the bias rule (sum over rows)
    stays next to the op that needs it.
    """
    if x.values.ndim != 2 or w.values.ndim != 2 or b.values.ndim != 1:
        raise ValueError(f"linear_rows needs (matrix, matrix, vector), got "
                         f"{x.shape}, {w.shape}, {b.shape}")
    if x.shape[1] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise ValueError(f"linear_rows dimensions differ: x {x.shape}, w {w.shape}, b {b.shape}")
    xv, wv = x.values, w.values

    def backward_fn(g):
        return g @ wv, g.T @ xv, g.sum(axis=0)

    return from_op(xv @ wv.T + b.values, "linear_rows", (x, w, b), backward_fn)


# ---------------------------------------------------------------------------
# Sequence reductions


def max_over_time(seq: Tensor, valid_length: int) -> Tensor:
    """Columnwise max over the first ``valid_length`` rows.

    Gradient flows only to the argmax row of each column; the first
    occurrence wins on ties.
    """
    if seq.values.ndim != 2:
        raise ValueError(f"max_over_time needs a 2-d tensor, got shape {seq.shape}")
    n, d = seq.shape
    if not 1 <= valid_length <= n:
        raise ValueError(f"valid_length {valid_length} out of range [1, {n}]")
    window = seq.values[:valid_length]
    argmax = np.argmax(window, axis=0)
    cols = np.arange(d)
    full_shape = seq.shape

    def backward_fn(g):
        z = np.zeros(full_shape)
        z[argmax, cols] = g
        return (z,)

    return from_op(window[argmax, cols], "max_over_time", (seq,), backward_fn)


def softmax_rows(logits: Tensor) -> Tensor:
    """Row softmax with per-row max subtraction for stability."""
    if logits.values.ndim != 2:
        raise ValueError(f"softmax_rows needs a 2-d tensor, got shape {logits.shape}")
    v = logits.values
    if not np.isfinite(v).all():
        raise ValueError("softmax_rows requires finite inputs")
    shifted = v - v.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward_fn(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return from_op(out, "softmax_rows", (logits,), backward_fn)


# ---------------------------------------------------------------------------
# Gradient inspection


@dataclass
class GradReport:
    max_abs_grad: float
    global_l2_norm: float
    per_parameter_norms: dict[str, float]


def grad_report(named_params: dict[str, Tensor]) -> GradReport:
    """L2 norms of current gradients; absent gradients count as zero."""
    per: dict[str, float] = {}
    sq_total = 0.0
    max_abs = 0.0
    for name, p in named_params.items():
        g = grad_of(p)
        sq = float((g * g).sum())
        per[name] = math.sqrt(sq)
        sq_total += sq
        if g.size:
            max_abs = max(max_abs, float(np.abs(g).max()))
    return GradReport(max_abs_grad=max_abs,
                      global_l2_norm=math.sqrt(sq_total),
                      per_parameter_norms=per)


def finite_diff_check(f: Callable[[list[Tensor]], Tensor],
                      params: list[Tensor], eps: float) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be deterministic (no live dropout); two baseline evaluations
    are compared to detect otherwise.  The relative error for a coordinate is
    |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    base1 = f(params).item()
    base2 = f(params).item()
    if base1 != base2:
        raise ValueError("f is not deterministic: two baseline evaluations differ "
                         f"({base1!r} vs {base2!r})")
    loss = f(params)
    reset_grads(params)
    backward(loss)
    analytic = [grad_of(p).copy() for p in params]

    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.values.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f(params).item()
            flat[i] = orig - eps
            f_minus = f(params).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = an_flat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
