"""Minimal reverse-mode differentiation over dense numpy arrays.

Every op returns a new :class:`Tensor` holding a closure that pushes the
upstream gradient to its parents. ``Tensor.backward`` walks the graph in
reverse topological order. All values are float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        name: str | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable tensor."""
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.value.size != 1:
                raise RuntimeError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.value)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def _result(value, parents: Sequence[Tensor], backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(value)
    return Tensor(value, requires_grad=True, parents=tuple(parents), backward=backward)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.value + b.value, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(-_unbroadcast(g, b.shape))

    return _result(a.value - b.value, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.shape))

    return _result(a.value * b.value, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        a._accumulate(g * c)

    return _result(a.value * c, (a,), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.value**exponent

    def backward(g):
        a._accumulate(g * exponent * a.value ** (exponent - 1))

    return _result(out, (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(2.0 * g * a.value)

    return _result(a.value * a.value, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0

    def backward(g):
        a._accumulate(g * mask)

    return _result(np.where(mask, a.value, 0.0), (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = np.empty_like(a.value)
    pos = a.value >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.value[pos]))
    e = np.exp(a.value[~pos])
    out[~pos] = e / (1.0 + e)

    def backward(g):
        a._accumulate(g * out * (1.0 - out))

    return _result(out, (a,), backward)


# reductions

def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    def backward(g):
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result(a.value.sum(), (a,), backward)


def mean(a: Tensor) -> Tensor:
    n = a.value.size

    def backward(g):
        a._accumulate(np.broadcast_to(g / n, a.shape))

    return _result(a.value.mean(), (a,), backward)


# linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.value.T)
        if b.requires_grad:
            b._accumulate(a.value.T @ g)

    return _result(a.value @ b.value, (a, b), backward)


@dataclass
class SparseMatrix:
    """Coordinate-form square matrix whose entries may carry gradient."""

    rows: np.ndarray
    cols: np.ndarray
    values: Tensor
    shape: tuple[int, int]
    _csr: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    def csr(self) -> sp.csr_matrix:
        if self._csr is None:
            self._csr = sp.csr_matrix((self.values.value, (self.rows, self.cols)), shape=self.shape)
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.csr().toarray()


def spmm(adj: SparseMatrix, h) -> Tensor:
    """``adj @ h``; gradient reaches both ``h`` and ``adj.values``."""
    h = as_tensor(h)
    if h.value.ndim != 2 or adj.shape[1] != h.shape[0]:
        raise ShapeError(f"spmm: shapes {adj.shape} and {h.shape} are not aligned")
    a = adj.csr()
    vals = adj.values

    def backward(g):
        if h.requires_grad:
            h._accumulate(a.T @ g)
        if vals.requires_grad:
            n_out, n_in = adj.shape
            if n_out * n_in <= 9_000_000 and adj.rows.size > 4 * max(n_out, n_in):
                vals._accumulate((g @ h.value.T)[adj.rows, adj.cols])
            else:
                vals._accumulate(np.einsum("ij,ij->i", g[adj.rows], h.value[adj.cols]))

    return _result(a @ h.value, (h, vals), backward)


# indexing

def take(a: Tensor, index: np.ndarray) -> Tensor:
    """Gather along the first axis (rows of a matrix, entries of a vector)."""
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        a._accumulate(_scatter_add(index, g, a.shape[0]))

    return _result(a.value[index], (a,), backward)


def _scatter_add(index: np.ndarray, g: np.ndarray, n: int) -> np.ndarray:
    """``out[index[k]] += g[k]`` along the first axis."""
    if g.ndim == 1:
        return np.bincount(index, weights=g, minlength=n).astype(np.float64)
    flat = g.reshape(g.shape[0], -1)
    m = sp.csr_matrix((np.ones(index.size), (index, np.arange(index.size))), shape=(n, index.size))
    return np.asarray(m @ flat).reshape((n,) + g.shape[1:])


def segment_sum(a: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum entries of a 1-D tensor into ``num_segments`` buckets."""
    segments = np.asarray(segments, dtype=np.int64)
    out = np.bincount(segments, weights=a.value, minlength=num_segments).astype(np.float64)

    def backward(g):
        a._accumulate(g[segments])

    return _result(out, (a,), backward)


def concat(parts: Sequence[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[lo:hi])

    return _result(np.concatenate([p.value for p in parts], axis=0), parts, backward)


def rowwise_dot(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape or a.value.ndim != 2:
        raise ShapeError(f"rowwise_dot: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, None] * b.value)
        if b.requires_grad:
            b._accumulate(g[:, None] * a.value)

    return _result(np.einsum("ij,ij->i", a.value, b.value), (a, b), backward)


def pair_dot(z: Tensor, left: np.ndarray, right: np.ndarray) -> Tensor:
    """``z[left[k]] . z[right[k]]`` for every k, without materialising the gathers on the tape.

    The backward pass scatters through one sparse (n x n) matrix holding the
    upstream gradient at (left, right): ``dz = G z + G^T z``.
    """
    left = np.asarray(left, dtype=np.int64)
    right = np.asarray(right, dtype=np.int64)
    if z.value.ndim != 2:
        raise ShapeError(f"pair_dot: expected a matrix, got shape {z.shape}")
    n = z.shape[0]
    zv = z.value
    if not left.size:
        out = np.zeros(0)
    elif n <= 3000 and left.size > 4 * n:
        # many pairs on a small graph: one Gram matrix beats two large gathers
        out = (zv @ zv.T)[left, right]
    else:
        out = np.einsum("ij,ij->i", np.take(zv, left, axis=0), np.take(zv, right, axis=0))

    def backward(g):
        # coo products skip the sort a csr conversion would need
        m = sp.coo_matrix((g, (left, right)), shape=(n, n))
        z._accumulate(m @ z.value + m.T @ z.value)

    return _result(out, (z,), backward)


# softmax family

def _log_softmax_values(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def row_softmax(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(_log_softmax_values(a.value))

    def backward(g):
        a._accumulate(out * (g - (g * out).sum(axis=1, keepdims=True)))

    return _result(out, (a,), backward)


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    out = _log_softmax_values(a.value)
    prob = np.exp(out)

    def backward(g):
        a._accumulate(g - prob * g.sum(axis=1, keepdims=True))

    return _result(out, (a,), backward)


def cross_entropy(logits, targets, mask) -> Tensor:
    """Mean negative log-likelihood over the rows selected by ``mask``.

    ``mask`` may be a boolean vector or an index array; ``targets`` holds a
    class index for every row (entries outside the mask are ignored).
    """
    logits = as_tensor(logits)
    n, c = logits.shape
    rows = _mask_to_index(mask, n)
    if rows.size == 0:
        raise ValueError("cross_entropy: empty mask, loss is undefined")
    targets = np.asarray(targets, dtype=np.int64)
    t = targets[rows] if targets.shape[0] == n else targets
    if t.shape[0] != rows.shape[0]:
        raise ShapeError(f"cross_entropy: {t.shape[0]} targets for {rows.shape[0]} rows")
    if np.any(t < 0) or np.any(t >= c):
        raise ValueError(f"cross_entropy: targets outside [0, {c})")
    logp = _log_softmax_values(logits.value[rows])
    loss = -logp[np.arange(rows.size), t].mean()

    def backward(g):
        grad_rows = np.exp(logp)
        grad_rows[np.arange(rows.size), t] -= 1.0
        logits._accumulate(_scatter_add(rows, grad_rows * (g / rows.size), n))

    return _result(loss, (logits,), backward)


def _mask_to_index(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise ShapeError(f"mask of shape {mask.shape} for {n} rows")
        return np.flatnonzero(mask)
    return mask.astype(np.int64).ravel()


# initialisation, optimisation, checkpoints

def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, name: str | None = None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)), name=name)


@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kw) -> "OptimizerState":
        return cls(
            m=[np.zeros_like(p.value) for p in params],
            v=[np.zeros_like(p.value) for p in params],
            **kw,
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray | None],
    state: OptimizerState,
    weight_decay: float = 0.0,
) -> None:
    """In-place Adam update with bias correction.

    ``weight_decay`` adds the L2 term ``weight_decay * p`` to each gradient
    (coupled decay, as in the original GCN training recipe).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f"adam_step: {len(params)} params, {len(grads)} grads, {len(state.m)} moments")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.value)
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} != param shape {p.shape}")
        if weight_decay:
            g = g + weight_decay * p.value
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    """Convenience wrapper pairing a parameter list with its state."""

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3, weight_decay: float = 0.0, **kw):
        self.params = list(params)
        self.weight_decay = weight_decay
        self.state = OptimizerState.for_params(self.params, lr=lr, **kw)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.weight_decay)


def save_params(path: str | Path, params: dict[str, np.ndarray]) -> None:
    """Write a JSON shape manifest line followed by raw little-endian float64 data."""
    manifest = [{"name": k, "shape": list(np.shape(v))} for k, v in params.items()]
    header = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for v in params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    (hlen,) = struct.unpack("<Q", raw[:8])
    manifest = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    out: dict[str, np.ndarray] = {}
    offset = 8 + hlen
    for entry in manifest:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        chunk = raw[offset : offset + 8 * count]
        if len(chunk) != 8 * count:
            raise ValueError(f"checkpoint truncated while reading {entry['name']!r}")
        out[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        offset += 8 * count
    if offset != len(raw):
        raise ValueError("checkpoint has trailing bytes")
    return out
