"""Central finite-difference checks for the tape and the full joint loss."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. ``x`` (modified in place, then restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        hi = f()
        x[idx] = old - eps
        lo = f()
        x[idx] = old
        g[idx] = (hi - lo) / (2.0 * eps)
    return g


def check(build: Callable[[Sequence[T.Tensor]], T.Tensor], inputs: Sequence[np.ndarray], eps: float = 1e-6) -> float:
    """Worst relative error between tape gradients and finite differences.

    ``build`` maps leaf tensors to a scalar tensor; each array in ``inputs``
    becomes a leaf that requires grad.
    """
    leaves = [T.parameter(np.array(x, dtype=np.float64)) for x in inputs]
    out = build(leaves)
    out.backward()
    worst = 0.0
    for leaf in leaves:
        num = numeric_grad(lambda: build(leaves).item(), leaf.value, eps)
        ana = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        worst = max(worst, relative_error(ana, num))
    return worst


def _away_from_zero(rng, shape, margin=0.1):
    # keep relu inputs off the kink so differences stay one-sided-free
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def op_cases(seed: int = 0) -> list[tuple[str, Callable, list[np.ndarray]]]:
    """Named (builder, inputs) pairs covering every differentiable op."""
    rng = np.random.default_rng(seed)
    n = 4
    rows = np.array([0, 0, 1, 2, 3, 3])
    cols = np.array([0, 1, 2, 3, 0, 3])
    w = rng.uniform(0.2, 1.0, size=rows.size)
    targets = rng.integers(0, 3, size=5)
    mask = np.array([True, False, True, True, True])
    idx = np.array([2, 0, 2, 3])
    seg = np.array([0, 2, 2, 1, 0])
    coef = rng.normal(size=(3, 3))

    def sp_build(t):
        adj = T.SparseMatrix(rows, cols, t[0], (n, n))
        return T.sum(T.square(T.spmm(adj, t[1])))

    cases = [
        ("add", lambda t: T.sum(T.square(T.add(t[0], t[1]))), [rng.normal(size=(3, 2)), rng.normal(size=(1, 2))]),
        ("sub", lambda t: T.sum(T.square(T.sub(t[0], t[1]))), [rng.normal(size=(3, 2)), rng.normal(size=(3, 1))]),
        ("mul", lambda t: T.sum(T.mul(t[0], t[1])), [rng.normal(size=(3, 2)), rng.normal(size=(3, 2))]),
        ("scale", lambda t: T.sum(T.square(T.scale(t[0], -1.7))), [rng.normal(size=(2, 3))]),
        ("power", lambda t: T.sum(T.power(t[0], -0.5)), [rng.uniform(0.5, 2.0, size=(4,))]),
        ("square", lambda t: T.sum(T.square(t[0])), [rng.normal(size=(3,))]),
        ("relu", lambda t: T.sum(T.square(T.relu(t[0]))), [_away_from_zero(rng, (3, 3))]),
        ("sigmoid", lambda t: T.sum(T.sigmoid(t[0])), [rng.normal(size=(3, 2)) * 3]),
        ("sum", lambda t: T.square(T.sum(t[0])), [rng.normal(size=(2, 2))]),
        ("mean", lambda t: T.square(T.mean(t[0])), [rng.normal(size=(2, 3))]),
        ("matmul", lambda t: T.sum(T.square(T.matmul(t[0], t[1]))), [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))]),
        ("spmm", sp_build, [w, rng.normal(size=(n, 3))]),
        ("take", lambda t: T.sum(T.square(T.take(t[0], idx))), [rng.normal(size=(4, 2))]),
        ("segment_sum", lambda t: T.sum(T.square(T.segment_sum(t[0], seg, 3))), [rng.normal(size=(5,))]),
        ("concat", lambda t: T.sum(T.square(T.concat([t[0], t[1]]))), [rng.normal(size=(2,)), rng.normal(size=(3,))]),
        ("rowwise_dot", lambda t: T.sum(T.square(T.rowwise_dot(t[0], t[1]))), [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]),
        ("pair_dot", lambda t: T.sum(T.square(T.pair_dot(t[0], idx, seg[:4]))), [rng.normal(size=(4, 3))]),
        ("row_softmax", lambda t: T.sum(T.square(T.row_softmax(t[0]))), [rng.normal(size=(3, 3))]),
        ("log_softmax", lambda t: T.sum(T.mul(T.log_softmax(t[0]), coef)), [rng.normal(size=(3, 3))]),
        ("cross_entropy", lambda t: T.cross_entropy(t[0], targets, mask), [rng.normal(size=(5, 3))]),
        ("chain", lambda t: T.sum(T.sigmoid(T.matmul(T.relu(t[0]), t[1]))), [_away_from_zero(rng, (3, 3)), rng.normal(size=(3, 2))]),
    ]
    return cases


def tiny_nrgnn_problem(seed: int = 0):
    """A 5-node, 2-class problem whose joint objective adds edges and mines pseudo labels."""
    from .densify import Thresholds
    from .graph import Graph, LabelSplit
    from .trainer import NRGNN, TrainConfig

    rng = np.random.default_rng(seed)
    edges = np.array([[0, 2], [1, 3], [2, 4], [3, 4]])
    x = rng.normal(size=(5, 3))
    g = Graph(5, edges, x, 2)
    y = np.array([0, 1, 0, 1, 0])
    train = np.array([True, True, False, False, False])
    val = np.array([False, False, True, False, False])
    test = np.array([False, False, False, True, True])
    noisy = np.where(train | val, y, -1)
    split = LabelSplit(y, noisy, train, val, test, 2)
    cfg = TrainConfig(K=2, thresholds=Thresholds(edge=0.1, confidence=0.55), weight_decay=0.0)
    model = NRGNN(g, split.observed(), cfg)
    for p in model.parameters():
        p.value *= 2.0  # push scores and confidences past the gates
    return model


def nrgnn_loss_check(seed: int = 0, eps: float = 1e-6) -> tuple[float, dict]:
    """Worst relative error of the joint loss gradient, and a summary of the forward pass."""
    model = tiny_nrgnn_problem(seed)
    params = model.parameters()

    def total():
        return model.objective(np.random.default_rng(seed + 1)).total

    for p in params:
        p.grad = None
    out = model.objective(np.random.default_rng(seed + 1))
    out.total.backward()
    worst = 0.0
    for p in params:
        num = numeric_grad(lambda: total().item(), p.value, eps)
        ana = p.grad if p.grad is not None else np.zeros_like(p.value)
        worst = max(worst, relative_error(ana, num))
    info = {"added_SL": out.S_L.num_added, "added_SA": out.S_A.num_added, "pseudo": len(out.pseudo), "loss": out.total.item()}
    return worst, info
