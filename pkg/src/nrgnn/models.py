"""GCN and GIN forward passes on (possibly densified) graphs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .graph import Graph, WeightedGraph, aggregation_matrix, normalize_adjacency


@dataclass(frozen=True)
class GnnConfig:
    kind: str = "GCN"
    layer_dims: tuple[int, ...] = (16, 16, 2)
    gin_epsilon: float = 0.0
    gin_mlp_hidden: int = 16

    def __post_init__(self):
        if self.kind not in ("GCN", "GIN"):
            raise ValueError(f"unknown GNN kind {self.kind!r}")
        if len(self.layer_dims) < 2:
            raise ValueError("layer_dims needs an input and an output size")


def _as_weighted(g) -> WeightedGraph:
    return WeightedGraph(g) if isinstance(g, Graph) else g


def gcn_forward(g, x, weights: Sequence[T.Tensor], adj: T.SparseMatrix | None = None) -> T.Tensor:
    """Stack of ``H' = relu(A_hat H W)`` layers, raw logits from the last one.

    ``g`` is a :class:`Graph` or :class:`WeightedGraph`; pass ``adj`` to reuse
    a precomputed normalised adjacency.
    """
    x = T.as_tensor(x)
    if x.shape[1] != weights[0].shape[0]:
        raise T.ShapeError(f"gcn: features of width {x.shape[1]} for a first layer expecting {weights[0].shape[0]}")
    if adj is None:
        adj = normalize_adjacency(_as_weighted(g))
    h = x
    for k, w in enumerate(weights):
        h = T.spmm(adj, T.matmul(h, w))
        if k < len(weights) - 1:
            h = T.relu(h)
    return h


def gin_forward(
    g,
    x,
    layers: Sequence[Sequence[T.Tensor]],
    epsilon: float = 0.0,
    agg: T.SparseMatrix | None = None,
) -> T.Tensor:
    """Sum-aggregation GIN: ``h_v <- MLP((1+eps) h_v + sum_u w_uv h_u)``.

    Each entry of ``layers`` is ``(W1, b1, W2, b2)`` for a two-layer MLP.
    """
    x = T.as_tensor(x)
    if x.shape[1] != layers[0][0].shape[0]:
        raise T.ShapeError(f"gin: features of width {x.shape[1]} for a first layer expecting {layers[0][0].shape[0]}")
    if agg is None:
        agg = aggregation_matrix(_as_weighted(g))
    h = x
    for k, (w1, b1, w2, b2) in enumerate(layers):
        pooled = T.add(T.scale(h, 1.0 + epsilon), T.spmm(agg, h))
        h = T.add(T.matmul(T.relu(T.add(T.matmul(pooled, w1), b1)), w2), b2)
        if k < len(layers) - 1:
            h = T.relu(h)
    return h


class GNN:
    """Parameter container with a forward method for either backbone."""

    def __init__(self, config: GnnConfig, rng: np.random.Generator, name: str = "gnn"):
        self.config = config
        self.name = name
        dims = config.layer_dims
        if config.kind == "GCN":
            self.weights = [T.glorot(rng, dims[k], dims[k + 1], name=f"{name}.W{k}") for k in range(len(dims) - 1)]
            self.layers = None
        else:
            hid = config.gin_mlp_hidden
            self.weights = None
            self.layers = []
            for k in range(len(dims) - 1):
                self.layers.append((
                    T.glorot(rng, dims[k], hid, name=f"{name}.L{k}.W1"),
                    T.parameter(np.zeros((1, hid)), name=f"{name}.L{k}.b1"),
                    T.glorot(rng, hid, dims[k + 1], name=f"{name}.L{k}.W2"),
                    T.parameter(np.zeros((1, dims[k + 1])), name=f"{name}.L{k}.b2"),
                ))

    def parameters(self) -> list[T.Tensor]:
        if self.weights is not None:
            return list(self.weights)
        return [p for layer in self.layers for p in layer]

    def forward(self, g, x, adj: T.SparseMatrix | None = None) -> T.Tensor:
        if self.config.kind == "GCN":
            return gcn_forward(g, x, self.weights, adj=adj)
        return gin_forward(g, x, self.layers, self.config.gin_epsilon)

    __call__ = forward

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            p.value[...] = state[p.name]
