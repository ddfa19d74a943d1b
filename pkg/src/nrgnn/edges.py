"""GCN edge predictor: embeddings, pair scores and the reconstruction loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .graph import Graph, edge_keys, normalize_adjacency
from .models import GNN, GnnConfig

log = logging.getLogger(__name__)


@dataclass
class EdgeScores:
    """Scores ``S_ij`` for an explicit list of node pairs."""

    pairs: np.ndarray
    values: T.Tensor

    def __len__(self) -> int:
        return int(self.pairs.shape[0])


class EdgePredictor:
    """Two-layer GCN encoder over the original graph; ``S_ij = relu(z_i . z_j)``."""

    def __init__(self, feature_dim: int, rng: np.random.Generator, hidden: int = 16, embed_dim: int = 16):
        self.gnn = GNN(GnnConfig("GCN", (feature_dim, hidden, embed_dim)), rng, name="edge")

    def parameters(self) -> list[T.Tensor]:
        return self.gnn.parameters()

    def encode(self, g: Graph, x, adj: T.SparseMatrix | None = None) -> T.Tensor:
        if adj is None:
            adj = normalize_adjacency(g)
        return self.gnn.forward(g, x, adj=adj)


def score_pairs(z: T.Tensor, pairs: np.ndarray) -> EdgeScores:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n = z.shape[0]
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
        raise IndexError(f"pair index outside [0, {n})")
    s = T.relu(T.pair_dot(z, pairs[:, 0], pairs[:, 1]))
    return EdgeScores(pairs, s)


def candidate_scores(z_values: np.ndarray, sources: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Untracked dense ``relu(Z_s Z_t^T)`` block used to pre-filter candidates."""
    return np.maximum(z_values[sources] @ z_values[targets].T, 0.0)


def cosine_scores(features: np.ndarray, sources: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Raw-feature cosine similarity block between two node sets."""
    x = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    norms[norms == 0] = 1.0
    xs = x[sources] / norms[sources, None]
    xt = x[targets] / norms[targets, None]
    return xs @ xt.T


class _NeighborLookup:
    # a dense bitmap is cheaper than binary search while n^2 bytes stay small
    DENSE_LIMIT = 6000

    def __init__(self, g: Graph):
        self.n = g.num_nodes
        keys = edge_keys(g.edges, self.n)
        self.keys = np.sort(keys)
        self.dense = None
        if self.n <= self.DENSE_LIMIT:
            self.dense = np.zeros((self.n, self.n), dtype=bool)
            self.dense[g.edges[:, 0], g.edges[:, 1]] = True
            self.dense[g.edges[:, 1], g.edges[:, 0]] = True

    def contains(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense[i, j]
        k = np.minimum(i, j) * self.n + np.maximum(i, j)
        if self.keys.size == 0:
            return np.zeros(k.shape, dtype=bool)
        pos = np.searchsorted(self.keys, k)
        pos = np.minimum(pos, self.keys.size - 1)
        return self.keys[pos] == k


def _lookup_for(g: Graph) -> _NeighborLookup:
    # graphs are immutable, so the sorted key table can live on the instance
    cached = g.__dict__.get("_neighbor_lookup")
    if cached is None:
        cached = _NeighborLookup(g)
        object.__setattr__(g, "_neighbor_lookup", cached)
    return cached


def sample_negatives(g: Graph, sources: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` uniform non-neighbours (excluding the node itself) per source.

    Returns an array of shape ``(len(sources), k)``. Sources adjacent to every
    other node must be removed by the caller.
    """
    lookup = _lookup_for(g)
    n = g.num_nodes
    src = np.repeat(np.asarray(sources, dtype=np.int64), k)
    neg = rng.integers(0, n, size=src.size)
    bad = (neg == src) | lookup.contains(src, neg)
    while bad.any():
        idx = np.flatnonzero(bad)
        neg[idx] = rng.integers(0, n, size=idx.size)
        bad[idx] = (neg[idx] == src[idx]) | lookup.contains(src[idx], neg[idx])
    return neg.reshape(-1, k)


def positive_pairs(g: Graph) -> np.ndarray:
    """Every undirected edge from both endpoints, i.e. all (v_i, v_j in N(v_i))."""
    e = g.edges
    return np.concatenate([e, e[:, ::-1]], axis=0)


def reconstruction_loss(
    z: T.Tensor,
    g: Graph,
    k: int,
    seed: int | np.random.Generator,
    reduction: str = "sum",
) -> T.Tensor:
    """Adjacency reconstruction with negative sampling.

    Sums ``(S_ij - 1)^2`` over ordered positive pairs plus ``S_in^2`` over
    ``k`` sampled non-neighbours ``v_n`` of ``v_i`` per positive pair.
    ``reduction="mean"`` divides by the number of positive pairs.
    """
    if k < 1:
        raise ValueError("need at least one negative sample per positive pair")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pos = positive_pairs(g)
    if pos.shape[0] == 0:
        return T.Tensor(0.0)
    full = g.degrees()[pos[:, 0]] >= g.num_nodes - 1
    if full.any():
        log.warning("%d positive pairs start at nodes adjacent to all others; skipped", int(full.sum()))
        pos = pos[~full]
        if pos.shape[0] == 0:
            return T.Tensor(0.0)
    neg = sample_negatives(g, pos[:, 0], k, rng)
    s_pos = score_pairs(z, pos).values
    neg_pairs = np.stack([np.repeat(pos[:, 0], k), neg.ravel()], axis=1)
    s_neg = score_pairs(z, neg_pairs).values
    loss = T.add(T.sum(T.square(T.add(s_pos, -1.0))), T.sum(T.square(s_neg)))
    if reduction == "mean":
        loss = T.scale(loss, 1.0 / pos.shape[0])
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return loss


def reconstruction_terms(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    """Plain evaluation of the loss from given scores (no sampling)."""
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    return float(np.sum((pos_scores - 1.0) ** 2) + np.sum(neg_scores**2))
