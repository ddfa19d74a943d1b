"""Densified graphs S^L / S^A and confident pseudo-label mining."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .edges import EdgeScores, candidate_scores, score_pairs
from .graph import Graph, WeightedGraph, edge_keys


@dataclass(frozen=True)
class Thresholds:
    edge: float = 0.1
    confidence: float = 0.8

    def __post_init__(self):
        if self.edge < 0:
            raise ValueError("edge threshold must be non-negative")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence threshold must lie in (0, 1)")

    def check_classes(self, num_classes: int) -> None:
        if self.confidence <= 1.0 / num_classes:
            raise ValueError(f"confidence threshold {self.confidence} does not exceed chance 1/{num_classes}")


@dataclass
class PseudoLabelSet:
    nodes: np.ndarray
    classes: np.ndarray
    confidences: np.ndarray
    epoch: int = -1

    def __len__(self) -> int:
        return int(self.nodes.size)

    @classmethod
    def empty(cls, epoch: int = -1) -> "PseudoLabelSet":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), np.zeros(0), epoch)

    def as_dict(self) -> dict[int, tuple[int, float]]:
        return {int(n): (int(c), float(p)) for n, c, p in zip(self.nodes, self.classes, self.confidences)}

    def to_records(self) -> list[dict]:
        return [
            {"node": int(n), "class": int(c), "confidence": float(p), "epoch": int(self.epoch)}
            for n, c, p in zip(self.nodes, self.classes, self.confidences)
        ]

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_records(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load_json(cls, path: str | Path) -> "PseudoLabelSet":
        recs = json.loads(Path(path).read_text(encoding="utf-8"))
        if not recs:
            return cls.empty()
        return cls(
            np.array([r["node"] for r in recs], dtype=np.int64),
            np.array([r["class"] for r in recs], dtype=np.int64),
            np.array([r["confidence"] for r in recs], dtype=np.float64),
            int(recs[0]["epoch"]),
        )


def _build(g: Graph, scores: EdgeScores, sources_mask: np.ndarray, targets_mask: np.ndarray, t: float) -> WeightedGraph:
    n = g.num_nodes
    pairs = scores.pairs
    if len(scores) == 0:
        return WeightedGraph(g)
    i, j = pairs[:, 0], pairs[:, 1]
    vals = scores.values.value
    keep = sources_mask[i] & targets_mask[j] & (i != j) & (vals > t)
    idx = np.flatnonzero(keep)
    keys = edge_keys(pairs[idx], n)
    # base edges win over candidates
    base = np.isin(keys, edge_keys(g.edges, n))
    idx, keys = idx[~base], keys[~base]
    # one copy per unordered pair (both endpoints may be sources and targets)
    _, first = np.unique(keys, return_index=True)
    idx = np.sort(idx[first])
    if idx.size == 0:
        return WeightedGraph(g)
    return WeightedGraph(g, pairs[idx], T.take(scores.values, idx))


def build_SL(g: Graph, scores: EdgeScores, labeled: np.ndarray, t: float) -> WeightedGraph:
    """Add candidate edges (unlabeled, labeled) whose score exceeds ``t``."""
    lab = _as_mask(labeled, g.num_nodes)
    return _build(g, scores, ~lab, lab, t)


def build_SA(g: Graph, scores: EdgeScores, extended: np.ndarray, t: float, labeled: np.ndarray | None = None) -> WeightedGraph:
    """Add candidate edges (unlabeled, extended-labeled) whose score exceeds ``t``.

    ``extended`` is V_A = V_L united with the pseudo-labeled nodes. The source
    side is V_U = V - V_L, so pseudo-labeled nodes still act as sources;
    pass ``labeled`` to say which members of ``extended`` form V_L.
    """
    ext = _as_mask(extended, g.num_nodes)
    lab = ext if labeled is None else _as_mask(labeled, g.num_nodes)
    return _build(g, scores, ~lab, ext, t)


def _as_mask(nodes: np.ndarray, n: int) -> np.ndarray:
    nodes = np.asarray(nodes)
    if nodes.dtype == bool:
        return nodes
    m = np.zeros(n, dtype=bool)
    m[nodes.astype(np.int64)] = True
    return m


def candidate_edge_scores(
    z: T.Tensor | None,
    sources: np.ndarray,
    targets: np.ndarray,
    t: float,
    block: int = 2048,
    scorer=None,
) -> EdgeScores:
    """Scores for the source x target pairs whose score exceeds ``t``.

    The dense block is evaluated without a tape first; only surviving pairs
    are re-scored on the tape, so gradient reaches ``z`` through them. With a
    ``scorer(sources, targets) -> array`` the scores come from it instead
    and carry no gradient.
    """
    sources = np.asarray(sources, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    found, vals = [], []
    for lo in range(0, sources.size, block):
        src = sources[lo : lo + block]
        s = candidate_scores(z.value, src, targets) if scorer is None else scorer(src, targets)
        r, c = np.nonzero(s > t)
        found.append(np.stack([src[r], targets[c]], axis=1))
        vals.append(s[r, c])
    pairs = np.concatenate(found) if found else np.zeros((0, 2), dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    keep = pairs[:, 0] != pairs[:, 1]
    pairs, vals = pairs[keep], vals[keep]
    if scorer is None:
        return score_pairs(z, pairs)
    return EdgeScores(pairs, T.Tensor(vals))


def mine_pseudo_labels(logits, unlabeled: np.ndarray, threshold: float, epoch: int = -1) -> PseudoLabelSet:
    """Select unlabeled nodes whose max softmax probability exceeds ``threshold``."""
    values = logits.value if isinstance(logits, T.Tensor) else np.asarray(logits, dtype=np.float64)
    unlabeled = np.asarray(unlabeled)
    if unlabeled.dtype == bool:
        unlabeled = np.flatnonzero(unlabeled)
    if unlabeled.size == 0:
        return PseudoLabelSet.empty(epoch)
    z = values[unlabeled]
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    conf = p.max(axis=1)
    cls = p.argmax(axis=1)
    sel = conf > threshold
    return PseudoLabelSet(unlabeled[sel].astype(np.int64), cls[sel].astype(np.int64), conf[sel], epoch)
