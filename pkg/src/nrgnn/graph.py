"""Attributed graphs, label splits, weighted densified graphs and dataset I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import tensor as T


class GraphError(ValueError):
    """A graph or split violates its structural invariants."""


class DatasetError(Exception):
    """Base class for on-disk dataset problems."""

    def __init__(self, message: str, path: Path | str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class MissingFileError(DatasetError):
    pass


class MalformedLineError(DatasetError):
    pass


class IndexOutOfRangeError(DatasetError):
    pass


class ClassCountMismatchError(DatasetError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph.

    ``edges`` is an (E, 2) int array with ``i < j`` per row, sorted and
    duplicate free. Self-loops are only introduced by normalisation.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    num_classes: int

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
            raise GraphError(f"feature matrix has {feats.shape[0] if feats.ndim else 0} rows for {self.num_nodes} nodes")
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.num_nodes:
                raise GraphError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GraphError("self-loops are not allowed in the edge list")
        edges = canonical_edges(edges)
        if edges.shape[0] != len(np.asarray(self.edges).reshape(-1, 2)):
            raise GraphError("edge list contains duplicates")
        if self.num_classes < 1:
            raise GraphError("num_classes must be positive")
        edges.setflags(write=False)
        feats = feats.copy()
        feats.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", feats)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency without self-loops."""
        n = self.num_nodes
        r = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        c = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        return sp.csr_matrix((np.ones(r.size), (r, c)), shape=(n, n))

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)

    def permuted(self, perm: np.ndarray) -> "Graph":
        """Relabel node ``v`` as ``perm[v]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return Graph(self.num_nodes, perm[self.edges], self.features[inv], self.num_classes)


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return np.unique(np.stack([lo, hi], axis=1), axis=0)


def edge_keys(edges: np.ndarray, n: int) -> np.ndarray:
    """Scalar key ``min*n + max`` per undirected pair."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return lo * n + hi


@dataclass(frozen=True, eq=False)
class ObservedLabels:
    """What a learner may see: noisy labels on train/val and the masks.

    ``noisy_labels`` is -1 outside train and val.
    """

    noisy_labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int

    @property
    def train_idx(self) -> np.ndarray:
        return np.flatnonzero(self.train_mask)

    @property
    def val_idx(self) -> np.ndarray:
        return np.flatnonzero(self.val_mask)

    @property
    def unlabeled_idx(self) -> np.ndarray:
        return np.flatnonzero(~self.train_mask)


@dataclass(frozen=True, eq=False)
class LabelSplit:
    true_labels: np.ndarray
    noisy_labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int

    def __post_init__(self):
        n = len(self.true_labels)
        masks = [np.asarray(m, dtype=bool) for m in (self.train_mask, self.val_mask, self.test_mask)]
        for m in masks:
            if m.shape != (n,):
                raise GraphError("mask length differs from label count")
        tr, va, te = masks
        if np.any(tr & va) or np.any(tr & te) or np.any(va & te):
            raise GraphError("train/val/test masks overlap")
        true = np.asarray(self.true_labels, dtype=np.int64)
        noisy = np.asarray(self.noisy_labels, dtype=np.int64)
        if np.any(true < 0) or np.any(true >= self.num_classes):
            raise GraphError("true label outside [0, num_classes)")
        labeled = tr | va
        if np.any(noisy[labeled] < 0) or np.any(noisy[labeled] >= self.num_classes):
            raise GraphError("noisy label outside [0, num_classes) on train/val")
        if np.any(noisy[~labeled] != -1):
            raise GraphError("noisy labels must be -1 outside train and val")
        for name, arr in zip(("true_labels", "noisy_labels", "train_mask", "val_mask", "test_mask"),
                             (true, noisy, tr, va, te)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def observed(self) -> ObservedLabels:
        return ObservedLabels(self.noisy_labels, self.train_mask, self.val_mask, self.test_mask, self.num_classes)

    def with_noisy(self, noisy: np.ndarray) -> "LabelSplit":
        return LabelSplit(self.true_labels, noisy, self.train_mask, self.val_mask, self.test_mask, self.num_classes)

    def permuted(self, perm: np.ndarray) -> "LabelSplit":
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return LabelSplit(self.true_labels[inv], self.noisy_labels[inv], self.train_mask[inv],
                          self.val_mask[inv], self.test_mask[inv], self.num_classes)


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Base graph plus extra undirected edges with (differentiable) weights.

    ``added`` is an (k, 2) int array; ``weights`` a length-k tensor. Each
    added edge contributes its weight to both (i, j) and (j, i).
    """

    base: Graph
    added: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    weights: T.Tensor = field(default_factory=lambda: T.Tensor(np.zeros(0)))

    def __post_init__(self):
        added = np.asarray(self.added, dtype=np.int64).reshape(-1, 2)
        if added.shape[0] != self.weights.shape[0]:
            raise GraphError("one weight per added edge required")
        object.__setattr__(self, "added", added)

    @classmethod
    def plain(cls, g: Graph) -> "WeightedGraph":
        return cls(g)

    @property
    def num_added(self) -> int:
        return int(self.added.shape[0])

    def check(self, threshold: float | None = None) -> None:
        """Validate the densified-graph invariants (used by tests)."""
        n = self.base.num_nodes
        if self.num_added == 0:
            return
        if np.any(self.added[:, 0] == self.added[:, 1]):
            raise GraphError("added self-loop")
        keys = edge_keys(self.added, n)
        if np.unique(keys).size != keys.size:
            raise GraphError("duplicate added edge")
        if np.isin(keys, edge_keys(self.base.edges, n)).any():
            raise GraphError("added edge duplicates a base edge")
        if threshold is not None and np.any(self.weights.value <= threshold):
            raise GraphError("added edge weight not above threshold")

    def permuted(self, perm: np.ndarray) -> "WeightedGraph":
        perm = np.asarray(perm, dtype=np.int64)
        return WeightedGraph(self.base.permuted(perm), perm[self.added], self.weights)


def _coo_entries(wg: WeightedGraph, self_loops: bool = True) -> tuple[np.ndarray, np.ndarray, T.Tensor]:
    g = wg.base
    e = g.edges
    rows = [e[:, 0], e[:, 1]]
    cols = [e[:, 1], e[:, 0]]
    if self_loops:
        loops = np.arange(g.num_nodes, dtype=np.int64)
        rows.append(loops)
        cols.append(loops)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    ones = T.Tensor(np.ones(rows.size))
    if wg.num_added == 0:
        return rows, cols, ones
    a = wg.added
    k = a.shape[0]
    rows = np.concatenate([rows, a[:, 0], a[:, 1]])
    cols = np.concatenate([cols, a[:, 1], a[:, 0]])
    w2 = T.take(wg.weights, np.concatenate([np.arange(k), np.arange(k)]))
    return rows, cols, T.concat([ones, w2])


def normalize_adjacency(wg: WeightedGraph | Graph) -> T.SparseMatrix:
    """``D^-1/2 (A + I) D^-1/2`` with A holding base edges at 1 and added edges at their weights.

    Differentiable w.r.t. the added-edge weights, including through the
    degree terms.
    """
    if isinstance(wg, Graph):
        wg = WeightedGraph(wg)
    n = wg.base.num_nodes
    rows, cols, vals = _coo_entries(wg)
    deg = T.segment_sum(vals, rows, n)
    dinv = T.power(deg, -0.5)
    normed = vals * T.take(dinv, rows) * T.take(dinv, cols)
    return T.SparseMatrix(rows, cols, normed, (n, n))


def aggregation_matrix(wg: WeightedGraph | Graph) -> T.SparseMatrix:
    """Unnormalised weighted adjacency without self-loops, for sum aggregation."""
    if isinstance(wg, Graph):
        wg = WeightedGraph(wg)
    n = wg.base.num_nodes
    rows, cols, vals = _coo_entries(wg, self_loops=False)
    return T.SparseMatrix(rows, cols, vals, (n, n))


# dataset directory format

def save_dataset(path: str | Path, g: Graph, labels: np.ndarray, split: dict | None = None) -> None:
    """Write ``meta.json``, ``edges.tsv``, ``features.csv``, ``labels.txt``.

    Floats are written with ``repr`` so that loading is bit-exact.
    ``split`` (optional) is stored as ``split.json`` with ``val``/``test`` index lists.
    """
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    meta = {"num_nodes": g.num_nodes, "feature_dim": g.feature_dim, "num_classes": g.num_classes}
    (p / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8", newline="\n")
    with open(p / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for i, j in g.edges:
            fh.write(f"{i}\t{j}\n")
    with open(p / "features.csv", "w", encoding="utf-8", newline="\n") as fh:
        for row in g.features:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    with open(p / "labels.txt", "w", encoding="utf-8", newline="\n") as fh:
        for y in np.asarray(labels, dtype=np.int64):
            fh.write(f"{y}\n")
    if split is not None:
        out = {k: [int(i) for i in np.asarray(v)] for k, v in split.items()}
        (p / "split.json").write_text(json.dumps(out) + "\n", encoding="utf-8", newline="\n")


def _fmt(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2**53 and math.copysign(1.0, x) > 0:
        return str(int(x))
    return repr(x)


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise MissingFileError("required file is missing", path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def load_dataset(path: str | Path) -> tuple[Graph, np.ndarray]:
    """Read a dataset directory; raises a :class:`DatasetError` subclass naming file and line."""
    p = Path(path)
    meta_path = p / "meta.json"
    if not meta_path.is_file():
        raise MissingFileError("required file is missing", meta_path)
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        n = int(meta["num_nodes"])
        d = int(meta["feature_dim"])
        c = int(meta["num_classes"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedLineError(f"bad manifest ({exc})", meta_path) from None

    edges = []
    epath = p / "edges.tsv"
    for lineno, line in enumerate(_read_lines(epath), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise MalformedLineError(f"expected 'i<TAB>j', got {line!r}", epath, lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedLineError(f"non-integer endpoint in {line!r}", epath, lineno) from None
        if not (0 <= i < n and 0 <= j < n):
            raise IndexOutOfRangeError(f"endpoint outside [0, {n})", epath, lineno)
        if i >= j:
            raise MalformedLineError("edges must satisfy i < j", epath, lineno)
        edges.append((i, j))

    fpath = p / "features.csv"
    flines = _read_lines(fpath)
    if len(flines) != n:
        raise MalformedLineError(f"{len(flines)} feature rows for {n} nodes", fpath, len(flines) + 1)
    feats = np.empty((n, d), dtype=np.float64)
    for lineno, line in enumerate(flines, start=1):
        parts = line.split(",")
        if len(parts) != d:
            raise MalformedLineError(f"{len(parts)} values, expected {d}", fpath, lineno)
        try:
            feats[lineno - 1] = [float(x) for x in parts]
        except ValueError:
            raise MalformedLineError("non-numeric feature value", fpath, lineno) from None

    lpath = p / "labels.txt"
    llines = _read_lines(lpath)
    if len(llines) != n:
        raise MalformedLineError(f"{len(llines)} labels for {n} nodes", lpath, len(llines) + 1)
    labels = np.empty(n, dtype=np.int64)
    for lineno, line in enumerate(llines, start=1):
        try:
            y = int(line)
        except ValueError:
            raise MalformedLineError(f"non-integer label {line!r}", lpath, lineno) from None
        if not 0 <= y < c:
            raise ClassCountMismatchError(f"label {y} outside [0, {c})", lpath, lineno)
        labels[lineno - 1] = y

    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    if canonical_edges(e).shape[0] != e.shape[0]:
        raise MalformedLineError("duplicate edge", epath)
    return Graph(n, e, feats, c), labels


def load_standard_split(path: str | Path) -> dict[str, np.ndarray] | None:
    """Return ``{"val": idx, "test": idx}`` from ``split.json`` if present."""
    f = Path(path) / "split.json"
    if not f.is_file():
        return None
    raw = json.loads(f.read_text(encoding="utf-8"))
    return {k: np.asarray(v, dtype=np.int64) for k, v in raw.items()}


def convert_npz(npz_path: str | Path, out_dir: str | Path, largest_component: bool = True) -> Graph:
    """Convert a citation-graph dump in compressed sparse ``.npz`` form.

    Expects the keys used by the common Cora/Citeseer dumps:
    ``adj_data, adj_indices, adj_indptr, adj_shape``, ``attr_data, attr_indices,
    attr_indptr, attr_shape`` and ``labels``. With ``largest_component`` the
    graph is restricted to its largest connected component (the 2,485-node
    Cora and 2,110-node Citeseer variants).
    """
    z = np.load(npz_path, allow_pickle=False)
    adj = sp.csr_matrix((z["adj_data"], z["adj_indices"], z["adj_indptr"]), shape=tuple(z["adj_shape"]))
    if "attr_data" in z:
        x = sp.csr_matrix((z["attr_data"], z["attr_indices"], z["attr_indptr"]), shape=tuple(z["attr_shape"]))
    else:
        x = sp.csr_matrix(z["attr_matrix"])
    labels = np.asarray(z["labels"], dtype=np.int64)
    adj = adj + adj.T
    adj.setdiag(0)
    adj.eliminate_zeros()
    keep = np.arange(adj.shape[0])
    if largest_component:
        _, comp = sp.csgraph.connected_components(adj, directed=False)
        biggest = np.argmax(np.bincount(comp))
        keep = np.flatnonzero(comp == biggest)
        adj = adj[keep][:, keep]
        x = x[keep]
        labels = labels[keep]
    # re-index classes densely in case a class vanished with the small components
    _, labels = np.unique(labels, return_inverse=True)
    upper = sp.triu(adj, k=1).tocoo()
    g = Graph(adj.shape[0], np.stack([upper.row, upper.col], axis=1), x.toarray(), int(labels.max()) + 1)
    save_dataset(out_dir, g, labels)
    return g


# splits

def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_split(
    g: Graph,
    labels: np.ndarray,
    label_rate: float,
    seed: int,
    val_rate: float = 0.1,
    test_rate: float = 0.8,
    standard: dict[str, np.ndarray] | None = None,
) -> LabelSplit:
    """Sample a training set of ``round(label_rate * n)`` nodes.

    Validation and test come from ``standard`` when given; otherwise they are
    sampled disjointly with ``val_rate``/``test_rate``. Training nodes are
    drawn from what remains. Noisy labels start equal to the true labels on
    train and val; corrupt them with :func:`nrgnn.noise.corrupt`.
    """
    if not 0 < label_rate < 1:
        raise ValueError("label_rate must lie in (0, 1)")
    n = g.num_nodes
    n_train = round_half_up(label_rate * n)
    if n_train == 0:
        raise ValueError(f"label_rate {label_rate} gives an empty training set on {n} nodes")
    rng = np.random.default_rng(seed)
    if standard is not None:
        val_idx = np.asarray(standard["val"], dtype=np.int64)
        test_idx = np.asarray(standard["test"], dtype=np.int64)
    else:
        perm = rng.permutation(n)
        n_val = round_half_up(val_rate * n)
        n_test = round_half_up(test_rate * n)
        val_idx, test_idx = perm[:n_val], perm[n_val : n_val + n_test]
    rest = np.setdiff1d(np.arange(n), np.concatenate([val_idx, test_idx]))
    if n_train > rest.size:
        raise ValueError(f"only {rest.size} nodes left for {n_train} training nodes")
    train_idx = np.sort(rng.choice(rest, size=n_train, replace=False))
    masks = []
    for idx in (train_idx, val_idx, test_idx):
        m = np.zeros(n, dtype=bool)
        m[idx] = True
        masks.append(m)
    labels = np.asarray(labels, dtype=np.int64)
    noisy = np.where(masks[0] | masks[1], labels, -1)
    return LabelSplit(labels, noisy, *masks, g.num_classes)


def subsample_edges(g: Graph, edge_rate: float, seed: int) -> Graph:
    """Keep a seeded uniform fraction of the edges."""
    if not 0 < edge_rate <= 1:
        raise ValueError("edge_rate must lie in (0, 1]")
    if edge_rate == 1:
        return g
    rng = np.random.default_rng(seed)
    k = round_half_up(edge_rate * g.num_edges)
    keep = np.sort(rng.choice(g.num_edges, size=k, replace=False))
    return Graph(g.num_nodes, g.edges[keep], g.features, g.num_classes)


# synthetic graphs

def _triangle_pair(idx: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Decode linear indices into (i, j), i < j, of the strict upper triangle of an m x m matrix."""
    idx = np.asarray(idx, dtype=np.int64)
    # row i starts at offset i*m - i*(i+1)/2
    i = (m - 2 - np.floor(np.sqrt(-8.0 * idx + 4.0 * m * (m - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    start = i * m - i * (i + 1) // 2
    j = idx - start + i + 1
    return i, j


def generate_csbm(
    n: int,
    classes: int,
    p_intra: float,
    p_inter: float,
    feature_dim: int,
    feature_noise: float,
    seed: int,
    mean_scale: float = 1.0,
) -> tuple[Graph, np.ndarray]:
    """Contextual stochastic block model.

    Classes are balanced; each pair inside a class is linked with ``p_intra``
    and each pair across classes with ``p_inter``. Features are the class mean
    (a standard normal vector times ``mean_scale``) plus isotropic Gaussian
    noise of standard deviation ``feature_noise``.
    """
    for name, p in (("p_intra", p_intra), ("p_inter", p_inter)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name}={p} outside [0, 1]")
    if classes < 2:
        raise ValueError("need at least two classes")
    if not p_intra > p_inter:
        raise ValueError("p_intra must exceed p_inter")
    if feature_noise < 0:
        raise ValueError("feature_noise must be non-negative")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % classes)
    members = [np.flatnonzero(labels == c) for c in range(classes)]

    chunks = []
    for a in range(classes):
        for b in range(a, classes):
            ma, mb = members[a], members[b]
            if a == b:
                total = ma.size * (ma.size - 1) // 2
                p = p_intra
            else:
                total = ma.size * mb.size
                p = p_inter
            if total == 0 or p == 0:
                continue
            k = rng.binomial(total, p)
            ids = np.sort(rng.choice(total, size=k, replace=False))
            if a == b:
                i, j = _triangle_pair(ids, ma.size)
                chunks.append(np.stack([ma[i], ma[j]], axis=1))
            else:
                chunks.append(np.stack([ma[ids // mb.size], mb[ids % mb.size]], axis=1))
    edges = canonical_edges(np.concatenate(chunks)) if chunks else np.zeros((0, 2), dtype=np.int64)

    means = rng.standard_normal((classes, feature_dim)) * mean_scale
    feats = means[labels] + feature_noise * rng.standard_normal((n, feature_dim))
    return Graph(n, edges, feats, classes), labels
