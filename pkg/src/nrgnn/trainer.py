"""NRGNN joint training, baselines on the original / cosine-densified graph, ablations."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .densify import (
    PseudoLabelSet,
    Thresholds,
    build_SA,
    build_SL,
    candidate_edge_scores,
    mine_pseudo_labels,
)
from .edges import EdgePredictor, EdgeScores, cosine_scores, reconstruction_loss
from .graph import Graph, LabelSplit, ObservedLabels, WeightedGraph, canonical_edges, edge_keys, normalize_adjacency
from .models import GNN, GnnConfig

log = logging.getLogger(__name__)

LINK_MODES = ("link_VL", "link_VU", "link_VA")
VARIANTS = ("NRGNN", "NRGNN_GIN", "no_edge_predictor", "no_pseudo", "plain_miner")


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, component: str, value: float):
        super().__init__(f"non-finite {component} loss ({value}) at epoch {epoch}")
        self.epoch = epoch
        self.component = component


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.03
    beta: float = 1.0
    thresholds: Thresholds = field(default_factory=Thresholds)
    K: int = 50
    lr: float = 0.001
    weight_decay: float = 5e-4
    pretrain_epochs: int = 50
    epochs: int = 200
    hidden: int = 16
    classifier_kind: str = "GCN"
    edge_source: str = "gnn_predictor"
    pseudo_mode: str = "full"
    recon_reduction: str = "mean"
    gin_epsilon: float = 0.0
    # cosine-similarity thresholds tried (on validation) by the linking baselines
    sim_grid: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    # a grid point adding more than this many edges per node is skipped
    max_link_edges_per_node: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.pretrain_epochs < 0:
            raise ValueError("pretrain_epochs must be non-negative")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.classifier_kind not in ("GCN", "GIN"):
            raise ValueError(f"classifier_kind {self.classifier_kind!r} not in (GCN, GIN)")
        if self.edge_source not in ("gnn_predictor", "cosine"):
            raise ValueError(f"edge_source {self.edge_source!r} not in (gnn_predictor, cosine)")
        if self.pseudo_mode not in ("full", "none", "plain_gcn"):
            raise ValueError(f"pseudo_mode {self.pseudo_mode!r} not in (full, none, plain_gcn)")
        if self.recon_reduction not in ("sum", "mean"):
            raise ValueError("recon_reduction must be 'sum' or 'mean'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sim_grid"] = list(self.sim_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("thresholds"), dict):
            d["thresholds"] = Thresholds(**d["thresholds"])
        if "sim_grid" in d:
            d["sim_grid"] = tuple(d["sim_grid"])
        return cls(**d)


@dataclass
class Metrics:
    test_acc: float
    val_acc: float
    best_epoch: int = -1
    epochs_run: int = 0
    history: dict[str, list[float]] = field(default_factory=dict)
    pseudo_count: int = 0
    pseudo_acc: float | None = None
    added_edges: int = 0
    variants: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def accuracy(logits, labels: np.ndarray, mask: np.ndarray) -> float:
    values = logits.value if isinstance(logits, T.Tensor) else np.asarray(logits)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask
    if idx.size == 0:
        raise ValueError("accuracy over an empty node set")
    return float(np.mean(values[idx].argmax(axis=1) == np.asarray(labels)[idx]))


def evaluate(model, g_eval, split: LabelSplit) -> float:
    """Test accuracy of ``model.predict(g_eval)`` against the true labels.

    This is the only place true labels are consulted.
    """
    if not np.any(split.test_mask):
        raise ValueError("empty test mask")
    return accuracy(model.predict(g_eval), split.true_labels, split.test_mask)


def _features(g_eval) -> np.ndarray:
    return g_eval.base.features if isinstance(g_eval, WeightedGraph) else g_eval.features


def _check_finite(epoch: int, **parts: float) -> None:
    for name, v in parts.items():
        if not math.isfinite(v):
            raise TrainingDivergence(epoch, name, v)


def _val_key(logits: T.Tensor, obs: ObservedLabels) -> tuple[float, float]:
    """Model-selection key: noisy validation accuracy, ties broken by lower loss."""
    acc = accuracy(logits, obs.noisy_labels, obs.val_mask)
    loss = T.cross_entropy(T.Tensor(logits.value), obs.noisy_labels, obs.val_mask).item()
    return (acc, -loss)


def _detached(wg: WeightedGraph) -> WeightedGraph:
    return WeightedGraph(wg.base, wg.added, T.Tensor(wg.weights.value.copy()))


def _rng(cfg: TrainConfig, stream: int, offset: int = 0) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream, offset])


def _classifier(cfg: TrainConfig, feature_dim: int, num_classes: int, kind: str | None = None, offset: int = 0) -> GNN:
    dims = (feature_dim, cfg.hidden, num_classes)
    conf = GnnConfig(kind or cfg.classifier_kind, dims, cfg.gin_epsilon, cfg.hidden)
    return GNN(conf, _rng(cfg, 1, offset), name="clf")


# plain supervised training


@dataclass
class FittedGNN:
    gnn: GNN
    x: np.ndarray
    graph: WeightedGraph
    logits: np.ndarray

    def predict(self, g_eval=None) -> np.ndarray:
        """Logits on ``g_eval`` (defaults to the training graph at the selected epoch)."""
        if g_eval is None:
            return self.logits
        return np.asarray(self.gnn.forward(g_eval, _features(g_eval)).value)


def fit_gnn(
    g: Graph | WeightedGraph,
    obs: ObservedLabels,
    cfg: TrainConfig,
    targets: np.ndarray | None = None,
    nodes: np.ndarray | None = None,
    offset: int = 0,
) -> tuple[FittedGNN, dict]:
    """Train one GCN/GIN with cross entropy; keeps the best noisy-validation epoch."""
    wg = WeightedGraph(g) if isinstance(g, Graph) else _detached(g)
    x = wg.base.features
    gnn = _classifier(cfg, wg.base.feature_dim, obs.num_classes, offset=offset)
    opt = T.Adam(gnn.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    targets = obs.noisy_labels if targets is None else targets
    nodes = obs.train_mask if nodes is None else nodes
    adj = normalize_adjacency(wg) if cfg.classifier_kind == "GCN" else None
    best = None
    losses = []
    for epoch in range(cfg.epochs):
        logits = gnn.forward(wg, x, adj=adj)
        loss = T.cross_entropy(logits, targets, nodes)
        _check_finite(epoch, L_G=loss.item())
        losses.append(loss.item())
        key = _val_key(logits, obs)
        if best is None or key > best[0]:
            best = (key, epoch, gnn.state(), logits.value.copy())
        opt.zero_grad()
        loss.backward()
        opt.step()
    key, epoch, state, logits = best
    gnn.load_state(state)
    info = {"val_acc": key[0], "best_epoch": epoch, "history": {"L_G": losses}}
    return FittedGNN(gnn, x, wg, logits), info


def train_plain(g: Graph, split: LabelSplit, cfg: TrainConfig) -> Metrics:
    """Supervised GCN/GIN on the original graph with the noisy labels."""
    fitted, info = fit_gnn(g, split.observed(), cfg)
    return Metrics(
        test_acc=evaluate(fitted, None, split),
        val_acc=info["val_acc"],
        best_epoch=info["best_epoch"],
        epochs_run=cfg.epochs,
        history=info["history"],
    )


# cosine-similarity linking baselines


def cosine_link_graph(
    g: Graph, sources: np.ndarray, targets: np.ndarray, threshold: float, max_edges: int | None = None
) -> WeightedGraph | None:
    """Add weight-1 edges between source/target pairs whose raw-feature cosine exceeds ``threshold``.

    Returns ``None`` when more than ``max_edges`` edges would be added.
    """
    scorer = lambda s, t: cosine_scores(g.features, s, t)  # noqa: E731
    scores = candidate_edge_scores(None, sources, targets, threshold, scorer=scorer)
    pairs = canonical_edges(scores.pairs)
    pairs = pairs[~np.isin(edge_keys(pairs, g.num_nodes), edge_keys(g.edges, g.num_nodes))]
    if max_edges is not None and pairs.shape[0] > max_edges:
        return None
    return WeightedGraph(g, pairs, T.Tensor(np.ones(pairs.shape[0])))


def _grid(cfg: TrainConfig, sim_threshold) -> tuple[float, ...]:
    if sim_threshold is None:
        grid = tuple(cfg.sim_grid)
    elif np.ndim(sim_threshold) == 0:
        grid = (float(sim_threshold),)
    else:
        grid = tuple(float(s) for s in sim_threshold)
    if not grid:
        raise ValueError("similarity threshold grid is empty")
    return grid


def _best_linked_retrain(g, obs, cfg, sources, targets, grid, cap, labels=None, nodes=None):
    best = None
    for k, thr in enumerate(grid):
        wg = cosine_link_graph(g, sources, targets, thr, cap)
        if wg is None:
            continue
        fitted, info = fit_gnn(wg, obs, cfg, targets=labels, nodes=nodes, offset=0)
        key = _val_key(T.Tensor(fitted.logits), obs)
        if best is None or key > best[0]:
            best = (key, thr, fitted, wg)
    if best is None:
        raise ValueError("every similarity threshold in the grid exceeded the edge cap")
    return best


def train_cosine_link(
    g: Graph,
    split: LabelSplit,
    mode: str,
    sim_threshold: float | tuple[float, ...] | None = None,
    cfg: TrainConfig = TrainConfig(),
) -> Metrics:
    """Cosine-similarity densification baselines.

    ``link_VL`` links unlabeled to labeled nodes and predicts with a GCN
    trained on the original graph (``variants['retrain']`` holds the GCN
    retrained on the densified graph); ``link_VU`` links unlabeled pairs;
    ``link_VA`` retrains on the V_L-linked graph, harvests confident
    predictions as pseudo labels, links V_U to V_L plus the pseudo-labeled
    nodes and retrains with noisy and pseudo labels. Thresholds are chosen
    on the noisy validation set from ``sim_threshold`` or ``cfg.sim_grid``.
    """
    if mode not in LINK_MODES:
        raise ValueError(f"unknown link mode {mode!r}; expected one of {LINK_MODES}")
    grid = _grid(cfg, sim_threshold)
    obs = split.observed()
    lab, unl = obs.train_idx, obs.unlabeled_idx
    cap = int(cfg.max_link_edges_per_node * g.num_nodes)
    initial, _ = fit_gnn(g, obs, cfg)
    variants = {"initial": evaluate(initial, None, split)}

    if mode in ("link_VL", "link_VU"):
        targets = lab if mode == "link_VL" else unl
        best = None
        for thr in grid:
            wg = cosine_link_graph(g, unl, targets, thr, cap)
            if wg is None:
                continue
            logits = initial.predict(wg)
            key = _val_key(T.Tensor(logits), obs)
            if best is None or key > best[0]:
                best = (key, thr, logits, wg)
        if best is None:
            raise ValueError("every similarity threshold in the grid exceeded the edge cap")
        key, thr, logits, wg = best
        test_acc = accuracy(logits, split.true_labels, split.test_mask)
        variants["threshold"] = thr
        if mode == "link_VL":
            rkey, rthr, refit, _ = _best_linked_retrain(g, obs, cfg, unl, lab, grid, cap)
            variants["retrain"] = evaluate(refit, None, split)
            variants["retrain_threshold"] = rthr
        return Metrics(test_acc=test_acc, val_acc=key[0], epochs_run=cfg.epochs, added_edges=wg.num_added, variants=variants)

    # link_VA
    key1, thr1, step1, _ = _best_linked_retrain(g, obs, cfg, unl, lab, grid, cap)
    variants["retrain"] = evaluate(step1, None, split)
    pseudo = mine_pseudo_labels(step1.logits, unl, cfg.thresholds.confidence)
    targets = obs.noisy_labels.copy()
    targets[pseudo.nodes] = pseudo.classes
    ext = obs.train_mask.copy()
    ext[pseudo.nodes] = True
    ext_idx = np.flatnonzero(ext)
    key, thr, fitted, wg = _best_linked_retrain(g, obs, cfg, unl, ext_idx, grid, cap, labels=targets, nodes=ext)
    variants["threshold"] = thr
    pseudo_acc = float(np.mean(split.true_labels[pseudo.nodes] == pseudo.classes)) if len(pseudo) else None
    return Metrics(
        test_acc=evaluate(fitted, None, split),
        val_acc=key[0],
        epochs_run=cfg.epochs,
        pseudo_count=len(pseudo),
        pseudo_acc=pseudo_acc,
        added_edges=wg.num_added,
        variants=variants,
    )


# NRGNN


@dataclass
class StepOutput:
    total: T.Tensor
    L_G: T.Tensor
    L_E: T.Tensor
    L_P: T.Tensor
    logits: T.Tensor
    miner_logits: T.Tensor
    S_L: WeightedGraph
    S_A: WeightedGraph
    pseudo: PseudoLabelSet


class NRGNN:
    """Edge predictor, pseudo-label miner and final classifier trained jointly.

    The miner is always a GCN; ``cfg.classifier_kind`` selects the final
    classifier's backbone. Only noisy labels and masks are visible here.
    """

    def __init__(self, g: Graph, obs: ObservedLabels, cfg: TrainConfig):
        cfg.thresholds.check_classes(obs.num_classes)
        self.g = g
        self.obs = obs
        self.cfg = cfg
        self.x = g.features
        self.base_adj = normalize_adjacency(g)
        self.labeled = obs.train_idx
        self.unlabeled = obs.unlabeled_idx
        f, c = g.feature_dim, obs.num_classes
        self.predictor = EdgePredictor(f, _rng(cfg, 2), hidden=cfg.hidden) if cfg.edge_source == "gnn_predictor" else None
        self.miner = GNN(GnnConfig("GCN", (f, cfg.hidden, c)), _rng(cfg, 3), name="miner")
        self.classifier = _classifier(cfg, f, c)
        self._cosine = lambda s, t: cosine_scores(self.x, s, t)  # noqa: E731

    def parameters(self) -> list[T.Tensor]:
        ps = [] if self.predictor is None else self.predictor.parameters()
        return ps + self.miner.parameters() + self.classifier.parameters()

    def _embed(self, track: bool = True) -> T.Tensor | None:
        if self.predictor is None:
            return None
        z = self.predictor.encode(self.g, self.x, adj=self.base_adj)
        return z if track else T.Tensor(z.value)

    def _scores(self, z: T.Tensor | None, targets: np.ndarray) -> EdgeScores:
        t = self.cfg.thresholds.edge
        if z is None:
            return candidate_edge_scores(None, self.unlabeled, targets, t, scorer=self._cosine)
        return candidate_edge_scores(z, self.unlabeled, targets, t)

    def objective(self, rng: np.random.Generator, epoch: int = -1) -> StepOutput:
        """One forward pass: build S^L, mine pseudo labels, build S^A, combine losses."""
        cfg, obs, g = self.cfg, self.obs, self.g
        t = cfg.thresholds.edge
        z = self._embed()
        if z is not None and cfg.alpha > 0:
            L_E = reconstruction_loss(z, g, cfg.K, rng, reduction=cfg.recon_reduction)
        else:
            L_E = T.Tensor(0.0)
        scores_l = self._scores(z, self.labeled)
        S_L = build_SL(g, scores_l, obs.train_mask, t)

        if cfg.pseudo_mode == "none":
            miner_logits = T.Tensor(np.zeros((g.num_nodes, obs.num_classes)))
            L_P = T.Tensor(0.0)
            pseudo = PseudoLabelSet.empty(epoch)
        else:
            miner_graph = S_L if cfg.pseudo_mode == "full" else WeightedGraph(g)
            miner_logits = self.miner.forward(miner_graph, self.x)
            L_P = T.cross_entropy(miner_logits, obs.noisy_labels, obs.train_mask)
            pseudo = mine_pseudo_labels(miner_logits, self.unlabeled, cfg.thresholds.confidence, epoch)

        ext = obs.train_mask.copy()
        ext[pseudo.nodes] = True
        if len(pseudo):
            scores_p = self._scores(z, pseudo.nodes)
            scores_a = EdgeScores(
                np.concatenate([scores_l.pairs, scores_p.pairs]),
                T.concat([scores_l.values, scores_p.values]),
            )
        else:
            scores_a = scores_l
        S_A = build_SA(g, scores_a, ext, t, labeled=obs.train_mask)

        targets = obs.noisy_labels.copy()
        targets[pseudo.nodes] = pseudo.classes
        logits = self.classifier.forward(S_A, self.x)
        L_G = T.cross_entropy(logits, targets, ext)
        total = L_G
        if cfg.alpha > 0 and L_E.requires_grad:
            total = T.add(total, T.scale(L_E, cfg.alpha))
        if cfg.beta > 0 and L_P.requires_grad:
            total = T.add(total, T.scale(L_P, cfg.beta))
        return StepOutput(total, L_G, L_E, L_P, logits, miner_logits, S_L, S_A, pseudo)

    def pretrain(self) -> dict[str, list[float]]:
        """Fit the edge predictor on reconstruction, then the miner on S^L."""
        cfg = self.cfg
        hist: dict[str, list[float]] = {"pre_L_E": [], "pre_L_P": []}
        if cfg.pretrain_epochs == 0:
            return hist
        rng = _rng(cfg, 4)
        if self.predictor is not None:
            opt = T.Adam(self.predictor.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
            for epoch in range(cfg.pretrain_epochs):
                loss = reconstruction_loss(self._embed(), self.g, cfg.K, rng, reduction=cfg.recon_reduction)
                _check_finite(epoch, L_E=loss.item())
                hist["pre_L_E"].append(loss.item())
                opt.zero_grad()
                loss.backward()
                opt.step()
        if cfg.pseudo_mode == "none":
            return hist
        if cfg.pseudo_mode == "full":
            S_L = _detached(build_SL(self.g, self._scores(self._embed(track=False), self.labeled), self.obs.train_mask, cfg.thresholds.edge))
        else:
            S_L = WeightedGraph(self.g)
        adj = normalize_adjacency(S_L)
        opt = T.Adam(self.miner.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        for epoch in range(cfg.pretrain_epochs):
            loss = T.cross_entropy(self.miner.forward(S_L, self.x, adj=adj), self.obs.noisy_labels, self.obs.train_mask)
            _check_finite(epoch, L_P=loss.item())
            hist["pre_L_P"].append(loss.item())
            opt.zero_grad()
            loss.backward()
            opt.step()
        return hist

    def fit(self) -> "NRGNNResult":
        cfg = self.cfg
        hist = self.pretrain()
        for k in ("L_G", "L_E", "L_P", "total", "pseudo_count", "added_SL", "added_SA", "val_acc"):
            hist[k] = []
        opt = T.Adam(self.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        rng = _rng(cfg, 5)
        best = None
        for epoch in range(cfg.epochs):
            out = self.objective(rng, epoch)
            parts = {"L_G": out.L_G.item(), "L_E": out.L_E.item(), "L_P": out.L_P.item(), "total": out.total.item()}
            _check_finite(epoch, **parts)
            for k, v in parts.items():
                hist[k].append(v)
            hist["pseudo_count"].append(len(out.pseudo))
            hist["added_SL"].append(out.S_L.num_added)
            hist["added_SA"].append(out.S_A.num_added)
            key = _val_key(out.logits, self.obs)
            hist["val_acc"].append(key[0])
            if best is None or key > best[0]:
                best = (key, epoch, out.logits.value.copy(), _detached(out.S_A), out.pseudo, self.classifier.state())
            opt.zero_grad()
            out.total.backward()
            opt.step()
        key, epoch, logits, S_A, pseudo, state = best
        self.classifier.load_state(state)
        return NRGNNResult(self, logits, S_A, pseudo, key[0], epoch, hist)


@dataclass
class NRGNNResult:
    net: NRGNN
    logits: np.ndarray
    graph: WeightedGraph
    pseudo: PseudoLabelSet
    val_acc: float
    best_epoch: int
    history: dict[str, list[float]]

    def predict(self, g_eval=None) -> np.ndarray:
        """Classifier logits; ``None`` means S^A of the selected epoch."""
        if g_eval is None:
            return self.logits
        return np.asarray(self.net.classifier.forward(g_eval, _features(g_eval)).value)


def train_nrgnn(g: Graph, split: LabelSplit, cfg: TrainConfig = TrainConfig()) -> tuple[NRGNNResult, Metrics]:
    result = NRGNN(g, split.observed(), cfg).fit()
    pseudo = result.pseudo
    pseudo_acc = float(np.mean(split.true_labels[pseudo.nodes] == pseudo.classes)) if len(pseudo) else None
    metrics = Metrics(
        test_acc=evaluate(result, None, split),
        val_acc=result.val_acc,
        best_epoch=result.best_epoch,
        epochs_run=cfg.epochs,
        history=result.history,
        pseudo_count=len(pseudo),
        pseudo_acc=pseudo_acc,
        added_edges=result.graph.num_added,
    )
    return result, metrics


def variant_config(variant: str, cfg: TrainConfig) -> TrainConfig:
    if variant == "NRGNN":
        return cfg
    if variant == "NRGNN_GIN":
        return replace(cfg, classifier_kind="GIN")
    if variant == "no_edge_predictor":
        return replace(cfg, edge_source="cosine")
    if variant == "no_pseudo":
        return replace(cfg, pseudo_mode="none")
    if variant == "plain_miner":
        return replace(cfg, pseudo_mode="plain_gcn")
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def run_ablation(variant: str, g: Graph, split: LabelSplit, cfg: TrainConfig = TrainConfig()) -> Metrics:
    """Train one NRGNN variant.

    ``no_edge_predictor`` replaces learned scores by raw-feature cosine
    similarity; its edge threshold is chosen on validation from
    ``cfg.sim_grid`` (grid points adding too many edges are skipped).
    """
    vcfg = variant_config(variant, cfg)
    if variant != "no_edge_predictor":
        return train_nrgnn(g, split, vcfg)[1]
    obs = split.observed()
    cap = int(cfg.max_link_edges_per_node * g.num_nodes)
    best = None
    for thr in cfg.sim_grid:
        probe = cosine_link_graph(g, obs.unlabeled_idx, obs.train_idx, thr, cap)
        if probe is None:
            continue
        tcfg = replace(vcfg, thresholds=replace(vcfg.thresholds, edge=thr))
        m = train_nrgnn(g, split, tcfg)[1]
        if best is None or m.val_acc > best.val_acc:
            best = m
            best.variants["threshold"] = thr
    if best is None:
        raise ValueError("every similarity threshold in the grid exceeded the edge cap")
    return best
