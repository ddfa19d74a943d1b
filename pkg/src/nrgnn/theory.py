"""Closed forms for one aggregation step around an unlabeled node, and a
Monte Carlo oracle that samples the neighbour mixture directly.

A node ``v_u`` of class ``c`` has ``n`` unlabeled neighbours and ``m``
labeled ones. Its class-``c`` score ``y_uc`` is the mean of the neighbour
scores. Unlabeled neighbours contribute ``s_ac``; a labeled neighbour
contributes ``s_bc`` when its (possibly noisy) label is ``c`` and ``s_dc``
otherwise. It carries label ``c`` with probability ``p = h p_t + (1-h) p_f``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np


@dataclass(frozen=True)
class AggregationParams:
    n: int
    m: int
    h: float
    p_t: float
    p_f: float
    E_sac: float
    E_sbc: float
    E_sdc: float
    E_spc: float | None = None

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError("neighbour counts must be non-negative")
        for name in ("h", "p_t", "p_f"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")

    @property
    def p(self) -> float:
        """Probability that a labeled neighbour carries label ``c``."""
        return self.h * self.p_t + (1.0 - self.h) * self.p_f

    @property
    def degree(self) -> int:
        return self.n + self.m

    def satisfies_assumptions(self) -> bool:
        return self.p_t > self.p_f and self.E_sbc > self.E_sac > self.E_sdc


def _check_degree(d: int) -> None:
    if d <= 0:
        raise ValueError("node has no neighbours (m = n = 0)")


def expected_yuc(params: AggregationParams) -> float:
    pr = params
    _check_degree(pr.degree)
    p = pr.p
    num = pr.n * pr.E_sac + p * pr.m * pr.E_sbc + (1.0 - p) * pr.m * pr.E_sdc
    return num / pr.degree


def expected_yuc_after_labeled_links(params: AggregationParams, k: int) -> float:
    """Expectation after linking ``k`` labeled nodes of the same true class."""
    if k < 0:
        raise ValueError("k must be non-negative")
    pr = params
    _check_degree(pr.degree)
    d = pr.degree
    extra = k * pr.p_t * pr.E_sbc + k * (1.0 - pr.p_t) * pr.E_sdc
    return (d * expected_yuc(pr) + extra) / (d + k)


def theorem1_threshold(params: AggregationParams) -> float:
    pr = params
    if pr.E_sbc == pr.E_sdc:
        raise ValueError("E_sbc equals E_sdc; threshold undefined")
    return (pr.E_sac - pr.E_sdc) / (pr.E_sbc - pr.E_sdc)


def theorem1_condition(params: AggregationParams) -> bool:
    """True iff ``p_t`` strictly exceeds the labeled-link threshold."""
    return bool(params.p_t > theorem1_threshold(params))


def theorem2_condition(params: AggregationParams) -> bool:
    pr = params
    if pr.E_spc is None:
        raise ValueError("E_spc is not set")
    return bool(pr.E_spc > max(pr.E_sac, pr.p * pr.E_sbc + (1.0 - pr.p) * pr.E_sdc))


def expected_yuc_after_pseudo_links(params: AggregationParams, k: int) -> float:
    """Expectation after linking ``k`` pseudo-labeled nodes scoring ``E_spc``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    pr = params
    if pr.E_spc is None:
        raise ValueError("E_spc is not set")
    _check_degree(pr.degree)
    d = pr.degree
    return d / (d + k) * expected_yuc(pr) + k / (d + k) * pr.E_spc


# Monte Carlo oracle

def _draw_scores(rng, mean: float, count: np.ndarray, dist: str, concentration: float, denom: int) -> np.ndarray:
    """Per-draw sum of ``count`` i.i.d. scores with the given mean, over ``denom``."""
    if dist == "point":
        return (count / denom) * mean
    if not 0.0 < mean < 1.0:
        raise ValueError(f"beta scores need a mean in (0, 1), got {mean}")
    a, b = mean * concentration, (1.0 - mean) * concentration
    # sum of `count` Beta draws, drawn per slot so counts may differ per row
    top = int(count.max()) if count.size else 0
    if top == 0:
        return np.zeros(count.shape)
    s = rng.beta(a, b, size=(count.size, top))
    s[np.arange(top)[None, :] >= count[:, None]] = 0.0
    return s.sum(axis=1) / denom


def _shard(params: AggregationParams, size: int, seed, k: int, link: str, dist: str, concentration: float):
    pr = params
    rng = np.random.default_rng(seed)
    d = pr.degree + k
    # labeled neighbours: intra-class with prob h, then labeled c with p_t or p_f
    intra = rng.random((size, pr.m)) < pr.h
    as_c = rng.random((size, pr.m)) < np.where(intra, pr.p_t, pr.p_f)
    nb = as_c.sum(axis=1)
    nd = pr.m - nb
    total = _draw_scores(rng, pr.E_sac, np.full(size, pr.n), dist, concentration, d)
    total = total + _draw_scores(rng, pr.E_sbc, nb, dist, concentration, d)
    total = total + _draw_scores(rng, pr.E_sdc, nd, dist, concentration, d)
    if k:
        if link == "labeled":
            # linked nodes share the true class, so their label is c w.p. p_t
            kb = (rng.random((size, k)) < pr.p_t).sum(axis=1)
            total = total + _draw_scores(rng, pr.E_sbc, kb, dist, concentration, d)
            total = total + _draw_scores(rng, pr.E_sdc, k - kb, dist, concentration, d)
        else:
            total = total + _draw_scores(rng, pr.E_spc, np.full(size, k), dist, concentration, d)
    y = total
    # a constant sample (point masses, no randomness left) keeps its exact value
    mu = float(y[0]) if np.all(y == y[0]) else float(y.mean())
    return size, mu, float(np.square(y - mu).sum())


def monte_carlo_yuc(
    params: AggregationParams,
    draws: int,
    seed: int,
    k: int = 0,
    link: str = "labeled",
    scores: str = "point",
    concentration: float = 8.0,
    shard_size: int = 100_000,
    mapper: Callable | None = None,
) -> tuple[float, float]:
    """Sample ``y_uc`` and return ``(mean, standard error)``.

    Draws are split into shards with seeds spawned from ``seed``; shard
    results are reduced in shard order, so passing a parallel ``mapper``
    (e.g. ``executor.map``) gives the same answer as the default ``map``.
    ``scores`` is ``"point"`` (score = its mean) or ``"beta"``.
    """
    if draws < 1:
        raise ValueError("draws must be at least 1")
    if link not in ("labeled", "pseudo"):
        raise ValueError(f"unknown link kind {link!r}")
    if scores not in ("point", "beta"):
        raise ValueError(f"unknown score distribution {scores!r}")
    if link == "pseudo" and k and params.E_spc is None:
        raise ValueError("E_spc is not set")
    _check_degree(params.degree + k)
    sizes = [shard_size] * (draws // shard_size)
    if draws % shard_size:
        sizes.append(draws % shard_size)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    run = mapper or map
    parts = list(run(lambda a: _shard(params, a[0], a[1], k, link, scores, concentration), zip(sizes, seeds)))
    # pairwise merge of (count, mean, M2), in shard order
    count, mean, m2 = parts[0]
    for c, mu, q in parts[1:]:
        tot = count + c
        delta = mu - mean
        mean += delta * c / tot
        m2 += q + delta * delta * count * c / tot
        count = tot
    if draws == 1:
        return mean, 0.0
    se = float(np.sqrt(m2 / (draws - 1) / draws))
    # point masses can leave round-off in a constant sample
    if se < 1e-12 * max(1.0, abs(mean)):
        se = 0.0
    return mean, se


# randomized grids and checks

def random_params(rng: np.random.Generator, with_pseudo: bool = True) -> AggregationParams:
    """A parameter point satisfying p_t > p_f and E_sbc > E_sac > E_sdc."""
    n = int(rng.integers(0, 8))
    m = int(rng.integers(1 if n == 0 else 0, 8))
    e = np.sort(rng.uniform(0.02, 0.98, size=3))
    p_f, p_t = np.sort(rng.uniform(0.0, 1.0, size=2))
    if p_t == p_f:
        p_t = min(1.0, p_f + 1e-3)
    E_spc = float(rng.uniform(0.02, 0.98)) if with_pseudo else None
    return AggregationParams(n, m, float(rng.uniform()), float(p_t), float(p_f), float(e[1]), float(e[2]), float(e[0]), E_spc)


def strictly_increasing_in_k(fn: Callable[[AggregationParams, int], float], params: AggregationParams, k_max: int = 20) -> bool:
    vals = [fn(params, k) for k in range(k_max + 1)]
    return all(b > a for a, b in zip(vals, vals[1:]))


@dataclass(frozen=True)
class CheckRow:
    point: int
    quantity: str
    k: int
    closed_form: float
    mc_mean: float
    mc_stderr: float
    within_3sigma: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_grid(points: int = 20, draws: int = 50_000, seed: int = 0, scores: str = "beta", k: int = 3, mapper=None):
    """Closed forms against the oracle on ``points`` random parameter sets.

    Returns ``(params_list, rows, monotone)``. ``monotone`` lists, per
    point, whether each theorem's monotonicity held where its condition did
    (``None`` when the condition fails at that point).
    """
    rng = np.random.default_rng(seed)
    params_list = [random_params(rng) for _ in range(points)]
    rows, monotone = [], []
    for i, pr in enumerate(params_list):
        checks = [
            ("yuc", 0, "labeled", expected_yuc(pr)),
            ("yuc_labeled_links", k, "labeled", expected_yuc_after_labeled_links(pr, k)),
            ("yuc_pseudo_links", k, "pseudo", expected_yuc_after_pseudo_links(pr, k)),
        ]
        for j, (name, kk, link, cf) in enumerate(checks):
            mu, se = monte_carlo_yuc(pr, draws, seed=[seed, i, j], k=kk, link=link, scores=scores, mapper=mapper)
            ok = abs(mu - cf) <= 3.0 * se if se > 0 else abs(mu - cf) <= 1e-9
            rows.append(CheckRow(i, name, kk, cf, mu, se, bool(ok)))
        t1 = strictly_increasing_in_k(expected_yuc_after_labeled_links, pr) if theorem1_condition(pr) else None
        t2 = strictly_increasing_in_k(expected_yuc_after_pseudo_links, pr) if theorem2_condition(pr) else None
        monotone.append((t1, t2))
    return params_list, rows, monotone


def converse_probes(params: Iterable[AggregationParams]) -> list[AggregationParams]:
    """Points where the labeled-link condition fails and the sequence does not increase."""
    return [
        pr for pr in params
        if not theorem1_condition(pr) and not strictly_increasing_in_k(expected_yuc_after_labeled_links, pr)
    ]


def with_k_scan(params: AggregationParams, fn, k_max: int = 20) -> list[float]:
    return [fn(params, k) for k in range(k_max + 1)]


__all__ = [
    "AggregationParams",
    "expected_yuc",
    "expected_yuc_after_labeled_links",
    "expected_yuc_after_pseudo_links",
    "theorem1_condition",
    "theorem1_threshold",
    "theorem2_condition",
    "monte_carlo_yuc",
    "random_params",
    "strictly_increasing_in_k",
    "check_grid",
    "converse_probes",
    "with_k_scan",
]
