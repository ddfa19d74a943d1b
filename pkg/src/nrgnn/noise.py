"""Uniform and pair label noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "uniform"
    rate: float = 0.2
    seed: int = 0
    pair_map: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "pair"):
            raise ValueError(f"unknown noise kind {self.kind!r}; expected 'uniform' or 'pair'")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"noise rate {self.rate} outside [0, 1]")

    def resolved_pair_map(self, num_classes: int) -> np.ndarray:
        """Explicit pair map, defaulting to the cyclic shift ``c -> c+1 mod C``."""
        if self.pair_map is None:
            return (np.arange(num_classes) + 1) % num_classes
        pm = np.asarray(self.pair_map, dtype=np.int64)
        if pm.shape != (num_classes,) or pm.min() < 0 or pm.max() >= num_classes:
            raise ValueError(f"pair_map must map each of {num_classes} classes into [0, {num_classes})")
        return pm

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "rate": self.rate, "seed": self.seed}
        if self.pair_map is not None:
            d["pair_map"] = list(self.pair_map)
        return d

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "NoiseSpec":
        """Parse ``kind:rate`` (e.g. ``uniform:0.2``)."""
        kind, _, rate = text.partition(":")
        return cls(kind=kind.strip(), rate=float(rate) if rate else 0.0, seed=seed)


def corrupt(labels: np.ndarray, mask: np.ndarray, spec: NoiseSpec, num_classes: int | None = None) -> np.ndarray:
    """Return a copy of ``labels`` with entries under ``mask`` flipped per ``spec``.

    Every masked label flips independently with probability ``spec.rate``;
    uniform noise picks one of the other ``C - 1`` classes uniformly, pair
    noise moves ``c`` to ``pair_map[c]``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    c = int(num_classes if num_classes is not None else labels[mask].max() + 1)
    rng = np.random.default_rng(spec.seed)
    idx = np.flatnonzero(mask)
    out = labels.copy()
    # draw both streams unconditionally so the flip pattern does not depend on kind
    flip = rng.random(idx.size) < spec.rate
    offset = rng.integers(1, c, size=idx.size) if c > 1 else np.zeros(idx.size, dtype=np.int64)
    if spec.rate == 0.0:
        return out
    orig = labels[idx]
    if spec.kind == "uniform":
        target = (orig + offset) % c
    else:
        pm = spec.resolved_pair_map(c)
        if np.any(pm == np.arange(c)):
            raise ValueError("pair_map has a fixed point; pair noise would not change those labels")
        target = pm[orig]
    out[idx] = np.where(flip, target, orig)
    return out


def apply_noise(split, spec: NoiseSpec):
    """Corrupt train and validation labels of a :class:`~nrgnn.graph.LabelSplit` once."""
    labeled = split.train_mask | split.val_mask
    noisy = corrupt(split.true_labels, labeled, spec, split.num_classes)
    return split.with_noisy(np.where(labeled, noisy, -1))
