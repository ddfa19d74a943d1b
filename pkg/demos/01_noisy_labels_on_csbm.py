"""Train a plain GCN and NRGNN on a synthetic graph with corrupted labels.

Run: python demos/01_noisy_labels_on_csbm.py [noise_rate]
"""

import sys

from nrgnn.graph import generate_csbm, sample_split
from nrgnn.noise import NoiseSpec, apply_noise
from nrgnn.trainer import TrainConfig, train_nrgnn, train_plain

rate = float(sys.argv[1]) if len(sys.argv) > 1 else 0.3

# 600 nodes, 4 classes, ten times more intra- than inter-class edges
g, y = generate_csbm(600, 4, 0.02, 0.002, 50, 1.5, seed=0)
split = sample_split(g, y, label_rate=0.05, seed=0)
split = apply_noise(split, NoiseSpec("uniform", rate, seed=0))

lab = split.train_mask
print(f"{g.num_nodes} nodes, {g.num_edges} edges, {int(lab.sum())} labeled nodes")
print(f"{int((split.noisy_labels[lab] != y[lab]).sum())} of them carry a wrong label")

cfg = TrainConfig(seed=0)
plain = train_plain(g, split, cfg)
print(f"plain GCN  test accuracy {plain.test_acc:.3f}")

result, m = train_nrgnn(g, split, cfg)
print(f"NRGNN      test accuracy {m.test_acc:.3f} (best epoch {m.best_epoch})")
print(f"  {m.pseudo_count} pseudo labels, {m.pseudo_acc:.3f} of them correct")
print(f"  {m.added_edges} predicted edges in the final graph")
