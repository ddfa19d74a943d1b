"""Look inside one forward pass: predicted edges, mined labels, loss terms.

Run: python demos/02_densified_graph.py
"""

import numpy as np

from nrgnn.graph import generate_csbm, sample_split
from nrgnn.noise import NoiseSpec, apply_noise
from nrgnn.trainer import NRGNN, TrainConfig

g, y = generate_csbm(300, 3, 0.04, 0.004, 20, 1.0, seed=1)
split = apply_noise(sample_split(g, y, 0.05, seed=1), NoiseSpec("uniform", 0.2, seed=1))

net = NRGNN(g, split.observed(), TrainConfig(seed=1, pretrain_epochs=50))
net.pretrain()
out = net.objective(np.random.default_rng(0))

def intra_fraction(pairs):
    if len(pairs) == 0:
        return float("nan")
    return float(np.mean(y[pairs[:, 0]] == y[pairs[:, 1]]))

print("base graph  intra-class edge ratio", round(intra_fraction(g.edges), 3))
print("S^L         added", out.S_L.num_added, "edges, intra-class ratio", round(intra_fraction(out.S_L.added), 3))
print("S^A         added", out.S_A.num_added, "edges, intra-class ratio", round(intra_fraction(out.S_A.added), 3))

ps = out.pseudo
if len(ps):
    print(f"miner       {len(ps)} pseudo labels, {np.mean(y[ps.nodes] == ps.classes):.3f} correct")
print(f"losses      L_G {out.L_G.item():.4f}  L_E {out.L_E.item():.4f}  L_P {out.L_P.item():.4f}")
