"""How extra links move the expected class score of an unlabeled node.

Run: python demos/03_linking_expectations.py
"""

from dataclasses import replace

from nrgnn import theory as th

base = th.AggregationParams(n=3, m=2, h=0.8, p_t=0.6, p_f=0.1, E_sac=0.4, E_sbc=0.8, E_sdc=0.1, E_spc=0.7)
print(f"threshold on p_t for labeled links: {th.theorem1_threshold(base):.4f}")

for p_t in (0.3, base.p_t, 0.9):
    pr = replace(base, p_t=p_t)
    vals = th.with_k_scan(pr, th.expected_yuc_after_labeled_links, 6)
    trend = "rises" if th.strictly_increasing_in_k(th.expected_yuc_after_labeled_links, pr) else "does not rise"
    print(f"p_t={p_t:.1f} condition={th.theorem1_condition(pr)!s:5}  " + " ".join(f"{v:.3f}" for v in vals) + f"  ({trend})")

print("\npseudo-labeled links, E_spc = 0.7")
vals = th.with_k_scan(base, th.expected_yuc_after_pseudo_links, 6)
print("  " + " ".join(f"{v:.3f}" for v in vals))

mu, se = th.monte_carlo_yuc(base, 400_000, seed=0, k=2, scores="beta")
print(f"\nk=2 labeled links: closed form {th.expected_yuc_after_labeled_links(base, 2):.5f}, "
      f"Monte Carlo {mu:.5f} +- {se:.5f}")
