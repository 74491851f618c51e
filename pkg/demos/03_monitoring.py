"""Hotelling T² monitoring of invariant scores.

A PCA model fitted on in-control data sets a control limit; new cycles are
judged by the fraction of their samples that exceed it.
"""
import numpy as np

from stagewise.monitor import fit_monitor, hotelling_t2_limit, score_cycle

rng = np.random.default_rng(1)
mix = rng.standard_normal((3, 3))
train = [rng.standard_normal((300, 3)) @ mix for _ in range(15)]
model = fit_monitor(train, variance_target=0.85, alpha=0.05)
print(f"retained PCs R={model.R}, limit {model.t2_limit:.3f}, explained",
      np.round(model.explained_variance_ratio, 3))
print(f"large-sample limit for R={model.R}: {hotelling_t2_limit(model.R, 10**6, 0.05):.3f}")

same = rng.standard_normal((300, 3)) @ mix
shifted = same + np.array([1.5, 0.0, 0.0]) @ mix
for label, X in [("in control", same), ("shifted", shifted)]:
    s = score_cycle(model, X)
    print(f"{label:>10}: abnormality rate {s.abnormality_rate:.3f}")
