"""Unfolding a scalar trace into phase space.

A noisy sine stands in for a discharge voltage curve.  We pick the delay from
the mutual-information curve, then the dimension from the false-neighbour
fraction, and look at what the embedded matrix looks like.
"""
import numpy as np

from stagewise.psr import (EmbeddingParams, average_mutual_information, embed, false_nearest_fraction,
                           select_r, select_tau)

rng = np.random.default_rng(0)
t = np.arange(600)
x = np.sin(2 * np.pi * t / 25) + 0.02 * rng.standard_normal(t.size)

# Mutual information between x[k] and x[k + lag] drops as the lag decorrelates
# the pair; its first dip is the classic choice of delay.
ami = average_mutual_information(x, max_lag=20)
print("AMI by lag:", np.round(ami[:10], 3))
tau = select_tau(x, max_lag=50)
print("chosen tau:", tau)

# The false-neighbour fraction collapses once the embedding is wide enough
# that close points stay close when one more coordinate is added.
for m in range(1, 5):
    print(f"  m={m}: false neighbours {100 * false_nearest_fraction(x, tau, m):.1f}%")
r = select_r(x, tau)
print("chosen r:", r)

Y = embed(x, EmbeddingParams(tau, r))
print("embedded shape:", Y.shape, "(rows lose (r-1)*tau samples)")
print(Y[:3])
