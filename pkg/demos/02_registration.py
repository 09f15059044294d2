"""Registering curves to a common internal timeline.

Speakers pronounce the same sentence at different speeds, so the same
mouth movement happens at different clock times. Registration estimates a
monotone warp per video that aligns the tracks; here the true warps are
known and the estimate is compared with them.

Run: python demos/02_registration.py
"""

import numpy as np

from emofda.fdcore import Curve, TimeGrid
from emofda.registration import invert_warp, register_sample
from emofda.synth import random_warps

grid = TimeGrid.uniform(101)
t = grid.points


def template(s):
    # jaw opening (AU25-like): two syllable peaks
    return np.exp(-0.5 * ((s - 0.3) / 0.07) ** 2) + 0.7 * np.exp(-0.5 * ((s - 0.68) / 0.09) ** 2)


ss = np.random.SeedSequence(1)
rngs = [np.random.default_rng(s) for s in ss.spawn(12)]
warps = random_warps(12, 0.08, rngs, max_shift=0.1)
noise = np.random.default_rng(2)
curves = [Curve(grid, template(h(t)) + 0.01 * noise.normal(size=t.size)) for h in warps]

res = register_sample(curves)
print(f"registration: {res.n_iterations} iterations, converged={res.converged}")


def spread(values):
    return float(grid.weights @ np.var(values, axis=0, ddof=1))


before = spread([c.values for c in curves])
after = spread([c.values for c in res.registered])
print(f"cross-sectional variance: {before:.4f} before, {after:.4f} after "
      f"({1 - after / before:.1%} removed)")

# The estimated warps undo the simulated ones.
fine = np.linspace(0, 1, 201)
rmse = np.sqrt(np.mean([(est(fine) - invert_warp(h)(fine)) ** 2 for est, h in zip(res.warps, warps)]))
print(f"RMSE between estimated warps and the true inverse warps: {rmse:.4f}")

peaks = [t[np.argmax(c.values)] for c in curves]
aligned = [t[np.argmax(c.values)] for c in res.registered]
print(f"first-peak time: range {min(peaks):.2f}..{max(peaks):.2f} before, "
      f"{min(aligned):.2f}..{max(aligned):.2f} after")
