"""Smoothing noisy AU tracks and summarizing them with functional PCA.

A sample of noisy intensity tracks is simulated, each track is smoothed
with a penalized cubic B-spline, and the smoothed sample is decomposed into
a mean curve plus a few principal modes of variation.

Run: python demos/01_smoothing_and_fpca.py
"""

import numpy as np

from emofda.fdcore import Curve, MultiChannelCurve, TimeGrid, eval_expansion, make_bspline_basis, smooth_curve
from emofda.fpca import fpca, kl_reconstruct, pc_scores

rng = np.random.default_rng(0)
raw_grid = TimeGrid.uniform(110)  # one video, 110 frames, time rescaled to [0, 1]
t = raw_grid.points

# Each track: a smile-like bump whose height and onset vary across videos.
heights = rng.uniform(0.8, 2.0, 30)
onsets = rng.uniform(0.44, 0.50, 30)
clean = heights[:, None] * np.exp(-0.5 * ((t - onsets[:, None]) / 0.08) ** 2)
noisy = clean + 0.15 * rng.normal(size=clean.shape)

# Smooth every track with 20 cubic B-splines and a light roughness penalty.
basis = make_bspline_basis(1.0, 20)
grid = TimeGrid.uniform(101)
smoothed = [eval_expansion(smooth_curve(Curve(raw_grid, y), basis, lam=1e-6), grid) for y in noisy]

truth = heights[:, None] * np.exp(-0.5 * ((grid.points - onsets[:, None]) / 0.08) ** 2)
err = np.sqrt(np.mean([(s.values - y) ** 2 for s, y in zip(smoothed, truth)]))
print(f"smoothing: RMS error vs the clean tracks {err:.3f} (noise sd 0.15)")

# Functional PCA; the number of components defaults to 95% explained variance.
sample = [MultiChannelCurve(grid, s.values[None, :], ("AU12",), f"v{i}") for i, s in enumerate(smoothed)]
model, scores = fpca(sample)
print(f"fpca: {model.n_components} components explain "
      f"{model.explained_variance_ratio.sum():.1%} of the variance")
for j, r in enumerate(model.explained_variance_ratio):
    print(f"  component {j + 1}: {r:.1%}")

# How the leading scores relate to the simulated bump height and onset.
s = scores.scores
for j in range(min(2, model.n_components)):
    print(f"score {j + 1}: corr with height {np.corrcoef(s[:, j], heights)[0, 1]:+.2f}, "
          f"with onset {np.corrcoef(s[:, j], onsets)[0, 1]:+.2f}")

# A curve is rebuilt from its scores (Karhunen-Loeve expansion).
rebuilt = kl_reconstruct(model, pc_scores(sample[0], model))
print(f"reconstruction error of video 0 with {model.n_components} components: "
      f"{np.sqrt(np.mean((rebuilt.values - sample[0].values) ** 2)):.3f}")
