"""Simulated datasets with known ground truth shared by several test files."""

import numpy as np

from emofda.fanova import build_design_matrix
from emofda.fdcore import Curve, TimeGrid
from emofda.synth import Bump, MeanSpec, SynthConfig, generate, random_warps


def two_bump(t):
    return np.exp(-0.5 * ((t - 0.3) / 0.07) ** 2) + 0.7 * np.exp(-0.5 * ((t - 0.68) / 0.09) ** 2)


def second_template(t):
    return np.sin(2 * np.pi * t) + 0.5 * np.exp(-0.5 * ((t - 0.5) / 0.1) ** 2)


def warped_sample(seed, n=10, warp_sd=0.08, noise=0.01, n_points=101, template=two_bump):
    """Curves ``x_i = g o h_i + noise`` with centered random warps ``h_i``."""
    grid = TimeGrid.uniform(n_points)
    ss = np.random.SeedSequence(seed)
    warp_seq, noise_seq = ss.spawn(2)
    rngs = [np.random.default_rng(s) for s in warp_seq.spawn(n)]
    warps = random_warps(n, warp_sd, rngs, max_shift=0.1)
    rng = np.random.default_rng(noise_seq)
    curves = [Curve(grid, template(h(grid.points)) + noise * rng.normal(size=n_points)) for h in warps]
    return curves, warps, grid


def cross_sectional_variance(values, grid):
    return float(grid.weights @ np.var(np.asarray(values), axis=0, ddof=1))


def bump_dataset(seed, K=6, G=7, sigma=0.2, g_tilde=3, amplitude=None, box=(0.4, 0.5), P=101, shape="box"):
    """FANOVA data with a bump in emotion ``g_tilde`` (no bump if amplitude is 0)."""
    amplitude = 5 * sigma if amplitude is None else amplitude
    specs = [[] for _ in range(G)]
    if amplitude:
        specs[g_tilde - 1].append(Bump((box[0] + box[1]) / 2, box[1] - box[0], amplitude, shape))
    cfg = SynthConfig(
        K=K,
        G=G,
        grid=TimeGrid.uniform(P),
        mu0_spec=MeanSpec(1.0, 0.5, (Bump(0.3, 0.1, 0.8),)),
        alpha_specs=tuple(tuple(s) for s in specs),
        noise_sd=sigma,
        seed=seed,
        recenter=False,
    )
    curves, truth = generate(cfg)
    Y = np.array([c.values[0] for c in curves])
    return Y, build_design_matrix(K, G), cfg.grid

