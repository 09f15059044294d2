"""Synthetic emotion-effect data with known ground truth.

Curves follow ``y_{k,g}(t) = mu0(t) + alpha_g(t) + eps_{k,g}(t)``, optionally
observed through a random time warp. Randomness comes from a PCG64 generator
seeded by ``numpy.random.SeedSequence(seed)``; the sequence is spawned into
one child stream per curve for the noise and one per curve for the warp, in
curve order (group-major, then k), so output does not depend on how curves
are generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .fdcore import MultiChannelCurve, TimeGrid
from .registration import Warp

__all__ = ["Bump", "MeanSpec", "SynthConfig", "GroundTruth", "generate", "random_warps"]

AU_RANGE = (0.0, 5.0)
WARP_BASIS_SIZE = 24


@dataclass(frozen=True)
class Bump:
    """A localized shape: ``gaussian`` (center, sd = width) or ``box``
    (constant ``amplitude`` on ``[center - width/2, center + width/2]``)."""

    center: float
    width: float
    amplitude: float
    shape: str = "gaussian"

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bump width must be positive")
        if self.shape not in ("gaussian", "box"):
            raise ValueError(f"unknown bump shape {self.shape!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "box":
            half = self.width / 2
            inside = (t >= self.center - half - 1e-12) & (t <= self.center + half + 1e-12)
            return np.where(inside, self.amplitude, 0.0)
        return self.amplitude * np.exp(-0.5 * ((t - self.center) / self.width) ** 2)


def _bumps(bumps):
    return tuple(b if isinstance(b, Bump) else Bump(*b) for b in bumps)


@dataclass(frozen=True)
class MeanSpec:
    """Linear trend plus a sum of bumps."""

    intercept: float = 1.0
    slope: float = 0.0
    bumps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "bumps", _bumps(self.bumps))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.intercept + self.slope * t
        for b in self.bumps:
            out = out + b(t)
        return out


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``alpha_specs[g - 1]`` lists the bumps of emotion g. With ``recenter``
    the effects are recentered so they sum to zero at every time point (the
    model's identifiability constraint); without it each effect is the raw
    difference between emotion g and the neutral group. ``channel_effects``
    overrides the effects for individual channels, and ``channel_means`` the
    grand mean. ``ar1`` is the lag-one correlation of the noise along the grid.
    """

    K: int = 6
    G: int = 7
    grid: TimeGrid = field(default_factory=lambda: TimeGrid.uniform(101))
    mu0_spec: MeanSpec = field(default_factory=MeanSpec)
    alpha_specs: tuple = ()
    noise_sd: float = 0.1
    warp_sd: float = 0.0
    seed: int = 0
    ar1: float = 0.0
    clamp: bool = False
    channel_labels: tuple = ("AU25",)
    channel_effects: Mapping = field(default_factory=dict)
    channel_means: Mapping = field(default_factory=dict)
    recenter: bool = True

    def __post_init__(self):
        if self.K < 1 or self.G < 1:
            raise ValueError("K and G must be positive")
        if self.noise_sd < 0 or self.warp_sd < 0:
            raise ValueError("noise_sd and warp_sd must be non-negative")
        if not -1 < self.ar1 < 1:
            raise ValueError("ar1 must lie in (-1, 1)")
        specs = tuple(_bumps(s) for s in self.alpha_specs) or tuple(() for _ in range(self.G))
        if len(specs) != self.G:
            raise ValueError(f"need {self.G} alpha specs, got {len(specs)}")
        object.__setattr__(self, "alpha_specs", specs)
        labels = tuple(self.channel_labels)
        if len(set(labels)) != len(labels) or not labels:
            raise ValueError("channel labels must be unique and non-empty")
        object.__setattr__(self, "channel_labels", labels)
        effects = {}
        for label, spec in dict(self.channel_effects).items():
            if label not in labels:
                raise ValueError(f"channel_effects names unknown channel {label!r}")
            spec = tuple(_bumps(s) for s in spec)
            if len(spec) != self.G:
                raise ValueError(f"channel {label!r} needs {self.G} alpha specs")
            effects[label] = spec
        object.__setattr__(self, "channel_effects", effects)
        for label in self.channel_means:
            if label not in labels:
                raise ValueError(f"channel_means names unknown channel {label!r}")
        if self.clamp:
            for label in labels:
                mu0, alphas = self.truth(label)
                lo, hi = (mu0 + alphas).min(), (mu0 + alphas).max()
                if lo < AU_RANGE[0] or hi > AU_RANGE[1]:
                    raise ValueError(
                        f"channel {label!r} ground truth spans [{lo:.3g}, {hi:.3g}], "
                        f"outside the AU range {AU_RANGE}"
                    )

    def truth(self, label: Optional[str] = None, t=None):
        """Grand mean (P,) and effects (G, P) of one channel,
        on the config grid unless times ``t`` are given."""
        label = self.channel_labels[0] if label is None else label
        t = self.grid.points if t is None else np.asarray(t, dtype=float)
        mu_spec = self.channel_means.get(label, self.mu0_spec)
        specs = self.channel_effects.get(label, self.alpha_specs)
        raw = np.array([sum((b(t) for b in spec), np.zeros_like(t)) for spec in specs])
        return mu_spec(t), (raw - raw.mean(axis=0)) if self.recenter else raw


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """``mu0[d]``, ``alphas[d]`` (G, P) per channel label and one warp per curve
    (``None`` entries when no warping was applied)."""

    mu0: dict
    alphas: dict
    warps: tuple


def random_warps(n: int, warp_sd: float, rngs, max_shift: float = 0.1) -> list:
    """Centered random warps ``t + a1 sin(pi t) + a2 sin(2 pi t)``.

    The coefficients are drawn with sd ``warp_sd``, centered across curves so
    the mean warp is the identity, and shrunk if needed so that every warp has
    slope above 0.2 and displacement at most ``max_shift``.
    """
    a = np.array([rng.normal(0.0, warp_sd, 2) for rng in rngs])
    a -= a.mean(axis=0)
    slope_loss = np.max(np.abs(a[:, 0]) * np.pi + np.abs(a[:, 1]) * 2 * np.pi, initial=0.0)
    t = np.linspace(0, 1, 401)
    disp = np.max(np.abs(np.outer(a[:, 0], np.sin(np.pi * t)) + np.outer(a[:, 1], np.sin(2 * np.pi * t))), initial=0.0)
    scale = min(1.0, 0.8 / slope_loss if slope_loss > 0 else 1.0, max_shift / disp if disp > 0 else 1.0)
    a *= scale
    return [
        Warp.from_function(
            lambda s, c=c: s + c[0] * np.sin(np.pi * s) + c[1] * np.sin(2 * np.pi * s),
            WARP_BASIS_SIZE,
        )
        for c in a
    ]


def _noise(rng, sd, ar1, shape):
    z = rng.standard_normal(shape)
    if ar1 == 0:
        return sd * z
    out = np.empty(shape)
    out[..., 0] = z[..., 0]
    root = np.sqrt(1 - ar1**2)
    for p in range(1, shape[-1]):
        out[..., p] = ar1 * out[..., p - 1] + root * z[..., p]
    return sd * out


def generate(config: SynthConfig):
    """Generate ``(G + 1) * K`` videos and their ground truth.

    Returns
    -------
    curves : list of MultiChannelCurve
        Group-major order: K neutral videos, then K per emotion.
    truth : GroundTruth
    """
    grid = config.grid
    t = grid.points
    labels = config.channel_labels
    truths = {lab: config.truth(lab) for lab in labels}
    n = (config.G + 1) * config.K
    seq = np.random.SeedSequence(config.seed)
    noise_seeds, warp_seeds = seq.spawn(2)
    noise_rngs = [np.random.Generator(np.random.PCG64(s)) for s in noise_seeds.spawn(n)]
    warp_rngs = [np.random.Generator(np.random.PCG64(s)) for s in warp_seeds.spawn(n)]

    if config.warp_sd > 0:
        warps = random_warps(n, config.warp_sd, warp_rngs)
        times = [w(t) for w in warps]
    else:
        warps = [None] * n
        times = [t] * n

    curves = []
    i = 0
    for g in range(config.G + 1):
        for k in range(1, config.K + 1):
            rows = []
            for lab in labels:
                mu0, alphas = truths[lab] if warps[i] is None else config.truth(lab, times[i])
                rows.append(mu0 + (alphas[g - 1] if g > 0 else 0.0))
            values = np.array(rows) + _noise(noise_rngs[i], config.noise_sd, config.ar1, (len(labels), t.size))
            if config.clamp:
                values = np.clip(values, *AU_RANGE)
            curves.append(MultiChannelCurve(grid, values, labels, f"g{g}_k{k:02d}", g))
            i += 1
    truth = GroundTruth(
        {lab: truths[lab][0] for lab in labels},
        {lab: truths[lab][1] for lab in labels},
        tuple(warps),
    )
    return curves, truth
