"""Multivariate functional PCA on a common sampling grid.

The covariance operator is discretized with trapezoidal weights ``W`` and the
symmetric matrix ``W^1/2 C W^1/2`` is eigendecomposed, so eigenfunctions come
out orthonormal in the quadrature inner product of the D-fold L2 space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fdcore import (
    BasisExpansion,
    BSplineBasis,
    Curve,
    MultiChannelCurve,
    TimeGrid,
    eval_expansion,
    smooth_curve,
)

__all__ = [
    "CovarianceKernel",
    "FpcaModel",
    "ScoreMatrix",
    "NegativeEigenvalueError",
    "stack_sample",
    "mean_function",
    "covariance_kernel",
    "fpca",
    "fpca_arrays",
    "pc_scores",
    "kl_reconstruct",
    "EXPLAINED_VARIANCE_DEFAULT",
]

EXPLAINED_VARIANCE_DEFAULT = 0.95
NEGATIVE_EIGENVALUE_TOL = 1e-8


class NegativeEigenvalueError(np.linalg.LinAlgError):
    """A covariance eigenvalue was negative beyond round-off."""


def _readonly(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CovarianceKernel:
    """Sample covariance ``values[p, q, i, j] = Cov(Y_i(t_p), Y_j(t_q))``."""

    grid: TimeGrid
    values: np.ndarray
    channel_labels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))

    def __call__(self, p: int, q: int) -> np.ndarray:
        return self.values[p, q]

    def as_matrix(self) -> np.ndarray:
        """(D*P, D*P) matrix indexed channel-major: row ``d * P + p``."""
        P, _, D, _ = self.values.shape
        return self.values.transpose(2, 0, 3, 1).reshape(D * P, D * P)


@dataclass(frozen=True, eq=False)
class FpcaModel:
    """Mean, eigenvalues and orthonormal eigenfunctions sampled on ``grid``.

    ``mean`` has shape (D, P) and ``eigenfunctions`` shape (J, D, P).
    ``total_variance`` is the sum of all (clipped) eigenvalues, not only the
    retained ones.
    """

    grid: TimeGrid
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    channel_labels: tuple
    total_variance: float

    def __post_init__(self):
        for name in ("mean", "eigenvalues", "eigenfunctions"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / self.total_variance

    def mean_curve(self) -> MultiChannelCurve:
        return MultiChannelCurve(self.grid, self.mean, self.channel_labels, "mean")

    def eigenfunction(self, j: int) -> MultiChannelCurve:
        return MultiChannelCurve(
            self.grid, self.eigenfunctions[j], self.channel_labels, f"f{j + 1}"
        )


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Principal component scores, one row per curve."""

    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", _readonly(np.atleast_2d(self.scores)))

    def __getitem__(self, i):
        return self.scores[i]

    def __len__(self):
        return self.scores.shape[0]


def stack_sample(sample: Sequence[MultiChannelCurve]):
    """Return ``(X, grid, labels)`` with ``X`` of shape (n, D, P)."""
    if len(sample) == 0:
        raise ValueError("the sample is empty")
    grid = sample[0].grid
    labels = sample[0].channel_labels
    for curve in sample[1:]:
        if curve.channel_labels != labels:
            raise ValueError(
                f"video {curve.video_id!r} has channels {curve.channel_labels}, "
                f"expected {labels}"
            )
        if curve.grid != grid:
            raise ValueError(f"video {curve.video_id!r} is on a different grid")
    return np.stack([c.values for c in sample]), grid, labels


def _mean_values(mean, n_channels, grid):
    if isinstance(mean, np.ndarray):
        values = np.atleast_2d(mean)
    else:
        rows = []
        for m in mean:
            if isinstance(m, BasisExpansion):
                rows.append(eval_expansion(m, grid).values)
            elif isinstance(m, Curve):
                if m.grid != grid:
                    raise ValueError("mean curve is on a different grid")
                rows.append(m.values)
            else:
                rows.append(np.asarray(m, dtype=float))
        values = np.vstack(rows)
    if values.shape != (n_channels, len(grid)):
        raise ValueError(
            f"mean has shape {values.shape}, expected {(n_channels, len(grid))}"
        )
    return values


def mean_function(
    sample: Sequence[MultiChannelCurve], basis: BSplineBasis, lam: float = 0.0
) -> tuple:
    """Channelwise cross-sectional average, smoothed into ``basis``."""
    X, grid, _ = stack_sample(sample)
    avg = X.mean(axis=0)
    return tuple(smooth_curve(Curve(grid, row), basis, lam) for row in avg)


def covariance_kernel(
    sample: Sequence[MultiChannelCurve], mean, grid: Optional[TimeGrid] = None
) -> CovarianceKernel:
    """Unbiased sample covariance kernel on every pair of grid points."""
    X, sample_grid, labels = stack_sample(sample)
    grid = sample_grid if grid is None else grid
    if grid != sample_grid:
        raise ValueError("sample curves are not sampled on the requested grid")
    n = X.shape[0]
    if n < 2:
        raise ValueError("covariance needs at least 2 curves")
    Xc = X - _mean_values(mean, X.shape[1], grid)
    values = np.einsum("nip,njq->pqij", Xc, Xc) / (n - 1)
    return CovarianceKernel(grid, values, labels)


def _choose_components(eigenvalues, fraction):
    total = eigenvalues.sum()
    if total <= 0:
        return 1
    cum = np.cumsum(eigenvalues) / total
    return int(np.searchsorted(cum, fraction - 1e-12) + 1)


def fpca_arrays(X: np.ndarray, weights: np.ndarray, n_components: Optional[int] = None):
    """FPCA on raw arrays.

    Parameters
    ----------
    X : ndarray, shape (n, D, P)
    weights : ndarray, shape (P,)
        Quadrature weights of the grid.
    n_components : int, optional
        Retained components; by default the fewest explaining 95% of the
        total variance.

    Returns
    -------
    mean : (D, P)
    eigenvalues : (J,)
    eigenfunctions : (J, D, P)
    scores : (n, J)
    total_variance : float
    """
    n, D, P = X.shape
    if n < 2:
        raise ValueError("FPCA needs at least 2 curves")
    max_j = min(n - 1, D * P)
    if n_components is not None and not 1 <= n_components <= max_j:
        raise ValueError(
            f"n_components must be in [1, {max_j}] for {n} curves, got {n_components}"
        )
    mean = X.mean(axis=0)
    Xc = (X - mean).reshape(n, D * P)
    sw = np.sqrt(np.tile(weights, D))
    A = Xc * sw
    S = A.T @ A / (n - 1)
    S = (S + S.T) / 2
    try:
        ev, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"covariance eigendecomposition failed: {exc}") from exc
    ev, V = ev[::-1], V[:, ::-1]
    tol = NEGATIVE_EIGENVALUE_TOL * max(1.0, ev[0])
    if ev[-1] < -tol:
        raise NegativeEigenvalueError(
            f"covariance eigenvalue {ev[-1]:.3e} is below the round-off tolerance"
        )
    ev = np.clip(ev, 0.0, None)
    J = n_components or min(_choose_components(ev, EXPLAINED_VARIANCE_DEFAULT), max_j)
    funcs = V[:, :J].T / sw
    # deterministic signs: the entry of largest magnitude is positive
    peak = np.argmax(np.abs(funcs), axis=1)
    signs = np.sign(funcs[np.arange(J), peak])
    signs[signs == 0] = 1.0
    funcs *= signs[:, None]
    scores = Xc @ (funcs * np.tile(weights, D)).T
    return mean, ev[:J], funcs.reshape(J, D, P), scores, float(ev.sum())


def fpca(
    sample: Sequence[MultiChannelCurve],
    n_components: Optional[int] = None,
    grid: Optional[TimeGrid] = None,
):
    """Functional PCA of a multichannel sample.

    Returns
    -------
    model : FpcaModel
    scores : ScoreMatrix
    """
    X, sample_grid, labels = stack_sample(sample)
    grid = sample_grid if grid is None else grid
    if grid != sample_grid:
        raise ValueError("sample curves are not sampled on the requested grid")
    mean, ev, funcs, scores, total = fpca_arrays(X, grid.weights, n_components)
    model = FpcaModel(grid, mean, ev, funcs, labels, total)
    return model, ScoreMatrix(scores)


def _check_compatible(curve, model):
    if curve.grid != model.grid:
        raise ValueError("curve is not sampled on the model grid")
    if curve.channel_labels != model.channel_labels:
        raise ValueError(
            f"curve channels {curve.channel_labels} do not match the model's "
            f"{model.channel_labels}"
        )


def pc_scores(curve: MultiChannelCurve, model: FpcaModel) -> np.ndarray:
    """Project the centered curve on each eigenfunction."""
    _check_compatible(curve, model)
    w = model.grid.weights
    centered = curve.values - model.mean
    return np.einsum("jdp,dp->j", model.eigenfunctions * w, centered)


def kl_reconstruct(model: FpcaModel, scores) -> MultiChannelCurve:
    """Mean plus score-weighted eigenfunctions, truncated at ``len(scores)``."""
    scores = np.atleast_1d(np.asarray(scores, dtype=float))
    if scores.ndim != 1 or scores.size > model.n_components:
        raise ValueError(
            f"got {scores.size} scores for a model with {model.n_components} components"
        )
    values = model.mean + np.einsum("j,jdp->dp", scores, model.eigenfunctions[: scores.size])
    return MultiChannelCurve(model.grid, values, model.channel_labels, "reconstruction")
