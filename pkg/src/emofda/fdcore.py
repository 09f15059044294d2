"""Discrete curves, B-spline bases, penalized smoothing and L2 inner products.

Everything here is immutable: arrays stored on the dataclasses are copied and
flagged read-only at construction, so instances can be shared across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "TimeGrid",
    "Curve",
    "MultiChannelCurve",
    "BSplineBasis",
    "BasisExpansion",
    "SmoothingRankError",
    "DomainError",
    "trapezoid_weights",
    "make_bspline_basis",
    "eval_basis",
    "basis_matrix",
    "penalty_matrix",
    "smooth_curve",
    "eval_expansion",
    "l2_inner_product",
]

_DOMAIN_SLACK = 1e-12


class DomainError(ValueError):
    """Raised when evaluation points fall outside a basis or grid domain."""


class SmoothingRankError(np.linalg.LinAlgError):
    """Raised when the penalized normal equations are singular."""

    def __init__(self, rank, n_basis):
        self.rank = rank
        self.n_basis = n_basis
        super().__init__(
            f"smoothing system is rank deficient (rank {rank} < {n_basis} basis "
            "functions); add grid points or use a positive smoothing parameter"
        )


def _frozen(values, dtype=float):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Ordered sampling times on ``[0, domain_end]``."""

    points: np.ndarray
    domain_end: float = 1.0

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a time grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("time grid points must be finite")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("time grid points must be strictly increasing")
        end = float(self.domain_end)
        if not end > 0:
            raise ValueError(f"domain_end must be positive, got {end}")
        if pts[0] < 0 or pts[-1] > end:
            raise ValueError(
                f"time grid [{pts[0]}, {pts[-1]}] is outside the domain [0, {end}]"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "domain_end", end)

    @classmethod
    def uniform(cls, n_points: int = 101, domain_end: float = 1.0) -> "TimeGrid":
        return cls(np.linspace(0.0, domain_end, n_points), domain_end)

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.domain_end == other.domain_end and np.array_equal(
            self.points, other.points
        )

    __hash__ = None

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.points)


def trapezoid_weights(points) -> np.ndarray:
    """Trapezoidal quadrature weights for the sample locations ``points``."""
    pts = np.asarray(points, dtype=float)
    w = np.zeros_like(pts)
    dt = np.diff(pts)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


@dataclass(frozen=True, eq=False)
class Curve:
    """One sampled trajectory, e.g. an action-unit intensity over a video."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (len(self.grid),):
            raise ValueError(
                f"curve has {vals.size} values for a grid of {len(self.grid)} points"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class MultiChannelCurve:
    """D curves sharing one time grid, plus the video id and emotion group.

    ``values`` has shape ``(D, P)``; ``channels`` exposes the rows as
    :class:`Curve` objects.
    """

    grid: TimeGrid
    values: np.ndarray
    channel_labels: tuple
    video_id: str = ""
    group: int = 0

    def __post_init__(self):
        vals = _frozen(np.atleast_2d(self.values))
        labels = tuple(str(lab) for lab in self.channel_labels)
        if vals.shape[0] < 1 or vals.shape[0] != len(labels):
            raise ValueError(
                f"{vals.shape[0]} channels but {len(labels)} channel labels"
            )
        if len(set(labels)) != len(labels):
            raise ValueError(f"channel labels must be unique: {labels}")
        if vals.shape[1] != len(self.grid):
            raise ValueError(
                f"channels have {vals.shape[1]} samples for a grid of "
                f"{len(self.grid)} points"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite values in video {self.video_id!r}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "channel_labels", labels)
        object.__setattr__(self, "group", int(self.group))

    @classmethod
    def from_curves(cls, curves: Sequence[Curve], labels, video_id="", group=0):
        grid = curves[0].grid
        for c in curves[1:]:
            if c.grid != grid:
                raise ValueError("all channels must share the identical grid")
        return cls(grid, np.vstack([c.values for c in curves]), tuple(labels), video_id, group)

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> tuple:
        return tuple(Curve(self.grid, row) for row in self.values)

    def channel(self, label) -> Curve:
        try:
            idx = self.channel_labels.index(label)
        except ValueError:
            raise KeyError(
                f"channel {label!r} not present in video {self.video_id!r}"
            ) from None
        return Curve(self.grid, self.values[idx])


@dataclass(frozen=True, eq=False)
class BSplineBasis:
    """B-spline basis of a given order with clamped boundary knots on [0, T]."""

    order: int
    interior_knots: np.ndarray
    domain_end: float = 1.0
    knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 2:
            raise ValueError(f"order must be an integer >= 2, got {self.order}")
        end = float(self.domain_end)
        if not end > 0:
            raise ValueError(f"domain_end must be positive, got {end}")
        inner = _frozen(self.interior_knots)
        if inner.size and (
            np.any(np.diff(inner) < 0) or inner[0] <= 0 or inner[-1] >= end
        ):
            raise ValueError("interior knots must be ordered and inside (0, T)")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "domain_end", end)
        object.__setattr__(self, "interior_knots", inner)
        full = np.concatenate(
            [np.zeros(self.order), inner, np.full(self.order, end)]
        )
        object.__setattr__(self, "knots", _frozen(full))

    @property
    def n_basis(self) -> int:
        return self.order + self.interior_knots.size

    def __eq__(self, other):
        if not isinstance(other, BSplineBasis):
            return NotImplemented
        return (
            self.order == other.order
            and self.domain_end == other.domain_end
            and np.array_equal(self.interior_knots, other.interior_knots)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BasisExpansion:
    """Coefficients of a smooth function in a :class:`BSplineBasis`."""

    basis: BSplineBasis
    coefficients: np.ndarray

    def __post_init__(self):
        coef = _frozen(self.coefficients)
        if coef.shape != (self.basis.n_basis,):
            raise ValueError(
                f"expected {self.basis.n_basis} coefficients, got shape {coef.shape}"
            )
        if not np.all(np.isfinite(coef)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coefficients", coef)

    def __call__(self, t) -> np.ndarray:
        return basis_matrix(self.basis, t) @ self.coefficients


def make_bspline_basis(domain_end: float, n_basis: int, order: int = 4) -> BSplineBasis:
    """Build a basis of ``n_basis`` B-splines with equally spaced interior knots."""
    if not domain_end > 0:
        raise ValueError(f"domain_end must be positive, got {domain_end}")
    if order < 2:
        raise ValueError(f"order must be >= 2, got {order}")
    if n_basis < order:
        raise ValueError(f"n_basis ({n_basis}) must be at least the order ({order})")
    n_inner = n_basis - order
    inner = domain_end * np.arange(1, n_inner + 1) / (n_inner + 1)
    return BSplineBasis(order, inner, domain_end)


def _as_points(basis, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~np.isfinite(t)) or np.any(t < -_DOMAIN_SLACK) or np.any(
        t > basis.domain_end + _DOMAIN_SLACK
    ):
        raise DomainError(
            f"evaluation points must lie in [0, {basis.domain_end}]"
        )
    return np.clip(t, 0.0, basis.domain_end)


def _cox_de_boor(knots, order, t):
    """Values of all order-``order`` B-splines on ``knots`` at points ``t``."""
    n0 = knots.size - 1
    left, right = knots[:-1], knots[1:]
    B = ((t[:, None] >= left) & (t[:, None] < right)).astype(float)
    # the right end of the domain belongs to the last non-degenerate span
    last = np.nonzero(right > left)[0][-1]
    at_end = t >= knots[-1]
    B[at_end] = 0.0
    B[at_end, last] = 1.0
    for k in range(2, order + 1):
        n = n0 - k + 1
        d1 = knots[k - 1 : k - 1 + n] - knots[:n]
        d2 = knots[k : k + n] - knots[1 : 1 + n]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(d1 > 0, (t[:, None] - knots[:n]) / d1, 0.0)
            b = np.where(d2 > 0, (knots[k : k + n] - t[:, None]) / d2, 0.0)
        B = a * B[:, :n] + b * B[:, 1 : n + 1]
    return B


def basis_matrix(basis: BSplineBasis, t, deriv: int = 0) -> np.ndarray:
    """Matrix of basis values (or derivatives) with one row per point in ``t``."""
    t = _as_points(basis, t)
    k = basis.order
    if deriv >= k:
        return np.zeros((t.size, basis.n_basis))
    knots = basis.knots
    B = _cox_de_boor(knots, k - deriv, t)
    # raise the order back up through the derivative recursion
    for m in range(k - deriv + 1, k + 1):
        n = knots.size - m
        d1 = knots[m - 1 : m - 1 + n] - knots[:n]
        d2 = knots[m : m + n] - knots[1 : 1 + n]
        with np.errstate(divide="ignore", invalid="ignore"):
            c1 = np.where(d1 > 0, (m - 1) / d1, 0.0)
            c2 = np.where(d2 > 0, (m - 1) / d2, 0.0)
        B = c1 * B[:, :n] - c2 * B[:, 1 : n + 1]
    return B


def eval_basis(basis: BSplineBasis, t: float) -> np.ndarray:
    """Values of every basis function at a single point ``t``."""
    if np.ndim(t) != 0:
        raise ValueError("eval_basis takes a scalar; use basis_matrix for arrays")
    return basis_matrix(basis, t)[0]


def penalty_matrix(basis: BSplineBasis, deriv: int = 2) -> np.ndarray:
    """Gram matrix of the ``deriv``-th derivatives, integrated exactly.

    Gauss-Legendre with ``order`` nodes per knot span integrates the piecewise
    polynomial products without error.
    """
    spans = np.unique(basis.knots)
    nodes, wts = np.polynomial.legendre.leggauss(max(basis.order, 2))
    lo, hi = spans[:-1], spans[1:]
    half = (hi - lo)[:, None] / 2
    t = ((lo + hi)[:, None] / 2 + half * nodes).ravel()
    w = (half * wts).ravel()
    D = basis_matrix(basis, t, deriv=deriv)
    R = D.T @ (w[:, None] * D)
    return (R + R.T) / 2


def smooth_curve(raw: Curve, basis: BSplineBasis, lam: float = 0.0) -> BasisExpansion:
    """Penalized least-squares fit of ``raw`` in ``basis``.

    Minimizes ``sum_i (raw_i - f(t_i))**2 + lam * int f''(t)**2 dt``.

    Raises
    ------
    SmoothingRankError
        If the system is singular (typically too few points with ``lam == 0``).
    """
    if lam < 0:
        raise ValueError(f"smoothing parameter must be >= 0, got {lam}")
    if raw.grid.points[-1] > basis.domain_end + _DOMAIN_SLACK:
        raise DomainError("curve grid extends beyond the basis domain")
    B = basis_matrix(basis, raw.grid.points)
    y = raw.values
    if lam > 0:
        ev, V = np.linalg.eigh(penalty_matrix(basis))
        root = np.sqrt(np.clip(ev, 0.0, None))[:, None] * V.T
        A = np.vstack([B, np.sqrt(lam) * root])
        y = np.concatenate([y, np.zeros(basis.n_basis)])
    else:
        A = B
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < basis.n_basis:
        raise SmoothingRankError(rank, basis.n_basis)
    return BasisExpansion(basis, coef)


def eval_expansion(fd: BasisExpansion, grid: TimeGrid) -> Curve:
    """Evaluate an expansion on ``grid``."""
    if grid.points[-1] > fd.basis.domain_end + _DOMAIN_SLACK:
        raise DomainError(
            f"grid reaches {grid.points[-1]} beyond the basis domain "
            f"[0, {fd.basis.domain_end}]"
        )
    return Curve(grid, basis_matrix(fd.basis, grid.points) @ fd.coefficients)


CurveLike = Union[Curve, MultiChannelCurve, BasisExpansion]


def l2_inner_product(a: CurveLike, b: CurveLike, n_points: int | None = None) -> float:
    """L2 inner product by the trapezoidal rule.

    Sampled curves must share a grid. Basis expansions must share a basis and
    are evaluated on ``n_points`` equally spaced points (default four times the
    basis size, plus one). Multichannel curves use the D-fold product space.
    """
    if isinstance(a, BasisExpansion) and isinstance(b, BasisExpansion):
        if a.basis != b.basis:
            raise ValueError("expansions are in different bases")
        n = n_points or 4 * a.basis.n_basis + 1
        grid = TimeGrid.uniform(n, a.basis.domain_end)
        a, b = eval_expansion(a, grid), eval_expansion(b, grid)
    if type(a) is not type(b) or isinstance(a, BasisExpansion):
        raise TypeError(
            f"cannot take the inner product of {type(a).__name__} and {type(b).__name__}"
        )
    if a.grid != b.grid:
        raise ValueError("curves are sampled on different grids")
    if isinstance(a, MultiChannelCurve) and a.values.shape != b.values.shape:
        raise ValueError("multichannel curves have different channel counts")
    w = a.grid.weights
    return float(np.sum(w * (a.values * b.values)))
