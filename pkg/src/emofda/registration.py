"""Curve registration by FPCA templates and monotone spline time warps.

A warp ``h`` maps internal (registered) time to chronological time on [0, 1];
the registered version of an observed curve ``x`` is ``x(h(t))``. Warps are
cubic B-splines whose coefficients are cumulative sums of softmax weights, so
every parameter vector gives a strictly increasing map with ``h(0) = 0`` and
``h(1) = 1`` exactly.

The estimation alternates three steps until the objective stops decreasing:

1. FPCA of the currently registered curves gives each curve a template, its
   own Karhunen-Loeve reconstruction with ``n_components`` terms.
2. Each warp is refit by Levenberg-Marquardt to minimize
   ``||x_i o h - template_i||^2 + kappa * ||h - id||^2``.
3. The warps are recentered so their pointwise mean is the identity.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .fdcore import (
    BasisExpansion,
    BSplineBasis,
    Curve,
    MultiChannelCurve,
    TimeGrid,
    basis_matrix,
    make_bspline_basis,
)
from .fpca import FpcaModel, fpca_arrays

__all__ = [
    "Warp",
    "WarpError",
    "WarpInversionError",
    "RegistrationConfig",
    "RegistrationResult",
    "apply_warp",
    "invert_warp",
    "compose_warps",
    "register_sample",
    "register_by_reference",
]

log = logging.getLogger(__name__)

_MONOTONE_CHECK_POINTS = 200
_MIN_INCREMENT = 1e-13


class WarpError(ValueError):
    """A warp violates monotonicity or endpoint pinning."""


class WarpInversionError(ValueError):
    """The inverse warp could not reach the requested tolerance."""

    def __init__(self, achieved, tolerance, n_basis):
        self.achieved = achieved
        self.tolerance = tolerance
        self.n_basis = n_basis
        super().__init__(
            f"inverse warp error {achieved:.3e} exceeds tolerance {tolerance:.3e} "
            f"with {n_basis} basis functions"
        )


def _softmax(theta):
    e = np.exp(theta - theta.max())
    return e / e.sum()


def _cumulative(weights):
    c = np.concatenate([[0.0], np.cumsum(weights)])
    c[-1] = 1.0
    return c


@dataclass(frozen=True, eq=False)
class Warp:
    """Monotone time warp on [0, 1].

    ``coefficients`` are log-increments: the spline coefficients are
    ``[0, cumsum(softmax(coefficients))]``.
    """

    basis: BSplineBasis
    coefficients: np.ndarray
    spline_coefficients: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.basis.domain_end != 1.0:
            raise WarpError("warps live on the normalized domain [0, 1]")
        theta = np.array(self.coefficients, dtype=float)
        if theta.shape != (self.basis.n_basis - 1,):
            raise WarpError(
                f"expected {self.basis.n_basis - 1} log-increments, got {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise WarpError("warp coefficients must be finite")
        theta.setflags(write=False)
        c = _cumulative(_softmax(theta))
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", theta)
        object.__setattr__(self, "spline_coefficients", c)

    @classmethod
    def identity(cls, n_basis: int = 8, order: int = 4) -> "Warp":
        basis = make_bspline_basis(1.0, n_basis, order)
        # Greville abscissae reproduce the identity exactly
        k = basis.knots
        grev = np.array([k[i + 1 : i + order].mean() for i in range(n_basis)])
        return cls.from_spline_coefficients(basis, grev)

    @classmethod
    def from_spline_coefficients(cls, basis: BSplineBasis, coef) -> "Warp":
        """Build from non-decreasing spline coefficients running from 0 to 1."""
        coef = np.asarray(coef, dtype=float)
        inc = np.diff(coef)
        if np.any(inc < -1e-12) or abs(coef[0]) > 1e-12 or abs(coef[-1] - 1) > 1e-12:
            raise WarpError("spline coefficients must increase from 0 to 1")
        inc = np.maximum(inc, _MIN_INCREMENT)
        return cls(basis, np.log(inc / inc.sum()))

    @classmethod
    def from_function(cls, func, n_basis: int = 8, order: int = 4, n_samples: int = 0) -> "Warp":
        """Least-squares spline approximation of an increasing map of [0, 1]."""
        basis = make_bspline_basis(1.0, n_basis, order)
        return _fit_monotone(basis, func, n_samples)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = basis_matrix(self.basis, t.ravel()) @ self.spline_coefficients
        return np.clip(out, 0.0, 1.0).reshape(t.shape)

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (basis_matrix(self.basis, t.ravel(), deriv=1) @ self.spline_coefficients).reshape(t.shape)

    def validate(self) -> "Warp":
        t = np.linspace(0.0, 1.0, _MONOTONE_CHECK_POINTS)
        h = basis_matrix(self.basis, t) @ self.spline_coefficients
        if not np.all(np.diff(h) > 0):
            raise WarpError("warp is not strictly increasing")
        if abs(h[0]) >= 1e-12 or abs(h[-1] - 1.0) >= 1e-12:
            raise WarpError("warp endpoints are not pinned to 0 and 1")
        return self


def _fit_monotone(basis, func, n_samples=0, sample_points=None):
    if sample_points is None:
        n = n_samples or max(20 * basis.n_basis, 201)
        # dense in the interior, with every knot included
        t = np.unique(np.concatenate([np.linspace(0.0, 1.0, n), basis.interior_knots]))
    else:
        t = sample_points
    y = np.asarray(func(t), dtype=float)
    B = basis_matrix(basis, t)
    # endpoints are pinned: solve for the interior coefficients only
    inner = B[:, 1:-1]
    rhs = y - B[:, -1]
    coef_inner = np.linalg.lstsq(inner, rhs, rcond=None)[0]
    coef = np.concatenate([[0.0], coef_inner, [1.0]])
    coef = np.clip(np.maximum.accumulate(coef), 0.0, 1.0)
    return Warp.from_spline_coefficients(basis, coef)


def _identity_coefficients(basis):
    k, order = basis.knots, basis.order
    return np.array([k[i + 1 : i + order].mean() for i in range(basis.n_basis)])


def _interpolant(curve):
    if isinstance(curve, BasisExpansion):
        return curve
    return PchipInterpolator(curve.grid.points, curve.values, extrapolate=True)


def _normalized(curve):
    if curve.grid.domain_end != 1.0 and not isinstance(curve, BasisExpansion):
        raise ValueError("curves must be on the normalized domain [0, 1]")
    return curve


def apply_warp(curve, warp: Warp, grid: Optional[TimeGrid] = None) -> Curve:
    """Registered curve ``t -> curve(warp(t))`` sampled on ``grid``.

    Sampled curves are interpolated with a monotone cubic Hermite
    interpolant (no overshoot beyond the data range); basis expansions are
    evaluated directly.
    """
    warp.validate()
    if isinstance(curve, BasisExpansion):
        if curve.basis.domain_end != 1.0:
            raise ValueError("expansion must be on the normalized domain [0, 1]")
        grid = grid or TimeGrid.uniform(101)
    else:
        _normalized(curve)
        grid = grid or curve.grid
    f = _interpolant(curve)
    return Curve(grid, np.asarray(f(warp(grid.points)), dtype=float))


def _bisect_inverse(func, s, n_iter=60):
    lo = np.zeros_like(s)
    hi = np.ones_like(s)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = func(mid) < s
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _round_trip_error(warp, inverse, t):
    return float(np.max(np.abs(inverse(warp(t)) - t)))


def invert_warp(warp: Warp, tolerance: float = 1e-6, max_basis: int = 512) -> Warp:
    """Monotone spline approximation of ``warp``'s inverse.

    Inverse values are found by bisection at the images of a dense grid and
    refit into a warp. The inverse's knots start at the images of the forward
    knots; spans where the round-trip error is too large are split until
    ``max |inv(warp(t)) - t| < tolerance`` or ``max_basis`` is reached.

    Raises
    ------
    WarpInversionError
        Carries the achieved round-trip error when the tolerance is missed.
    """
    warp.validate()
    order = warp.basis.order
    check = np.linspace(0.0, 1.0, 2001)
    fwd_knots = warp(warp.basis.interior_knots)
    knots = np.unique(np.clip(fwd_knots, 1e-9, 1 - 1e-9))
    best_err = np.inf
    while True:
        basis = BSplineBasis(order, knots, 1.0)
        # sample the inverse densely, with extra points in every span
        spans = np.concatenate([[0.0], knots, [1.0]])
        s = np.unique(
            np.concatenate(
                [np.linspace(a, b, 2 * order + 1) for a, b in zip(spans[:-1], spans[1:])]
                + [warp(check)]
            )
        )
        u = _bisect_inverse(warp, s)
        inner = basis_matrix(basis, s)
        coef_inner = np.linalg.lstsq(inner[:, 1:-1], u - inner[:, -1], rcond=None)[0]
        coef = np.concatenate([[0.0], coef_inner, [1.0]])
        coef = np.clip(np.maximum.accumulate(coef), 0.0, 1.0)
        inverse = Warp.from_spline_coefficients(basis, coef)
        err = _round_trip_error(warp, inverse, check)
        best_err = min(best_err, err)
        if err < tolerance:
            return inverse
        if basis.n_basis >= max_basis:
            raise WarpInversionError(best_err, tolerance, basis.n_basis)
        # split every span that contains a point with too much error
        bad_s = warp(check[np.abs(inverse(warp(check)) - check) >= tolerance])
        idx = np.unique(np.searchsorted(spans, bad_s, side="right") - 1)
        idx = idx[(idx >= 0) & (idx < spans.size - 1)]
        mids = 0.5 * (spans[idx] + spans[idx + 1])
        new_knots = np.unique(np.concatenate([knots, mids]))
        budget = max_basis - order
        if new_knots.size > budget:
            new_knots = np.unique(np.concatenate([knots, mids[: budget - knots.size]]))
        if new_knots.size == knots.size:
            raise WarpInversionError(best_err, tolerance, basis.n_basis)
        knots = new_knots


def compose_warps(outer: Warp, inner, basis: Optional[BSplineBasis] = None) -> Warp:
    """Warp approximating ``t -> outer(inner(t))``, refit into ``basis``.

    ``inner`` may be a :class:`Warp` or any increasing callable on [0, 1].
    """
    basis = basis or outer.basis
    return _fit_monotone(basis, lambda t: outer(inner(t)))


@dataclass(frozen=True)
class RegistrationConfig:
    """Settings for :func:`register_sample`.

    ``kappa`` is relative: the identity penalty weight is
    ``kappa * mean_i var(x_i)``, with ``var`` the L2 variance of a curve
    around its own average level.
    """

    n_components: int = 2
    max_iter: int = 50
    tol: float = 1e-6
    warp_basis_size: int = 8
    kappa: float = 1e-2
    n_grid: int = 101
    lm_max_iter: int = 50

    def __post_init__(self):
        if self.n_components < 0:
            raise ValueError("n_components must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.warp_basis_size < 4:
            raise ValueError("warp_basis_size must be >= 4 (cubic warps)")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.n_grid < 2:
            raise ValueError("n_grid must be >= 2")


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    """Registered curves and the warps that produced them.

    ``warps[i]`` maps internal time to the chronological time of curve ``i``:
    ``registered[i](t) = observed[i](warps[i](t))``.
    """

    registered: tuple
    warps: tuple
    template: Optional[FpcaModel]
    n_iterations: int
    converged: bool
    objective_history: tuple = ()


class _CurveProblem:
    """Least-squares warp fit of one curve against a fixed template."""

    def __init__(self, interp, deriv, B, dB, weights, kappa, t):
        self.f, self.df = interp, deriv
        self.B, self.sw = B, np.sqrt(weights)
        self.kappa = kappa
        self.t = t

    def residual(self, theta, target):
        c = _cumulative(_softmax(theta))
        h = np.clip(self.B @ c, 0.0, 1.0)
        r_data = self.sw * (self.f(h) - target)
        r_pen = np.sqrt(self.kappa) * self.sw * (h - self.t)
        return np.concatenate([r_data, r_pen]), h, c

    def jacobian(self, theta, h, c):
        s = _softmax(theta)
        m = s.size
        # d c_k / d theta_j = s_j ([j < k] - c_k)
        lower = np.tri(m + 1, m, -1)
        dc = s[None, :] * (lower - c[:, None])
        dh = self.B @ dc
        J_data = (self.sw * self.df(h))[:, None] * dh
        J_pen = (np.sqrt(self.kappa) * self.sw)[:, None] * dh
        return np.vstack([J_data, J_pen])

    def fit(self, theta, target, max_iter):
        r, h, c = self.residual(theta, target)
        cost = r @ r
        mu = 1e-3
        for _ in range(max_iter):
            J = self.jacobian(theta, h, c)
            g = J.T @ r
            H = J.T @ J
            improved = False
            for _ in range(30):
                A = H + mu * (np.diag(np.diag(H)) + 1e-12 * np.eye(H.shape[0]))
                try:
                    step = np.linalg.solve(A, -g)
                except np.linalg.LinAlgError:
                    mu *= 10
                    continue
                cand = theta + step
                r_new, h_new, c_new = self.residual(cand, target)
                cost_new = r_new @ r_new
                if cost_new < cost:
                    improved = True
                    break
                mu *= 10
            if not improved:
                break
            rel = (cost - cost_new) / max(cost, 1e-300)
            theta, r, h, c, cost = cand, r_new, h_new, c_new, cost_new
            mu = max(mu / 10, 1e-12)
            if rel < 1e-12 or cost == 0.0:
                break
        return theta, cost


def _scaled_mean_templates(Y, weights):
    """Cross-sectional mean refit to each curve by scale and offset."""
    mu = Y.mean(axis=0)
    X = np.column_stack([mu, np.ones_like(mu)])
    sw = np.sqrt(weights)[:, None]
    coef = np.linalg.lstsq(X * sw, (Y.T * sw), rcond=None)[0]
    return (X @ coef).T


def _templates(Y, weights, n_components):
    """Each registered curve's own truncated KL reconstruction."""
    n = Y.shape[0]
    J = min(n_components, n - 1)
    if J == 0:
        return np.broadcast_to(Y.mean(axis=0), Y.shape).copy(), None
    mean, ev, funcs, scores, total = fpca_arrays(Y[:, None, :], weights, J)
    return mean[0] + scores @ funcs[:, 0, :], (mean, ev, funcs, total)


def _center(thetas, basis, t):
    """Recompose every warp with the inverse of the mean warp."""
    coefs = np.array([_cumulative(_softmax(th)) for th in thetas])
    mean_coef = coefs.mean(axis=0)

    def mean_warp(s):
        return np.clip(basis_matrix(basis, s) @ mean_coef, 0.0, 1.0)

    # the inverse of the mean warp is tabulated once and shared by all curves
    s = np.unique(np.concatenate([np.linspace(0.0, 1.0, max(20 * basis.n_basis, 201)), basis.interior_knots]))
    inv = _bisect_inverse(mean_warp, s)
    B_inv = basis_matrix(basis, inv)
    out = []
    for c in coefs:
        values = np.clip(B_inv @ c, 0.0, 1.0)
        out.append(_fit_monotone(basis, lambda _, v=values: v, sample_points=s).coefficients)
    return out


def register_sample(
    curves: Sequence[Curve],
    config: RegistrationConfig = RegistrationConfig(),
    grid: Optional[TimeGrid] = None,
    n_jobs: int = 1,
) -> RegistrationResult:
    """Register one channel of ``n >= 3`` curves on [0, 1].

    Parameters
    ----------
    curves : sequence of Curve
        Observed curves, each on its own grid over [0, 1].
    config : RegistrationConfig
    grid : TimeGrid, optional
        Common internal grid; ``config.n_grid`` equally spaced points by default.
    n_jobs : int
        Threads used for the per-curve warp fits. Results do not depend on it.
    """
    if len(curves) < 3:
        raise ValueError(f"registration needs at least 3 curves, got {len(curves)}")
    for c in curves:
        _normalized(c)
    grid = grid or TimeGrid.uniform(config.n_grid)
    t = grid.points
    w = grid.weights
    n = len(curves)
    basis = make_bspline_basis(1.0, config.warp_basis_size, 4)
    B = basis_matrix(basis, t)
    identity = Warp.identity(config.warp_basis_size)

    interps = [_interpolant(c) for c in curves]
    derivs = [f.derivative() for f in interps]
    Y0 = np.array([f(t) for f in interps])

    spread = np.array([w @ (y - w @ y) ** 2 for y in Y0])
    if np.all(spread <= 1e-24 * max(1.0, np.abs(Y0).max() ** 2)):
        log.debug("degenerate sample: all curves constant, returning identity warps")
        return RegistrationResult(
            tuple(Curve(grid, y) for y in Y0),
            tuple(identity for _ in range(n)),
            None,
            0,
            True,
            (),
        )
    kappa = config.kappa * float(spread.mean())
    problems = [
        _CurveProblem(f, df, B, None, w, kappa, t) for f, df in zip(interps, derivs)
    ]
    thetas = [identity.coefficients.copy() for _ in range(n)]

    def warped(ths):
        return np.array(
            [f(np.clip(B @ _cumulative(_softmax(th)), 0.0, 1.0)) for f, th in zip(interps, ths)]
        )

    def objective(ths, Y, R):
        total = 0.0
        for th, y, r in zip(ths, Y, R):
            h = np.clip(B @ _cumulative(_softmax(th)), 0.0, 1.0)
            total += w @ (y - r) ** 2 + kappa * (w @ (h - t) ** 2)
        return float(total)

    Y = Y0
    history = []
    converged = False
    model_parts = None
    n_iter = 0
    # warm start against the scaled mean, then FPCA templates
    stage = "warm" if config.n_components > 0 else "fpca"
    stage_start = 0
    executor = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None
    try:
        for it in range(config.max_iter):
            if stage == "warm":
                R, parts = _scaled_mean_templates(Y, w), None
            else:
                R, parts = _templates(Y, w, config.n_components)
            obj = objective(thetas, Y, R)
            in_stage = len(history) > stage_start
            if in_stage and obj > history[-1] * (1 + 1e-12):
                # the recentering undid the gain: keep the previous state
                log.debug("objective rose from %.6g to %.6g", history[-1], obj)
                thetas, Y, model_parts = prev
                if stage == "fpca":
                    converged = True
                    break
                stage, stage_start = "fpca", len(history)
                continue
            rel = (history[-1] - obj) / max(history[-1], 1e-300) if in_stage else np.inf
            history.append(obj)
            n_iter = it + 1
            if parts is not None:
                model_parts = parts
            prev = (thetas, Y, model_parts)
            if obj <= 1e-24 or rel < config.tol:
                if stage == "fpca" or obj <= 1e-24:
                    converged = True
                    break
                stage, stage_start = "fpca", len(history)
                continue

            def fit_one(i):
                return problems[i].fit(thetas[i], R[i], config.lm_max_iter)[0]

            if executor is None:
                new = [fit_one(i) for i in range(n)]
            else:
                new = list(executor.map(fit_one, range(n)))
            thetas = _center(new, basis, t)
            Y = warped(thetas)
    finally:
        if executor is not None:
            executor.shutdown()

    if model_parts is None and config.n_components > 0:
        model_parts = _templates(Y, w, config.n_components)[1]
    warps = tuple(Warp(basis, th) for th in thetas)
    template = None
    if model_parts is not None:
        mean, ev, funcs, total = model_parts
        template = FpcaModel(grid, mean, ev, funcs, ("reference",), total)
    return RegistrationResult(
        tuple(Curve(grid, y) for y in Y),
        warps,
        template,
        n_iter,
        converged,
        tuple(history),
    )


def register_by_reference(
    sample: Sequence[MultiChannelCurve],
    reference_channel: str = "AU25",
    config: RegistrationConfig = RegistrationConfig(),
    grid: Optional[TimeGrid] = None,
    n_jobs: int = 1,
) -> RegistrationResult:
    """Register every video by one channel and carry its warp to the others."""
    for video in sample:
        if reference_channel not in video.channel_labels:
            raise KeyError(
                f"reference channel {reference_channel!r} missing from video "
                f"{video.video_id!r}"
            )
    ref = register_sample(
        [v.channel(reference_channel) for v in sample], config, grid, n_jobs
    )
    grid = ref.registered[0].grid
    registered = []
    for video, warp, ref_curve in zip(sample, ref.warps, ref.registered):
        rows = []
        for label, values in zip(video.channel_labels, video.values):
            if label == reference_channel:
                rows.append(ref_curve.values)
            else:
                rows.append(apply_warp(Curve(video.grid, values), warp, grid).values)
        registered.append(
            MultiChannelCurve(grid, np.vstack(rows), video.channel_labels, video.video_id, video.group)
        )
    return RegistrationResult(
        tuple(registered),
        ref.warps,
        ref.template,
        ref.n_iterations,
        ref.converged,
        ref.objective_history,
    )
