"""Constrained functional linear model and pointwise functional F-tests.

For one action unit the curves of ``G + 1`` groups (group 0 is neutral) are
stacked row-wise, and at every grid point the model ``y = Z beta`` is fit by
least squares under the linear constraint ``L beta = 0`` (the emotion effects
sum to zero). Testing ``alpha_g = 0`` adds a second constraint row; the F ratio
compares the two residual sums of squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fdcore import Curve, TimeGrid
from .fdist import FDist, f_quantile

__all__ = [
    "DesignMatrix",
    "ConstraintRow",
    "FanovaFit",
    "FTestReport",
    "RankDeficientError",
    "EFFECT_CLASSES",
    "build_design_matrix",
    "design_from_groups",
    "constraint_row",
    "fit_flm",
    "sse",
    "fit_reduced_and_ssh0",
    "fratio",
    "ftest",
    "find_zones",
    "classify_effect",
]

EFFECT_CLASSES = (
    "none",
    "locally_strengthening",
    "locally_inhibiting",
    "globally_strengthening",
)
GLOBAL_COVERAGE = 0.70
GLOBAL_SIGN_AGREEMENT = 0.90
MIN_PERMUTATIONS = 100
_PERM_CHUNK = 256


class RankDeficientError(np.linalg.LinAlgError):
    """The bordered normal equations of a constrained fit are singular."""


def _readonly(arr, dtype=float):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """0/1 design with an intercept column and one column per emotion.

    ``groups[r]`` is the group of row ``r`` (0 = neutral) and
    ``row_labels[r] = (k, g)`` its within-group index and group.
    """

    matrix: np.ndarray
    row_labels: tuple
    column_labels: tuple

    groups: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Z = _readonly(self.matrix)
        if Z.ndim != 2 or Z.shape[1] < 2:
            raise ValueError("design needs an intercept and at least one effect column")
        if len(self.row_labels) != Z.shape[0] or len(self.column_labels) != Z.shape[1]:
            raise ValueError("design labels do not match the matrix shape")
        if not np.all(Z[:, 0] == 1):
            raise ValueError("first design column must be the intercept")
        groups = np.array([g for _, g in self.row_labels], dtype=int)
        for r, g in enumerate(groups):
            expected = np.zeros(Z.shape[1])
            expected[0] = 1
            if g > 0:
                expected[g] = 1
            if not np.array_equal(Z[r], expected):
                raise ValueError(f"row {r} does not match its group label {g}")
        groups.setflags(write=False)
        object.__setattr__(self, "matrix", Z)
        object.__setattr__(self, "row_labels", tuple(tuple(l) for l in self.row_labels))
        object.__setattr__(self, "column_labels", tuple(self.column_labels))
        object.__setattr__(self, "groups", groups)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_effects(self) -> int:
        return self.matrix.shape[1] - 1

    def group_rows(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.groups == g)


def _column_labels(G):
    return ("grand_mean",) + tuple(f"alpha_{g}" for g in range(1, G + 1))


def build_design_matrix(K: int, G: int) -> DesignMatrix:
    """Balanced design: K neutral rows, then K rows per emotion in order."""
    if K < 1 or G < 1:
        raise ValueError(f"K and G must be positive, got K={K}, G={G}")
    return design_from_groups(np.repeat(np.arange(G + 1), K), G)


def design_from_groups(groups: Sequence[int], G: Optional[int] = None) -> DesignMatrix:
    """Design for rows with the given group labels (0 = neutral)."""
    groups = np.asarray(groups, dtype=int)
    G = int(groups.max()) if G is None else G
    if G < 1 or groups.min() < 0 or groups.max() > G:
        raise ValueError("group labels must lie in 0..G with G >= 1")
    Z = np.zeros((groups.size, G + 1))
    Z[:, 0] = 1
    Z[groups > 0, groups[groups > 0]] = 1
    counters = np.zeros(G + 1, dtype=int)
    labels = []
    for g in groups:
        counters[g] += 1
        labels.append((int(counters[g]), int(g)))
    return DesignMatrix(Z, tuple(labels), _column_labels(G))


@dataclass(frozen=True, eq=False)
class ConstraintRow:
    """Zero-sum constraint ``(0, 1, ..., 1)`` on the emotion effects."""

    vector: np.ndarray

    def __post_init__(self):
        v = _readonly(self.vector)
        if v.ndim != 1 or v.size < 2 or v[0] != 0 or not np.all(v[1:] == 1):
            raise ValueError("constraint row must be (0, 1, 1, ..., 1)")
        object.__setattr__(self, "vector", v)


def constraint_row(G: int) -> ConstraintRow:
    return ConstraintRow(np.r_[0.0, np.ones(G)])


@dataclass(frozen=True, eq=False)
class FanovaFit:
    """Pointwise constrained least-squares fit.

    ``beta[0]`` is the grand mean and ``beta[g]`` the effect of emotion g,
    each sampled on ``grid``.
    """

    grid: TimeGrid
    beta: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    df_error: int
    design: DesignMatrix
    constraints: np.ndarray

    def __post_init__(self):
        for name in ("beta", "fitted", "residuals", "constraints"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def mu0(self) -> Curve:
        return Curve(self.grid, self.beta[0])

    def alpha(self, g: int) -> Curve:
        if not 1 <= g <= self.design.n_effects:
            raise IndexError(f"emotion index {g} outside 1..{self.design.n_effects}")
        return Curve(self.grid, self.beta[g])


def _as_matrix(y, grid):
    if isinstance(y, np.ndarray) or (len(y) and not isinstance(y[0], Curve)):
        Y = np.asarray(y, dtype=float)
        if Y.ndim != 2:
            raise ValueError("responses must be an (N, P) array")
        grid = grid or TimeGrid.uniform(Y.shape[1])
    else:
        curve_grid = y[0].grid
        for c in y[1:]:
            if c.grid != curve_grid:
                raise ValueError("response curves are on different grids")
        if grid is not None and grid != curve_grid:
            raise ValueError("response curves are not on the requested grid")
        grid = curve_grid
        Y = np.vstack([c.values for c in y])
    if Y.shape[1] != len(grid):
        raise ValueError(f"responses have {Y.shape[1]} samples, grid has {len(grid)}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("responses must be finite")
    return Y, grid


def _constraint_matrix(L, n_cols):
    if L is None:
        C = constraint_row(n_cols - 1).vector
    elif isinstance(L, ConstraintRow):
        C = L.vector
    else:
        C = np.asarray(L, dtype=float)
    C = np.atleast_2d(C)
    if C.shape[1] != n_cols:
        raise ValueError(f"constraints have {C.shape[1]} columns, design has {n_cols}")
    return C


def _null_space(C, n):
    _, s, Vt = np.linalg.svd(C)
    rank = int(np.sum(s > s.max() * n * np.finfo(float).eps)) if s.size else 0
    return Vt[rank:].T


def _effective_params(Z, C):
    N = _null_space(C, Z.shape[1])
    return int(np.linalg.matrix_rank(Z @ N))


def _kkt_inverse_block(Z, C):
    p, c = Z.shape[1], C.shape[0]
    K = np.zeros((p + c, p + c))
    K[:p, :p] = Z.T @ Z
    K[:p, p:] = C.T
    K[p:, :p] = C
    if np.linalg.matrix_rank(K) < p + c:
        raise RankDeficientError(
            "constrained normal equations are singular; check that every group "
            "has at least one curve and the constraints are independent"
        )
    return np.linalg.inv(K)[:p, :p], K


def _solve(Y, design, C):
    Z = design.matrix
    if Y.shape[0] != Z.shape[0]:
        raise ValueError(f"{Y.shape[0]} response rows for a {Z.shape[0]}-row design")
    _, K = _kkt_inverse_block(Z, C)
    p = Z.shape[1]
    rhs = np.vstack([Z.T @ Y, np.zeros((C.shape[0], Y.shape[1]))])
    sol = np.linalg.solve(K, rhs)
    beta = sol[:p]
    fitted = Z @ beta
    return beta, fitted, Y - fitted


def fit_flm(y, Z: DesignMatrix, L=None, grid: Optional[TimeGrid] = None) -> FanovaFit:
    """Fit ``y(t) = Z beta(t)`` subject to ``L beta(t) = 0`` at every grid point.

    The bordered system ``[[Z'Z, L'], [L, 0]]`` is solved for all grid points
    at once; ``df_error`` is N minus the rank of Z restricted to the
    constraint null space.
    """
    Y, grid = _as_matrix(y, grid)
    C = _constraint_matrix(L, Z.matrix.shape[1])
    beta, fitted, resid = _solve(Y, Z, C)
    df_error = Z.n_rows - _effective_params(Z.matrix, C)
    return FanovaFit(grid, beta, fitted, resid, df_error, Z, C)


def sse(fit: FanovaFit) -> Curve:
    """Residual sum of squares at each grid point."""
    return Curve(fit.grid, np.sum(fit.residuals**2, axis=0))


def _reduced_constraints(C, g_tilde, G):
    if not 1 <= g_tilde <= G:
        raise ValueError(f"g_tilde must be in 1..{G}, got {g_tilde}")
    extra = np.zeros(G + 1)
    extra[g_tilde] = 1.0
    return np.vstack([C, extra])


def _check_testable(Z, g_tilde):
    if Z.n_effects < 2:
        raise ValueError(
            "with a single emotion group the zero-sum constraint already forces "
            "its effect to 0; nothing to test"
        )
    if not 1 <= g_tilde <= Z.n_effects:
        raise ValueError(f"g_tilde must be in 1..{Z.n_effects}, got {g_tilde}")


def fit_reduced_and_ssh0(y, Z: DesignMatrix, L=None, g_tilde: int = 1, grid=None):
    """Refit with ``alpha_{g_tilde} = 0`` added; SSH0 sums over all rows."""
    _check_testable(Z, g_tilde)
    Y, grid = _as_matrix(y, grid)
    C = _constraint_matrix(L, Z.matrix.shape[1])
    reduced = fit_flm(Y, Z, _reduced_constraints(C, g_tilde, Z.n_effects), grid)
    return reduced, sse(reduced)


def fratio(sse_full, sse_reduced, df_model, df_error):
    """Pointwise F ratio; 0/0 is reported as 0 and x/0 as infinity."""
    diff = np.maximum(np.asarray(sse_reduced) - np.asarray(sse_full), 0.0)
    msr = diff / df_model
    mse = np.asarray(sse_full) / df_error
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(mse > 0, msr / np.where(mse > 0, mse, 1.0), np.where(msr > 0, np.inf, 0.0))
    return F


def find_zones(points, statistic, critical) -> tuple:
    """Maximal runs of grid points where ``statistic > critical``.

    Each zone is the closed interval between the first and last grid point of
    a run.
    """
    above = np.asarray(statistic) > critical
    if not above.any():
        return ()
    edges = np.diff(np.r_[0, above.astype(int), 0])
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return tuple((float(points[a]), float(points[b])) for a, b in zip(starts, stops))


def _zone_mask(points, zones):
    mask = np.zeros(points.size, dtype=bool)
    for a, b in zones:
        mask |= (points >= a) & (points <= b)
    return mask


def classify_effect(alpha_g: Curve, zones, grid_span: Optional[float] = None) -> str:
    """Label an emotion effect from its significant zones.

    Coverage is the quadrature measure of the zone grid points relative to
    ``grid_span`` (the grid's domain length by default).
    """
    if not zones:
        return "none"
    points = alpha_g.grid.points
    span = grid_span or alpha_g.grid.domain_end
    mask = _zone_mask(points, zones)
    if not mask.any():
        return "none"
    coverage = float(alpha_g.grid.weights[mask].sum() / span)
    values = alpha_g.values[mask]
    if coverage >= GLOBAL_COVERAGE and np.mean(values >= 0) >= GLOBAL_SIGN_AGREEMENT:
        return "globally_strengthening"
    mean_effect = values.mean()
    if mean_effect > 0:
        return "locally_strengthening"
    if mean_effect < 0:
        return "locally_inhibiting"
    return "none"


@dataclass(frozen=True, eq=False)
class FTestReport:
    """Functional F-test of ``alpha_{g_tilde} = 0``.

    ``significant_zones`` are taken against ``critical_line`` ("pointwise" or
    "max"); :meth:`zones` gives either set.
    """

    g_tilde: int
    fratio: Curve
    sse: Curve
    ssh0: Curve
    df_model: int
    df_error: int
    alpha: float
    pointwise_critical: float
    max_critical: float
    max_pvalue: float
    critical_line: str
    significant_zones: tuple
    effect_class: str
    full_fit: FanovaFit
    reduced_fit: FanovaFit
    null_max: np.ndarray = field(repr=False)

    def zones(self, line: str = "pointwise") -> tuple:
        crit = {"pointwise": self.pointwise_critical, "max": self.max_critical}[line]
        return find_zones(self.fratio.grid.points, self.fratio.values, crit)

    def effect(self, line: str = "pointwise") -> str:
        return classify_effect(self.full_fit.alpha(self.g_tilde), self.zones(line))


class _GroupSumStatistic:
    """F ratio from group sums, for fast recomputation under relabeling.

    With every row of a group sharing one design row, the constrained fit of
    group means is a fixed linear map of the group sums, and
    ``SSE = sum y^2 - sum_g S_g^2 / n_g + sum_g n_g (mean_g - fitted_g)^2``.
    """

    def __init__(self, design, C_full, C_red):
        G = design.n_effects
        self.n = np.bincount(design.groups, minlength=G + 1).astype(float)
        M = np.zeros((G + 1, G + 1))
        M[:, 0] = 1
        M[np.arange(1, G + 1), np.arange(1, G + 1)] = 1
        self.Q = []
        for C in (C_full, C_red):
            A, _ = _kkt_inverse_block(design.matrix, C)
            self.Q.append(M @ A @ M.T)
        self.df_error = design.n_rows - _effective_params(design.matrix, C_full)
        self.df_model = _effective_params(design.matrix, C_full) - _effective_params(
            design.matrix, C_red
        )

    def sums(self, S, total_sq):
        """SSE and SSH0 for group sums ``S`` of shape (..., G+1, P)."""
        means = S / self.n[:, None]
        within = total_sq - np.sum(S * means, axis=-2)
        out = []
        for Q in self.Q:
            fitted = np.einsum("gh,...hp->...gp", Q, S)
            out.append(within + np.sum(self.n[:, None] * (means - fitted) ** 2, axis=-2))
        return out


def ftest(
    y,
    Z: DesignMatrix,
    L=None,
    g_tilde: int = 1,
    alpha: float = 0.05,
    n_permutations: int = 1000,
    seed: int = 0,
    grid: Optional[TimeGrid] = None,
    critical_line: str = "pointwise",
) -> FTestReport:
    """Pointwise F-test of emotion ``g_tilde`` against the neutral mean.

    The maximum critical value is the (1 - alpha) quantile of
    ``max_t F*(t)`` over ``n_permutations`` random relabelings of the curves
    of the neutral group and group ``g_tilde``.
    """
    if n_permutations < MIN_PERMUTATIONS:
        raise ValueError(
            f"n_permutations must be at least {MIN_PERMUTATIONS}, got {n_permutations}"
        )
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if critical_line not in ("pointwise", "max"):
        raise ValueError(f"critical_line must be 'pointwise' or 'max', got {critical_line!r}")
    Y, grid = _as_matrix(y, grid)
    C = _constraint_matrix(L, Z.matrix.shape[1])
    full = fit_flm(Y, Z, C, grid)
    reduced, ssh0_curve = fit_reduced_and_ssh0(Y, Z, C, g_tilde, grid)
    sse_curve = sse(full)
    df_model = reduced.df_error - full.df_error
    if full.df_error < 1 or df_model != 1:
        raise ValueError(
            f"degenerate test: df_error={full.df_error}, df_model={df_model}"
        )
    F = fratio(sse_curve.values, ssh0_curve.values, df_model, full.df_error)
    crit_point = f_quantile(FDist(df_model, full.df_error), 1 - alpha)

    null_max = _permutation_max(Y, Z, C, g_tilde, n_permutations, seed)
    crit_max = float(np.quantile(null_max, 1 - alpha, method="higher"))
    observed_max = float(F.max())
    pvalue = float((1 + np.sum(null_max >= observed_max)) / (n_permutations + 1))

    crit = crit_point if critical_line == "pointwise" else crit_max
    zones = find_zones(grid.points, F, crit)
    effect = classify_effect(full.alpha(g_tilde), zones)
    return FTestReport(
        g_tilde=g_tilde,
        fratio=Curve(grid, F),
        sse=sse_curve,
        ssh0=ssh0_curve,
        df_model=df_model,
        df_error=full.df_error,
        alpha=alpha,
        pointwise_critical=float(crit_point),
        max_critical=crit_max,
        max_pvalue=pvalue,
        critical_line=critical_line,
        significant_zones=zones,
        effect_class=effect,
        full_fit=full,
        reduced_fit=reduced,
        null_max=_readonly(null_max),
    )


def _permutation_max(Y, design, C, g_tilde, n_permutations, seed):
    """Null distribution of ``max_t F(t)`` under neutral / g_tilde relabeling.

    Relabeling only moves rows between the neutral group and ``g_tilde``, so
    with ``s0`` the neutral group sum every residual sum of squares is a
    quadratic ``a + b * s0 + c * s0**2`` evaluated pointwise.
    """
    stat = _GroupSumStatistic(design, C, _reduced_constraints(C, g_tilde, design.n_effects))
    # residuals are invariant to adding a constant, so center for accuracy
    Yc = Y - Y.mean(axis=0)
    total_sq = np.sum(Yc**2, axis=0)
    G = design.n_effects
    n = stat.n
    pool = np.concatenate([design.group_rows(0), design.group_rows(g_tilde)])
    n0, ng = n[0], n[g_tilde]
    pool_sum = Yc[pool].sum(axis=0)
    S_fixed = np.vstack([Yc[design.groups == g].sum(axis=0) for g in range(G + 1)])
    S_fixed[0] = 0.0
    S_fixed[g_tilde] = pool_sum
    direction = np.zeros(G + 1)
    direction[0], direction[g_tilde] = 1.0, -1.0
    others = np.ones(G + 1, dtype=bool)
    others[[0, g_tilde]] = False
    within0 = total_sq - np.sum(S_fixed[others] ** 2 / n[others, None], axis=0)
    coefs = []
    for Q in stat.Q:
        R = np.diag(1 / n) - Q
        r0 = R @ S_fixed
        v = R @ direction
        coefs.append((np.sum(n[:, None] * r0**2, axis=0), 2 * (n * v) @ r0, np.sum(n * v**2)))

    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.permuted(np.tile(pool, (n_permutations, 1)), axis=1)[:, : int(n0)]
    out = np.empty(n_permutations)
    for start in range(0, n_permutations, _PERM_CHUNK):
        s0 = Yc[idx[start : start + _PERM_CHUNK]].sum(axis=1)
        within = within0 - s0**2 / n0 - (pool_sum - s0) ** 2 / ng
        sse_b, ssh0_b = (within + a + b * s0 + c * s0**2 for a, b, c in coefs)
        F = fratio(sse_b, ssh0_b, stat.df_model, stat.df_error)
        out[start : start + s0.shape[0]] = F.max(axis=1)
    return out
