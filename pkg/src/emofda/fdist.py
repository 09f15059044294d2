"""F-distribution CDF and quantiles from a continued-fraction incomplete beta."""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "FDist",
    "ConvergenceError",
    "betainc",
    "f_cdf",
    "f_sf",
    "f_pdf",
    "f_quantile",
]

MAX_ITER = 500
_EPS = 1e-16
_TINY = 1e-300


class ConvergenceError(ArithmeticError):
    """The incomplete-beta continued fraction did not converge."""


@dataclass(frozen=True)
class FDist:
    """Snedecor's F distribution with ``df1`` and ``df2`` degrees of freedom."""

    df1: float
    df2: float

    def __post_init__(self):
        if not (self.df1 > 0 and self.df2 > 0):
            raise ValueError(
                f"degrees of freedom must be positive, got ({self.df1}, {self.df2})"
            )

    def cdf(self, x):
        return f_cdf(self, x)

    def sf(self, x):
        return f_sf(self, x)

    def pdf(self, x):
        return f_pdf(self, x)

    def ppf(self, p):
        return f_quantile(self, p)


def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ConvergenceError(
        f"incomplete beta continued fraction failed to converge in {MAX_ITER} "
        f"iterations (a={a}, b={b}, x={x})"
    )


def _log_front(a, b, x, y):
    return (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(y)
    )


def _betainc_pair(a, b, x, y):
    """Return ``(I_x(a, b), 1 - I_x(a, b))`` with ``y = 1 - x`` given exactly."""
    if x <= 0.0:
        return 0.0, 1.0
    if y <= 0.0:
        return 1.0, 0.0
    front = math.exp(_log_front(a, b, x, y))
    if x < (a + 1.0) / (a + b + 2.0):
        lower = front * _betacf(a, b, x) / a
        return lower, 1.0 - lower
    upper = front * _betacf(b, a, y) / b
    return 1.0 - upper, upper


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if not (a > 0 and b > 0):
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    return _betainc_pair(a, b, x, 1.0 - x)[0]


def _check_x(x):
    x = float(x)
    if math.isnan(x) or x < 0:
        raise ValueError(f"F variate must be non-negative, got {x}")
    return x


def _split(dist, x):
    # z = d1 x / (d1 x + d2) and 1 - z, each without cancellation
    if math.isinf(x):
        return 1.0, 0.0
    num = dist.df1 * x
    den = num + dist.df2
    return num / den, dist.df2 / den


def f_cdf(dist: FDist, x: float) -> float:
    """P(F <= x)."""
    z, w = _split(dist, _check_x(x))
    return _betainc_pair(dist.df1 / 2.0, dist.df2 / 2.0, z, w)[0]


def f_sf(dist: FDist, x: float) -> float:
    """P(F > x), accurate in the upper tail."""
    z, w = _split(dist, _check_x(x))
    return _betainc_pair(dist.df1 / 2.0, dist.df2 / 2.0, z, w)[1]


def f_pdf(dist: FDist, x: float) -> float:
    x = _check_x(x)
    d1, d2 = dist.df1, dist.df2
    if x == 0.0:
        if d1 < 2:
            return math.inf
        return 1.0 if d1 == 2 else 0.0
    if math.isinf(x):
        return 0.0
    z, w = _split(dist, x)
    # d/dx I_z(a, b) = z^(a-1) w^(b-1) / B(a, b) * dz/dx, dz/dx = z w / x
    return math.exp(_log_front(d1 / 2.0, d2 / 2.0, z, w)) / x


def f_quantile(dist: FDist, p: float) -> float:
    """Smallest ``x`` with ``f_cdf(dist, x) = p``.

    A bracket is grown by doubling, then refined with Newton steps that fall
    back to bisection whenever they leave the bracket. For ``p > 0.5`` the
    residual is taken in the upper tail (``1 - p`` is exact there).
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    lo, hi = 0.0, 1.0
    while f_cdf(dist, hi) < p:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ConvergenceError(f"could not bracket the {p} quantile")
    upper = p > 0.5
    q = 1.0 - p
    x = 0.5 * (lo + hi)
    for _ in range(400):
        err = q - f_sf(dist, x) if upper else f_cdf(dist, x) - p
        if err == 0.0:
            return x
        if err > 0:
            hi = x
        else:
            lo = x
        dens = f_pdf(dist, x)
        step = x - err / dens if dens > 0 and math.isfinite(dens) else math.nan
        x_new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(x_new - x) <= 2e-16 * max(abs(x), 1e-300) or hi - lo <= 4e-16 * hi:
            return x_new
        x = x_new
    raise ConvergenceError(f"quantile search for p={p} did not converge")
