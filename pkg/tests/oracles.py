"""Independent reference implementations used by the tests.

None of these reuse package code: B-splines come from scipy, constrained
least squares is solved by null-space reparameterization with scipy's SVD,
eigenproblems are dense generalized problems, and the F distribution is
integrated numerically from its density.
"""

import math

import numpy as np
from scipy import integrate, linalg, optimize
from scipy.interpolate import BSpline


def bspline_design(knots, order, t, deriv=0):
    """Design matrix from scipy's B-spline elements."""
    n = len(knots) - order
    out = np.empty((len(t), n))
    for i in range(n):
        c = np.zeros(n)
        c[i] = 1.0
        spl = BSpline(np.asarray(knots), c, order - 1, extrapolate=False)
        vals = spl.derivative(deriv)(t) if deriv else spl(t)
        out[:, i] = np.nan_to_num(vals)
    # right endpoint: scipy leaves the closed end undefined
    end = np.asarray(t) == knots[-1]
    if end.any() and deriv == 0:
        out[end] = 0.0
        out[end, -1] = 1.0
    return out


def design(K, G):
    """Balanced 0/1 design built row by row."""
    rows = []
    for g in range(G + 1):
        for _ in range(K):
            r = [1.0] + [0.0] * G
            if g > 0:
                r[g] = 1.0
            rows.append(r)
    return np.array(rows)


def constrained_lstsq(y, Z, C):
    """min ||y - Z b|| s.t. C b = 0 via b = N theta, N = null(C).

    Returns (beta, sse, effective_parameters).
    """
    N = linalg.null_space(np.atleast_2d(C))
    ZN = Z @ N
    theta = linalg.lstsq(ZN, y)[0]
    beta = N @ theta
    r = y - Z @ beta
    return beta, float(r @ r), np.linalg.matrix_rank(ZN)


def scalar_f(y, Z, g_tilde):
    """Classical one-constraint F statistic at a single time point."""
    G = Z.shape[1] - 1
    C = np.zeros((1, G + 1))
    C[0, 1:] = 1
    extra = np.zeros((1, G + 1))
    extra[0, g_tilde] = 1
    b_full, sse_full, p_full = constrained_lstsq(y, Z, C)
    b_red, sse_red, p_red = constrained_lstsq(y, Z, np.vstack([C, extra]))
    df_e = len(y) - p_full
    df_m = p_full - p_red
    return ((sse_red - sse_full) / df_m) / (sse_full / df_e), b_full, sse_full, sse_red, df_e


def dense_fpca(X, w):
    """Eigenvalues of the weighted covariance operator via a generalized
    symmetric problem ``(W C W) v = eta W v`` on the stacked grid."""
    n, D, P = X.shape
    Xc = (X - X.mean(axis=0)).reshape(n, D * P)
    C = Xc.T @ Xc / (n - 1)
    W = np.diag(np.tile(w, D))
    ev, V = linalg.eigh(W @ C @ W, W)
    order = np.argsort(ev)[::-1]
    return ev[order], V[:, order]


def _f_pdf(x, d1, d2):
    if x <= 0:
        return 0.0
    logc = (
        math.lgamma((d1 + d2) / 2) - math.lgamma(d1 / 2) - math.lgamma(d2 / 2)
        + (d1 / 2) * math.log(d1 / d2)
    )
    return math.exp(logc + (d1 / 2 - 1) * math.log(x) - ((d1 + d2) / 2) * math.log1p(d1 * x / d2))


def f_cdf_quad(x, d1, d2):
    """F cdf by adaptive quadrature of the density."""
    if x <= 0:
        return 0.0
    val, _ = integrate.quad(_f_pdf, 0, x, args=(d1, d2), limit=200, epsabs=1e-13, epsrel=1e-12)
    return val


def f_quantile_quad(p, d1, d2):
    return optimize.brentq(lambda x: f_cdf_quad(x, d1, d2) - p, 1e-12, 1e4, xtol=1e-12)


def jaccard(mask_a, mask_b):
    union = np.sum(mask_a | mask_b)
    return float(np.sum(mask_a & mask_b) / union) if union else 1.0
