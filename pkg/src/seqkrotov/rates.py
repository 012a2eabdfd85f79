"""Convergence-rate model for infidelity traces.

The per-iteration decay rate of ``log E`` is modelled as

    r(n) = r_star + h(n d) / n,    h(x) = 1 - x / (exp(x) - 1),    d = r0 - r_star,

which starts at ``(r0 + r_star) / 2`` and tends to ``min(r_star, r0)``. The
expression is symmetric under exchanging ``r_star`` and ``r0``, so fits report
the smaller value as ``r_star``. Integrating gives

    log E(n) = c - r_star n - G(n d),    G(x) = log(x / (1 - exp(-x))).
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

__all__ = [
    "RateFitError",
    "RateFit",
    "rate_model",
    "log_error_model",
    "fit_rate_model",
    "RateModel",
]

_SMALL = 1e-4


class RateFitError(ValueError):
    """The trace does not determine the rate model (too short, non-positive or constant)."""


def _h(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SMALL
    out = np.empty_like(x)
    xs = x[small]
    out[small] = xs / 2 - xs**2 / 12 + xs**4 / 720
    xl = x[~small]
    out[~small] = 1.0 - xl / np.expm1(xl)
    return out


def _G(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SMALL
    out = np.empty_like(x)
    xs = x[small]
    out[small] = xs / 2 - xs**2 / 24
    xl = x[~small]
    out[~small] = np.log(xl / -np.expm1(-xl))
    return out


def rate_model(n, r_star, r0):
    """Model rate ``r(n)``; ``r(0) = (r0 + r_star) / 2``."""
    n = np.asarray(n, dtype=float)
    d = r0 - r_star
    x = n * d
    out = np.empty_like(n)
    zero = n == 0
    out[zero] = 0.5 * (r0 + r_star)
    nz = ~zero
    out[nz] = r_star + _h(x[nz]) / n[nz]
    return out if out.ndim else float(out)


def log_error_model(n, r_star, r0, scale):
    """Integrated model ``log E(n) = scale - r_star n - G(n (r0 - r_star))``."""
    n = np.asarray(n, dtype=float)
    return scale - r_star * n - _G(n * (r0 - r_star))


class RateFit(dict):
    """Fitted ``r_star``, ``r0``, ``scale`` and RMS ``residual``, with attribute access."""

    __getattr__ = dict.__getitem__


def fit_rate_model(errors, n=None, min_points=10):
    """Fit the rate model to an infidelity trace.

    Each forward difference ``log E(n) - log E(n+1)`` is matched to the model's
    integral of ``r`` over ``[n, n+1]``; the additive scale is then the mean
    offset of ``log E`` from the integrated model.

    Args:
        errors: infidelities ``E(n)`` (positive).
        n: iteration numbers, default ``0, 1, ...``; must be consecutive.
        min_points: minimum trace length.

    Returns:
        RateFit with keys ``r_star``, ``r0``, ``scale``, ``residual``
        (RMS misfit of the rate differences) and ``log_residual`` (RMS misfit of
        ``log E``).

    Raises:
        RateFitError: trace too short, non-positive or constant.
    """
    e = np.asarray(errors, dtype=float).ravel()
    if e.size < min_points:
        raise RateFitError(f"need at least {min_points} points, got {e.size}")
    if not np.all(np.isfinite(e)) or np.any(e <= 0):
        raise RateFitError("infidelities must be positive and finite")
    n = np.arange(e.size, dtype=float) if n is None else np.asarray(n, dtype=float).ravel()
    if n.shape != e.shape or not np.allclose(np.diff(n), 1.0):
        raise RateFitError("iteration numbers must be consecutive")
    loge = np.log(e)
    diffs = loge[:-1] - loge[1:]
    if np.ptp(loge) < 1e-14:
        raise RateFitError("constant trace: rate undefined")
    lo, hi = n[:-1], n[1:]

    def residual(p):
        r_star, d = p
        pred = r_star + _G(hi * d) - _G(lo * d)
        return pred - diffs

    tail = diffs[len(diffs) // 2 :]
    r_star0 = float(np.median(tail))
    d0 = 2.0 * (float(diffs[0]) - r_star0) if lo[0] == 0 else 0.0
    sol = least_squares(residual, x0=[r_star0, d0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    r_star, d = (float(v) for v in sol.x)
    if d < 0:
        # same model with the roles exchanged; the asymptotic rate is the smaller one
        r_star, d = r_star + d, -d
    scale = float(np.mean(loge + r_star * n + _G(n * d)))
    log_res = loge - log_error_model(n, r_star, r_star + d, scale)
    return RateFit(
        r_star=r_star,
        r0=r_star + d,
        scale=scale,
        residual=float(np.sqrt(np.mean(sol.fun**2))),
        log_residual=float(np.sqrt(np.mean(log_res**2))),
    )


class RateModel(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``fit(n, E)`` then ``predict(n)`` returns model infidelities."""

    def __init__(self, min_points=10):
        self.min_points = min_points

    def fit(self, X, y):
        n = np.asarray(X, dtype=float).reshape(-1)
        fit = fit_rate_model(y, n=n, min_points=self.min_points)
        self.r_star_ = fit.r_star
        self.r0_ = fit.r0
        self.scale_ = fit.scale
        self.residual_ = fit.residual
        return self

    def predict(self, X):
        check_is_fitted(self, "r_star_")
        n = np.asarray(X, dtype=float).reshape(-1)
        return np.exp(log_error_model(n, self.r_star_, self.r0_, self.scale_))

    def rate(self, X):
        check_is_fitted(self, "r_star_")
        return rate_model(np.asarray(X, dtype=float).reshape(-1), self.r_star_, self.r0_)
