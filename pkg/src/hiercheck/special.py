"""Normal and Beta distribution primitives.

Everything here is a pure function of its arguments. The scalar routines
work on Python floats; the ``*_array`` variants accept numpy arrays and are
used on the hot paths (probability integral transforms over long chains).
"""

from __future__ import annotations

import math
from statistics import NormalDist

import numpy as np
from scipy.special import gammaln

__all__ = [
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_logpdf",
    "std_normal_quantile",
    "regularized_incomplete_beta",
    "regularized_incomplete_beta_array",
    "beta_quantile",
    "beta_logpdf",
    "plotting_positions",
    "check_probability",
]

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_STD_NORMAL = NormalDist()

# continued fraction controls
_CF_MAX_ITER = 500
_CF_EPS = 1e-15
_CF_TINY = 1e-300

QUANTILE_TOL = 1e-12


def check_probability(p: float, name: str = "p") -> float:
    p = float(p)
    if not math.isfinite(p) or p < 0.0 or p > 1.0:
        raise ValueError(f"{name} must be a finite probability in [0, 1], got {p!r}")
    return p


def _finite(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return x


def std_normal_cdf(x: float) -> float:
    """Standard normal distribution function."""
    x = _finite(x)
    return 0.5 * math.erfc(-x / _SQRT2)


def std_normal_sf(x: float) -> float:
    """Upper tail ``1 - Phi(x)``, accurate far into the right tail."""
    x = _finite(x)
    return 0.5 * math.erfc(x / _SQRT2)


def std_normal_logpdf(x: float) -> float:
    return -0.5 * x * x - _LOG_SQRT_2PI


def std_normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf` on the open unit interval.

    The starting value comes from Wichura's AS241 (via ``statistics``) and
    is polished with Newton steps against :func:`std_normal_cdf` so that the
    round trip holds to near machine precision.
    """
    p = check_probability(p)
    if p == 0.0 or p == 1.0:
        raise ValueError("normal quantile is infinite at p = 0 and p = 1")
    x = _STD_NORMAL.inv_cdf(p)
    for _ in range(3):
        err = std_normal_cdf(x) - p
        dens = math.exp(std_normal_logpdf(x))
        if dens == 0.0 or abs(err) <= 1e-17:
            break
        x -= err / dens
    return x


def beta_logpdf(x: float, alpha: float, beta: float) -> float:
    """Log density of Beta(alpha, beta) at an interior point."""
    if not 0.0 < x < 1.0:
        raise ValueError(f"Beta density evaluated at boundary point {x!r}")
    return (
        (alpha - 1.0) * math.log(x)
        + (beta - 1.0) * math.log1p(-x)
        - _log_beta_fn(alpha, beta)
    )


def _log_beta_fn(alpha: float, beta: float) -> float:
    return math.lgamma(alpha) + math.lgamma(beta) - math.lgamma(alpha + beta)


def _check_shapes(alpha: float, beta: float) -> tuple[float, float]:
    alpha = float(alpha)
    beta = float(beta)
    if not (math.isfinite(alpha) and alpha > 0.0):
        raise ValueError(f"alpha must be positive and finite, got {alpha!r}")
    if not (math.isfinite(beta) and beta > 0.0):
        raise ValueError(f"beta must be positive and finite, got {beta!r}")
    return alpha, beta


def _beta_cf(x: float, a: float, b: float) -> float:
    # Modified Lentz evaluation of the incomplete beta continued fraction.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
    )


def regularized_incomplete_beta(x: float, alpha: float, beta: float) -> float:
    """Beta(alpha, beta) distribution function ``I_x(alpha, beta)``.

    Uses the continued fraction directly when ``x < (alpha + 1) / (alpha +
    beta + 2)`` and the reflection ``1 - I_{1-x}(beta, alpha)`` otherwise.
    When either shape is 1 the closed forms ``x**alpha`` and
    ``1 - (1 - x)**beta`` are used, so the uniform case returns ``x`` exactly.
    """
    alpha, beta = _check_shapes(alpha, beta)
    x = _finite(x)
    if x < 0.0 or x > 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if beta == 1.0:
        return x**alpha
    if alpha == 1.0:
        return -math.expm1(beta * math.log1p(-x))
    log_front = (
        alpha * math.log(x) + beta * math.log1p(-x) - _log_beta_fn(alpha, beta)
    )
    if x < (alpha + 1.0) / (alpha + beta + 2.0):
        val = math.exp(log_front) * _beta_cf(x, alpha, beta) / alpha
    else:
        val = 1.0 - math.exp(log_front) * _beta_cf(1.0 - x, beta, alpha) / beta
    return min(1.0, max(0.0, val))


def regularized_incomplete_beta_array(x, alpha, beta) -> np.ndarray:
    """Vectorised :func:`regularized_incomplete_beta` with broadcasting."""
    x, a, b = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(alpha, dtype=float),
        np.asarray(beta, dtype=float),
    )
    if np.any(~np.isfinite(x)) or np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("x must lie in [0, 1]")
    if np.any(~(a > 0.0)) or np.any(~(b > 0.0)) or not (
        np.all(np.isfinite(a)) and np.all(np.isfinite(b))
    ):
        raise ValueError("shape parameters must be positive and finite")
    out = np.empty(x.shape, dtype=float)
    out[x == 0.0] = 0.0
    out[x == 1.0] = 1.0
    inner = (x > 0.0) & (x < 1.0)
    if not np.any(inner):
        return out
    xi, ai, bi = x[inner], a[inner], b[inner]
    swap = xi >= (ai + 1.0) / (ai + bi + 2.0)
    xs = np.where(swap, 1.0 - xi, xi)
    as_ = np.where(swap, bi, ai)
    bs = np.where(swap, ai, bi)
    with np.errstate(divide="ignore"):
        lbeta = gammaln(as_) + gammaln(bs) - gammaln(as_ + bs)
        log_front = as_ * np.log(xs) + bs * np.log1p(-xs) - lbeta
    frac = np.exp(log_front) * _beta_cf_array(xs, as_, bs) / as_
    res = np.where(swap, 1.0 - frac, frac)
    with np.errstate(divide="ignore"):
        res = np.where(bi == 1.0, xi**ai, np.where(ai == 1.0, -np.expm1(bi * np.log1p(-xi)), res))
    out[inner] = np.clip(res, 0.0, 1.0)
    return out


def _beta_cf_array(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        for aa in (
            m * (b - m) * x / ((qam + m2) * (a + m2)),
            -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2)),
        ):
            d = 1.0 + aa * d
            d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
            c = 1.0 + aa / c
            c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
            d = 1.0 / d
            delta = d * c
            h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _CF_EPS
        if not active.any():
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def beta_quantile(p: float, alpha: float, beta: float) -> float:
    """Inverse Beta distribution function by safeguarded Newton iteration.

    A bisection bracket is maintained throughout; Newton steps that leave
    the bracket are replaced by bisection. Iteration stops once the
    distribution function matches ``p`` within ``QUANTILE_TOL``.
    """
    alpha, beta = _check_shapes(alpha, beta)
    p = check_probability(p)
    if p == 0.0 or p == 1.0:
        raise ValueError("beta_quantile requires 0 < p < 1")
    lo, hi = 0.0, 1.0
    x = _beta_start(p, alpha, beta)
    lbeta = _log_beta_fn(alpha, beta)
    for _ in range(400):
        f = regularized_incomplete_beta(x, alpha, beta) - p
        if abs(f) <= QUANTILE_TOL:
            return x
        if f > 0.0:
            hi = x
        else:
            lo = x
        logdens = (alpha - 1.0) * math.log(x) + (beta - 1.0) * math.log1p(-x) - lbeta
        step_ok = False
        if logdens > -700.0:
            cand = x - f / math.exp(logdens)
            step_ok = lo < cand < hi
        x = cand if step_ok else 0.5 * (lo + hi)
        if hi - lo <= 4.0 * math.ulp(max(x, 1e-300)):
            return x
    return x


def _beta_start(p: float, alpha: float, beta: float) -> float:
    # Normal approximation on the logit-free scale, clipped into (0, 1).
    mean = alpha / (alpha + beta)
    var = alpha * beta / ((alpha + beta) ** 2 * (alpha + beta + 1.0))
    guess = mean + math.sqrt(var) * _STD_NORMAL.inv_cdf(p)
    return min(max(guess, 1e-6), 1.0 - 1e-6)


def plotting_positions(n: int, offset: float = 0.5) -> np.ndarray:
    """Probability abscissae ``(i - offset) / n`` for ``i = 1..n``.

    ``offset=0.5`` (Hazen) is the default; any offset in (0, 1) keeps the
    positions strictly inside the unit interval and increasing.
    """
    n = int(n)
    if n < 1:
        raise ValueError("plotting_positions requires n >= 1")
    if not 0.0 < offset < 1.0:
        raise ValueError("offset must lie in (0, 1)")
    return (np.arange(1, n + 1, dtype=float) - offset) / n
