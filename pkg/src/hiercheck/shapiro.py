"""Shapiro-Wilk W test using Royston's AS R94 approximations.

Coefficients and the normalising transformation of W follow
Royston, P. (1995) "Remark AS R94: A remark on algorithm AS 181: The
W-test for normality", Applied Statistics 44(4), 547-551. Polynomial
coefficient lists below are in ascending powers.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .special import std_normal_quantile

# AS R94 constants (Royston 1995, Table / Fortran DATA statements)
C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)  # a_n correction
C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)  # a_{n-1} correction
C3 = (0.544, -0.39978, 0.025054, -6.714e-4)  # mean of -log(gamma - log(1-W)), n <= 11
C4 = (1.3822, -0.77857, 0.062767, -0.0020322)  # log sd, n <= 11
C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)  # mean of log(1-W), n >= 12
C6 = (-0.4803, -0.082676, 0.0030302)  # log sd, n >= 12
G = (-2.273, 0.459)  # gamma(n) bound, n <= 11

SMALL = 1e-19
N_MIN = 3
N_MAX = 5000


def _poly(coefs, x):
    out = 0.0
    for c in reversed(coefs):
        out = out * x + c
    return out


@lru_cache(maxsize=256)
def sw_coefficients(n: int) -> np.ndarray:
    """Full antisymmetric weight vector ``a`` (length n) for sorted data."""
    if not N_MIN <= n <= N_MAX:
        raise ValueError(f"Shapiro-Wilk needs {N_MIN} <= n <= {N_MAX}, got {n}")
    half = n // 2
    if n == 3:
        upper = np.array([math.sqrt(0.5)])
    else:
        m = np.array([-std_normal_quantile((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)])
        # m holds the positive expected normal scores for the top half
        summ2 = 2.0 * float(np.sum(m * m))
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(C1, rsn) + m[0] / ssumm2
        upper = m.copy()
        if n > 5:
            a2 = _poly(C2, rsn) + m[1] / ssumm2
            fac = math.sqrt(
                (summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2)
            )
            upper[2:] = m[2:] / fac
            upper[1] = a2
        else:
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
            upper[1:] = m[1:] / fac
        upper[0] = a1
    a = np.zeros(n)
    a[n - half:] = upper[::-1]
    a[:half] = -upper
    a.setflags(write=False)
    return a


def _w_pvalue(w: np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if n == 3:
        pw = (6.0 / math.pi) * (np.arcsin(np.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return np.clip(pw, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        y = np.log1p(-w)
    if n <= 11:
        gamma = _poly(G, float(n))
        small = y >= gamma
        with np.errstate(invalid="ignore", divide="ignore"):
            y = -np.log(gamma - y)
        m = _poly(C3, float(n))
        s = math.exp(_poly(C4, float(n)))
        pw = 1.0 - ndtr((y - m) / s)
        pw = np.where(small, SMALL, pw)
    else:
        ln = math.log(n)
        m = _poly(C5, ln)
        s = math.exp(_poly(C6, ln))
        pw = 1.0 - ndtr((y - m) / s)
    # W == 1 gives y = -inf: no evidence against normality
    pw = np.where(w >= 1.0, 1.0, pw)
    return np.clip(pw, 0.0, 1.0)


def shapiro_wilk_many(samples) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise W statistics and upper-tail p-values for a 2-D array.

    Every row is one sample of common size ``n``.
    """
    x = np.array(samples, dtype=float, ndmin=2)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D array")
    n = x.shape[1]
    if not N_MIN <= n <= N_MAX:
        raise ValueError(f"Shapiro-Wilk needs {N_MIN} <= n <= {N_MAX}, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    xs = np.sort(x, axis=1, kind="stable")
    rng = xs[:, -1] - xs[:, 0]
    if np.any(rng <= 0.0):
        raise ValueError("Shapiro-Wilk is undefined for a constant sample")
    # Centre and scale by range first; W is affine invariant. Sums run over
    # mirrored pairs (x_i, x_{n-1-i}) so that negating the sample, which
    # reverses the sort order, reproduces every rounding step exactly.
    h = n // 2
    lo_half = xs[:, :h]
    hi_half = xs[:, ::-1][:, :h]
    mid = xs[:, h] if n % 2 else 0.0
    centre = (np.sum(lo_half + hi_half, axis=1) + mid) / n
    z = (xs - centre[:, None]) / rng[:, None]
    zl, zh = z[:, :h], z[:, ::-1][:, :h]
    a = sw_coefficients(n)
    num = np.sum(a[::-1][:h] * (zh - zl), axis=1) ** 2
    zm = z[:, h] ** 2 if n % 2 else 0.0
    den = np.sum(zl * zl + zh * zh, axis=1) + zm
    if np.any(den <= SMALL * SMALL):
        raise ValueError("Shapiro-Wilk is undefined for a zero-variance sample")
    w = np.minimum(num / den, 1.0)
    return w, _w_pvalue(w, n)


def shapiro_wilk(sample) -> tuple[float, float]:
    """Return ``(W, p)`` for one sample of size 3..5000.

    Small p-values are evidence against normality.
    """
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1:
        raise ValueError("sample must be one-dimensional")
    w, p = shapiro_wilk_many(x[None, :])
    return float(w[0]), float(p[0])
