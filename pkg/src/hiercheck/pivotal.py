"""Pivotal residuals, probability integral transforms and QQ data.

At a parameter value drawn from the posterior, the within-group residuals
``(y_ij - theta_i) / sigma_i`` and the group-level residuals
``(theta_i - mu) / tau`` are independent standard normals, and the Beta
transforms ``I(p_i; alpha, beta)`` are independent uniforms, under the
model and a proper prior. Everything in this module is a deterministic
function of draws already produced by a sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .models import BetaBinomialParams, GroupedNormalData, ModelError, NormalHierParams
from .samplers import PosteriorDraws
from .shapiro import shapiro_wilk, shapiro_wilk_many
from .special import (
    beta_quantile,
    plotting_positions,
    regularized_incomplete_beta,
    regularized_incomplete_beta_array,
    std_normal_quantile,
)

REFERENCES = ("std-normal", "uniform")

__all__ = [
    "PivotalSample",
    "PValueSeries",
    "within_group_residuals",
    "group_level_residuals",
    "standardized_group_means",
    "beta_pit",
    "beta_pit_matrix",
    "qq_data",
    "beta_qq_data",
    "shapiro_wilk",
    "sw_pvalue_series",
    "max_uniform_pit",
    "max_pit_series",
    "max_stat_qq",
    "pooled_values",
]


@dataclass(frozen=True)
class PivotalSample:
    """Pivotal values attached to one posterior draw."""

    draw_index: int
    values: np.ndarray
    reference: str

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("pivotal values must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValueError("pivotal values must be finite")
        if self.reference not in REFERENCES:
            raise ValueError(f"reference must be one of {REFERENCES}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class PValueSeries:
    """One p-value per retained posterior draw."""

    values: np.ndarray
    statistic: str

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("p-value series must be one-dimensional")
        if not np.all((vals >= 0.0) & (vals <= 1.0)):
            raise ValueError("p-values must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size


def within_group_residuals(
    data: GroupedNormalData, params: NormalHierParams, draw_index: int = 0
) -> PivotalSample:
    """``(y_ij - theta_i) / sigma_i`` flattened group by group."""
    if params.theta.size != data.n_groups:
        raise ModelError("theta length does not match the number of groups")
    sd = np.sqrt(params.sigma2_per_group())
    if np.any(sd <= 0.0):
        raise ModelError("sigma must be positive")
    vals = np.concatenate([(g - th) / s for g, th, s in zip(data.groups, params.theta, sd)])
    return PivotalSample(draw_index, vals, "std-normal")


def group_level_residuals(params: NormalHierParams, draw_index: int = 0) -> PivotalSample:
    """``(theta_i - mu) / tau`` per group."""
    if not params.tau2 > 0.0:
        raise ModelError("tau must be positive")
    return PivotalSample(draw_index, (params.theta - params.mu) / math.sqrt(params.tau2), "std-normal")


def standardized_group_means(
    data: GroupedNormalData, params: NormalHierParams, draw_index: int = 0
) -> PivotalSample:
    """``(ybar_i - mu) / sqrt(tau2 + sigma_i^2 / n_i)``.

    Alternative reading of "group mean residuals". Unlike
    :func:`group_level_residuals` this is not a pivot at posterior draws; it
    is offered for plotting only.
    """
    scale = np.sqrt(params.tau2 + params.sigma2_per_group() / data.sizes)
    return PivotalSample(draw_index, (data.means - params.mu) / scale, "std-normal")


def beta_pit(params: BetaBinomialParams, draw_index: int = 0) -> PivotalSample:
    """``zeta_i = I(p_i; alpha, beta)``, uniform under the model."""
    vals = np.array([regularized_incomplete_beta(p, params.alpha, params.beta) for p in params.p])
    return PivotalSample(draw_index, vals, "uniform")


def beta_pit_matrix(draws: PosteriorDraws) -> np.ndarray:
    """Transforms for every retained draw, shape ``(draws, units)``."""
    if draws.model != "beta-binom":
        raise ModelError("beta PIT needs beta-binomial draws")
    p = draws.columns["p"]
    return regularized_incomplete_beta_array(
        p, draws.columns["alpha"][:, None], draws.columns["beta"][:, None]
    )


def _reference_quantiles(reference: str, n: int, offset: float) -> np.ndarray:
    pos = plotting_positions(n, offset)
    if reference == "uniform":
        return pos
    if reference == "std-normal":
        return np.array([std_normal_quantile(q) for q in pos])
    raise ValueError(f"unknown reference {reference!r}")


def qq_data(sample: PivotalSample, offset: float = 0.5) -> np.ndarray:
    """``(theoretical, empirical)`` pairs as an ``(n, 2)`` array."""
    if len(sample) == 0:
        raise ValueError("QQ data needs a nonempty sample")
    emp = np.sort(sample.values, kind="stable")
    return np.column_stack([_reference_quantiles(sample.reference, emp.size, offset), emp])


def beta_qq_data(params: BetaBinomialParams, offset: float = 0.5) -> np.ndarray:
    """Sorted rates ``p_i`` against Beta(alpha, beta) quantiles."""
    pos = plotting_positions(params.p.size, offset)
    theo = np.array([beta_quantile(q, params.alpha, params.beta) for q in pos])
    return np.column_stack([theo, np.sort(params.p, kind="stable")])


def sw_pvalue_series(draws: PosteriorDraws, data: GroupedNormalData | None = None) -> PValueSeries:
    """Shapiro-Wilk p-value of the group-level residuals at every draw.

    ``data`` is accepted for interface symmetry and checked against the
    draws' fingerprint when given.
    """
    if draws.model != "normal-hier":
        raise ModelError("Shapiro-Wilk series needs normal-hierarchical draws")
    if data is not None and data.fingerprint() != draws.data_fingerprint:
        raise ModelError("draws were not produced from this dataset")
    theta = draws.columns["theta"]
    if theta.shape[1] < 3:
        raise ModelError("Shapiro-Wilk on group residuals needs at least 3 groups")
    E = (theta - draws.columns["mu"][:, None]) / np.sqrt(draws.columns["tau2"])[:, None]
    _, p = shapiro_wilk_many(E)
    return PValueSeries(p, "shapiro-wilk(E)")


def max_uniform_pit(sample: PivotalSample) -> tuple[float, float, float]:
    """``(u_max, u_max**n, 1 - u_max**n)`` for a sample of uniforms.

    The maximum of n independent uniforms has distribution function x**n,
    so the second element is itself uniform under the model.
    """
    if sample.reference != "uniform":
        raise ValueError("max transform needs a uniform-reference sample")
    if len(sample) == 0:
        raise ValueError("max transform needs a nonempty sample")
    u = float(sample.values.max())
    n = len(sample)
    cdf = u**n
    return u, cdf, 1.0 - cdf


def max_pit_series(draws: PosteriorDraws) -> tuple[np.ndarray, PValueSeries]:
    """Per-draw maxima of the Beta transforms and their upper-tail p-values."""
    z = beta_pit_matrix(draws)
    u = z.max(axis=1)
    return u, PValueSeries(1.0 - u ** z.shape[1], "max-pit")


def max_stat_qq(series: Sequence[float], n: int, offset: float = 0.5) -> np.ndarray:
    """Sorted maxima against quantiles ``q**(1/n)`` of the ``x**n`` law."""
    vals = np.sort(np.asarray(series, dtype=float), kind="stable")
    if vals.size == 0:
        raise ValueError("QQ data needs a nonempty series")
    if n < 1:
        raise ValueError("n must be positive")
    theo = plotting_positions(vals.size, offset) ** (1.0 / n)
    return np.column_stack([theo, vals])


def pooled_values(samples: Sequence[PivotalSample]) -> np.ndarray:
    """Concatenate pivotal values across draws (pooled mode)."""
    if not samples:
        raise ValueError("nothing to pool")
    refs = {s.reference for s in samples}
    if len(refs) != 1:
        raise ValueError("cannot pool samples with different references")
    return np.concatenate([s.values for s in samples])
