"""Forward simulation from the two hierarchical models.

Used by the Geweke joint-distribution check and the null-model calibration
harness. Hyperparameters are drawn from a *proper* prior only.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as sp

from .models import (
    BetaBinomialData,
    BetaBinomialParams,
    GroupedNormalData,
    ModelError,
    NormalHierParams,
    PriorSpec,
)


class ImproperPriorError(ModelError):
    """Raised when an operation needs draws from an improper prior."""


def _require_proper(prior: PriorSpec) -> None:
    if not prior.is_proper:
        raise ImproperPriorError(
            f"prior kind {prior.kind!r} is improper; cannot draw hyperparameters from it"
        )


def _truncated_gamma(rng: np.random.Generator, shape: float, rate: float, lo: float, hi: float) -> float:
    plo = sp.gammainc(shape, rate * lo)
    phi = sp.gammainc(shape, rate * hi)
    u = plo + rng.random() * (phi - plo)
    return float(np.clip(sp.gammaincinv(shape, u) / rate, lo, hi))


def draw_normal_hyper(prior: PriorSpec, rng: np.random.Generator) -> tuple[float, float, float]:
    """Draw ``(mu, tau2, sigma2)`` from a proper normal-model prior."""
    _require_proper(prior)
    hp = prior.hyperparams
    fx = prior.fixed
    mu = float(fx["mu"]) if "mu" in fx else hp["mu_mean"] + math.sqrt(hp["mu_var"]) * rng.standard_normal()
    tau2 = float(fx["tau2"]) if "tau2" in fx else hp["tau2_scale"] / rng.gamma(hp["tau2_shape"])
    if "sigma2" in fx:
        s2 = np.asarray(fx["sigma2"], dtype=float)
        sigma2 = float(s2) if s2.ndim == 0 else s2
    else:
        sigma2 = hp["sigma2_scale"] / rng.gamma(hp["sigma2_shape"])
    return float(mu), float(tau2), sigma2


def draw_normal_params(prior: PriorSpec, n_groups: int, rng: np.random.Generator) -> NormalHierParams:
    mu, tau2, sigma2 = draw_normal_hyper(prior, rng)
    theta = mu + math.sqrt(tau2) * rng.standard_normal(n_groups)
    return NormalHierParams(theta, mu, tau2, sigma2)


def draw_normal_params_many(
    prior: PriorSpec, n_groups: int, size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """``size`` independent prior draws as ``(theta, sigma2)`` arrays.

    ``sigma2`` has shape ``(size, n_groups)`` so per-group values fit too.
    """
    _require_proper(prior)
    hp = prior.hyperparams
    fx = prior.fixed
    mu = (
        np.full(size, float(fx["mu"])) if "mu" in fx
        else hp["mu_mean"] + math.sqrt(hp["mu_var"]) * rng.standard_normal(size)
    )
    tau2 = (
        np.full(size, float(fx["tau2"])) if "tau2" in fx
        else hp["tau2_scale"] / rng.gamma(hp["tau2_shape"], size=size)
    )
    if "sigma2" in fx:
        s2 = np.broadcast_to(np.asarray(fx["sigma2"], dtype=float), (size, n_groups)).copy()
    else:
        s2 = np.repeat((hp["sigma2_scale"] / rng.gamma(hp["sigma2_shape"], size=size))[:, None], n_groups, axis=1)
    theta = mu[:, None] + np.sqrt(tau2)[:, None] * rng.standard_normal((size, n_groups))
    return theta, s2


def draw_normal_data(params: NormalHierParams, sizes, rng: np.random.Generator) -> GroupedNormalData:
    sd = np.sqrt(params.sigma2_per_group())
    groups = [th + s * rng.standard_normal(int(n)) for th, s, n in zip(params.theta, sd, sizes)]
    return GroupedNormalData(groups)


def draw_betabinom_hyper(prior: PriorSpec, rng: np.random.Generator) -> tuple[float, float]:
    """Draw ``(alpha, beta)`` from the proper Gamma priors truncated to the box."""
    _require_proper(prior)
    hp = prior.hyperparams
    lo, hi = prior.box
    fx = prior.fixed
    alpha = float(fx["alpha"]) if "alpha" in fx else _truncated_gamma(
        rng, hp["alpha_shape"], hp["alpha_rate"], lo, hi
    )
    beta = float(fx["beta"]) if "beta" in fx else _truncated_gamma(
        rng, hp["beta_shape"], hp["beta_rate"], lo, hi
    )
    return alpha, beta


def draw_betabinom_params(prior: PriorSpec, n_units: int, rng: np.random.Generator) -> BetaBinomialParams:
    alpha, beta = draw_betabinom_hyper(prior, rng)
    p = np.clip(rng.beta(alpha, beta, size=n_units), 1e-300, 1.0 - 2.0**-53)
    return BetaBinomialParams(p, alpha, beta)


def draw_betabinom_data(params: BetaBinomialParams, trials, rng: np.random.Generator) -> BetaBinomialData:
    trials = np.asarray(trials, dtype=np.int64)
    return BetaBinomialData(rng.binomial(trials, params.p), trials)
