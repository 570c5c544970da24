"""Data containers, likelihoods and prior densities for the two hierarchical models.

Normal-normal model::

    y_ij | theta_i, sigma_i^2 ~ N(theta_i, sigma_i^2)
    theta_i | mu, tau^2       ~ N(mu, tau^2)

Beta-binomial model::

    x_i | p_i          ~ Binomial(n_i, p_i)
    p_i | alpha, beta  ~ Beta(alpha, beta)

Log densities return :data:`LOG_ZERO` (``-inf``) outside a prior's support
box. The sentinel is assigned explicitly, never reached by overflow.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .special import beta_logpdf

LOG_ZERO = -math.inf

NORMAL_KINDS = ("proper-normal", "truncated-improper-normal")
BETABINOM_KINDS = ("truncated-jeffreys-betabinom", "proper-betabinom")
PRIOR_KINDS = NORMAL_KINDS + BETABINOM_KINDS

DEFAULT_A_NORMAL = 1e6
DEFAULT_A_BETABINOM = 1e3

# hyperparameters of the proper kinds and their defaults
PROPER_NORMAL_DEFAULTS = {
    "mu_mean": 0.0,
    "mu_var": 1.0,
    "tau2_shape": 3.0,
    "tau2_scale": 2.0,
    "sigma2_shape": 3.0,
    "sigma2_scale": 2.0,
}
PROPER_BETABINOM_DEFAULTS = {
    "alpha_shape": 4.0,
    "alpha_rate": 1.0,
    "beta_shape": 8.0,
    "beta_rate": 1.0,
}

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ModelError(ValueError):
    """Raised when data or parameters violate a model invariant."""


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ModelError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GroupedNormalData:
    """Observations ``y_ij`` grouped by second-stage unit ``i``."""

    groups: tuple[np.ndarray, ...]

    def __init__(self, groups: Sequence[Sequence[float]]):
        arrs = tuple(_as_float_array(g, "group") for g in groups)
        # one group is allowed for conjugate checks; samplers and
        # diagnostics enforce their own minimum group counts
        if len(arrs) < 1:
            raise ModelError("grouped normal data needs at least one group")
        for i, g in enumerate(arrs):
            if g.size == 0:
                raise ModelError(f"group {i} is empty")
        object.__setattr__(self, "groups", arrs)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups], dtype=float)

    @property
    def means(self) -> np.ndarray:
        return np.array([g.mean() for g in self.groups])

    @property
    def within_ss(self) -> np.ndarray:
        """Per-group sum of squared deviations about the group mean."""
        return np.array([np.sum((g - g.mean()) ** 2) for g in self.groups])

    @property
    def n_obs(self) -> int:
        return int(sum(g.size for g in self.groups))

    def fingerprint(self) -> str:
        h = hashlib.sha256(b"normal-hier")
        for g in self.groups:
            h.update(np.int64(g.size).tobytes())
            h.update(np.ascontiguousarray(g, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class BetaBinomialData:
    """Success counts ``x_i`` out of ``n_i`` trials per unit."""

    successes: np.ndarray
    trials: np.ndarray

    def __init__(self, successes: Sequence[int], trials: Sequence[int]):
        x = np.array(successes)
        n = np.array(trials)
        if x.shape != n.shape or x.ndim != 1:
            raise ModelError("successes and trials must be equal-length sequences")
        if x.size < 1:
            raise ModelError("beta-binomial data needs at least one unit")
        if not (np.all(x == np.round(x)) and np.all(n == np.round(n))):
            raise ModelError("counts must be integers")
        x = x.astype(np.int64)
        n = n.astype(np.int64)
        if np.any(n <= 0):
            raise ModelError("every unit needs a positive number of trials")
        if np.any(x < 0) or np.any(x > n):
            raise ModelError("successes must satisfy 0 <= x_i <= n_i")
        x.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "successes", x)
        object.__setattr__(self, "trials", n)

    @property
    def n_units(self) -> int:
        return int(self.successes.size)

    def fingerprint(self) -> str:
        h = hashlib.sha256(b"beta-binom")
        h.update(np.ascontiguousarray(self.successes, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.trials, dtype="<i8").tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class NormalHierParams:
    """One parameter state of the normal-normal model.

    ``sigma2`` is either a single shared observation variance or a
    per-group sequence.
    """

    theta: np.ndarray
    mu: float
    tau2: float
    sigma2: float | np.ndarray

    def __init__(self, theta, mu: float, tau2: float, sigma2):
        th = _as_float_array(theta, "theta")
        mu = float(mu)
        tau2 = float(tau2)
        if not math.isfinite(mu):
            raise ModelError("mu must be finite")
        if not (math.isfinite(tau2) and tau2 > 0.0):
            raise ModelError("tau2 must be positive")
        if np.ndim(sigma2) == 0:
            s2 = float(sigma2)
            if not (math.isfinite(s2) and s2 > 0.0):
                raise ModelError("sigma2 must be positive")
        else:
            s2 = _as_float_array(sigma2, "sigma2")
            if s2.shape != th.shape:
                raise ModelError("per-group sigma2 must match theta in length")
            if np.any(s2 <= 0.0):
                raise ModelError("sigma2 entries must be positive")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "tau2", tau2)
        object.__setattr__(self, "sigma2", s2)

    def sigma2_per_group(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma2, dtype=float), self.theta.shape)


@dataclass(frozen=True)
class BetaBinomialParams:
    p: np.ndarray
    alpha: float
    beta: float

    def __init__(self, p, alpha: float, beta: float):
        arr = _as_float_array(p, "p")
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ModelError("rates p_i must lie strictly inside (0, 1)")
        alpha = float(alpha)
        beta = float(beta)
        if not (alpha > 0.0 and beta > 0.0 and math.isfinite(alpha) and math.isfinite(beta)):
            raise ModelError("alpha and beta must be positive and finite")
        object.__setattr__(self, "p", arr)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)


def _jeffreys_standin(alpha: float, beta: float) -> float:
    return -2.5 * math.log(alpha + beta)


@dataclass(frozen=True)
class PriorSpec:
    """Prior configuration for either model.

    ``a`` sets the truncation box. For the normal kinds the box is
    ``mu in (-a, a)`` and ``sigma2, tau2 in (1/a, a)``. For the beta-binomial
    kinds ``(alpha, beta)`` is restricted to ``(1/a, a)^2``; a value below 1
    is read as the reciprocal so that ``a=1e-3`` and ``a=1e3`` give the
    same box.

    ``fixed`` pins parameters to known values (point-mass priors), e.g.
    ``{"sigma2": 1.0}`` or per-group ``{"sigma2": [1.0, 4.0, ...]}``.

    ``betabinom_logdensity`` is the plug-in log density on ``(alpha, beta)``
    for the truncated Jeffreys kind; the default stand-in is
    ``-5/2 * log(alpha + beta)``.
    """

    kind: str
    a: float | None = None
    hyperparams: Mapping[str, float] = field(default_factory=dict)
    fixed: Mapping[str, object] = field(default_factory=dict)
    betabinom_logdensity: Callable[[float, float], float] | None = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ModelError(f"unknown prior kind {self.kind!r}")
        a = self.a
        if a is None:
            a = DEFAULT_A_NORMAL if self.kind in NORMAL_KINDS else DEFAULT_A_BETABINOM
        a = float(a)
        if self.kind in BETABINOM_KINDS and 0.0 < a < 1.0:
            a = 1.0 / a
        if not (math.isfinite(a) and a > 1.0):
            raise ModelError("truncation parameter a must exceed 1")
        object.__setattr__(self, "a", a)
        defaults = (
            PROPER_NORMAL_DEFAULTS if self.kind == "proper-normal"
            else PROPER_BETABINOM_DEFAULTS if self.kind == "proper-betabinom"
            else {}
        )
        unknown = set(self.hyperparams) - set(defaults)
        if unknown:
            raise ModelError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")
        hp = {**defaults, **{k: float(v) for k, v in self.hyperparams.items()}}
        for k, v in hp.items():
            if k != "mu_mean" and not v > 0.0:
                raise ModelError(f"hyperparameter {k} must be positive")
        object.__setattr__(self, "hyperparams", hp)
        allowed = {"mu", "tau2", "sigma2"} if self.is_normal else {"alpha", "beta"}
        bad = set(self.fixed) - allowed
        if bad:
            raise ModelError(f"cannot fix {sorted(bad)} under prior {self.kind}")

    @property
    def is_normal(self) -> bool:
        return self.kind in NORMAL_KINDS

    @property
    def is_proper(self) -> bool:
        return self.kind.startswith("proper")

    @property
    def box(self) -> tuple[float, float]:
        """Open interval for variance components or (alpha, beta)."""
        return 1.0 / self.a, self.a

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "a": self.a, "hyperparams": dict(self.hyperparams)}
        if self.fixed:
            out["fixed"] = {
                k: (np.asarray(v).tolist()) for k, v in sorted(self.fixed.items())
            }
        if self.betabinom_logdensity is not None:
            out["betabinom_logdensity"] = getattr(
                self.betabinom_logdensity, "__name__", "custom"
            )
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def loglik_normal_hier(data: GroupedNormalData, params: NormalHierParams) -> float:
    """First-stage log likelihood ``sum_ij log N(y_ij; theta_i, sigma_i^2)``."""
    if params.theta.size != data.n_groups:
        raise ModelError(
            f"theta has {params.theta.size} entries but data has {data.n_groups} groups"
        )
    s2 = params.sigma2_per_group()
    total = 0.0
    for g, th, v in zip(data.groups, params.theta, s2):
        z = (g - th) / math.sqrt(v)
        total += float(np.sum(-0.5 * z * z)) - g.size * (_LOG_SQRT_2PI + 0.5 * math.log(v))
    return total


def logprior_normal_hier(params: NormalHierParams, prior: PriorSpec) -> float:
    """Unnormalised log prior density of ``(mu, tau2, sigma2)``.

    The second-stage density of ``theta`` is part of the model, not the
    prior, and is evaluated by :func:`log_second_stage_normal`.
    """
    if not prior.is_normal:
        raise ModelError(f"prior kind {prior.kind!r} does not apply to the normal model")
    if prior.kind == "truncated-improper-normal":
        a = prior.a
        lo, hi = prior.box
        total = 0.0
        if "mu" not in prior.fixed:
            if not -a < params.mu < a:
                return LOG_ZERO
        if "tau2" not in prior.fixed:
            if not lo < params.tau2 < hi:
                return LOG_ZERO
            total -= 0.5 * math.log(params.tau2)
        if "sigma2" not in prior.fixed:
            s2 = np.atleast_1d(params.sigma2)
            if np.any(s2 <= lo) or np.any(s2 >= hi):
                return LOG_ZERO
            total -= float(np.sum(np.log(s2)))
        return total
    hp = prior.hyperparams
    total = 0.0
    if "mu" not in prior.fixed:
        total += -0.5 * (params.mu - hp["mu_mean"]) ** 2 / hp["mu_var"] - 0.5 * math.log(
            2.0 * math.pi * hp["mu_var"]
        )
    if "tau2" not in prior.fixed:
        total += _inv_gamma_logpdf(params.tau2, hp["tau2_shape"], hp["tau2_scale"])
    if "sigma2" not in prior.fixed:
        for s2 in np.atleast_1d(params.sigma2):
            total += _inv_gamma_logpdf(float(s2), hp["sigma2_shape"], hp["sigma2_scale"])
    return total


def log_second_stage_normal(params: NormalHierParams) -> float:
    """``sum_i log N(theta_i; mu, tau2)``."""
    z2 = (params.theta - params.mu) ** 2 / params.tau2
    return float(-0.5 * np.sum(z2) - params.theta.size * (_LOG_SQRT_2PI + 0.5 * math.log(params.tau2)))


def _inv_gamma_logpdf(x: float, shape: float, scale: float) -> float:
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * math.log(x) - scale / x


def _gamma_logpdf(x: float, shape: float, rate: float) -> float:
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x


def loglik_betabinom(data: BetaBinomialData, params: BetaBinomialParams) -> float:
    """Binomial kernel plus the second-stage Beta log density of each ``p_i``.

    The binomial coefficients are omitted, they do not depend on parameters.
    """
    if params.p.size != data.n_units:
        raise ModelError(f"p has {params.p.size} entries but data has {data.n_units} units")
    x = data.successes
    n = data.trials
    p = params.p
    total = float(np.sum(x * np.log(p) + (n - x) * np.log1p(-p)))
    for pi in p:
        total += beta_logpdf(float(pi), params.alpha, params.beta)
    return total


def logprior_betabinom(params: BetaBinomialParams, prior: PriorSpec) -> float:
    """Log prior of ``(alpha, beta)`` restricted to the box ``(1/a, a)^2``."""
    if prior.is_normal:
        raise ModelError(f"prior kind {prior.kind!r} does not apply to the beta-binomial model")
    return logprior_alpha_beta(params.alpha, params.beta, prior)


def logprior_alpha_beta(alpha: float, beta: float, prior: PriorSpec) -> float:
    lo, hi = prior.box
    free = [name for name in ("alpha", "beta") if name not in prior.fixed]
    vals = {"alpha": alpha, "beta": beta}
    for name in free:
        if not lo < vals[name] < hi:
            return LOG_ZERO
    if prior.kind == "truncated-jeffreys-betabinom":
        density = prior.betabinom_logdensity or _jeffreys_standin
        return float(density(alpha, beta))
    hp = prior.hyperparams
    total = 0.0
    if "alpha" in free:
        total += _gamma_logpdf(alpha, hp["alpha_shape"], hp["alpha_rate"])
    if "beta" in free:
        total += _gamma_logpdf(beta, hp["beta_shape"], hp["beta_rate"])
    return total


def model_of(prior: PriorSpec) -> str:
    return "normal-hier" if prior.is_normal else "beta-binom"
