"""Null-model Monte Carlo harness for the p-values this package computes.

Each replicate simulates one dataset from the assumed model, runs every
requested method on it, and stores the resulting p-value. Under the null a
calibrated p-value is uniform; the report records KS distances and
rejection rates at the 0.05 level so that this can be checked.

Pivotal methods run in single-draw mode: they use the *last* retained
draw of each replicate's chain. Only that marginal is exactly uniform.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .models import BetaBinomialData, GroupedNormalData, ModelError, PriorSpec
from .partial import (
    TestStatistic,
    partial_posterior_pvalue,
    posterior_predictive_pvalue,
    prior_predictive_pvalue,
)
from .pivotal import beta_pit_matrix
from .samplers import ChainConfig, SamplerError, gibbs_normal_hier, mcmc_betabinom
from .shapiro import shapiro_wilk
from .simulate import (
    ImproperPriorError,
    draw_betabinom_data,
    draw_betabinom_params,
    draw_normal_data,
    draw_normal_params,
)
from .models import BetaBinomialParams, NormalHierParams

log = logging.getLogger(__name__)

NORMAL_METHODS = ("pivotal-SW", "partial-posterior", "posterior-predictive", "prior-predictive")
BETABINOM_METHODS = ("pivotal-max",)
MAX_EXCLUDED_FRACTION = 0.01


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings of one calibration study.

    ``hyper`` fixes the data-generating hyperparameters (``mu, tau2,
    sigma2`` or ``alpha, beta``); when ``None`` they are drawn from
    ``prior`` for every replicate, which must then be proper. ``methods``
    defaults to the model's pivotal check.
    ``group_size`` is observations per group (normal) or trials per unit
    (beta-binomial).
    """

    model: str = "normal-hier"
    n_groups: int = 5
    group_size: int = 8
    prior: PriorSpec | None = None
    hyper: Mapping[str, float] | None = None
    replicates: int = 2000
    methods: Sequence[str] | None = None
    seed: int = 0
    chain: ChainConfig = field(default_factory=lambda: ChainConfig(iterations=6000, burn_in=1000))
    statistic: TestStatistic = field(default_factory=lambda: TestStatistic("max-group-mean"))
    prior_draws: int = 4000

    def __post_init__(self):
        if self.model not in ("normal-hier", "beta-binom"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        allowed = NORMAL_METHODS if self.model == "normal-hier" else BETABINOM_METHODS
        if self.methods is None:
            object.__setattr__(self, "methods", allowed[:1])
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = [m for m in self.methods if m not in allowed]
        if bad:
            raise ValueError(f"methods {bad} not available for {self.model}")
        if self.prior is None:
            default = PriorSpec("proper-normal" if self.model == "normal-hier" else "proper-betabinom")
            object.__setattr__(self, "prior", default)
        if (self.model == "normal-hier") != self.prior.is_normal:
            raise ValueError("prior kind does not match the model")
        if self.n_groups < 1 or self.group_size < 1:
            raise ValueError("n_groups and group_size must be positive")
        if self.hyper is not None:
            if self.model == "normal-hier":
                if not (self.hyper.get("tau2", 0.0) > 0.0 and self.hyper.get("sigma2", 0.0) > 0.0):
                    raise ModelError("data-generating tau2 and sigma2 must be positive")
            elif not (self.hyper.get("alpha", 0.0) > 0.0 and self.hyper.get("beta", 0.0) > 0.0):
                raise ModelError("data-generating alpha and beta must be positive")
        elif not self.prior.is_proper:
            raise ImproperPriorError("cannot draw hyperparameters from an improper prior")
        object.__setattr__(self, "methods", tuple(self.methods))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "n_groups": self.n_groups,
            "group_size": self.group_size,
            "prior": self.prior.to_dict(),
            "hyper": dict(self.hyper) if self.hyper is not None else None,
            "replicates": self.replicates,
            "methods": list(self.methods),
            "seed": self.seed,
            "chain": self.chain.to_dict(),
            "statistic": self.statistic.label(),
            "prior_draws": self.prior_draws,
        }


def _replicate_rng(seed: int, replicate: int, purpose: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(replicate), purpose)))
    )


def _replicate_seed(seed: int, replicate: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), 99))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def simulate_null_dataset(config: CalibrationConfig, replicate: int):
    """Return ``(dataset, true_params)`` for one replicate; deterministic."""
    rng = _replicate_rng(config.seed, replicate, 1)
    I = config.n_groups
    if config.model == "normal-hier":
        if config.hyper is None:
            params = draw_normal_params(config.prior, I, rng)
        else:
            h = config.hyper
            theta = h["mu"] + math.sqrt(h["tau2"]) * rng.standard_normal(I)
            params = NormalHierParams(theta, h["mu"], h["tau2"], h["sigma2"])
        return draw_normal_data(params, [config.group_size] * I, rng), params
    if config.hyper is None:
        params = draw_betabinom_params(config.prior, I, rng)
    else:
        h = config.hyper
        p = np.clip(rng.beta(h["alpha"], h["beta"], size=I), 1e-300, 1.0 - 2.0**-53)
        params = BetaBinomialParams(p, h["alpha"], h["beta"])
    return draw_betabinom_data(params, [config.group_size] * I, rng), params


@dataclass(frozen=True)
class ReplicateResult:
    replicate: int
    pvalues: Mapping[str, float]
    pivots: Mapping[str, np.ndarray]
    error: str | None = None


def run_replicate(config: CalibrationConfig, replicate: int) -> ReplicateResult:
    data, _ = simulate_null_dataset(config, replicate)
    chain = replace(config.chain, seed=_replicate_seed(config.seed, replicate))
    pvals: dict[str, float] = {}
    pivots: dict[str, np.ndarray] = {}
    try:
        if config.model == "normal-hier":
            _normal_methods(config, data, chain, pvals, pivots)
        else:
            _betabinom_methods(config, data, chain, pvals, pivots)
    except SamplerError as exc:
        return ReplicateResult(replicate, {}, {}, error=f"{type(exc).__name__}: {exc}")
    return ReplicateResult(replicate, pvals, pivots)


def _normal_methods(config, data: GroupedNormalData, chain, pvals, pivots):
    methods = config.methods
    stat = config.statistic
    draws = None
    if "pivotal-SW" in methods or "posterior-predictive" in methods:
        draws = gibbs_normal_hier(data, config.prior, chain)
    if "pivotal-SW" in methods:
        last = draws[len(draws) - 1]
        E = (last.theta - last.mu) / math.sqrt(last.tau2)
        pivots["E"] = E
        if E.size >= 3:
            pvals["pivotal-SW"] = shapiro_wilk(E)[1]
        else:
            raise ModelError("pivotal-SW needs at least 3 groups")
    if "posterior-predictive" in methods:
        pvals["posterior-predictive"] = posterior_predictive_pvalue(data, stat, draws)
    if "partial-posterior" in methods:
        pvals["partial-posterior"] = partial_posterior_pvalue(data, stat, config.prior, chain)
    if "prior-predictive" in methods:
        pp_cfg = ChainConfig.for_retained(config.prior_draws, burn_in=0, seed=chain.seed)
        pvals["prior-predictive"] = prior_predictive_pvalue(data, stat, config.prior, pp_cfg)


def _betabinom_methods(config, data: BetaBinomialData, chain, pvals, pivots):
    draws = mcmc_betabinom(data, config.prior, chain)
    zeta = beta_pit_matrix(draws)[-1]
    u = float(zeta.max())
    pivots["zeta"] = zeta
    pivots["max_cdf"] = np.array([u**zeta.size])
    pvals["pivotal-max"] = 1.0 - u**zeta.size


@dataclass(frozen=True)
class CalibrationReport:
    config: CalibrationConfig
    pvalues: Mapping[str, np.ndarray]
    ks_distance: Mapping[str, float]
    ks_critical_1pct: float
    rejection_rate: Mapping[str, float]
    pooled_pivots: Mapping[str, np.ndarray]
    excluded: tuple[int, ...] = ()
    degenerate: bool = False

    def ks_passes(self, method: str) -> bool:
        return self.ks_distance[method] < self.ks_critical_1pct

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "replicates_used": int(next(iter(self.pvalues.values())).size) if self.pvalues else 0,
            "excluded": list(self.excluded),
            "ks_critical_1pct": self.ks_critical_1pct,
            "degenerate": self.degenerate,
            "methods": {
                m: {
                    "ks_distance": self.ks_distance[m],
                    "rejection_rate_0.05": self.rejection_rate[m],
                    "mean": float(np.mean(v)),
                    "variance": float(np.var(v, ddof=1)) if v.size > 1 else None,
                }
                for m, v in self.pvalues.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def pvalue_table(self) -> np.ndarray:
        return np.column_stack([self.pvalues[m] for m in self.config.methods])


def ks_uniform_distance(p: np.ndarray) -> float:
    return float(stats.kstest(p, "uniform").statistic)


def ks_critical(n: int, level: float = 0.01) -> float:
    """One-sample KS critical distance at the given level (exact law)."""
    return float(stats.kstwo.ppf(1.0 - level, n))


def calibration_study(config: CalibrationConfig, workers: int = 1) -> CalibrationReport:
    """Run every method on every replicate.

    Replicates that hit a sampler failure are excluded and counted; more
    than 1% excluded aborts the study. ``workers > 1`` spreads replicates
    over processes; results do not depend on the worker count.
    """
    reps = range(config.replicates)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replicate, [config] * len(reps), reps, chunksize=16))
    else:
        results = [run_replicate(config, r) for r in reps]
    excluded = tuple(r.replicate for r in results if r.error is not None)
    for r in results:
        if r.error is not None:
            log.warning("replicate %d excluded: %s", r.replicate, r.error)
    if len(excluded) > MAX_EXCLUDED_FRACTION * config.replicates:
        raise CalibrationError(
            f"{len(excluded)} of {config.replicates} replicates failed (limit 1%)"
        )
    good = [r for r in results if r.error is None]
    pvalues = {m: np.array([r.pvalues[m] for r in good]) for m in config.methods}
    pooled = {}
    if good:
        for key in good[0].pivots:
            pooled[key] = np.concatenate([r.pivots[key] for r in good])
    n = len(good)
    ks = {m: ks_uniform_distance(v) for m, v in pvalues.items()}
    rej = {m: float(np.mean(v <= 0.05)) for m, v in pvalues.items()}
    return CalibrationReport(
        config=config,
        pvalues=pvalues,
        ks_distance=ks,
        ks_critical_1pct=ks_critical(max(n, 1)),
        rejection_rate=rej,
        pooled_pivots=pooled,
        excluded=excluded,
        degenerate=n < 2,
    )
