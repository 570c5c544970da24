"""Geweke (2004) joint-distribution test for the samplers.

Two simulators target the same joint law of (parameters, data):

* marginal-conditional: parameters from the prior, then data given them;
* successive-conditional: alternate data given parameters with one sampler
  sweep given data.

If the sampler leaves the posterior invariant, moments of any function of
the parameters agree between the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .models import BetaBinomialParams, NormalHierParams, PriorSpec
from .samplers import BetaBinomialSampler, NormalHierGibbs, effective_sample_size, make_streams
from .simulate import (
    draw_betabinom_data,
    draw_betabinom_params,
    draw_normal_data,
    draw_normal_params,
)

NORMAL_FUNCTIONS: Mapping[str, Callable[[NormalHierParams], float]] = {
    "mu": lambda s: s.mu,
    "tau2": lambda s: s.tau2,
    "mu^2": lambda s: s.mu**2,
    "log tau2": lambda s: math.log(s.tau2),
    "theta_1": lambda s: float(s.theta[0]),
    "log sigma2": lambda s: float(np.log(np.mean(s.sigma2))),
}

BETABINOM_FUNCTIONS: Mapping[str, Callable[[BetaBinomialParams], float]] = {
    "alpha": lambda s: s.alpha,
    "beta": lambda s: s.beta,
    "alpha^2": lambda s: s.alpha**2,
    "log alpha": lambda s: math.log(s.alpha),
    "p_1": lambda s: float(s.p[0]),
}


@dataclass(frozen=True)
class GewekeResult:
    z_scores: Mapping[str, float]
    marginal_means: Mapping[str, float]
    successive_means: Mapping[str, float]
    successive_ess: Mapping[str, float]
    threshold: float = 3.0

    @property
    def passed(self) -> bool:
        return all(abs(z) < self.threshold for z in self.z_scores.values())


def _compare(marg: dict[str, np.ndarray], succ: dict[str, np.ndarray]) -> GewekeResult:
    z, mm, sm, ess = {}, {}, {}, {}
    for name in marg:
        a, b = marg[name], succ[name]
        e = effective_sample_size(b)
        se2 = a.var(ddof=1) / a.size + b.var(ddof=1) / e
        z[name] = float((a.mean() - b.mean()) / math.sqrt(se2))
        mm[name] = float(a.mean())
        sm[name] = float(b.mean())
        ess[name] = e
    return GewekeResult(z, mm, sm, ess)


def geweke_normal(
    prior: PriorSpec,
    sizes,
    n_marginal: int = 100_000,
    n_successive: int = 100_000,
    seed: int = 0,
    functions: Mapping[str, Callable] = NORMAL_FUNCTIONS,
) -> GewekeResult:
    sizes = [int(n) for n in sizes]
    I = len(sizes)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(101,))))
    marg = {k: np.empty(n_marginal) for k in functions}
    for m in range(n_marginal):
        s = draw_normal_params(prior, I, rng)
        for k, f in functions.items():
            marg[k][m] = f(s)

    streams = make_streams(seed, 202)
    state = draw_normal_params(prior, I, rng)
    succ = {k: np.empty(n_successive) for k in functions}
    for m in range(n_successive):
        data = draw_normal_data(state, sizes, rng)
        state = NormalHierGibbs(data, prior).sweep(state, streams)
        for k, f in functions.items():
            succ[k][m] = f(state)
    return _compare(marg, succ)


def geweke_betabinom(
    prior: PriorSpec,
    trials,
    n_marginal: int = 100_000,
    n_successive: int = 100_000,
    seed: int = 0,
    step: float = 0.5,
    functions: Mapping[str, Callable] = BETABINOM_FUNCTIONS,
) -> GewekeResult:
    trials = np.asarray(trials, dtype=np.int64)
    I = trials.size
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(303,))))
    marg = {k: np.empty(n_marginal) for k in functions}
    for m in range(n_marginal):
        s = draw_betabinom_params(prior, I, rng)
        for k, f in functions.items():
            marg[k][m] = f(s)

    streams = make_streams(seed, 404)
    state = draw_betabinom_params(prior, I, rng)
    succ = {k: np.empty(n_successive) for k in functions}
    for m in range(n_successive):
        data = draw_betabinom_data(state, trials, rng)
        state, _ = BetaBinomialSampler(data, prior, step).sweep(state, streams)
        for k, f in functions.items():
            succ[k][m] = f(state)
    return _compare(marg, succ)
