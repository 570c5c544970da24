"""Partial posterior, posterior-predictive and prior-predictive p-values.

The partial posterior of the normal-normal parameters given the data
*excluding* the information in a statistic ``t`` has density proportional
to ``f(x | params) pi(params) / f(t_obs | params)``. The statistics offered
here are functions of the group means, whose sampling densities are exact
normal-family closed forms.

Tail conventions: large values are surprising for ``group-mean``,
``max-group-mean`` and ``contrast``; small values for ``min-group-mean``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from .models import GroupedNormalData, ModelError, NormalHierParams, PriorSpec
from .samplers import (
    TARGET_ACCEPT,
    ChainConfig,
    NormalHierGibbs,
    PosteriorDraws,
    SamplerError,
    make_streams,
    truncated_inv_gamma,
    truncated_normal,
)
from .simulate import ImproperPriorError, draw_normal_params_many

__all__ = [
    "TestStatistic",
    "PartialPosteriorDraws",
    "ImproprietyError",
    "statistic_value",
    "statistic_logdensity",
    "statistic_tail",
    "sample_partial_posterior",
    "partial_posterior_pvalue",
    "posterior_predictive_pvalue",
    "prior_predictive_pvalue",
    "tail_average",
]

STATISTICS = ("group-mean", "max-group-mean", "min-group-mean", "contrast")
MONITOR_WINDOW = 1000
MONITOR_GROWTH = 50.0
MONITOR_PATIENCE = 3
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ImproprietyError(SamplerError):
    """The partial posterior chain drifts off, suggesting an improper target."""


@dataclass(frozen=True)
class TestStatistic:
    """A statistic of the group means.

    ``group`` is a 0-based group index, required by ``group-mean`` and
    ``contrast``. ``contrast`` is ``y_i1 - y_i2`` within one group; with
    known ``sigma2`` its distribution N(0, 2 sigma_i^2) is free of every
    other parameter, which makes it ancillary.
    """

    __test__ = False  # not a pytest class

    name: str
    group: int | None = None

    def __post_init__(self):
        if self.name not in STATISTICS:
            raise ValueError(f"unknown statistic {self.name!r}; choose from {STATISTICS}")
        if self.name in ("group-mean", "contrast"):
            if self.group is None or self.group < 0:
                raise ValueError(f"{self.name} needs a non-negative group index")
        elif self.group is not None:
            raise ValueError(f"{self.name} takes no group index")

    @classmethod
    def parse(cls, text: str) -> "TestStatistic":
        """Parse ``group-mean:<i>`` (1-based), ``max-group-mean``, ...."""
        name, _, idx = text.partition(":")
        if idx:
            i = int(idx)
            if i < 1:
                raise ValueError("group numbers on the command line start at 1")
            return cls(name, i - 1)
        return cls(name)

    def label(self) -> str:
        return self.name if self.group is None else f"{self.name}:{self.group + 1}"

    def check(self, n_groups: int, sizes=None) -> None:
        if self.group is not None and self.group >= n_groups:
            raise ModelError(f"group index {self.group} invalid for {n_groups} groups")
        if self.name == "contrast" and sizes is not None and sizes[self.group] < 2:
            raise ModelError("contrast needs at least two observations in its group")


def statistic_value(data: GroupedNormalData, stat: TestStatistic) -> float:
    stat.check(data.n_groups, data.sizes)
    if stat.name == "group-mean":
        return float(data.means[stat.group])
    if stat.name == "max-group-mean":
        return float(data.means.max())
    if stat.name == "min-group-mean":
        return float(data.means.min())
    g = data.groups[stat.group]
    return float(g[0] - g[1])


def _scales(stat: TestStatistic, theta, sigma2, sizes) -> tuple[np.ndarray, np.ndarray]:
    """Location and scale arrays (last axis = groups) of the group-mean laws."""
    theta = np.asarray(theta, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if sigma2.ndim < theta.ndim:
        sigma2 = sigma2[..., None]
    return theta, np.sqrt(sigma2 / np.asarray(sizes, dtype=float))


def statistic_logdensity(t: float, params: NormalHierParams, stat: TestStatistic, group_sizes) -> float:
    """Exact log sampling density of the statistic at ``t``."""
    return float(_logdensity(t, params.theta, params.sigma2, stat, group_sizes))


def _logdensity(t, theta, sigma2, stat: TestStatistic, sizes):
    """Vectorised over leading axes of ``theta`` (draws)."""
    if stat.name == "contrast":
        s2 = np.asarray(sigma2, dtype=float)
        s2 = s2[..., stat.group] if s2.ndim == np.ndim(theta) else s2
        v = 2.0 * s2
        return -0.5 * t * t / v - _LOG_SQRT_2PI - 0.5 * np.log(v)
    loc, sd = _scales(stat, theta, sigma2, sizes)
    z = (t - loc) / sd
    logphi = -0.5 * z * z - _LOG_SQRT_2PI - np.log(sd)
    if stat.name == "group-mean":
        return logphi[..., stat.group]
    if stat.name == "max-group-mean":
        logcdf = log_ndtr(z)
    else:
        logcdf = log_ndtr(-z)
    total = logcdf.sum(axis=-1, keepdims=True)
    # sum_i phi_i(t) prod_{j != i} F_j(t) in log space
    return _logsumexp(logphi + total - logcdf)


def _logsumexp(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(x - m).sum(axis=-1)) + m[..., 0]


def statistic_tail(t: float, theta, sigma2, stat: TestStatistic, sizes) -> np.ndarray:
    """Tail probability in the surprising direction, vectorised over draws."""
    theta = np.asarray(theta, dtype=float)
    if t == math.inf:
        return np.zeros(theta.shape[:-1]) if stat.name != "min-group-mean" else np.ones(theta.shape[:-1])
    if t == -math.inf:
        return np.ones(theta.shape[:-1]) if stat.name != "min-group-mean" else np.zeros(theta.shape[:-1])
    if stat.name == "contrast":
        s2 = np.asarray(sigma2, dtype=float)
        s2 = s2[..., stat.group] if s2.ndim == theta.ndim else s2
        return np.broadcast_to(ndtr(-t / np.sqrt(2.0 * s2)), theta.shape[:-1]).copy()
    loc, sd = _scales(stat, theta, sigma2, sizes)
    z = (t - loc) / sd
    if stat.name == "group-mean":
        return ndtr(-z[..., stat.group])
    if stat.name == "max-group-mean":
        return -np.expm1(log_ndtr(z).sum(axis=-1))
    return -np.expm1(log_ndtr(-z).sum(axis=-1))


def tail_average(t: float, theta, sigma2, stat: TestStatistic, sizes) -> float:
    return float(np.mean(statistic_tail(t, theta, sigma2, stat, sizes)))


@dataclass(frozen=True)
class PartialPosteriorDraws:
    draws: PosteriorDraws
    statistic: TestStatistic
    t_obs: float
    acceptance: dict

    def __len__(self) -> int:
        return len(self.draws)


class _PartialSampler:
    """Metropolis-within-Gibbs on the partial posterior.

    ``mu`` and ``tau2`` do not enter ``f(t | params)`` so their full
    conditionals are unchanged and sampled exactly. ``theta`` moves as one
    random-walk block with per-coordinate scales, ``sigma2`` (when free)
    as a random walk on the log scale.
    """

    def __init__(self, data, prior, stat, t_obs, config):
        self.gibbs = NormalHierGibbs(data, prior)
        self.data = data
        self.prior = prior
        self.stat = stat
        self.t = float(t_obs)
        self.sizes = data.sizes
        g = self.gibbs
        init = g.initial_state()
        prec = g.n / np.asarray(init.sigma2) + 1.0 / init.tau2
        base = 1.0 / np.sqrt(prec)
        scale = config.step_sizes.get("theta", 2.38 / math.sqrt(data.n_groups))
        self.theta_scale = base
        self.log_c_theta = math.log(scale) if scale > 0 else None
        s2_step = config.step_sizes.get("log_sigma2", math.sqrt(2.0 / max(g.n_total, 1.0)) * 2.38)
        self.log_c_sigma = math.log(s2_step) if s2_step > 0 else None
        self.init = init

    def log_t(self, theta, sigma2) -> float:
        return float(_logdensity(self.t, theta, sigma2, self.stat, self.sizes))

    def _log_theta_cond(self, theta, mu, tau2, sigma2) -> float:
        g = self.gibbs
        s2 = np.asarray(sigma2)
        # first stage via sufficient statistics plus second stage
        return float(
            -0.5 * np.sum(g.n * (g.ybar - theta) ** 2 / s2) - 0.5 * np.sum((theta - mu) ** 2) / tau2
        )

    def _log_sigma_cond(self, sigma2, theta) -> float:
        g = self.gibbs
        prior = self.prior
        ss = float(np.sum(g.within + g.n * (g.ybar - theta) ** 2))
        if prior.kind == "truncated-improper-normal":
            lo, hi = prior.box
            if not lo < sigma2 < hi:
                return -math.inf
            shape, scale = 0.5 * g.n_total, 0.5 * ss
        else:
            hp = prior.hyperparams
            shape = hp["sigma2_shape"] + 0.5 * g.n_total
            scale = hp["sigma2_scale"] + 0.5 * ss
        # density of log sigma2: inverse-gamma kernel times Jacobian sigma2
        return -shape * math.log(sigma2) - scale / sigma2

    def sweep(self, state, streams, adapting: bool, it: int):
        g = self.gibbs
        prior = self.prior
        hp = prior.hyperparams
        improper = prior.kind == "truncated-improper-normal"
        lo, hi = prior.box
        theta, mu, tau2, sigma2 = state
        acc_theta = acc_sigma = None

        if self.log_c_theta is not None:
            c = math.exp(self.log_c_theta)
            prop = theta + c * self.theta_scale * streams["theta"].standard_normal(theta.size)
            lt_new = self.log_t(prop, sigma2)
            cur = self._log_theta_cond(theta, mu, tau2, sigma2) - self.cur_lt
            new = self._log_theta_cond(prop, mu, tau2, sigma2) - lt_new
            acc_theta = math.log(streams["accept"].random() or 5e-324) < new - cur
            if acc_theta:
                theta = prop
                self.cur_lt = lt_new
            if adapting:
                self.log_c_theta += (float(acc_theta) - TARGET_ACCEPT) / math.sqrt(it + 1.0)

        if g.fixed_mu is None:
            if improper:
                mu = truncated_normal(streams["mu"], float(theta.mean()), math.sqrt(tau2 / g.I), -prior.a, prior.a)
            else:
                p = g.I / tau2 + 1.0 / hp["mu_var"]
                m = (theta.sum() / tau2 + hp["mu_mean"] / hp["mu_var"]) / p
                mu = m + streams["mu"].standard_normal() / math.sqrt(p)

        if g.fixed_tau2 is None:
            s = float(np.sum((theta - mu) ** 2))
            if improper:
                tau2 = truncated_inv_gamma(streams["tau2"], 0.5 * (g.I - 1), 0.5 * s, lo, hi)
            else:
                tau2 = (hp["tau2_scale"] + 0.5 * s) / streams["tau2"].gamma(hp["tau2_shape"] + 0.5 * g.I)

        if g.fixed_sigma2 is None and self.log_c_sigma is not None:
            c = math.exp(self.log_c_sigma)
            prop = sigma2 * math.exp(c * streams["sigma2"].standard_normal())
            new = self._log_sigma_cond(prop, theta)
            if new > -math.inf:
                lt_new = self.log_t(theta, prop)
                cur = self._log_sigma_cond(sigma2, theta) - self.cur_lt
                new -= lt_new
                acc_sigma = math.log(streams["accept"].random() or 5e-324) < new - cur
            else:
                acc_sigma = False
            if acc_sigma:
                sigma2 = prop
                self.cur_lt = lt_new
            if adapting:
                self.log_c_sigma += (float(acc_sigma) - TARGET_ACCEPT) / math.sqrt(it + 1.0)

        return (theta, mu, tau2, sigma2), acc_theta, acc_sigma


def sample_partial_posterior(
    data: GroupedNormalData,
    t_obs: float,
    stat: TestStatistic,
    prior: PriorSpec,
    config: ChainConfig,
    monitor_window: int = MONITOR_WINDOW,
    monitor_growth: float = MONITOR_GROWTH,
) -> PartialPosteriorDraws:
    """Draw from the partial posterior given ``t_obs``.

    Raises :class:`ImproprietyError` when the running maximum of
    ``-log f(t_obs | params)`` grows by more than ``monitor_growth`` log
    units in each of ``MONITOR_PATIENCE`` consecutive windows of
    ``monitor_window`` sweeps. This is a heuristic for a drifting chain,
    not a proof of impropriety.
    """
    stat.check(data.n_groups, data.sizes)
    if not math.isfinite(t_obs):
        raise ValueError("t_obs must be finite to define a partial posterior")
    sampler = _PartialSampler(data, prior, stat, t_obs, config)
    streams = make_streams(config.seed, 17)
    init = sampler.init
    state = (init.theta.copy(), init.mu, init.tau2, init.sigma2)
    sampler.cur_lt = sampler.log_t(state[0], state[3])
    if sampler.cur_lt == -math.inf:
        raise ModelError("statistic density is zero at t_obs for the initial parameters")

    M = config.n_retained
    I = data.n_groups
    theta_out = np.empty((M, I))
    mu_out = np.empty(M)
    tau2_out = np.empty(M)
    per_group = np.ndim(state[3]) == 1
    s2_out = np.empty((M, I)) if per_group else np.empty(M)
    n_theta = n_sigma = n_post = 0
    run_max = -math.inf
    last_window_max = None
    growth_streak = 0
    k = 0
    for it in range(config.iterations):
        adapting = config.adapt and it < config.burn_in
        state, a_t, a_s = sampler.sweep(state, streams, adapting, it)
        neg = -sampler.cur_lt
        run_max = max(run_max, neg)
        if (it + 1) % monitor_window == 0:
            if last_window_max is not None and run_max - last_window_max > monitor_growth:
                growth_streak += 1
                if growth_streak >= MONITOR_PATIENCE:
                    raise ImproprietyError(
                        f"-log f(t_obs | params) keeps growing ({run_max:.1f} after {it + 1} "
                        "sweeps); the partial posterior may be improper"
                    )
            else:
                growth_streak = 0
            last_window_max = run_max
        if it < config.burn_in:
            continue
        n_post += 1
        n_theta += bool(a_t)
        n_sigma += bool(a_s)
        if (it - config.burn_in) % config.thin == 0:
            theta_out[k], mu_out[k], tau2_out[k], s2_out[k] = state
            k += 1
    acceptance = {}
    if sampler.log_c_theta is not None:
        acceptance["theta"] = n_theta / n_post
    if sampler.gibbs.fixed_sigma2 is None:
        acceptance["log_sigma2"] = n_sigma / n_post
    draws = PosteriorDraws(
        model="normal-hier",
        columns={"theta": theta_out, "mu": mu_out, "tau2": tau2_out, "sigma2": s2_out},
        acceptance=acceptance,
        prior=prior,
        config=config,
        data_fingerprint=data.fingerprint(),
        notes=(f"partial posterior given {stat.label()} = {t_obs!r}",),
    )
    return PartialPosteriorDraws(draws, stat, float(t_obs), acceptance)


def partial_posterior_pvalue(
    data: GroupedNormalData,
    stat: TestStatistic,
    prior: PriorSpec,
    config: ChainConfig,
    t_obs: float | None = None,
    return_draws: bool = False,
):
    """Average of ``P(T more extreme than t_obs | params)`` over partial-posterior draws."""
    stat.check(data.n_groups, data.sizes)
    t = statistic_value(data, stat) if t_obs is None else float(t_obs)
    if math.isinf(t):
        p = float(statistic_tail(t, np.zeros((1, data.n_groups)), 1.0, stat, data.sizes)[0])
        return (p, None) if return_draws else p
    pp = sample_partial_posterior(data, t, stat, prior, config)
    c = pp.draws.columns
    p = tail_average(t, c["theta"], c["sigma2"], stat, data.sizes)
    return (p, pp) if return_draws else p


def posterior_predictive_pvalue(
    data: GroupedNormalData, stat: TestStatistic, draws: PosteriorDraws, t_obs: float | None = None
) -> float:
    """Same tail average over full-posterior draws."""
    if len(draws) == 0:
        raise ValueError("posterior predictive p-value needs a nonempty chain")
    if draws.model != "normal-hier":
        raise ModelError("posterior predictive p-values are defined for the normal model")
    stat.check(data.n_groups, data.sizes)
    t = statistic_value(data, stat) if t_obs is None else float(t_obs)
    c = draws.columns
    return tail_average(t, c["theta"], c["sigma2"], stat, data.sizes)


def prior_predictive_pvalue(
    data: GroupedNormalData,
    stat: TestStatistic,
    prior: PriorSpec,
    config: ChainConfig,
    t_obs: float | None = None,
) -> float:
    """Tail average over ``config.n_retained`` independent prior draws.

    Only defined for proper priors.
    """
    if not prior.is_proper:
        raise ImproperPriorError(
            "prior-predictive p-values are undefined under an improper prior"
        )
    stat.check(data.n_groups, data.sizes)
    t = statistic_value(data, stat) if t_obs is None else float(t_obs)
    rng = make_streams(config.seed, 29)["prior"]
    theta, s2 = draw_normal_params_many(prior, data.n_groups, config.n_retained, rng)
    return tail_average(t, theta, s2, stat, data.sizes)
