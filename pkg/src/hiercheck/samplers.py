"""MCMC samplers for the normal-normal and beta-binomial models.

Both samplers are deterministic functions of ``(data, prior, config)``:
every parameter block draws from its own Philox substream derived from
``config.seed``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np
from scipy import special as sp

from . import special
from .models import (
    BetaBinomialData,
    BetaBinomialParams,
    GroupedNormalData,
    ModelError,
    NormalHierParams,
    PriorSpec,
    logprior_alpha_beta,
)

__all__ = [
    "ChainConfig",
    "PosteriorDraws",
    "SamplerError",
    "StagnationWarning",
    "NormalHierGibbs",
    "BetaBinomialSampler",
    "gibbs_normal_hier",
    "mcmc_betabinom",
    "chain_summary",
    "effective_sample_size",
    "make_streams",
]

TARGET_ACCEPT = 0.4
DEFAULT_STEP = 0.5
_P_FLOOR = 1e-300
_P_CEIL = 1.0 - 2.0**-53


class SamplerError(RuntimeError):
    """A chain could not proceed (e.g. a truncation box with no mass)."""


class StagnationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ChainConfig:
    """Chain length, thinning, seed and Metropolis step sizes.

    ``iterations`` counts every sweep including the ``burn_in`` sweeps;
    draws ``burn_in, burn_in + thin, ...`` are retained.
    """

    iterations: int = 6000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    step_sizes: Mapping[str, float] = field(default_factory=dict)
    adapt: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for k, v in self.step_sizes.items():
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"step size {k!r} must be a finite non-negative number")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "step_sizes", dict(self.step_sizes))

    @property
    def n_retained(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))

    @classmethod
    def for_retained(cls, n: int, burn_in: int = 1000, thin: int = 1, **kw) -> "ChainConfig":
        return cls(iterations=burn_in + n * thin, burn_in=burn_in, thin=thin, **kw)

    @classmethod
    def preset(cls, name: str, seed: int = 0) -> "ChainConfig":
        """Named run sizes: ``"sw"`` keeps 50,000 draws, ``"max-pit"`` 250,000."""
        sizes = {"desk": 5000, "sw": 50_000, "max-pit": 250_000}
        if name not in sizes:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(sizes)}")
        return cls.for_retained(sizes[name], seed=seed)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "step_sizes": dict(sorted(self.step_sizes.items())),
            "adapt": self.adapt,
        }


_BLOCK_IDS = {
    "theta": 1, "mu": 2, "tau2": 3, "sigma2": 4, "p": 5, "alpha_beta": 6,
    "accept": 7, "data": 8, "prior": 9, "misc": 10,
}


def make_streams(seed: int, *extra: int) -> dict[str, np.random.Generator]:
    """One Philox generator per parameter block, keyed by block name."""
    return {
        name: np.random.Generator(
            np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(*extra, bid)))
        )
        for name, bid in _BLOCK_IDS.items()
    }


# -- truncated draws -----------------------------------------------------------


def truncated_normal(rng: np.random.Generator, mean: float, sd: float, lo: float, hi: float) -> float:
    """Inverse-CDF draw from N(mean, sd^2) restricted to (lo, hi)."""
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    u = rng.random()
    if a > 0.0:
        # both limits in the upper tail: work with survival probabilities
        pa = 0.5 * math.erfc(a / math.sqrt(2.0))
        pb = 0.5 * math.erfc(b / math.sqrt(2.0)) if math.isfinite(b) else 0.0
        mass = pa - pb
        if not mass > 0.0:
            raise SamplerError("truncation interval carries no probability mass")
        q = pb + (1.0 - u) * mass
        z = -special.std_normal_quantile(q)
    else:
        pa = 0.5 * math.erfc(-a / math.sqrt(2.0)) if math.isfinite(a) else 0.0
        pb = 0.5 * math.erfc(-b / math.sqrt(2.0)) if math.isfinite(b) else 1.0
        mass = pb - pa
        if not mass > 0.0:
            raise SamplerError("truncation interval carries no probability mass")
        q = pa + u * mass
        if q <= 0.0:
            q = math.nextafter(0.0, 1.0)
        if q >= 1.0:
            q = math.nextafter(1.0, 0.0)
        z = special.std_normal_quantile(q)
    x = mean + sd * z
    return min(max(x, math.nextafter(lo, math.inf)), math.nextafter(hi, -math.inf))


def truncated_inv_gamma(
    rng: np.random.Generator, shape: float, scale: float, lo: float, hi: float
) -> float:
    """Inverse-CDF draw from InvGamma(shape, scale) restricted to (lo, hi).

    The precision ``1/x`` is Gamma(shape, rate=scale) on ``(1/hi, 1/lo)``.
    """
    if not (shape > 0.0 and scale > 0.0):
        raise SamplerError(f"inverse-gamma conditional is improper (shape={shape}, scale={scale})")
    glo = scale / hi
    ghi = scale / lo
    u = rng.random()
    plo = sp.gammainc(shape, glo)
    phi = sp.gammainc(shape, ghi)
    if plo > 0.5:
        qlo = sp.gammaincc(shape, glo)
        qhi = sp.gammaincc(shape, ghi)
        mass = qlo - qhi
        if not mass > 0.0:
            raise SamplerError("variance truncation box carries no posterior mass")
        g = sp.gammainccinv(shape, qhi + (1.0 - u) * mass)
    else:
        mass = phi - plo
        if not mass > 0.0:
            raise SamplerError("variance truncation box carries no posterior mass")
        g = sp.gammaincinv(shape, plo + u * mass)
    g = min(max(g, glo), ghi)
    x = scale / g if g > 0.0 else hi
    return min(max(x, math.nextafter(lo, math.inf)), math.nextafter(hi, -math.inf))


# -- draws container -----------------------------------------------------------


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws of one chain, stored column-wise.

    ``columns`` maps ``"theta"``/``"mu"``/``"tau2"``/``"sigma2"`` (normal) or
    ``"p"``/``"alpha"``/``"beta"`` (beta-binomial) to read-only arrays whose
    first axis indexes draws.
    """

    model: str
    columns: Mapping[str, np.ndarray]
    acceptance: Mapping[str, float]
    prior: PriorSpec
    config: ChainConfig
    data_fingerprint: str
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        for arr in self.columns.values():
            arr.setflags(write=False)

    def __len__(self) -> int:
        return int(next(iter(self.columns.values())).shape[0])

    def __getitem__(self, i: int):
        c = self.columns
        if self.model == "normal-hier":
            return NormalHierParams(c["theta"][i], c["mu"][i], c["tau2"][i], c["sigma2"][i])
        return BetaBinomialParams(c["p"][i], c["alpha"][i], c["beta"][i])

    def __iter__(self) -> Iterator:
        for i in range(len(self)):
            yield self[i]

    def column_names(self) -> list[str]:
        names = []
        for key, arr in self.columns.items():
            if arr.ndim == 1:
                names.append(key)
            else:
                names.extend(f"{key}_{j + 1}" for j in range(arr.shape[1]))
        return names

    def matrix(self) -> np.ndarray:
        return np.column_stack(
            [arr if arr.ndim == 2 else arr[:, None] for arr in self.columns.values()]
        )

    def header(self) -> dict:
        return {
            "model": self.model,
            "prior": self.prior.to_dict(),
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "data": self.data_fingerprint,
            "acceptance": dict(sorted(self.acceptance.items())),
        }


# -- normal-normal Gibbs -------------------------------------------------------


class NormalHierGibbs:
    """Gibbs sweeps for the normal-normal model.

    Update order within a sweep: ``theta``, ``mu``, ``tau2``, ``sigma2``.
    Each full conditional is sampled exactly; truncation to the improper
    prior's box is handled by inverse-CDF draws.
    """

    def __init__(self, data: GroupedNormalData, prior: PriorSpec):
        if not prior.is_normal:
            raise ModelError(f"prior kind {prior.kind!r} is not a normal-model prior")
        self.data = data
        self.prior = prior
        self.n = data.sizes
        self.ybar = data.means
        self.within = data.within_ss
        self.n_total = float(self.n.sum())
        self.I = data.n_groups
        fixed = prior.fixed
        self.fixed_mu = float(fixed["mu"]) if "mu" in fixed else None
        self.fixed_tau2 = float(fixed["tau2"]) if "tau2" in fixed else None
        self.fixed_sigma2 = None
        if "sigma2" in fixed:
            s2 = np.asarray(fixed["sigma2"], dtype=float)
            if s2.ndim == 1 and s2.size != self.I:
                raise ModelError("per-group fixed sigma2 must have one entry per group")
            if np.any(s2 <= 0.0):
                raise ModelError("fixed sigma2 must be positive")
            self.fixed_sigma2 = float(s2) if s2.ndim == 0 else s2
        if prior.kind == "truncated-improper-normal" and self.fixed_tau2 is None and self.I < 2:
            raise ModelError("tau2 under the 1/tau prior needs at least 2 groups")

    def initial_state(self) -> NormalHierParams:
        lo, hi = self.prior.box
        a = self.prior.a
        theta = self.ybar.copy()
        mu = self.fixed_mu if self.fixed_mu is not None else float(np.clip(theta.mean(), -a / 2, a / 2))
        if self.fixed_tau2 is not None:
            tau2 = self.fixed_tau2
        else:
            v = float(np.var(theta)) if self.I > 1 else 1.0
            tau2 = float(np.clip(v if v > 0 else 1.0, lo * 2, hi / 2))
        if self.fixed_sigma2 is not None:
            sigma2 = self.fixed_sigma2
        else:
            dof = self.n_total - self.I
            v = float(self.within.sum() / dof) if dof > 0 else 1.0
            sigma2 = float(np.clip(v if v > 0 else 1.0, lo * 2, hi / 2))
        return NormalHierParams(theta, mu, tau2, sigma2)

    def sweep(self, state: NormalHierParams, streams) -> NormalHierParams:
        prior = self.prior
        hp = prior.hyperparams
        improper = prior.kind == "truncated-improper-normal"
        lo, hi = prior.box
        mu, tau2, sigma2 = state.mu, state.tau2, state.sigma2

        prec = self.n / np.asarray(sigma2) + 1.0 / tau2
        mean = (self.n * self.ybar / np.asarray(sigma2) + mu / tau2) / prec
        theta = mean + streams["theta"].standard_normal(self.I) / np.sqrt(prec)

        if self.fixed_mu is None:
            if improper:
                mu = truncated_normal(
                    streams["mu"], float(theta.mean()), math.sqrt(tau2 / self.I), -prior.a, prior.a
                )
            else:
                p = self.I / tau2 + 1.0 / hp["mu_var"]
                m = (theta.sum() / tau2 + hp["mu_mean"] / hp["mu_var"]) / p
                mu = m + streams["mu"].standard_normal() / math.sqrt(p)

        if self.fixed_tau2 is None:
            s = float(np.sum((theta - mu) ** 2))
            if improper:
                tau2 = truncated_inv_gamma(streams["tau2"], 0.5 * (self.I - 1), 0.5 * s, lo, hi)
            else:
                shape = hp["tau2_shape"] + 0.5 * self.I
                scale = hp["tau2_scale"] + 0.5 * s
                tau2 = scale / streams["tau2"].gamma(shape)

        if self.fixed_sigma2 is None:
            ss = float(np.sum(self.within + self.n * (self.ybar - theta) ** 2))
            if improper:
                sigma2 = truncated_inv_gamma(streams["sigma2"], 0.5 * self.n_total, 0.5 * ss, lo, hi)
            else:
                shape = hp["sigma2_shape"] + 0.5 * self.n_total
                scale = hp["sigma2_scale"] + 0.5 * ss
                sigma2 = scale / streams["sigma2"].gamma(shape)

        return _fast_normal_params(theta, mu, tau2, sigma2)


def _fast_normal_params(theta, mu, tau2, sigma2) -> NormalHierParams:
    # skips re-validation on the sampler's hot path
    obj = object.__new__(NormalHierParams)
    object.__setattr__(obj, "theta", theta)
    object.__setattr__(obj, "mu", float(mu))
    object.__setattr__(obj, "tau2", float(tau2))
    object.__setattr__(obj, "sigma2", sigma2)
    return obj


def gibbs_normal_hier(
    data: GroupedNormalData,
    prior: PriorSpec,
    config: ChainConfig,
    init: NormalHierParams | None = None,
) -> PosteriorDraws:
    """Run the normal-normal Gibbs sampler and keep the post-burn-in draws."""
    sampler = NormalHierGibbs(data, prior)
    streams = make_streams(config.seed)
    state = init if init is not None else sampler.initial_state()
    M = config.n_retained
    I = data.n_groups
    theta = np.empty((M, I))
    mu = np.empty(M)
    tau2 = np.empty(M)
    per_group = np.ndim(state.sigma2) == 1
    sigma2 = np.empty((M, I)) if per_group else np.empty(M)
    k = 0
    for it in range(config.iterations):
        state = sampler.sweep(state, streams)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            theta[k] = state.theta
            mu[k] = state.mu
            tau2[k] = state.tau2
            sigma2[k] = state.sigma2
            k += 1
    return PosteriorDraws(
        model="normal-hier",
        columns={"theta": theta, "mu": mu, "tau2": tau2, "sigma2": sigma2},
        acceptance={},
        prior=prior,
        config=config,
        data_fingerprint=data.fingerprint(),
    )


# -- beta-binomial Metropolis-within-Gibbs ---------------------------------------


class BetaBinomialSampler:
    """Log-scale random walk for ``(alpha, beta)`` and exact Beta updates for ``p``.

    The Metropolis step targets the marginal of ``(alpha, beta)`` with
    ``p`` integrated out (a beta-binomial likelihood), then ``p`` is drawn
    from its Beta full conditional.
    """

    def __init__(self, data: BetaBinomialData, prior: PriorSpec, step: float = DEFAULT_STEP):
        if prior.is_normal:
            raise ModelError(f"prior kind {prior.kind!r} is not a beta-binomial prior")
        self.data = data
        self.prior = prior
        self.x = data.successes.astype(float)
        self.n = data.trials.astype(float)
        self.I = data.n_units
        self.step = float(step)
        self.fixed_alpha = float(prior.fixed["alpha"]) if "alpha" in prior.fixed else None
        self.fixed_beta = float(prior.fixed["beta"]) if "beta" in prior.fixed else None
        self.accepted = 0
        self.proposed = 0
        self._cached = None

    def initial_state(self) -> BetaBinomialParams:
        lo, hi = self.prior.box
        p = (self.x + 0.5) / (self.n + 1.0)
        m = float(p.mean())
        v = float(p.var())
        if v > 0.0 and v < m * (1.0 - m):
            s = m * (1.0 - m) / v - 1.0
            alpha, beta = m * s, (1.0 - m) * s
        else:
            alpha, beta = 1.0, 1.0
        alpha = float(np.clip(alpha, lo * 2, hi / 2))
        beta = float(np.clip(beta, lo * 2, hi / 2))
        if self.fixed_alpha is not None:
            alpha = self.fixed_alpha
        if self.fixed_beta is not None:
            beta = self.fixed_beta
        return BetaBinomialParams(p, alpha, beta)

    def log_target_ab(self, alpha: float, beta: float) -> float:
        """Log marginal posterior of ``(log alpha, log beta)``, ``p`` integrated out.

        Includes the Jacobian of the log transform for each free coordinate.
        """
        lp = logprior_alpha_beta(alpha, beta, self.prior)
        if lp == -math.inf:
            return lp
        ll = float(np.sum(sp.betaln(alpha + self.x, beta + self.n - self.x))) - self.I * sp.betaln(alpha, beta)
        return (
            lp
            + ll
            + (math.log(alpha) if self.fixed_alpha is None else 0.0)
            + (math.log(beta) if self.fixed_beta is None else 0.0)
        )

    def sweep(self, state: BetaBinomialParams, streams) -> tuple[BetaBinomialParams, bool]:
        alpha, beta = state.alpha, state.beta
        # (alpha, beta) from their marginal, then p exactly given them; the
        # pair leaves the joint posterior invariant and does not get stuck
        # when the p are tightly clustered
        z = streams["alpha_beta"].standard_normal(2)
        la = math.log(alpha) + (self.step * z[0] if self.fixed_alpha is None else 0.0)
        lb = math.log(beta) + (self.step * z[1] if self.fixed_beta is None else 0.0)
        a_new, b_new = math.exp(la), math.exp(lb)
        if self._cached is not None and self._cached[0] == (alpha, beta):
            cur = self._cached[1]
        else:
            cur = self.log_target_ab(alpha, beta)
        if cur == -math.inf:
            raise SamplerError("current (alpha, beta) lies outside the prior box")
        new = self.log_target_ab(a_new, b_new)
        log_u = math.log(streams["accept"].random() or 5e-324)
        accept = new > -math.inf and log_u < new - cur
        if accept:
            alpha, beta, cur = a_new, b_new, new
        self._cached = ((alpha, beta), cur)
        p = streams["p"].beta(alpha + self.x, beta + self.n - self.x)
        p = np.clip(p, _P_FLOOR, _P_CEIL)
        obj = object.__new__(BetaBinomialParams)
        object.__setattr__(obj, "p", p)
        object.__setattr__(obj, "alpha", alpha)
        object.__setattr__(obj, "beta", beta)
        return obj, accept


def mcmc_betabinom(
    data: BetaBinomialData,
    prior: PriorSpec,
    config: ChainConfig,
    init: BetaBinomialParams | None = None,
) -> PosteriorDraws:
    """Run the beta-binomial sampler.

    The log-scale step size starts at ``config.step_sizes["alpha_beta"]``
    (default 0.5). During burn-in it is adapted by a Robbins-Monro rule
    toward 40% acceptance and is frozen afterwards. The reported acceptance
    rate covers retained-phase iterations only.
    """
    step = float(config.step_sizes.get("alpha_beta", DEFAULT_STEP))
    sampler = BetaBinomialSampler(data, prior, step)
    streams = make_streams(config.seed)
    state = init if init is not None else sampler.initial_state()
    lo, hi = prior.box
    for name, val in (("alpha", state.alpha), ("beta", state.beta)):
        if name not in prior.fixed and not lo < val < hi:
            raise SamplerError(f"initial {name}={val} lies outside the prior box ({lo}, {hi})")
    M = config.n_retained
    p_out = np.empty((M, data.n_units))
    a_out = np.empty(M)
    b_out = np.empty(M)
    log_step = math.log(step) if step > 0.0 else None
    n_acc = 0
    n_post = 0
    run_rejected = 0
    k = 0
    for it in range(config.iterations):
        state, accepted = sampler.sweep(state, streams)
        run_rejected = 0 if accepted else run_rejected + 1
        if run_rejected >= max(config.iterations // 2, 1000):
            raise SamplerError(
                "no (alpha, beta) proposal accepted for a full pass; the truncation box "
                "may be too narrow to contain posterior mass"
            )
        if it < config.burn_in:
            if config.adapt and log_step is not None:
                log_step += (float(accepted) - TARGET_ACCEPT) / math.sqrt(it + 1.0)
                sampler.step = math.exp(log_step)
            continue
        n_post += 1
        n_acc += accepted
        if (it - config.burn_in) % config.thin == 0:
            p_out[k] = state.p
            a_out[k] = state.alpha
            b_out[k] = state.beta
            k += 1
    rate = n_acc / n_post if n_post else float("nan")
    notes = []
    free = [n for n in ("alpha", "beta") if n not in prior.fixed]
    if free and (sampler.step == 0.0 or np.ptp(a_out) == 0.0 and np.ptp(b_out) == 0.0):
        msg = "alpha/beta never moved during the retained phase (stagnant chain)"
        warnings.warn(msg, StagnationWarning, stacklevel=2)
        notes.append(msg)
    return PosteriorDraws(
        model="beta-binom",
        columns={"p": p_out, "alpha": a_out, "beta": b_out},
        acceptance={"alpha_beta": rate, "final_step": sampler.step},
        prior=prior,
        config=config,
        data_fingerprint=data.fingerprint(),
        notes=tuple(notes),
    )


# -- summaries -------------------------------------------------------------------


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    if acov[0] == 0.0:
        return np.ones(n)
    return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> float:
    """ESS from Geyer's initial monotone positive sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0.0:
        return float(n)
    rho = autocorrelation(x)
    pairs = []
    for t in range(0, n - 1, 2):
        s = rho[t] + rho[t + 1]
        if s <= 0.0:
            break
        pairs.append(s)
    pairs = np.minimum.accumulate(np.array(pairs)) if pairs else np.array([1.0])
    tau = -1.0 + 2.0 * float(pairs.sum())
    tau = max(tau, 1.0 / math.log10(max(n, 10)))
    return float(min(n / tau, n * math.log10(max(n, 10))))


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    sd: float
    ess: float
    degenerate: bool


@dataclass(frozen=True)
class ChainSummary:
    n_draws: int
    params: Mapping[str, ParamSummary]
    acceptance: Mapping[str, float]

    def to_dict(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "params": {
                k: {"mean": v.mean, "sd": v.sd, "ess": v.ess, "degenerate": v.degenerate}
                for k, v in self.params.items()
            },
            "acceptance": dict(self.acceptance),
        }


def chain_summary(draws: PosteriorDraws) -> ChainSummary:
    """Per-column mean, standard deviation and effective sample size."""
    if len(draws) == 0:
        raise ValueError("cannot summarise an empty chain")
    mat = draws.matrix()
    out = {}
    for name, col in zip(draws.column_names(), mat.T):
        sd = float(col.std(ddof=1)) if col.size > 1 else 0.0
        degenerate = bool(np.ptp(col) == 0.0)
        ess = float(col.size) if degenerate else effective_sample_size(col)
        out[name] = ParamSummary(float(col.mean()), 0.0 if degenerate else sd, ess, degenerate)
    return ChainSummary(len(draws), out, dict(draws.acceptance))
