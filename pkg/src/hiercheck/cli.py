"""Command-line front end.

Subcommands::

    fit        run the sampler, write draws.csv and summary.json
    check      fit plus pivotal QQ plots, p-value series, histogram, bound
    ppp        partial posterior p-value
    postpred   posterior predictive p-value
    priorpred  prior predictive p-value (proper priors only)
    calibrate  null-model calibration study
    simulate   draw a dataset from the model
    plot       render a QQ or p-value CSV written by this tool as SVG

Settings come from built-in defaults, then an optional JSON file given by
``--config`` (flat keys, e.g. ``{"iters": 20000, "tau2_shape": 3}``), then
explicit flags. Exit codes: 2 parse or validation error, 3 sampler
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import io as hio
from .bounds import joint_pvalue_bound
from .calibration import BETABINOM_METHODS, NORMAL_METHODS, CalibrationConfig, calibration_study
from .models import (
    PROPER_BETABINOM_DEFAULTS,
    PROPER_NORMAL_DEFAULTS,
    BetaBinomialData,
    GroupedNormalData,
    ModelError,
    PriorSpec,
)
from .partial import (
    TestStatistic,
    partial_posterior_pvalue,
    posterior_predictive_pvalue,
    prior_predictive_pvalue,
    statistic_value,
)
from .pivotal import (
    beta_pit,
    group_level_residuals,
    max_pit_series,
    max_stat_qq,
    qq_data,
    sw_pvalue_series,
)
from .plots import DEFAULT_BINS, PlotDocument, qq_document, render_plot
from .samplers import ChainConfig, SamplerError, chain_summary, gibbs_normal_hier, mcmc_betabinom
from .simulate import (
    draw_betabinom_data,
    draw_betabinom_params,
    draw_normal_data,
    draw_normal_params,
)

log = logging.getLogger("hiercheck")

EXIT_OK, EXIT_USAGE, EXIT_SAMPLER, EXIT_IO = 0, 2, 3, 4
MODELS = ("normal-hier", "beta-binom")
PRIOR_CHOICES = ("proper", "truncated-improper")
_PRIOR_KIND = {
    ("normal-hier", "proper"): "proper-normal",
    ("normal-hier", "truncated-improper"): "truncated-improper-normal",
    ("beta-binom", "proper"): "proper-betabinom",
    ("beta-binom", "truncated-improper"): "truncated-jeffreys-betabinom",
}
HYPER_KEYS = tuple(PROPER_NORMAL_DEFAULTS) + tuple(PROPER_BETABINOM_DEFAULTS)
FIXED_KEYS = ("fixed_mu", "fixed_tau2", "fixed_sigma2", "fixed_alpha", "fixed_beta")
TRUE_KEYS = ("true_mu", "true_tau2", "true_sigma2", "true_alpha", "true_beta")

DEFAULTS = {
    "data": None,
    "model": "normal-hier",
    "prior": "truncated-improper",
    "a": None,
    "iters": 6000,
    "burn_in": 1000,
    "thin": 1,
    "seed": 0,
    "statistic": "max-group-mean",
    "out": "out",
    "plots": "on",
    "fix_k": None,
    "bins": DEFAULT_BINS,
    "qq_draws": 3,
    "replicates": 2000,
    "groups": 5,
    "group_size": 8,
    "methods": None,
    "prior_draws": 4000,
    "workers": 1,
    "input": None,
    "kind": None,
}
ALLOWED_KEYS = set(DEFAULTS) | set(HYPER_KEYS) | set(FIXED_KEYS) | set(TRUE_KEYS)


class UsageError(ValueError):
    """Invalid configuration; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one command."""

    command: str
    model: str
    prior: PriorSpec
    chain: ChainConfig
    statistic: TestStatistic
    out: Path
    plots: bool = True
    data: Path | None = None
    fix_k: int | None = None
    bins: int = DEFAULT_BINS
    qq_draws: int = 3
    extra: Mapping[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "model": self.model,
            "prior": self.prior.to_dict(),
            "chain": self.chain.to_dict(),
            "statistic": self.statistic.label(),
            "plots": self.plots,
            "fix_k": self.fix_k,
            "bins": self.bins,
            "qq_draws": self.qq_draws,
            "extra": {k: self.extra[k] for k in sorted(self.extra)},
        }


# -- argument handling ---------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    # every option defaults to None so that unset flags do not mask the config file
    p.add_argument("--config", help="JSON file of flat settings")
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--prior", choices=PRIOR_CHOICES)
    p.add_argument("--a", type=float, help="truncation constant of the prior box")
    p.add_argument("--iters", type=int, help="total sweeps including burn-in")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--statistic", help="group-mean:<i> | max-group-mean | min-group-mean | contrast:<i>")
    p.add_argument("--out", help="output directory")
    p.add_argument("--plots", choices=("on", "off"))
    p.add_argument("--fix-k", type=int, help="pre-registered order statistic for the bound")
    p.add_argument("--bins", type=int, help="histogram bins")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiercheck", description="Pivotal and predictive model checks for hierarchical models."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("fit", "run the sampler and write draws"),
        ("check", "pivotal diagnostics report bundle"),
        ("ppp", "partial posterior p-value"),
        ("postpred", "posterior predictive p-value"),
        ("priorpred", "prior predictive p-value"),
        ("calibrate", "null-model calibration study"),
        ("simulate", "simulate a dataset from the model"),
        ("plot", "render a CSV written by this tool as SVG"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "check":
            p.add_argument("--qq-draws", type=int, help="number of random draws to plot")
        if name == "calibrate":
            p.add_argument("--replicates", type=int)
            p.add_argument("--groups", type=int)
            p.add_argument("--group-size", type=int)
            p.add_argument("--methods", help="comma-separated methods")
            p.add_argument("--prior-draws", type=int)
            p.add_argument("--workers", type=int)
        if name == "simulate":
            p.add_argument("--groups", type=int)
            p.add_argument("--group-size", type=int)
        if name == "plot":
            p.add_argument("--input", help="CSV with a '#' header line")
            p.add_argument("--kind", choices=("qq", "histogram"))
    return parser


def load_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                from_file = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(from_file, dict):
            raise UsageError("config file must hold a JSON object")
        from_file = {k.replace("-", "_"): v for k, v in from_file.items()}
        unknown = sorted(set(from_file) - ALLOWED_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        settings.update(from_file)
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose") or value is None:
            continue
        settings[key] = value
    return settings


def _prior_from(settings: dict, model: str) -> PriorSpec:
    choice = settings["prior"]
    if choice not in PRIOR_CHOICES:
        raise UsageError(f"prior must be one of {PRIOR_CHOICES}")
    kind = _PRIOR_KIND[(model, choice)]
    names = PROPER_NORMAL_DEFAULTS if model == "normal-hier" else PROPER_BETABINOM_DEFAULTS
    hyper = {k: settings[k] for k in names if k in settings}
    stray = [k for k in HYPER_KEYS if k in settings and k not in names]
    if stray:
        raise UsageError(f"hyperparameters {stray} do not apply to {model}")
    if hyper and choice != "proper":
        raise UsageError("hyperparameters apply to the proper prior only")
    fixed = {k[len("fixed_"):]: settings[k] for k in FIXED_KEYS if settings.get(k) is not None}
    return PriorSpec(kind, settings["a"], hyper, fixed)


def resolve(command: str, settings: dict) -> RunConfig:
    model = settings["model"]
    if model not in MODELS:
        raise UsageError(f"model must be one of {MODELS}")
    prior = _prior_from(settings, model)
    try:
        chain = ChainConfig(
            iterations=int(settings["iters"]),
            burn_in=int(settings["burn_in"]),
            thin=int(settings["thin"]),
            seed=int(settings["seed"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    stat = TestStatistic.parse(str(settings["statistic"]))
    if settings["plots"] not in ("on", "off"):
        raise UsageError("plots must be 'on' or 'off'")
    if int(settings["bins"]) < 1:
        raise UsageError("bins must be positive")
    if int(settings["qq_draws"]) < 0:
        raise UsageError("qq-draws must be non-negative")
    data = settings["data"]
    if command in ("fit", "check", "ppp", "postpred", "priorpred") and data is None:
        raise UsageError(f"{command} needs --data")
    if command == "plot" and settings["input"] is None:
        raise UsageError("plot needs --input")
    extra_keys = ("replicates", "groups", "group_size", "methods", "prior_draws", "workers", "input", "kind")
    extra = {k: settings[k] for k in extra_keys if settings[k] is not None}
    extra.update({k: settings[k] for k in TRUE_KEYS if settings.get(k) is not None})
    return RunConfig(
        command=command,
        model=model,
        prior=prior,
        chain=chain,
        statistic=stat,
        out=Path(settings["out"]),
        plots=settings["plots"] == "on",
        data=Path(data) if data is not None else None,
        fix_k=None if settings["fix_k"] is None else int(settings["fix_k"]),
        bins=int(settings["bins"]),
        qq_draws=int(settings["qq_draws"]),
        extra=extra,
    )


# -- commands ------------------------------------------------------------------


def _load_data(cfg: RunConfig):
    data = hio.ingest_dataset(cfg.data, cfg.model)
    return data


def _fit(cfg: RunConfig, data):
    if isinstance(data, GroupedNormalData):
        return gibbs_normal_hier(data, cfg.prior, cfg.chain)
    return mcmc_betabinom(data, cfg.prior, cfg.chain)


def _write_csv(cfg: RunConfig, name: str, columns: Sequence[str], rows, **extra) -> Path:
    path = cfg.out / name
    header = hio.format_header(cfg.command, cfg.to_dict(), cfg.chain.seed, **extra)
    hio.write_table(path, header, columns, rows)
    return path


def _summary_base(cfg: RunConfig, data) -> dict:
    return {
        "command": cfg.command,
        "config": cfg.to_dict(),
        "config_hash": hio.config_hash(cfg.to_dict()),
        "data_fingerprint": data.fingerprint(),
        "n_groups": int(data.n_groups if isinstance(data, GroupedNormalData) else data.n_units),
    }


def cmd_fit(cfg: RunConfig) -> dict:
    data = _load_data(cfg)
    draws = _fit(cfg, data)
    hio.write_draws(cfg.out / "draws.csv", draws)
    summary = _summary_base(cfg, data)
    summary["chain"] = chain_summary(draws).to_dict()
    hio.write_json(cfg.out / "summary.json", summary)
    return summary


def select_qq_draws(n_draws: int, count: int, seed: int) -> list[int]:
    """Indices of ``count`` distinct draws chosen at random, sorted."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(31,))))
    count = min(count, n_draws)
    return sorted(int(i) for i in rng.choice(n_draws, size=count, replace=False))


def run_check(cfg: RunConfig) -> dict:
    """Fit, then write the full diagnostics bundle into ``cfg.out``."""
    data = _load_data(cfg)
    draws = _fit(cfg, data)
    hio.write_draws(cfg.out / "draws.csv", draws)
    normal = isinstance(data, GroupedNormalData)
    picks = select_qq_draws(len(draws), cfg.qq_draws, cfg.chain.seed)
    for idx in picks:
        if normal:
            sample = group_level_residuals(draws[idx], idx)
            title, xlabel = f"Group residuals E, draw {idx}", "standard normal quantile"
        else:
            sample = beta_pit(draws[idx], idx)
            title, xlabel = f"Beta transforms, draw {idx}", "uniform quantile"
        pairs = qq_data(sample)
        _write_csv(cfg, f"pivots_qq_{idx}.csv", ["theoretical", "empirical"], pairs, draw=idx)
        if cfg.plots:
            doc = qq_document(pairs, title=title, xlabel=xlabel, ylabel="pivotal value", identity_line=True)
            render_plot(doc, cfg.out / f"pivots_qq_{idx}.svg")

    if normal:
        series = sw_pvalue_series(draws, data)
    else:
        u_max, series = max_pit_series(draws)
        pairs = max_stat_qq(u_max, data.n_units)
        _write_csv(cfg, "max_pit_qq.csv", ["theoretical", "empirical"], pairs)
        if cfg.plots:
            doc = qq_document(
                pairs,
                title="Maximum Beta transform per draw",
                xlabel=f"quantile of x^{data.n_units}",
                ylabel="maximum",
                identity_line=True,
            )
            render_plot(doc, cfg.out / "max_pit_qq.svg")
    _write_csv(cfg, "pvalues.csv", ["p_value"], series.values, statistic=series.statistic)
    if cfg.plots:
        doc = PlotDocument(
            "histogram",
            series.values,
            title=f"Per-draw p-values: {series.statistic}",
            xlabel="p-value",
            ylabel="count",
            bins=cfg.bins,
        )
        render_plot(doc, cfg.out / "pvalues_hist.svg")
    bound = joint_pvalue_bound(series, fix_k=cfg.fix_k)
    hio.write_json(cfg.out / "bound.json", bound.to_dict())

    summary = _summary_base(cfg, data)
    summary["chain"] = chain_summary(draws).to_dict()
    summary["qq_draws"] = picks
    summary["pvalue_series"] = {
        "statistic": series.statistic,
        "n": len(series),
        "mean": float(series.values.mean()),
        "fraction_below_0.05": float(np.mean(series.values <= 0.05)),
        "single_draw": float(series.values[-1]),
    }
    summary["bound"] = {"overall_bound": bound.overall_bound, "k_star": bound.k_star}
    if cfg.fix_k is not None:
        summary["bound"]["fixed_k"] = cfg.fix_k
        summary["bound"]["fixed_bound"] = bound.fixed_bound
    hio.write_json(cfg.out / "summary.json", summary)
    return summary


def _require_normal(cfg: RunConfig, data) -> GroupedNormalData:
    if not isinstance(data, GroupedNormalData):
        raise UsageError(f"{cfg.command} is defined for the normal-hier model")
    return data


def _pvalue_result(cfg: RunConfig, data, p: float, method: str) -> dict:
    out = _summary_base(cfg, data)
    out.update(
        {
            "method": method,
            "statistic": cfg.statistic.label(),
            "t_obs": statistic_value(data, cfg.statistic),
            "p_value": float(p),
        }
    )
    return out


def cmd_ppp(cfg: RunConfig) -> dict:
    data = _require_normal(cfg, _load_data(cfg))
    p = partial_posterior_pvalue(data, cfg.statistic, cfg.prior, cfg.chain)
    res = _pvalue_result(cfg, data, p, "partial-posterior")
    hio.write_json(cfg.out / "ppp.json", res)
    return res


def cmd_postpred(cfg: RunConfig) -> dict:
    data = _require_normal(cfg, _load_data(cfg))
    draws = gibbs_normal_hier(data, cfg.prior, cfg.chain)
    p = posterior_predictive_pvalue(data, cfg.statistic, draws)
    res = _pvalue_result(cfg, data, p, "posterior-predictive")
    hio.write_json(cfg.out / "postpred.json", res)
    return res


def cmd_priorpred(cfg: RunConfig) -> dict:
    data = _require_normal(cfg, _load_data(cfg))
    p = prior_predictive_pvalue(data, cfg.statistic, cfg.prior, cfg.chain)
    res = _pvalue_result(cfg, data, p, "prior-predictive")
    res["prior_draws"] = cfg.chain.n_retained
    hio.write_json(cfg.out / "priorpred.json", res)
    return res


def _true_hyper(cfg: RunConfig) -> dict | None:
    names = ("mu", "tau2", "sigma2") if cfg.model == "normal-hier" else ("alpha", "beta")
    given = {n: float(cfg.extra[f"true_{n}"]) for n in names if f"true_{n}" in cfg.extra}
    if not given:
        return None
    if len(given) != len(names):
        raise UsageError(f"give all of {['true_' + n for n in names]} or none")
    return given


def cmd_calibrate(cfg: RunConfig) -> dict:
    methods = cfg.extra.get("methods")
    if methods is None:
        methods = NORMAL_METHODS if cfg.model == "normal-hier" else BETABINOM_METHODS
    elif isinstance(methods, str):
        methods = tuple(m.strip() for m in methods.split(",") if m.strip())
    ccfg = CalibrationConfig(
        model=cfg.model,
        n_groups=int(cfg.extra.get("groups", DEFAULTS["groups"])),
        group_size=int(cfg.extra.get("group_size", DEFAULTS["group_size"])),
        prior=cfg.prior,
        hyper=_true_hyper(cfg),
        replicates=int(cfg.extra.get("replicates", DEFAULTS["replicates"])),
        methods=tuple(methods),
        seed=cfg.chain.seed,
        chain=cfg.chain,
        statistic=cfg.statistic,
        prior_draws=int(cfg.extra.get("prior_draws", DEFAULTS["prior_draws"])),
    )
    report = calibration_study(ccfg, workers=int(cfg.extra.get("workers", 1)))
    res = report.to_dict()
    hio.write_json(cfg.out / "calibration.json", res)
    _write_csv(cfg, "calibration_pvalues.csv", list(ccfg.methods), report.pvalue_table())
    if cfg.plots:
        for m in ccfg.methods:
            doc = PlotDocument(
                "histogram", report.pvalues[m], title=f"Null p-values: {m}",
                xlabel="p-value", ylabel="count", bins=cfg.bins,
            )
            render_plot(doc, cfg.out / f"calibration_{m}_hist.svg")
    return res


def cmd_simulate(cfg: RunConfig) -> dict:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.chain.seed, spawn_key=(37,))))
    I = int(cfg.extra.get("groups", DEFAULTS["groups"]))
    n = int(cfg.extra.get("group_size", DEFAULTS["group_size"]))
    if I < 1 or n < 1:
        raise UsageError("groups and group-size must be positive")
    hyper = _true_hyper(cfg)
    prior = cfg.prior
    if hyper is not None:
        kind = "proper-normal" if cfg.model == "normal-hier" else "proper-betabinom"
        prior = PriorSpec(kind, cfg.prior.a, fixed=hyper)
    if cfg.model == "normal-hier":
        params = draw_normal_params(prior, I, rng)
        data = draw_normal_data(params, [n] * I, rng)
        truth = {"theta": params.theta.tolist(), "mu": params.mu, "tau2": params.tau2,
                 "sigma2": np.asarray(params.sigma2).tolist()}
    else:
        params = draw_betabinom_params(prior, I, rng)
        data = draw_betabinom_data(params, [n] * I, rng)
        truth = {"p": params.p.tolist(), "alpha": params.alpha, "beta": params.beta}
    (cfg.out / "dataset.csv").write_text(hio.dataset_to_csv(data), encoding="utf-8")
    res = {"command": "simulate", "config": cfg.to_dict(), "truth": truth,
           "data_fingerprint": data.fingerprint()}
    hio.write_json(cfg.out / "truth.json", res)
    return res


def cmd_plot(cfg: RunConfig) -> dict:
    src = Path(str(cfg.extra["input"]))
    header, cols, vals = hio.read_table(src)
    kind = cfg.extra.get("kind") or ("qq" if vals.shape[1] == 2 else "histogram")
    title = src.stem
    if kind == "qq":
        if vals.shape[1] != 2:
            raise UsageError("a QQ plot needs a two-column CSV")
        doc = qq_document(vals, title=title, xlabel=cols[0], ylabel=cols[1], identity_line=True)
    else:
        if vals.shape[1] != 1:
            raise UsageError("a histogram needs a one-column CSV")
        doc = PlotDocument("histogram", vals[:, 0], title=title, xlabel=cols[0],
                           ylabel="count", bins=cfg.bins)
    path = render_plot(doc, cfg.out / f"{src.stem}.svg")
    return {"command": "plot", "kind": kind, "output": path.name, "source_operation": header.get("operation")}


COMMANDS = {
    "fit": cmd_fit,
    "check": run_check,
    "ppp": cmd_ppp,
    "postpred": cmd_postpred,
    "priorpred": cmd_priorpred,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "plot": cmd_plot,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = load_settings(args)
        cfg = resolve(args.command, settings)
        cfg.out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            result = COMMANDS[args.command](cfg)
    except SamplerError as exc:
        print(f"hiercheck: sampler failure: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except OSError as exc:
        print(f"hiercheck: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        # ModelError, DatasetError, UsageError and ImproperPriorError are ValueErrors
        print(f"hiercheck: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(result, sort_keys=True, indent=1))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
