"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The calibration studies are shared through module fixtures so that the
beta-binomial replicates back criteria 2 and 3, and one normal study backs
criteria 1 and 6.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import mcse, record_criterion
from hiercheck import cli
from hiercheck.bounds import bound_validity_study, joint_pvalue_bound
from hiercheck.calibration import NORMAL_METHODS, CalibrationConfig, calibration_study
from hiercheck.geweke import geweke_betabinom, geweke_normal
from hiercheck.models import BetaBinomialData, GroupedNormalData, PriorSpec
from hiercheck.partial import TestStatistic, sample_partial_posterior, statistic_value
from hiercheck.pivotal import PivotalSample, max_uniform_pit
from hiercheck.samplers import ChainConfig, gibbs_normal_hier, mcmc_betabinom
from hiercheck.shapiro import shapiro_wilk, shapiro_wilk_many

pytestmark = pytest.mark.slow

R = 2000
LEVEL = 0.01
# a 2500-sweep chain per replicate; only its last draw enters the pivots
CAL_CHAIN = ChainConfig(iterations=2500, burn_in=500)


@pytest.fixture(scope="module")
def normal_study():
    t0 = time.perf_counter()
    cfg = CalibrationConfig(
        model="normal-hier", n_groups=5, group_size=8, prior=PriorSpec("proper-normal"),
        replicates=R, methods=NORMAL_METHODS, seed=2024, chain=CAL_CHAIN,
    )
    rep = calibration_study(cfg)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def betabinom_study():
    t0 = time.perf_counter()
    cfg = CalibrationConfig(
        model="beta-binom", n_groups=12, group_size=8, prior=PriorSpec("proper-betabinom"),
        replicates=R, methods=("pivotal-max",), seed=2024, chain=CAL_CHAIN,
    )
    rep = calibration_study(cfg)
    return rep, time.perf_counter() - t0


def test_criterion_1_pivot_normality(normal_study):
    rep, secs = normal_study
    E = rep.pooled_pivots["E"]
    ks = stats.kstest(E, "norm")
    ok = E.size == 5 * R and ks.pvalue > LEVEL
    detail = f"{E.size} pooled E, KS D={ks.statistic:.4f} p={ks.pvalue:.3f} (study {secs:.0f}s, shared with 6)"
    assert record_criterion(1, "pivot normality", ok, detail)


def test_criterion_2_pit_uniformity(betabinom_study):
    rep, secs = betabinom_study
    zeta = rep.pooled_pivots["zeta"]
    ks = stats.kstest(zeta, "uniform")
    ok = zeta.size == 12 * R and ks.pvalue > LEVEL
    detail = f"{zeta.size} pooled zeta, KS D={ks.statistic:.4f} p={ks.pvalue:.3f} (study {secs:.0f}s)"
    assert record_criterion(2, "PIT uniformity", ok, detail)


def test_criterion_3_max_law(betabinom_study):
    rep, _ = betabinom_study
    u12 = rep.pooled_pivots["max_cdf"]
    ks = stats.kstest(u12, "uniform")
    _, cdf, _ = max_uniform_pit(PivotalSample(0, [0.5] * 11 + [0.9], "uniform"))
    ok = ks.pvalue > LEVEL and abs(cdf - 0.28243) <= 1e-5
    detail = f"{u12.size} maxima, KS D={ks.statistic:.4f} p={ks.pvalue:.3f}; 0.9^12={cdf:.6f}"
    assert record_criterion(3, "max law x^12", ok, detail)


def test_criterion_4_bound():
    t0 = time.perf_counter()
    b = joint_pvalue_bound((0.001, 0.5, 0.9)).overall_bound
    counts = {}
    for copula in ("independent", "equicorrelated-gaussian", "comonotone"):
        study = bound_validity_study(copula, J=20, replicates=10_000, seed=7, rho=0.5)
        counts[copula] = study.n_violations
    secs = time.perf_counter() - t0
    ok = b == 0.003 and sum(counts.values()) == 0 and secs < 120
    detail = f"bound={b!r}, violations {counts}, {secs:.1f}s"
    assert record_criterion(4, "bound arithmetic and validity", ok, detail)


def test_criterion_5_partial_posterior_limits():
    t0 = time.perf_counter()
    data = GroupedNormalData([[0.3, 1.9, 1.1, 2.4]])
    prior = PriorSpec("proper-normal", fixed={"sigma2": 1.0})

    # sufficient: t = ybar with sigma known leaves the prior
    mean_stat = TestStatistic("group-mean", 0)
    pp = sample_partial_posterior(
        data, statistic_value(data, mean_stat), mean_stat, prior,
        ChainConfig.for_retained(20_000, burn_in=2000, thin=2, seed=51),
    )
    c = pp.draws.columns
    theta = c["theta"][:, 0]
    # prior moments: mu ~ N(0, 1), tau2 ~ IG(3, 2), theta = mu + tau z
    checks = {
        "mu": (c["mu"], 0.0), "mu^2": (c["mu"] ** 2, 1.0), "tau2": (c["tau2"], 1.0),
        "theta": (theta, 0.0), "theta^2": (theta**2, 2.0),
    }
    zs = {k: (x.mean() - m) / mcse(x) for k, (x, m) in checks.items()}
    sufficient_ok = all(abs(z) < 3 for z in zs.values())

    # ancillary: the within-group contrast has a parameter-free law when
    # sigma is known, so the partial posterior is the full posterior
    contrast = TestStatistic("contrast", 0)
    anc = sample_partial_posterior(
        data, statistic_value(data, contrast), contrast, prior,
        ChainConfig.for_retained(4000, thin=20, seed=52),
    )
    full = gibbs_normal_hier(data, prior, ChainConfig.for_retained(4000, thin=20, seed=53))
    ks_p = {
        k: stats.ks_2samp(anc.draws.columns[k].ravel(), full.columns[k].ravel()).pvalue
        for k in ("mu", "tau2", "theta")
    }
    ancillary_ok = all(p > LEVEL for p in ks_p.values())
    secs = time.perf_counter() - t0
    ok = sufficient_ok and ancillary_ok and secs < 300
    detail = (
        "sufficient z " + ", ".join(f"{k}={z:+.2f}" for k, z in zs.items())
        + "; ancillary KS p " + ", ".join(f"{k}={p:.3f}" for k, p in ks_p.items())
        + f"; {secs:.0f}s"
    )
    assert record_criterion(5, "partial posterior limits", ok, detail)


def test_criterion_6_uniformity_ordering(normal_study):
    rep, secs = normal_study
    prior_p = rep.pvalues["prior-predictive"]
    post_p = rep.pvalues["posterior-predictive"]
    part_rate = rep.rejection_rate["partial-posterior"]
    prior_ks = stats.kstest(prior_p, "uniform").pvalue
    post_ks = stats.kstest(post_p, "uniform").pvalue
    post_var = float(np.var(post_p, ddof=1))
    ok = (
        prior_ks > LEVEL
        and post_ks <= LEVEL
        and post_var < 1.0 / 12.0
        and 0.03 <= part_rate <= 0.10
        and secs < 1800
    )
    detail = (
        f"prior-pred KS p={prior_ks:.3f}; post-pred KS p={post_ks:.2g} var={post_var:.4f}; "
        f"partial rejection@0.05={part_rate:.4f}; study {secs:.0f}s"
    )
    assert record_criterion(6, "finite-sample uniformity ordering", ok, detail)


def test_criterion_7_sampler_oracles():
    toy = PriorSpec("proper-normal", fixed={"mu": 0.0, "tau2": 1.0, "sigma2": 1.0})
    th = gibbs_normal_hier(GroupedNormalData([[2.0]]), toy, ChainConfig.for_retained(100_000, seed=71))
    th = th.columns["theta"][:, 0]
    # the variance check uses the sample variance and its own standard error
    v_se = math.sqrt((np.mean((th - th.mean()) ** 4) - th.var() ** 2) / th.size)
    z_mean = (th.mean() - 1.0) / mcse(th)
    z_var = (th.var() - 0.5) / v_se
    bprior = PriorSpec("truncated-jeffreys-betabinom", fixed={"alpha": 1.0, "beta": 1.0})
    p = mcmc_betabinom(BetaBinomialData([3], [10]), bprior, ChainConfig.for_retained(100_000, seed=72))
    p = p.columns["p"][:, 0]
    z_beta = (p.mean() - 1.0 / 3.0) / mcse(p)
    gn = geweke_normal(PriorSpec("proper-normal"), [3, 3, 3], 100_000, 100_000, seed=73)
    gb = geweke_betabinom(PriorSpec("proper-betabinom"), [8, 8, 8], 100_000, 100_000, seed=74)
    ok = max(abs(z_mean), abs(z_var), abs(z_beta)) < 3 and gn.passed and gb.passed
    detail = (
        f"N(1,0.5) z_mean={z_mean:+.2f} z_var={z_var:+.2f}; Beta(4,8) z={z_beta:+.2f}; "
        f"Geweke max|z| normal={max(map(abs, gn.z_scores.values())):.2f} "
        f"beta-binom={max(map(abs, gb.z_scores.values())):.2f}"
    )
    assert record_criterion(7, "sampler correctness oracles", ok, detail)


def test_criterion_8_shapiro_wilk(oracle):
    w3, _ = shapiro_wilk([-1.0, 0.0, 1.0])
    x = np.array(oracle["sw_n20"]["sample"])
    base = shapiro_wilk(x)
    affine_ok = base == shapiro_wilk(2.0 * x) == shapiro_wilk(-x) == shapiro_wilk(0.25 * x)
    rng = np.random.default_rng(8)
    y = rng.normal(size=40)
    drift = max(abs(shapiro_wilk(a * y + b)[0] - shapiro_wilk(y)[0]) for a, b in ((3.7, -12.0), (0.01, 5.0)))
    _, P = shapiro_wilk_many(np.random.default_rng(88).normal(size=(10_000, 10)))
    null_p = stats.kstest(P, "uniform").pvalue
    worst = max(
        max(abs(w - c["W"]), abs(pv - c["p"]))
        for c in oracle["sw_reference"]
        for w, pv in [shapiro_wilk(c["sample"])]
    )
    ok = w3 == 1.0 and affine_ok and drift < 1e-12 and null_p > LEVEL and worst < 1e-4
    detail = (
        f"W(-1,0,1)={w3!r}; affine exact={affine_ok}, general drift={drift:.1e}; "
        f"null KS p={null_p:.3f}; max |diff| vs reference over {len(oracle['sw_reference'])} samples={worst:.1e}"
    )
    assert record_criterion(8, "Shapiro-Wilk", ok, detail)


def _bundle(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(tmp_path, capsys):
    rng = np.random.default_rng(9)
    normal = tmp_path / "normal.csv"
    normal.write_text(
        "group,value\n" + "".join(f"g{i},{float(v)!r}\n" for i in range(5) for v in rng.normal(0.4 * i, 1.0, 8))
    )
    bb = tmp_path / "bb.csv"
    bb.write_text("unit,successes,trials\n" + "".join(f"u{i},{x},8\n" for i, x in enumerate([3, 5, 1, 6, 4, 2, 4, 3])))
    fast = ["--iters", "800", "--burn-in", "200", "--seed", "9"]
    runs = {
        "fit": ["fit", "--data", normal, *fast],
        "fit-bb": ["fit", "--model", "beta-binom", "--data", bb, *fast],
        "check": ["check", "--data", normal, *fast],
        "check-bb": ["check", "--model", "beta-binom", "--data", bb, *fast],
        "ppp": ["ppp", "--data", normal, *fast],
        "postpred": ["postpred", "--data", normal, *fast],
        "priorpred": ["priorpred", "--prior", "proper", "--data", normal, *fast],
        "calibrate": ["calibrate", "--prior", "proper", "--replicates", "6", *fast],
        "calibrate-bb": ["calibrate", "--model", "beta-binom", "--prior", "proper", "--replicates", "4", *fast],
        "simulate": ["simulate", "--prior", "proper", *fast],
        "simulate-bb": ["simulate", "--model", "beta-binom", "--prior", "proper", *fast],
    }
    failures = []
    for name, argv in runs.items():
        bundles, stdout = [], []
        for attempt in ("a", "b"):
            out = tmp_path / name / attempt
            code = cli.main([str(a) for a in argv] + ["--out", str(out)])
            stdout.append(capsys.readouterr().out)
            if code != 0:
                failures.append(f"{name} exit {code}")
            bundles.append(_bundle(out))
        if not bundles[0] or bundles[0] != bundles[1] or stdout[0] != stdout[1]:
            failures.append(name)
    # plot consumes a CSV from the check bundle
    src = tmp_path / "check" / "a" / "pvalues.csv"
    plots = []
    for attempt in ("a", "b"):
        out = tmp_path / "plot" / attempt
        cli.main(["plot", "--input", str(src), "--out", str(out)])
        plots.append(_bundle(out))
    if not plots[0] or plots[0] != plots[1]:
        failures.append("plot")
    ok = not failures
    detail = f"{len(runs) + 1} command runs compared byte-for-byte" + (f"; differing: {failures}" if failures else "")
    assert record_criterion(9, "CLI determinism", ok, detail)
