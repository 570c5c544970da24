"""Regenerate ``frozen.json``: reference values from independent sources.

Nothing here imports the package under test. Special-function values come
from mpmath quadrature and root finding at 40 significant digits; the
Shapiro-Wilk reference values come from scipy's Fortran ``swilk`` routine.

Run with ``python tests/oracles/build_oracles.py``; the output is committed
and the tests only read it.
"""

import json
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy import stats

mp.mp.dps = 40


def normal_cdf_quad(x):
    dens = lambda t: mp.exp(-t * t / 2) / mp.sqrt(2 * mp.pi)
    return mp.mpf("0.5") + mp.quad(dens, [0, x])


def beta_cdf_quad(x, a, b):
    dens = lambda t: t ** (a - 1) * (1 - t) ** (b - 1)
    return mp.quad(dens, [0, x]) / mp.beta(a, b)


def main():
    out = {}
    out["normal_cdf_1.959964"] = float(normal_cdf_quad(mp.mpf("1.959964")))
    out["normal_quantile_0.975"] = float(mp.findroot(lambda x: normal_cdf_quad(x) - mp.mpf("0.975"), 1.96))
    out["normal_quantile_0.25"] = float(mp.findroot(lambda x: normal_cdf_quad(x) - mp.mpf("0.25"), -0.67))
    out["beta_cdf_0.3_2_5"] = float(beta_cdf_quad(mp.mpf("0.3"), 2, 5))
    out["beta_quantile_0.25_2_5"] = float(
        mp.findroot(lambda x: beta_cdf_quad(x, 2, 5) - mp.mpf("0.25"), 0.16)
    )
    # one unit, n=10, x=3, p=0.3, alpha=2, beta=5; binomial coefficient omitted
    p, a, b = mp.mpf("0.3"), 2, 5
    out["loglik_betabinom_unit"] = float(
        3 * mp.log(p) + 7 * mp.log(1 - p)
        + (a - 1) * mp.log(p) + (b - 1) * mp.log(1 - p)
        - (mp.loggamma(a) + mp.loggamma(b) - mp.loggamma(a + b))
    )
    y = [0.5, -1.25, 2.0]
    th, s2 = mp.mpf("0.25"), mp.mpf("1.5")
    out["loglik_normal_3obs"] = float(
        sum(-mp.log(2 * mp.pi * s2) / 2 - (mp.mpf(v) - th) ** 2 / (2 * s2) for v in y)
    )

    rng = np.random.default_rng(20240611)
    samples = [rng.standard_normal(int(n)) * rng.uniform(0.5, 3) + rng.uniform(-2, 2)
               for n in rng.integers(3, 60, size=50)]
    # a few deliberately non-normal shapes
    samples[1] = rng.exponential(size=25)
    samples[2] = rng.uniform(size=40)
    samples[3] = rng.standard_t(2, size=30)
    out["sw_reference"] = []
    for s in samples:
        res = stats.shapiro(s)
        out["sw_reference"].append(
            {"sample": [float(v) for v in s], "W": float(res.statistic), "p": float(res.pvalue)}
        )
    s20 = np.random.default_rng(7).normal(10.0, 2.0, size=20)
    res = stats.shapiro(s20)
    out["sw_n20"] = {"sample": [float(v) for v in s20], "W": float(res.statistic), "p": float(res.pvalue)}

    path = Path(__file__).with_name("frozen.json")
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
