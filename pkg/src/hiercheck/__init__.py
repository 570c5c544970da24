"""Model checks for hierarchical models built from posterior draws.

Pivotal quantities (group-level residuals in the normal hierarchical model,
Beta probability integral transforms in the beta-binomial model) have known
distributions at draws from the posterior, so their QQ plots and
goodness-of-fit p-values need no extra simulation. The package also
computes partial posterior, posterior predictive and prior predictive
p-values for comparison, and bounds the joint significance of a dependent
series of per-draw p-values.
"""

from .bounds import dependent_orderstat_bound, joint_pvalue_bound
from .calibration import CalibrationConfig, calibration_study
from .models import (
    BetaBinomialData,
    BetaBinomialParams,
    GroupedNormalData,
    ModelError,
    NormalHierParams,
    PriorSpec,
)
from .partial import (
    TestStatistic,
    partial_posterior_pvalue,
    posterior_predictive_pvalue,
    prior_predictive_pvalue,
)
from .pivotal import (
    beta_pit,
    group_level_residuals,
    max_pit_series,
    qq_data,
    sw_pvalue_series,
)
from .samplers import ChainConfig, PosteriorDraws, SamplerError, gibbs_normal_hier, mcmc_betabinom
from .shapiro import shapiro_wilk

__version__ = "0.1.0"
