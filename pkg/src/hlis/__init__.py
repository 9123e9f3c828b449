"""Multiple testing under a hierarchical hidden Markov model.

The HLIS statistic is the posterior null probability of each hypothesis under
a two-layer hidden chain: a block-wise region chain over types ``1..K`` that
modulates a two-state null/non-null chain.  The package simulates from the
model, fits it by EM with kernel emission densities, runs step-up procedures
(HLIS, LIS, Lfdr, BH) and scores them in Monte Carlo replications.
"""

__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .densities import (GaussianMixture, StandardNormal, WeightedKernel, silverman_bandwidth,
                        weighted_kde)
from .em import FitConfig, FitResult, bic_select_K, em_fit, m_step_update
from .evaluation import (SETTINGS, ExperimentReport, SettingPreset, classification_metrics,
                         get_setting, run_setting, sensitivity_topk)
from .inference import (PosteriorBundle, backward_pass, brute_force_posterior, compute_hlis,
                        compute_posteriors, forward_pass, observed_log_likelihood)
from .ingest import SummaryStatsRecord, ingest_summary_stats
from .model import (Dataset, ModelParams, block_indicator, complete_log_likelihood,
                    mixture_density, simulate_dataset, validate_params)
from .procedures import (DecisionResult, bh_procedure, hlis_data_driven_procedure,
                         hlis_oracle_procedure, lfdr_procedure, lis_procedure, step_up_select)
