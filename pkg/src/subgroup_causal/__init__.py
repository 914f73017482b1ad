"""Subgroup causal effects in randomized trials with a nonignorably missing covariate.

The package estimates effects of a binary treatment on a categorical
outcome within levels of a covariate that is missing for some units, where
missingness may depend on the covariate, the treatment and the outcome.
"""
__version__ = "0.1.0"

from .errors import (ConvergenceError, DataError, IdentificationError, ModelIncompatibleError,
                     RankDeficientError, SubgroupCausalError)
from .tables import (FactoredParams, JointDistribution, Mechanism, MechanismSpec, ObservedTable,
                     compose_joint, empirical_conditionals, observed_loglik, population_log_or,
                     saturated_loglik)
from .measures import CausalEstimate, Measure, crr, effects_from_joint, eval_measure
from .identify import (bounds_m5, check_m2_rank, check_m3_condition, check_m4_condition,
                       check_mx_condition, identify_m1, identify_m2, identify_m3_ce_randomized,
                       identify_m3_cor, identify_m3_joint, identify_m4, identify_mx, solve_m4)
from .em import (EmFit, EmOptions, check_expert_assumptions, em_fit, em_local_maxima,
                 irls_logistic, lrt_gof, profile_sensitivity, select_mechanism)
from .gibbs import (GibbsOptions, PosteriorDraws, effect_modification_test, gibbs_run,
                    posterior_summary)
from .simulate import (DgpSpec, generate_dataset, mask_and_recover, replicate_study,
                       simulation_dgp)
from .io import ingest, load_fixture
