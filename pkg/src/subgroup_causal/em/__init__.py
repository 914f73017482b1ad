"""Likelihood fitting: EM, the logistic inner solver and model checks."""
from .fit import EmFit, EmOptions, em_fit, em_local_maxima
from .gof import (ExpertChecks, GofResult, Selection, SensitivityCurve, check_expert_assumptions,
                  chi2_1_sf, lrt_gof, profile_sensitivity, select_mechanism)
from .logistic import LogisticFit, irls_logistic

__all__ = ["EmFit", "EmOptions", "em_fit", "em_local_maxima", "LogisticFit", "irls_logistic",
           "GofResult", "lrt_gof", "chi2_1_sf", "ExpertChecks", "check_expert_assumptions",
           "Selection", "select_mechanism", "SensitivityCurve", "profile_sensitivity"]
