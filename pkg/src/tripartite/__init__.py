"""Budget-constrained tripartite diagnostic rules, ROC/AUC and simulation tools."""

from .cohort import Cohort, CohortError, Observation, Schema, VlThreshold, composite_score, composite_scores, dichotomize, parse_cohort, serialize_cohort
from .decision_space import DecisionSpace, Diagnosis, TripartiteRule, apply_rule, brute_force_space, build_decision_space
from .empirical import BELOW_SUPPORT, CdfSet, EcdfSet, StepCdf, ecdf_set, h_phi
from .logistic import LogisticFit, fit_logistic, hosmer_lemeshow
from .resample import ResampleConfig, bootstrap_se, kfold_cv
from .roc import RocCurve, auc, auc_from_curve, auc_lower_bound, auc_variance_plugin, auc_vs_phi, roc_curve
from .rule_select import RiskReport, SelectionCriterion, risk_report, select_min_risk, select_tilt_min_tmr
from .simulate import SCENARIOS, ConvergenceResult, GammaScenario, convergence_study, design_lookup, run_scenario_study, sample_scenario, true_optimum
from .tilt import TiltModel, fit_tilt, gof_overlay, solve_nu

__version__ = "0.1.0"
