"""One-shot parameter identification for the one-RC Thevenin battery model."""

from .identifiability import (
    lambda_sweep,
    rank_check,
    sensitivity,
    theoretical_accuracy_cnls,
    theoretical_accuracy_rnls,
)
from .model import CurrentProfile, ThveninParams, nominal_params, ocv, r0, simulate, voltage_constant_current
from .montecarlo import McConfig, run_study
from .solver import (
    BoxConstraint,
    NlsProblem,
    TrustRegionConfig,
    solve_box_constrained,
    solve_regularized,
    solve_unconstrained,
)
from .workflows import DischargeDataset, PriorSpec, build_problem, identify

__version__ = "0.1.0"
