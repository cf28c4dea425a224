"""Adaptive normalized matched filter with regularized covariance estimators.

The package covers the detector statistic, the RSCM and regularized Tyler
estimators, large-dimensional false-alarm/detection theory, the blind design
of the regularization parameter and threshold, and a Monte Carlo harness.
"""
__version__ = "0.1.0"

from anmf.errors import InvalidParameterError, NumericalError
from anmf.model import (
    Scenario,
    SpectralMeasure,
    TextureModel,
    build_toeplitz_covariance,
    hermitian_sqrt,
    spectral_measure,
    steering_vector,
)
from anmf.clutter import ClutterBatch, generate_primary, generate_secondary, sample_speckle, sample_texture, trial_rng
from anmf.estimators import RteSolveReport, rscm, rte, scm
from anmf.detector import StatisticValue, anmf_statistic, anmf_statistics, nmf_oracle
from anmf.marcum import marcum_q1
from anmf.theory import (
    TheoryReport,
    pd_theory,
    pfa_theory,
    rho_to_rho_bar,
    solve_gamma,
    solve_m,
    theory_rte,
    theory_scm,
)
from anmf.design import (
    DesignOutput,
    design_rscm,
    design_rte,
    f_hat_rte,
    f_hat_scm,
    optimize_rho,
    set_threshold,
    sigma2_hat_rte,
    sigma2_hat_scm,
)
from anmf.montecarlo import RatesTable, TrialRecord, calibrate_threshold, estimate_rates, roc_curve, run_trials

__all__ = [
    "InvalidParameterError", "NumericalError",
    "Scenario", "SpectralMeasure", "TextureModel", "build_toeplitz_covariance", "hermitian_sqrt",
    "spectral_measure", "steering_vector",
    "ClutterBatch", "generate_primary", "generate_secondary", "sample_speckle", "sample_texture", "trial_rng",
    "RteSolveReport", "rscm", "rte", "scm",
    "StatisticValue", "anmf_statistic", "anmf_statistics", "nmf_oracle",
    "marcum_q1",
    "TheoryReport", "pd_theory", "pfa_theory", "rho_to_rho_bar", "solve_gamma", "solve_m", "theory_rte",
    "theory_scm",
    "DesignOutput", "design_rscm", "design_rte", "f_hat_rte", "f_hat_scm", "optimize_rho", "set_threshold",
    "sigma2_hat_rte", "sigma2_hat_scm",
    "RatesTable", "TrialRecord", "calibrate_threshold", "estimate_rates", "roc_curve", "run_trials",
]
