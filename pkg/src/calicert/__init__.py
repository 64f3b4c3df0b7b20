"""Worst-case ECE and Brier score of certified predictions under bounded input perturbations."""

from .admm import AdmmConfig, acce_ensemble, default_grid, multi_start_solve, solve
from .brier import brier_worst_confidences, certified_brier
from .certify import (
    ABSTAIN,
    ConfidenceCertificate,
    EcdfPartition,
    SmoothingEvidence,
    cdf_bound,
    certificate_width_report,
    certified_radius,
    dkw_band,
    standard_bound,
)
from .dece import DeceSchedule, SoftBinning, dece_gradient, dece_value, maximize_dece
from .errors import CalicertError, FeasibilityError, InfeasibleError, InputError, TooLargeError
from .metrics import (
    BinningScheme,
    CalibrationReport,
    PredictionRecord,
    accuracy,
    compute_adaece,
    compute_ece,
    compute_tlbs,
    reliability_data,
)
from .mip import FeasiblePoint, MipInstance, build_instance, check_feasibility, objective, project_feasible
from .oracle import brute_force_cce, grid_cce, verify_brier_bound
from .pipeline import CertifiedReport, RunConfig, emit_report, ingest, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "acce_ensemble",
    "default_grid",
    "multi_start_solve",
    "solve",
    "brier_worst_confidences",
    "certified_brier",
    "ABSTAIN",
    "ConfidenceCertificate",
    "EcdfPartition",
    "SmoothingEvidence",
    "cdf_bound",
    "certificate_width_report",
    "certified_radius",
    "dkw_band",
    "standard_bound",
    "DeceSchedule",
    "SoftBinning",
    "dece_gradient",
    "dece_value",
    "maximize_dece",
    "CalicertError",
    "FeasibilityError",
    "InfeasibleError",
    "InputError",
    "TooLargeError",
    "BinningScheme",
    "CalibrationReport",
    "PredictionRecord",
    "accuracy",
    "compute_adaece",
    "compute_ece",
    "compute_tlbs",
    "reliability_data",
    "FeasiblePoint",
    "MipInstance",
    "build_instance",
    "check_feasibility",
    "objective",
    "project_feasible",
    "brute_force_cce",
    "grid_cce",
    "verify_brier_bound",
    "CertifiedReport",
    "RunConfig",
    "emit_report",
    "ingest",
    "run_pipeline",
    "__version__",
]
