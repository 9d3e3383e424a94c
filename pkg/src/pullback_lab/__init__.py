"""Pullback attractors of the regularized Navier-Stokes system on a periodic box."""

from .attractor import (
    AbsorptionEstimate,
    PreconditionError,
    calibrate_constants,
    check_absorption,
    compute_R1,
    compute_tau0,
    estimate_mpa_section,
    pullback_decay,
)
from .brochettes import (
    RadiusBrochette,
    TrajectoryBrochette,
    TrajectoryEnsemble,
    is_class_D,
    sample_ensemble,
)
from .forcing import ForcingProfile, IntegrabilityError
from .navier_stokes import (
    BlowUpError,
    EnergyLedger,
    SolverConfig,
    check_energy_inequality,
    integrate,
    regularized_convection,
    step,
)
from .oracle import OracleSystem, verify_process_equivalence
from .spaces import (
    SpectralDomain,
    SpectralField,
    leray_project,
    mode_pair,
    norm_dual,
    norm_E0,
    norm_H,
    norm_V,
    random_field,
)
from .trajectories import (
    TrajectorySample,
    frechet_prenorm,
    load_snapshot,
    save_snapshot,
    semidistance,
    translate,
)

__all__ = [
    "AbsorptionEstimate", "BlowUpError", "EnergyLedger", "ForcingProfile",
    "IntegrabilityError", "OracleSystem", "PreconditionError", "RadiusBrochette",
    "SolverConfig", "SpectralDomain", "SpectralField", "TrajectoryBrochette",
    "TrajectoryEnsemble", "TrajectorySample", "calibrate_constants", "check_absorption",
    "check_energy_inequality", "compute_R1", "compute_tau0", "estimate_mpa_section",
    "frechet_prenorm", "integrate", "is_class_D", "leray_project", "load_snapshot",
    "mode_pair", "norm_dual", "norm_E0", "norm_H", "norm_V", "pullback_decay",
    "random_field", "regularized_convection", "sample_ensemble", "save_snapshot",
    "semidistance", "step", "translate", "verify_process_equivalence",
]
