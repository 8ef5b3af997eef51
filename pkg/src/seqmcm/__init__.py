"""Sequential maximum-confidence discrimination of quantum states.

The package answers three questions about an ensemble of quantum states:

* what is the largest confidence with which each state can be identified,
  and which measurement achieves it (:mod:`seqmcm.mcm`);
* how little of the measurement's strength must be spent — weakened
  measurements, inconclusive-rate and guessing-probability optimization
  (:mod:`seqmcm.optim`);
* how the ensemble degrades when several parties measure one after the
  other, each receiving the previous party's post-measurement states
  (:mod:`seqmcm.seqchan`).

:mod:`seqmcm.families` packages four qubit families whose chains have
closed forms; :mod:`seqmcm.cli` exposes everything as a command line.

Conventions: labels are 1..N with 0 reserved for inconclusive outcomes;
angles are radians; ``trace_norm_distance`` carries no 1/2 factor;
confidences are probabilities, min-entropies are bits.
"""

from .qcore import (
    DensityMatrix,
    DimensionError,
    Ensemble,
    FeasibilityError,
    NotHermitianError,
    Povm,
    PovmReport,
    PureState,
    bloch_vector,
    density_from_bloch,
    ensemble_from_json,
    ensemble_to_json,
    load_ensemble,
    matrix_from_json,
    matrix_to_json,
    povm_from_json,
    povm_to_json,
    purity,
    random_density,
    random_ensemble,
    random_pure_state,
    trace_norm,
    trace_norm_distance,
    validate_povm,
)
from .mcm import (
    KktReport,
    McmEntry,
    SupportError,
    complementary_state,
    confidence_entropy_identity,
    guessing_probability,
    max_confidence,
    max_relative_entropy,
    mcm_povm,
    solve_mcm,
    verify_kkt,
)
from .optim import (
    GainSchedule,
    InfeasibleGainError,
    NumericMin,
    UnsupportedScaleError,
    WeightSolution,
    golden_section,
    min_error_guessing,
    min_inconclusive_rate,
    minimize_disturbance_numeric,
    optimal_joint_schedule,
    random_feasible_weights,
    two_state_least_disturbing,
)
from .seqchan import (
    ChannelConstructionError,
    KrausChannel,
    PartyPlan,
    PartyRecord,
    SequentialTrace,
    Strategy,
    StrategyInfeasibleError,
    WeakMcm,
    apply_channel,
    ensemble_distance,
    inconclusive_rate,
    information_gain,
    joint_outcomes,
    kraus_from_weak,
    run_sequence,
    trace_to_csv,
    trace_to_json,
    two_state_step,
    weaken,
)
from .families import (
    GuFamily,
    InfeasibleRateError,
    LiftedGuFamily,
    MirrorFamily,
    MirrorMcm,
    MirrorState,
    TwoMixedFamily,
    gu,
    lifted_gu,
    mirror,
    mirror_mcm,
    mirror_retarget,
    mirror_state_of,
    mirror_step,
    mirror_weak_mcm,
    pure_mirror_phi,
    two_mixed,
)

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix",
    "DimensionError",
    "Ensemble",
    "FeasibilityError",
    "NotHermitianError",
    "Povm",
    "PovmReport",
    "PureState",
    "bloch_vector",
    "density_from_bloch",
    "ensemble_from_json",
    "ensemble_to_json",
    "load_ensemble",
    "matrix_from_json",
    "matrix_to_json",
    "povm_from_json",
    "povm_to_json",
    "purity",
    "random_density",
    "random_ensemble",
    "random_pure_state",
    "trace_norm",
    "trace_norm_distance",
    "validate_povm",
    "KktReport",
    "McmEntry",
    "SupportError",
    "complementary_state",
    "confidence_entropy_identity",
    "guessing_probability",
    "max_confidence",
    "max_relative_entropy",
    "mcm_povm",
    "solve_mcm",
    "verify_kkt",
    "GainSchedule",
    "InfeasibleGainError",
    "NumericMin",
    "UnsupportedScaleError",
    "WeightSolution",
    "golden_section",
    "min_error_guessing",
    "min_inconclusive_rate",
    "minimize_disturbance_numeric",
    "optimal_joint_schedule",
    "random_feasible_weights",
    "two_state_least_disturbing",
    "ChannelConstructionError",
    "KrausChannel",
    "PartyPlan",
    "PartyRecord",
    "SequentialTrace",
    "Strategy",
    "StrategyInfeasibleError",
    "WeakMcm",
    "apply_channel",
    "ensemble_distance",
    "inconclusive_rate",
    "information_gain",
    "joint_outcomes",
    "kraus_from_weak",
    "run_sequence",
    "trace_to_csv",
    "trace_to_json",
    "two_state_step",
    "weaken",
    "GuFamily",
    "InfeasibleRateError",
    "LiftedGuFamily",
    "MirrorFamily",
    "MirrorMcm",
    "MirrorState",
    "TwoMixedFamily",
    "gu",
    "lifted_gu",
    "mirror",
    "mirror_mcm",
    "mirror_retarget",
    "mirror_state_of",
    "mirror_step",
    "mirror_weak_mcm",
    "pure_mirror_phi",
    "two_mixed",
    "__version__",
]
