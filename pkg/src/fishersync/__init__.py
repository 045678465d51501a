"""Fisher-information analysis of distributed clock synchronization.

Sensors hold noisy opinions of a common start time and refine them by
observing one another through a noisy channel. The package simulates the
accuracy-weighted update rule over oblivious meeting patterns, computes the
Fisher-information upper bounds that no algorithm can beat, and checks the
two against each other.
"""

from .bounds import (
    ConvergenceBound,
    FisherTrajectory,
    check_channel_capacity,
    convergence_lower_bound,
    cramer_rao_floor,
    empirical_convergence_time,
    fi_recursion,
)
from .dist import (
    DistributionSpec,
    FamilyCatalog,
    Gaussian,
    GaussianMixture2,
    Logistic,
    NonConvergent,
    delta0,
    fisher_tightness,
    quadrature_fisher_information,
    spec_from_dict,
)
from .montecarlo import (
    ExperimentConfig,
    ExperimentResult,
    TauStar,
    check_accuracy_matches_variance,
    check_competitiveness,
    check_convergence_time,
    check_unbiasedness,
    kappa_trend,
    round_robin,
    run_experiment,
)
from .pattern import (
    IndependenceReport,
    MeetingEvent,
    MeetingPattern,
    NotPowerOfTwo,
    PatternError,
    PatternNotIndependent,
    gen_broadcast,
    gen_hypercube,
    gen_random_independent,
    gen_tournament,
    load_pattern,
    relevant_set,
    save_pattern,
    validate_independence,
)
from .sync import Algorithm, SensorState, observe_update_alg, run_trial, trial_rng

__version__ = "0.1.0"
