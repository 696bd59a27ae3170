"""Large-step gradient descent on linearly separable logistic regression.

Simulate GD trajectories, split iterates along the max-margin direction,
detect oscillations, measure the unstable-to-stable transition time and
check the governing inequalities numerically.
"""

from .dataset import (CertificateKind, Dataset, MarginCertificate, generate_random, load_csv,
                      max_margin_2d, max_margin_grid, normalize, rotate90, save_csv)
from .diagnostics import (DerivedConstants, OscillationEvent, decompose, detect_oscillations,
                          detect_oscillations_general, index_sets, stable_rate_check,
                          transition_time)
from .engine import (Trajectory, default_horizon, gd_step, gradient, loss, potential, run,
                     write_trajectory_csv)
from .estimator import LargeStepGDClassifier
from .exceptions import (LargeStepError, NegativeDiscriminant, NonSeparableError,
                         NumericalError, ParseError, PreconditionUnmet, TheoryViolation)
from .experiments import SweepConfig, SweepRow, emit_svg, rate_experiment, sweep_tau_vs_eta
from .lowerbound import (StableHardParams, delta_star, hard_dataset_classify,
                         hard_dataset_stable, theorem2_bound, verify_classify_bound,
                         verify_stable_bound)
from .theory import LemmaId, LemmaReport, potential_lower_bound, verify_all, verify_lemma

__version__ = "0.1.0"

__all__ = [
    "CertificateKind", "Dataset", "MarginCertificate", "generate_random", "load_csv",
    "max_margin_2d", "max_margin_grid", "normalize", "rotate90", "save_csv",
    "DerivedConstants", "OscillationEvent", "decompose", "detect_oscillations",
    "detect_oscillations_general", "index_sets", "stable_rate_check", "transition_time",
    "Trajectory", "default_horizon", "gd_step", "gradient", "loss", "potential", "run",
    "write_trajectory_csv", "LargeStepGDClassifier",
    "LargeStepError", "NegativeDiscriminant", "NonSeparableError", "NumericalError",
    "ParseError", "PreconditionUnmet", "TheoryViolation",
    "SweepConfig", "SweepRow", "emit_svg", "rate_experiment", "sweep_tau_vs_eta",
    "StableHardParams", "delta_star", "hard_dataset_classify", "hard_dataset_stable",
    "theorem2_bound", "verify_classify_bound", "verify_stable_bound",
    "LemmaId", "LemmaReport", "potential_lower_bound", "verify_all", "verify_lemma",
]
