"""Probabilistic safety certificates for linear systems controlled over lossy links.

A discrete-time stochastic linear system is closed over two Bernoulli
packet-loss channels (sensor and actuator).  The package builds the
augmented closed-loop model, synthesizes a quadratic control barrier
certificate ``B(z) = z' P z`` and turns it into a lower bound on the
probability of staying outside the unsafe set for ``T`` steps.
"""

from .certificate import (Box, QuadraticCbc, SafetySpec, check_inequality, compute_beta,
                          compute_c, compute_eta, drift_operator, probability_bound,
                          validate_cbc)
from .exceptions import (CertificateError, ConditioningWarning, DimensionError,
                         InfeasibleError, SpecError, UncertifiedLevelWarning)
from .model import (AugmentedSystem, CoeffVariant, DtSls, FeedbackGain, NetworkParams,
                    build_augmented, realize_transition)
from .motor import MotorParams, build_motor
from .simulator import SimConfig, SimulationReport, run_monte_carlo
from .synthesis import (CbcSynthesizer, SynthesisConfig, SynthesisResult,
                        operator_spectral_radius, solve_generalized_lyapunov, synthesize)

__version__ = "0.1.0"

__all__ = [
    "AugmentedSystem", "Box", "CbcSynthesizer", "CertificateError", "CoeffVariant",
    "ConditioningWarning", "DimensionError", "DtSls", "FeedbackGain", "InfeasibleError",
    "MotorParams", "NetworkParams", "QuadraticCbc", "SafetySpec", "SimConfig",
    "SimulationReport", "SpecError", "SynthesisConfig", "SynthesisResult",
    "UncertifiedLevelWarning", "build_augmented", "build_motor", "check_inequality",
    "compute_beta", "compute_c", "compute_eta", "drift_operator", "operator_spectral_radius",
    "probability_bound", "realize_transition", "run_monte_carlo",
    "solve_generalized_lyapunov", "synthesize", "validate_cbc",
]
