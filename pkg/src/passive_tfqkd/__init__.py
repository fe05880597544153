"""Passive decoy-state twin-field QKD: source statistics, decoy LPs and key rates."""

from .channel_sim import ChannelSpec, code_mode_observables, decoy_gains, im_leakage_error, yield_nm
from .decoy_lp import (LinearProgram, YieldBounds, bound_yield, build_constraints,
                       estimate_yields, passive_pairs)
from .detector_conditioning import (DetectorSpec, ModePattern, click_probs,
                                    conditional_output_pmf, decoy_states, mode_probability)
from .errors import (ConditioningError, ConfigurationError, DomainError, InfeasibleError,
                     TFQKDError, UndefinedErrorRate)
from .experiments import (ExperimentConfig, SchemeParams, evaluate_point, load_config,
                          optimize_point, parse_config, run_sweep)
from .fock_optics import (JointPmf, PhotonPmf, SourceOptics, bs_fock_pmf, cascade_joint_pmf,
                          joint_pmf_two_intensity, output_pmf_coherent, poisson_pmf, split_pmf)
from .keyrate import (KeyRateReport, LeakageCaps, binary_entropy, information_leakage,
                      plob_bound, secret_key_rate, x_upper_bounds)

__version__ = "0.1.0"
