"""E-detectors for nonparametric sequential changepoint detection."""

__version__ = "0.1.0"

from .bounds import (DelayBoundReport, DiscreteLaw, delay_bound_lorden,
                     delay_bound_no_separation, delay_bound_well_separated,
                     divergence_and_variance, g_alpha_upper_bound)
from .calibration import (AdaptiveCalibration, MixtureCalibration, boundary_g,
                          build_adaptive_calibration, compute_baseline, compute_threshold,
                          solve_zeta_exponent)
from .detectors import (AdaptiveState, DetectorState, RunResult, run_until_stop,
                        step_adaptive, step_finite)
from .errors import (CalibrationError, ConfigError, DataError, DomainError, EDetectError,
                     NumericError, StateError)
from .increments import IncrementSpec, delta_bounds_bounded, eval_increment, normalize_bounded
from .psi import (PsiFamily, grad_conjugate, psi_conjugate, psi_eval, psi_grad,
                  solve_conjugate)
from .simulate import DetectorConfig, MonteCarloReport, StreamSpec, estimate_arl, estimate_delay, generate_stream

__all__ = [
    "AdaptiveCalibration", "AdaptiveState", "CalibrationError", "ConfigError", "DataError",
    "DelayBoundReport", "DetectorConfig", "DetectorState", "DiscreteLaw", "DomainError",
    "EDetectError", "IncrementSpec", "MixtureCalibration", "MonteCarloReport",
    "NumericError", "PsiFamily", "RunResult", "StateError", "StreamSpec", "boundary_g",
    "build_adaptive_calibration", "compute_baseline", "compute_threshold",
    "delay_bound_lorden", "delay_bound_no_separation", "delay_bound_well_separated",
    "delta_bounds_bounded", "divergence_and_variance", "estimate_arl", "estimate_delay",
    "eval_increment", "g_alpha_upper_bound", "generate_stream", "grad_conjugate",
    "normalize_bounded", "psi_conjugate", "psi_eval", "psi_grad", "run_until_stop",
    "solve_conjugate", "solve_zeta_exponent", "step_adaptive", "step_finite",
]
