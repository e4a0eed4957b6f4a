"""Degenerate delay SDE laboratory."""

__version__ = "0.1.0"

from .matops import GramianError, GramianResult, KalmanResult, gramian, kalman_rank, mat_exp  # noqa: E402
from .model import (LyapunovSuite, ModelSpec, Segment, load_model, make_example_4_1,  # noqa: E402
                    make_example_4_2, make_ou)
from .simulate import (BlowUpError, BrownianIncrements, PathBundle, SimGrid, generate_increments,  # noqa: E402
                       simulate_many, simulate_path, simulate_shifted)
from .coupling import (CouplingPlan, GirsanovRecord, PlanError, build_plan, check_coupling_identity,  # noqa: E402
                       girsanov_weight, theta_segment)
from .estimate import (Estimate, GradientReport, TerminalFunctional, bismut_weight_path,  # noqa: E402
                       estimate_functional, estimate_gradient_bismut, estimate_gradient_fd,
                       girsanov_identity_check, make_functional)

__all__ = [
    "GramianError", "GramianResult", "KalmanResult", "gramian", "kalman_rank", "mat_exp",
    "LyapunovSuite", "ModelSpec", "Segment", "load_model", "make_example_4_1", "make_example_4_2", "make_ou",
    "BlowUpError", "BrownianIncrements", "PathBundle", "SimGrid", "generate_increments", "simulate_many",
    "simulate_path", "simulate_shifted",
    "CouplingPlan", "GirsanovRecord", "PlanError", "build_plan", "check_coupling_identity", "girsanov_weight",
    "theta_segment",
    "Estimate", "GradientReport", "TerminalFunctional", "bismut_weight_path", "estimate_functional",
    "estimate_gradient_bismut", "estimate_gradient_fd", "girsanov_identity_check", "make_functional",
]
