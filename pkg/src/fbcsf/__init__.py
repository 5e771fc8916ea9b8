"""Free-boundary curve shortening inside a convex barrier.

Support-function solver for an arc meeting the barrier orthogonally, with
scale/translation normalization of the shrinking arc and convergence-rate
measurement against the unit semicircle.
"""

__version__ = "0.1.0"

from .geometry import (ConvexDomain, Frame, SupportArc, halfplane,
                       standard_disk, standard_ellipse, reconstruct_curve,
                       curvature_of_arc, enclosed_area, first_moment)
from .solver import (SolverOptions, FlowState, Trajectory, make_initial,
                     run, estimate_extinction, endpoint_rates, bc_residuals)
from .modulation import (ModulationSeries, build_series, solve_lambda,
                         solve_p, reference_scale, rescale_state)
from .analysis import (build_report, identity_checks, unstable_modes,
                       unstable_node_residuals, fit_rate, envelope_fit,
                       hausdorff_to_semicircle)
from .linearized import LinearState, linear_evolve, mode_decay_fit, spectrum_table
from .oracle import (Polyline, oracle_step, run_oracle, compare_solvers,
                     semicircle_line, polyline_from_arc)
from .config import RunConfig, parse_config, load_config, config_hash

__all__ = [
    "__version__",
    "ConvexDomain", "Frame", "SupportArc", "halfplane", "standard_disk",
    "standard_ellipse", "reconstruct_curve", "curvature_of_arc",
    "enclosed_area", "first_moment",
    "SolverOptions", "FlowState", "Trajectory", "make_initial", "run",
    "estimate_extinction", "endpoint_rates", "bc_residuals",
    "ModulationSeries", "build_series", "solve_lambda", "solve_p",
    "reference_scale", "rescale_state",
    "build_report", "identity_checks", "unstable_modes",
    "unstable_node_residuals", "fit_rate", "envelope_fit",
    "hausdorff_to_semicircle",
    "LinearState", "linear_evolve", "mode_decay_fit", "spectrum_table",
    "Polyline", "oracle_step", "run_oracle", "compare_solvers",
    "semicircle_line", "polyline_from_arc",
    "RunConfig", "parse_config", "load_config", "config_hash",
]
