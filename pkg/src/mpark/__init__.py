"""Mixed-precision additive Runge-Kutta toolkit."""
from .harness import (MethodSpec, ProblemSpec, SweepSpec, find_largest_stable_dt, observed_order,
                      run_convergence, run_efficiency, stable_dt_report)
from .integrator import IntegrationFailed, IntegratorConfig, Trajectory, integrate, step
from .precision import (DOUBLE, EXTENDED, HALF, SINGLE, PrecisionLevel, PrecisionPair,
                        RangeFault, RoundingMode, eval_low, round_to, unit_roundoff)
from .problems import build_problem, dahlquist, van_der_pol, viscous_burgers
from .stability import psi_eps, roundoff_growth_bound, sensitivity_metric, stability_region
from .tableaus import (MpTableau, OrderReport, build_tableau, imr_tableau, novel_a_tableau,
                       order_report, sdirk_tableau)

__all__ = [
    "DOUBLE", "EXTENDED", "HALF", "SINGLE", "PrecisionLevel", "PrecisionPair", "RangeFault",
    "RoundingMode", "eval_low", "round_to", "unit_roundoff",
    "MpTableau", "OrderReport", "build_tableau", "imr_tableau", "novel_a_tableau",
    "order_report", "sdirk_tableau",
    "IntegrationFailed", "IntegratorConfig", "Trajectory", "integrate", "step",
    "build_problem", "dahlquist", "van_der_pol", "viscous_burgers",
    "psi_eps", "roundoff_growth_bound", "sensitivity_metric", "stability_region",
    "MethodSpec", "ProblemSpec", "SweepSpec", "find_largest_stable_dt", "observed_order",
    "run_convergence", "run_efficiency", "stable_dt_report",
]
