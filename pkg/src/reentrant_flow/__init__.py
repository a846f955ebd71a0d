"""Simulation of a re-entrant flow line under event-triggered and sampled-data boundary control."""
from .controller import (GuaranteeConstants, PositivityError, TriggerState, boundary_deviation,
                         control_law, decay_constant, dwell_bound, guarantee_constants,
                         lyapunov_V, next_event, robustness_window, sup_log_deviation,
                         trigger_threshold)
from .oracle import rk_oracle
from .plant import (DensityProfile, EquilibriumSpec, SpeedFunction, builtin_profile_paper,
                    builtin_speed_hyperbolic, constant_profile, constant_speed, step_profile,
                    tabulated_profile, validate_plant)
from .scheduler import (EventLog, ScheduleMode, Tolerances, interexecution_stats,
                        run_closed_loop)
from .transport import (BlowUpDiagnostic, OutOfHorizon, PicardDivergence, SliceProfile,
                        SolverError, Trajectory, TransportSolver, backtrack, density_at,
                        l2_deviation, outflux, picard_window, solve_open_loop)

__version__ = "0.1.0"
