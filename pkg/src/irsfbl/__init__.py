"""Finite-blocklength error-probability bounds for IRS-aided MIMO links."""

from .channel import (CorrelationSpec, Dims, PathLoss, PhaseShifts, SystemConfig,
                      build_ula_correlation, dbm_to_watts, effective_S,
                      path_loss_gain, sample_channel, watts_to_dbm)
from .deteq import (FixedPoint, SecondOrderStats, mean_capacity, second_order_stats,
                    solve_fixed_point)
from .errors import (ConvergenceError, DomainError, IrsFblError, NotPSDError,
                     QuadratureError, SchemaError, StabilityError)
from .fbl import Analysis, CodewordGram, OaepBounds, analyze, oaep_bounds
from .montecarlo import (CltReport, CodewordSpec, MidSampleBatch, clt_validate, ks_distance,
                         resolvent_trace_oracle, sample_mid)
from .phase_opt import OptimizerOptions, OptimizerTrace, gradient_K, objective_K, optimize
from .scenario import Scenario, bundled_scenario, load_scenario, parse_scenario

__version__ = "0.1.0"
