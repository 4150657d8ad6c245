"""Simulation and numerical verification for dissipative jump diffusions.

The package certifies drift and kernel assumptions numerically, simulates
the corresponding processes with a jump-adapted Euler scheme, and checks
time-uniform moment bounds, passage-time bounds, and their sharpness
against closed-form oracles.
"""

__version__ = "0.1.0"

from .errors import (CertificationError, ConfigError, DivergentIntegralError,
                     DomainError, DriftboundError, EstimationError,
                     NonNormalizableError, SimulationError, SingularityError)
from .rng import GENERATOR_NAME, RandomStream, batch_stream
from .sampling import (JumpEvent, MAGNITUDE_LARGE, MAGNITUDE_SMALL,
                       compensator_correction, sample_jump_times,
                       sample_pareto_magnitude, sample_symmetric_stable)
from .model import (CLAIMS, DissipativityParams, ExponentReport, JumpKernel,
                    ModelSpec, check_balance, critical_conditions,
                    direction_grid, exponent_report, verify_dissipativity,
                    verify_kernel_bounds)
from .lyapunov import (DriftDecomposition, LyapunovProfile, certify_L_condition,
                       drift_decomposition, eval_V, flow_H, flow_phi,
                       flow_phi_inverse, grad_V, hess_V, radial_decay_rate,
                       radial_transform_U, solve_upsilon)
from .integrator import (Path, PathBatch, PassageObservation, SimulationGrid,
                         TruncationPolicy, detect_passage_time, simulate_batch,
                         simulate_path, simulate_storage_exact)
from .estimators import (CesaroReport, DivergenceVerdict, MomentReport,
                         PassageTimeStats, SupMomentEstimate, TrendResult,
                         WindowedMomentReport, divergence_trend_test,
                         estimate_cesaro, estimate_moments,
                         estimate_passage_moments, estimate_sup_moment,
                         estimate_windowed_averages, intervals_overlap,
                         median_of_means, sup_moment_trend, trailing_windows)
from . import config, oracles, presets, reports
from .scenarios import (OUTPUT_DIR_ENV, SCENARIO_IDS, GateResult,
                        ReplayResult, ScenarioResult, replay, run_scenario,
                        scenario_defaults)
