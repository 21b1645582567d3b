"""Decision-guided receding-horizon driving stack with a built-in 2D traffic
simulator, interchangeable high-level decision providers, and a metric suite."""

from .bezier import (ControlPolygon, NoReferenceError, ReferenceState, ReferenceTrajectory,
                     bezier_point, candidate_for_lane, generate_candidates, sample_reference)
from .controller import (CostBreakdown, SolveResult, SolverConfig, SolverDivergenceError,
                         cost_action, cost_safety, cost_tracking, solve, total_cost)
from .decision import (Decision, DecisionContext, DecisionParseError, DecisionRangeError,
                       Guidance, PromptBundle, compose_weights, format_decision,
                       generate_prompt, interval_midpoint, parse_decision)
from .dynamics import Action, VehicleParams, VehicleState, rollout, step
from .metrics import (MetricsConfig, MetricsReport, aggregate_suite, inefficiency,
                      overall_cost, penalties)
from .observation import (AttentionMask, ObservationBundle, ParticipantTrack,
                          StaticObservation, TrackPoint, apply_mask, assemble,
                          build_history, predict_participant)
from .providers import (BaselineProvider, DecisionView, HttpTransport, LlmProvider,
                        MockTransport, OracleProvider, OracleRulebook, ScriptedProvider)
from .runtime import RuntimeConfig, pre_evaluate_emergency, run_episode, time_to_collision
from .scenarios import FAMILIES, ScenarioSpec, generate_scenario, narrow_road_world
from .weights import (ActionBias, ActionDiscretization, WeightPool, WeightSelection,
                      WeightSet, default_discretization, default_weight_pool)
from .world import World, check_goal, detect_collision, step_world

__version__ = "0.1.0"
