"""Robust examination timetabling: instance generation, simulated annealing
with exact per-slot room assignment, and disturbance-based robustness studies."""

from .annealer import AnnealParams, AnnealResult, HeuristicFailure, anneal, initial_heuristic
from .generator import SCENARIOS, ScenarioConfig, generate_instance
from .model import Instance, PenaltyBreakdown, Timetable, Weights, check_hard, soft_penalties
from .robustness import RobustnessReport, evaluate
from .room_assign import SlotProblem, find_feasible, find_pcbett_optimal, minimal_reduction

__version__ = "0.1.0"

__all__ = [
    "AnnealParams",
    "AnnealResult",
    "HeuristicFailure",
    "Instance",
    "PenaltyBreakdown",
    "RobustnessReport",
    "SCENARIOS",
    "ScenarioConfig",
    "SlotProblem",
    "Timetable",
    "Weights",
    "anneal",
    "check_hard",
    "evaluate",
    "find_feasible",
    "find_pcbett_optimal",
    "generate_instance",
    "initial_heuristic",
    "minimal_reduction",
    "soft_penalties",
]
