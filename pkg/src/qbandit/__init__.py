"""Queueing-bandit simulator: coupled regret estimation and bound overlays."""
from .core import ProblemInstance, validate_instance
from .policies import PolicyKind
from .sim import CouplingMode, SimConfig, estimate_regret, run_episode

__all__ = ["ProblemInstance", "validate_instance", "PolicyKind", "CouplingMode", "SimConfig",
           "estimate_regret", "run_episode"]
__version__ = "0.1.0"
