"""Parallel PPO training for jet flow control on a surrogate wake model."""

from .coupling import ActuationBundle, IoStrategy
from .env import EnvConfig, SurrogateState
from .networks import PolicyParams, init_params, load_checkpoint, save_checkpoint
from .orchestrator import ParallelPlan, run_training, virtual_episode_time
from .ppo import PpoHyper, Trajectory, Transition, ppo_update

__version__ = "0.1.0"

__all__ = [
    "ActuationBundle",
    "EnvConfig",
    "IoStrategy",
    "ParallelPlan",
    "PolicyParams",
    "PpoHyper",
    "SurrogateState",
    "Trajectory",
    "Transition",
    "__version__",
    "init_params",
    "load_checkpoint",
    "ppo_update",
    "run_training",
    "save_checkpoint",
    "virtual_episode_time",
]
