"""Zero-shot ad hoc teamwork with successor features, difference rewards and GPI."""

__version__ = "0.1.0"

from .core import AdHocTeamSpec, EpisodeLog, discounted_return, rollout
from .envs import ENV_REGISTRY, ForagingEnv, PursuitEnv, make_env

__all__ = ["__version__", "AdHocTeamSpec", "EpisodeLog", "discounted_return", "rollout",
           "ENV_REGISTRY", "ForagingEnv", "PursuitEnv", "make_env"]
