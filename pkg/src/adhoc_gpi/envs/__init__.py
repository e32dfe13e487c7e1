from .foraging import ForagingConfig, ForagingEnv, ScriptedForager, scripted_teammate
from .pursuit import PursuitConfig, PursuitEnv, ScriptedPredator, scripted_predator

ENV_REGISTRY = {
    "foraging": (ForagingEnv, ForagingConfig),
    "pursuit": (PursuitEnv, PursuitConfig),
}


def make_env(block: dict):
    """Build an environment from a config block such as ``{"kind": "foraging", ...}``."""
    from ..errors import ConfigError

    block = dict(block)
    kind = block.pop("kind", None) or block.pop("env", None)
    if kind not in ENV_REGISTRY:
        raise ConfigError(f"unknown environment kind {kind!r}")
    env_cls, cfg_cls = ENV_REGISTRY[kind]
    try:
        cfg = cfg_cls(**block)
    except TypeError as exc:
        raise ConfigError(f"bad {kind} config: {exc}") from None
    return env_cls(cfg)


class StayPolicy:
    deterministic = True
    n_actions = 5

    def act(self, observation, rng=None) -> int:
        return 4


class UniformRandomPolicy:
    deterministic = False

    def __init__(self, n_actions: int = 5):
        self.n_actions = n_actions

    def act(self, observation, rng) -> int:
        return int(rng.integers(self.n_actions))


__all__ = [
    "ENV_REGISTRY", "make_env", "ForagingConfig", "ForagingEnv", "PursuitConfig", "PursuitEnv",
    "ScriptedForager", "ScriptedPredator", "scripted_teammate", "scripted_predator",
    "StayPolicy", "UniformRandomPolicy",
]
