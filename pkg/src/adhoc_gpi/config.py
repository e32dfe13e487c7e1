"""Experiment configuration: a YAML tree validated into plain dataclasses."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import yaml

from .errors import ConfigError
from .sf import SFHyperparams

METHODS = ("oracle", "gpat", "gpat_nodr", "gpat_gr", "robust", "plastic")
# methods that need the pretrained source library
LIBRARY_METHODS = ("gpat", "gpat_nodr", "gpat_gr", "plastic")


@dataclass
class TeamSpec:
    id: str
    members: list  # one teammate spec dict per non-learner slot

    @classmethod
    def parse(cls, block, where: str) -> "TeamSpec":
        if isinstance(block, TeamSpec):
            return block
        if not isinstance(block, dict) or "id" not in block or "members" not in block:
            raise ConfigError(f"{where}: a team needs 'id' and 'members'")
        members = block["members"]
        if not isinstance(members, list) or not members:
            raise ConfigError(f"{where}: 'members' must be a non-empty list")
        for m in members:
            if not isinstance(m, dict):
                raise ConfigError(f"{where}: each member must be a mapping")
        return cls(str(block["id"]), [dict(m) for m in members])


@dataclass
class DRConfig:
    episodes: int = 10
    td_episodes: int = 2500
    td_alpha: float = 0.1
    counterfactual: str = "resimulate"
    # whose rollouts feed the fit; only the entry's own source team is legal
    rollout_team: str = "source"

    def __post_init__(self):
        if self.episodes < 1 or self.td_episodes < 1:
            raise ConfigError("dr episodes must be at least 1")
        if self.counterfactual not in ("resimulate", "frozen_next_state"):
            raise ConfigError(f"unknown dr counterfactual mode {self.counterfactual!r}")


@dataclass
class EvalConfig:
    episodes: int = 1000
    replicates: int = 10
    resamples: int = 1000
    level: float = 0.95
    plastic_episodes: int = 100
    replicate: str = "retrain"
    render_episodes: int = 3

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("eval episodes must be at least 1")
        if self.replicates < 1:
            raise ConfigError("eval replicates must be at least 1")
        if self.replicate not in ("retrain", "reseed"):
            raise ConfigError("eval.replicate must be 'retrain' or 'reseed'")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("eval.level must lie in (0, 1)")


@dataclass
class ExperimentConfig:
    name: str
    env: dict
    source_teams: list
    target_team: TeamSpec
    learner: SFHyperparams
    methods: list
    dr: DRConfig = field(default_factory=DRConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    learner_slot: int = 0
    seed: int = 0
    output_dir: str = "runs/experiment"
    cache_dir: Optional[str] = None
    reuse: bool = True

    def __post_init__(self):
        if not self.source_teams and any(m in LIBRARY_METHODS + ("robust",) for m in self.methods):
            raise ConfigError("source_teams is empty but the method roster needs a library")
        ids = [t.id for t in self.source_teams]
        if len(set(ids)) != len(ids):
            raise ConfigError("source team ids must be unique")
        if self.target_team.id in ids:
            raise ConfigError(f"target team {self.target_team.id!r} is also a source team")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if not self.methods:
            raise ConfigError("the method roster is empty")
        if self.dr.rollout_team != "source":
            raise ConfigError("difference rewards may only be fitted on source-team rollouts")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["learner"] = asdict(self.learner)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(kw)
        return config_from_dict(d)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("the experiment file must hold a mapping")
    raw = dict(raw)
    try:
        env = dict(raw["env"])
        if "kind" not in env:
            raise ConfigError("env block needs a 'kind'")
        sources = [TeamSpec.parse(t, f"source_teams[{i}]") for i, t in enumerate(raw.get("source_teams") or [])]
        target = raw["target_team"]
        target = target if isinstance(target, TeamSpec) else TeamSpec.parse(target, "target_team")
        learner = raw.get("learner") or {}
        learner = learner if isinstance(learner, SFHyperparams) else SFHyperparams(**learner)
        methods = raw.get("methods") or list(METHODS)
        if isinstance(methods, str):
            methods = [m.strip() for m in methods.split(",") if m.strip()]
        dr = raw.get("dr") or {}
        ev = raw.get("eval") or {}
        return ExperimentConfig(
            name=str(raw.get("name", "experiment")),
            env=env,
            source_teams=sources,
            target_team=target,
            learner=learner,
            methods=list(methods),
            dr=dr if isinstance(dr, DRConfig) else DRConfig(**dr),
            eval=ev if isinstance(ev, EvalConfig) else EvalConfig(**ev),
            learner_slot=int(raw.get("learner_slot", 0)),
            seed=int(raw.get("seed", 0)),
            output_dir=str(raw.get("output_dir", "runs/experiment")),
            cache_dir=raw.get("cache_dir"),
            reuse=bool(raw.get("reuse", True)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from None


def load_config(path) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(raw)
