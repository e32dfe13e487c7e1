"""Experiment orchestration: pretrain, fit difference rewards, evaluate, report.

Stages communicate only through files under ``output_dir``::

    library/rep{r}.pretrained.lib   source-team policies (step 1)
    library/rep{r}.linear.lib       + least-squares DR weights (step 2, linear)
    library/rep{r}.general.lib      + TD-evaluated DR values (step 2, general)
    library/pretrain_manifest.json, library/fit_dr_manifest.json, library/dr_report.json
    results.csv, matrix_<method>.csv, usage_<method>.csv, objects_<method>.csv, manifest.json

Trained policies are also cached by content under ``cache_dir``: the key
hashes everything that determines the training run (environment, teammates,
weights, hyperparameters, derived seed), so experiments sharing a source team
or target team reuse each other's policies.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .baselines import plastic_best, robust_hyperparams
from .config import LIBRARY_METHODS, ExperimentConfig, TeamSpec
from .core import EpisodeLog, discounted_return, rollout
from .diff_reward import collect_dr_dataset, fit_dr_weights, td_policy_eval_dr
from .envs import StayPolicy, make_env
from .envs.foraging import ScriptedForager
from .envs.pursuit import ScriptedPredator
from .errors import ConfigError, InvariantError, MissingArtifactError, StateError
from .gpi import GPIExecutor, UsageStats, evaluate_zero_shot, value_map
from .library import (PolicyLibrary, PolicyLibraryEntry, file_sha256, load_library, save_library,
                      serialize_library)
from .render import ascii_frames, svg_paths, value_map_csv, value_map_svg
from .sf import SFHyperparams, SFLearnerPolicy, sfql_train
from .stats import bootstrap_distribution, iqm, percentile_interval

STAGES = ("pretrained", "linear", "general")


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def derive_seed(root: int, *parts) -> int:
    """Deterministic 63-bit seed from a root seed and a task description."""
    h = int(_digest([int(root), list(parts)])[:16], 16)
    return int(np.random.SeedSequence([int(root), h]).generate_state(2, np.uint32).view(np.uint64)[0] >> 1)


# ---------------------------------------------------------------- teammates

def build_teammate(env_kind: str, spec: dict, env_block: dict, slot: int, seed_root: int,
                   cache_dir: Optional[str] = None):
    kind = spec.get("policy", "scripted")
    if env_kind == "foraging":
        if "preference" not in spec:
            raise ConfigError("foraging teammates need a 'preference' weight vector")
        if kind == "scripted":
            return ScriptedForager(spec["preference"])
        if kind == "sfql":
            return _sfql_teammate(spec, env_block, slot, seed_root, cache_dir)
    elif env_kind == "pursuit":
        if kind != "scripted":
            raise ConfigError("pursuit teammates are scripted only")
        return ScriptedPredator(spec.get("preferred_prey", []))
    raise ConfigError(f"unknown teammate policy {kind!r} for {env_kind}")


def _sfql_teammate(spec: dict, env_block: dict, slot: int, seed_root: int, cache_dir):
    """Teammate trained with SFQL on its own biased weights next to idle partners."""
    hp = SFHyperparams(**{"approximator": "linear", **spec.get("learner", {})})
    env = make_env(env_block)
    partners = [StayPolicy() for _ in range(env.n_agents - 1)]
    task = {"role": "teammate", "env": env_block, "weight": list(spec["preference"]), "hp": asdict(hp),
            "slot": slot}
    seed = derive_seed(seed_root, task)
    entry = _cached_training(task, cache_dir, lambda: sfql_train(
        env, partners, spec["preference"], hp, np.random.default_rng(seed), learner_slot=slot)[0], seed, "")
    return entry.policy


def build_team(cfg: ExperimentConfig, team: TeamSpec, cache_dir: Optional[str] = None) -> list:
    n_agents = make_env(cfg.env).n_agents
    if len(team.members) != n_agents - 1:
        raise ConfigError(f"team {team.id!r} has {len(team.members)} members; the environment needs "
                          f"{n_agents - 1}")
    slots = [i for i in range(n_agents) if i != cfg.learner_slot]
    return [build_teammate(cfg.env["kind"], m, cfg.env, s, cfg.seed, cache_dir)
            for m, s in zip(team.members, slots)]


# ---------------------------------------------------------------- training

def _cached_training(task: dict, cache_dir: Optional[str], train, seed: int, team_id: str,
                     kind: str = "library") -> PolicyLibraryEntry:
    key = _digest(task)
    path = Path(cache_dir) / f"{key[:24]}.lib" if cache_dir else None
    if path is not None and path.exists():
        return load_library(path)[0]
    policy = train()
    policy.train_info["cache_key"] = key[:24]
    entry = PolicyLibraryEntry(policy, team_id, metadata={"seed": seed, "task": task}, kind=kind)
    if path is not None:
        save_library(PolicyLibrary([entry], gamma=task.get("hp", {}).get("gamma", 0.95)), path)
        # reload so in-memory and cached copies are identical
        return load_library(path)[0]
    return entry


def _training_task(cfg: ExperimentConfig, role: str, teams: Sequence[TeamSpec], replicate: int,
                   hp: SFHyperparams) -> dict:
    return {
        "role": role,
        "env": cfg.env,
        "teams": [{"id": t.id, "members": t.members} for t in teams],
        "weight": list(make_env(cfg.env).team_weight),
        "hp": asdict(hp),
        "learner_slot": cfg.learner_slot,
        "replicate": replicate,
        "seed_root": cfg.seed,
    }


def _run_training(args) -> bytes:
    """Worker entry: train (or fetch) one policy and return it serialised."""
    cfg_dict, role, team_ids, replicate, hp_dict, kind, team_id = args
    from .config import config_from_dict

    cfg = config_from_dict(cfg_dict)
    teams = [t for t in cfg.source_teams + [cfg.target_team] if t.id in team_ids]
    teams.sort(key=lambda t: team_ids.index(t.id))
    hp = SFHyperparams(**hp_dict)
    task = _training_task(cfg, role, teams, replicate, hp)
    seed = derive_seed(cfg.seed, task)
    cache_dir = _cache_dir(cfg)
    env = make_env(cfg.env)
    built = [build_team(cfg, t, cache_dir) for t in teams]
    hp = replace(hp, seed=seed)

    def train():
        rng = np.random.default_rng(seed)
        if len(built) == 1:
            return sfql_train(env, built[0], env.team_weight, hp, rng, cfg.learner_slot)[0]
        return sfql_train(env, None, env.team_weight, hp, rng, cfg.learner_slot, teams=built)[0]

    entry = _cached_training(task, cache_dir, train, seed, team_id, kind)
    return serialize_library(PolicyLibrary([entry], gamma=hp.gamma))


def _cache_dir(cfg: ExperimentConfig) -> str:
    d = cfg.cache_dir or os.path.join(cfg.output_dir, "cache")
    os.makedirs(d, exist_ok=True)
    return d


def _map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def train_replicates(cfg: ExperimentConfig) -> list[int]:
    return list(range(cfg.eval.replicates)) if cfg.eval.replicate == "retrain" else [0]


def _train_rep(cfg: ExperimentConfig, r: int) -> int:
    return r if cfg.eval.replicate == "retrain" else 0


def _entry_from_bytes(data: bytes) -> PolicyLibraryEntry:
    from .library import deserialize_library

    return deserialize_library(data)[0]


# ---------------------------------------------------------------- stage 1

def library_path(cfg: ExperimentConfig, replicate: int, stage: str) -> Path:
    return Path(cfg.output_dir) / "library" / f"rep{replicate}.{stage}.lib"


def cmd_pretrain(cfg: ExperimentConfig, jobs: int = 1, log=print) -> list[Path]:
    """Train one policy per source team and replicate; write the library files."""
    if not cfg.source_teams:
        raise ConfigError("source_teams is empty; nothing to pretrain")
    reps = train_replicates(cfg)
    paths = [library_path(cfg, r, "pretrained") for r in reps]
    if cfg.reuse and all(p.exists() for p in paths) and _manifest_hash(cfg, "pretrain") == cfg.digest():
        log(f"pretrain: cache hit, {len(paths)} library file(s) already present")
        return paths
    cfg_dict = cfg.to_dict()
    tasks = [(cfg_dict, "library", [t.id], r, asdict(cfg.learner), "library", t.id)
             for r in reps for t in cfg.source_teams]
    blobs = _map(_run_training, tasks, jobs)
    manifest = {"stage": "pretrain", "config_hash": cfg.digest(), "replicates": {}}
    k = 0
    for r, path in zip(reps, paths):
        lib = PolicyLibrary(gamma=cfg.learner.gamma)
        for t in cfg.source_teams:
            lib.append(_entry_from_bytes(blobs[k]))
            k += 1
        checksum = save_library(lib, path)
        manifest["replicates"][str(r)] = {
            "library": path.name, "sha256": checksum,
            "entries": [{"source_team_id": e.source_team_id, "seed": e.metadata["seed"],
                         "cache_key": e.policy.train_info.get("cache_key"),
                         "steps": e.policy.train_info.get("steps")} for e in lib]}
        log(f"pretrain: wrote {path} ({len(lib)} entries)")
    _write_json(Path(cfg.output_dir) / "library" / "pretrain_manifest.json", manifest)
    return paths


def _manifest_hash(cfg: ExperimentConfig, stage: str) -> Optional[str]:
    path = Path(cfg.output_dir) / "library" / f"{stage}_manifest.json"
    try:
        return json.loads(path.read_text()).get("config_hash")
    except (OSError, ValueError):
        return None


# ---------------------------------------------------------------- stage 2

def _dr_branches(cfg: ExperimentConfig) -> list[str]:
    out = []
    if "gpat" in cfg.methods:
        out.append("linear")
    if "gpat_gr" in cfg.methods:
        out.append("general")
    return out


def cmd_fit_dr(cfg: ExperimentConfig, force: bool = False, log=print, skip_existing: bool = False) -> list[Path]:
    """Populate DR weights (linear) and/or DR value tables (general) per entry.

    Rollouts use each entry's own source team only; the target team is never
    constructed here.
    """
    branches = _dr_branches(cfg)
    if skip_existing and _manifest_hash(cfg, "fit_dr") != cfg.digest():
        force = True  # files from another config are stale
    written = []
    report = {"stage": "fit_dr", "config_hash": cfg.digest(), "counterfactual": cfg.dr.counterfactual,
              "replicates": {}}
    teams = {t.id: t for t in cfg.source_teams}
    cache_dir = _cache_dir(cfg)
    for r in train_replicates(cfg):
        src = library_path(cfg, r, "pretrained")
        if not src.exists():
            raise MissingArtifactError(f"pretrained library missing: {src} (run 'pretrain' first)")
        rep_report = report["replicates"].setdefault(str(r), {})
        for branch in branches:
            dst = library_path(cfg, r, branch)
            if dst.exists() and not force:
                if skip_existing:
                    written.append(dst)
                    continue
                raise StateError(f"{dst} already holds fitted difference rewards; pass --force to refit")
            lib = load_library(src)
            env = make_env(cfg.env)
            fits = []
            for i, e in enumerate(lib):
                if e.source_team_id not in teams:
                    raise InvariantError(f"entry {i} names unknown source team {e.source_team_id!r}")
                if e.source_team_id == cfg.target_team.id:
                    raise InvariantError("difference rewards requested on target-team rollouts")
                team = build_team(cfg, teams[e.source_team_id], cache_dir)
                seed = derive_seed(cfg.seed, "dr", branch, r, i, e.policy.train_info.get("cache_key"))
                rng = np.random.default_rng(seed)
                if branch == "linear":
                    samples = collect_dr_dataset(env, e, team, cfg.dr.episodes, rng, cfg.learner_slot,
                                                 cfg.dr.counterfactual)
                    fit = fit_dr_weights(samples)
                    e.dr_weight = fit.w_dr
                    info = {"branch": "linear", "episodes": cfg.dr.episodes, **fit.report()}
                else:
                    e.dr_q = td_policy_eval_dr(env, e, team, cfg.dr.td_episodes, cfg.dr.td_alpha,
                                               cfg.learner.gamma, rng, cfg.learner_slot,
                                               cfg.dr.counterfactual)
                    info = {"branch": "general", "episodes": cfg.dr.td_episodes, "alpha": cfg.dr.td_alpha}
                info.update({"seed": seed, "rollout_team": e.source_team_id})
                e.metadata = {**e.metadata, "dr_fit": info}
                fits.append(info)
            save_library(lib, dst)
            rep_report[branch] = fits
            written.append(dst)
            log(f"fit-dr: wrote {dst}")
    if report["replicates"]:
        _write_json(Path(cfg.output_dir) / "library" / "dr_report.json", report)
        _write_json(Path(cfg.output_dir) / "library" / "fit_dr_manifest.json",
                    {k: v for k, v in report.items() if k != "replicates"} |
                    {"libraries": [p.name for p in written]})
    return written


# ---------------------------------------------------------------- stage 3

@dataclass
class MethodResult:
    method: str
    returns: np.ndarray  # (replicates, episodes)
    usage: Optional[list] = None  # per replicate UsageStats
    learner_objects: Optional[np.ndarray] = None
    teammate_objects: Optional[np.ndarray] = None
    plastic_choice: Optional[list] = None


@dataclass
class ResultRow:
    method: str
    iqm: float
    ci_low: float
    ci_high: float
    pct_optimality: Optional[float] = None
    usage: Optional[list] = None
    learner_objects: Optional[list] = None
    teammate_objects: Optional[list] = None


def episode_seed(cfg: ExperimentConfig, replicate: int, episode: int) -> int:
    return derive_seed(cfg.seed, "eval", replicate, episode)


def objects_collected_stats(logs: Sequence[EpisodeLog], agent: Optional[int] = None) -> np.ndarray:
    """Per-type mean over episodes of objects collected (by one agent, or by the team)."""
    for log in logs:
        if log.env_kind and log.env_kind != "foraging":
            raise TypeError("objects-collected statistics apply to foraging logs only")
    totals = []
    for log in logs:
        if not log.transitions:
            continue
        if agent is None:
            totals.append(log.features.sum(axis=0))
        else:
            totals.append(sum(t.agent_features[agent] for t in log.transitions))
    if not totals:
        return np.zeros(3)
    return np.mean(totals, axis=0)


def _learner_for(cfg, method: str, r: int, baselines: dict):
    tr = _train_rep(cfg, r)
    if method == "oracle":
        return baselines[("oracle", tr)].policy, None
    if method == "robust":
        return baselines[("robust", tr)].policy, None
    if method == "gpat":
        return GPIExecutor(load_library(library_path(cfg, tr, "linear")), "with_dr"), None
    if method == "gpat_gr":
        return GPIExecutor(load_library(library_path(cfg, tr, "general")), "with_dr"), None
    if method == "gpat_nodr":
        return GPIExecutor(load_library(library_path(cfg, tr, "pretrained")), "without_dr"), None
    if method == "plastic":
        lib = load_library(library_path(cfg, tr, "pretrained"))
        target = build_team(cfg, cfg.target_team, _cache_dir(cfg))
        env = make_env(cfg.env)
        idx, scores = plastic_best(lib, env, target, cfg.eval.plastic_episodes, gamma=cfg.learner.gamma,
                                   learner_slot=cfg.learner_slot,
                                   seed=derive_seed(cfg.seed, "plastic", r))
        return lib[idx].policy, {"index": idx, "scores": scores}
    raise ConfigError(f"unknown method {method!r}")


def _evaluate_method(cfg: ExperimentConfig, method: str, r: int, baselines: dict):
    env = make_env(cfg.env)
    target = build_team(cfg, cfg.target_team, _cache_dir(cfg))
    learner, extra = _learner_for(cfg, method, r, baselines)
    E = cfg.eval.episodes
    rets = np.empty(E)
    logs = []
    usage = None
    for k in range(E):
        rng = np.random.default_rng(episode_seed(cfg, r, k))
        if isinstance(learner, GPIExecutor):
            ep_logs, u = evaluate_zero_shot(learner, env, target, 1, rng, cfg.learner_slot,
                                            cfg.target_team.id)
            log = ep_logs[0]
            usage = u if usage is None else usage.merge(u)
        else:
            env.reset(rng)
            log = rollout(env, learner, target, rng, learner_slot=cfg.learner_slot, record_obs=False)
        rets[k] = discounted_return(log, cfg.learner.gamma)
        logs.append(log)
    objs = None
    if cfg.env["kind"] == "foraging":
        n = env.n_agents
        objs = [objects_collected_stats(logs, i) for i in range(n)]
    return rets, usage, objs, extra


def train_baselines(cfg: ExperimentConfig, jobs: int) -> dict:
    tasks = []
    keys = []
    for r in train_replicates(cfg):
        if "oracle" in cfg.methods:
            tasks.append((cfg.to_dict(), "oracle", [cfg.target_team.id], r, asdict(cfg.learner), "oracle",
                          cfg.target_team.id))
            keys.append(("oracle", r))
        if "robust" in cfg.methods:
            hp = robust_hyperparams(cfg.learner, len(cfg.source_teams))
            tasks.append((cfg.to_dict(), "robust", [t.id for t in cfg.source_teams], r, asdict(hp), "robust",
                          "+".join(t.id for t in cfg.source_teams)))
            keys.append(("robust", r))
    blobs = _map(_run_training, tasks, jobs)
    return {k: _entry_from_bytes(b) for k, b in zip(keys, blobs)}


def _eval_task(args):
    cfg_dict, method, r, baseline_blobs = args
    from .config import config_from_dict

    cfg = config_from_dict(cfg_dict)
    baselines = {k: _entry_from_bytes(v) for k, v in baseline_blobs.items()}
    return _evaluate_method(cfg, method, r, baselines)


def run_evaluation(cfg: ExperimentConfig, jobs: int = 1, methods: Optional[Sequence[str]] = None,
                   log=print) -> dict:
    methods = list(methods or cfg.methods)
    for m in methods:
        if m not in cfg.methods:
            raise ConfigError(f"method {m!r} is not in the config roster")
    for m in methods:
        if m in LIBRARY_METHODS:
            stage = {"gpat": "linear", "gpat_gr": "general"}.get(m, "pretrained")
            for r in train_replicates(cfg):
                p = library_path(cfg, r, stage)
                if not p.exists():
                    todo = "pretrain" if not library_path(cfg, r, "pretrained").exists() else "fit-dr"
                    if todo == "pretrain" and stage != "pretrained":
                        todo = "pretrain and fit-dr"
                    raise MissingArtifactError(f"{m} needs {p}; run {todo} first")
    baselines = train_baselines(cfg, jobs)
    blobs = {k: serialize_library(PolicyLibrary([e], gamma=cfg.learner.gamma)) for k, e in baselines.items()}
    tasks = [(cfg.to_dict(), m, r, blobs) for m in methods for r in range(cfg.eval.replicates)]
    outs = _map(_eval_task, tasks, jobs)
    results = {}
    k = 0
    for m in methods:
        rets, usage, objs, extra = [], [], [], []
        for r in range(cfg.eval.replicates):
            a, u, o, x = outs[k]
            k += 1
            rets.append(a)
            usage.append(u)
            objs.append(o)
            extra.append(x)
        res = MethodResult(m, np.stack(rets))
        if usage[0] is not None:
            res.usage = usage
        if objs[0] is not None:
            res.learner_objects = np.mean([o[cfg.learner_slot] for o in objs], axis=0)
            res.teammate_objects = np.mean(
                [sum(o[i] for i in range(len(o)) if i != cfg.learner_slot) for o in objs], axis=0)
        if m == "plastic":
            res.plastic_choice = extra
        results[m] = res
        log(f"eval: {m} done")
    return results


def summarize(cfg: ExperimentConfig, results: dict) -> list[ResultRow]:
    rows = []
    for m, res in results.items():
        point = iqm(res.returns.ravel())
        if res.returns.shape[0] >= 2:
            dist = bootstrap_distribution(res.returns, cfg.eval.resamples,
                                          np.random.default_rng(derive_seed(cfg.seed, "bootstrap", m)))
            lo, hi = percentile_interval(dist, cfg.eval.level)
        else:
            lo = hi = point
        usage = None
        if res.usage is not None:
            total = res.usage[0]
            for u in res.usage[1:]:
                total = total.merge(u)
            usage = total.fractions.tolist()
        rows.append(ResultRow(m, point, lo, hi, None, usage,
                              None if res.learner_objects is None else res.learner_objects.tolist(),
                              None if res.teammate_objects is None else res.teammate_objects.tolist()))
    oracle = next((r for r in rows if r.method == "oracle"), None)
    if oracle is not None and oracle.iqm != 0:
        for row in rows:
            row.pct_optimality = 100.0 * row.iqm / oracle.iqm
    return rows


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def _fmt_vec(v) -> str:
    return "" if v is None else "/".join(f"{x:.4f}" for x in v)


def results_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "iqm", "ci_low", "ci_high", "pct_optimality", "usage", "learner_objects",
                "teammate_objects"])
    for r in rows:
        w.writerow([r.method, _fmt(r.iqm), _fmt(r.ci_low), _fmt(r.ci_high), _fmt(r.pct_optimality),
                    _fmt_vec(r.usage), _fmt_vec(r.learner_objects), _fmt_vec(r.teammate_objects)])
    return buf.getvalue()


def read_results(path) -> list[ResultRow]:
    if not os.path.exists(path):
        raise MissingArtifactError(f"results file not found: {path}")
    rows = []
    with open(path) as fh:
        for rec in csv.DictReader(fh):
            def num(s):
                return float(s) if s else None

            def vec(s):
                return [float(x) for x in s.split("/")] if s else None

            rows.append(ResultRow(rec["method"], float(rec["iqm"]), float(rec["ci_low"]), float(rec["ci_high"]),
                                  num(rec["pct_optimality"]), vec(rec["usage"]), vec(rec["learner_objects"]),
                                  vec(rec["teammate_objects"])))
    return rows


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def write_outputs(cfg: ExperimentConfig, results: dict, rows: Sequence[ResultRow]) -> Path:
    out = Path(cfg.output_dir)
    _write_text(out / "results.csv", results_csv(rows))
    for m, res in results.items():
        lines = [",".join(f"{x:.6f}" for x in row) for row in res.returns]
        _write_text(out / f"matrix_{m}.csv", "\n".join(lines) + "\n")
        if res.usage is not None:
            buf = ["replicate,entry,count,fraction,agreement"]
            for r, u in enumerate(res.usage):
                for i, (c, f) in enumerate(zip(u.counts, u.fractions)):
                    agree = u.agreement_fractions[i] if u.agreement is not None else 0.0
                    buf.append(f"{r},{i},{int(c)},{f:.6f},{agree:.6f}")
            _write_text(out / f"usage_{m}.csv", "\n".join(buf) + "\n")
        if res.learner_objects is not None:
            _write_text(out / f"objects_{m}.csv",
                        "agent," + ",".join(f"type{k}" for k in range(len(res.learner_objects))) + "\n"
                        + "learner," + ",".join(f"{x:.4f}" for x in res.learner_objects) + "\n"
                        + "teammates," + ",".join(f"{x:.4f}" for x in res.teammate_objects) + "\n")
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seeds": {"root": cfg.seed,
                  "episode_seed_rule": "derive_seed(root, 'eval', replicate, episode)",
                  "bootstrap": {m: derive_seed(cfg.seed, "bootstrap", m) for m in results}},
        "libraries": {p.name: file_sha256(p) for p in sorted((out / "library").glob("*.lib"))}
        if (out / "library").exists() else {},
        "plastic_choice": {str(r): c for r, c in enumerate(results["plastic"].plastic_choice)}
        if "plastic" in results else None,
        "decisions": environment_decisions(cfg.env["kind"]),
        "dr_counterfactual": cfg.dr.counterfactual,
        "replicate_mode": cfg.eval.replicate,
    }
    _write_json(out / "manifest.json", manifest)
    return out


def environment_decisions(kind: str) -> dict:
    common = {"actions": "up, down, left, right, stay", "moves_off_grid": "stay",
              "resolution": "simultaneous moves, then one joint transition",
              "return": "discounted team return"}
    if kind == "foraging":
        return {**common, "agents_share_cells": True, "diagonal_moves": False,
                "simultaneous_pickup": "object counts once; credit split between the agents on it"}
    return {**common, "hard_capture": "two predators on or orthogonally adjacent to the prey after moving",
            "prey_move": "after predators, uniform over 5 moves, blocked moves stay in region"}


def render_episodes(cfg: ExperimentConfig, method: str, fmt: str, baselines: Optional[dict] = None) -> list[Path]:
    """Re-run the first few evaluation episodes of replicate 0 with snapshots and render them."""
    out = Path(cfg.output_dir) / "renders"
    env = make_env(cfg.env)
    target = build_team(cfg, cfg.target_team, _cache_dir(cfg))
    learner, _ = _learner_for(cfg, method, 0, baselines or {})
    written = []
    for k in range(min(cfg.eval.render_episodes, cfg.eval.episodes)):
        rng = np.random.default_rng(episode_seed(cfg, 0, k))
        env.reset(rng)
        log = rollout(env, learner, target, rng, learner_slot=cfg.learner_slot, record_obs=False,
                      record_snapshots=True)
        title = f"{method} episode {k} return {discounted_return(log, cfg.learner.gamma):.3f}"
        if fmt == "svg":
            path = out / f"{method}_ep{k}.svg"
            _write_text(path, svg_paths(log.snapshots, title))
        else:
            path = out / f"{method}_ep{k}.txt"
            _write_text(path, ascii_frames(log.snapshots))
        written.append(path)
        if k == 0:
            rng = np.random.default_rng(episode_seed(cfg, 0, 0))
            base = env.reset(rng)
            vmap = value_map(learner, env, base, cfg.learner_slot)
            _write_text(out / f"value_map_{method}.csv", value_map_csv(vmap))
            _write_text(out / f"value_map_{method}.svg", value_map_svg(vmap, f"{method} value map"))
    return written


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, methods: Optional[Sequence[str]] = None,
                   render: Optional[str] = None, log=print) -> list[ResultRow]:
    """Steps 1-3 plus baselines; writes every artifact and returns the result rows."""
    methods = list(methods or cfg.methods)
    if any(m in LIBRARY_METHODS for m in methods):
        cmd_pretrain(cfg, jobs, log)
        if _dr_branches(cfg):
            cmd_fit_dr(cfg, log=log, skip_existing=True)
    results = run_evaluation(cfg, jobs, methods, log)
    rows = summarize(cfg, results)
    write_outputs(cfg, results, rows)
    if render:
        baselines = train_baselines(cfg, 1) if any(m in ("oracle", "robust") for m in methods) else {}
        for m in methods:
            render_episodes(cfg, m, render, baselines)
    return rows


def format_table(rows: Sequence[ResultRow]) -> str:
    lines = [f"{'method':<10} {'IQM':>8} {'95% CI':>21} {'% opt':>7}  usage"]
    for r in rows:
        pct = f"{r.pct_optimality:6.1f}%" if r.pct_optimality is not None else "      -"
        use = " / ".join(f"{100 * u:.1f}%" for u in r.usage) if r.usage else ""
        lines.append(f"{r.method:<10} {r.iqm:8.3f} [{r.ci_low:8.3f}, {r.ci_high:8.3f}] {pct}  {use}")
    return "\n".join(lines)
