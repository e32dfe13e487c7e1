import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from adhoc_gpi import experiment as ex
from adhoc_gpi.cli import main
from adhoc_gpi.config import config_from_dict, load_config
from adhoc_gpi.core import rollout
from adhoc_gpi.envs import ForagingEnv, PursuitEnv, ScriptedForager, StayPolicy
from adhoc_gpi.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
SMOKE = ROOT / "configs" / "smoke.yaml"


def _raw():
    return yaml.safe_load(SMOKE.read_text())


def _write(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    raw = dict(raw)
    raw["output_dir"] = str(tmp_path / "out")
    path.write_text(yaml.safe_dump(raw))
    return path


@pytest.mark.parametrize("path", sorted((ROOT / "configs").glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.target_team.id not in [t.id for t in cfg.source_teams]


@pytest.mark.parametrize("mutate", [
    lambda r: r.update(methods=["gpat", "magic"]),
    lambda r: r.update(target_team=r["source_teams"][0]),
    lambda r: r.pop("env"),
    lambda r: r["env"].pop("kind"),
    lambda r: r.update(learner={"gamma": 1.5}),
    lambda r: r.update(dr={"rollout_team": "target"}),
    lambda r: r.update(eval={"replicate": "sometimes"}),
    lambda r: r.update(source_teams=[r["source_teams"][0], r["source_teams"][0]]),
    lambda r: r["target_team"].pop("members"),
])
def test_invalid_configs_are_rejected(mutate):
    raw = _raw()
    mutate(raw)
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_unreadable_config_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("env: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_cli_exit_codes(tmp_path, capsys):
    raw = _raw()
    raw["methods"] = ["gpat", "magic"]
    assert main(["pretrain", str(_write(tmp_path, raw, "bad.yaml"))]) == 2
    good = _write(tmp_path, _raw())
    # evaluation before pretraining names the missing library
    assert main(["eval", str(good)]) == 3
    assert "pretrain" in capsys.readouterr().err
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 3
    assert main(["pretrain", str(good), "--jobs", "0"]) == 2


def test_fit_dr_refuses_to_overwrite_without_force(tmp_path):
    cfg = _write(tmp_path, _raw())
    assert main(["pretrain", str(cfg)]) == 0
    assert main(["fit-dr", str(cfg)]) == 0
    assert main(["fit-dr", str(cfg)]) != 0
    assert main(["fit-dr", str(cfg), "--force"]) == 0


def test_environment_overrides(tmp_path, monkeypatch):
    cfg = _write(tmp_path, _raw())
    monkeypatch.setenv("GPAT_JOBS", "many")
    assert main(["pretrain", str(cfg)]) == 2
    monkeypatch.setenv("GPAT_JOBS", "1")
    monkeypatch.setenv("GPAT_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    assert main(["pretrain", str(cfg)]) == 0
    assert (tmp_path / "elsewhere" / "library" / "rep0.pretrained.lib").exists()
    assert not (tmp_path / "out").exists()


def test_oracle_only_roster_gives_one_full_row(tmp_path):
    raw = _raw()
    raw["methods"] = ["oracle"]
    raw["output_dir"] = str(tmp_path / "out")
    rows = ex.run_experiment(config_from_dict(raw), log=lambda m: None)
    assert [r.method for r in rows] == ["oracle"]
    assert rows[0].pct_optimality == 100.0
    assert rows[0].ci_low <= rows[0].iqm <= rows[0].ci_high


def test_end_to_end_artifacts_and_provenance(tmp_path, capsys):
    cfg_path = _write(tmp_path, _raw())
    assert main(["run", str(cfg_path), "--render", "ascii"]) == 0
    out = tmp_path / "out"
    for name in ("results.csv", "manifest.json", "matrix_gpat.csv", "usage_gpat.csv", "objects_oracle.csv",
                 "renders/gpat_ep0.txt", "renders/value_map_gpat.csv", "library/dr_report.json"):
        assert (out / name).exists(), name
    cfg = load_config(cfg_path).with_overrides(output_dir=str(out))
    rows = ex.read_results(out / "results.csv")
    assert {r.method for r in rows} == set(cfg.methods)
    for r in rows:
        assert r.ci_low <= r.iqm <= r.ci_high
    matrix = np.loadtxt(out / "matrix_gpat.csv", delimiter=",", ndmin=2)
    assert matrix.shape == (cfg.eval.replicates, cfg.eval.episodes)

    # difference rewards come from source-team rollouts only
    report = (out / "library" / "dr_report.json").read_text()
    assert cfg.target_team.id not in report
    fits = json.loads(report)["replicates"]["0"]["linear"]
    assert [f["rollout_team"] for f in fits] == [t.id for t in cfg.source_teams]

    # robust consumes exactly the steps of the whole library
    pre = json.loads((out / "library" / "pretrain_manifest.json").read_text())
    lib_steps = sum(e["steps"] for e in pre["replicates"]["0"]["entries"])
    robust = ex.train_baselines(cfg, 1)[("robust", 0)]
    assert robust.policy.train_info["steps"] == lib_steps

    assert main(["report", str(out)]) == 0
    assert "gpat" in capsys.readouterr().out


def test_results_are_byte_identical_across_runs(tmp_path):
    texts = []
    for k in range(2):
        raw = _raw()
        raw["output_dir"] = str(tmp_path / f"run{k}")
        path = tmp_path / f"cfg{k}.yaml"
        path.write_text(yaml.safe_dump(raw))
        assert main(["run", str(path), "--jobs", "1"]) == 0
        texts.append((tmp_path / f"run{k}" / "results.csv").read_bytes())
    assert texts[0] == texts[1]


def test_objects_collected_stats():
    env = ForagingEnv(grid_size=6, objects_per_type=2, horizon=30)
    rng = np.random.default_rng(0)
    logs = []
    for _ in range(5):
        env.reset(rng)
        logs.append(rollout(env, StayPolicy(), [ScriptedForager([1, -0.5, -0.5])], rng))
    mate = ex.objects_collected_stats(logs, 1)
    assert mate.tolist() == [2.0, 0.0, 0.0]
    team = ex.objects_collected_stats(logs)
    assert np.allclose(ex.objects_collected_stats(logs, 0) + mate, team)
    assert ex.objects_collected_stats([]).tolist() == [0, 0, 0]
    penv = PursuitEnv(grid_size=9)
    penv.reset(rng)
    plog = rollout(penv, StayPolicy(), [StayPolicy(), StayPolicy()], rng)
    with pytest.raises(TypeError):
        ex.objects_collected_stats([plog])
