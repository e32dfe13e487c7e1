"""Command-line front end.

    adhoc-gpi pretrain CONFIG
    adhoc-gpi fit-dr CONFIG [--force]
    adhoc-gpi eval CONFIG [--methods gpat,gpat_nodr] [--render svg|ascii]
    adhoc-gpi report CONFIG | RESULTS_DIR

Exit status: 0 success, 2 configuration error, 3 missing artifact,
4 internal invariant violation.  ``GPAT_OUTPUT_DIR`` and ``GPAT_JOBS``
override the output directory and the worker count.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import AdHocError, ConfigError


def _jobs(arg: Optional[int]) -> int:
    if arg is not None:
        jobs = arg
    else:
        raw = os.environ.get("GPAT_JOBS", "1")
        try:
            jobs = int(raw)
        except ValueError:
            raise ConfigError(f"GPAT_JOBS must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return jobs


def _load(path: str, output_dir: Optional[str]):
    from .config import load_config

    cfg = load_config(path)
    out = output_dir or os.environ.get("GPAT_OUTPUT_DIR")
    if out:
        cfg = cfg.with_overrides(output_dir=out)
    return cfg


def _methods(raw: Optional[str]) -> Optional[list]:
    if raw is None:
        return None
    return [m.strip() for m in raw.split(",") if m.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adhoc-gpi", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="experiment YAML file")
        sp.add_argument("--output-dir", default=None, help="override the config's output_dir")
        sp.add_argument("--jobs", type=int, default=None, help="parallel workers (default 1)")

    sp = sub.add_parser("pretrain", help="train one learner policy per source team")
    common(sp)
    sp = sub.add_parser("fit-dr", help="fit difference-reward values for every library entry")
    common(sp)
    sp.add_argument("--force", action="store_true", help="refit even if DR values exist")
    sp = sub.add_parser("eval", help="evaluate methods on the target team")
    common(sp)
    sp.add_argument("--methods", default=None, help="comma-separated subset of the roster")
    sp.add_argument("--render", choices=("svg", "ascii"), default=None)
    sp = sub.add_parser("run", help="pretrain, fit-dr and eval in one go")
    common(sp)
    sp.add_argument("--methods", default=None)
    sp.add_argument("--render", choices=("svg", "ascii"), default=None)
    sp = sub.add_parser("report", help="print the results table of a finished run")
    sp.add_argument("target", help="experiment YAML file or results directory")
    sp.add_argument("--output-dir", default=None)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except AdHocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except AssertionError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 4


def _dispatch(args) -> int:
    from . import experiment as ex

    def log(msg):
        print(msg, file=sys.stderr)

    if args.command == "report":
        target = Path(args.target)
        if target.is_dir():
            out = target
        else:
            out = Path(_load(args.target, args.output_dir).output_dir)
        print(ex.format_table(ex.read_results(out / "results.csv")))
        return 0

    cfg = _load(args.config, args.output_dir)
    jobs = _jobs(args.jobs)
    if args.command == "pretrain":
        ex.cmd_pretrain(cfg, jobs, log)
    elif args.command == "fit-dr":
        written = ex.cmd_fit_dr(cfg, force=args.force, log=log)
        if not written:
            raise ConfigError("no method in the roster needs difference rewards (add gpat or gpat_gr)")
    elif args.command == "eval":
        methods = _methods(args.methods)
        results = ex.run_evaluation(cfg, jobs, methods, log)
        rows = ex.summarize(cfg, results)
        ex.write_outputs(cfg, results, rows)
        if args.render:
            baselines = ex.train_baselines(cfg, 1) if any(m in ("oracle", "robust") for m in results) else {}
            for m in results:
                ex.render_episodes(cfg, m, args.render, baselines)
        print(ex.format_table(rows))
    elif args.command == "run":
        rows = ex.run_experiment(cfg, jobs, _methods(args.methods), args.render, log)
        print(ex.format_table(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
