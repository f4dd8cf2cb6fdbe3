"""Command-line entry point: ``probdag <experiment> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .harness import ALL_METHODS, ExperimentConfig, default_config, replay_run, run_experiment


def _load_config(experiment: str, path) -> ExperimentConfig:
    cfg = default_config(experiment).to_dict()
    if path:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        unknown = set(data) - set(cfg)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            if isinstance(cfg.get(key), dict) and isinstance(value, dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    return ExperimentConfig.from_dict(cfg)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.reps is not None:
        cfg.repetitions = args.reps
    if args.budget is not None:
        cfg.budget = args.budget
    if args.workers is not None:
        cfg.workers = args.workers
    if args.methods:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        bad = [m for m in methods if m not in ALL_METHODS]
        if bad:
            raise SystemExit(f"unknown methods: {bad}")
        for m in methods:
            cfg.betas.setdefault(m, [1.0])
        cfg.methods = methods
    if args.betas:
        betas = [float(b) for b in args.betas.split(",")]
        cfg.betas = {m: list(betas) for m in cfg.methods}
    cfg.__post_init__()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probdag", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synthetic", "tictactoe", "featsel"):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="YAML file overriding the defaults")
        p.add_argument("--out", default=f"results/{name}", help="output directory")
        p.add_argument("--seed", type=int, help="base seed (repetition r uses seed + r)")
        p.add_argument("--reps", type=int, help="repetitions per method and beta")
        p.add_argument("--budget", type=int, help="iterations per run")
        p.add_argument("--methods", help="comma-separated subset of " + ",".join(ALL_METHODS))
        p.add_argument("--betas", help="comma-separated beta values for every method")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--print-config", action="store_true", help="show the config and exit")
    p = sub.add_parser("validate-math", help="Monte-Carlo checks of the approximations")
    p.add_argument("--configs", type=int, default=200)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report as JSON here")
    p = sub.add_parser("replay", help="re-run one run from a manifest")
    p.add_argument("manifest")
    p.add_argument("run_id")
    p.add_argument("--out", help="write the trace CSV here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate-math":
        from .validation import run_all

        results = run_all(args.configs, args.samples, args.seed)
        for r in results:
            print(r.line())
        if args.out:
            Path(args.out).write_text(json.dumps(
                [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
                indent=1, default=float))
        return 0 if all(r.passed for r in results) else 1
    if args.command == "replay":
        res = replay_run(args.manifest, args.run_id)
        with open(args.manifest) as f:
            entry = next(e for e in json.load(f)["runs"] if e["run_id"] == args.run_id)
        original = Path(args.manifest).parent / entry["trace"]
        same = original.read_text() == res["trace_csv"]
        if args.out:
            Path(args.out).write_text(res["trace_csv"])
        print(f"{args.run_id}: trace {'identical' if same else 'DIFFERS'}")
        return 0 if same else 1

    cfg = _apply_overrides(_load_config(args.command, args.config), args)
    if args.print_config:
        print(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
        return 0

    def progress(res):
        if args.verbose:
            spec = res["spec"]
            status = "failed" if "error" in res else f"{res['timings']['total']:.1f}s"
            print(f"{spec['run_id']}: {status}", file=sys.stderr)

    manifest = run_experiment(cfg, args.out, progress)
    print(f"wrote {args.out}: {len(manifest['runs'])} runs, {manifest['failed']} failed")
    return 1 if manifest["failed"] else 0


if __name__ == "__main__":
    sys.exit(main())
