"""Command-line entry point: ``samro <subcommand> [options]``.

Run directories are laid out as ``<out>/<method>/seed<k>/``; each stage
reads what the previous stage wrote there::

    collect        -> dataset.csv
    train-offline  -> offline/ (agent, energy, scalers, augmented data)
    finetune       -> finetuned/ plus online_trace.csv
    evaluate       -> traces.csv, cdf_*.csv, actions.csv, summary.txt
    baseline       -> all of the above in one process
    sweep          -> one ``baseline`` subprocess per seed, then sweep.csv
    export         -> CDF files recomputed from an existing traces.csv
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import subprocess
import sys

import numpy as np

from . import experiments as ex
from .config import BASELINES, PRESETS, ExperimentConfig, dump_config, load_config
from .sim.scenario import ConfigError
from .transfer import read_dataset, write_dataset

log = logging.getLogger("samro")


class CliError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file")
    common.add_argument("--seed", type=int, help="experiment seed (default: first seed of config)")
    common.add_argument("--out", help="output root directory")
    common.add_argument("--preset", choices=PRESETS, help="desk or full-scale budgets")
    common.add_argument("--baseline", choices=BASELINES, help="method to run")
    common.add_argument("--alpha", type=float, help="energy regularizer weight")
    common.add_argument("--k", type=int, help="neighbours for projection and augmentation")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="samro", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("collect", parents=[common], help="collect the biased offline dataset")
    sub.add_parser("train-offline", parents=[common], help="augment and train offline")
    sub.add_parser("finetune", parents=[common], help="online fine-tuning with mixed replay")
    sub.add_parser("evaluate", parents=[common], help="test the frozen policy")
    sub.add_parser("baseline", parents=[common], help="run one method end to end")
    sw = sub.add_parser("sweep", parents=[common], help="run a method over several seeds")
    sw.add_argument("--seeds", type=int, nargs="+", help="seeds (default: config seeds)")
    exp = sub.add_parser("export", parents=[common], help="write CDF CSVs from traces.csv")
    exp.add_argument("run_dir", help="directory holding traces.csv")
    return p


def resolve_config(args) -> ExperimentConfig:
    try:
        if args.config:
            cfg = load_config(args.config)
            if args.preset and args.preset != cfg.preset:
                raise ConfigError("--preset conflicts with the preset of --config")
        else:
            cfg = ExperimentConfig.from_preset(args.preset or "desk")
        kw = {}
        if args.baseline:
            kw["baseline"] = args.baseline
        if args.alpha is not None:
            kw["alpha"] = args.alpha
        if args.out:
            kw["out"] = args.out
        if args.k is not None:
            kw["pipeline"] = dataclasses.replace(cfg.pipeline, k_project=args.k, k_augment=args.k)
        return cfg.replace(**kw) if kw else cfg
    except (ConfigError, ValueError, OSError) as e:
        raise CliError("config", str(e)) from e


def run_dir(cfg, seed):
    return os.path.join(cfg.out, cfg.baseline, f"seed{seed}")


def _seed(args, cfg):
    return args.seed if args.seed is not None else cfg.seeds[0]


def _learned(cfg, stage):
    if cfg.baseline == "default":
        raise CliError(stage, "the default baseline has no learned policy; use 'baseline'")
    return cfg.baseline == "samro"


def cmd_collect(cfg, seed):
    aware = _learned(cfg, "collect")
    d = run_dir(cfg, seed)
    os.makedirs(d, exist_ok=True)
    data = ex.stage_collect(cfg, seed, aware)
    env = ex.make_env(cfg, ex.SeedPlan.from_seed(seed).collect_world, aware)
    write_dataset(os.path.join(d, "dataset.csv"), data, env.layout.columns("s"),
                  env.grid.columns(env.boundaries))
    dump_config(cfg, os.path.join(d, "config.ini"))
    log.info("collected %d transitions into %s", len(data), d)


def _read_collected(cfg, seed, aware, stage):
    path = os.path.join(run_dir(cfg, seed), "dataset.csv")
    if not os.path.exists(path):
        raise CliError(stage, f"missing {path}; run 'collect' first")
    env = ex.make_env(cfg, ex.SeedPlan.from_seed(seed).collect_world, aware)
    try:
        return read_dataset(path, env.state_dim, env.action_dim)
    except ValueError as e:
        raise CliError(stage, str(e)) from e


def cmd_train_offline(cfg, seed):
    aware = _learned(cfg, "train-offline")
    data = _read_collected(cfg, seed, aware, "train-offline")
    agent, energy, units, augmented, off = ex.stage_train_offline(cfg, seed, data, aware)
    env = ex.make_env(cfg, ex.SeedPlan.from_seed(seed).test_world, aware)
    ex.save_stage(os.path.join(run_dir(cfg, seed), "offline"), agent, energy, units, augmented, env)
    log.info("offline training done: %d minibatches", off.n_batches)


def _load(cfg, seed, aware, stage, which):
    try:
        return ex.load_stage(os.path.join(run_dir(cfg, seed), which), cfg, seed, aware)
    except ex.StageError as e:
        raise CliError(stage, str(e)) from e
    except (OSError, ValueError) as e:
        raise CliError(stage, f"cannot read checkpoint: {e}") from e


def cmd_finetune(cfg, seed):
    aware = _learned(cfg, "finetune")
    agent, energy, units, augmented, env = _load(cfg, seed, aware, "finetune", "offline")
    if augmented is None:
        raise CliError("finetune", "offline checkpoint has no augmented dataset")
    on, buffers = ex.stage_finetune(cfg, seed, agent, energy, units, augmented, aware)
    d = run_dir(cfg, seed)
    ex.save_stage(os.path.join(d, "finetuned"), agent, energy, units, augmented, env)
    with open(os.path.join(d, "online_trace.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "reward", "eval_reward", "beta", "source"])
        for t, row in enumerate(zip(on.rewards, on.eval_rewards, on.betas, on.sources), 1):
            w.writerow([t, repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), row[3]])
    log.info("fine-tuned %d steps, %d actor updates", len(on.rewards), on.actor_updates)


def cmd_evaluate(cfg, seed):
    aware = _learned(cfg, "evaluate")
    d = run_dir(cfg, seed)
    which = "finetuned" if os.path.isdir(os.path.join(d, "finetuned")) else "offline"
    agent, _, units, _, _ = _load(cfg, seed, aware, "evaluate", which)
    report = ex.stage_evaluate(cfg, seed, agent, units, aware)
    ex.write_report(report, cfg, d)
    log.info("evaluated %s policy: mean test reward %.4f", which, report.test_rewards().mean())


def cmd_baseline(cfg, seed):
    report = ex.run(cfg, seed)
    d = run_dir(cfg, seed)
    ex.write_report(report, cfg, d)
    dump_config(cfg, os.path.join(d, "config.ini"))
    print(f"{cfg.baseline} seed {seed}: mean test reward {report.test_rewards().mean():.4f}")


def cmd_sweep(cfg, seeds, args):
    rows = []
    for seed in seeds:
        cmd = [sys.executable, "-m", "samro.cli", "baseline", "--seed", str(seed),
               "--baseline", cfg.baseline, "--out", cfg.out]
        if args.config:
            cmd += ["--config", args.config]
        if args.preset and not args.config:
            cmd += ["--preset", args.preset]
        if args.alpha is not None:
            cmd += ["--alpha", repr(args.alpha)]
        if args.k is not None:
            cmd += ["--k", str(args.k)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise CliError("sweep", f"seed {seed} failed:\n{proc.stderr.strip()}")
        rep = ex.read_traces(os.path.join(run_dir(cfg, seed), "traces.csv"))
        rows.append((seed, float(rep.test_rewards().mean())))
        print(proc.stdout.strip())
    path = os.path.join(cfg.out, cfg.baseline, "sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "mean_test_reward"])
        w.writerows([s, repr(r)] for s, r in rows)
    print(f"mean over {len(rows)} seeds: {np.mean([r for _, r in rows]):.4f}")


def cmd_export(args, cfg):
    src = os.path.join(args.run_dir, "traces.csv")
    if not os.path.exists(src):
        raise CliError("export", f"missing {src}")
    try:
        report = ex.read_traces(src)
        paths = ex.export_cdf(report, args.out or args.run_dir)
    except ValueError as e:
        raise CliError("export", str(e)) from e
    print(f"wrote {len(paths)} CDF files")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "export":
            cmd_export(args, cfg)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.seeds or list(cfg.seeds), args)
        else:
            handler = {"collect": cmd_collect, "train-offline": cmd_train_offline,
                       "finetune": cmd_finetune, "evaluate": cmd_evaluate,
                       "baseline": cmd_baseline}[args.command]
            handler(cfg, _seed(args, cfg))
    except CliError as e:
        print(f"samro: error {e}", file=sys.stderr)
        return 2
    except ex.StageError as e:
        print(f"samro: error [{args.command}] {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
