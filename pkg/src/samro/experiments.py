"""Experiment runs: the default and legacy MRO baselines and the full pipeline.

Every run is a pure function of (config, seed). A seed fans out into
independent streams; the three networks involved (offline collection,
online fine-tuning, test) are separate simulated worlds with their own
scenario seeds, and the test world is identical for all methods under the
same seed, so method comparisons are paired.
"""

from __future__ import annotations

import csv
import dataclasses
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig, config_diff
from .energy import EnergyModel
from .env import NetworkEnv
from .mdp import SliceMetrics
from .nn import load_arrays, save_arrays
from .td3 import Td3Agent
from .transfer import (NetUnits, ReplayBuffer, ReplayBuffers, Transitions, augment_dataset,
                       collect_offline, evaluate_policy, finetune_online, read_dataset,
                       train_offline, write_dataset)

METRICS = ("hfr", "ppr", "tsl", "lsl")


class StageError(RuntimeError):
    """A pipeline stage cannot run; the message names the stage and what is missing."""


@dataclass
class SeedPlan:
    """Integer seeds of every stream one experiment seed controls."""

    collect_world: int
    online_world: int
    test_world: int
    collect: int
    augment: int
    agent: int
    energy: int
    online: int
    test: int

    @classmethod
    def from_seed(cls, seed):
        ss = np.random.SeedSequence(int(seed))
        words = ss.generate_state(9, dtype=np.uint32)
        return cls(*(int(w) for w in words))


@dataclass
class RunReport:
    method: str
    seed: int
    phases: list = field(default_factory=list)  # "train" / "test" per step
    rewards: list = field(default_factory=list)  # the method's own reward
    eval_rewards: list = field(default_factory=list)  # slice-aware reward
    metrics: list = field(default_factory=list)  # SliceMetrics per step
    actions: list = field(default_factory=list)
    boundaries: tuple = ()
    wall_clock: float = 0.0
    counts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add(self, phase, outcome):
        self.phases.append(phase)
        self.rewards.append(float(outcome.reward))
        self.eval_rewards.append(float(outcome.eval_reward))
        self.metrics.append(outcome.metrics)
        self.actions.append(np.asarray(outcome.action, float))

    def test_index(self):
        return [i for i, p in enumerate(self.phases) if p == "test"]

    def test_rewards(self):
        return np.array([self.eval_rewards[i] for i in self.test_index()])

    def test_metric(self, name, s):
        return np.array([getattr(self.metrics[i], name)[s] for i in self.test_index()])

    @property
    def n_slices(self):
        return self.metrics[0].n_slices if self.metrics else 0


# -- shared helpers -------------------------------------------------------------

def make_env(cfg: ExperimentConfig, world_seed, slice_aware=True):
    scenario = dataclasses.replace(cfg.scenario, rng_seed=int(world_seed))
    return NetworkEnv(scenario, cfg.reward, slice_aware=slice_aware,
                      hom_values=cfg.hom_values, ttt_values=cfg.ttt_values)


def make_agent(cfg: ExperimentConfig, plan: SeedPlan):
    return Td3Agent(**{**cfg.td3, "random_state": plan.agent})


def make_energy(cfg: ExperimentConfig, plan: SeedPlan):
    return EnergyModel(**{**cfg.energy, "alpha": cfg.alpha, "random_state": plan.energy})


def _test(report, env, policy, steps):
    env.reset()
    for _ in range(int(steps)):
        report.add("test", env.step(policy(env)))


# -- baselines ------------------------------------------------------------------

def run_baseline_default(cfg: ExperimentConfig, seed) -> RunReport:
    """Fixed default parameters (HOM 0 dB, TTT 512 ms) on the test world."""
    t0 = time.perf_counter()
    plan = SeedPlan.from_seed(seed)
    env = make_env(cfg, plan.test_world, slice_aware=True)
    report = RunReport("default", int(seed), boundaries=env.boundaries.directed)
    action = env.grid.default()
    _test(report, env, lambda e: action, cfg.pipeline.test_steps)
    report.wall_clock = time.perf_counter() - t0
    report.counts = dict(test_steps=len(report.test_index()))
    return report


# -- the transfer pipeline, stage by stage ----------------------------------------

def stage_collect(cfg, seed, slice_aware=True) -> Transitions:
    plan = SeedPlan.from_seed(seed)
    env = make_env(cfg, plan.collect_world, slice_aware)
    p = cfg.pipeline
    return collect_offline(env, p.n_offline, np.random.default_rng(plan.collect),
                           p.hom_std, p.ttt_std)


def stage_train_offline(cfg, seed, data: Transitions, slice_aware=True):
    """Augment, fit the network units and the energy model, train the agent offline."""
    if len(data) == 0:
        raise StageError("train-offline: the offline dataset is empty; run 'collect' first")
    plan = SeedPlan.from_seed(seed)
    env = make_env(cfg, plan.test_world, slice_aware)  # only for the grid
    p = cfg.pipeline
    augmented = augment_dataset(data, p.k_augment, env.grid, np.random.default_rng(plan.augment))
    units = NetUnits(env.grid, scale_states=cfg.scale_states).fit(augmented.states,
                                                                  augmented.actions)
    agent = make_agent(cfg, plan)
    energy = make_energy(cfg, plan)
    log = train_offline(augmented, agent, energy, units, p, alpha=cfg.alpha)
    return agent, energy, units, augmented, log


def stage_finetune(cfg, seed, agent, energy, units, augmented, slice_aware=True):
    plan = SeedPlan.from_seed(seed)
    env = make_env(cfg, plan.online_world, slice_aware)
    p = cfg.pipeline
    buffers = ReplayBuffers(ReplayBuffer.from_transitions(augmented),
                            ReplayBuffer(env.state_dim, env.action_dim, p.online_capacity))
    log = finetune_online(env, agent, energy, buffers, units, p,
                          np.random.default_rng(plan.online), alpha=cfg.alpha)
    return log, buffers


def stage_evaluate(cfg, seed, agent, units, slice_aware=True, method=None) -> RunReport:
    plan = SeedPlan.from_seed(seed)
    env = make_env(cfg, plan.test_world, slice_aware)
    method = method or ("samro" if slice_aware else "mro")
    report = RunReport(method, int(seed), boundaries=env.boundaries.directed)
    env.reset()
    rng = np.random.default_rng(plan.test)
    for out in evaluate_policy(env, agent, units, cfg.pipeline.test_steps,
                               cfg.pipeline.k_project, rng):
        report.add("test", out)
    return report


def run_pipeline(cfg: ExperimentConfig, seed, slice_aware=True) -> RunReport:
    """Collect, augment, train offline, fine-tune online, then test the frozen policy."""
    t0 = time.perf_counter()
    data = stage_collect(cfg, seed, slice_aware)
    agent, energy, units, augmented, off_log = stage_train_offline(cfg, seed, data, slice_aware)
    on_log, buffers = stage_finetune(cfg, seed, agent, energy, units, augmented, slice_aware)
    report = stage_evaluate(cfg, seed, agent, units, slice_aware)
    train = RunReport(report.method, report.seed)
    for r, er, m, a in zip(on_log.rewards, on_log.eval_rewards, on_log.metrics,
                           on_log.operating_actions):
        train.phases.append("train")
        train.rewards.append(float(r))
        train.eval_rewards.append(float(er))
        train.metrics.append(m)
        train.actions.append(a)
    for name in ("phases", "rewards", "eval_rewards", "metrics", "actions"):
        setattr(report, name, getattr(train, name) + getattr(report, name))
    report.counts = dict(offline_samples=len(data), augmented=len(augmented),
                         offline_batches=off_log.n_batches, online_steps=len(on_log.rewards),
                         actor_updates=on_log.actor_updates,
                         energy_refreshes=len(on_log.energy_refresh_steps),
                         test_steps=len(report.test_index()))
    report.wall_clock = time.perf_counter() - t0
    return report


def run_samro(cfg: ExperimentConfig, seed) -> RunReport:
    return run_pipeline(cfg, seed, slice_aware=True)


def run_baseline_mro(cfg: ExperimentConfig, seed) -> RunReport:
    """Same pipeline and hyperparameters, seen through slice-agnostic adapters."""
    return run_pipeline(cfg, seed, slice_aware=False)


RUNNERS = {"default": run_baseline_default, "mro": run_baseline_mro, "samro": run_samro}


def run(cfg: ExperimentConfig, seed, method=None) -> RunReport:
    return RUNNERS[method or cfg.baseline](cfg, seed)


# -- export -------------------------------------------------------------------------

def empirical_cdf(values):
    """Sorted values and cumulative fractions i/n."""
    v = np.sort(np.asarray(values, float))
    if v.size == 0:
        raise ValueError("empirical CDF of an empty sample")
    return v, np.arange(1, v.size + 1) / v.size


def export_cdf(report: RunReport, out_dir):
    """One CSV per metric and slice over the test steps; returns the written paths."""
    if not report.test_index():
        raise ValueError("report has no test steps")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name in METRICS:
        for s in range(report.n_slices):
            v, f = empirical_cdf(report.test_metric(name, s))
            path = os.path.join(out_dir, f"cdf_{name}_slice{s}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["value", "cum_fraction"])
                w.writerows([repr(float(a)), repr(float(b))] for a, b in zip(v, f))
            paths.append(path)
    return paths


def write_traces(report: RunReport, path):
    """Per-step trace: phase, rewards and per-slice metrics."""
    n_s = report.n_slices
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "phase", "reward", "eval_reward"]
                   + [f"{m}_s{s}" for s in range(n_s) for m in METRICS])
        for i, ph in enumerate(report.phases):
            m = report.metrics[i]
            w.writerow([i, ph, repr(report.rewards[i]), repr(report.eval_rewards[i])]
                       + [repr(float(getattr(m, k)[s])) for s in range(n_s) for k in METRICS])


def read_traces(path) -> RunReport:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trace")
    n_s = sum(1 for k in rows[0] if k.startswith("hfr_s"))
    rep = RunReport("trace", -1)
    for row in rows:
        rep.phases.append(row["phase"])
        rep.rewards.append(float(row["reward"]))
        rep.eval_rewards.append(float(row["eval_reward"]))
        rep.metrics.append(SliceMetrics(*(np.array([float(row[f"{k}_s{s}"]) for s in range(n_s)])
                                          for k in METRICS)))
    return rep


def write_report(report: RunReport, cfg: ExperimentConfig, out_dir, reference=None):
    """Traces, CDFs, action log, boundary list and a summary into ``out_dir``.

    Only the summary text carries wall-clock time; every CSV is a pure
    function of (config, seed).
    """
    os.makedirs(out_dir, exist_ok=True)
    write_traces(report, os.path.join(out_dir, "traces.csv"))
    export_cdf(report, out_dir)
    with open(os.path.join(out_dir, "actions.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        if report.actions:
            n_s = report.n_slices
            n_b = len(report.actions[0]) // (2 * n_s)
            w.writerow(["step", "phase"] + [f"b{b}_s{k}_{p}" for b in range(n_b)
                                            for k in range(n_s) for p in ("hom", "ttt")])
        for i, a in enumerate(report.actions):
            w.writerow([i, report.phases[i]] + [repr(float(x)) for x in a])
    with open(os.path.join(out_dir, "boundaries.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "source", "target"])
        w.writerows([i, n, m] for i, (n, m) in enumerate(report.boundaries))
    test = report.test_rewards()
    lines = [f"method {report.method}", f"seed {report.seed}",
             f"mean_test_reward {float(test.mean()) if test.size else float('nan')!r}",
             f"wall_clock_s {report.wall_clock:.3f}"]
    lines += [f"count {k} {v}" for k, v in sorted(report.counts.items())]
    if reference is not None:
        lines += [f"config_diff {k} {a} {b}" for k, a, b in config_diff(reference, cfg)]
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


# -- checkpoints of pipeline stages ----------------------------------------------

def save_stage(directory, agent=None, energy=None, units=None, data=None, env=None):
    os.makedirs(directory, exist_ok=True)
    if agent is not None:
        agent.save(os.path.join(directory, "agent"))
    if energy is not None and hasattr(energy, "net_"):
        energy.save(os.path.join(directory, "energy.bin"))
    if units is not None:
        save_arrays(os.path.join(directory, "units.bin"),
                    dict(kind="units", scale_states=units.scale_states), units.arrays())
    if data is not None:
        write_dataset(os.path.join(directory, "augmented.csv"), data,
                      env.layout.columns("s"), env.grid.columns(env.boundaries))


def load_stage(directory, cfg, seed, slice_aware=True):
    agent_dir = os.path.join(directory, "agent")
    if not os.path.exists(os.path.join(agent_dir, "manifest.txt")):
        raise StageError(f"no trained agent in {directory}; run 'train-offline' first")
    plan = SeedPlan.from_seed(seed)
    env = make_env(cfg, plan.test_world, slice_aware)
    agent = Td3Agent.load(agent_dir)
    energy = make_energy(cfg, plan)
    epath = os.path.join(directory, "energy.bin")
    if os.path.exists(epath):
        energy.load(epath)
    head, arrays = load_arrays(os.path.join(directory, "units.bin"))
    units = NetUnits(env.grid, scale_states=head["scale_states"]).set_arrays(arrays)
    dpath = os.path.join(directory, "augmented.csv")
    data = read_dataset(dpath, env.state_dim, env.action_dim) if os.path.exists(dpath) else None
    return agent, energy, units, data, env
