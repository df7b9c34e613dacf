"""Experiment configuration and its INI file format.

Sections
--------
``[experiment]``  baseline, seeds, preset, out, alpha, scale_states
``[scenario]``    any scalar or list field of :class:`ScenarioConfig`
``[slice.N]``     throughput_req, latency_req, name (replace the default slices)
``[group.N]``     size, slice, expected_rate, speed, region, name; region is
                  ``playground`` or ``cx, cy, radius``
``[grid]``        hom, ttt (comma separated value lists)
``[reward]``      w_tsl, w_lsl, w_hfr, w_ppr, scale, normalize_slices
``[td3]``         :class:`samro.td3.Td3Agent` hyperparameters
``[energy]``      :class:`samro.energy.EnergyModel` hyperparameters
``[pipeline]``    :class:`samro.transfer.PipelineConfig` fields

Values are parsed as Python literals where possible, so ``1e-3``, ``(1, 2)``
and ``true``/``false`` all work.
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
from dataclasses import dataclass, field

from .actions import HOM_VALUES, TTT_VALUES
from .mdp import RewardConfig
from .sim.scenario import (Circle, ConfigError, ScenarioConfig, SliceSpec, UserGroupSpec,
                           desk_scenario, full_scenario)
from .transfer import PipelineConfig

BASELINES = ("samro", "mro", "default")
PRESETS = ("desk", "paper")


def pipeline_preset(name):
    """Stage budgets of the desk-scale and full-scale presets."""
    if name == "paper":
        return PipelineConfig()
    if name == "desk":
        return PipelineConfig(n_offline=300, online_steps=300, test_steps=100,
                              energy_pretrain_batches=1000)
    raise ConfigError(f"unknown preset {name!r}")


def scenario_preset(name, **kw):
    if name == "paper":
        return full_scenario(**kw)
    if name == "desk":
        return desk_scenario(**kw)
    raise ConfigError(f"unknown preset {name!r}")


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=desk_scenario)
    reward: RewardConfig = field(default_factory=RewardConfig)
    td3: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)
    pipeline: PipelineConfig = field(default_factory=lambda: pipeline_preset("desk"))
    hom_values: tuple = HOM_VALUES
    ttt_values: tuple = TTT_VALUES
    baseline: str = "samro"
    preset: str = "desk"
    alpha: float = 0.1
    scale_states: bool = True
    seeds: tuple = (0,)
    out: str = "runs"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {BASELINES}")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if len(self.reward.w_tsl) != self.scenario.n_slices:
            self.reward = self.reward.for_slices(self.scenario.n_slices)
        self.scenario.validate()

    @classmethod
    def from_preset(cls, preset="desk", **kw):
        return cls(scenario=scenario_preset(preset), pipeline=pipeline_preset(preset),
                   preset=preset, **kw)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


# -- INI reading / writing ----------------------------------------------------

def _value(text):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", ""):
        return None
    try:
        return ast.literal_eval(t)
    except (ValueError, SyntaxError):
        return t


def _fields(cls):
    return {f.name: f for f in dataclasses.fields(cls)}


def _apply(cls, section, base=None, skip=()):
    known = _fields(cls)
    kw = {}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in known:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
        kw[key] = _value(raw)
    return dataclasses.replace(base, **kw) if base is not None else cls(**kw)


def _group(section):
    kw = {k: _value(v) for k, v in section.items()}
    region = kw.pop("region", None)
    if region in (None, "playground"):
        kw["region"] = None
    else:
        cx, cy, r = region
        kw["region"] = Circle(float(cx), float(cy), float(r))
    return UserGroupSpec(**kw)


def _ordered(parser, prefix):
    names = [s for s in parser.sections() if s.startswith(prefix)]
    return sorted(names, key=lambda s: int(s[len(prefix):]))


def load_config(path) -> ExperimentConfig:
    """Read an INI experiment file; missing sections keep preset defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    exp = {k: _value(v) for k, v in parser["experiment"].items()} if "experiment" in parser else {}
    preset = exp.pop("preset", "desk")
    cfg = ExperimentConfig.from_preset(preset)
    scenario = cfg.scenario
    extra = {}
    slices = [SliceSpec(**{k: _value(v) for k, v in parser[s].items()})
              for s in _ordered(parser, "slice.")]
    groups = [_group(parser[s]) for s in _ordered(parser, "group.")]
    if slices:
        extra["slice_specs"] = slices
    if groups:
        extra["user_groups"] = groups
    if "scenario" in parser or extra:
        sc = dict(parser["scenario"]) if "scenario" in parser else {}
        kw = {k: _value(v) for k, v in sc.items()}
        unknown = set(kw) - set(_fields(ScenarioConfig))
        if unknown:
            raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
        scenario = dataclasses.replace(scenario, **kw, **extra)
    reward = _apply(RewardConfig, parser["reward"], cfg.reward) if "reward" in parser else cfg.reward
    pipeline = (_apply(PipelineConfig, parser["pipeline"], cfg.pipeline)
                if "pipeline" in parser else cfg.pipeline)
    td3 = {k: _value(v) for k, v in parser["td3"].items()} if "td3" in parser else {}
    energy = {k: _value(v) for k, v in parser["energy"].items()} if "energy" in parser else {}
    grid = parser["grid"] if "grid" in parser else {}
    hom = tuple(_value(grid["hom"])) if "hom" in grid else HOM_VALUES
    ttt = tuple(_value(grid["ttt"])) if "ttt" in grid else TTT_VALUES
    seeds = exp.pop("seeds", (0,))
    seeds = (seeds,) if isinstance(seeds, int) else tuple(seeds)
    return ExperimentConfig(scenario=scenario, reward=reward, td3=td3, energy=energy,
                            pipeline=pipeline, hom_values=hom, ttt_values=ttt, preset=preset,
                            seeds=seeds, **exp)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, (list, tuple)):
        return repr(tuple(v))
    return repr(v) if not isinstance(v, str) else v


def dump_config(cfg: ExperimentConfig, path):
    """Write ``cfg`` as INI; :func:`load_config` reads it back to an equal config."""
    p = configparser.ConfigParser(interpolation=None)
    p["experiment"] = {k: _fmt(getattr(cfg, k)) for k in
                       ("baseline", "preset", "alpha", "scale_states", "seeds", "out")}
    sc = {}
    for f in dataclasses.fields(ScenarioConfig):
        if f.name in ("user_groups", "slice_specs"):
            continue
        sc[f.name] = _fmt(getattr(cfg.scenario, f.name))
    p["scenario"] = sc
    for i, s in enumerate(cfg.scenario.slice_specs):
        p[f"slice.{i}"] = {"throughput_req": _fmt(s.throughput_req),
                           "latency_req": _fmt(s.latency_req), "name": repr(s.name)}
    for i, g in enumerate(cfg.scenario.user_groups):
        region = "playground" if g.region is None else _fmt((g.region.cx, g.region.cy, g.region.radius))
        p[f"group.{i}"] = {"size": _fmt(g.size), "slice": _fmt(g.slice),
                           "expected_rate": _fmt(g.expected_rate), "speed": _fmt(g.speed),
                           "region": region, "name": repr(g.name)}
    p["grid"] = {"hom": _fmt(cfg.hom_values), "ttt": _fmt(cfg.ttt_values)}
    p["reward"] = {f.name: _fmt(getattr(cfg.reward, f.name)) for f in dataclasses.fields(RewardConfig)}
    p["td3"] = {k: _fmt(v) for k, v in sorted(cfg.td3.items())}
    p["energy"] = {k: _fmt(v) for k, v in sorted(cfg.energy.items())}
    p["pipeline"] = {f.name: _fmt(getattr(cfg.pipeline, f.name))
                     for f in dataclasses.fields(PipelineConfig)}
    with open(path, "w") as fh:
        p.write(fh)


def config_diff(a: ExperimentConfig, b: ExperimentConfig):
    """Flat list of (key, value_a, value_b) where two configs differ."""
    def flat(cfg):
        out = {}
        for f in dataclasses.fields(cfg):
            v = getattr(cfg, f.name)
            if dataclasses.is_dataclass(v):
                for g in dataclasses.fields(v):
                    out[f"{f.name}.{g.name}"] = repr(getattr(v, g.name))
            elif isinstance(v, dict):
                for k, x in v.items():
                    out[f"{f.name}.{k}"] = repr(x)
            else:
                out[f.name] = repr(v)
        return out
    fa, fb = flat(a), flat(b)
    return [(k, fa.get(k), fb.get(k)) for k in sorted(set(fa) | set(fb)) if fa.get(k) != fb.get(k)]
