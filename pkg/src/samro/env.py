"""Agent-facing views of the simulated network.

:class:`NetworkEnv` exposes the slice-aware MDP: a (4N + 2B)S state and a
2BS action. With ``slice_aware=False`` the same network is seen the legacy
way: slice-aggregated state (4N + 2B), a 2B action applied to every slice
and a reward computed on slice-merged metrics. Both report the slice-aware
reward as ``eval_reward`` so runs can be compared on one scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import ActionGrid
from .mdp import RewardConfig, SliceMetrics, StateLayout, reward
from .sim import ScenarioConfig, StepResult, build_scenario


@dataclass
class StepOutcome:
    state: np.ndarray
    reward: float
    eval_reward: float
    metrics: SliceMetrics
    result: StepResult
    action: np.ndarray


class NetworkEnv:
    """One simulated network driven one agent step at a time."""

    def __init__(self, scenario: ScenarioConfig, reward_cfg: RewardConfig | None = None,
                 slice_aware=True, hom_values=None, ttt_values=None):
        self.scenario = scenario
        self.slice_aware = slice_aware
        self.world = build_scenario(scenario)
        self.boundaries = self.world.boundaries
        n_slices = scenario.n_slices
        self.reward_cfg = reward_cfg or RewardConfig().for_slices(n_slices)
        self._own_reward = self.reward_cfg if slice_aware else self.reward_cfg.for_slices(1)
        grid_kw = {}
        if hom_values is not None:
            grid_kw["hom_values"] = np.asarray(hom_values, float)
        if ttt_values is not None:
            grid_kw["ttt_values"] = np.asarray(ttt_values, float)
        self.grid = ActionGrid(len(self.boundaries), n_slices if slice_aware else 1, **grid_kw)
        self.layout = StateLayout(scenario.n_cells, self.boundaries,
                                  n_slices if slice_aware else 1)
        self.state = None
        self.n_interactions = 0

    @property
    def state_dim(self):
        return self.layout.dim

    @property
    def action_dim(self):
        return self.grid.dim

    def physical_action(self, action):
        """The per-slice action the network actually applies."""
        action = np.asarray(action, float)
        if self.slice_aware:
            return action
        return self.grid.replicate(action, self.scenario.n_slices)

    def reset(self):
        """Run one warm-up step at default parameters and return its state."""
        out = self._run(self.grid.default())
        self.state = out.state
        return self.state

    def step(self, action) -> StepOutcome:
        if self.state is None:
            self.reset()
        if not self.grid.on_grid(action):
            raise ValueError("operating actions must be on the grid")
        out = self._run(action)
        self.state = out.state
        self.n_interactions += 1
        return out

    def _run(self, action):
        full = self.physical_action(action)
        n_b, n_s = len(self.boundaries), self.scenario.n_slices
        res = self.world.run_agent_step(
            ActionGrid(n_b, n_s, self.grid.hom_values, self.grid.ttt_values).to_params(full))
        metrics = res.metrics
        eval_r = reward(metrics, self.reward_cfg)
        if self.slice_aware:
            state, own = res.state, eval_r
        else:
            merged = res.aggregate.merged_slices()
            state = self.layout.assemble(merged)
            own = reward(merged.metrics(), self._own_reward)
        return StepOutcome(state, own, eval_r, metrics, res, np.asarray(action, float).copy())
