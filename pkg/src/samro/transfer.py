"""Offline-to-online knowledge transfer.

The stages are: collect a biased offline dataset around the default
parameters, augment it with continuous actions, train the agent offline
with an energy-regularized reward, then fine-tune online while sampling
minibatches from a mix of offline and online replay.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.preprocessing import StandardScaler

from .actions import DEFAULT_HOM, DEFAULT_TTT, ActionGrid, augment_continuous, project, snap_nearest
from .energy import EnergyModel
from .td3 import Batch, Td3Agent


@dataclass
class PipelineConfig:
    """Budgets and knobs of the transfer pipeline."""

    n_offline: int = 20000
    hom_std: float = 3.0
    ttt_std: float = 300.0
    k_augment: int = 8
    k_project: int = 8
    offline_epochs: float = 20.0
    offline_batches: int | None = None
    energy_pretrain_batches: int = 2000
    online_steps: int = 1344
    test_steps: int = 192
    energy_period: int = 100
    energy_refresh_batches: int = 200
    refresh_on: str = "union"  # or "online"
    beta0: float = 0.2
    beta_step: float = 0.05
    beta_max: float = 0.9
    online_capacity: int = 100000
    actor_penalty: bool = True  # also penalize the energy of the actor's own actions

    def __post_init__(self):
        if min(self.n_offline, self.online_steps, self.test_steps) < 0:
            raise ValueError("budgets must be >= 0")
        if self.k_augment < 1 or self.k_project < 1 or self.energy_period < 1:
            raise ValueError("k and energy period must be >= 1")
        if not 0 <= self.beta0 <= 1 or not 0 <= self.beta_max <= 1 or self.beta_step < 0:
            raise ValueError("beta schedule parameters out of range")
        if self.refresh_on not in ("union", "online"):
            raise ValueError("refresh_on must be 'union' or 'online'")


def beta_schedule(u, beta0=0.2, step=0.05, beta_max=0.9):
    """Probability of drawing a minibatch from online replay after ``u`` refresh periods."""
    return float(min(beta_max, beta0 + step * u))


# -- transitions -----------------------------------------------------------

@dataclass
class Transitions:
    """Aligned arrays of (state, proto action, next state, raw reward), physical units."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, float)
        self.actions = np.asarray(self.actions, float)
        self.rewards = np.asarray(self.rewards, float).reshape(-1)
        self.next_states = np.asarray(self.next_states, float)
        n = len(self.rewards)
        if not (len(self.states) == len(self.actions) == len(self.next_states) == n):
            raise ValueError("transition arrays are not aligned")

    def __len__(self):
        return len(self.rewards)

    @classmethod
    def empty(cls, state_dim, action_dim):
        return cls(np.zeros((0, state_dim)), np.zeros((0, action_dim)), np.zeros(0),
                   np.zeros((0, state_dim)))

    def take(self, idx):
        return Transitions(self.states[idx], self.actions[idx], self.rewards[idx],
                           self.next_states[idx])

    def concat(self, other: "Transitions"):
        return Transitions(np.vstack([self.states, other.states]),
                           np.vstack([self.actions, other.actions]),
                           np.r_[self.rewards, other.rewards],
                           np.vstack([self.next_states, other.next_states]))


def dataset_columns(state_cols, action_cols):
    return (list(state_cols) + list(action_cols)
            + ["next_" + c for c in state_cols] + ["reward"])


def write_dataset(path, data: Transitions, state_cols, action_cols):
    """One transition per row; floats written with ``repr`` so files round-trip exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(dataset_columns(state_cols, action_cols))
        for i in range(len(data)):
            row = np.r_[data.states[i], data.actions[i], data.next_states[i], data.rewards[i]]
            w.writerow([repr(float(v)) for v in row])


def read_dataset(path, state_dim, action_dim):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if len(header) != 2 * state_dim + action_dim + 1:
            raise ValueError(f"{path}: {len(header)} columns do not fit the scenario")
        rows = np.array([[float(v) for v in row] for row in r]).reshape(-1, len(header))
    s, a = state_dim, action_dim
    return Transitions(rows[:, :s], rows[:, s:s + a], rows[:, -1], rows[:, s + a:2 * s + a])


# -- network units ---------------------------------------------------------

class NetUnits:
    """Maps physical states/actions to what the networks consume.

    Actions are mapped affinely onto [-1, 1] for the actor and critics.
    States are standardized with statistics of the offline dataset when
    ``scale_states`` is true. The energy model sees every state and action
    dimension standardized by the offline statistics, so its noise scale
    is comparable across dimensions whatever the grid ranges are.
    """

    def __init__(self, grid: ActionGrid, scale_states=True):
        self.grid = grid
        self.scale_states = scale_states
        self.scaler = StandardScaler()
        self.action_scaler = StandardScaler()

    @property
    def fitted(self):
        return hasattr(self.scaler, "mean_")

    def fit(self, states, actions=None):
        self.scaler.fit(np.asarray(states, float))
        if actions is None:
            actions = np.atleast_2d(self.grid.default())
        self.action_scaler.fit(self.grid.normalize(actions))
        return self

    def scaled(self, s):
        s = np.asarray(s, float)
        out = self.scaler.transform(np.atleast_2d(s))
        return out if s.ndim == 2 else out[0]

    def state(self, s):
        """Network input for states."""
        return self.scaled(s) if self.scale_states else np.asarray(s, float)

    def action(self, a):
        return self.grid.normalize(a)

    def joint(self, s, a):
        """Energy-model input: standardized state next to standardized action."""
        a = self.action_scaler.transform(np.atleast_2d(self.action(a)))
        return np.hstack([np.atleast_2d(self.scaled(s)), a])

    def batch(self, data: Transitions, rewards=None):
        return Batch(self.state(data.states), self.action(data.actions),
                     data.rewards if rewards is None else rewards, self.state(data.next_states))

    def energy_penalty(self, energy: EnergyModel, alpha):
        """``f(net_states, net_actions) -> (alpha * E, d(alpha * E)/d net_actions)``.

        The energy is the one :meth:`EnergyModel.regularize` uses
        (standardized or raw), evaluated on the joint input.
        """
        def f(states, actions):
            s = states if self.scale_states else self.scaled(states)
            a_sd = self.action_scaler.scale_
            x = np.hstack([s, (actions - self.action_scaler.mean_) / a_sd])
            e = energy.energy(x)
            g = energy.net_.input_gradient(x)[:, s.shape[1]:] / a_sd
            if energy.standardize:
                e = (e - energy.energy_mean_) / energy.energy_std_
                g = g / energy.energy_std_
            return alpha * e, alpha * g
        return f

    def arrays(self):
        return [getattr(sc, k) for sc in (self.scaler, self.action_scaler)
                for k in ("mean_", "scale_", "var_")]

    def set_arrays(self, arrays):
        for sc, (mean, scale, var) in zip((self.scaler, self.action_scaler),
                                          (arrays[:3], arrays[3:6])):
            sc.mean_, sc.scale_, sc.var_ = mean, scale, var
            sc.n_features_in_ = len(mean)
            sc.n_samples_seen_ = 1
        return self


# -- offline stage -----------------------------------------------------------

def collect_offline(env, n_samples, rng, hom_std=3.0, ttt_std=300.0,
                    hom_mean=DEFAULT_HOM, ttt_mean=DEFAULT_TTT):
    """Biased dataset: Gaussian parameters around the defaults, snapped to the grid."""
    grid = env.grid
    if env.state is None:
        env.reset()
    out = Transitions.empty(env.state_dim, grid.dim)
    S, A, R, S2 = [], [], [], []
    mean = grid.default(hom_mean, ttt_mean)
    std = np.tile([hom_std, ttt_std], grid.dim // 2)
    for _ in range(int(n_samples)):
        proto = mean + std * rng.standard_normal(grid.dim)
        action = snap_nearest(proto, grid)
        s = env.state
        step = env.step(action)
        S.append(s)
        A.append(action)
        R.append(step.reward)
        S2.append(step.state)
    if S:
        out = Transitions(np.array(S), np.array(A), np.array(R), np.array(S2))
    return out


def augment_dataset(data: Transitions, k, grid: ActionGrid, rng):
    """Replace each record by ``k`` copies whose actions snap back to the original."""
    if len(data) == 0:
        raise ValueError("cannot augment an empty dataset")
    if k < 1:
        raise ValueError("k must be >= 1")
    acts = np.vstack([augment_continuous(a, k, grid, rng) for a in data.actions])
    idx = np.repeat(np.arange(len(data)), k)
    return Transitions(data.states[idx], acts, data.rewards[idx], data.next_states[idx])


@dataclass
class OfflineLog:
    q_estimates: list = field(default_factory=list)  # one per actor update
    critic_loss: list = field(default_factory=list)
    energy_loss: list = field(default_factory=list)
    n_batches: int = 0
    n_env_steps: int = 0


def train_offline(data: Transitions, agent: Td3Agent, energy: EnergyModel | None,
                  units: NetUnits, cfg: PipelineConfig, alpha=None, callback=None):
    """Energy-regularized TD3 on a fixed dataset; no environment interaction.

    Returns an :class:`OfflineLog`. ``callback(i, info)`` is called after
    every minibatch and may return True to stop early.
    """
    if len(data) == 0:
        raise ValueError("offline training needs a non-empty dataset")
    if not units.fitted:
        units.fit(data.states, data.actions)
    full = units.batch(data)
    X = units.joint(data.states, data.actions)
    alpha = (energy.alpha if energy is not None else 0.0) if alpha is None else alpha
    log = OfflineLog()
    if energy is not None and alpha > 0:
        energy.fit(X, n_batches=cfg.energy_pretrain_batches)
        log.energy_loss = list(energy.loss_curve_)
    if not hasattr(agent, "actor_"):
        agent.initialize(full.states.shape[1], full.actions.shape[1])
    n_batches = cfg.offline_batches
    if n_batches is None:
        n_batches = int(round(cfg.offline_epochs * len(data) / agent.batch_size))
    regularize = energy is not None and alpha > 0
    penalty = energy.regularize(np.zeros(len(X)), X, alpha) if regularize else np.zeros(len(X))
    actor_pen = units.energy_penalty(energy, alpha) if regularize and cfg.actor_penalty else None
    for i in range(n_batches):
        idx = agent.rng_.integers(0, len(data), agent.batch_size)
        batch = Batch(full.states[idx], full.actions[idx], full.rewards[idx], full.next_states[idx])
        info = agent.train_step(batch, batch.rewards + penalty[idx], actor_pen)
        log.critic_loss.append(info["critic_loss"])
        if info["actor_loss"] is not None:
            log.q_estimates.append(-info["actor_loss"])
        log.n_batches += 1
        if callback is not None and callback(i, info):
            break
    return log


# -- online stage ------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions in physical units."""

    def __init__(self, state_dim, action_dim, capacity):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, state_dim))
        self.a = np.zeros((self.capacity, action_dim))
        self.r = np.zeros(self.capacity)
        self.s2 = np.zeros((self.capacity, state_dim))
        self.size = 0
        self.head = 0
        self.n_added = 0

    @classmethod
    def from_transitions(cls, data: Transitions):
        buf = cls(data.states.shape[1], data.actions.shape[1], max(len(data), 1))
        for i in range(len(data)):
            buf.add(data.states[i], data.actions[i], data.rewards[i], data.next_states[i])
        return buf

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2):
        i = self.head
        self.s[i], self.a[i], self.r[i], self.s2[i] = s, a, r, s2
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.n_added += 1

    def contents(self) -> Transitions:
        idx = np.arange(self.size) if self.size < self.capacity else \
            (self.head + np.arange(self.size)) % self.capacity
        return Transitions(self.s[idx], self.a[idx], self.r[idx], self.s2[idx])

    def sample(self, m, rng) -> Transitions:
        idx = rng.integers(0, self.size, m)
        return Transitions(self.s[idx], self.a[idx], self.r[idx], self.s2[idx])


@dataclass
class ReplayBuffers:
    offline: ReplayBuffer
    online: ReplayBuffer
    beta: float = 0.2


def mixed_sample(buffers: ReplayBuffers, m, rng):
    """Minibatch of ``m`` records from one buffer, picked by a single Bernoulli(beta) draw.

    Returns ``(transitions, source)`` with source "online" or "offline".
    """
    if len(buffers.offline) == 0 and len(buffers.online) == 0:
        raise ValueError("both replay buffers are empty")
    use_online = rng.random() < buffers.beta and len(buffers.online) > 0
    if len(buffers.offline) == 0:
        use_online = True
    src = buffers.online if use_online else buffers.offline
    return src.sample(m, rng), ("online" if use_online else "offline")


@dataclass
class OnlineLog:
    rewards: list = field(default_factory=list)
    eval_rewards: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    sources: list = field(default_factory=list)
    proto_actions: list = field(default_factory=list)
    operating_actions: list = field(default_factory=list)
    q_estimates: list = field(default_factory=list)
    critic_loss: list = field(default_factory=list)
    energy_refresh_steps: list = field(default_factory=list)
    actor_updates: int = 0


def q_evaluator(agent: Td3Agent, units: NetUnits):
    """Batched Q1 of operating actions for :func:`samro.actions.project`."""
    def q(scaled_state, candidates):
        return agent.q_values(scaled_state, units.action(candidates))
    return q


def act(agent, units, state, k, rng, explore=True):
    """(noisy proto action, projected operating action), both physical."""
    s = units.state(state)
    a_norm = agent.select_action(s, rng) if explore else np.clip(agent.predict(s), -1, 1)
    proto = units.grid.denormalize(a_norm)
    chosen = project(s, proto, k, units.grid, q_evaluator(agent, units), rng, batched=True)
    return proto, chosen


def finetune_online(env, agent: Td3Agent, energy: EnergyModel | None, buffers: ReplayBuffers,
                    units: NetUnits, cfg: PipelineConfig, rng, alpha=None, steps=None):
    """Online fine-tuning with mixed replay and periodic energy refresh.

    Stores the noisy proto action (not the projected one) with each online
    transition; the raw reward is stored and regularized only when sampled.
    """
    alpha = (energy.alpha if energy is not None else 0.0) if alpha is None else alpha
    regularize = energy is not None and alpha > 0
    steps = cfg.online_steps if steps is None else steps
    if env.state is None:
        env.reset()
    log = OnlineLog()
    actor_pen = units.energy_penalty(energy, alpha) if regularize and cfg.actor_penalty else None
    periods = 0
    buffers.beta = beta_schedule(0, cfg.beta0, cfg.beta_step, cfg.beta_max)
    for t in range(1, steps + 1):
        s = env.state
        proto, chosen = act(agent, units, s, cfg.k_project, rng, explore=True)
        out = env.step(chosen)
        buffers.online.add(s, proto, out.reward, out.state)
        log.rewards.append(out.reward)
        log.eval_rewards.append(out.eval_reward)
        log.metrics.append(out.metrics)
        log.proto_actions.append(proto)
        log.operating_actions.append(chosen)
        log.betas.append(buffers.beta)

        sample, src = mixed_sample(buffers, agent.batch_size, rng)
        log.sources.append(src)
        batch = units.batch(sample)
        r = (energy.regularize(batch.rewards, units.joint(sample.states, sample.actions), alpha)
             if regularize else batch.rewards)
        info = agent.train_step(batch, r, actor_pen)
        log.critic_loss.append(info["critic_loss"])
        if info["actor_loss"] is not None:
            log.actor_updates += 1
            log.q_estimates.append(-info["actor_loss"])

        if t % cfg.energy_period == 0:
            if regularize:
                pool = buffers.online.contents()
                if cfg.refresh_on == "union":
                    pool = buffers.offline.contents().concat(pool)
                energy.fit(units.joint(pool.states, pool.actions),
                           n_batches=cfg.energy_refresh_batches)
            log.energy_refresh_steps.append(t)
            periods += 1
            buffers.beta = beta_schedule(periods, cfg.beta0, cfg.beta_step, cfg.beta_max)
    return log


def evaluate_policy(env, agent, units, steps, k, rng):
    """Frozen-policy test run: deterministic actor output, projection, no learning."""
    if env.state is None:
        env.reset()
    outs = []
    for _ in range(int(steps)):
        _, chosen = act(agent, units, env.state, k, rng, explore=False)
        outs.append(env.step(chosen))
    return outs
