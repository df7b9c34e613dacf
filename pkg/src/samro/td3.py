"""Twin-delayed deep deterministic policy gradient agent.

All actions inside the agent live in the normalized box [-1, 1]^d and all
states are expected to be pre-scaled; :mod:`samro.transfer` does the
conversion. The estimator follows scikit-learn conventions: constructor
arguments are hyperparameters only and networks are created on first fit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .nn import Adam, Mlp, load_arrays, save_arrays, soft_update

ROLES = ("actor", "actor_target", "critic1", "critic1_target", "critic2", "critic2_target")


@dataclass
class Batch:
    """A minibatch in network units (scaled states, normalized actions)."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __len__(self):
        return len(self.rewards)


class Td3Agent(BaseEstimator):
    """Actor, twin critics and their slowly tracking targets.

    Parameters
    ----------
    gamma : float
        Discount factor.
    tau : float
        Soft target update rate.
    target_noise, noise_clip, explore_noise : float
        Target smoothing noise std, its clip, and exploration noise std,
        all in normalized action units.
    actor_period : int
        Critic updates per actor (and target) update.
    clip_norm : float or None
        Global gradient-norm clip applied before every Adam step.
    """

    def __init__(self, gamma=0.1, tau=0.005, actor_lr=1e-3, critic_lr=2e-3, batch_size=64,
                 target_noise=0.2, noise_clip=0.5, explore_noise=0.1, actor_period=3,
                 actor_hidden=(128, 64, 32), critic_hidden=(64, 16, 4), clip_norm=10.0,
                 random_state=0):
        self.gamma = gamma
        self.tau = tau
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.batch_size = batch_size
        self.target_noise = target_noise
        self.noise_clip = noise_clip
        self.explore_noise = explore_noise
        self.actor_period = actor_period
        self.actor_hidden = actor_hidden
        self.critic_hidden = critic_hidden
        self.clip_norm = clip_norm
        self.random_state = random_state

    # -- construction ----------------------------------------------------
    def _validate_params(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 1 or self.actor_period < 1:
            raise ValueError("batch_size and actor_period must be >= 1")

    def initialize(self, state_dim, action_dim):
        """Create fresh networks and optimizers (seeded by ``random_state``)."""
        self._validate_params()
        ss = np.random.SeedSequence(self.random_state)
        seeds = ss.spawn(4)
        self.state_dim_, self.action_dim_ = int(state_dim), int(action_dim)
        self.actor_ = Mlp([state_dim, *self.actor_hidden, action_dim], "relu", "tanh",
                          seed=np.random.default_rng(seeds[0]))
        crit = [state_dim + action_dim, *self.critic_hidden, 1]
        self.critic1_ = Mlp(crit, "relu", "linear", seed=np.random.default_rng(seeds[1]))
        self.critic2_ = Mlp(crit, "relu", "linear", seed=np.random.default_rng(seeds[2]))
        self.actor_target_ = self.actor_.copy()
        self.critic1_target_ = self.critic1_.copy()
        self.critic2_target_ = self.critic2_.copy()
        self._make_optimizers()
        self.rng_ = np.random.default_rng(seeds[3])
        self.n_critic_updates_ = 0
        self.n_actor_updates_ = 0
        return self

    def _make_optimizers(self):
        self.actor_opt_ = Adam(self.actor_.params(), self.actor_lr, clip=self.clip_norm)
        self.critic1_opt_ = Adam(self.critic1_.params(), self.critic_lr, clip=self.clip_norm)
        self.critic2_opt_ = Adam(self.critic2_.params(), self.critic_lr, clip=self.clip_norm)

    def networks(self):
        check_is_fitted(self, "actor_")
        return {r: getattr(self, r + "_") for r in ROLES}

    # -- acting ----------------------------------------------------------
    def predict(self, states):
        """Deterministic actor output in the normalized action box."""
        check_is_fitted(self, "actor_")
        x = np.asarray(states, float)
        return self.actor_.forward(x)

    def select_action(self, state, rng=None, sigma=None):
        """Actor output plus Gaussian exploration noise, clipped to the box."""
        rng = self.rng_ if rng is None else rng
        sigma = self.explore_noise if sigma is None else sigma
        a = self.predict(state)
        if sigma > 0:
            a = a + rng.normal(0.0, sigma, a.shape)
        return np.clip(a, -1.0, 1.0)

    def target_action(self, next_states, rng=None, sigma=None, clip=None):
        rng = self.rng_ if rng is None else rng
        sigma = self.target_noise if sigma is None else sigma
        clip = self.noise_clip if clip is None else clip
        a = self.actor_target_.forward(np.atleast_2d(next_states))
        noise = rng.normal(0.0, sigma, a.shape) if sigma > 0 else np.zeros_like(a)
        return np.clip(a + np.clip(noise, -clip, clip), -1.0, 1.0)

    def q_values(self, states, actions, which=1):
        """Critic estimate for (state, normalized action) rows."""
        net = self.critic1_ if which == 1 else self.critic2_
        s = np.atleast_2d(states)
        a = np.atleast_2d(actions)
        if len(s) == 1 and len(a) > 1:
            s = np.repeat(s, len(a), axis=0)
        return net.forward(np.hstack([s, a]))[:, 0]

    # -- learning --------------------------------------------------------
    def critic_targets(self, batch: Batch, rewards=None):
        r = batch.rewards if rewards is None else np.asarray(rewards, float)
        if self.gamma == 0.0:
            return r.copy()
        a2 = self.target_action(batch.next_states)
        x2 = np.hstack([batch.next_states, a2])
        q_next = np.minimum(self.critic1_target_.forward(x2)[:, 0],
                            self.critic2_target_.forward(x2)[:, 0])
        return r + self.gamma * q_next

    def critic_update(self, batch: Batch, rewards=None):
        """One TD step on both critics; returns (loss1, loss2)."""
        if len(batch) == 0:
            raise ValueError("empty minibatch")
        y = self.critic_targets(batch, rewards)
        x = np.hstack([batch.states, batch.actions])
        losses = []
        for net, opt in ((self.critic1_, self.critic1_opt_), (self.critic2_, self.critic2_opt_)):
            out, cache = net.forward_cache(x)
            err = out[:, 0] - y
            grads = net.backward(cache, (2.0 / len(y)) * err[:, None])
            opt.step(grads)
            losses.append(float(np.mean(err ** 2)))
        self.n_critic_updates_ += 1
        return tuple(losses)

    def actor_update(self, batch: Batch, action_penalty=None):
        """Deterministic policy-gradient step through critic 1; returns the actor loss.

        ``action_penalty(states, actions)`` may return ``(penalty, grad)``
        for the actor's own actions; the step then ascends Q minus that
        penalty. The returned loss is the negative mean Q either way.
        """
        s = batch.states
        a, acache = self.actor_.forward_cache(s)
        q, ccache = self.critic1_.forward_cache(np.hstack([s, a]))
        n = len(s)
        _, g_in = self.critic1_.backward(ccache, np.full((n, 1), -1.0 / n), need_input=True)
        g_a = g_in[:, self.state_dim_:]
        if action_penalty is not None:
            _, g_pen = action_penalty(s, a)
            g_a = g_a + g_pen / n
        grads = self.actor_.backward(acache, g_a)
        self.actor_opt_.step(grads)
        self.n_actor_updates_ += 1
        return -float(np.mean(q))

    def soft_update(self, tau=None):
        tau = self.tau if tau is None else tau
        soft_update(self.actor_target_, self.actor_, tau)
        soft_update(self.critic1_target_, self.critic1_, tau)
        soft_update(self.critic2_target_, self.critic2_, tau)

    def train_step(self, batch: Batch, rewards=None, action_penalty=None):
        """Critic update, plus actor and target updates every ``actor_period`` calls.

        Returns a dict with ``critic_loss`` and, when the actor moved,
        ``actor_loss`` (the negative mean Q estimate of the actor's actions).
        """
        l1, l2 = self.critic_update(batch, rewards)
        out = dict(critic_loss=0.5 * (l1 + l2), actor_loss=None)
        if self.n_critic_updates_ % self.actor_period == 0:
            out["actor_loss"] = self.actor_update(batch, action_penalty)
            self.soft_update()
        return out

    def fit(self, states, actions, rewards, next_states, n_batches=1000, reward_fn=None):
        """Offline training on fixed arrays (network units), sampling with replacement.

        ``reward_fn(states, actions, rewards)`` may replace the rewards of
        each minibatch (e.g. by an energy-regularized version).
        """
        S = check_array(states)
        A = check_array(actions)
        R = np.asarray(rewards, float).reshape(-1)
        S2 = check_array(next_states)
        if not (len(S) == len(A) == len(R) == len(S2)) or len(S) == 0:
            raise ValueError("offline arrays must be non-empty and aligned")
        if not hasattr(self, "actor_"):
            self.initialize(S.shape[1], A.shape[1])
        self.history_ = []
        for _ in range(int(n_batches)):
            idx = self.rng_.integers(0, len(S), self.batch_size)
            batch = Batch(S[idx], A[idx], R[idx], S2[idx])
            r = None if reward_fn is None else reward_fn(batch.states, batch.actions, batch.rewards)
            self.history_.append(self.train_step(batch, r))
        return self

    # -- persistence -----------------------------------------------------
    def save(self, directory):
        """Write the six networks, optimizer states and a role manifest."""
        check_is_fitted(self, "actor_")
        os.makedirs(directory, exist_ok=True)
        lines = [f"params {json.dumps(self.get_params(), sort_keys=True, default=list)}",
                 f"counters {self.n_critic_updates_} {self.n_actor_updates_}",
                 f"rng {json.dumps(self.rng_.bit_generator.state, sort_keys=True)}"]
        for role, net in self.networks().items():
            net.save(os.path.join(directory, f"{role}.bin"))
            lines.append(f"{role} {role}.bin")
        for name in ("actor", "critic1", "critic2"):
            opt = getattr(self, f"{name}_opt_")
            save_arrays(os.path.join(directory, f"{name}_adam.bin"),
                        dict(kind="adam", t=opt.t), opt.state_arrays())
            lines.append(f"{name}_adam {name}_adam.bin")
        with open(os.path.join(directory, "manifest.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, directory):
        path = os.path.join(directory, "manifest.txt")
        if not os.path.exists(path):
            raise FileNotFoundError(f"no agent checkpoint in {directory}")
        entries = {}
        with open(path) as fh:
            for line in fh:
                key, _, val = line.strip().partition(" ")
                entries[key] = val
        params = json.loads(entries["params"])
        for k in ("actor_hidden", "critic_hidden"):
            params[k] = tuple(params[k])
        agent = cls(**params)
        actor = Mlp.load(os.path.join(directory, entries["actor"]))
        agent.initialize(actor.in_dim, actor.out_dim)
        for role in ROLES:
            setattr(agent, role + "_", Mlp.load(os.path.join(directory, entries[role])))
        agent._make_optimizers()
        for name in ("actor", "critic1", "critic2"):
            head, arrays = load_arrays(os.path.join(directory, entries[f"{name}_adam"]))
            getattr(agent, f"{name}_opt_").load_state(head["t"], arrays)
        agent.n_critic_updates_, agent.n_actor_updates_ = map(int, entries["counters"].split())
        if "rng" in entries:  # resume the minibatch and noise stream where it stopped
            agent.rng_.bit_generator.state = json.loads(entries["rng"])
        return agent
