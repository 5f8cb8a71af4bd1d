"""The training loop: base diffusion policy, edit policy, Q-ensemble and OTF selection."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np

from expo import otf
from expo.critic import CriticEnsemble
from expo.diffusion import DiffusionPolicy
from expo.edit import EditPolicy, GaussianActor
from expo.errors import ConfigurationError, UsageError
from expo.otf import OtfConfig
from expo.replay import ReplayBuffer, Transition

log = logging.getLogger(__name__)


# variants whose candidate sets contain edited actions (sample_backup only changes the backup)
EDITING = ("full", "sample_backup")


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, states, min_std=1e-3):
        states = np.asarray(states, dtype=np.float64)
        return cls(states.mean(axis=0), np.maximum(states.std(axis=0), min_std))

    def __call__(self, s):
        return (np.asarray(s, dtype=np.float64) - self.mean) / self.std


class ExpoAgent:
    """All learnable parts plus the replay buffer for one run.

    ``variant`` selects the ablation: ``full`` (EXPO), ``no_edit`` (OTF over
    base samples only), ``sample_backup`` (single base sample in the TD
    target) or ``gaussian_sac`` (tanh-Gaussian actor, no base policy use).
    """

    def __init__(self, cfg, state_dim, action_dim, seed=None):
        self.cfg = cfg
        seed = cfg.run.seed if seed is None else seed
        self.state_dim, self.action_dim = int(state_dim), int(action_dim)
        self.variant = cfg.run.variant
        self.mode = cfg.run.mode
        a, d, e, c, o = cfg.agent, cfg.diffusion, cfg.edit, cfg.critic, cfg.otf
        if a.utd < 1:
            raise ConfigurationError("UTD ratio G must be >= 1")
        init_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        self.base = DiffusionPolicy(state_dim, action_dim, hidden=d.hidden, n_blocks=d.blocks, T=d.T,
                                    beta_min=d.beta_min, beta_max=d.beta_max, lr=a.lr, rng=init_rng)
        kwargs = dict(hidden=e.hidden, n_hidden=e.layers, dropout=e.dropout, init_alpha=e.init_alpha,
                      target_entropy=cfg.target_entropy(), lr=a.lr, alpha_lr=e.alpha_lr,
                      rng=init_rng)
        if self.variant == "gaussian_sac":
            self.actor = GaussianActor(state_dim, action_dim, **kwargs)
            self.edit = None
        else:
            self.actor = None
            self.edit = EditPolicy(state_dim, action_dim, e.beta, **kwargs)
        self.critic = CriticEnsemble(state_dim, action_dim, K=c.K, M=c.M, hidden=c.hidden,
                                     n_hidden=c.layers, gamma=c.gamma, tau=c.tau, lr=a.lr, rng=init_rng)
        self.otf_cfg = OtfConfig(N=o.N, q_source=o.q_source, include_edits=self.variant in EDITING)
        self.buffer = ReplayBuffer(state_dim, action_dim, a.capacity, a.symmetric_sampling)
        self.G = a.utd
        self.batch_size = a.batch_size
        self.norm = Normalizer.identity(state_dim)
        self.env_steps = 0
        self.updates = 0
        self._obs = None
        self.reset_stats()

    # ------------------------------------------------------------------ data

    def set_normalizer(self, states):
        if self.cfg.agent.normalize_obs and len(states):
            self.norm = Normalizer.fit(states)

    def seed_buffer(self, dataset):
        self.buffer.seed(dataset)
        if dataset:
            self.set_normalizer([t.s for t in dataset])

    # --------------------------------------------------------------- acting

    def act(self, obs, rng, q_source=None):
        """Behaviour action(s) for raw observation(s); returns (actions (B, d), info)."""
        s = self.norm(np.atleast_2d(obs))
        if self.variant == "gaussian_sac":
            actions, _ = self.actor.act(s, rng)
            return actions, {}
        q_source = q_source or self.otf_cfg.q_source
        actions, cands, idx = otf.act(s, self.base, self.edit, self.critic, self.otf_cfg, rng, q_source)
        return actions, {"index": idx, "edited": cands.edited[idx]}

    def act_eval(self, obs, rng):
        s = self.norm(np.atleast_2d(obs))
        if self.variant == "gaussian_sac":
            out = self.actor.net.apply(s)
            return np.tanh(out[:, : self.action_dim])
        return self.act(obs, rng)[0]

    def backup_actions(self, next_states, rng):
        """Actions a*' used in the TD target, chosen with target-critic values."""
        if self.variant == "sample_backup":
            return self.base.sample_batch(next_states, 1, rng)[:, 0], None
        cands = otf.propose(self.base, self.edit, self.critic, next_states, self.otf_cfg, rng,
                            q_source="target_mean")
        actions, idx, q = otf.select(cands)
        return actions, (idx, q, cands.edited[idx])

    # -------------------------------------------------------------- updates

    def reset_stats(self):
        self._stats = {"q_sum": 0.0, "q_n": 0, "edit_wins": 0, "backups": 0}

    def stats(self):
        st = self._stats
        return {
            "mean_q": st["q_sum"] / st["q_n"] if st["q_n"] else 0.0,
            "edited_win_frac": st["edit_wins"] / st["backups"] if st["backups"] else 0.0,
            "alpha": (self.actor or self.edit).alpha,
        }

    def critic_update(self, batch, rng):
        s, s2 = self.norm(batch.s), self.norm(batch.s2)
        normed = type(batch)(s, batch.a, batch.r, s2, batch.done)
        if self.variant == "gaussian_sac":
            a2, logp2 = self.actor.act(s2, rng)
            bonus = -self.actor.alpha * logp2
            boot = self.critic.target_value(s2, a2, rng) + bonus
            y = batch.r + self.critic.gamma * (1.0 - batch.done) * boot
            loss = self.critic.regression_loss(s, batch.a, y)
            self.critic.optimizer.zero_grad()
            loss.backward()
            self.critic.optimizer.step()
            self.critic.update_targets()
            self._stats["q_sum"] += float(np.sum(boot))
            self._stats["q_n"] += len(boot)
            return loss.item()
        a2, info = self.backup_actions(s2, rng)
        loss, _ = self.critic.update(normed, a2, rng)
        if info is not None:
            idx, q, edited = info
            self._stats["q_sum"] += float(np.sum(q))
            self._stats["q_n"] += len(q)
            self._stats["edit_wins"] += int(np.sum(edited))
            self._stats["backups"] += len(q)
        return loss

    def update(self, rng):
        """G critic updates then one base and one edit update on the last mini-batch."""
        if len(self.buffer) == 0:
            raise UsageError("update() needs a non-empty buffer")
        batch = None
        critic_losses = []
        for _ in range(self.G):
            batch = self.buffer.sample(self.batch_size, rng)
            critic_losses.append(self.critic_update(batch, rng))
        s = self.norm(batch.s)
        out = {"critic_loss": float(np.mean(critic_losses))}
        if self.variant == "gaussian_sac":
            out.update(self.actor.update(self.critic, s, rng))
        else:
            out["bc_loss"] = self.base.update(s, batch.a, rng)
            if self.variant in EDITING:
                out.update(self.edit.update(self.critic, s, batch.a, rng))
        self.updates += 1
        return out

    def train_step(self, env, rng):
        """One environment step followed by the update block."""
        if self._obs is None:
            self._obs = env.reset(rng)
        action, info = self.act(self._obs, rng)
        action = action[0]
        obs2, r, done = env.step(action)
        self.buffer.push(Transition(self._obs, action, r, obs2, env.terminal))
        self._obs = None if done else obs2
        self.env_steps += 1
        metrics = self.update(rng)
        metrics["reward"] = r
        return metrics

    def pretrain(self, dataset, steps, rng):
        """Imitation-only pretraining of the base policy; critic and edit stay untouched."""
        if self.mode != "offline_to_online":
            raise UsageError("pretrain() is only used in offline_to_online mode")
        if not dataset:
            raise ConfigurationError("pretraining needs a dataset")
        s = self.norm(np.stack([t.s for t in dataset]))
        a = np.stack([t.a for t in dataset]).astype(np.float64)
        losses = []
        for _ in range(steps):
            idx = rng.integers(0, len(s), size=self.batch_size)
            losses.append(self.base.update(s[idx], a[idx], rng))
        return losses

    def warm_start(self, env, n_transitions, rng):
        """Fill an empty buffer with rollouts of the current policy."""
        if len(self.buffer):
            raise UsageError("warm_start() needs an empty buffer")
        obs = env.reset(rng)
        collected = []
        while len(collected) < n_transitions:
            action = self.act(obs, rng)[0][0]
            obs2, r, done = env.step(action)
            collected.append(Transition(obs, action, r, obs2, env.terminal))
            obs = env.reset(rng) if done else obs2
        for t in collected:
            self.buffer.push(t)
        return collected


def evaluate(agent, env, n_episodes, rng, policy=None):
    """Mean episode score over ``n_episodes`` parallel copies of ``env``.

    Episodes are reset from independent substreams of ``rng`` and stepped in
    lock-step so the agent acts on a batch of observations.  ``policy`` maps
    (obs batch, rng) -> actions; it defaults to the agent's evaluation policy.
    """
    if n_episodes < 1:
        raise ConfigurationError("n_episodes must be >= 1")
    if policy is None:
        policy = agent.act_eval
    seeds = rng.integers(0, 2**63 - 1, size=n_episodes)
    envs = [copy.deepcopy(env) for _ in range(n_episodes)]
    obs = np.stack([e.reset(np.random.default_rng(int(sd))) for e, sd in zip(envs, seeds)])
    rewards = [[] for _ in envs]
    active = np.ones(n_episodes, bool)
    while active.any():
        live = np.flatnonzero(active)
        actions = policy(obs[live], rng)
        for j, i in enumerate(live):
            o, r, done = envs[i].step(actions[j])
            obs[i] = o
            rewards[i].append(r)
            if done:
                active[i] = False
    return float(np.mean([env.episode_score(r) for r in rewards]))


def demonstrator_policy(demonstrator):
    """Batch wrapper so a scripted demonstrator can be scored by ``evaluate``."""
    def policy(obs, rng):
        return np.stack([demonstrator.act(o, rng) for o in obs])
    return policy


def bc_policy(agent):
    """Pure base-policy sampling (no critic), for behaviour-cloning scores."""
    def policy(obs, rng):
        return agent.base.sample_batch(agent.norm(obs), 1, rng)[:, 0]
    return policy
