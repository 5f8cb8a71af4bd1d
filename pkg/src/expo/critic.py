"""Q-ensemble with Polyak-averaged targets and randomized-subset min backups."""

from __future__ import annotations

import numpy as np

from expo.errors import ConfigurationError, UsageError
from expo.nn import Adam, Mlp, Tensor, polyak_update_
from expo.nn import autograd as ag


class CriticEnsemble:
    def __init__(self, state_dim, action_dim, K=10, M=2, hidden=256, n_hidden=2,
                 gamma=0.99, tau=0.005, lr=3e-4, rng=None):
        if K < 1:
            raise ConfigurationError("ensemble size K must be >= 1")
        if not 1 <= M <= K:
            raise ConfigurationError(f"subset size M={M} must satisfy 1 <= M <= K={K}")
        if not 0.0 <= gamma <= 1.0:
            raise ConfigurationError("gamma must lie in [0, 1]")
        if not 0.0 < tau <= 1.0:
            raise ConfigurationError("tau must lie in (0, 1]")
        rng = np.random.default_rng(0) if rng is None else rng
        self.state_dim, self.action_dim = int(state_dim), int(action_dim)
        self.K, self.M = int(K), int(M)
        self.gamma, self.tau = float(gamma), float(tau)
        widths = [state_dim + action_dim] + [hidden] * n_hidden + [1]
        self.net = Mlp(widths, rng=rng, ensemble=self.K, final_scale=1e-2)
        self.target_params = self.net.copy_arrays()
        self.optimizer = Adam(self.net.params, lr=lr)

    def _inputs(self, states, actions):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if states.shape[1] != self.state_dim or actions.shape[1] != self.action_dim:
            raise ConfigurationError("state/action dimensions do not match the critic")
        return np.concatenate([states, actions], axis=1)

    def q_all(self, states, actions, target=False):
        """Per-member values, shape (K, B)."""
        params = self.target_params if target else None
        return self.net.apply(self._inputs(states, actions), params)[..., 0]

    def q_mean(self, states, actions, target=False):
        return self.q_all(states, actions, target).mean(axis=0)

    def q_mean_tensor(self, states, actions):
        """Ensemble-mean online Q, differentiable in ``actions`` only."""
        states = Tensor(np.atleast_2d(np.asarray(states, dtype=np.float64)))
        q = self.net(ag.concat([states, ag.as_tensor(actions)], axis=1), frozen=True)
        return q.mean(axis=0)[:, 0]

    def target_value(self, states, actions, rng):
        """Min over a random size-M subset of target members, shape (B,)."""
        members = rng.choice(self.K, size=self.M, replace=False)
        q = self.q_all(states, actions, target=True)
        return q[members].min(axis=0)

    def td_targets(self, rewards, dones, next_states, next_actions, rng):
        """y = r + gamma (1 - done) Q'(s', a'); constants for the regression."""
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
        dones = np.asarray(dones, dtype=np.float64).reshape(-1)
        bootstrap = self.target_value(next_states, next_actions, rng)
        return rewards + self.gamma * (1.0 - dones) * bootstrap

    def regression_loss(self, states, actions, y):
        """Mean over batch and members of (y - Q_k(s, a))^2 as a Tensor."""
        if len(np.atleast_1d(y)) == 0:
            raise UsageError("td_loss on an empty batch")
        q = self.net(self._inputs(states, actions))[..., 0]
        return ag.square(q - np.asarray(y, dtype=np.float64)[None, :]).mean()

    def td_loss(self, batch, next_actions, rng):
        """Returns ``(loss, y)`` for a batch with fields s, a, r, s2, done."""
        if len(batch.r) == 0:
            raise UsageError("td_loss on an empty batch")
        y = self.td_targets(batch.r, batch.done, batch.s2, next_actions, rng)
        return self.regression_loss(batch.s, batch.a, y), y

    def update(self, batch, next_actions, rng):
        """One Adam step on the TD loss followed by a target update."""
        loss, y = self.td_loss(batch, next_actions, rng)
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.update_targets()
        return loss.item(), y

    def update_targets(self):
        polyak_update_(self.target_params, self.net.param_arrays(), self.tau)
