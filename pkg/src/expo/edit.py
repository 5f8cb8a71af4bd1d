"""Squashed Gaussian policies: the action-edit policy and a plain SAC actor."""

from __future__ import annotations

import numpy as np

from expo.errors import ConfigurationError, UsageError
from expo.nn import Adam, Mlp, Tensor
from expo.nn import autograd as ag

LOG_STD_MIN, LOG_STD_MAX = -10.0, 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _log1m_tanh_sq(u):
    """log(1 - tanh(u)^2) computed as 2 (log 2 - u - softplus(-2u))."""
    return 2.0 * (np.log(2.0) - u - ag.softplus(-2.0 * u))


def _log1m_tanh_sq_np(u):
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


class SquashedGaussianPolicy:
    """Diagonal Gaussian over u, emitted as ``scale * tanh(u)``.

    With ``condition_on_action`` the network input is (state, base action);
    otherwise it is the state alone.  Entropy temperature is learned through
    ``log_alpha`` against ``target_entropy``.  The default is minus the action
    dim for the unit-scale squashed variable, which in emitted-edit units is
    ``d (log scale - 1)``: a plain ``-d`` exceeds the largest entropy
    ``d log(2 scale)`` a box of half-width ``scale`` allows once scale < 0.18,
    and alpha would then grow without bound.
    """

    def __init__(self, state_dim, action_dim, scale, hidden=256, n_hidden=3,
                 condition_on_action=True, dropout=0.0, init_alpha=1.0,
                 target_entropy=None, lr=3e-4, alpha_lr=3e-4, rng=None):
        if scale < 0:
            raise ConfigurationError("edit scale beta must be non-negative")
        if init_alpha <= 0:
            raise ConfigurationError("initial alpha must be positive")
        rng = np.random.default_rng(0) if rng is None else rng
        self.state_dim, self.action_dim = int(state_dim), int(action_dim)
        self.scale = float(scale)
        self.condition_on_action = condition_on_action
        in_dim = state_dim + (action_dim if condition_on_action else 0)
        widths = [in_dim] + [hidden] * n_hidden + [2 * action_dim]
        self.net = Mlp(widths, rng=rng, final_scale=1e-2, dropout=dropout)
        if target_entropy is None:
            target_entropy = action_dim * (np.log(scale) - 1.0) if scale > 0 else -float(action_dim)
        self.target_entropy = float(target_entropy)
        self.log_alpha = Tensor(np.array(np.log(init_alpha)), requires_grad=True)
        self.optimizer = Adam(self.net.params, lr=lr)
        self.alpha_optimizer = Adam([self.log_alpha], lr=alpha_lr)

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha.data))

    @property
    def enabled(self):
        return self.scale > 0.0

    def _inputs(self, states, actions):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if not self.condition_on_action:
            return states
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        return np.concatenate([states, actions], axis=1)

    def sample(self, states, actions, rng):
        """Sample without gradients; returns ``(emitted, log_prob)`` with leading batch axis."""
        inp = self._inputs(states, actions)
        B, d = len(inp), self.action_dim
        if not self.enabled:
            return np.zeros((B, d)), np.zeros(B)
        out = self.net.apply(inp)
        mean = out[:, :d]
        log_std = np.clip(out[:, d:], LOG_STD_MIN, LOG_STD_MAX)
        xi = rng.standard_normal((B, d))
        u = mean + np.exp(log_std) * xi
        emitted = self.scale * np.tanh(u)
        log_prob = (-0.5 * xi**2 - log_std - _HALF_LOG_2PI - np.log(self.scale)
                    - _log1m_tanh_sq_np(u)).sum(axis=1)
        return emitted, log_prob

    def rsample(self, states, actions, rng, dropout_rng=None):
        """Reparameterised sample as Tensors: ``(emitted, log_prob)``.

        Draw order from ``rng``: dropout masks come from ``dropout_rng``, then
        standard-normal noise (B, d) from ``rng``.
        """
        if not self.enabled:
            raise UsageError("rsample with beta = 0 has no density")
        inp = self._inputs(states, actions)
        B, d = len(inp), self.action_dim
        out = self.net(inp, rng=dropout_rng)
        mean = out[:, :d]
        log_std = ag.clip(out[:, d:], LOG_STD_MIN, LOG_STD_MAX)
        xi = rng.standard_normal((B, d))
        u = mean + ag.exp(log_std) * xi
        emitted = self.scale * ag.tanh(u)
        log_prob = (-0.5 * xi**2 - log_std - _HALF_LOG_2PI - np.log(self.scale)
                    - _log1m_tanh_sq(u)).sum(axis=1)
        return emitted, log_prob

    def alpha_objective(self, log_probs):
        """E[-alpha (log pi + H_target)] as a Tensor in ``log_alpha``."""
        lp = np.asarray(log_probs, dtype=np.float64)
        return -(ag.exp(self.log_alpha) * float(np.mean(lp + self.target_entropy)))

    def alpha_update(self, log_probs):
        obj = self.alpha_objective(log_probs)
        self.alpha_optimizer.zero_grad()
        obj.backward()
        self.alpha_optimizer.step()
        return self.alpha


class EditPolicy(SquashedGaussianPolicy):
    """Gaussian edit policy over bounded additive corrections |edit_j| <= beta."""

    def __init__(self, state_dim, action_dim, beta, **kwargs):
        kwargs.setdefault("condition_on_action", True)
        super().__init__(state_dim, action_dim, beta, **kwargs)

    @property
    def beta(self):
        return self.scale

    def sample_edit(self, states, base_actions, rng):
        """Returns ``(edits, log_probs, edited_actions)``; edited = clip(a + edit, -1, 1)."""
        base = np.atleast_2d(np.asarray(base_actions, dtype=np.float64))
        edits, log_probs = self.sample(states, base, rng)
        return edits, log_probs, np.clip(base + edits, -1.0, 1.0)

    def edit_loss(self, critic, states, actions, rng, dropout=True):
        """-E[Q(s, clip(a + edit)) - alpha log pi(edit | s, a)]; returns ``(loss, log_probs)``.

        Critic weights and the base action are constants; gradients reach the
        edit network through the reparameterised edit only.
        """
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if len(actions) == 0:
            raise UsageError("edit_loss on an empty batch")
        edits, log_prob = self.rsample(states, actions, rng, rng if dropout else None)
        edited = ag.clip(Tensor(actions) + edits, -1.0, 1.0)
        q = critic.q_mean_tensor(states, edited)
        loss = (self.alpha * log_prob - q).mean()
        return loss, log_prob.data

    def update(self, critic, states, actions, rng):
        """One actor step then one temperature step; returns a metrics dict."""
        if not self.enabled:
            return {"edit_loss": 0.0, "alpha": self.alpha}
        loss, log_probs = self.edit_loss(critic, states, actions, rng)
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        alpha = self.alpha_update(log_probs)
        return {"edit_loss": loss.item(), "alpha": alpha}


class GaussianActor(SquashedGaussianPolicy):
    """State-only tanh Gaussian over the full action box, for the SAC-style ablation."""

    def __init__(self, state_dim, action_dim, **kwargs):
        kwargs["condition_on_action"] = False
        super().__init__(state_dim, action_dim, 1.0, **kwargs)

    def act(self, states, rng):
        actions, log_probs = self.sample(states, None, rng)
        return actions, log_probs

    def actor_loss(self, critic, states, rng):
        actions, log_prob = self.rsample(states, None, rng, rng)
        q = critic.q_mean_tensor(states, actions)
        return (self.alpha * log_prob - q).mean(), log_prob.data

    def update(self, critic, states, rng):
        loss, log_probs = self.actor_loss(critic, states, rng)
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        alpha = self.alpha_update(log_probs)
        return {"edit_loss": loss.item(), "alpha": alpha}
