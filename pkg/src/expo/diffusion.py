"""DDPM base policy: a state-conditioned noise predictor with a VP schedule."""

from __future__ import annotations

import numpy as np

from expo.errors import ConfigurationError, UsageError
from expo.nn import Adam, ResidualMlp
from expo.nn import autograd as ag

TIME_EMBED_DIM = 16


class VpSchedule:
    """Discretised variance-preserving schedule.

    ``alpha_bar[t-1]`` is the cumulative signal fraction after t noising steps,
    ``alpha_bar_t = exp(-b_min t/T - (b_max - b_min) (t/T)^2 / 2)``.
    """

    def __init__(self, T=10, beta_min=0.1, beta_max=10.0):
        if T < 1:
            raise ConfigurationError("T must be a positive integer")
        if not 0.0 < beta_min < beta_max:
            raise ConfigurationError("need 0 < beta_min < beta_max")
        self.T = int(T)
        self.beta_min = float(beta_min)
        self.beta_max = float(beta_max)
        u = np.arange(1, self.T + 1) / self.T
        self.alpha_bar = np.exp(-self.beta_min * u - 0.5 * (self.beta_max - self.beta_min) * u**2)
        prev = np.concatenate([[1.0], self.alpha_bar[:-1]])
        self.alphas = self.alpha_bar / prev
        self.betas = 1.0 - self.alphas
        self.sigmas = np.sqrt(self.betas)


def time_embedding(t, dim=TIME_EMBED_DIM):
    """Sinusoidal embedding of integer timesteps; returns shape (len(t), dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class DiffusionPolicy:
    def __init__(self, state_dim, action_dim, hidden=256, n_blocks=3, T=10,
                 beta_min=0.1, beta_max=10.0, lr=3e-4, rng=None):
        if state_dim <= 0 or action_dim <= 0:
            raise ConfigurationError("state_dim and action_dim must be positive")
        rng = np.random.default_rng(0) if rng is None else rng
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.schedule = VpSchedule(T, beta_min, beta_max)
        self.noise_net = ResidualMlp(action_dim + state_dim + TIME_EMBED_DIM, hidden, n_blocks,
                                     action_dim, rng=rng)
        self._embed = time_embedding(np.arange(1, T + 1))
        self.optimizer = Adam(self.noise_net.params, lr=lr)

    @property
    def T(self):
        return self.schedule.T

    def _inputs(self, noisy, states, t):
        return np.concatenate([noisy, states, self._embed[np.asarray(t) - 1]], axis=1)

    def ddpm_loss(self, states, actions, rng):
        """Mean over the batch of ||eps - eps_psi(sqrt(ab_t) a + sqrt(1-ab_t) eps, s, t)||^2.

        Draw order from ``rng``: timesteps (B,), then noise (B, d).
        """
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        if len(actions) == 0:
            raise UsageError("ddpm_loss on an empty batch")
        if states.shape[-1] != self.state_dim or actions.shape[-1] != self.action_dim:
            raise ConfigurationError("batch dimensions do not match the policy")
        B = len(actions)
        t = rng.integers(1, self.T + 1, size=B)
        eps = rng.standard_normal((B, self.action_dim))
        ab = self.schedule.alpha_bar[t - 1][:, None]
        noisy = np.sqrt(ab) * actions + np.sqrt(1.0 - ab) * eps
        pred = self.noise_net(self._inputs(noisy, states, t))
        return ag.square(pred - eps).sum(axis=1).mean()

    def update(self, states, actions, rng):
        """One Adam step on the imitation loss; returns the loss value."""
        loss = self.ddpm_loss(states, actions, rng)
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return loss.item()

    def sample_batch(self, states, n, rng):
        """Draw ``n`` actions for each state; returns shape (B, n, action_dim).

        ``states`` may be a single state vector, in which case B = 1.
        """
        if n < 1:
            raise UsageError("n must be at least 1")
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if states.shape[1] != self.state_dim:
            raise ConfigurationError(f"state dimension {states.shape[1]} != {self.state_dim}")
        B = len(states)
        rep = np.repeat(states, n, axis=0)
        sched = self.schedule
        a = rng.standard_normal((B * n, self.action_dim))
        for t in range(self.T, 0, -1):
            inp = np.concatenate([a, rep, np.broadcast_to(self._embed[t - 1], (B * n, TIME_EMBED_DIM))],
                                 axis=1)
            eps = self.noise_net.apply(inp)
            a = (a - sched.betas[t - 1] / np.sqrt(1.0 - sched.alpha_bar[t - 1]) * eps) / np.sqrt(
                sched.alphas[t - 1])
            if t > 1:
                a = a + sched.sigmas[t - 1] * rng.standard_normal(a.shape)
        return np.clip(a, -1.0, 1.0).reshape(B, n, self.action_dim)

    def sample(self, state, rng):
        state = np.asarray(state, dtype=np.float64)
        if state.ndim != 1:
            raise ConfigurationError("sample() takes a single state vector")
        return self.sample_batch(state, 1, rng)[0, 0]
