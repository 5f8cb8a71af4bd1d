"""Small learning problems with known answers, shared by unit and acceptance tests."""

import numpy as np

from expo.diffusion import DiffusionPolicy
from expo.edit import EditPolicy
from expo.nn import autograd as ag


class LinearCritic:
    def __init__(self, w):
        self.w = np.asarray(w, dtype=np.float64)

    def q_mean_tensor(self, states, actions):
        return ag.as_tensor(actions) @ self.w


class QuadraticCritic:
    """Q(s, a) = -(a - peak)^2 for 1-D actions, independent of s."""

    def __init__(self, peak=0.5):
        self.peak = peak

    def q_mean_tensor(self, states, actions):
        return -ag.square(ag.as_tensor(actions)[:, 0] - self.peak)

    def q_mean(self, states, actions, target=False):
        return -(np.asarray(actions)[:, 0] - self.peak) ** 2


def fit_edit_to_quadratic(beta, steps=5000, seed=0, batch=64, lr=3e-3):
    """Train a 1-D edit policy at base action 0 with alpha = 0; returns the mean emitted edit."""
    rng = np.random.default_rng(seed)
    pol = EditPolicy(2, 1, beta, hidden=32, n_hidden=2, lr=lr, rng=rng)
    pol.log_alpha.data[...] = -np.inf
    critic = QuadraticCritic(0.5)
    base = np.zeros((batch, 1))
    for _ in range(steps):
        loss, _ = pol.edit_loss(critic, rng.standard_normal((batch, 2)), base, rng)
        pol.optimizer.zero_grad()
        loss.backward()
        pol.optimizer.step()
    edits, _, _ = pol.sample_edit(rng.standard_normal((2000, 2)), np.zeros((2000, 1)), rng)
    return float(edits.mean())


def fit_bimodal(steps=20_000, seed=0, batch=256, hidden=64, lr=1e-3):
    """Train a diffusion policy on actions {-0.8, +0.8} with equal mass; returns 1000 samples."""
    rng = np.random.default_rng(seed)
    pol = DiffusionPolicy(1, 1, hidden=hidden, n_blocks=2, lr=lr, rng=rng)
    states = np.zeros((batch, 1))
    for _ in range(steps):
        actions = rng.choice([-0.8, 0.8], size=(batch, 1))
        pol.update(states, actions, rng)
    return pol.sample_batch(np.zeros(1), 1000, rng)[0, :, 0]


def mode_fractions(samples):
    """(fraction within 0.2 of -0.8, fraction within 0.2 of +0.8, fraction in (-0.4, 0.4))."""
    return (float(np.mean(np.abs(samples + 0.8) <= 0.2)), float(np.mean(np.abs(samples - 0.8) <= 0.2)),
            float(np.mean(np.abs(samples) < 0.4)))


def tiny_config(env="pointmaze", **sections):
    """A config small enough for unit tests; ``sections`` override per section."""
    from expo.config import RunConfig

    base = dict(
        run=dict(total_steps=10, eval_every=5, eval_episodes=2, demos=2),
        env=dict(name=env),
        agent=dict(batch_size=8, utd=2, lr=1e-3, pretrain_steps=0),
        diffusion=dict(hidden=8, blocks=1),
        edit=dict(beta=0.3, hidden=8, layers=1),
        critic=dict(K=3, M=2, hidden=8),
        otf=dict(N=2),
    )
    for name, upd in sections.items():
        base.setdefault(name, {}).update(upd)
    return RunConfig().replace(**base)


def brute_force_select(q):
    """Independent max-scan: first strictly greater value wins."""
    out = []
    for row in q:
        best, best_i = row[0], 0
        for i in range(1, len(row)):
            if row[i] > best:
                best, best_i = row[i], i
        out.append(best_i)
    return np.array(out)


def random_candidate_sets(n, rng):
    """Random Q tables with forced ties in about half of the rows."""
    C = rng.integers(1, 17, size=n)
    sets = []
    for c in C:
        q = rng.standard_normal(c)
        if rng.random() < 0.5:
            q = np.round(q * 2) / 2  # coarse values produce ties
        if rng.random() < 0.1:
            q[:] = q[0]
        sets.append(q)
    return sets
