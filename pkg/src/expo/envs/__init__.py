"""Sparse-reward toy environments and scripted demonstrators."""

from __future__ import annotations

import numpy as np

from expo.envs.pointmaze import PointMaze, PointMazeDemonstrator
from expo.envs.reachbox import ReachBox, ReachBoxDemonstrator
from expo.errors import ConfigurationError, GenerationError
from expo.replay import Transition

ENVS = {"pointmaze": (PointMaze, PointMazeDemonstrator), "reachbox": (ReachBox, ReachBoxDemonstrator)}


def make_env(name, **params):
    try:
        cls, _ = ENVS[name]
    except KeyError:
        raise ConfigurationError(f"unknown env {name!r}; choose from {sorted(ENVS)}") from None
    return cls(**params)


def make_demonstrator(name, env, sigma=0.0):
    return ENVS[name][1](env, sigma=sigma)


def rollout(env, policy, rng, env_rng=None):
    """Run one episode of ``policy(obs, rng) -> action``; returns (transitions, rewards)."""
    obs = env.reset(rng if env_rng is None else env_rng)
    transitions, rewards = [], []
    done = False
    while not done:
        action = policy(obs, rng)
        obs2, r, done = env.step(action)
        transitions.append(Transition(obs, np.asarray(action, dtype=np.float64), r, obs2, env.terminal))
        rewards.append(r)
        obs = obs2
    return transitions, rewards


def generate_demos(env, demonstrator, n_traj, rng, success_filter=True):
    """Roll out the demonstrator until ``n_traj`` episodes are collected.

    With ``success_filter`` only episodes whose final reward is 1 are kept.
    Returns a flat list of transitions (episodes concatenated in order).
    """
    if n_traj < 1:
        raise ConfigurationError("n_traj must be >= 1")
    kept, attempts = [], 0
    while len(kept) < n_traj:
        if attempts >= 100 * n_traj:
            raise GenerationError(
                f"demonstrator produced {len(kept)}/{n_traj} successes in {attempts} attempts"
            )
        attempts += 1
        trans, rewards = rollout(env, demonstrator.act, rng)
        if success_filter and rewards[-1] != 1.0:
            continue
        kept.append(trans)
    return [t for traj in kept for t in traj]


def split_episodes(transitions, horizon=None):
    """Inverse of the flattening in ``generate_demos`` using terminal flags or a fixed horizon."""
    episodes, cur = [], []
    for t in transitions:
        cur.append(t)
        if t.done or (horizon is not None and len(cur) == horizon):
            episodes.append(cur)
            cur = []
    if cur:
        episodes.append(cur)
    return episodes


__all__ = [
    "ENVS",
    "PointMaze",
    "PointMazeDemonstrator",
    "ReachBox",
    "ReachBoxDemonstrator",
    "generate_demos",
    "make_demonstrator",
    "make_env",
    "rollout",
    "split_episodes",
]
