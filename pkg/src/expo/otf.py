"""On-the-fly argmax-Q policy over base samples and their edits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from expo.errors import ConfigurationError, UsageError

Q_SOURCES = ("online_mean", "target_mean")


@dataclass
class OtfConfig:
    N: int = 8
    q_source: str = "online_mean"
    include_edits: bool = True
    selection: str = "argmax"

    def __post_init__(self):
        if self.N < 1:
            raise ConfigurationError("N must be >= 1")
        if self.q_source not in Q_SOURCES:
            raise ConfigurationError(f"q_source must be one of {Q_SOURCES}")
        if self.selection != "argmax":
            raise ConfigurationError("only argmax selection is supported")


@dataclass
class CandidateSet:
    """Candidates for a batch of states.

    ``actions`` has shape (B, C, d) with the N base samples first and, when
    edits are included, their N edited versions after them in the same order.
    """

    actions: np.ndarray
    q: np.ndarray
    edited: np.ndarray
    base: np.ndarray
    edits: np.ndarray | None = None

    @property
    def size(self):
        return self.actions.shape[1]


def score(critic, states, actions, q_source):
    """Ensemble-mean Q for candidate actions of shape (B, C, d); returns (B, C)."""
    B, C, d = actions.shape
    rep = np.repeat(np.atleast_2d(states), C, axis=0)
    q = critic.q_mean(rep, actions.reshape(B * C, d), target=(q_source == "target_mean"))
    return q.reshape(B, C)


def propose(base, edit, critic, states, cfg, rng, q_source=None):
    """Draw N base actions per state, edit each once, and score all candidates."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    B, N = len(states), cfg.N
    base_actions = base.sample_batch(states, N, rng)
    d = base_actions.shape[-1]
    if cfg.include_edits and edit is not None:
        rep = np.repeat(states, N, axis=0)
        edits, _, edited = edit.sample_edit(rep, base_actions.reshape(B * N, d), rng)
        edited = edited.reshape(B, N, d)
        actions = np.concatenate([base_actions, edited], axis=1)
        flags = np.r_[np.zeros(N, bool), np.ones(N, bool)]
        edits = edits.reshape(B, N, d)
    else:
        actions, flags, edits = base_actions, np.zeros(N, bool), None
    q = score(critic, states, actions, q_source or cfg.q_source)
    return CandidateSet(actions, q, flags, base_actions, edits)


def select(cands):
    """Argmax over candidates per state, first index on ties.

    Returns ``(actions (B, d), index (B,), q (B,))``.
    """
    if cands.size == 0:
        raise UsageError("cannot select from an empty candidate set")
    if cands.q is None:
        raise UsageError("candidate set has no Q-values")
    idx = np.argmax(cands.q, axis=1)
    rows = np.arange(len(idx))
    return cands.actions[rows, idx], idx, cands.q[rows, idx]


def act(states, base, edit, critic, cfg, rng, q_source=None):
    """propose() then select(); returns ``(actions, candidate set, chosen index)``."""
    cands = propose(base, edit, critic, states, cfg, rng, q_source)
    actions, idx, _ = select(cands)
    return actions, cands, idx
