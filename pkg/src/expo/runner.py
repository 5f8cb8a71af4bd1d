"""Run orchestration shared by the CLI and the acceptance harness."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from expo import config as configmod
from expo.agent import ExpoAgent, bc_policy, evaluate
from expo.envs import generate_demos, make_demonstrator, make_env
from expo.errors import CheckpointError, ConfigurationError
from expo.nn import ParamVector, load_network, load_params, save_network, save_params
from expo.replay import load_dataset

log = logging.getLogger(__name__)

METRIC_FIELDS = ("env_step", "success", "mean_q", "alpha", "edited_win_frac")
TIMING_FIELDS = ("env_step", "wall_clock")

# substream tags under the run seed
_INIT, _DATA, _TRAIN, _EVAL = 1, 2, 3, 4


@dataclass
class MetricsRow:
    env_step: int
    success: float
    mean_q: float
    alpha: float
    edited_win_frac: float
    wall_clock: float

    def csv_values(self):
        return [self.env_step, f"{self.success:.6f}", f"{self.mean_q:.6f}", f"{self.alpha:.6f}",
                f"{self.edited_win_frac:.6f}"]


@dataclass
class RunResult:
    rows: list
    pretrain_success: float | None
    agent: ExpoAgent

    @property
    def successes(self):
        return [r.success for r in self.rows]

    @property
    def final_success(self):
        return self.rows[-1].success


_PRETRAIN_TAG = 2**31  # never collides with an env-step count


def eval_rng(seed, tag):
    return np.random.default_rng(np.random.SeedSequence([seed, _EVAL, tag]))


def load_or_generate_dataset(cfg, env):
    """Dataset from ``run.dataset`` or, if empty, ``run.demos`` in-process demos."""
    r = cfg.run
    if r.dataset:
        transitions, sd, ad = load_dataset(r.dataset)
        if (sd, ad) != (env.state_dim, env.action_dim):
            raise ConfigurationError(
                f"dataset dims ({sd}, {ad}) do not match env ({env.state_dim}, {env.action_dim})"
            )
        return transitions
    if r.demos:
        rng = np.random.default_rng(np.random.SeedSequence([r.seed, _DATA]))
        demo = make_demonstrator(cfg.env.name, env, r.demo_sigma)
        return generate_demos(env, demo, r.demos, rng)
    return []


def build(cfg):
    env = make_env(cfg.env.name, **cfg.env.params)
    agent = ExpoAgent(cfg, env.state_dim, env.action_dim)
    return env, agent


def train(cfg, dataset=None, out_dir=None, progress=None):
    """Pretrain (offline-to-online mode), then run the online loop with periodic evaluation.

    Returns a :class:`RunResult`.  When ``out_dir`` is given, metrics, timing,
    the config snapshot and final checkpoints are written there.
    """
    env, agent = build(cfg)
    r = cfg.run
    if dataset is None:
        dataset = load_or_generate_dataset(cfg, env)
    rng = np.random.default_rng(np.random.SeedSequence([r.seed, _TRAIN]))
    start = time.perf_counter()
    pretrain_success = None
    if dataset:
        agent.set_normalizer([t.s for t in dataset])
    if r.mode == "offline_to_online":
        if not dataset:
            raise ConfigurationError("offline_to_online mode needs a dataset")
        if cfg.agent.pretrain_steps:
            agent.pretrain(dataset, cfg.agent.pretrain_steps, rng)
        pretrain_success = evaluate(agent, env, r.eval_episodes, eval_rng(r.seed, _PRETRAIN_TAG), bc_policy(agent))
        log.info("pretrained base policy: score %.3f", pretrain_success)
    if r.mode == "offline_to_online" and not r.retain_offline:
        agent.warm_start(env, len(dataset), rng)
    else:
        agent.buffer.seed(dataset)

    rows = []

    def record():
        score = evaluate(agent, env, r.eval_episodes, eval_rng(r.seed, agent.env_steps))
        st = agent.stats()
        row = MetricsRow(agent.env_steps, score, st["mean_q"], st["alpha"], st["edited_win_frac"],
                         time.perf_counter() - start)
        rows.append(row)
        agent.reset_stats()
        log.info("step %d score %.3f mean_q %.3f alpha %.4f edit-wins %.3f", row.env_step,
                 row.success, row.mean_q, row.alpha, row.edited_win_frac)
        if progress is not None:
            progress(row)

    record()
    if r.total_steps and len(agent.buffer) == 0:
        raise ConfigurationError("online training needs seed data or warm start")
    for _ in range(r.total_steps):
        agent.train_step(env, rng)
        if agent.env_steps % r.eval_every == 0 or agent.env_steps == r.total_steps:
            record()
    result = RunResult(rows, pretrain_success, agent)
    if out_dir is not None:
        write_outputs(Path(out_dir), cfg, result)
    return result


def write_metrics(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_FIELDS)
        for row in rows:
            w.writerow(row.csv_values())


def write_outputs(out, cfg, result):
    out.mkdir(parents=True, exist_ok=True)
    configmod.dump(cfg, out / "config.ini")
    write_metrics(out / "metrics.csv", result.rows)
    with open(out / "timing.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TIMING_FIELDS)
        for row in result.rows:
            w.writerow([row.env_step, f"{row.wall_clock:.3f}"])
    save_checkpoints(out, result.agent, result.pretrain_success)


def save_checkpoints(out, agent, pretrain_success=None):
    out = Path(out)
    save_network(out / "base.ckpt", agent.base.noise_net)
    policy = agent.actor or agent.edit
    save_network(out / ("actor.ckpt" if agent.actor else "edit.ckpt"), policy.net)
    save_network(out / "critic.ckpt", agent.critic.net)
    state = {
        "obs_mean": agent.norm.mean.tolist(),
        "obs_std": agent.norm.std.tolist(),
        "log_alpha": float(policy.log_alpha.data),
        "env_steps": agent.env_steps,
        "pretrain_success": pretrain_success,
    }
    (out / "agent_state.json").write_text(json.dumps(state, indent=2))
    tgt = ParamVector(np.concatenate([a.ravel() for a in agent.critic.target_params]),
                      agent.critic.net.layout)
    save_params(out / "critic_target.ckpt", tgt)


def load_agent(ckpt_dir):
    """Rebuild an agent from a run directory written by :func:`write_outputs`."""
    d = Path(ckpt_dir)
    if not d.is_dir():
        raise CheckpointError(f"checkpoint directory not found: {d}")
    try:
        cfg = configmod.load(d / "config.ini", seed_from_env=False)
    except ConfigurationError as exc:
        raise CheckpointError(str(exc)) from exc
    env, agent = build(cfg)
    load_network(d / "base.ckpt", agent.base.noise_net)
    policy = agent.actor or agent.edit
    load_network(d / ("actor.ckpt" if agent.actor else "edit.ckpt"), policy.net)
    load_network(d / "critic.ckpt", agent.critic.net)
    tgt = load_params(d / "critic_target.ckpt")
    if tgt.layout != agent.critic.net.layout or len(tgt) != agent.critic.net.num_params():
        raise CheckpointError("critic target checkpoint does not fit the critic")
    off = 0
    for a in agent.critic.target_params:
        a[...] = tgt.values[off:off + a.size].reshape(a.shape)
        off += a.size
    try:
        state = json.loads((d / "agent_state.json").read_text())
        agent.norm.mean = np.asarray(state["obs_mean"], dtype=np.float64)
        agent.norm.std = np.asarray(state["obs_std"], dtype=np.float64)
        policy.log_alpha.data[...] = state["log_alpha"]
        agent.env_steps = int(state["env_steps"])
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"corrupt agent_state.json: {exc}") from exc
    if agent.norm.mean.shape != (env.state_dim,):
        raise CheckpointError("normalizer dimensions do not match the env")
    return cfg, env, agent, state


def result_summary(result):
    return {"rows": [asdict(r) for r in result.rows], "pretrain_success": result.pretrain_success}
