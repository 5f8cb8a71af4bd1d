"""``expo`` command line: train, gen-demos, eval, plot.

Exit codes: 0 ok, 2 invalid config, 3 dataset missing, 4 demo planner
failure, 5 missing or corrupt checkpoint, 6 metrics schema mismatch.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from expo import config as configmod
from expo import runner
from expo.agent import bc_policy, evaluate
from expo.envs import ENVS, generate_demos, make_demonstrator, make_env
from expo.errors import CheckpointError, ConfigurationError, GenerationError
from expo.replay import save_dataset

log = logging.getLogger("expo")

EXIT_OK, EXIT_CONFIG, EXIT_DATASET, EXIT_PLANNER, EXIT_CHECKPOINT, EXIT_SCHEMA = 0, 2, 3, 4, 5, 6

EVAL_FIELDS = ("env_step", "success", "episodes", "seed")


def _fail(code, msg):
    print(f"error: {msg}", file=sys.stderr)
    return code


def load_config(path, assignments=()):
    """Read an INI config and apply ``section.key=value`` overrides before validation."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as f:
            parser.read_file(f)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    for item in assignments:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ConfigurationError(f"override {item!r} is not section.key=value")
        if not parser.has_section(section):
            parser.add_section(section)
        parser[section][name] = value
    buf = io.StringIO()
    parser.write(buf)
    return configmod.loads(buf.getvalue())


def cmd_train(args):
    try:
        cfg = load_config(args.config, args.set)
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, exc)
    out = Path(args.output_dir or cfg.run.output_dir)
    if cfg.run.dataset and not Path(cfg.run.dataset).is_file():
        return _fail(EXIT_DATASET, f"dataset not found: {cfg.run.dataset}")
    try:
        result = runner.train(cfg, out_dir=out)
    except FileNotFoundError as exc:
        return _fail(EXIT_DATASET, exc)
    except CheckpointError as exc:
        return _fail(EXIT_DATASET, f"unreadable dataset: {exc}")
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, exc)
    final = result.rows[-1]
    print(f"final env_step={final.env_step} success={final.success:.4f} -> {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_gen_demos(args):
    if args.env not in ENVS:
        return _fail(EXIT_CONFIG, f"unknown env {args.env!r}; choose from {sorted(ENVS)}")
    if args.n < 1 or args.sigma < 0:
        return _fail(EXIT_CONFIG, "need n >= 1 and sigma >= 0")
    env = make_env(args.env)
    if args.horizon:
        env.horizon = args.horizon
    demo = make_demonstrator(args.env, env, args.sigma)
    try:
        data = generate_demos(env, demo, args.n, np.random.default_rng(args.seed))
    except GenerationError as exc:
        return _fail(EXIT_PLANNER, exc)
    save_dataset(args.out, data, env.state_dim, env.action_dim)
    print(f"wrote {len(data)} transitions from {args.n} demos to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    try:
        cfg, env, agent, state = runner.load_agent(args.checkpoint_dir)
    except (CheckpointError, ConfigurationError) as exc:
        return _fail(EXIT_CHECKPOINT, exc)
    if args.episodes < 1:
        return _fail(EXIT_CONFIG, "episodes must be >= 1")
    policy = bc_policy(agent) if args.policy == "base" else None
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 5]))
    score = evaluate(agent, env, args.episodes, rng, policy)
    out = Path(args.out) if args.out else Path(args.checkpoint_dir) / "eval.csv"
    new = not out.exists()
    with open(out, "a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(EVAL_FIELDS)
        w.writerow([agent.env_steps, f"{score:.6f}", args.episodes, args.seed])
    print(f"success={score:.4f} episodes={args.episodes} env_step={agent.env_steps} policy={args.policy}")
    return EXIT_OK


def cmd_plot(args):
    from expo import plotting

    try:
        groups = plotting.group_curves(args.csv)
    except plotting.SchemaError as exc:
        return _fail(EXIT_SCHEMA, exc)
    if args.metric not in runner.METRIC_FIELDS[1:]:
        return _fail(EXIT_SCHEMA, f"metric must be one of {runner.METRIC_FIELDS[1:]}")
    out = Path(args.out)
    try:
        plotting.plot_groups(groups, out, args.metric, args.title)
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, exc)
    rows = plotting.summarize(groups, args.metric)
    summary = out.with_suffix(".summary.csv")
    plotting.write_summary(rows, summary)
    print("---- summary ----")
    w = csv.writer(sys.stdout)
    w.writerow(plotting.SUMMARY_FIELDS)
    for r in rows:
        w.writerow([f"{r[k]:.4f}" if isinstance(r[k], float) else r[k] for k in plotting.SUMMARY_FIELDS])
    print("---- end ----")
    print(f"figure: {out}")
    print(f"table: {summary}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="expo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one training job from an INI config")
    t.add_argument("config")
    t.add_argument("-o", "--output-dir", help="overrides run.output_dir")
    t.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    t.set_defaults(fn=cmd_train)

    g = sub.add_parser("gen-demos", help="write scripted demonstrations to a .tds file")
    g.add_argument("--env", required=True)
    g.add_argument("-n", type=int, required=True, help="number of successful trajectories")
    g.add_argument("--sigma", type=float, default=0.3, help="demonstrator action noise")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--horizon", type=int, default=0, help="override the env horizon")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_demos)

    e = sub.add_parser("eval", help="evaluate a saved run directory")
    e.add_argument("checkpoint_dir")
    e.add_argument("--episodes", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--policy", choices=("otf", "base"), default="otf",
                   help="argmax-Q selection (default) or plain base-policy samples")
    e.add_argument("--out", help="CSV to append the result row to (default: <dir>/eval.csv)")
    e.set_defaults(fn=cmd_eval)

    pl = sub.add_parser("plot", help="render learning curves grouped by run setup")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("--out", required=True, help="vector figure path (.svg, .pdf or .eps)")
    pl.add_argument("--metric", default="success")
    pl.add_argument("--title")
    pl.set_defaults(fn=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
