"""Learning-curve report: group metrics CSVs by run setup, plot mean with a min-max band."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from expo import config as configmod
from expo.errors import ConfigurationError, ExpoError
from expo.runner import METRIC_FIELDS


class SchemaError(ExpoError):
    """A metrics file is empty or does not carry the expected columns."""


@dataclass
class Curve:
    path: Path
    steps: np.ndarray
    values: dict


@dataclass
class Group:
    key: str
    label: str
    curves: list

    def stack(self, metric):
        """Align seeds on their common env steps; returns (steps, (n_seeds, n_steps) values)."""
        common = self.curves[0].steps
        for c in self.curves[1:]:
            common = np.intersect1d(common, c.steps)
        rows = [c.values[metric][np.searchsorted(c.steps, common)] for c in self.curves]
        return common, np.array(rows)


def read_metrics(path):
    path = Path(path)
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = tuple(rows[0])
    if header != METRIC_FIELDS:
        raise SchemaError(f"{path}: header {header} != {METRIC_FIELDS}")
    body = rows[1:]
    if not body:
        raise SchemaError(f"{path}: no data rows")
    try:
        data = np.array([[float(x) for x in r] for r in body])
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    if data.shape[1] != len(METRIC_FIELDS):
        raise SchemaError(f"{path}: ragged rows")
    steps = data[:, 0].astype(np.int64)
    if np.any(np.diff(steps) <= 0):
        raise SchemaError(f"{path}: env_step is not strictly increasing")
    return Curve(path, steps, {name: data[:, i] for i, name in enumerate(METRIC_FIELDS)})


def _setup(path):
    """(group key, label) from the config snapshot next to the CSV, else from the directory."""
    snap = Path(path).parent / "config.ini"
    if snap.is_file():
        try:
            cfg = configmod.load(snap, seed_from_env=False)
        except ConfigurationError:
            pass
        else:
            fp = cfg.fingerprint()
            return fp, f"{cfg.env.name} {cfg.run.variant} [{fp[:6]}]"
    name = Path(path).parent.name or str(path)
    return name, name


def group_curves(paths):
    groups = {}
    for p in paths:
        curve = read_metrics(p)
        key, label = _setup(p)
        groups.setdefault(key, Group(key, label, [])).curves.append(curve)
    return list(groups.values())


def summarize(groups, metric="success"):
    """One row per group: seeds, final mean/min/max and best mean of ``metric``."""
    out = []
    for g in groups:
        steps, vals = g.stack(metric)
        mean = vals.mean(axis=0)
        out.append({
            "group": g.key,
            "label": g.label,
            "seeds": len(g.curves),
            "final_step": int(steps[-1]),
            "final_mean": float(mean[-1]),
            "final_min": float(vals[:, -1].min()),
            "final_max": float(vals[:, -1].max()),
            "best_mean": float(mean.max()),
        })
    return out


SUMMARY_FIELDS = ("group", "label", "seeds", "final_step", "final_mean", "final_min", "final_max",
                  "best_mean")


def write_summary(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: f"{v:.6f}" if isinstance(v, float) else v for k, v in r.items()})


def plot_groups(groups, out_path, metric="success", title=None):
    """Mean curve per group with a pointwise min-max band across seeds (single seeds: no band)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_path = Path(out_path)
    fmt = out_path.suffix.lstrip(".").lower() or "svg"
    if fmt not in ("svg", "pdf", "eps"):
        raise ConfigurationError(f"plot output must be a vector format (svg, pdf, eps), got .{fmt}")
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    for g in groups:
        steps, vals = g.stack(metric)
        (line,) = ax.plot(steps, vals.mean(axis=0), label=f"{g.label} (n={len(g.curves)})")
        if len(g.curves) > 1:
            ax.fill_between(steps, vals.min(axis=0), vals.max(axis=0), color=line.get_color(),
                            alpha=0.2, linewidth=0, gid=f"band-{g.key}")
    ax.set_xlabel("environment steps")
    ax.set_ylabel(metric.replace("_", " "))
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    fig.savefig(out_path, format=fmt)
    plt.close(fig)
    return out_path
