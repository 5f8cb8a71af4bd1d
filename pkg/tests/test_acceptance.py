"""End-to-end acceptance suite.

Each test scores one criterion, records a PASS/FAIL line (printed in the
pytest terminal summary) and then asserts on it.  The learning criteria
share a cache of training runs so each (env, setup, seed) trains once per
session.  Run configs live in ``configs/``.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from expo import cli, otf, runner
from expo.critic import CriticEnsemble
from expo.diffusion import DiffusionPolicy
from expo.edit import EditPolicy
from expo.otf import CandidateSet
from expo.replay import Batch
from fixtures import (LinearCritic, brute_force_select, fit_bimodal, fit_edit_to_quadratic,
                      mode_fractions, random_candidate_sets)
from helpers import max_rel_error, param_gradcheck
from report import record

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SEEDS = (0, 1, 2)


class RunCache:
    """Trains each requested setup at most once per session."""

    def __init__(self, root):
        self.root = Path(root)
        self.results = {}

    def get(self, config, seed, **overrides):
        sets = [f"run.seed={seed}"] + [f"{k.replace('__', '.')}={v}" for k, v in sorted(overrides.items())]
        key = (config, tuple(sets))
        if key not in self.results:
            cfg = cli.load_config(CONFIGS / config, sets)
            out = self.root / f"{len(self.results):03d}"
            t0 = time.perf_counter()
            res = runner.train(cfg, out_dir=out)
            print(f"[run] {config} {' '.join(sets)}: {res.successes} ({time.perf_counter() - t0:.0f}s)")
            self.results[key] = res
        return self.results[key]

    def seeds(self, config, **overrides):
        return [self.get(config, s, **overrides) for s in SEEDS]


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    return RunCache(tmp_path_factory.mktemp("acceptance_runs"))


def _check(n, ok, detail):
    record(n, ok, detail)
    assert ok, detail


def _fd_scalar(f, x, h=1e-5):
    old = float(x[...])
    x[...] = old + h
    fp = f()
    x[...] = old - h
    fm = f()
    x[...] = old
    return (fp - fm) / (2 * h)


def test_c01_gradient_suite():
    t0 = time.perf_counter()
    worst = {"ddpm_loss": 0.0, "edit_loss": 0.0, "td_loss": 0.0, "alpha_objective": 0.0}
    for seed in range(50):
        rng = np.random.default_rng(seed)
        sd, ad = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        s = rng.standard_normal((4, sd))
        a = rng.uniform(-0.5, 0.5, (4, ad))

        base = DiffusionPolicy(sd, ad, hidden=5, n_blocks=1, rng=rng)
        k = int(rng.integers(0, 2**31))
        worst["ddpm_loss"] = max(worst["ddpm_loss"], param_gradcheck(
            base.noise_net, lambda: base.ddpm_loss(s, a, np.random.default_rng(k))))

        edit = EditPolicy(sd, ad, float(rng.uniform(0.05, 0.7)), hidden=5, n_hidden=1,
                          init_alpha=float(rng.uniform(0.1, 1.0)), rng=rng)
        critic = LinearCritic(rng.standard_normal(ad))
        worst["edit_loss"] = max(worst["edit_loss"], param_gradcheck(
            edit.net, lambda: edit.edit_loss(critic, s, a, np.random.default_rng(k))[0]))

        ens = CriticEnsemble(sd, ad, K=3, M=2, hidden=5, n_hidden=1, rng=rng)
        for t in ens.target_params:
            t += rng.normal(0, 0.1, t.shape)
        batch = Batch(s, a, rng.integers(0, 2, 4).astype(float), rng.standard_normal((4, sd)),
                      (rng.random(4) < 0.3).astype(float))
        a2 = rng.uniform(-1, 1, (4, ad))
        worst["td_loss"] = max(worst["td_loss"], param_gradcheck(
            ens.net, lambda: ens.td_loss(batch, a2, np.random.default_rng(k))[0]))

        lp = rng.normal(0, 2, 16)
        edit.log_alpha.grad = None
        edit.alpha_objective(lp).backward()
        analytic = float(np.asarray(edit.log_alpha.grad))
        numeric = _fd_scalar(lambda: edit.alpha_objective(lp).item(), edit.log_alpha.data)
        worst["alpha_objective"] = max(worst["alpha_objective"], max_rel_error(analytic, numeric))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-3 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    _check(1, ok, detail)


def test_c02_otf_matches_brute_force():
    rng = np.random.default_rng(0)
    mismatches = 0
    for q in random_candidate_sets(10_000, rng):
        C = len(q)
        acts = rng.standard_normal((1, C, 2))
        cands = CandidateSet(acts, q[None, :], np.zeros(C, bool), acts)
        _, idx, qsel = otf.select(cands)
        mismatches += int(idx[0] != brute_force_select(q[None, :])[0] or qsel[0] != q.max())
    _check(2, mismatches == 0, f"{mismatches} mismatches over 10000 sets")


def test_c03_edit_clamp():
    rng = np.random.default_rng(0)
    draws, worst_ratio, box_ok = 0, 0.0, True
    while draws < 100_000:
        d = int(rng.integers(1, 4))
        beta = float(rng.choice([0.005, 0.05, 0.3, 0.7, 1.5]))
        pol = EditPolicy(3, d, beta, hidden=8, n_hidden=1, rng=rng)
        w, b = pol.net.params[-2:]
        w.data *= rng.uniform(1, 50)
        b.data[...] = rng.normal(0, 5, b.data.shape)
        s = rng.normal(0, 3, (5000, 3))
        a = rng.uniform(-1, 1, (5000, d))
        edits, _, edited = pol.sample_edit(s, a, rng)
        worst_ratio = max(worst_ratio, float(np.max(np.abs(edits)) / beta))
        box_ok &= bool(np.all(np.abs(edited) <= 1.0))
        draws += len(edits)
    ok = worst_ratio <= 1.0 and box_ok
    _check(3, ok, f"max |edit|/beta = {worst_ratio:.6f} over {draws} draws; actions in box: {box_ok}")


def test_c04_td_targets_by_hand():
    c = CriticEnsemble(2, 1, K=1, M=1, hidden=4, n_hidden=1, gamma=0.99, rng=np.random.default_rng(0))
    w, b = c.target_params[-2:]
    w[...] = 0.0
    b[...] = 2.0  # Q' = 2 everywhere
    batch = Batch(np.zeros((3, 2)), np.zeros((3, 1)), np.array([0.0, 1.0, 0.5]),
                  np.ones((3, 2)), np.array([0.0, 1.0, 1.0]))
    _, y = c.td_loss(batch, np.zeros((3, 1)), np.random.default_rng(0))
    expected = np.array([0.99 * 2.0, 1.0, 0.5])
    err = float(np.max(np.abs(y - expected)))
    _check(4, err <= 1e-6, f"y = {np.round(y, 8).tolist()}, max error {err:.1e}")


def test_c05_quadratic_edit_maximiser():
    m_large = fit_edit_to_quadratic(0.7, steps=5000)
    m_small = fit_edit_to_quadratic(0.05, steps=5000)
    ok = abs(m_large - 0.5) <= 0.05 and abs(m_small - 0.05) <= 0.01
    _check(5, ok, f"beta 0.7 -> {m_large:.4f} (want 0.5), beta 0.05 -> {m_small:.4f} (want 0.05)")


def test_c06_bimodal_mode_recovery():
    t0 = time.perf_counter()
    lo, hi, mid = mode_fractions(fit_bimodal(steps=20_000))
    elapsed = time.perf_counter() - t0
    ok = 0.3 <= lo <= 0.7 and 0.3 <= hi <= 0.7 and mid < 0.05 and elapsed < 300
    _check(6, ok, f"modes {lo:.3f}/{hi:.3f}, between {mid:.3f}; {elapsed:.0f}s")


def _final_mean(results):
    return float(np.mean([r.final_success for r in results]))


@pytest.mark.slow
def test_c07_pointmaze_learning(runs):
    res = runs.seeds("pointmaze.ini")
    curve = np.mean([r.successes for r in res], axis=0)
    steps = [row.env_step for row in res[0].rows]
    best = int(np.argmax(curve))
    ok = curve[best] >= 0.9 and steps[best] <= 50_000
    _check(7, ok, f"3-seed mean curve {np.round(curve, 3).tolist()}; best {curve[best]:.3f} at step {steps[best]}")


@pytest.mark.slow
def test_c08_ablation_ordering(runs):
    full_pm = _final_mean(runs.seeds("pointmaze.ini"))
    sample_pm = _final_mean(runs.seeds("pointmaze.ini", run__variant="sample_backup"))
    no_edit_pm = _final_mean(runs.seeds("pointmaze.ini", run__variant="no_edit"))
    full_rb = _final_mean(runs.seeds("reachbox.ini"))
    no_edit_rb = _final_mean(runs.seeds("reachbox.ini", run__variant="no_edit"))
    ok = full_pm >= sample_pm and full_pm >= no_edit_pm and full_rb >= no_edit_rb
    _check(8, ok, f"PointMaze full {full_pm:.3f} / sample_backup {sample_pm:.3f} / no_edit {no_edit_pm:.3f}; "
                  f"ReachBox full {full_rb:.3f} / no_edit {no_edit_rb:.3f}")


@pytest.mark.slow
def test_c09_offline_to_online_no_collapse(runs):
    res = runs.seeds("reachbox_o2o.ini", run__demos=10)
    pre = float(np.mean([r.pretrain_success for r in res]))
    window = [i for i, row in enumerate(res[0].rows) if row.env_step <= 5000]
    curve = np.mean([[r.successes[i] for i in window] for r in res], axis=0)
    floor = 0.8 * pre
    ok = float(curve.min()) >= floor and res[0].rows[window[-1]].env_step == 5000
    _check(9, ok, f"pretrained {pre:.3f}, floor {floor:.3f}, online mean curve {np.round(curve, 3).tolist()}")


@pytest.mark.slow
def test_c10_demo_count_monotonicity(runs):
    # fine-tuned for the ablation budget (3000 online steps) after pretraining on n demos
    finals = {n: _final_mean(runs.seeds("reachbox_o2o.ini", run__demos=n, run__total_steps=3000))
              for n in (5, 25, 100)}
    ok = finals[5] <= finals[25] <= finals[100]
    _check(10, ok, ", ".join(f"{n} demos {v:.3f}" for n, v in finals.items()))


def test_c11_determinism(tmp_path):
    sets = ["run.total_steps=300", "run.eval_every=100", "run.eval_episodes=5"]
    for name in ("a", "b"):
        cfg = cli.load_config(CONFIGS / "pointmaze.ini", sets)
        runner.train(cfg, out_dir=tmp_path / name)
    same = (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    _check(11, same, "metrics.csv bit-identical" if same else "metrics.csv differs")
