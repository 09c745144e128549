"""End-to-end acceptance gate.

Each test checks one criterion at its stated tolerance and records a
PASS/FAIL line that is echoed in the terminal summary.  The desk-scale
training runs are shared between the scheme, variant and constraint
criteria through session fixtures; the whole module takes about an hour on
one core.  Deselect with ``-m "not acceptance"``.
"""
import time

import numpy as np
import pytest

from irsnoma import checks, cli, harness, oracle
from irsnoma.env import HARD_CONSTRAINTS
from irsnoma.world import build_grid, paper_world

pytestmark = pytest.mark.acceptance

SCHEME_RUNS = ("irs-noma-k8", "irs-noma-k4", "noirs-noma", "irs-oma-k8")
VARIANT_SCHEME = "irs-noma-k8"


def _timed(fn, *a, **k):
    t0 = time.perf_counter()
    out = fn(*a, **k)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def desk():
    return harness.preset("desk")


@pytest.fixture(scope="session")
def scheme_runs(desk, tmp_path_factory):
    """d3qn on each compared scheme over the preset's 10 seeds."""
    out = tmp_path_factory.mktemp("schemes")
    res = harness.run_suite(desk, schemes=SCHEME_RUNS, variants=("d3qn",), output_dir=out)
    return {name: [r for r in res if r.scheme == name] for name in SCHEME_RUNS}


@pytest.fixture(scope="session")
def variant_runs(desk, scheme_runs, tmp_path_factory):
    """All three variants on one scheme; the d3qn runs are reused."""
    out = tmp_path_factory.mktemp("variants")
    others = tuple(v for v in desk.variants if v != "d3qn")
    res = harness.run_suite(desk, schemes=(VARIANT_SCHEME,), variants=others, output_dir=out)
    runs = {"d3qn": scheme_runs[VARIANT_SCHEME]}
    for v in others:
        runs[v] = [r for r in res if r.variant == v]
    return runs


@pytest.fixture(scope="session")
def phase_trials():
    return _timed(lambda: [harness.phase_oracle_trial(i) for i in range(50)])


def test_gradient_fidelity(acceptance_report):
    res, dt = _timed(checks.gradcheck_suite, 100, 1e-4, 1e-8)
    ok = all(c.ok for c in res) and dt < 60
    acceptance_report(1, "gradient fidelity", ok, "; ".join(c.detail for c in res) + f"; {dt:.1f}s")
    assert ok


def test_sinr_rate_oracle(acceptance_report):
    res, dt = _timed(checks.sinr_suite, 1000, 1e-10)
    ok = all(c.ok for c in res) and dt < 60
    acceptance_report(2, "SINR/rate oracle", ok, res[0].detail + f"; {dt:.1f}s")
    assert ok


def test_dueling_centering(acceptance_report):
    res = checks.centering_suite(1000, 1e-10)
    ok = all(c.ok for c in res)
    acceptance_report(3, "dueling centering", ok, res[0].detail + " on 1000 states")
    assert ok


def test_double_dqn_target(acceptance_report):
    res = checks.target_suite()
    ok = all(c.ok for c in res)
    acceptance_report(4, "double-DQN target", ok, res[0].detail)
    assert ok


def test_phase_oracle_consistency(acceptance_report, phase_trials):
    trials, dt = phase_trials
    hits = sum(t.ratio >= 0.95 for t in trials)
    ok = hits >= 0.8 * len(trials) and dt < 600
    worst = min(t.ratio for t in trials)
    acceptance_report(5, "phase-oracle consistency", ok,
                      f"{hits}/{len(trials)} snapshots at >= 95% of the optimum (need 40), "
                      f"worst ratio {worst:.3f}, K={trials[0].K}; {dt:.0f}s")
    assert ok


def _gap(a, b):
    d = np.array([x.greedy_sum_rate - y.greedy_sum_rate for x, y in zip(a, b)])
    assert [x.seed for x in a] == [y.seed for y in b]
    return float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.size))


def test_scheme_ordering(acceptance_report, scheme_runs):
    r = scheme_runs
    dt = sum(x.wall_clock for rs in r.values() for x in rs)
    pairs = [("irs-noma-k8", "noirs-noma"), ("irs-noma-k8", "irs-oma-k8"), ("irs-noma-k8", "irs-noma-k4")]
    parts, ok = [], dt < 1800
    for a, b in pairs:
        m, se = _gap(r[a], r[b])
        ok &= m - se > 0
        parts.append(f"{a} - {b} = {m:+.4f} +- {se:.4f}")
    means = ", ".join(f"{k} {np.mean([x.greedy_sum_rate for x in v]):.3f}" for k, v in r.items())
    acceptance_report(6, "scheme ordering", ok, "; ".join(parts) + f" (means: {means}); {dt / 60:.1f} min")
    assert ok


def test_variant_ordering(acceptance_report, desk, variant_runs):
    budget = desk.episodes
    conv = {v: np.array([harness.convergence_or_budget(x, budget) for x in rs]) for v, rs in variant_runs.items()}
    dt = sum(x.wall_clock for rs in variant_runs.values() for x in rs)
    worse_than = []
    parts = []
    for v in ("double-only", "dueling-only"):
        d = conv["d3qn"] - conv[v]
        m, se = float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.size))
        parts.append(f"d3qn - {v} = {m:+.1f} +- {se:.1f}")
        if m - se > 0:
            worse_than.append(v)
    ok = len(worse_than) < 2 and dt < 3600
    means = ", ".join(f"{v} {c.mean():.1f} (never {sum(x.convergence is None for x in variant_runs[v])})"
                      for v, c in conv.items())
    acceptance_report(7, "variant ordering", ok, "; ".join(parts) + f" (episodes: {means}); {dt / 60:.1f} min")
    assert ok


def test_constraint_suite(acceptance_report, phase_trials, scheme_runs, variant_runs):
    trials, _ = phase_trials
    logs = [(t.checked, t.violations) for t in trials]
    logs += [(x.checked, x.violations) for rs in scheme_runs.values() for x in rs]
    logs += [(x.checked, x.violations) for v, rs in variant_runs.items() if v != "d3qn" for x in rs]
    checked = sum(c for c, _ in logs)
    hard = {k: sum(v.get(k, 0) for _, v in logs) for k in HARD_CONSTRAINTS}
    qos = sum(v.get("qos", 0) for _, v in logs)
    ok = checked > 0 and not any(hard.values())
    acceptance_report(8, "constraint suite", ok,
                      f"{checked} evaluated steps, hard violations {hard}, QoS shortfalls logged {qos}")
    assert ok


def test_determinism(acceptance_report, tmp_path):
    argv = ["train", "--preset", "smoke", "--episodes", "20", "--seeds", "3"]
    assert cli.main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(argv + ["--out", str(tmp_path / "b")]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                   if p.suffix in (".csv", ".bin"))
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files]
    ok = len(files) > 0 and all(same)
    acceptance_report(9, "determinism", ok, f"{sum(same)}/{len(files)} CSV and checkpoint files byte-identical")
    assert ok


def test_geometry(acceptance_report):
    world = paper_world()
    got = build_grid(world).n_blocked
    want = oracle.analytic_blocked_count(world)
    ok = got == want
    acceptance_report(10, "geometry", ok, f"grid blocks {got} cells, footprint count {want}")
    assert ok
