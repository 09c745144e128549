import csv
import json
import os
from dataclasses import replace

import numpy as np
import pytest

from irsnoma import harness
from irsnoma.harness import SchemeSpec
from irsnoma.world import ConfigError


def _tiny(**over):
    cfg = harness.preset("smoke")
    cfg = replace(cfg, episodes=2, env=replace(cfg.env, max_steps=3), **over)
    return cfg


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_single_run_cardinality(tmp_path):
    cfg = harness.preset("smoke")
    res = harness.run_suite(cfg, output_dir=tmp_path)
    assert len(res) == 1
    assert len(res[0].episodes) == 5
    assert len(_rows(tmp_path / "irs-noma-k4" / "d3qn" / "seed_0" / "episodes.csv")) == 6


def test_thirty_runs_one_table(tmp_path):
    cfg = _tiny(variants=("d3qn", "double-only", "dueling-only"), seeds=tuple(range(10)))
    res = harness.run_suite(cfg, output_dir=tmp_path)
    assert len(res) == 30
    table = _rows(tmp_path / "comparison.csv")
    assert len(table) == 1 + 3
    assert table[0] == harness.GROUP_HEADER


def test_run_twice_identical_files(tmp_path):
    cfg = _tiny(seeds=(0, 1), variants=("d3qn", "double-only"))
    harness.run_suite(cfg, output_dir=tmp_path / "a")
    harness.run_suite(cfg, output_dir=tmp_path / "b")
    names = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert names == sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    for n in names:
        if n.name in ("timing.json", "config.json"):
            continue
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


def test_identical_groups_zero_gap():
    cfg = _tiny(seeds=(0, 1))
    a = harness.run_suite(cfg, emit=False)
    b = [replace(r, variant="copy") for r in a]
    table = harness.compare_variants(a + b)
    gap = table["gaps"][0]
    assert gap["sum_rate_gap"] == 0.0 and gap["convergence_gap"] == 0.0
    with pytest.raises(ValueError):
        harness.compare_variants(a)


def test_header_only_csv(tmp_path):
    harness.write_csv(tmp_path / "e.csv", harness.EPISODE_HEADER, [])
    assert (tmp_path / "e.csv").read_text() == ",".join(harness.EPISODE_HEADER) + "\n"


def test_three_robot_markers(tmp_path):
    traj = [[(0, 0), (1, 0), (2, 0)], [(5, 5)], [(3, 3), (3, 4)]]
    harness.write_trajectory_rows(tmp_path / "t.csv", traj, 0.2)
    rows = _rows(tmp_path / "t.csv")[1:]
    for rid, cells in enumerate(traj, start=1):
        block = [r for r in rows if r[0] == str(rid)]
        assert len(block) == len(cells)
        assert block[0][4] == f"I_{rid}"
        if len(cells) > 1:
            assert block[-1][4] == f"F_{rid}"
    assert rows[0][2:4] == ["0.1000", "0.1000"]


def test_reemit_is_pure(tmp_path):
    cfg = _tiny()
    r = harness.train_run(cfg, cfg.schemes[0], "d3qn", 0)
    harness.emit_outputs(r, tmp_path / "a")
    harness.emit_outputs(r, tmp_path / "b")
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_dir_fails_before_training(tmp_path):
    d = tmp_path / "ro"
    d.mkdir()
    d.chmod(0o500)
    with pytest.raises(OSError, match=str(d)):
        harness.run_suite(_tiny(), output_dir=d)


def test_output_path_under_a_file_fails_early(tmp_path, monkeypatch):
    f = tmp_path / "file"
    f.write_text("x")
    called = []
    monkeypatch.setattr(harness, "train_run", lambda *a, **k: called.append(a))
    with pytest.raises(OSError, match="not writable"):
        harness.run_suite(_tiny(), output_dir=f / "sub")
    assert not called


def test_write_csv_reports_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        harness.write_csv(tmp_path / "missing" / "x.csv", ["a"], [])


def test_config_roundtrip(tmp_path):
    for name in harness.PRESETS:
        cfg = harness.preset(name)
        harness.save_config(cfg, tmp_path / f"{name}.json")
        assert harness.load_config(tmp_path / f"{name}.json") == cfg


def test_config_errors():
    with pytest.raises(ConfigError):
        harness.config_from_dict({"colour": 1})
    with pytest.raises(ConfigError):
        harness.config_from_dict({"env": {"robots": 2}})
    with pytest.raises(ConfigError):
        harness.preset("huge")
    with pytest.raises(ConfigError):
        harness.preset("desk").scheme("irs-noma-k99")


def test_preset_shapes():
    desk = harness.preset("desk")
    assert desk.budget == pytest.approx(0.1)
    assert {s.K for s in desk.schemes} >= {0, 4, 8}
    paper = harness.preset("paper")
    assert {s.K for s in paper.schemes} == {0, 10, 30}
    assert paper.env.n_robots == 3


def test_no_irs_scheme_is_k0():
    spec = SchemeSpec("x", M=0)
    assert spec.K == 0


def test_sumrate_vs_path_axis():
    cfg = _tiny()
    r = harness.train_run(cfg, cfg.schemes[0], "d3qn", 0)
    rows = harness.sumrate_vs_path(r.greedy, r.resolution)
    assert [x for x, _ in rows] == [round(t * r.resolution, 10) for t in range(len(rows))]
    assert len(rows) == r.greedy.steps + 1


def test_checkpoint_evaluates_to_same_rates(tmp_path):
    cfg = _tiny()
    r = harness.train_run(cfg, cfg.schemes[0], "d3qn", 0)
    (tmp_path / "c.bin").write_bytes(r.checkpoint)
    stats, env = harness.evaluate_checkpoint(cfg, cfg.schemes[0], "d3qn", 0, tmp_path / "c.bin")
    assert stats.rate_rows == r.greedy.rate_rows


def test_moving_average():
    assert harness.moving_average([1, 2, 3, 4], 2).tolist() == [1.0, 1.5, 2.5, 3.5]
    assert harness.moving_average([], 3).size == 0
