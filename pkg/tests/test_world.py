import csv
import json

import numpy as np
import pytest

from irsnoma.world import (
    STILL, Box, ConfigError, GridMap, RobotPose, Trajectory, WorldError, WorldModel, build_grid, desk_world,
    goal_distances, line_of_sight, load_world, num_positions, paper_world, sample_endpoints, step_robot,
    write_trajectories_csv,
)

R, L, U, D = 0, 1, 3, 4


def empty_room(res=0.1):
    return WorldModel((8.0, 6.0, 3.0), (), (0.0, 3.0, 2.0), (4.0, 3.0, 3.0), 0.3, res)


def free_grid(nx, ny, res=0.1):
    return GridMap(np.zeros((nx, ny), dtype=bool), res, 0.3)


def test_empty_room_grid():
    g = build_grid(empty_room())
    assert g.shape == (80, 60)
    assert g.n_blocked == 0


def test_paper_world_blocked_count():
    # four 1x1 pillars, two 1x1 parterres, one 1.5x1.5 fountain at 0.1 m
    assert build_grid(paper_world()).n_blocked == 4 * 100 + 2 * 100 + 225


def test_blocked_iff_center_in_footprint():
    w = paper_world()
    g = build_grid(w)
    lo, hi = w.box_arrays
    for i in range(0, 80, 3):
        for j in range(0, 60, 3):
            x, y, _ = g.center((i, j))
            inside = np.any((lo[:, 0] <= x) & (x <= hi[:, 0]) & (lo[:, 1] <= y) & (y <= hi[:, 1]))
            assert g.blocked[i, j] == inside


@pytest.mark.parametrize("res", [0.0, -0.1])
def test_bad_resolution(res):
    with pytest.raises(ConfigError):
        empty_room(res)


def test_world_validation():
    with pytest.raises(ConfigError):  # outside room
        WorldModel((2, 2, 3), (Box((1, 1, 0), (3, 2, 3)),), (0, 1, 2), (1, 1, 3))
    with pytest.raises(ConfigError):  # shorter than the robot
        WorldModel((2, 2, 3), (Box((0, 0, 0), (1, 1, 0.2)),), (0, 1, 2), (1, 1, 3))
    with pytest.raises(ConfigError):  # IRS below the ceiling
        WorldModel((2, 2, 3), (), (0, 1, 2), (1, 1, 2.5))


def test_world_config_roundtrip(tmp_path):
    w = paper_world()
    p = tmp_path / "world.json"
    p.write_text(json.dumps(w.to_dict()))
    assert load_world(p) == w
    with pytest.raises(ConfigError):
        WorldModel.from_dict({"room": [1, 1, 1]})


def test_los_degenerate_segment():
    assert line_of_sight((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), paper_world())


def test_los_over_obstacles():
    # both endpoints on the ceiling, which no obstacle exceeds
    w = WorldModel((8, 6, 3), (Box((1, 1, 0), (2, 2, 2.5)),), (0, 3, 2), (4, 3, 3))
    assert line_of_sight((0.1, 0.1, 3.0), (7.9, 5.9, 3.0), w)


def _sampled_hit(a, b, lo, hi, n=20001):
    t = np.linspace(0, 1, n)[1:-1, None]
    pts = np.asarray(a) + t * (np.asarray(b) - np.asarray(a))
    return bool(np.any(np.all((pts > lo) & (pts < hi), axis=1)))


def test_los_blocked_by_pillar():
    w = WorldModel((4, 4, 3), (Box((0.5, 0.5, 0), (1.5, 1.5, 3)),), (0, 0, 2), (2, 2, 3))
    a, b = (0.0, 0.0, 2.0), (2.0, 2.0, 0.3)
    # dense sampling along the segment as the independent reference
    assert _sampled_hit(a, b, np.array([0.5, 0.5, 0]), np.array([1.5, 1.5, 3]))
    assert not line_of_sight(a, b, w)


def test_los_symmetric_random():
    w = paper_world()
    rng = np.random.default_rng(0)
    lo, hi = w.box_arrays
    for _ in range(300):
        a, b = rng.uniform([0, 0, 0], [8, 6, 3], size=(2, 3))
        got = line_of_sight(a, b, w)
        assert got == line_of_sight(b, a, w)
        ref = not any(_sampled_hit(a, b, lo[k], hi[k], 4001) for k in range(len(lo)))
        if got != ref:
            # grazing segments can fool the sampler; check the slab result by finer sampling
            assert got == (not any(_sampled_hit(a, b, lo[k], hi[k], 400001) for k in range(len(lo))))


def test_sample_endpoints_errors_and_determinism():
    blocked = np.ones((3, 3), dtype=bool)
    blocked[1, 1] = False
    with pytest.raises(WorldError):
        sample_endpoints(GridMap(blocked, 0.1, 0.3), 0)
    g = build_grid(desk_world())
    assert sample_endpoints(g, 5) == sample_endpoints(g, 5)
    a, b = sample_endpoints(g, 5)
    assert a != b and g.is_free(a) and g.is_free(b)
    assert abs(a[0] - b[0]) + abs(a[1] - b[1]) >= 2


def test_sample_endpoints_uniform():
    g = free_grid(10, 1)
    counts = np.zeros(10)
    for s in range(10_000):
        a, _ = sample_endpoints(g, s, min_manhattan=1)
        counts[a[0]] += 1
    expected = 1000.0
    sigma = np.sqrt(10_000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - expected) < 5 * sigma)
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 27.88  # 0.999 quantile, 9 dof


def test_num_positions(caplog):
    assert num_positions((1, 1), (4, 3)) == 4
    assert num_positions((0, 0), (1, 0)) == 0
    with caplog.at_level("WARNING"):
        assert num_positions((2, 2), (2, 2)) == 0
    assert "clamped" in caplog.text


def test_step_robot_moves():
    g = free_grid(5, 5)
    p = RobotPose((3, 3), (0, 0))
    q, ok = step_robot(p, STILL, g)
    assert ok and q == p
    q, ok = step_robot(p, U, g)
    assert ok and q.cell == (3, 4)
    assert np.allclose(q.position(g) - p.position(g), [0.0, 0.1, 0.0])
    edge = RobotPose((4, 2), (0, 0))
    q, ok = step_robot(edge, R, g)
    assert not ok and q == edge


def test_step_robot_blocked_and_arrived():
    blocked = np.zeros((3, 3), dtype=bool)
    blocked[1, 1] = True
    g = GridMap(blocked, 0.1, 0.3)
    p = RobotPose((0, 1), (2, 2))
    q, ok = step_robot(p, R, g)
    assert not ok and q == p
    q, ok = step_robot(RobotPose((1, 0), (2, 0)), R, g)
    assert ok and q.arrived
    r, ok = step_robot(q, U, g)
    assert r == q and not ok
    r, ok = step_robot(q, STILL, g)
    assert r == q and ok


def test_goal_distances():
    blocked = np.zeros((3, 3), dtype=bool)
    blocked[1, :2] = True
    g = GridMap(blocked, 0.1, 0.3)
    d = goal_distances(g, (2, 0))
    assert d[0, 0] == 6 and d[1, 0] == -1 and d[2, 0] == 0


def test_trajectory_bookkeeping(tmp_path):
    g = free_grid(4, 4)
    t = Trajectory([(0, 0)])
    pose = RobotPose((0, 0), (2, 1))
    for m in (R, STILL, R, U):
        pose, _ = step_robot(pose, m, g)
        t.append(pose.cell)
    assert t.is_valid(g)
    assert t.path_length(0.1) == pytest.approx(0.3)
    assert np.allclose(t.timestamps(0.1), [0, 1, 2, 3, 4])
    assert not Trajectory([(0, 0), (2, 0)]).is_valid(g)
    p = tmp_path / "traj.csv"
    write_trajectories_csv(p, [t, Trajectory([(3, 3), (3, 2)])], g)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["robot_id", "step", "x", "y", "marker"]
    assert rows[1][4] == "I_1" and rows[5][4] == "F_1"
    assert rows[6][4] == "I_2" and rows[7][4] == "F_2"
    assert rows[1][2:4] == ["0.0500", "0.0500"]
