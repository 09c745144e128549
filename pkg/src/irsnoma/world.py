"""Indoor geometry, grid discretisation and robot motion."""
from __future__ import annotations

import csv
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

# move set, index order is part of the action encoding
MOVES = ("r", "l", "0", "u", "d")
MOVE_DELTAS = ((1, 0), (-1, 0), (0, 0), (0, 1), (0, -1))
STILL = 2


class ConfigError(ValueError):
    pass


class WorldError(RuntimeError):
    """Raised when the world cannot host the requested episode."""


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    name: str = ""

    @property
    def height(self) -> float:
        return self.hi[2]


@dataclass(frozen=True)
class WorldModel:
    room_dims: tuple[float, float, float]
    obstacles: tuple[Box, ...]
    ap_pos: tuple[float, float, float]
    irs_pos: tuple[float, float, float]
    robot_height: float = 0.3
    grid_resolution: float = 0.1

    def __post_init__(self):
        L, W, H = self.room_dims
        if min(L, W, H) <= 0:
            raise ConfigError(f"room dimensions must be positive, got {self.room_dims}")
        if not self.grid_resolution > 0:
            raise ConfigError(f"grid_resolution must be > 0, got {self.grid_resolution}")
        for b in self.obstacles:
            if any(lo < 0 or hi > dim or lo >= hi for lo, hi, dim in zip(b.lo, b.hi, self.room_dims)):
                raise ConfigError(f"obstacle {b.name or b} is not inside the room")
            if b.height <= self.robot_height:
                raise ConfigError(f"obstacle {b.name or b} is not taller than the robot")
        if not np.isclose(self.irs_pos[2], H):
            raise ConfigError("IRS must be mounted on the ceiling")

    @property
    def box_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.obstacles:
            z = np.zeros((0, 3))
            return z, z.copy()
        lo = np.array([b.lo for b in self.obstacles], dtype=np.float64)
        hi = np.array([b.hi for b in self.obstacles], dtype=np.float64)
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "room": list(self.room_dims),
            "resolution": self.grid_resolution,
            "robot_height": self.robot_height,
            "ap": list(self.ap_pos),
            "irs": list(self.irs_pos),
            "obstacles": [{"name": b.name, "min": list(b.lo), "max": list(b.hi)} for b in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldModel":
        try:
            obstacles = tuple(
                Box(tuple(map(float, o["min"])), tuple(map(float, o["max"])), o.get("name", ""))
                for o in d.get("obstacles", [])
            )
            return cls(
                room_dims=tuple(map(float, d["room"])),
                obstacles=obstacles,
                ap_pos=tuple(map(float, d["ap"])),
                irs_pos=tuple(map(float, d["irs"])),
                robot_height=float(d.get("robot_height", 0.3)),
                grid_resolution=float(d.get("resolution", 0.1)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing world key {exc}") from None


def load_world(path) -> WorldModel:
    with open(path) as fh:
        return WorldModel.from_dict(json.load(fh))


def paper_world() -> WorldModel:
    """8 m x 6 m x 3 m room with four pillars, two parterres and a fountain.

    Obstacle corners sit on 0.1 m grid lines so footprints cover whole cells.
    """
    pillars = [
        Box((1.5, 1.0, 0.0), (2.5, 2.0, 3.0), "pillar1"),
        Box((5.5, 1.0, 0.0), (6.5, 2.0, 3.0), "pillar2"),
        Box((1.5, 4.0, 0.0), (2.5, 5.0, 3.0), "pillar3"),
        Box((5.5, 4.0, 0.0), (6.5, 5.0, 3.0), "pillar4"),
    ]
    parterres = [
        Box((3.5, 0.3, 0.0), (4.5, 1.3, 1.0), "parterre1"),
        Box((3.5, 4.7, 0.0), (4.5, 5.7, 1.0), "parterre2"),
    ]
    fountain = [Box((3.2, 2.2, 0.0), (4.7, 3.7, 1.0), "fountain")]
    return WorldModel(
        room_dims=(8.0, 6.0, 3.0),
        obstacles=tuple(pillars + parterres + fountain),
        ap_pos=(0.0, 3.0, 2.0),
        irs_pos=(4.0, 3.0, 3.0),
        robot_height=0.3,
        grid_resolution=0.1,
    )


def desk_world() -> WorldModel:
    """Scaled-down 6 m x 4 m room on a 0.2 m grid."""
    obstacles = (
        Box((1.2, 0.6, 0.0), (2.0, 1.4, 3.0), "pillar1"),
        Box((4.0, 0.6, 0.0), (4.8, 1.4, 3.0), "pillar2"),
        Box((1.2, 2.6, 0.0), (2.0, 3.4, 3.0), "pillar3"),
        Box((4.0, 2.6, 0.0), (4.8, 3.4, 3.0), "pillar4"),
        Box((2.6, 0.0, 0.0), (3.4, 0.6, 1.0), "parterre1"),
        Box((2.6, 3.4, 0.0), (3.4, 4.0, 1.0), "parterre2"),
        Box((2.4, 1.4, 0.0), (3.6, 2.6, 1.0), "fountain"),
    )
    return WorldModel(
        room_dims=(6.0, 4.0, 3.0),
        obstacles=obstacles,
        ap_pos=(0.0, 2.0, 2.0),
        irs_pos=(3.0, 2.0, 3.0),
        robot_height=0.3,
        grid_resolution=0.2,
    )


Cell = tuple[int, int]


@dataclass(frozen=True)
class GridMap:
    blocked: np.ndarray  # (nx, ny) bool, True = occupied
    resolution: float
    robot_height: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.blocked.shape

    def in_bounds(self, cell: Cell) -> bool:
        i, j = cell
        nx, ny = self.blocked.shape
        return 0 <= i < nx and 0 <= j < ny

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not bool(self.blocked[cell])

    def center(self, cell: Cell) -> np.ndarray:
        i, j = cell
        return np.array([(i + 0.5) * self.resolution, (j + 0.5) * self.resolution, self.robot_height])

    def cell_of(self, pos) -> Cell:
        return int(np.floor(pos[0] / self.resolution)), int(np.floor(pos[1] / self.resolution))

    def free_cells(self) -> list[Cell]:
        ii, jj = np.nonzero(~self.blocked)
        return list(zip(ii.tolist(), jj.tolist()))

    @property
    def n_blocked(self) -> int:
        return int(self.blocked.sum())


def build_grid(world: WorldModel) -> GridMap:
    res = world.grid_resolution
    if not res > 0:
        raise ConfigError(f"grid_resolution must be > 0, got {res}")
    L, W, _ = world.room_dims
    nx = int(round(L / res))
    ny = int(round(W / res))
    lo, hi = world.box_arrays
    blocked = np.asarray(kernels.blocked_cells(nx, ny, float(res), lo, hi), dtype=bool)
    blocked.setflags(write=False)
    return GridMap(blocked=blocked, resolution=float(res), robot_height=world.robot_height)


def line_of_sight(a, b, world: WorldModel) -> bool:
    """True when the segment a->b crosses no obstacle box."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.array_equal(a, b):
        return True
    lo, hi = world.box_arrays
    return not bool(kernels.segment_hits_boxes(a, b, lo, hi))


def sample_endpoints(grid: GridMap, rng_seed, min_manhattan: int = 2) -> tuple[Cell, Cell]:
    """Draw a distinct (initial, final) pair of free cells.

    Pairs closer than ``min_manhattan`` grid steps are rejected and redrawn.
    """
    free = grid.free_cells()
    if len(free) < 2:
        raise WorldError(f"need at least 2 free cells, grid has {len(free)}")
    rng = np.random.default_rng(rng_seed)
    for _ in range(10_000):
        a, b = rng.choice(len(free), size=2, replace=False)
        ca, cb = free[int(a)], free[int(b)]
        if abs(ca[0] - cb[0]) + abs(ca[1] - cb[1]) >= min_manhattan:
            return ca, cb
    raise WorldError(f"no free cell pair at Manhattan distance >= {min_manhattan}")


def num_positions(initial: Cell, final: Cell) -> int:
    n = abs(initial[0] - final[0]) + abs(initial[1] - final[1]) - 1
    if n < 0:
        log.warning("num_positions: co-located endpoints %s give %d, clamped to 0", initial, n)
        return 0
    return n


@dataclass(frozen=True)
class RobotPose:
    cell: Cell
    goal: Cell
    arrived: bool = False

    def position(self, grid: GridMap) -> np.ndarray:
        return grid.center(self.cell)


def step_robot(pose: RobotPose, move: int, grid: GridMap) -> tuple[RobotPose, bool]:
    """Apply one move from the move set.

    Returns the new pose and whether the move was valid.  Moves into blocked
    cells or off the grid leave the pose unchanged.  Arrived robots stay put.
    """
    if pose.arrived:
        return pose, move == STILL
    di, dj = MOVE_DELTAS[move]
    nxt = (pose.cell[0] + di, pose.cell[1] + dj)
    if not grid.is_free(nxt):
        return pose, False
    return RobotPose(nxt, pose.goal, nxt == pose.goal), True


def goal_distances(grid: GridMap, goal: Cell) -> np.ndarray:
    """Breadth-first step counts to ``goal`` over free cells (-1 = unreachable)."""
    dist = np.full(grid.shape, -1, dtype=np.int64)
    if not grid.is_free(goal):
        return dist
    dist[goal] = 0
    queue = deque([goal])
    while queue:
        c = queue.popleft()
        for di, dj in MOVE_DELTAS:
            if di == dj == 0:
                continue
            n = (c[0] + di, c[1] + dj)
            if grid.is_free(n) and dist[n] < 0:
                dist[n] = dist[c] + 1
                queue.append(n)
    return dist


@dataclass
class Trajectory:
    cells: list = field(default_factory=list)

    def append(self, cell: Cell):
        self.cells.append(tuple(cell))

    def path_length(self, resolution: float) -> float:
        moves = sum(1 for a, b in zip(self.cells, self.cells[1:]) if a != b)
        return moves * resolution

    def timestamps(self, resolution: float, velocity: float = 0.1) -> np.ndarray:
        return np.arange(len(self.cells)) * resolution / velocity

    def is_valid(self, grid: GridMap) -> bool:
        if not all(grid.is_free(c) for c in self.cells):
            return False
        return all(abs(a[0] - b[0]) + abs(a[1] - b[1]) <= 1 for a, b in zip(self.cells, self.cells[1:]))


def write_trajectories_csv(path, trajectories: Sequence[Trajectory], grid: GridMap):
    """Rows of (robot_id, step, x, y, marker); markers are I_w / F_w at the ends."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["robot_id", "step", "x", "y", "marker"])
        for rid, traj in enumerate(trajectories, start=1):
            last = len(traj.cells) - 1
            for s, cell in enumerate(traj.cells):
                x, y, _ = grid.center(cell)
                marker = f"I_{rid}" if s == 0 else (f"F_{rid}" if s == last else "")
                w.writerow([rid, s, f"{x:.4f}", f"{y:.4f}", marker])
