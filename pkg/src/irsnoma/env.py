"""Episode dynamics for the IRS-aided multi-robot downlink.

The AP is the single decision maker.  Each step it picks one move per robot,
one codebook index per IRS sub-surface and one power profile.  Robots must
reach their final cells before the horizon: a move is only offered when the
target cell is free and the goal stays reachable in the remaining steps.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import kernels, noma
from .channel import ChannelField, ChannelParams, IrsConfig, PhaseState
from .world import (
    MOVE_DELTAS, STILL, GridMap, RobotPose, Trajectory, WorldModel, build_grid, goal_distances,
    sample_endpoints, step_robot,
)

N_MOVES = len(MOVE_DELTAS)
SCHEMES = ("noma", "oma")
HARD_CONSTRAINTS = ("unit_modulus", "sic_order", "power_budget", "obstacle_free")


@dataclass(frozen=True)
class EnvConfig:
    n_robots: int = 2
    bits: int = 2                 # phase resolution B0
    v: int = 3                    # number of power profiles
    power_levels: int = 4         # simplex step = budget / power_levels
    power_order: str = "as-paper"
    budget: float = 0.1           # watts (20 dBm)
    r_min: float = 0.0            # QoS threshold, bits/s/Hz
    scheme: str = "noma"
    slack_steps: int = 10         # horizon = longest shortest path + slack
    max_steps: int | None = None  # explicit horizon, overrides the slack rule
    static_robots: bool = False   # robots never move; move branches dropped
    min_manhattan: int = 2

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.n_robots < 1:
            raise ValueError("need at least one robot")
        if self.static_robots and self.max_steps is None:
            raise ValueError("static_robots needs an explicit max_steps")


@dataclass
class Snapshot:
    t: int
    cells: list
    phase_index: np.ndarray   # (M,) sub-surface codebook indices
    power_index: int
    powers: np.ndarray
    gains: np.ndarray
    order: np.ndarray
    rates: np.ndarray
    qos_ok: np.ndarray
    arrived: list
    sinr: np.ndarray | None = None   # OMA: single-user SNR in the robot's own slot

    @property
    def sum_rate(self) -> float:
        return float(self.rates.sum())


@dataclass
class StepResult:
    snapshot: Snapshot
    invalid: np.ndarray
    done: bool


@dataclass
class ConstraintLog:
    checked: int = 0
    violations: Counter = field(default_factory=Counter)

    def record(self, report: dict):
        self.checked += 1
        for key, res in report.items():
            if not res.ok:
                self.violations[key] += 1

    def merge(self, other: "ConstraintLog"):
        self.checked += other.checked
        self.violations.update(other.violations)

    def hard_ok(self) -> bool:
        return all(self.violations[k] == 0 for k in HARD_CONSTRAINTS)


class RobotNomaEnv:
    def __init__(self, world: WorldModel, params: ChannelParams, irs: IrsConfig, config: EnvConfig, seed: int,
                 endpoints=None, field_: ChannelField | None = None):
        self.world = world
        self.params = params
        self.irs = irs
        self.config = config
        self.seed = int(seed)
        self.grid: GridMap = build_grid(world)
        self.field = field_ if field_ is not None else ChannelField(world, self.grid, params, irs, self.seed)
        if endpoints is None:
            endpoints = [
                sample_endpoints(self.grid, [self.seed, 2, r], config.min_manhattan) for r in range(config.n_robots)
            ]
        self.endpoints = [(tuple(a), tuple(b)) for a, b in endpoints]
        self._dist = [goal_distances(self.grid, goal) for _, goal in self.endpoints]
        for r, (start, _) in enumerate(self.endpoints):
            if self._dist[r][start] < 0:
                raise ValueError(f"robot {r}: final cell unreachable from {start}")
        if config.max_steps is not None:
            self.horizon = int(config.max_steps)
        else:
            self.horizon = max(int(d[s]) for d, (s, _) in zip(self._dist, self.endpoints)) + config.slack_steps
        self.profiles = noma.rank_power_profiles(config.n_robots, config.v, config.power_levels, config.power_order)
        self.levels = 2 ** config.bits
        self.log = ConstraintLog()
        self._sub_of = irs.subsurface_of()
        self.poses: list[RobotPose] = []
        self.trajectories: list[Trajectory] = []

    # -- shape of the decision ---------------------------------------------
    @property
    def n_robots(self) -> int:
        return self.config.n_robots

    @property
    def M(self) -> int:
        return self.irs.M

    def branch_sizes(self) -> list[int]:
        moves = [] if self.config.static_robots else [N_MOVES] * self.n_robots
        return moves + [self.levels] * self.M + [len(self.profiles)]

    @property
    def state_dim(self) -> int:
        return self.M + 3 * self.n_robots

    # -- dynamics -----------------------------------------------------------
    def reset(self, rng) -> Snapshot:
        self.t = 0
        self.poses = [RobotPose(s, g, False) for s, g in self.endpoints]
        self.trajectories = [Trajectory([s]) for s, _ in self.endpoints]
        self.phase_index = rng.integers(0, self.levels, size=self.M)
        self.power_index = int(rng.integers(0, len(self.profiles)))
        self._evaluate()
        return self.snap

    def _evaluate(self):
        cells = [p.cell for p in self.poses]
        N, K = self.n_robots, self.irs.K
        psi = np.empty((N, K), dtype=np.complex128)
        hbar = np.empty(N, dtype=np.complex128)
        for r, c in enumerate(cells):
            hb, _, ps = self.field.links(r, c)
            hbar[r] = hb
            psi[r] = ps
        phases = PhaseState(self.phase_index[self._sub_of], self.config.bits)
        gains = kernels.effective_gains(psi, hbar, phases.phasors)
        order = noma.decoding_order(gains)
        cfg = self.config
        if cfg.scheme == "noma":
            powers = noma.allocate(self.profiles[self.power_index], order, cfg.budget)
            report = noma.rate_report(gains, powers, order, self.params.sigma2, cfg.r_min)
            rates, qos, tau = report.rate, report.qos_ok, report.sinr
        else:
            powers = np.full(N, cfg.budget / N)
            rates = noma.oma_rates(gains, cfg.budget, self.params.sigma2)
            tau = gains * cfg.budget / self.params.sigma2
            qos = rates >= cfg.r_min
        self.snap = Snapshot(self.t, cells, self.phase_index.copy(), self.power_index, powers, gains, order, rates,
                             qos, [p.arrived for p in self.poses], tau)
        self.log.record(noma.check_constraints(
            gains=gains, order=order, powers=powers, budget=cfg.budget, rates=rates, r_min=cfg.r_min,
            phases=phases, cells=cells, grid=self.grid,
        ))

    def move_mask(self) -> np.ndarray:
        """(N, 5) allowed moves at the current step."""
        mask = np.zeros((self.n_robots, N_MOVES), dtype=bool)
        left = self.horizon - (self.t + 1)
        for r, pose in enumerate(self.poses):
            if pose.arrived or self.config.static_robots:
                mask[r, STILL] = True
                continue
            dist = self._dist[r]
            for m, (di, dj) in enumerate(MOVE_DELTAS):
                c = (pose.cell[0] + di, pose.cell[1] + dj)
                if self.grid.is_free(c) and 0 <= dist[c] <= left:
                    mask[r, m] = True
            if not mask[r].any():
                # horizon too short for this robot; only stillness is executable
                mask[r, STILL] = True
        return mask

    def action_mask(self) -> list[np.ndarray]:
        """Allowed options per branch, in branch order."""
        out = [] if self.config.static_robots else list(self.move_mask())
        out += [np.ones(self.levels, dtype=bool)] * self.M
        out.append(np.ones(len(self.profiles), dtype=bool))
        return out

    def split_action(self, action) -> tuple[np.ndarray, np.ndarray, int]:
        action = np.asarray(action, dtype=np.int64)
        n = 0 if self.config.static_robots else self.n_robots
        moves = action[:n] if n else np.full(self.n_robots, STILL)
        return moves, action[n:n + self.M], int(action[n + self.M])

    @property
    def done(self) -> bool:
        return self.t >= self.horizon or (not self.config.static_robots and all(p.arrived for p in self.poses))

    def step(self, action) -> StepResult:
        moves, phases, power = self.split_action(action)
        invalid = np.zeros(self.n_robots, dtype=bool)
        for r in range(self.n_robots):
            pose, ok = step_robot(self.poses[r], int(moves[r]), self.grid)
            self.poses[r] = pose
            invalid[r] = not ok
            self.trajectories[r].append(pose.cell)
        self.phase_index = np.asarray(phases, dtype=np.int64).copy()
        self.power_index = power
        self.t += 1
        self._evaluate()
        return StepResult(self.snap, invalid, self.done)

    # -- helpers ------------------------------------------------------------
    def shortest_lengths(self) -> list[int]:
        return [int(d[s]) for d, (s, _) in zip(self._dist, self.endpoints)]
