"""Dueling double deep Q-learning for joint trajectory, phase and power control.

Three variants share everything but the head and the bootstrap:

``d3qn``          dueling head, action picked by the online net, valued by the target net
``double-only``   plain head, online-argmax / target-value bootstrap
``dueling-only``  dueling head, max over the target net
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .env import RobotNomaEnv, Snapshot
from .neural import QNet, sgd_step, td_loss

VARIANTS = ("d3qn", "double-only", "dueling-only")


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.95            # discount
    lr: float = 1e-3               # SGD step size
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay: float = 0.995       # multiplicative, per episode
    sync_every: int = 200          # steps between target refreshes
    capacity: int = 100_000
    batch_size: int = 64
    reward_scale: float = 1000.0
    qos_penalty: float = 0.0
    move_penalty: float = 0.0
    hidden: tuple = (128, 128)
    variant: str = "d3qn"
    flat: bool = False             # one head over the joint action product
    normalize_td: bool = True      # fit TD targets on reward / reward_scale

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.batch_size < 1 or self.capacity < self.batch_size or self.sync_every < 1:
            raise ValueError("replay / sync sizes must be positive and capacity >= batch size")

    def epsilon(self, episode: int) -> float:
        return max(self.eps_end, self.eps_start * self.eps_decay ** episode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

def encode_state(snap: Snapshot, levels: int, grid_shape, budget: float) -> np.ndarray:
    """[phases / levels, (i / nx, j / ny) per robot, p_i / budget]."""
    nx, ny = grid_shape
    phases = np.asarray(snap.phase_index, dtype=np.float64) / levels
    pos = np.array([(c[0] / nx, c[1] / ny) for c in snap.cells], dtype=np.float64).reshape(-1)
    power = np.asarray(snap.powers, dtype=np.float64) / budget
    return np.concatenate([phases, pos, power])


def decode_state(vec, n_robots: int, M: int, levels: int, grid_shape, budget: float) -> dict:
    nx, ny = grid_shape
    vec = np.asarray(vec, dtype=np.float64)
    phases = np.rint(vec[:M] * levels).astype(np.int64)
    pos = vec[M:M + 2 * n_robots].reshape(n_robots, 2)
    cells = [(int(round(x * nx)), int(round(y * ny))) for x, y in pos]
    powers = vec[M + 2 * n_robots:] * budget
    return {"phase_index": phases, "cells": cells, "powers": powers}


# ---------------------------------------------------------------------------
# actions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionLayout:
    branch_sizes: tuple
    flat: bool = False

    @property
    def n_branches(self) -> int:
        return len(self.branch_sizes)

    @property
    def joint_size(self) -> int:
        return int(math.prod(self.branch_sizes))

    @property
    def head_sizes(self) -> tuple:
        return (self.joint_size,) if self.flat else tuple(self.branch_sizes)

    def to_joint(self, action) -> int:
        return int(np.ravel_multi_index(tuple(int(a) for a in action), self.branch_sizes))

    def from_joint(self, index: int) -> np.ndarray:
        return np.array(np.unravel_index(int(index), self.branch_sizes), dtype=np.int64)

    def head_mask(self, branch_masks) -> np.ndarray:
        """Concatenated (branched) or outer-product (flat) mask over head outputs."""
        if not self.flat:
            return np.concatenate(branch_masks)
        m = np.ones((), dtype=bool)
        for bm in branch_masks:
            m = np.multiply.outer(m, bm)
        return m.reshape(-1)

    def head_actions(self, action) -> np.ndarray:
        """Per-head indices used to pick Q entries in the TD loss."""
        if self.flat:
            return np.array([self.to_joint(action)], dtype=np.int64)
        return np.asarray(action, dtype=np.int64)


def enumerate_actions(n_robots: int, M: int, bits: int, v: int, static_robots: bool = False,
                      flat: bool = False) -> ActionLayout:
    moves = () if static_robots else (5,) * n_robots
    return ActionLayout(moves + (2 ** bits,) * M + (v,), flat)


def _masked_argmax(q, mask):
    if mask is None:
        return int(np.argmax(q))
    return int(np.argmax(np.where(mask, q, -np.inf)))


def select_action(q, layout: ActionLayout, epsilon: float, rng, branch_masks=None) -> np.ndarray:
    """epsilon-greedy over the layout; returns per-branch indices.

    Exploration draws each branch uniformly from its allowed options; the
    greedy choice is a per-head argmax with ties to the lowest index.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if branch_masks is None:
        branch_masks = [np.ones(n, dtype=bool) for n in layout.branch_sizes]
    if epsilon > 0 and rng.random() < epsilon:
        u = rng.random(len(branch_masks))
        out = np.empty(len(branch_masks), dtype=np.int64)
        for b, m in enumerate(branch_masks):
            allowed = np.flatnonzero(m)
            out[b] = allowed[int(u[b] * allowed.size)]
        return out
    q = np.asarray(q)
    if layout.flat:
        return layout.from_joint(_masked_argmax(q, layout.head_mask(branch_masks)))
    out = np.empty(layout.n_branches, dtype=np.int64)
    start = 0
    for b, (n, m) in enumerate(zip(layout.branch_sizes, branch_masks)):
        out[b] = _masked_argmax(q[start:start + n], m)
        start += n
    return out


# ---------------------------------------------------------------------------
# reward and targets
# ---------------------------------------------------------------------------

def compute_reward(prev_rates, cur_rates, qos_ok=None, invalid=None, scale: float = 1000.0,
                   qos_penalty: float = 0.0, move_penalty: float = 0.0) -> float:
    """scale * sum_i (R_i(t) - R_i(t-1)) minus optional penalty counts."""
    r = scale * float(np.sum(np.asarray(cur_rates) - np.asarray(prev_rates)))
    if qos_ok is not None and qos_penalty:
        r -= qos_penalty * int(np.size(qos_ok) - np.count_nonzero(qos_ok))
    if invalid is not None and move_penalty:
        r -= move_penalty * int(np.count_nonzero(invalid))
    return r


def bootstrap_values(Q_online, Q_target, head_slices, mask=None, double: bool = True) -> np.ndarray:
    """Per-sample average over heads of the target-net value at the chosen action.

    ``double=True`` picks the action with the online net, otherwise the
    target net's own maximum is used.
    """
    Q_online = np.atleast_2d(Q_online)
    Q_target = np.atleast_2d(Q_target)
    mask = np.ones(Q_target.shape, dtype=bool) if mask is None else np.atleast_2d(mask)
    starts = np.array([s.start for s in head_slices] + [head_slices[-1].stop], dtype=np.int64)
    sel = Q_online if double else Q_target
    a = kernels.segment_argmax(np.ascontiguousarray(sel), starts, np.ascontiguousarray(mask))
    cols = a + starts[None, :-1]
    return Q_target[np.arange(Q_target.shape[0])[:, None], cols].mean(axis=1)


def double_dqn_target(reward, next_state, terminal, online: QNet, target: QNet, gamma: float,
                      mask=None, double: bool = True):
    """W = r for terminal transitions, else r + gamma * Q_target(s', a*)."""
    reward = np.asarray(reward, dtype=np.float64)
    terminal = np.asarray(terminal, dtype=bool)
    if gamma == 0.0:
        return reward.copy() if reward.ndim else float(reward)
    next_state = np.atleast_2d(next_state)
    q_t = target.forward(next_state)
    q_o = online.forward(next_state) if double else q_t
    boot = bootstrap_values(q_o, q_t, target.slices, mask, double)
    W = reward + gamma * np.where(terminal, 0.0, boot.reshape(reward.shape) if reward.ndim else boot[0])
    return W if reward.ndim else float(W)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

class ReplayMemory:
    """Ring buffer of (e_t, f_t, r_t, e_t+1, terminal, next-mask)."""

    def __init__(self, capacity: int, state_dim: int, n_heads: int, mask_dim: int):
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, n_heads), dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.mask2 = np.zeros((capacity, mask_dim), dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def push(self, s, a, r, s2, done, mask2):
        i = self._next
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s2[i] = s2
        self.done[i] = done
        self.mask2[i] = mask2
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng):
        idx = rng.choice(self.size, size=n, replace=False)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx], self.mask2[idx]


# ---------------------------------------------------------------------------
# learner
# ---------------------------------------------------------------------------

class Agent:
    def __init__(self, state_dim: int, layout: ActionLayout, config: AgentConfig, seed):
        self.config = config
        self.layout = layout
        ss = np.random.SeedSequence(seed)
        init_ss, act_ss, replay_ss = ss.spawn(3)
        dueling = config.variant != "double-only"
        self.online = QNet(state_dim, config.hidden, layout.head_sizes, dueling=dueling,
                           rng=np.random.default_rng(init_ss))
        self.target = self.online.copy()
        self.rng = np.random.default_rng(act_ss)
        self.replay_rng = np.random.default_rng(replay_ss)
        mask_dim = self.online.n_out
        n_heads = 1 if layout.flat else layout.n_branches
        self.memory = ReplayMemory(config.capacity, state_dim, n_heads, mask_dim)
        self.steps = 0
        self.updates = 0
        self.skipped = 0

    @property
    def double(self) -> bool:
        return self.config.variant != "dueling-only"

    def act(self, state, branch_masks, epsilon: float) -> np.ndarray:
        q = self.online.forward(state)
        return select_action(q, self.layout, epsilon, self.rng, branch_masks)

    def remember(self, s, action, r, s2, done, next_masks):
        self.memory.push(s, self.layout.head_actions(action), r, s2, done, self.layout.head_mask(next_masks))

    def train_step(self) -> float | None:
        cfg = self.config
        self.steps += 1
        loss = None
        if len(self.memory) < cfg.batch_size:
            self.skipped += 1
        else:
            s, a, r, s2, done, m2 = self.memory.sample(cfg.batch_size, self.replay_rng)
            if cfg.normalize_td and cfg.reward_scale:
                r = r / cfg.reward_scale
            W = double_dqn_target(r, s2, done, self.online, self.target, cfg.gamma, m2, self.double)
            loss, dQ = td_loss(self.online, s, a, W, keep=True)
            sgd_step(self.online, self.online.backward(dQ), cfg.lr)
            self.updates += 1
        if self.steps % cfg.sync_every == 0:
            self.target.load_from(self.online)
        return loss


@dataclass
class EpisodeStats:
    rewards: list = field(default_factory=list)
    sum_rates: list = field(default_factory=list)   # includes the initial slot
    losses: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)
    phase_history: list = field(default_factory=list)
    power_history: list = field(default_factory=list)
    rate_rows: list = field(default_factory=list)   # (t, robot, O, p, sinr, rate, qos)

    @property
    def steps(self) -> int:
        return len(self.rewards)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    @property
    def mean_sum_rate(self) -> float:
        return float(np.mean(self.sum_rates)) if self.sum_rates else 0.0


def _rate_rows(snap: Snapshot):
    return [
        (snap.t, r, int(snap.order[r]), float(snap.powers[r]), float(snap.sinr[r]), float(snap.rates[r]),
         bool(snap.qos_ok[r]))
        for r in range(len(snap.cells))
    ]


def run_episode(env: RobotNomaEnv, agent: Agent, episode_rng, epsilon: float, train: bool = True,
                record_rates: bool = False) -> EpisodeStats:
    cfg = agent.config
    levels = env.levels
    shape = env.grid.shape
    budget = env.config.budget
    stats = EpisodeStats()
    snap = env.reset(episode_rng)
    stats.sum_rates.append(snap.sum_rate)
    stats.phase_history.append(snap.phase_index.tolist())
    stats.power_history.append(snap.power_index)
    if record_rates:
        stats.rate_rows += _rate_rows(snap)
    s = encode_state(snap, levels, shape, budget)
    masks = env.action_mask()
    prev = snap.rates
    done = env.done
    while not done:
        action = agent.act(s, masks, epsilon)
        res = env.step(action)
        snap = res.snapshot
        r = compute_reward(prev, snap.rates, snap.qos_ok, res.invalid, cfg.reward_scale, cfg.qos_penalty,
                           cfg.move_penalty)
        s2 = encode_state(snap, levels, shape, budget)
        masks2 = env.action_mask()
        done = res.done
        if train:
            agent.remember(s, action, r, s2, done, masks2)
            loss = agent.train_step()
            if loss is not None:
                stats.losses.append(loss)
        stats.rewards.append(r)
        stats.sum_rates.append(snap.sum_rate)
        stats.phase_history.append(snap.phase_index.tolist())
        stats.power_history.append(snap.power_index)
        if record_rates:
            stats.rate_rows += _rate_rows(snap)
        s, masks, prev = s2, masks2, snap.rates
    stats.trajectories = [list(t.cells) for t in env.trajectories]
    return stats


def detect_convergence(history, window: int = 50, delta: float = 0.05, tail: int = 1000):
    """1-based episode at which the trailing mean settles for good.

    The reference is the mean of the last ``tail`` episodes; convergence is
    the first episode whose trailing ``window`` average, and every later one,
    lies strictly inside ``delta * |reference|`` of it.  Returns ``None`` when
    no such episode exists.
    """
    h = np.asarray(history, dtype=np.float64)
    if h.size < window:
        raise ValueError(f"need at least {window} episodes, got {h.size}")
    ref = float(h[-tail:].mean())
    ma = np.convolve(h, np.ones(window) / window, mode="valid")
    inside = np.abs(ma - ref) < delta * abs(ref)
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    first = 0 if outside.size == 0 else int(outside[-1]) + 1
    return first + window
