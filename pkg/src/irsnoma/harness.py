"""Experiment configuration, seeded run orchestration and CSV emission.

A run is one (scheme, variant, seed) triple: train for ``episodes`` episodes,
then roll out the greedy policy once.  Every random stream is derived from
the seed, so a configuration fully determines every byte written, except
``timing.json``, which records wall-clock times.

Output layout of :func:`run_suite`::

    <out>/config.json
    <out>/<scheme>/<variant>/seed_<s>/{episodes,learning_curve,trajectories,
                                       rates,sumrate_vs_path,channel}.csv
    <out>/<scheme>/<variant>/seed_<s>/checkpoint.bin
    <out>/summary.csv, comparison.csv
    <out>/learning_curve_<scheme>_<variant>.csv
    <out>/sumrate_vs_path_<scheme>.csv
    <out>/timing.json
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .agent import VARIANTS, Agent, AgentConfig, EpisodeStats, detect_convergence, enumerate_actions, run_episode
from .channel import (ChannelParams, FrozenField, IrsConfig, PhaseState, best_phase_bruteforce, dbm_to_watts,
                      effective_gains, random_realization)
from .env import EnvConfig, RobotNomaEnv
from .neural import QNet, load_checkpoint
from .world import ConfigError, Trajectory, WorldModel, desk_world, paper_world

log = logging.getLogger(__name__)

CHANNEL_DEFAULTS = {
    "C_db": -30.0,
    "gamma": {"Ai": 3.0, "Ii": 2.4, "AI": 2.2},
    "rician_los_db": 10.0,
    "rician_blocked_db": None,
    "noise_dbm": -80.0,
    "wavelength": 0.125,
    "amplitude_model": "power",
}


@dataclass(frozen=True)
class SchemeSpec:
    """One access scheme / surface size combination to train and score."""

    name: str
    M: int = 0
    K_h: int = 1
    K_v: int = 1
    scheme: str = "noma"

    @property
    def irs(self) -> IrsConfig:
        return IrsConfig(M=self.M, K_h=self.K_h, K_v=self.K_v)

    @property
    def K(self) -> int:
        return self.irs.K


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str
    world: WorldModel
    channel: dict                  # keyword arguments of ChannelParams.from_db
    env: EnvConfig                 # env.scheme is overridden per SchemeSpec
    agent: AgentConfig
    schemes: tuple                 # SchemeSpec entries; the first one is the default
    variants: tuple = ("d3qn",)
    seeds: tuple = (0,)
    episodes: int = 500
    output_dir: str = "runs"
    power_dbm: float = 20.0
    convergence: dict = field(default_factory=lambda: {"window": 50, "delta": 0.05, "tail": 1000})

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; choose from {VARIANTS}")
        if self.episodes < 1:
            raise ConfigError("episode budget must be >= 1")
        names = [s.name for s in self.schemes]
        if len(set(names)) != len(names):
            raise ConfigError("scheme names must be unique")
        bad = set(self.convergence) - {"window", "delta", "tail"}
        if bad:
            raise ConfigError(f"unknown convergence keys {sorted(bad)}")
        ChannelParams.from_db(**self.channel)

    @property
    def channel_params(self) -> ChannelParams:
        return ChannelParams.from_db(**self.channel)

    @property
    def budget(self) -> float:
        return float(dbm_to_watts(self.power_dbm))

    def scheme(self, name: str | None = None) -> SchemeSpec:
        if name is None:
            return self.schemes[0]
        for s in self.schemes:
            if s.name == name:
                return s
        raise ConfigError(f"unknown scheme {name!r}; configured: {[s.name for s in self.schemes]}")

    def env_config(self, spec: SchemeSpec) -> EnvConfig:
        return replace(self.env, scheme=spec.scheme, budget=self.budget)

    def agent_config(self, variant: str) -> AgentConfig:
        return replace(self.agent, variant=variant)


# ---------------------------------------------------------------------------
# presets and (de)serialisation
# ---------------------------------------------------------------------------

def preset(name: str) -> ExperimentConfig:
    """Named configurations: ``desk`` (CI scale), ``paper`` (hours) and ``smoke``."""
    if name == "desk":
        # Myopic learner: the reward telescopes, so discounting only shrinks
        # the action gap, and the move masks already force arrival in time.
        return ExperimentConfig(
            preset="desk",
            world=desk_world(),
            channel=dict(CHANNEL_DEFAULTS),
            env=EnvConfig(n_robots=2, bits=2, v=3, slack_steps=10),
            agent=AgentConfig(gamma=0.0, lr=1e-2, eps_decay=0.99),
            schemes=(
                SchemeSpec("irs-noma-k8", M=4, K_h=2),
                SchemeSpec("irs-noma-k4", M=4),
                SchemeSpec("noirs-noma", M=0),
                SchemeSpec("irs-oma-k8", M=4, K_h=2, scheme="oma"),
                SchemeSpec("noirs-oma", M=0, scheme="oma"),
            ),
            variants=VARIANTS,
            seeds=tuple(range(10)),
            episodes=500,
            output_dir="runs/desk",
            convergence={"window": 50, "delta": 0.05, "tail": 100},
        )
    if name == "paper":
        return ExperimentConfig(
            preset="paper",
            world=paper_world(),
            channel=dict(CHANNEL_DEFAULTS),
            env=EnvConfig(n_robots=3, bits=2, v=4, slack_steps=20),
            agent=AgentConfig(),
            schemes=(
                SchemeSpec("irs-noma-k30", M=10, K_h=3),
                SchemeSpec("irs-noma-k10", M=10),
                SchemeSpec("noirs-noma", M=0),
                SchemeSpec("irs-oma-k30", M=10, K_h=3, scheme="oma"),
                SchemeSpec("irs-oma-k10", M=10, scheme="oma"),
                SchemeSpec("noirs-oma", M=0, scheme="oma"),
            ),
            variants=VARIANTS,
            seeds=tuple(range(10)),
            episodes=3000,
            output_dir="runs/paper",
        )
    if name == "smoke":
        desk = preset("desk")
        return replace(desk, preset="smoke", variants=("d3qn",), seeds=(0,), episodes=5,
                       output_dir="runs/smoke", schemes=(SchemeSpec("irs-noma-k4", M=4),),
                       agent=replace(desk.agent, batch_size=16))
    raise ConfigError(f"unknown preset {name!r}; choose from desk, paper, smoke")


PRESETS = ("desk", "paper", "smoke")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    env = asdict(cfg.env)
    env.pop("budget")
    env.pop("scheme")
    return {
        "preset": cfg.preset,
        "world": cfg.world.to_dict(),
        "channel": dict(cfg.channel),
        "power_dbm": cfg.power_dbm,
        "env": env,
        "agent": cfg.agent.to_dict(),
        "schemes": [asdict(s) for s in cfg.schemes],
        "variants": list(cfg.variants),
        "seeds": list(cfg.seeds),
        "episodes": cfg.episodes,
        "output_dir": cfg.output_dir,
        "convergence": dict(cfg.convergence),
    }


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a config; keys absent from ``d`` fall back to the named preset (default ``desk``)."""
    base = preset(d.get("preset", "desk"))
    known = {"preset", "world", "channel", "power_dbm", "env", "agent", "schemes", "variants", "seeds",
             "episodes", "output_dir", "convergence"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        world = WorldModel.from_dict(d["world"]) if "world" in d else base.world
        channel = {**base.channel, **d.get("channel", {})}
        env = replace(base.env, **d.get("env", {}))
        agent_d = dict(d.get("agent", {}))
        if "hidden" in agent_d:
            agent_d["hidden"] = tuple(agent_d["hidden"])
        agent = replace(base.agent, **agent_d)
        schemes = tuple(SchemeSpec(**s) for s in d["schemes"]) if "schemes" in d else base.schemes
        return ExperimentConfig(
            preset=d.get("preset", base.preset),
            world=world,
            channel=channel,
            env=env,
            agent=agent,
            schemes=schemes,
            variants=tuple(d.get("variants", base.variants)),
            seeds=tuple(int(s) for s in d.get("seeds", base.seeds)),
            episodes=int(d.get("episodes", base.episodes)),
            output_dir=str(d.get("output_dir", base.output_dir)),
            power_dbm=float(d.get("power_dbm", base.power_dbm)),
            convergence={**base.convergence, **d.get("convergence", {})},
        )
    except TypeError as exc:
        raise ConfigError(f"bad config entry: {exc}") from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    scheme: str
    variant: str
    seed: int
    K: int
    episodes: list          # (episode, cumulative reward, steps, mean sum-rate)
    convergence: int | None
    greedy: EpisodeStats
    path_lengths: list      # metres per robot along the greedy trajectories
    resolution: float
    checked: int            # constraint evaluations, training and greedy steps
    violations: dict
    hard_ok: bool
    checkpoint: bytes
    channel_dump: list      # (link, robot, k, re, im) rows at the initial cells
    wall_clock: float = 0.0

    @property
    def rewards(self) -> list:
        return [e[1] for e in self.episodes]

    @property
    def greedy_sum_rate(self) -> float:
        return self.greedy.mean_sum_rate


def make_env(cfg: ExperimentConfig, spec: SchemeSpec, seed: int) -> RobotNomaEnv:
    return RobotNomaEnv(cfg.world, cfg.channel_params, spec.irs, cfg.env_config(spec), seed=seed)


def make_agent(cfg: ExperimentConfig, env: RobotNomaEnv, variant: str, seed: int) -> Agent:
    acfg = cfg.agent_config(variant)
    layout = enumerate_actions(env.n_robots, env.M, env.config.bits, len(env.profiles),
                               env.config.static_robots, acfg.flat)
    return Agent(env.state_dim, layout, acfg, seed=[seed, 3])


def evaluate_greedy(env: RobotNomaEnv, agent: Agent, seed: int) -> EpisodeStats:
    """Single epsilon = 0 rollout without learning."""
    return run_episode(env, agent, np.random.default_rng([seed, 5]), 0.0, train=False, record_rates=True)


def convergence_episode(rewards, convergence: dict):
    window = int(convergence.get("window", 50))
    if len(rewards) < window:
        return None
    return detect_convergence(rewards, window=window, delta=float(convergence.get("delta", 0.05)),
                              tail=int(convergence.get("tail", 1000)))


def _channel_rows(env: RobotNomaEnv) -> list:
    real = env.field.realization([s for s, _ in env.endpoints])
    rows = [("AI", "", k, repr(float(v.real)), repr(float(v.imag))) for k, v in enumerate(real.h)]
    for i in range(real.N):
        rows.append(("Ai", i, 0, repr(float(real.hbar[i].real)), repr(float(real.hbar[i].imag))))
        rows += [("Ii", i, k, repr(float(v.real)), repr(float(v.imag))) for k, v in enumerate(real.g[i])]
    return rows


def train_run(cfg: ExperimentConfig, spec: SchemeSpec, variant: str, seed: int, episodes: int | None = None,
              return_agent: bool = False):
    """Train one agent and evaluate its greedy policy; returns a :class:`RunResult`."""
    t0 = time.perf_counter()
    n_ep = cfg.episodes if episodes is None else int(episodes)
    env = make_env(cfg, spec, seed)
    agent = make_agent(cfg, env, variant, seed)
    acfg = agent.config
    rng = np.random.default_rng([seed, 4])
    curve = []
    for ep in range(n_ep):
        st = run_episode(env, agent, rng, acfg.epsilon(ep))
        curve.append((ep + 1, st.total_reward, st.steps, st.mean_sum_rate))
    greedy = evaluate_greedy(env, agent, seed)
    conv = convergence_episode([c[1] for c in curve], cfg.convergence)
    res = RunResult(
        scheme=spec.name, variant=variant, seed=int(seed), K=spec.K, episodes=curve, convergence=conv,
        greedy=greedy,
        path_lengths=[Trajectory(t).path_length(env.grid.resolution) for t in greedy.trajectories],
        resolution=env.grid.resolution,
        checked=env.log.checked, violations=dict(sorted(env.log.violations.items())), hard_ok=env.log.hard_ok(),
        checkpoint=agent.online.to_bytes(), channel_dump=_channel_rows(env),
        wall_clock=time.perf_counter() - t0,
    )
    log.info("%s/%s/seed %d: greedy sum-rate %.4f, convergence %s, %.1fs", spec.name, variant, seed,
             res.greedy_sum_rate, conv, res.wall_clock)
    return (res, agent, env) if return_agent else res


def evaluate_checkpoint(cfg: ExperimentConfig, spec: SchemeSpec, variant: str, seed: int, checkpoint,
                        ) -> tuple[EpisodeStats, RobotNomaEnv]:
    """Greedy rollout of a stored network on the environment of ``seed``."""
    env = make_env(cfg, spec, seed)
    agent = make_agent(cfg, env, variant, seed)
    net = checkpoint if isinstance(checkpoint, QNet) else load_checkpoint(checkpoint)
    if net.n_out != agent.online.n_out or net.in_dim != agent.online.in_dim:
        raise ConfigError("checkpoint does not match the configured scheme")
    agent.online = net
    agent.target = net.copy()
    return evaluate_greedy(env, agent, seed), env


# ---------------------------------------------------------------------------
# phase oracle on frozen channels
# ---------------------------------------------------------------------------

# A static robot on a frozen channel faces the same one-slot problem every
# step, so the learner is myopic (gamma = 0) and uses one flat head.
PHASE_ORACLE_AGENT = AgentConfig(gamma=0.0, lr=1e-2, eps_decay=0.993, flat=True)


@dataclass
class PhaseOracleTrial:
    index: int
    K: int
    gain: float             # |H|^2 under the greedy phase choice
    best: float             # exhaustive-search optimum
    checked: int
    violations: dict
    hard_ok: bool

    @property
    def ratio(self) -> float:
        return self.gain / self.best


def phase_oracle_trial(index: int, K: int = 3, bits: int = 2, episodes: int = 600, steps: int = 10,
                       agent: AgentConfig | None = None, world: WorldModel | None = None,
                       params: ChannelParams | None = None) -> PhaseOracleTrial:
    """Train on one random frozen channel (N = 1) and score the greedy phases.

    Snapshot ``index`` draws its links from ``default_rng([11, index])``: a
    circular Gaussian direct link and cascaded links at half its amplitude,
    so the surface can move |H|^2 by a large factor.
    """
    rng = np.random.default_rng([11, index])
    real = random_realization(rng, 1, K, irs_scale=0.5, unit=1e-5)
    params = ChannelParams.from_db(**CHANNEL_DEFAULTS) if params is None else params
    ecfg = EnvConfig(n_robots=1, bits=bits, v=1, static_robots=True, max_steps=steps)
    env = RobotNomaEnv(desk_world() if world is None else world, params, IrsConfig(M=K), ecfg, seed=index,
                       field_=FrozenField(real))
    acfg = PHASE_ORACLE_AGENT if agent is None else agent
    layout = enumerate_actions(1, K, bits, 1, static_robots=True, flat=acfg.flat)
    learner = Agent(env.state_dim, layout, acfg, seed=index)
    erng = np.random.default_rng([index, 4])
    for ep in range(episodes):
        run_episode(env, learner, erng, acfg.epsilon(ep))
    greedy = run_episode(env, learner, erng, 0.0, train=False)
    chosen = PhaseState(np.asarray(greedy.phase_history[-1]), bits)
    return PhaseOracleTrial(
        index=index, K=K, gain=float(effective_gains(real, chosen)[0]),
        best=float(effective_gains(real, best_phase_bruteforce(real, bits))[0]),
        checked=env.log.checked, violations=dict(env.log.violations), hard_ok=env.log.hard_ok(),
    )


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


EPISODE_HEADER = ["episode", "cumulative_reward", "steps", "sum_rate_mean", "converged"]
CURVE_HEADER = ["episode", "reward", "moving_average"]
RATE_HEADER = ["t", "robot", "order", "power", "sinr", "rate", "qos_ok"]
PATH_HEADER = ["path_length_m", "sum_rate"]


def moving_average(x, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` values (shorter at the start)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x
    c = np.cumsum(np.concatenate([[0.0], x]))
    n = np.arange(1, x.size + 1)
    lo = np.maximum(n - window, 0)
    return (c[n] - c[lo]) / (n - lo)


def sumrate_vs_path(greedy: EpisodeStats, resolution: float) -> list:
    """(metres travelled, sum-rate) per slot; one slot moves a robot one cell."""
    return [(round(t * resolution, 10), r) for t, r in enumerate(greedy.sum_rates)]


def emit_outputs(result: RunResult, directory, window: int = 50) -> Path:
    """Write every per-run artifact into ``directory``; returns the directory."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    conv = result.convergence
    write_csv(d / "episodes.csv", EPISODE_HEADER,
              [(e, r, s, m, conv is not None and e >= conv) for e, r, s, m in result.episodes])
    rewards = result.rewards
    ma = moving_average(rewards, window)
    write_csv(d / "learning_curve.csv", CURVE_HEADER, [(n + 1, r, a) for n, (r, a) in enumerate(zip(rewards, ma))])
    write_trajectory_rows(d / "trajectories.csv", result.greedy.trajectories, result.resolution)
    write_csv(d / "rates.csv", RATE_HEADER, result.greedy.rate_rows)
    write_csv(d / "sumrate_vs_path.csv", PATH_HEADER, sumrate_vs_path(result.greedy, result.resolution))
    write_csv(d / "channel.csv", ["link", "robot", "k", "re", "im"], result.channel_dump)
    try:
        (d / "checkpoint.bin").write_bytes(result.checkpoint)
    except OSError as exc:
        raise OSError(f"cannot write {d / 'checkpoint.bin'}: {exc.strerror or exc}") from exc
    return d


def write_trajectory_rows(path, trajectories, resolution: float):
    """robot_id, step, x, y, marker with I_w / F_w at each path's ends."""
    rows = []
    for rid, cells in enumerate(trajectories, start=1):
        last = len(cells) - 1
        for s, (i, j) in enumerate(cells):
            marker = f"I_{rid}" if s == 0 else (f"F_{rid}" if s == last else "")
            rows.append((rid, s, f"{(i + 0.5) * resolution:.4f}", f"{(j + 0.5) * resolution:.4f}", marker))
    write_csv(path, ["robot_id", "step", "x", "y", "marker"], rows)


# ---------------------------------------------------------------------------
# suites and comparisons
# ---------------------------------------------------------------------------

def _check_writable(out: Path):
    try:
        out.mkdir(parents=True, exist_ok=True)
        fd, probe = tempfile.mkstemp(dir=out, prefix=".probe")
        os.close(fd)
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc.strerror or exc}") from exc


def _job(args):
    cfg, spec, variant, seed = args
    return train_run(cfg, spec, variant, seed)


def run_tasks(cfg: ExperimentConfig, tasks, output_dir=None, jobs: int = 1, emit: bool = True) -> list[RunResult]:
    """Run ``(SchemeSpec, variant, seed)`` tasks in order; write artifacts and aggregates.

    The output directory is checked for writability before any training starts.
    """
    out = Path(cfg.output_dir if output_dir is None else output_dir)
    if emit:
        _check_writable(out)
        save_config(cfg, out / "config.json")
    jobs_args = [(cfg, s, v, seed) for s, v, seed in tasks]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, jobs_args))
    else:
        results = [_job(t) for t in jobs_args]
    if emit:
        window = int(cfg.convergence.get("window", 50))
        for r in results:
            emit_outputs(r, out / r.scheme / r.variant / f"seed_{r.seed}", window)
        write_aggregates(results, out, cfg.episodes, window)
        with open(out / "timing.json", "w") as fh:
            json.dump({f"{r.scheme}/{r.variant}/{r.seed}": round(r.wall_clock, 3) for r in results}, fh, indent=2)
    return results


def _specs(cfg: ExperimentConfig, schemes) -> list[SchemeSpec]:
    if schemes is None:
        return [cfg.scheme()]
    return [s if isinstance(s, SchemeSpec) else cfg.scheme(s) for s in schemes]


def run_suite(cfg: ExperimentConfig, schemes=None, variants=None, seeds=None, output_dir=None,
              jobs: int = 1, emit: bool = True) -> list[RunResult]:
    """Every (scheme, variant, seed); ``schemes`` defaults to the config's first scheme."""
    variants = tuple(cfg.variants if variants is None else variants)
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    tasks = [(s, v, seed) for s in _specs(cfg, schemes) for v in variants for seed in seeds]
    return run_tasks(cfg, tasks, output_dir, jobs, emit)


def comparison_tasks(cfg: ExperimentConfig, schemes=None, seeds=None) -> list:
    """d3qn on every scheme, plus every configured variant on the first scheme."""
    specs = _specs(cfg, [s.name for s in cfg.schemes] if schemes is None else schemes)
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    tasks = [(s, "d3qn", seed) for s in specs for seed in seeds]
    tasks += [(specs[0], v, seed) for v in cfg.variants if v != "d3qn" for seed in seeds]
    return tasks


def run_comparison(cfg: ExperimentConfig, schemes=None, seeds=None, output_dir=None, jobs: int = 1,
                   emit: bool = True) -> list[RunResult]:
    return run_tasks(cfg, comparison_tasks(cfg, schemes, seeds), output_dir, jobs, emit)


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def _std(x) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def convergence_or_budget(r: RunResult, budget: int) -> int:
    """Convergence episode, counting a run that never settles as the full budget."""
    return budget if r.convergence is None else int(r.convergence)


def paired_gap(a: list, b: list) -> dict:
    """Mean and standard error of the per-seed difference ``a - b``."""
    by_a = {r.seed: r for r in a}
    by_b = {r.seed: r for r in b}
    shared = sorted(set(by_a) & set(by_b))
    return {"seeds": shared, "a": [by_a[s] for s in shared], "b": [by_b[s] for s in shared]}


def compare_variants(results, budget: int | None = None) -> dict:
    """Per-group means and pairwise paired gaps.

    Groups are (scheme, variant).  Returns ``{"groups": [...], "gaps": [...]}``
    where each gap row compares two groups over their shared seeds, after
    counting never-converged runs as ``budget`` episodes.
    """
    groups: dict = {}
    for r in results:
        groups.setdefault((r.scheme, r.variant), []).append(r)
    if len(groups) < 2:
        raise ValueError("need at least two (scheme, variant) groups to compare")
    if budget is None:
        budget = max(len(r.episodes) for r in results)
    rows = []
    for (scheme, variant), rs in groups.items():
        conv = [convergence_or_budget(r, budget) for r in rs]
        rates = [r.greedy_sum_rate for r in rs]
        cm, cse = mean_se(conv)
        sm, sse = mean_se(rates)
        rows.append({
            "scheme": scheme, "variant": variant, "K": rs[0].K, "n": len(rs),
            "convergence_mean": cm, "convergence_se": cse, "convergence_std": _std(conv),
            "never_converged": sum(r.convergence is None for r in rs),
            "sum_rate_mean": sm, "sum_rate_se": sse, "sum_rate_std": _std(rates),
        })
    gaps = []
    keys = list(groups)
    for n, ka in enumerate(keys):
        for kb in keys[n + 1:]:
            p = paired_gap(groups[ka], groups[kb])
            if not p["seeds"]:
                continue
            dr = mean_se([x.greedy_sum_rate - y.greedy_sum_rate for x, y in zip(p["a"], p["b"])])
            dc = mean_se([convergence_or_budget(x, budget) - convergence_or_budget(y, budget)
                          for x, y in zip(p["a"], p["b"])])
            gaps.append({
                "a": "/".join(ka), "b": "/".join(kb), "n": len(p["seeds"]),
                "sum_rate_gap": dr[0], "sum_rate_gap_se": dr[1],
                "convergence_gap": dc[0], "convergence_gap_se": dc[1],
            })
    return {"groups": rows, "gaps": gaps}


GROUP_HEADER = ["scheme", "variant", "K", "n", "convergence_mean", "convergence_se", "convergence_std",
                "never_converged", "sum_rate_mean", "sum_rate_se", "sum_rate_std"]
GAP_HEADER = ["a", "b", "n", "sum_rate_gap", "sum_rate_gap_se", "convergence_gap", "convergence_gap_se"]


def write_comparison(table: dict, path):
    rows = [[g[k] for k in GROUP_HEADER] for g in table["groups"]]
    gaps = [[g[k] for k in GAP_HEADER] for g in table["gaps"]]
    path = Path(path)
    write_csv(path, GROUP_HEADER, rows)
    write_csv(path.with_name(path.stem + "_gaps.csv"), GAP_HEADER, gaps)


def write_aggregates(results, out, budget: int, window: int = 50):
    out = Path(out)
    write_csv(out / "summary.csv",
              ["scheme", "variant", "seed", "K", "convergence", "greedy_sum_rate", "greedy_steps", "path_length_max",
               "constraint_checks", "hard_violations", "qos_violations"],
              [(r.scheme, r.variant, r.seed, r.K, "none" if r.convergence is None else r.convergence,
                r.greedy_sum_rate, r.greedy.steps, max(r.path_lengths, default=0.0), r.checked,
                sum(v for k, v in r.violations.items() if k != "qos"), r.violations.get("qos", 0))
               for r in results])
    groups: dict = {}
    for r in results:
        groups.setdefault((r.scheme, r.variant), []).append(r)
    if len(groups) >= 2:
        write_comparison(compare_variants(results, budget), out / "comparison.csv")
    for (scheme, variant), rs in groups.items():
        n = min(len(r.episodes) for r in rs)
        R = np.array([r.rewards[:n] for r in rs], dtype=np.float64).reshape(len(rs), n)
        mean = R.mean(axis=0) if n else np.zeros(0)
        write_csv(out / f"learning_curve_{scheme}_{variant}.csv", CURVE_HEADER,
                  [(e + 1, m, a) for e, (m, a) in enumerate(zip(mean, moving_average(mean, window)))])
    # one curve per scheme, from d3qn runs when present
    by_scheme: dict = {}
    for (scheme, variant), rs in groups.items():
        if scheme not in by_scheme or variant == "d3qn":
            by_scheme[scheme] = rs
    for scheme, rs in by_scheme.items():
        series = [sumrate_vs_path(r.greedy, r.resolution) for r in rs]
        longest = max(len(s) for s in series)
        rows = []
        for t in range(longest):
            vals = [s[t][1] for s in series if t < len(s)]
            rows.append((round(t * rs[0].resolution, 10), float(np.mean(vals)), len(vals)))
        write_csv(out / f"sumrate_vs_path_{scheme}.csv", ["path_length_m", "sum_rate_mean", "n_runs"], rows)

