"""Downlink NOMA: decoding order, SINR, rates, feasibility and the OMA benchmark."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels

POWER_ORDERS = ("as-paper", "conventional")


def decoding_order(gains) -> np.ndarray:
    """1-based decoding positions: weakest gain decodes first (O = 1).

    Equal gains keep robot-index order.
    """
    gains = np.asarray(gains, dtype=np.float64)
    ranks = np.argsort(gains, kind="stable")
    order = np.empty(gains.shape[0], dtype=np.int64)
    order[ranks] = np.arange(1, gains.shape[0] + 1)
    return order


def sinr_all(gains, powers, order, sigma2: float) -> np.ndarray:
    """Per-robot SINR; robot i sees interference from every j with O(j) > O(i)."""
    if not sigma2 > 0:
        raise ValueError(f"noise power must be > 0, got {sigma2}")
    return kernels.noma_sinr(
        np.ascontiguousarray(gains, dtype=np.float64),
        np.ascontiguousarray(powers, dtype=np.float64),
        np.ascontiguousarray(order, dtype=np.int64),
        float(sigma2),
    )


def sinr(i: int, gains, powers, order, sigma2: float) -> float:
    return float(sinr_all(gains, powers, order, sigma2)[i])


def rate_from_sinr(tau):
    return np.log2(1.0 + np.asarray(tau, dtype=np.float64))


def rate(i: int, gains, powers, order, sigma2: float) -> float:
    return float(np.log2(1.0 + sinr(i, gains, powers, order, sigma2)))


def sum_rate(gains, powers, order, sigma2: float) -> float:
    return float(rate_from_sinr(sinr_all(gains, powers, order, sigma2)).sum())


@dataclass(frozen=True)
class RateReport:
    sinr: np.ndarray
    rate: np.ndarray
    qos_ok: np.ndarray

    @property
    def sum_rate(self) -> float:
        return float(self.rate.sum())


def rate_report(gains, powers, order, sigma2: float, r_min: float = 0.0) -> RateReport:
    tau = sinr_all(gains, powers, order, sigma2)
    r = rate_from_sinr(tau)
    return RateReport(sinr=tau, rate=r, qos_ok=r >= r_min)


@dataclass(frozen=True)
class ConstraintResult:
    ok: bool
    slack: float


BUDGET_RTOL = 1e-12  # floating-point allowance on sum(p) <= budget


def check_order(gains, order) -> ConstraintResult:
    """O(i) > O(j) must imply |H_i|^2 > |H_j|^2 (equal gains: higher index later)."""
    gains = np.asarray(gains, dtype=np.float64)
    order = np.asarray(order)
    ok = True
    slack = math.inf
    seq = np.argsort(order)
    for a, b in zip(seq[:-1], seq[1:]):
        # b is decoded right after a
        diff = gains[b] - gains[a]
        slack = min(slack, float(diff))
        if diff < 0 or (diff == 0 and b < a):
            ok = False
    if sorted(order.tolist()) != list(range(1, len(order) + 1)):
        ok = False
    return ConstraintResult(ok, slack if math.isfinite(slack) else 0.0)


def check_constraints(*, gains, order, powers, budget, rates, r_min, phases=None, cells=(), grid=None) -> dict:
    """Feasibility report keyed by constraint name.

    ``qos`` (rate floor), ``unit_modulus`` (codebook phases), ``sic_order``
    (decoding order follows gains), ``power_budget`` and ``obstacle_free``.

    Only the constraints whose inputs are supplied are reported.
    """
    out = {}
    rates = np.asarray(rates, dtype=np.float64)
    out["qos"] = ConstraintResult(bool(np.all(rates >= r_min)), float(np.min(rates - r_min)) if rates.size else 0.0)
    if phases is not None:
        mag = np.abs(phases.phasors)
        dev = float(np.max(np.abs(mag - 1.0))) if mag.size else 0.0
        in_book = bool(np.all((phases.index >= 0) & (phases.index < phases.levels)))
        out["unit_modulus"] = ConstraintResult(in_book and dev <= 1e-12, -dev)
    out["sic_order"] = check_order(gains, order)
    p = np.asarray(powers, dtype=np.float64)
    total = math.fsum(p.tolist())
    out["power_budget"] = ConstraintResult(bool(np.all(p >= 0)) and total <= budget * (1 + BUDGET_RTOL), budget - total)
    if grid is not None:
        bad = sum(1 for c in cells if not grid.is_free(tuple(c)))
        out["obstacle_free"] = ConstraintResult(bad == 0, float(-bad))
    return out


def rank_power_profiles(N: int, v: int, levels: int = 4, power_order: str = "as-paper") -> np.ndarray:
    """(n, N) budget fractions indexed by decoding position (column 0 decodes first).

    Grid points of the simplex with step ``1/levels`` that satisfy the power
    ordering: ``"as-paper"`` gives later-decoded robots at least as much
    power, ``"conventional"`` the reverse.  When more than ``v`` points
    exist, the ``v`` closest to the equal split are kept (ties by
    enumeration order); the result stays in lexicographic order.
    """
    if v < 1:
        raise ValueError("v must be >= 1")
    if power_order not in POWER_ORDERS:
        raise ValueError(f"power_order must be one of {POWER_ORDERS}")
    if N == 1:
        return np.ones((1, 1))
    feasible = []
    for comp in itertools.product(range(levels + 1), repeat=N):
        if sum(comp) != levels:
            continue
        steps = np.diff(comp)
        if power_order == "as-paper" and np.all(steps >= 0):
            feasible.append(comp)
        elif power_order == "conventional" and np.all(steps <= 0):
            feasible.append(comp)
    if v > len(feasible):
        warnings.warn(f"only {len(feasible)} feasible power allocations, requested {v}", stacklevel=2)
    elif v < len(feasible):
        equal = levels / N
        dist = [sum((c - equal) ** 2 for c in comp) for comp in feasible]
        keep = sorted(range(len(feasible)), key=lambda n: (dist[n], n))[:v]
        feasible = [feasible[n] for n in sorted(keep)]
    return np.array(feasible, dtype=np.float64) / levels


def allocate(profile, order, budget: float) -> np.ndarray:
    """Map a decoding-position profile onto robots."""
    order = np.asarray(order)
    return budget * np.asarray(profile)[order - 1]


def power_candidates(N: int, budget: float, v: int, order, levels: int = 4,
                     power_order: str = "as-paper") -> list[np.ndarray]:
    profiles = rank_power_profiles(N, v, levels, power_order)
    return [allocate(p, order, budget) for p in profiles]


def oma_rates(gains, budget: float, sigma2: float) -> np.ndarray:
    """Equal-share TDMA: each robot transmits alone at full power for 1/N of the time."""
    gains = np.asarray(gains, dtype=np.float64)
    n = gains.shape[0]
    return np.log2(1.0 + gains * budget / sigma2) / n


def oma_sum_rate(gains, budget: float, sigma2: float) -> float:
    return float(oma_rates(gains, budget, sigma2).sum())
