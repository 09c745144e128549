"""Slow reference evaluators used to cross-check the fast paths.

Everything here is scalar Python on ``complex`` numbers: no numpy kernels,
no shared helpers with :mod:`irsnoma.noma` or :mod:`irsnoma.channel`.
"""
from __future__ import annotations

import cmath
import itertools
import math


def effective_channel_ref(hbar: complex, h, g, theta) -> complex:
    """hbar + sum_k conj(h_k) * exp(j theta_k) * g_k from raw link values."""
    acc = complex(hbar)
    for hk, gk, tk in zip(h, g, theta):
        acc += complex(hk).conjugate() * cmath.exp(1j * float(tk)) * complex(gk)
    return acc


def noma_rates_ref(links, theta, powers, sigma2: float):
    """Per-robot (gain, order, sinr, rate) from raw ``(hbar, h, g)`` triples.

    Order: ascending gain, ties broken by robot index, 1-based.  Robot ``i``
    is interfered by every robot decoded after it.
    """
    gains = [abs(effective_channel_ref(hb, h, g, theta)) ** 2 for hb, h, g in links]
    n = len(gains)
    ranked = sorted(range(n), key=lambda i: (gains[i], i))
    order = [0] * n
    for pos, i in enumerate(ranked, start=1):
        order[i] = pos
    out = []
    for i in range(n):
        interf = 0.0
        for j in range(n):
            if order[j] > order[i]:
                interf += gains[j] * powers[j]
        tau = gains[i] * powers[i] / (interf + sigma2)
        out.append((gains[i], order[i], tau, math.log2(1.0 + tau)))
    return out


def best_phase_ref(hbar: complex, psi, bits: int):
    """Exhaustive phase search by itertools.product; returns (digits, gain)."""
    levels = 2 ** bits
    best, best_gain = None, -1.0
    for digits in itertools.product(range(levels), repeat=len(psi)):
        acc = complex(hbar)
        for p, d in zip(psi, digits):
            acc += complex(p) * cmath.exp(2j * math.pi * d / levels)
        gain = abs(acc) ** 2
        if gain > best_gain:
            best, best_gain = digits, gain
    return list(best), best_gain


def td_target_ref(r: float, gamma: float, terminal: bool, q_online_next, q_target_next, double: bool = True):
    """Single-branch target from plain lists of next-state Q values."""
    if terminal:
        return r
    if double:
        a = max(range(len(q_online_next)), key=lambda k: (q_online_next[k], -k))
    else:
        a = max(range(len(q_target_next)), key=lambda k: (q_target_next[k], -k))
    return r + gamma * q_target_next[a]


def analytic_blocked_count(world) -> int:
    """Cells whose centre lies in the union of obstacle footprints.

    Per box the covered centres form an index range on each axis; the union
    is counted by inclusion-exclusion over box intersections.
    """
    res = world.grid_resolution
    nx = int(round(world.room_dims[0] / res))
    ny = int(round(world.room_dims[1] / res))

    def span(lo, hi, n):
        # indices i with (i + 0.5) * res in [lo, hi]
        a = max(math.ceil(round(lo / res - 0.5, 9)), 0)
        b = min(math.floor(round(hi / res - 0.5, 9)), n - 1)
        return a, b

    boxes = []
    for b in world.obstacles:
        ax = span(b.lo[0], b.hi[0], nx)
        ay = span(b.lo[1], b.hi[1], ny)
        boxes.append((ax, ay))
    total = 0
    for size in range(1, len(boxes) + 1):
        for combo in itertools.combinations(boxes, size):
            x0 = max(c[0][0] for c in combo)
            x1 = min(c[0][1] for c in combo)
            y0 = max(c[1][0] for c in combo)
            y1 = min(c[1][1] for c in combo)
            if x1 >= x0 and y1 >= y0:
                total += (-1) ** (size + 1) * (x1 - x0 + 1) * (y1 - y0 + 1)
    return total
