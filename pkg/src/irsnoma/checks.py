"""Invariant suites run by the ``gradcheck`` and ``oracle`` subcommands.

Each suite returns a list of :class:`CheckResult`; a suite passes when all
of its entries pass.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, noma, oracle
from .agent import double_dqn_target
from .channel import ChannelRealization, PhaseState, best_phase_bruteforce, effective_gains
from .neural import QNet, grad_check
from .world import build_grid, paper_world


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def random_sample(net: QNet, rng, batch: int = 4):
    X = rng.normal(size=(batch, net.in_dim))
    actions = np.stack([rng.integers(0, b, size=batch) for b in net.branch_sizes], axis=1)
    targets = rng.normal(size=batch)
    return X, actions, targets


def randomize_biases(net: QNet, rng, scale: float = 0.5) -> QNet:
    """Nonzero biases keep pre-activations away from the ReLU kink at exactly 0."""
    for p in net.params:
        if p.ndim == 1:
            p[...] = rng.normal(scale=scale, size=p.shape)
    return net


def gradcheck_suite(n_nets: int = 100, tol: float = 1e-4, linear_tol: float = 1e-8, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in range(n_nets):
        in_dim = int(rng.integers(2, 7))
        hidden = tuple(int(h) for h in rng.integers(3, 9, size=2))
        branches = tuple(int(b) for b in rng.integers(1, 5, size=int(rng.integers(1, 4))))
        net = QNet(in_dim, hidden, branches, dueling=bool(n % 2 == 0), rng=rng.integers(2**32))
        randomize_biases(net, rng)
        worst = max(worst, grad_check(net, random_sample(net, rng)))
    lin_worst = 0.0
    for n in range(10):
        net = QNet(int(rng.integers(2, 6)), (), (int(rng.integers(1, 5)),), dueling=False, rng=n)
        lin_worst = max(lin_worst, grad_check(net, random_sample(net, rng)))
    return [
        CheckResult("gradcheck.relu_nets", worst < tol, f"max rel err {worst:.3e} over {n_nets} nets (< {tol:g})"),
        CheckResult("gradcheck.linear_nets", lin_worst < linear_tol, f"max rel err {lin_worst:.3e} (< {linear_tol:g})"),
    ]


def _random_links(rng, N, K):
    scale = 1e-4
    hbar = scale * (rng.normal(size=N) + 1j * rng.normal(size=N))
    h = rng.normal(size=K) + 1j * rng.normal(size=K)
    g = scale * 0.3 * (rng.normal(size=(N, K)) + 1j * rng.normal(size=(N, K)))
    return hbar, g, h


def sinr_suite(trials: int = 1000, rtol: float = 1e-10, seed: int = 1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    order_ok = True
    for _ in range(trials):
        N = int(rng.integers(1, 4))
        K = int(rng.integers(0, 6))
        bits = int(rng.integers(1, 4))
        hbar, g, h = _random_links(rng, N, K)
        real = ChannelRealization.from_links(hbar, g, h)
        phases = PhaseState(rng.integers(0, 2 ** bits, size=K), bits)
        powers = rng.dirichlet(np.ones(N)) * 0.1
        sigma2 = 1e-11
        gains = effective_gains(real, phases)
        order = noma.decoding_order(gains)
        rep = noma.rate_report(gains, powers, order, sigma2)
        ref = oracle.noma_rates_ref(
            [(hbar[i], h, g[i]) for i in range(N)], phases.theta.tolist(), powers.tolist(), sigma2
        )
        for i, (gain, o, tau, r) in enumerate(ref):
            order_ok &= int(order[i]) == o
            for a, b in ((gains[i], gain), (rep.sinr[i], tau), (rep.rate[i], r)):
                worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    return [
        CheckResult("oracle.sinr_rate", worst < rtol and order_ok,
                    f"max rel err {worst:.3e} over {trials} snapshots, orders {'match' if order_ok else 'differ'}"),
    ]


def phase_suite(trials: int = 20, seed: int = 2):
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(trials):
        K = int(rng.integers(1, 5))
        bits = int(rng.integers(1, 3))
        hbar, g, h = _random_links(rng, 1, K)
        real = ChannelRealization.from_links(hbar, g, h)
        best = best_phase_bruteforce(real, bits)
        _, ref_gain = oracle.best_phase_ref(hbar[0], real.psi[0], bits)
        got = float(effective_gains(real, best)[0])
        ok &= abs(got - ref_gain) <= 1e-12 * ref_gain
    return [CheckResult("oracle.phase_search", bool(ok), f"{trials} instances against itertools enumeration")]


def kernel_parity_suite(seed: int = 3):
    rng = np.random.default_rng(seed)
    out = []
    psi = rng.normal(size=(3, 6)) + 1j * rng.normal(size=(3, 6))
    hbar = rng.normal(size=3) + 1j * rng.normal(size=3)
    u = np.exp(1j * rng.uniform(0, 2 * np.pi, 6))
    a, b = kernels.effective_gains_np(psi, hbar, u), kernels.effective_gains_nb(psi, hbar, u)
    out.append(CheckResult("kernels.effective_gains", bool(np.allclose(a, b, rtol=1e-12, atol=0)), ""))
    gains = rng.uniform(size=4)
    powers = rng.uniform(size=4)
    order = noma.decoding_order(gains)
    a, b = kernels.noma_sinr_np(gains, powers, order, 1e-3), kernels.noma_sinr_nb(gains, powers, order, 1e-3)
    out.append(CheckResult("kernels.noma_sinr", bool(np.allclose(a, b, rtol=1e-12, atol=0)), ""))
    a, b = kernels.phase_search_np(psi[0, :4], hbar[0], 4), kernels.phase_search_nb(psi[0, :4], hbar[0], 4)
    out.append(CheckResult("kernels.phase_search", a[0] == b[0] and abs(a[1] - b[1]) <= 1e-12 * abs(a[1]), ""))
    Q = rng.normal(size=(8, 9))
    mask = rng.uniform(size=(8, 9)) < 0.7
    mask[:, [0, 5]] = True
    starts = np.array([0, 5, 9])
    out.append(CheckResult("kernels.segment_argmax", bool(np.array_equal(
        kernels.segment_argmax_np(Q, starts, mask), kernels.segment_argmax_nb(Q, starts, mask))), ""))
    world = paper_world()
    lo, hi = world.box_arrays
    a = kernels.blocked_cells_np(80, 60, 0.1, lo, hi)
    b = kernels.blocked_cells_nb(80, 60, 0.1, lo, hi)
    out.append(CheckResult("kernels.blocked_cells", bool(np.array_equal(a, b)), ""))
    hits = []
    for _ in range(200):
        p, q = rng.uniform([0, 0, 0], [8, 6, 3], size=(2, 3))
        hits.append(kernels.segment_hits_boxes_np(p, q, lo, hi) == kernels.segment_hits_boxes_nb(p, q, lo, hi))
    out.append(CheckResult("kernels.segment_hits_boxes", all(hits), "200 random segments"))
    return out


def centering_suite(states: int = 1000, tol: float = 1e-10, seed: int = 4):
    rng = np.random.default_rng(seed)
    net = QNet(7, (16, 16), (5, 5, 4, 4, 3), dueling=True, rng=seed)
    X = rng.normal(size=(states, 7))
    Q = net.forward(X)
    V = net.value(X)
    worst = max(float(np.max(np.abs((Q[:, s] - V[:, None]).mean(axis=1)))) for s in net.slices)
    return [CheckResult("neural.centering", worst < tol, f"max |mean(Q - V)| {worst:.2e}")]


def _tabular_net(q_table):
    """Plain net whose output on one-hot state e_s is q_table[s]."""
    q_table = np.asarray(q_table, dtype=np.float64)
    net = QNet(q_table.shape[0], (), (q_table.shape[1],), dueling=False, rng=0)
    net.params[0][...] = q_table
    net.params[1][...] = 0.0
    return net


def target_suite():
    online = _tabular_net([[1.0, 3.0], [0.5, -1.0]])
    target = _tabular_net([[2.0, 4.0], [-2.0, 6.0]])
    ok = True
    for gamma in (0.0, 0.9):
        for s in (0, 1):
            for terminal in (False, True):
                x = np.eye(2)[s]
                got = double_dqn_target(np.array([1.0]), x[None], np.array([terminal]), online, target, gamma)[0]
                want = oracle.td_target_ref(1.0, gamma, terminal, online.forward(x).tolist(),
                                            target.forward(x).tolist())
                ok &= got == want
    return [CheckResult("agent.double_dqn_target", bool(ok), "2-state / 2-action tables, gamma in {0, 0.9}")]


def geometry_suite():
    world = paper_world()
    got = build_grid(world).n_blocked
    want = oracle.analytic_blocked_count(world)
    return [CheckResult("world.blocked_cells", got == want, f"grid {got} vs analytic {want}")]


def oracle_suites(trials: int = 1000):
    return (sinr_suite(trials) + phase_suite() + kernel_parity_suite() + centering_suite() + target_suite()
            + geometry_suite())
