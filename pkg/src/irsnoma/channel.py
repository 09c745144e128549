"""Rician channel generation and IRS effective-channel composition.

Three links per robot ``i``: the direct AP->robot scalar ``hbar[i]``, the
AP->IRS vector ``h`` (length K) and the IRS->robot vector ``g[i]``.  Each is
``amp(L) * (sqrt(a/(a+1)) * LoS + sqrt(1/(a+1)) * NLoS)`` with ``L = C d^-gamma``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .world import ConfigError, GridMap, WorldModel, line_of_sight

LINK_CLASSES = ("Ai", "Ii", "AI")


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=np.float64) / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=np.float64) - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Link-budget parameters, all linear.

    ``amplitude_model`` selects how the path loss enters the complex gain:
    ``"power"`` scales the amplitude by ``sqrt(L)`` (mean power ``L``),
    ``"literal"`` scales it by ``L`` itself (mean power ``L**2``).
    """

    C: float = 1e-3
    gamma: dict = field(default_factory=lambda: {"Ai": 3.0, "Ii": 2.4, "AI": 2.2})
    rician_los: dict = field(default_factory=lambda: {"Ai": 10.0, "Ii": 10.0, "AI": 10.0})
    rician_blocked: dict = field(default_factory=lambda: {"Ai": 0.0, "Ii": 0.0, "AI": 0.0})
    sigma2: float = 1e-11
    wavelength: float = 0.125
    amplitude_model: str = "power"

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError("C must be > 0")
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be > 0")
        if not self.wavelength > 0:
            raise ConfigError("wavelength must be > 0")
        for name in ("gamma", "rician_los", "rician_blocked"):
            table = getattr(self, name)
            if set(table) != set(LINK_CLASSES):
                raise ConfigError(f"{name} needs entries for {LINK_CLASSES}")
            if any(v < 0 for v in table.values()):
                raise ConfigError(f"{name} entries must be >= 0")
        if self.amplitude_model not in ("power", "literal"):
            raise ConfigError(f"unknown amplitude_model {self.amplitude_model!r}")

    @classmethod
    def from_db(cls, C_db=-30.0, gamma=None, rician_los_db=10.0, rician_blocked_db=None,
                noise_dbm=-80.0, wavelength=0.125, amplitude_model="power") -> "ChannelParams":
        """Build from dB quantities; ``rician_blocked_db=None`` means a zero factor."""

        def per_class(v):
            if isinstance(v, dict):
                return {k: float(v[k]) for k in LINK_CLASSES}
            return {k: float(v) for k in LINK_CLASSES}

        los = per_class(rician_los_db)
        blocked = per_class(-math.inf if rician_blocked_db is None else rician_blocked_db)
        return cls(
            C=float(db_to_linear(C_db)),
            gamma=per_class(gamma) if gamma is not None else {"Ai": 3.0, "Ii": 2.4, "AI": 2.2},
            rician_los={k: float(db_to_linear(v)) for k, v in los.items()},
            rician_blocked={k: (0.0 if v == -math.inf else float(db_to_linear(v))) for k, v in blocked.items()},
            sigma2=float(dbm_to_watts(noise_dbm)),
            wavelength=float(wavelength),
            amplitude_model=amplitude_model,
        )

    def amplitude(self, d: float, link: str) -> float:
        L = path_loss(d, link, self)
        return L if self.amplitude_model == "literal" else math.sqrt(L)


@dataclass(frozen=True)
class IrsConfig:
    """``M`` sub-surfaces of ``K_h x K_v`` elements laid side by side along x."""

    M: int = 1
    K_h: int = 1
    K_v: int = 1
    spacing: float | None = None  # None -> half wavelength

    def __post_init__(self):
        if self.M < 0 or self.K_h < 1 or self.K_v < 1:
            raise ConfigError("IRS counts must be >= 1 (M = 0 disables the surface)")

    @property
    def K(self) -> int:
        return self.M * self.K_h * self.K_v

    @property
    def K_sub(self) -> int:
        return self.K_h * self.K_v

    def element_offsets(self, wavelength: float) -> np.ndarray:
        """(K, 3) element positions relative to the surface centre."""
        dx = self.spacing if self.spacing is not None else wavelength / 2.0
        cols = self.M * self.K_h
        xs = (np.arange(cols) - (cols - 1) / 2.0) * dx
        ys = (np.arange(self.K_v) - (self.K_v - 1) / 2.0) * dx
        # sub-surface m owns columns [m*K_h, (m+1)*K_h); element order is sub-surface major
        out = np.zeros((self.K, 3))
        k = 0
        for m in range(self.M):
            for c in range(m * self.K_h, (m + 1) * self.K_h):
                for r in range(self.K_v):
                    out[k, 0] = xs[c]
                    out[k, 1] = ys[r]
                    k += 1
        return out

    def subsurface_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.M), self.K_sub)


@dataclass(frozen=True)
class PhaseState:
    """Quantised IRS phases, one codebook index per element, unit amplitudes."""

    index: np.ndarray  # (K,) ints in [0, 2**bits)
    bits: int

    def __post_init__(self):
        idx = np.asarray(self.index, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.levels):
            raise ValueError("phase index out of codebook range")
        idx.setflags(write=False)
        object.__setattr__(self, "index", idx)

    @property
    def levels(self) -> int:
        return 2 ** self.bits

    @property
    def theta(self) -> np.ndarray:
        return 2.0 * np.pi * self.index / self.levels

    @property
    def phasors(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    @classmethod
    def from_subsurfaces(cls, sub_index, irs: IrsConfig, bits: int) -> "PhaseState":
        sub_index = np.asarray(sub_index, dtype=np.int64)
        if sub_index.shape != (irs.M,):
            raise ValueError(f"expected {irs.M} sub-surface indices, got {sub_index.shape}")
        return cls(sub_index[irs.subsurface_of()], bits)

    @classmethod
    def zeros(cls, K: int, bits: int) -> "PhaseState":
        return cls(np.zeros(K, dtype=np.int64), bits)


@dataclass(frozen=True)
class ChannelRealization:
    hbar: np.ndarray  # (N,) complex
    g: np.ndarray     # (N, K) complex
    h: np.ndarray     # (K,) complex
    psi: np.ndarray   # (N, K) complex, conj(h) * g

    @classmethod
    def from_links(cls, hbar, g, h) -> "ChannelRealization":
        hbar = np.asarray(hbar, dtype=np.complex128).reshape(-1)
        h = np.asarray(h, dtype=np.complex128).reshape(-1)
        g = np.asarray(g, dtype=np.complex128).reshape(hbar.shape[0], h.shape[0])
        return cls(hbar=hbar, g=g, h=h, psi=np.conj(h)[None, :] * g)

    @property
    def N(self) -> int:
        return self.hbar.shape[0]

    @property
    def K(self) -> int:
        return self.h.shape[0]


def path_loss(d: float, link: str, params: ChannelParams) -> float:
    if not d > 0:
        raise ValueError(f"path loss needs d > 0, got {d}")
    return params.C * d ** (-params.gamma[link])


def los_component(tx_pos, rx_pos, offsets=None, wavelength: float = 0.125, array_at: str = "rx"):
    """Far-field LoS phasors for a planar array at one end of the link.

    Returns ``exp(-j 2pi/lambda (d + s <u, r_k>))`` where ``u`` is the unit
    direction tx->rx, ``r_k`` the element offsets and ``s = +1`` when the
    array is the receiver, ``-1`` when it transmits.  With ``offsets=None``
    the result is a single distance phasor.
    """
    tx = np.asarray(tx_pos, dtype=np.float64)
    rx = np.asarray(rx_pos, dtype=np.float64)
    diff = rx - tx
    d = float(np.linalg.norm(diff))
    if d == 0.0:
        raise ValueError("LoS component undefined for coincident positions")
    k0 = 2.0 * np.pi / wavelength
    if offsets is None:
        return np.exp(-1j * k0 * d)
    s = 1.0 if array_at == "rx" else -1.0
    proj = np.asarray(offsets, dtype=np.float64) @ (diff / d)
    return np.exp(-1j * k0 * (d + s * proj))


def _nlos(rng, size):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)


def rician_link(amp, alpha, los, nlos):
    if math.isinf(alpha):
        return amp * los
    return amp * (math.sqrt(alpha / (alpha + 1.0)) * los + math.sqrt(1.0 / (alpha + 1.0)) * nlos)


def _alpha(params: ChannelParams, link: str, visible: bool) -> float:
    return params.rician_los[link] if visible else params.rician_blocked[link]


def sample_ap_irs(world: WorldModel, params: ChannelParams, irs: IrsConfig, rng) -> np.ndarray:
    K = irs.K
    if K == 0:
        return np.zeros(0, dtype=np.complex128)
    ap = np.asarray(world.ap_pos)
    ris = np.asarray(world.irs_pos)
    d = float(np.linalg.norm(ris - ap))
    los = los_component(ap, ris, irs.element_offsets(params.wavelength), params.wavelength, "rx")
    alpha = _alpha(params, "AI", line_of_sight(ap, ris, world))
    return rician_link(params.amplitude(d, "AI"), alpha, los, _nlos(rng, K))


def sample_robot_links(pos, world: WorldModel, params: ChannelParams, irs: IrsConfig, rng):
    """Direct scalar and IRS->robot vector for one robot position."""
    pos = np.asarray(pos, dtype=np.float64)
    ap = np.asarray(world.ap_pos)
    d_ai = float(np.linalg.norm(pos - ap))
    los_d = los_component(ap, pos, None, params.wavelength)
    alpha_d = _alpha(params, "Ai", line_of_sight(ap, pos, world))
    hbar = rician_link(params.amplitude(d_ai, "Ai"), alpha_d, los_d, _nlos(rng, None))
    K = irs.K
    if K == 0:
        return complex(hbar), np.zeros(0, dtype=np.complex128)
    ris = np.asarray(world.irs_pos)
    d_ii = float(np.linalg.norm(pos - ris))
    los_g = los_component(ris, pos, irs.element_offsets(params.wavelength), params.wavelength, "tx")
    alpha_g = _alpha(params, "Ii", line_of_sight(ris, pos, world))
    g = rician_link(params.amplitude(d_ii, "Ii"), alpha_g, los_g, _nlos(rng, K))
    return complex(hbar), g


def sample_channel(robot_positions, world: WorldModel, params: ChannelParams, irs: IrsConfig,
                   rng) -> ChannelRealization:
    """One realisation of all links for the given robot positions."""
    rng = np.random.default_rng(rng)
    h = sample_ap_irs(world, params, irs, rng)
    hbar, g = [], []
    for pos in robot_positions:
        hb, gi = sample_robot_links(pos, world, params, irs, rng)
        hbar.append(hb)
        g.append(gi)
    return ChannelRealization.from_links(hbar, np.array(g).reshape(len(hbar), irs.K), h)


class ChannelField:
    """Position-keyed channel cache for one run.

    NLoS draws are seeded by ``(seed, robot, cell)`` so revisiting a cell
    reproduces the same links; the AP->IRS link is drawn once per seed.
    """

    def __init__(self, world: WorldModel, grid: GridMap, params: ChannelParams, irs: IrsConfig, seed: int):
        self.world = world
        self.grid = grid
        self.params = params
        self.irs = irs
        self.seed = int(seed)
        self.h = sample_ap_irs(world, params, irs, np.random.default_rng([self.seed, 0]))
        self._h_conj = np.conj(self.h)
        self._cache: dict = {}

    def links(self, robot: int, cell) -> tuple[complex, np.ndarray, np.ndarray]:
        """(hbar, g, psi) for ``robot`` standing in ``cell``."""
        key = (robot, cell[0], cell[1])
        hit = self._cache.get(key)
        if hit is None:
            rng = np.random.default_rng([self.seed, 1, robot, cell[0], cell[1]])
            hbar, g = sample_robot_links(self.grid.center(cell), self.world, self.params, self.irs, rng)
            hit = (hbar, g, self._h_conj * g)
            self._cache[key] = hit
        return hit

    def realization(self, cells) -> ChannelRealization:
        hb, gs = [], []
        for r, c in enumerate(cells):
            hbar, g, _ = self.links(r, c)
            hb.append(hbar)
            gs.append(g)
        return ChannelRealization.from_links(hb, np.array(gs).reshape(len(hb), self.irs.K), self.h)



class FrozenField:
    """Channel of a fixed realization, independent of where the robots stand."""

    def __init__(self, real: ChannelRealization):
        self.real = real
        self.h = real.h

    def links(self, robot: int, cell) -> tuple[complex, np.ndarray, np.ndarray]:
        r = self.real
        return complex(r.hbar[robot]), r.g[robot], r.psi[robot]

    def realization(self, cells) -> ChannelRealization:
        return self.real


def random_realization(rng, N: int, K: int, direct_scale: float = 1.0, irs_scale: float = 1.0,
                       unit: float = 1.0) -> ChannelRealization:
    """Unit-variance circular Gaussian links scaled by ``unit`` (absolute amplitude).

    ``direct_scale`` and ``irs_scale`` weight the direct and cascaded parts.
    """
    def cn(*shape):
        return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / math.sqrt(2.0)

    hbar = unit * direct_scale * cn(N)
    h = cn(K)
    g = unit * irs_scale * cn(N, K)
    return ChannelRealization.from_links(hbar, g, h)

def effective_channel(real: ChannelRealization, phases: PhaseState, i: int) -> complex:
    """sum_k conj(h_k) e^{j theta_k} g_ik + hbar_i."""
    if phases.index.shape[0] != real.K:
        raise ValueError(f"phase state has {phases.index.shape[0]} entries, channel has K={real.K}")
    return complex(real.psi[i] @ phases.phasors + real.hbar[i])


def effective_gains(real: ChannelRealization, phases: PhaseState) -> np.ndarray:
    """|H_i|^2 for every robot."""
    if phases.index.shape[0] != real.K:
        raise ValueError(f"phase state has {phases.index.shape[0]} entries, channel has K={real.K}")
    return kernels.effective_gains(real.psi, real.hbar, phases.phasors.astype(np.complex128))


MAX_ENUMERATION_BITS = 16


def best_phase_bruteforce(real: ChannelRealization, bits: int, i: int = 0) -> PhaseState:
    """Exhaustive search of all ``2**(bits*K)`` per-element phase states.

    Returns the state maximising ``|H_i|^2``; ties go to the lowest
    enumeration index (element 0 is the most significant digit).
    """
    K = real.K
    if K * bits > MAX_ENUMERATION_BITS:
        raise ValueError(f"enumeration of 2^{K * bits} states exceeds the 2^{MAX_ENUMERATION_BITS} bound")
    levels = 2 ** bits
    best, _ = kernels.phase_search(np.ascontiguousarray(real.psi[i]), complex(real.hbar[i]), levels)
    best = int(best)
    digits = [(best // levels ** (K - 1 - m)) % levels for m in range(K)]
    return PhaseState(np.array(digits, dtype=np.int64), bits)


def write_realization_csv(path, real: ChannelRealization):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["link", "robot", "k", "re", "im"])
        for k, v in enumerate(real.h):
            w.writerow(["AI", "", k, repr(float(v.real)), repr(float(v.imag))])
        for i in range(real.N):
            w.writerow(["Ai", i, 0, repr(float(real.hbar[i].real)), repr(float(real.hbar[i].imag))])
            for k, v in enumerate(real.g[i]):
                w.writerow(["Ii", i, k, repr(float(v.real)), repr(float(v.imag))])
