"""Hot numeric kernels.

Each kernel exists twice: a loop version compiled with numba and a
vectorised numpy version.  The public names are bound at import time
according to :data:`irsnoma._accel.USE_NUMBA`; both variants stay
importable (``*_nb`` / ``*_np``) so tests and the benchmark can compare them.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "segment_hits_boxes",
    "blocked_cells",
    "effective_gains",
    "noma_sinr",
    "phase_search",
    "segment_argmax",
    "BACKEND",
]


# --------------------------------------------------------------------------
# segment / axis-aligned box intersection (slab method)
# --------------------------------------------------------------------------

def segment_hits_boxes_np(a, b, bmin, bmax):
    if bmin.shape[0] == 0:
        return False
    d = b - a
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (bmin - a) * inv
        t2 = (bmax - a) * inv
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    parallel = d == 0.0
    inside = (a >= bmin) & (a <= bmax)
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    tmin = np.maximum(lo.max(axis=1), 0.0)
    tmax = np.minimum(hi.min(axis=1), 1.0)
    return bool(np.any(tmin < tmax))


@njit
def segment_hits_boxes_nb(a, b, bmin, bmax):
    for n in range(bmin.shape[0]):
        tmin = 0.0
        tmax = 1.0
        miss = False
        for ax in range(3):
            d = b[ax] - a[ax]
            if d == 0.0:
                if a[ax] < bmin[n, ax] or a[ax] > bmax[n, ax]:
                    miss = True
                    break
                continue
            t1 = (bmin[n, ax] - a[ax]) / d
            t2 = (bmax[n, ax] - a[ax]) / d
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin >= tmax:
                miss = True
                break
        if not miss and tmin < tmax:
            return True
    return False


# --------------------------------------------------------------------------
# occupancy lattice
# --------------------------------------------------------------------------

def blocked_cells_np(nx, ny, res, bmin, bmax):
    cx = (np.arange(nx) + 0.5) * res
    cy = (np.arange(ny) + 0.5) * res
    out = np.zeros((nx, ny), dtype=np.bool_)
    for n in range(bmin.shape[0]):
        inx = (cx >= bmin[n, 0]) & (cx <= bmax[n, 0])
        iny = (cy >= bmin[n, 1]) & (cy <= bmax[n, 1])
        out |= inx[:, None] & iny[None, :]
    return out


@njit
def blocked_cells_nb(nx, ny, res, bmin, bmax):
    out = np.zeros((nx, ny), dtype=np.bool_)
    for i in range(nx):
        x = (i + 0.5) * res
        for j in range(ny):
            y = (j + 0.5) * res
            for n in range(bmin.shape[0]):
                if bmin[n, 0] <= x <= bmax[n, 0] and bmin[n, 1] <= y <= bmax[n, 1]:
                    out[i, j] = True
                    break
    return out


# --------------------------------------------------------------------------
# effective channel power gains |psi_i . u + hbar_i|^2
# --------------------------------------------------------------------------

def effective_gains_np(psi, hbar, u):
    H = psi @ u + hbar
    return H.real ** 2 + H.imag ** 2


@njit
def effective_gains_nb(psi, hbar, u):
    n, k = psi.shape
    out = np.empty(n)
    for i in range(n):
        acc = hbar[i]
        for m in range(k):
            acc += psi[i, m] * u[m]
        out[i] = acc.real ** 2 + acc.imag ** 2
    return out


# --------------------------------------------------------------------------
# NOMA SINR: interference only from robots decoded later
# --------------------------------------------------------------------------

def noma_sinr_np(gains, powers, order, sigma2):
    rx = gains * powers
    later = order[None, :] > order[:, None]
    interference = later.astype(np.float64) @ rx
    return rx / (interference + sigma2)


@njit
def noma_sinr_nb(gains, powers, order, sigma2):
    n = gains.shape[0]
    out = np.empty(n)
    for i in range(n):
        interf = 0.0
        for j in range(n):
            if order[j] > order[i]:
                interf += gains[j] * powers[j]
        out[i] = gains[i] * powers[i] / (interf + sigma2)
    return out


# --------------------------------------------------------------------------
# exhaustive quantised phase search for a single robot
# --------------------------------------------------------------------------

def phase_search_np(psi, hbar, levels):
    k = psi.shape[0]
    codebook = np.exp(1j * 2.0 * np.pi * np.arange(levels) / levels)
    total = levels ** k
    idx = np.arange(total)
    acc = np.full(total, hbar, dtype=np.complex128)
    for m in range(k):
        digit = (idx // levels ** (k - 1 - m)) % levels
        acc += psi[m] * codebook[digit]
    gain = acc.real ** 2 + acc.imag ** 2
    best = int(np.argmax(gain))
    return best, float(gain[best])


@njit
def phase_search_nb(psi, hbar, levels):
    k = psi.shape[0]
    codebook = np.exp(1j * 2.0 * np.pi * np.arange(levels) / levels)
    total = levels ** k
    digits = np.zeros(k, dtype=np.int64)
    best = 0
    best_gain = -1.0
    for idx in range(total):
        acc = hbar
        for m in range(k):
            acc += psi[m] * codebook[digits[m]]
        g = acc.real ** 2 + acc.imag ** 2
        if g > best_gain:
            best_gain = g
            best = idx
        # odometer increment, last element fastest
        m = k - 1
        while m >= 0:
            digits[m] += 1
            if digits[m] < levels:
                break
            digits[m] = 0
            m -= 1
    return best, best_gain


# --------------------------------------------------------------------------
# per-branch masked argmax over concatenated Q rows
# --------------------------------------------------------------------------

def segment_argmax_np(Q, starts, mask):
    B, n = Q.shape
    D = starts.shape[0] - 1
    out = np.empty((B, D), dtype=np.int64)
    masked = np.where(mask, Q, -np.inf)
    for d in range(D):
        out[:, d] = np.argmax(masked[:, starts[d]:starts[d + 1]], axis=1)
    return out


@njit
def segment_argmax_nb(Q, starts, mask):
    B = Q.shape[0]
    D = starts.shape[0] - 1
    out = np.empty((B, D), dtype=np.int64)
    for b in range(B):
        for d in range(D):
            best = -np.inf
            arg = 0
            found = False
            for c in range(starts[d], starts[d + 1]):
                if mask[b, c] and (not found or Q[b, c] > best):
                    best = Q[b, c]
                    arg = c - starts[d]
                    found = True
            out[b, d] = arg
    return out


if USE_NUMBA:
    BACKEND = "numba"
    segment_hits_boxes = segment_hits_boxes_nb
    blocked_cells = blocked_cells_nb
    effective_gains = effective_gains_nb
    noma_sinr = noma_sinr_nb
    phase_search = phase_search_nb
    segment_argmax = segment_argmax_nb
else:
    BACKEND = "numpy"
    segment_hits_boxes = segment_hits_boxes_np
    blocked_cells = blocked_cells_np
    effective_gains = effective_gains_np
    noma_sinr = noma_sinr_np
    phase_search = phase_search_np
    segment_argmax = segment_argmax_np
