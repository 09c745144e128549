"""Fully connected branched Q-network with manual backpropagation.

The trunk is a stack of ReLU layers.  On top of it sit linear heads: with
``dueling=True`` a scalar value stream ``V`` and one advantage block per
action branch, combined as ``Q_b(a) = V + A_b(a) - mean_a' A_b(a')``;
with ``dueling=False`` one plain Q block per branch.

Branch outputs are stored concatenated, shape ``(batch, sum(branch_sizes))``;
``net.slices`` gives each branch's column range.
"""
from __future__ import annotations

import copy
import struct

import numpy as np

MAGIC = b"IRSQNET1"


class QNet:
    def __init__(self, in_dim: int, hidden=(128, 128), branch_sizes=(1,), dueling: bool = True, rng=None):
        self.in_dim = int(in_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.branch_sizes = tuple(int(b) for b in branch_sizes)
        self.dueling = bool(dueling)
        if self.in_dim < 1 or min(self.branch_sizes, default=0) < 1 or not self.branch_sizes:
            raise ValueError("QNet needs positive input and branch sizes")
        edges = np.cumsum((0,) + self.branch_sizes)
        self.slices = [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
        self.n_out = int(edges[-1])
        rng = np.random.default_rng(rng)
        self.params: list[np.ndarray] = []
        fan = self.in_dim
        for h in self.hidden:
            self.params += _layer(rng, fan, h)
            fan = h
        if self.dueling:
            self.params += _layer(rng, fan, 1)
        self.params += _layer(rng, fan, self.n_out)
        self._cache = None
        # block-averaging matrix: A @ _avg puts each branch's mean in its columns
        self._avg = None
        if len(self.slices) > 1:
            self._avg = np.zeros((self.n_out, self.n_out))
            for s in self.slices:
                self._avg[s, s] = 1.0 / (s.stop - s.start)

    # -- structure ----------------------------------------------------------
    @property
    def n_trunk(self) -> int:
        return len(self.hidden)

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def parameter_groups(self) -> dict:
        """Trunk / value / advantage parameter lists (value empty if not dueling)."""
        t = 2 * self.n_trunk
        if self.dueling:
            return {"trunk": self.params[:t], "value": self.params[t:t + 2], "advantage": self.params[t + 2:]}
        return {"trunk": self.params[:t], "value": [], "advantage": self.params[t:]}

    # -- forward ------------------------------------------------------------
    def _trunk(self, X):
        acts = [X]
        pre = []
        a = X
        for layer in range(self.n_trunk):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            z = a @ W + b
            pre.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        return a, acts, pre

    def forward(self, X, keep: bool = False) -> np.ndarray:
        """Q values, shape ``(batch, n_out)``; a 1-D input gives a 1-D output."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite network input")
        feat, acts, pre = self._trunk(X)
        t = 2 * self.n_trunk
        if self.dueling:
            V = feat @ self.params[t] + self.params[t + 1]
            A = feat @ self.params[t + 2] + self.params[t + 3]
            Q = V + A - self._branch_means(A)
        else:
            V = None
            A = feat @ self.params[t] + self.params[t + 1]
            Q = A
        if keep:
            self._cache = (acts, pre, V)
        return Q[0] if single else Q

    def value(self, X) -> np.ndarray:
        """Value stream output (dueling nets only), shape ``(batch,)``."""
        if not self.dueling:
            raise ValueError("plain net has no value stream")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        feat, _, _ = self._trunk(X)
        t = 2 * self.n_trunk
        return (feat @ self.params[t] + self.params[t + 1])[:, 0]

    def _branch_means(self, A):
        if len(self.slices) == 1:
            return np.broadcast_to(A.mean(axis=1, keepdims=True), A.shape)
        return A @ self._avg

    def branch_q(self, Q, b: int) -> np.ndarray:
        return Q[..., self.slices[b]]

    # -- backward -----------------------------------------------------------
    def backward(self, dQ) -> list[np.ndarray]:
        """Gradients of a scalar loss given ``dL/dQ`` for the last kept forward."""
        if self._cache is None:
            raise RuntimeError("call forward(..., keep=True) before backward")
        acts, pre, _ = self._cache
        dQ = np.asarray(dQ, dtype=np.float64)
        if dQ.ndim == 1:
            dQ = dQ[None, :]
        feat = acts[-1]
        t = 2 * self.n_trunk
        grads: list = [None] * len(self.params)
        if self.dueling:
            dA = dQ - self._branch_means(dQ)
            dV = dQ.sum(axis=1, keepdims=True)
            grads[t] = feat.T @ dV
            grads[t + 1] = dV.sum(axis=0)
            grads[t + 2] = feat.T @ dA
            grads[t + 3] = dA.sum(axis=0)
            dfeat = dV @ self.params[t].T + dA @ self.params[t + 2].T
        else:
            grads[t] = feat.T @ dQ
            grads[t + 1] = dQ.sum(axis=0)
            dfeat = dQ @ self.params[t].T
        for layer in reversed(range(self.n_trunk)):
            dz = dfeat * (pre[layer] > 0.0)
            grads[2 * layer] = acts[layer].T @ dz
            grads[2 * layer + 1] = dz.sum(axis=0)
            if layer:
                dfeat = dz @ self.params[2 * layer].T
        return grads

    # -- misc ---------------------------------------------------------------
    def copy(self) -> "QNet":
        out = copy.copy(self)
        out.params = [p.copy() for p in self.params]
        out._cache = None
        return out

    def load_from(self, other: "QNet"):
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def to_bytes(self) -> bytes:
        header = "in={} hidden={} branches={} dueling={}".format(
            self.in_dim, ",".join(map(str, self.hidden)), ",".join(map(str, self.branch_sizes)), int(self.dueling)
        ).encode()
        chunks = [MAGIC, struct.pack("<I", len(header)), header]
        for p in self.params:
            chunks.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "QNet":
        if blob[:8] != MAGIC:
            raise ValueError("not a QNet checkpoint")
        (n,) = struct.unpack("<I", blob[8:12])
        fields = dict(kv.split("=") for kv in blob[12:12 + n].decode().split())
        hidden = tuple(int(h) for h in fields["hidden"].split(",") if h)
        branches = tuple(int(b) for b in fields["branches"].split(","))
        net = cls(int(fields["in"]), hidden, branches, bool(int(fields["dueling"])), rng=0)
        off = 12 + n
        for p in net.params:
            size = p.size * 8
            p[...] = np.frombuffer(blob[off:off + size], dtype="<f8").reshape(p.shape)
            off += size
        if off != len(blob):
            raise ValueError("checkpoint size does not match its header")
        return net


def _layer(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / fan_in)
    return [rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)]


def save_checkpoint(net: QNet, path):
    with open(path, "wb") as fh:
        fh.write(net.to_bytes())


def load_checkpoint(path) -> QNet:
    with open(path, "rb") as fh:
        return QNet.from_bytes(fh.read())


# ---------------------------------------------------------------------------
# TD loss on selected branch actions
# ---------------------------------------------------------------------------

def td_loss(net: QNet, X, actions, targets, keep: bool = False):
    """Mean over samples and branches of ``0.5 (W - Q_b(s, a_b))^2``.

    ``actions`` is ``(batch, n_branches)`` with per-branch indices.  Returns
    ``(loss, dL/dQ)``.
    """
    X = np.atleast_2d(X)
    actions = np.atleast_2d(np.asarray(actions, dtype=np.int64))
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    Q = net.forward(X, keep=keep)
    B = Q.shape[0]
    D = len(net.branch_sizes)
    cols = actions + np.array([s.start for s in net.slices])[None, :]
    rows = np.arange(B)[:, None]
    err = targets[:, None] - Q[rows, cols]
    loss = 0.5 * float(np.mean(err ** 2))
    dQ = np.zeros_like(Q)
    np.add.at(dQ, (np.broadcast_to(rows, cols.shape), cols), -err / (B * D))
    return loss, dQ


def backward(net: QNet, X, actions, targets) -> list[np.ndarray]:
    """Gradient set of the TD loss w.r.t. every parameter."""
    _, dQ = td_loss(net, X, actions, targets, keep=True)
    return net.backward(dQ)


def sgd_step(net: QNet, grads, lr: float) -> QNet:
    for p, g in zip(net.params, grads):
        p -= lr * g
    return net


def clone_into_target(online: QNet) -> QNet:
    return online.copy()


def grad_check(net: QNet, sample, h: float = 1e-5, floor: float = 1e-5, grads=None) -> float:
    """Worst elementwise relative error of ``backward`` against central differences.

    Relative error is ``|a - n| / max(|a| + |n|, floor)``.  Round-off in the
    central difference is about ``eps * loss / h`` (1e-10 here), so the floor
    keeps exactly-zero analytic entries from reporting pure noise as error.
    """
    X, actions, targets = sample
    if grads is None:
        grads = backward(net, X, actions, targets)
    worst = 0.0
    for p, g in zip(net.params, grads):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for n in range(flat.size):
            orig = flat[n]
            flat[n] = orig + h
            lp, _ = td_loss(net, X, actions, targets)
            flat[n] = orig - h
            lm, _ = td_loss(net, X, actions, targets)
            flat[n] = orig
            num = (lp - lm) / (2 * h)
            rel = abs(gflat[n] - num) / max(abs(gflat[n]) + abs(num), floor)
            worst = max(worst, rel)
    return worst
