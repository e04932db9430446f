"""
Blocking scheme and independent block copies via maximal coupling.

The sample Z_1..Z_T is extended to (z, Z_1, ..., Z_T, z, z, ...) with a
padding point z and rearranged as W[i, j] = Z[i*M + j] for i in 0..n and
j in 0..M-1. Column j is the (n+1)-long, M-spaced subsequence that gets
replaced by an independent copy W*.
"""
from dataclasses import dataclass

import numpy as np

from .mixing import _as_rng


class BlockingInfeasible(ValueError):
    """No integer M satisfies T/(n+1) < M <= T/n."""


@dataclass(frozen=True)
class BlockLayout:
    T: int
    n: int
    M: int
    pad: object = -1

    @property
    def index(self):
        """(n+1, M) array of extended indices i*M + j."""
        i = np.arange(self.n + 1)[:, None]
        j = np.arange(self.M)[None, :]
        return i * self.M + j

    @property
    def is_pad(self):
        idx = self.index
        return (idx == 0) | (idx > self.T)


def block_layout(T, n, pad=-1):
    """Layout with the largest admissible block count M = floor(T / n)."""
    if not 1 <= n <= T:
        raise ValueError(f"need 1 <= n <= T, got n={n}, T={T}")
    M = T // n
    if M * (n + 1) <= T:
        raise BlockingInfeasible(f"no integer M with {T}/{n + 1} < M <= {T}/{n}")
    return BlockLayout(int(T), int(n), int(M), pad)


def extract_block_sequences(traj, layout):
    """Return an array of shape (M, n+1, ...) whose row j is
    (W[0, j], ..., W[n, j]); padded positions hold ``layout.pad``."""
    values = np.asarray(traj.values if hasattr(traj, "values") else traj)
    if values.shape[0] != layout.T:
        raise ValueError(f"trajectory length {values.shape[0]} != layout T {layout.T}")
    idx = layout.index.T
    pad = layout.is_pad.T
    dtype = np.result_type(values.dtype, np.min_scalar_type(layout.pad))
    out = np.empty(idx.shape + values.shape[1:], dtype=dtype)
    out[~pad] = values[idx[~pad] - 1]
    out[pad] = layout.pad
    return out


@dataclass(frozen=True)
class CoupledPair:
    original: object
    copy: object
    matched: bool

    def __post_init__(self):
        if self.matched and self.original != self.copy:
            raise ValueError("a matched pair must have equal components")


def _check_distribution(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must be a probability vector")
    return p / p.sum()


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def maximal_coupling_draws(p, q, size, seed):
    """Vectorised maximal coupling of two laws on {0, ..., m-1}.

    Returns ``(x, y, matched)`` arrays with x ~ p, y ~ q and
    P(x != y) = TV(p, q).
    """
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError("p and q must live on the same states")
    rng = _as_rng(seed)
    overlap = np.minimum(p, q)
    w = overlap.sum()
    matched = rng.random(size) < w
    x = np.empty(size, dtype=np.int64)
    y = np.empty(size, dtype=np.int64)
    k = int(matched.sum())
    if k:
        x[matched] = rng.choice(p.size, size=k, p=overlap / w)
        y[matched] = x[matched]
    if k < size:
        rest = 1.0 - w
        x[~matched] = rng.choice(p.size, size=size - k, p=(p - overlap) / rest)
        y[~matched] = rng.choice(p.size, size=size - k, p=(q - overlap) / rest)
    return x, y, matched


def maximal_coupling(p, q, seed):
    x, y, matched = maximal_coupling_draws(p, q, 1, seed)
    return CoupledPair(int(x[0]), int(y[0]), bool(matched[0]))


def sample_coupled_blocks(spec, layout, j, seed):
    """Sample column j of the blocked chain together with an i.i.d. copy.

    Each W[i, j] is drawn from its law given the realised previous entry of
    the column (P^M from it, or pi for the first real entry), maximally
    coupled with a fresh W*[i, j] ~ pi. Given the past, W*[i, j] is pi
    distributed, so the copies are i.i.d. and independent of the earlier
    entries. Padded positions hold ``layout.pad`` in both sequences.

    Returns ``(W, W_star, mismatch_prob)``; the last array holds the
    conditional TV distance that governs P(W[i, j] != W*[i, j]).
    """
    if not 0 <= j < layout.M:
        raise ValueError(f"column {j} outside 0..{layout.M - 1}")
    rng = _as_rng(seed)
    PM = np.linalg.matrix_power(spec.P, layout.M)
    pad = layout.is_pad[:, j]
    W = np.full(layout.n + 1, layout.pad, dtype=np.int64)
    Ws = W.copy()
    tv = np.zeros(layout.n + 1)
    prev = None
    for i in range(layout.n + 1):
        if pad[i]:
            continue
        law = spec.pi if prev is None else PM[prev]
        x, y, _ = maximal_coupling_draws(law, spec.pi, 1, rng)
        W[i], Ws[i] = x[0], y[0]
        tv[i] = total_variation(law, spec.pi)
        prev = int(W[i])
    return W, Ws, tv


def coupling_discrepancy(g, W, W_star, theta_grid, pad=None):
    """Monte Carlo estimate of E sup_theta |(1/n) sum_i g(W_i, theta) - g(W*_i, theta)|.

    ``W`` and ``W_star`` hold one replication per row, each with n+1
    entries; ``g(values, grid)`` must return an array of shape
    (len(values), len(grid)). Entries equal to ``pad`` contribute zero.
    """
    grid = np.asarray(theta_grid)
    if grid.shape[0] == 0:
        raise ValueError("theta grid is empty")
    W = np.atleast_2d(np.asarray(W))
    Ws = np.atleast_2d(np.asarray(W_star))
    if W.shape != Ws.shape:
        raise ValueError("W and W* must have the same shape")
    n = W.shape[1] - 1
    sups = np.empty(W.shape[0])
    for r in range(W.shape[0]):
        a, b = W[r], Ws[r]
        keep_a = np.ones(a.shape[0], bool) if pad is None else a != pad
        keep_b = np.ones(b.shape[0], bool) if pad is None else b != pad
        diff = g(a[keep_a], grid).sum(axis=0) - g(b[keep_b], grid).sum(axis=0)
        sups[r] = np.abs(diff).max() / max(n, 1)
    return float(sups.mean())
