"""
Covering numbers and Talagrand gamma functionals on finite metric spaces.

Partitions are tuples of frozensets of point indices. An admissible
sequence is increasing (each level refines the previous one) with
``|A_k| <= 2**(2**k)`` and ends in singletons.
"""
from dataclasses import dataclass, field
from itertools import combinations
from math import log
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

EXACT_COVER_MAX_POINTS = 12
EXACT_GAMMA_MAX_POINTS = 6
_BALL_RTOL = 1e-9


class InvalidPartitionSequence(ValueError):
    pass


@dataclass(frozen=True)
class FiniteMetricSpace:
    dist: np.ndarray
    points: tuple = None
    check_triangle: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
            raise ValueError("dist must be a nonempty square matrix")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distances must be finite and nonnegative")
        if not np.allclose(d, d.T, rtol=0, atol=1e-12):
            raise ValueError("dist must be symmetric")
        if np.any(np.diag(d) != 0):
            raise ValueError("dist must have a zero diagonal")
        if self.check_triangle:
            tol = 1e-12 * max(1.0, d.max())
            for k in range(d.shape[0]):
                if np.any(d > d[:, k, None] + d[None, k, :] + tol):
                    raise ValueError("dist violates the triangle inequality")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        pts = tuple(range(d.shape[0])) if self.points is None else tuple(self.points)
        if len(pts) != d.shape[0]:
            raise ValueError("points and dist disagree in size")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_coordinates(cls, coords, metric="euclidean"):
        """Build from an (m, p) array of coordinates; ``metric`` is any
        :func:`scipy.spatial.distance.cdist` metric name."""
        x = np.asarray(coords, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        d = cdist(x, x, metric=metric)
        return cls(0.5 * (d + d.T), check_triangle=False)

    @property
    def size(self):
        return self.dist.shape[0]

    @property
    def diameter(self):
        return float(self.dist.max())

    def subspace(self, indices):
        idx = list(indices)
        return FiniteMetricSpace(
            self.dist[np.ix_(idx, idx)], tuple(self.points[i] for i in idx), check_triangle=False
        )


@dataclass(frozen=True)
class AdmissiblePartitionSequence:
    partitions: tuple

    @property
    def depth(self):
        return len(self.partitions) - 1


@dataclass(frozen=True)
class BallSpec:
    dimension: int
    diameter: float

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.diameter < 0:
            raise ValueError("diameter must be nonnegative")


class CoveringNumber(NamedTuple):
    value: int
    exact: bool


def _ball_masks(dist, eps):
    inside = dist <= eps * (1.0 + _BALL_RTOL)
    return [sum(1 << int(j) for j in np.flatnonzero(row)) for row in inside]


def _cover_exact(masks, full):
    m = len(masks)
    for k in range(1, m + 1):
        for combo in combinations(masks, k):
            acc = 0
            for b in combo:
                acc |= b
            if acc == full:
                return k
    return m


def _cover_greedy(masks, full):
    covered, count = 0, 0
    while covered != full:
        gains = [bin(b & ~covered).count("1") for b in masks]
        covered |= masks[int(np.argmax(gains))]
        count += 1
    return count


def covering_number(space, eps):
    """Minimal number of closed eps-balls centred at points of ``space``
    that cover it. Exact up to 12 points, greedy (an upper bound) beyond."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    masks = _ball_masks(space.dist, eps)
    full = (1 << space.size) - 1
    if space.size <= EXACT_COVER_MAX_POINTS:
        return CoveringNumber(_cover_exact(masks, full), True)
    return CoveringNumber(_cover_greedy(masks, full), False)


def _entropy_integrand(space, alpha):
    # N(eps) only changes where eps crosses a pairwise distance.
    levels = np.unique(space.dist[np.triu_indices(space.size, 1)])
    cache = {}

    def f(eps):
        key = int(np.searchsorted(levels, eps * (1.0 + _BALL_RTOL), side="right"))
        if key not in cache:
            cache[key] = log(covering_number(space, eps).value) ** (1.0 / alpha)
        return cache[key]

    return f


def _adaptive_trapezoid(f, a, b, panels, rtol, max_depth=60):
    xs = np.linspace(a, b, panels + 1)
    fs = [f(x) for x in xs]
    coarse = sum(0.5 * (xs[i + 1] - xs[i]) * (fs[i] + fs[i + 1]) for i in range(panels))
    tol = rtol * max(abs(coarse), np.finfo(float).tiny)
    total = 0.0
    stack = [(xs[i], xs[i + 1], fs[i], fs[i + 1], 0) for i in range(panels)]
    while stack:
        x0, x1, f0, f1, depth = stack.pop()
        h = x1 - x0
        xm = 0.5 * (x0 + x1)
        fm = f(xm)
        whole = 0.5 * h * (f0 + f1)
        halves = 0.25 * h * (f0 + 2.0 * fm + f1)
        if abs(halves - whole) <= tol * h / (b - a) or depth >= max_depth:
            total += halves
        else:
            stack.append((x0, xm, f0, fm, depth + 1))
            stack.append((xm, x1, fm, f1, depth + 1))
    return total


def entropy_integral(space, alpha, panels=256, rtol=1e-6):
    """Integral of (log N(space, eps))**(1/alpha) over (0, diam].

    Below the smallest positive distance the covering number is constant, so
    that stretch is integrated exactly; the rest uses adaptive trapezoids.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    diam = space.diameter
    if space.size == 1 or diam == 0:
        return 0.0
    d = space.dist[np.triu_indices(space.size, 1)]
    d_min = float(d[d > 0].min())
    head = d_min * log(covering_number(space, 0.5 * d_min).value) ** (1.0 / alpha)
    if d_min >= diam:
        return head
    return head + _adaptive_trapezoid(_entropy_integrand(space, alpha), d_min, diam, panels, rtol)


def entropy_constant(alpha):
    """Divisor turning the entropy integral into an upper bound on gamma_alpha."""
    return log(2.0) ** (1.0 / alpha) * (1.0 - 2.0 ** (-1.0 / alpha))


def entropy_integral_gamma_bound(space, alpha, panels=256, rtol=1e-6):
    """Upper bound on gamma_alpha(space) from the generalised Dudley integral."""
    return entropy_integral(space, alpha, panels, rtol) / entropy_constant(alpha)


def _level_budget(k):
    return 2 ** (2**k)


def check_admissible(space, sequence):
    """Raise :class:`InvalidPartitionSequence` unless ``sequence`` is an
    admissible sequence of partitions of ``space`` ending in singletons."""
    everything = frozenset(range(space.size))
    parts = sequence.partitions
    if len(parts) == 0:
        raise InvalidPartitionSequence("empty sequence")
    prev = None
    for k, part in enumerate(parts):
        if any(len(c) == 0 for c in part):
            raise InvalidPartitionSequence(f"level {k}: empty cell")
        if sum(len(c) for c in part) != space.size or frozenset().union(*part) != everything:
            raise InvalidPartitionSequence(f"level {k}: not a partition of the point set")
        if len(part) > _level_budget(k):
            raise InvalidPartitionSequence(f"level {k}: {len(part)} cells exceed 2^(2^{k})")
        if prev is not None and not all(any(c <= p for p in prev) for c in part):
            raise InvalidPartitionSequence(f"level {k} does not refine level {k - 1}")
        prev = part
    if any(len(c) != 1 for c in parts[-1]):
        raise InvalidPartitionSequence("last level is not all singletons")


def _split_cell(dist, cell, quota):
    if len(cell) <= quota:
        return [frozenset([i]) for i in cell]
    sub = dist[np.ix_(cell, cell)]
    centers = [int(np.argmin(sub.max(axis=1)))]
    nearest = sub[centers[0]].copy()
    while len(centers) < quota:
        nxt = int(np.argmax(nearest))
        centers.append(nxt)
        np.minimum(nearest, sub[nxt], out=nearest)
    owner = np.argmin(sub[centers], axis=0)
    return [frozenset(cell[i] for i in np.flatnonzero(owner == c)) for c in range(len(centers))]


def greedy_admissible_sequence(space):
    """Admissible sequence built by farthest-point traversal.

    At level ``k`` the budget ``2**(2**k)`` is shared evenly among the cells
    of level ``k - 1``; every cell picks its share of centres by farthest-point
    sampling and is split by nearest centre, so each level refines the last.
    """
    parent = [list(range(space.size))]
    levels = []
    k = 0
    while True:
        quota = max(1, _level_budget(k) // len(parent))
        cells = []
        for cell in parent:
            cells.extend(_split_cell(space.dist, cell, quota))
        levels.append(tuple(cells))
        if all(len(c) == 1 for c in cells):
            break
        parent = [sorted(c) for c in cells]
        k += 1
    seq = AdmissiblePartitionSequence(tuple(levels))
    check_admissible(space, seq)
    return seq


def _cell_diameters(dist, part, n):
    out = np.zeros(n)
    for cell in part:
        idx = list(cell)
        out[idx] = dist[np.ix_(idx, idx)].max()
    return out


def gamma_value(space, sequence, alpha):
    """sup over points of sum_k 2**(k/alpha) diam(A_k(point)) for a given
    admissible sequence."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    check_admissible(space, sequence)
    acc = np.zeros(space.size)
    for k, part in enumerate(sequence.partitions):
        acc += 2.0 ** (k / alpha) * _cell_diameters(space.dist, part, space.size)
    return float(acc.max())


def _set_partitions(items, max_blocks):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest, max_blocks):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        if len(part) < max_blocks:
            yield [[first]] + part


def _refinements(parent, max_blocks):
    def rec(i, used):
        if i == len(parent):
            yield []
            return
        cell = sorted(parent[i])
        # every later cell needs at least one block
        room = max_blocks - used - (len(parent) - i - 1)
        for split in _set_partitions(cell, room):
            for tail in rec(i + 1, used + len(split)):
                yield [frozenset(b) for b in split] + tail

    yield from rec(0, 0)


def gamma_exact_small(space, alpha):
    """Exact gamma_alpha by exhaustive search over admissible chains (at most
    6 points)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    n = space.size
    if n > EXACT_GAMMA_MAX_POINTS:
        raise ValueError(f"exhaustive search supports at most {EXACT_GAMMA_MAX_POINTS} points")
    best = [np.inf]

    def search(k, parent, acc):
        # Once the budget admits all singletons they are optimal: every later
        # term vanishes and earlier levels are unaffected.
        if _level_budget(k) >= n:
            best[0] = min(best[0], float(acc.max()))
            return
        weight = 2.0 ** (k / alpha)
        for part in _refinements(parent, _level_budget(k)):
            nxt = acc + weight * _cell_diameters(space.dist, part, n)
            if nxt.max() < best[0]:
                search(k + 1, part, nxt)

    search(0, [frozenset(range(n))], np.zeros(n))
    return best[0]


def gamma_ball_bound(ball, alpha, proof_consistent=False):
    """Closed-form gamma bounds for a Euclidean ball of given dimension and
    diameter, for alpha in {1, 2}.

    ``proof_consistent=True`` divides by (1 - 2**-0.5) in the alpha = 2 form
    instead of multiplying by it.
    """
    p, diam = ball.dimension, ball.diameter
    if alpha == 1:
        return log(2.0) ** 2 * p * diam
    if alpha == 2:
        shrink = 1.0 - 2.0**-0.5
        factor = 1.0 / shrink if proof_consistent else shrink
        return 2.0 * log(2.0) ** -0.5 * factor * np.sqrt(p) * diam
    raise ValueError("closed-form ball bounds exist for alpha in {1, 2} only")
