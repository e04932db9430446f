"""
Dependent processes with known mixing behaviour.

Finite-state stationary Markov chains (with exactly computable
beta-mixing coefficients), a stationary Gaussian AR(1) driver, and
analytic envelopes for the decay of beta(l).
"""
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stationary_distribution(P):
    """Left Perron vector of a row-stochastic matrix, normalised to sum one."""
    P = np.asarray(P, dtype=float)
    m = P.shape[0]
    # pi (P - I) = 0 together with sum(pi) = 1, solved in the least-squares sense
    A = np.vstack([P.T - np.eye(m), np.ones((1, m))])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class MarkovChainSpec:
    """Finite-state chain with transition matrix ``P`` and stationary law ``pi``.

    If ``pi`` is omitted it is solved for from ``P``.
    """

    P: np.ndarray
    pi: np.ndarray = None

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ValueError("P must be a nonempty square matrix")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ValueError("P must have finite nonnegative entries")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("rows of P must sum to one")
        pi = stationary_distribution(P) if self.pi is None else np.array(self.pi, dtype=float)
        if pi.shape != (P.shape[0],) or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("pi must be a probability vector matching P")
        if np.max(np.abs(pi @ P - pi)) > 1e-10:
            raise ValueError("pi is not stationary for P")
        P.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "pi", pi)

    @property
    def m(self):
        return self.P.shape[0]

    @classmethod
    def two_state(cls, p, q):
        """Chain flipping 0 -> 1 with probability ``p`` and 1 -> 0 with ``q``."""
        return cls([[1.0 - p, p], [q, 1.0 - q]])

    @classmethod
    def from_json(cls, doc):
        if "P" not in doc:
            raise ValueError('chain document needs a "P" matrix')
        return cls(doc["P"], doc.get("pi"))


@dataclass(frozen=True)
class Trajectory:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape[0] < 1:
            raise ValueError("trajectory must have length >= 1")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    @property
    def T(self):
        return len(self)


def simulate_markov_chain(spec, T, seed):
    """Draw Z_1 ~ pi and Z_{t+1} ~ P(Z_t, .) for t < T."""
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = _as_rng(seed)
    u = rng.random(T)
    cum = np.cumsum(spec.P, axis=1)
    cum[:, -1] = 1.0
    cum0 = np.cumsum(spec.pi)
    cum0[-1] = 1.0
    out = np.empty(T, dtype=np.int64)
    x = int(np.searchsorted(cum0, u[0], side="right"))
    out[0] = x
    for t in range(1, T):
        x = int(np.searchsorted(cum[x], u[t], side="right"))
        out[t] = x
    return Trajectory(out)


def simulate_ar1(phi, sigma, d, T, seed):
    """Componentwise stationary Gaussian AR(1), returned as a (T, d) trajectory."""
    if not abs(phi) < 1:
        raise ValueError("|phi| must be < 1 for a stationary AR(1)")
    if not sigma > 0 or d < 1 or T < 1:
        raise ValueError("need sigma > 0, d >= 1 and T >= 1")
    rng = _as_rng(seed)
    shocks = sigma * rng.standard_normal((T, d))
    shocks[0] = rng.standard_normal(d) * sigma / np.sqrt(1.0 - phi**2)
    return Trajectory(lfilter([1.0], [1.0, -phi], shocks, axis=0))


def beta_coefficient_exact(spec, l):
    """beta(l) of the stationary chain: total variation between the law of
    (Z_0, Z_l) and the product of its marginals."""
    if l < 0 or int(l) != l:
        raise ValueError("lag must be a nonnegative integer")
    Pl = np.linalg.matrix_power(spec.P, int(l))
    joint = spec.pi[:, None] * Pl
    return 0.5 * float(np.abs(joint - np.outer(spec.pi, spec.pi)).sum())


@dataclass(frozen=True)
class MixingEnvelope:
    """Either polynomial decay ``l**-zeta`` or geometric decay ``c * rho**l``."""

    kind: str = "polynomial"
    zeta: float = None
    rho: float = None
    c: float = 1.0

    def __post_init__(self):
        if self.kind == "polynomial":
            if self.zeta is None or not self.zeta > 4:
                raise ValueError("polynomial envelope needs zeta > 4")
        elif self.kind == "geometric":
            if self.rho is None or not 0 < self.rho < 1 or not self.c > 0:
                raise ValueError("geometric envelope needs 0 < rho < 1 and c > 0")
        else:
            raise ValueError(f"unknown envelope kind {self.kind!r}")

    def __call__(self, l):
        return beta_envelope(self, l)


def beta_envelope(env, l):
    if l < 0:
        raise ValueError("lag must be nonnegative")
    if l == 0:
        return 1.0
    if env.kind == "polynomial":
        return float(l) ** (-env.zeta)
    return min(1.0, env.c * env.rho**l)


def largest_polynomial_exponent(beta, lags):
    """Largest zeta with beta(l) <= l**-zeta for every lag in ``lags`` (lags >= 2;
    at l = 1 the envelope equals one and never binds)."""
    best = np.inf
    for l in lags:
        if l < 2:
            continue
        b = beta(l)
        if b > 0:
            best = min(best, -np.log(b) / np.log(l))
    return best
