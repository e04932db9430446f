"""
Evaluators for the dependent-data concentration inequality and the
oracle inequalities derived from it.
"""
import warnings
from dataclasses import dataclass, field, replace
from math import ceil, e, exp, isclose, log, sqrt

from .coupling import block_layout
from .mixing import MixingEnvelope, MarkovChainSpec, beta_coefficient_exact
from .subweibull import moment_const_c1, sum_concentration_constants


def _beta_callable(beta):
    """Normalise a beta argument (chain, envelope or callable) to a function of the lag."""
    if beta is None:
        return lambda l: 0.0
    if isinstance(beta, MarkovChainSpec):
        return lambda l: beta_coefficient_exact(beta, l)
    if callable(beta):
        return beta
    raise TypeError("beta must be None, a MixingEnvelope, a MarkovChainSpec or a callable")


@dataclass(frozen=True)
class BoundInputs:
    """Everything the concentration inequality depends on.

    ``beta`` is None for independent data, a :class:`MixingEnvelope`, a
    :class:`MarkovChainSpec` (exact coefficients), or any callable of the lag.
    """

    alpha: float
    C_Theta: float
    C_Z: float
    T: int
    n: int
    gamma2: float = 0.0
    gamma_alpha: float = 0.0
    r: float = 2.0
    s: float = 2.0
    beta: object = None
    eps1: float = 2.0
    eps2: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 1 <= self.n <= self.T:
            raise ValueError("n must lie in 1..T")
        if self.eps1 < 2:
            raise ValueError("eps1 must be >= 2")
        if self.eps2 < 0:
            raise ValueError("eps2 must be nonnegative")
        if self.r < 1 or not self.s > 0:
            raise ValueError("need r >= 1 and s > 0")
        for name in ("C_Theta", "C_Z", "gamma2", "gamma_alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def mixing_exponent(self):
        return self.s / (self.r * (self.r + self.s))

    @property
    def block_lag(self):
        return self.T // (self.n + 1)

    def coupling_factor(self):
        """beta(floor(T/(n+1))) ** (s / (r (r + s)))."""
        b = _beta_callable(self.beta)(self.block_lag)
        return b**self.mixing_exponent if b > 0 else 0.0


@dataclass(frozen=True)
class BoundResult:
    threshold: float
    failure_prob: float
    terms: tuple
    raw_prob: float = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "failure_prob", float(self.failure_prob))
        object.__setattr__(self, "terms", tuple(float(t) for t in self.terms))
        if self.raw_prob is not None:
            object.__setattr__(self, "raw_prob", float(self.raw_prob))

    @property
    def vacuous(self):
        return self.raw_prob is not None and self.raw_prob >= 1.0


@dataclass(frozen=True)
class TheoremBound:
    compact: BoundResult
    decomposed: BoundResult
    C_alpha: float


def rate_exponent(alpha):
    """Exponent of n in the denominator of the heavy-tail term, 1/alpha v 1."""
    return max(1.0 / alpha, 1.0)


def compact_constant(alpha):
    """C_alpha = max(9 C', (4^((alpha+1)/alpha) + 1) C'').

    The single-deviation and chaining terms together read
    C' (1 + 8 gamma_2) ... + C'' (1 + 4^((alpha+1)/alpha) gamma_alpha) ...,
    and 9 (1 + g) >= 1 + 8 g, (c + 1)(1 + g) >= 1 + c g, so this C_alpha
    makes the compact threshold dominate the decomposed one.
    """
    cp, cpp = sum_concentration_constants(alpha)
    return max(9.0 * cp, (4.0 ** ((alpha + 1.0) / alpha) + 1.0) * cpp)


def _coupling_prob(inp, coupling, ratio):
    if coupling == 0.0:
        return 0.0
    if inp.eps2 == 0:
        raise ValueError("eps2 must be positive when the mixing coefficient is nonzero")
    return 8.0 * ratio * coupling / inp.eps2


def theorem_bound(inp):
    """Threshold and failure probability of the concentration inequality.

    Returns a :class:`TheoremBound` holding the compact form, whose terms are
    (sub-Gaussian part, heavy-tail part, coupling part), and the sharper
    decomposition whose terms are (single-parameter deviation, chaining
    supremum, coupling error).
    """
    block_layout(inp.T, inp.n)
    a = inp.alpha
    ratio = inp.T / inp.n
    root = sqrt(inp.eps1) / sqrt(inp.n)
    heavy = inp.eps1 ** (1.0 / a) / inp.n ** rate_exponent(a)
    coupling = inp.coupling_factor()
    p_coupling = _coupling_prob(inp, coupling, ratio)
    t3 = inp.C_Z * inp.eps2

    C_alpha = compact_constant(a)
    c1 = C_alpha * inp.C_Theta * (1.0 + inp.gamma2) * root
    c2 = C_alpha * inp.C_Theta * (1.0 + inp.gamma_alpha) * heavy
    raw = 5.0 * ratio * exp(-inp.eps1) + p_coupling
    compact = BoundResult(c1 + c2 + t3, min(1.0, raw), (c1, c2, t3), raw)

    cp, cpp = sum_concentration_constants(a)
    d1 = cp * inp.C_Theta * root + cpp * inp.C_Theta * heavy
    d2 = (
        8.0 * cp * inp.C_Theta * inp.gamma2 * root
        + 4.0 ** ((a + 1.0) / a) * cpp * inp.C_Theta * inp.gamma_alpha * heavy
    )
    raw_d = (e + 2.0) * ratio * exp(-inp.eps1) + p_coupling
    decomposed = BoundResult(d1 + d2 + t3, min(1.0, raw_d), (d1, d2, t3), raw_d)
    return TheoremBound(compact, decomposed, C_alpha)


def simplified_bound(T, n, eps, inputs):
    """Single-deviation form: probability min(1, 13 (T/n) exp(-eps))."""
    if eps < 2:
        raise ValueError("eps must be >= 2")
    inp = replace(inputs, T=T, n=n, eps1=eps)
    block_layout(T, n)
    a = inp.alpha
    C_alpha = compact_constant(a)
    c1 = C_alpha * inp.C_Theta * (1.0 + inp.gamma2) * sqrt(eps) / sqrt(n)
    c2 = C_alpha * inp.C_Theta * (1.0 + inp.gamma_alpha) * eps ** (1.0 / a) / n ** rate_exponent(a)
    c3 = inp.C_Z * inp.coupling_factor() * exp(eps)
    raw = 13.0 * (T / n) * exp(-eps)
    return BoundResult(c1 + c2 + c3, min(1.0, raw), (c1, c2, c3), raw)


def effective_sample_size(T, zeta):
    """eta = (zeta - 4) / (zeta + 2) and n = ceil(T**eta), capped at T."""
    if not zeta > 4:
        raise ValueError("zeta must exceed 4")
    if T < 1:
        raise ValueError("T must be >= 1")
    eta = (zeta - 4.0) / (zeta + 2.0)
    x = T**eta
    # T**eta can land a rounding error above an exact integer
    n = round(x) if isclose(x, round(x), rel_tol=1e-12) else ceil(x)
    if n > T:
        warnings.warn(f"ceil(T^eta) = {n} exceeds T = {T}; clamped to T", stacklevel=2)
        n = T
    return eta, int(n)


@dataclass(frozen=True)
class OracleBound:
    bound: float
    prob: float
    n: int
    eta: float
    terms: tuple

    @property
    def vacuous(self):
        return self.prob <= 0.0


def _oracle_prob(n):
    return min(1.0, max(0.0, 1.0 - 13.0 / n))


def oracle_inequality_bound(T, zeta, gamma2, gamma1, C, C_Z):
    """Excess-risk bound C (gamma2 sqrt(log n / n) + gamma1 log n / n + C_Z / sqrt n)
    holding with probability 1 - 13/n."""
    if not C > 0:
        raise ValueError("C must be positive")
    eta, n = effective_sample_size(T, zeta)
    terms = (
        C * gamma2 * sqrt(log(n) / n),
        C * gamma1 * log(n) / n,
        C * C_Z / sqrt(n),
    )
    return OracleBound(sum(terms), _oracle_prob(n), n, eta, terms)


def nn_bound(T, zeta, d, C):
    """Excess-risk bound for the single-layer perceptron,
    C (sqrt(d log n / n) + d log n / n + sqrt(log d / n)), for T >= 8."""
    if T < 8:
        raise ValueError("the perceptron bound requires T >= 8")
    if d < 1:
        raise ValueError("d must be >= 1")
    if not C > 0:
        raise ValueError("C must be positive")
    eta, n = effective_sample_size(T, zeta)
    terms = (
        C * sqrt(d * log(n) / n),
        C * d * log(n) / n,
        C * sqrt(log(d) / n),
    )
    return OracleBound(sum(terms), _oracle_prob(n), n, eta, terms)


def erm_assumption_constants(C1, C2, s=2.0):
    """Increment and coupling constants implied by the regression conditions.

    Returns ``(C_Theta, C_Z, r, s)`` with C_Theta = 16 C1^2 (sub-exponential
    increments, alpha = 1) and C_Z = 12 C1 C^(1)_2 sqrt(s + 2) (C1 + C2), r = 2.
    """
    if not C1 > 0 or not C2 > 0 or not s > 0:
        raise ValueError("C1, C2 and s must be positive")
    C_Theta = 16.0 * C1**2
    C_Z = 12.0 * C1 * moment_const_c1(2.0) * sqrt(s + 2.0) * (C1 + C2)
    return C_Theta, C_Z, 2.0, float(s)


def bound_inputs_from_json(doc):
    """Build :class:`BoundInputs` from a JSON mapping; ``beta`` may be
    {"kind": "zero"}, an envelope {"kind": "polynomial", "zeta": ...} /
    {"kind": "geometric", "rho": ..., "c": ...}, or a chain {"P": ..., "pi"?: ...}."""
    doc = dict(doc)
    beta = doc.pop("beta", None)
    if isinstance(beta, dict):
        if "P" in beta:
            beta = MarkovChainSpec.from_json(beta)
        elif beta.get("kind", "zero") == "zero":
            beta = None
        else:
            beta = MixingEnvelope(**beta)
    elif beta is not None:
        raise ValueError("beta must be a JSON object")
    known = set(BoundInputs.__dataclass_fields__) - {"beta"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown bound input fields: {sorted(unknown)}")
    return BoundInputs(beta=beta, **doc)


def bound_result_to_json(result):
    return {
        "threshold": result.threshold,
        "failure_prob": result.failure_prob,
        "raw_prob": result.raw_prob,
        "vacuous": result.vacuous,
        "terms": list(result.terms),
    }


__all__ = [
    "BoundInputs",
    "BoundResult",
    "OracleBound",
    "TheoremBound",
    "bound_inputs_from_json",
    "bound_result_to_json",
    "compact_constant",
    "effective_sample_size",
    "erm_assumption_constants",
    "nn_bound",
    "oracle_inequality_bound",
    "rate_exponent",
    "simplified_bound",
    "theorem_bound",
]
