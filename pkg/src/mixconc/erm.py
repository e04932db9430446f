"""
Single-layer perceptron regression: prediction rule, square-loss risks,
projected-gradient ERM over the compact parameter set, and the constants
of the increment and coupling conditions for this model class.
"""
import json
from dataclasses import dataclass, field
from math import log, sqrt

import numpy as np
from scipy.optimize import least_squares

from .mixing import _as_rng, simulate_ar1
from .subweibull import moment_const_c1

ACTIVATIONS = ("relu", "tanh")


class TrainingFailed(RuntimeError):
    """Every restart produced a non-finite loss."""


@dataclass(frozen=True)
class PerceptronSpec:
    K: int
    d: int
    activation: str = "tanh"
    C_theta: float = 1.0

    def __post_init__(self):
        if self.K < 1 or self.d < 1:
            raise ValueError("K and d must be >= 1")
        if not self.C_theta > 0:
            raise ValueError("C_theta must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"activation must be one of {ACTIVATIONS} (it has to vanish at 0)"
            )

    @property
    def L(self):
        """Lipschitz constant of the activation."""
        return 1.0

    @property
    def n_params(self):
        return self.K * self.d + self.K


def _act(name, u):
    return np.maximum(u, 0.0) if name == "relu" else np.tanh(u)


def _act_grad(name, u):
    if name == "relu":
        return (u > 0).astype(float)  # sub-gradient 0 at the kink
    return 1.0 - np.tanh(u) ** 2


@dataclass(frozen=True)
class PerceptronParams:
    w: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float, ndmin=2)
        psi = np.array(self.psi, dtype=float, ndmin=1)
        if w.ndim != 2 or psi.ndim != 1 or w.shape[0] != psi.shape[0]:
            raise ValueError("w must be K x d and psi must have length K")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "psi", psi)

    @property
    def vector(self):
        """theta = (w_1, ..., w_K, psi_1, ..., psi_K)."""
        return np.concatenate([self.w.ravel(), self.psi])

    @classmethod
    def from_vector(cls, spec, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {theta.shape}")
        kd = spec.K * spec.d
        return cls(theta[:kd].reshape(spec.K, spec.d), theta[kd:])

    def is_feasible(self, spec, tol=1e-12):
        if self.w.shape != (spec.K, spec.d):
            return False
        c = spec.C_theta * (1.0 + tol)
        return bool(
            np.all(np.linalg.norm(self.w, axis=1) <= c) and np.all(np.abs(self.psi) <= c)
        )

    def to_json(self):
        return {"w": self.w.tolist(), "psi": self.psi.tolist()}

    @classmethod
    def from_json(cls, doc):
        return cls(doc["w"], doc["psi"])


def save_params(params, path):
    with open(path, "w") as fh:
        json.dump(params.to_json(), fh)


def load_params(path):
    with open(path) as fh:
        return PerceptronParams.from_json(json.load(fh))


def perceptron_forward(spec, params, x):
    """f(x) = sum_k psi_k act(x . w_k); ``x`` may be one point or a (T, d) batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d or params.w.shape != (spec.K, spec.d):
        raise ValueError("dimension mismatch between inputs, params and spec")
    out = _act(spec.activation, x @ params.w.T) @ params.psi
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RegressionData:
    X: np.ndarray
    Y: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != Y.shape[0] or Y.shape[0] < 1:
            raise ValueError("X and Y must be nonempty with matching length")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("data must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def T(self):
        return self.Y.shape[0]


@dataclass(frozen=True)
class PerceptronGenerator:
    """Y_t = f_{theta*}(X_t) + noise with X_t a componentwise AR(1).

    ``x_sd`` is the stationary standard deviation of each input coordinate.
    """

    spec: PerceptronSpec
    theta_star: PerceptronParams
    phi: float = 0.6
    x_sd: float = 1.0
    noise_sd: float = 0.5

    def __post_init__(self):
        if not abs(self.phi) < 1 or not self.x_sd > 0 or self.noise_sd < 0:
            raise ValueError("need |phi| < 1, x_sd > 0 and noise_sd >= 0")
        if not self.theta_star.is_feasible(self.spec):
            raise ValueError("theta_star must lie in the parameter set")

    def sample(self, T, seed):
        rng = _as_rng(seed)
        innov = self.x_sd * sqrt(1.0 - self.phi**2)
        X = simulate_ar1(self.phi, innov, self.spec.d, T, rng).values
        Y = perceptron_forward(self.spec, self.theta_star, X)
        Y = Y + self.noise_sd * rng.standard_normal(T)
        return RegressionData(X, Y, {"generator": "ar1-perceptron", "phi": self.phi, "T": T})

    def sample_stationary(self, m, seed):
        """m independent draws from the stationary law of (X_t, Y_t)."""
        rng = _as_rng(seed)
        X = self.x_sd * rng.standard_normal((m, self.spec.d))
        Y = perceptron_forward(self.spec, self.theta_star, X)
        return X, Y + self.noise_sd * rng.standard_normal(m)

    @property
    def sigma_X(self):
        """psi_2 norm of a Gaussian input coordinate."""
        return self.x_sd * sqrt(8.0 / 3.0)

    @property
    def sigma_Y(self):
        """Upper bound on the psi_2 norm of Y (norm triangle inequality)."""
        t = self.theta_star
        if self.spec.activation == "tanh":
            signal = np.abs(t.psi).sum() / sqrt(log(2.0))
        else:
            signal = float(np.abs(t.psi) @ np.linalg.norm(t.w, axis=1)) * self.sigma_X
        return signal + self.noise_sd * sqrt(8.0 / 3.0)


def empirical_risk(spec, params, data):
    """(1/T) sum_t (Y_t - f(X_t))^2."""
    if data.T == 0:
        raise ValueError("empty data")
    r = data.Y - perceptron_forward(spec, params, data.X)
    return float(np.mean(r * r))


def risk_on_grid(spec, thetas, X, Y, chunk=None):
    """Mean squared residual for each row of ``thetas`` on the sample (X, Y)."""
    thetas = np.atleast_2d(thetas)
    kd = spec.K * spec.d
    if chunk is None:
        chunk = max(1, int(4e6 // max(1, X.shape[0] * spec.K)))
    out = np.empty(thetas.shape[0])
    for a in range(0, thetas.shape[0], chunk):
        th = thetas[a : a + chunk]
        g = th.shape[0]
        # (T, g*K) pre-activations in one BLAS call
        pre = X @ th[:, :kd].reshape(g * spec.K, spec.d).T
        h = _act(spec.activation, pre).reshape(-1, g, spec.K)
        f = np.einsum("tgk,gk->gt", h, th[:, kd:], optimize=True)
        f -= Y[None, :]
        out[a : a + chunk] = np.einsum("gt,gt->g", f, f) / X.shape[0]
    return out


def project(spec, W, Psi):
    """Clip psi and rescale each w_k onto the C_theta ball (batched, in place)."""
    c = spec.C_theta
    np.clip(Psi, -c, c, out=Psi)
    norms = np.linalg.norm(W, axis=-1, keepdims=True)
    W *= np.minimum(1.0, c / np.maximum(norms, 1e-300))
    return W, Psi


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser settings. ``step0`` defaults to 0.1 / (K sqrt(d)); the step is
    halved after every quarter of ``steps``."""

    restarts: int = 20
    steps: int = 600
    step0: float = None
    seed: int = 0
    mode: str = "pgd"
    grid_points: int = 41
    polish: bool = True

    def __post_init__(self):
        if self.restarts < 1 or self.steps < 0:
            raise ValueError("need restarts >= 1 and steps >= 0")
        if self.mode not in ("pgd", "grid"):
            raise ValueError("mode must be 'pgd' or 'grid'")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")


def _init_restart(spec, seed, r):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
    w = rng.standard_normal((spec.K, spec.d))
    w *= spec.C_theta * rng.random((spec.K, 1)) / np.linalg.norm(w, axis=1, keepdims=True)
    psi = rng.uniform(-spec.C_theta, spec.C_theta, spec.K)
    return w, psi


def _pgd(spec, data, cfg, callback=None):
    R = cfg.restarts
    inits = [_init_restart(spec, cfg.seed, r) for r in range(R)]
    W = np.stack([w for w, _ in inits])
    Psi = np.stack([p for _, p in inits])
    X, Y, T = data.X, data.Y, data.T
    step0 = cfg.step0 if cfg.step0 is not None else 0.1 / (spec.K * sqrt(spec.d))
    quarter = max(1, cfg.steps // 4)
    alive = np.ones(R, bool)
    Xt = np.ascontiguousarray(X.T)
    # diverging restarts are masked out below; silence their warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(cfg.steps):
            step = step0 * 0.5 ** (it // quarter)
            pre = W @ Xt  # (R, K, T)
            h = _act(spec.activation, pre)
            res = (Psi[:, None, :] @ h)[:, 0, :] - Y  # (R, T)
            loss = np.einsum("rt,rt->r", res, res) / T
            alive &= np.isfinite(loss)
            gpsi = (2.0 / T) * (h @ res[:, :, None])[:, :, 0]
            if spec.activation == "tanh":
                gz = 1.0 - h * h
            else:
                gz = _act_grad(spec.activation, pre)
            gz *= res[:, None, :]
            gz *= Psi[:, :, None]
            gW = (2.0 / T) * (gz @ X)
            upd = alive[:, None]
            W = np.where(upd[:, :, None], W - step * gW, W)
            Psi = np.where(upd, Psi - step * gpsi, Psi)
            project(spec, W, Psi)
            if callback is not None:
                callback(it, W, Psi)
    thetas = np.concatenate([W.reshape(R, -1), Psi], axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        risks = risk_on_grid(spec, thetas, X, Y)
    risks[~alive | ~np.isfinite(risks)] = np.inf
    return thetas, risks


def _polish(spec, data, theta, risk):
    """Levenberg-Marquardt refinement, kept only if feasible and better."""
    if data.T < spec.n_params:
        return theta, risk
    kd = spec.K * spec.d

    def resid(th):
        W = th[:kd].reshape(spec.K, spec.d)
        return _act(spec.activation, data.X @ W.T) @ th[kd:] - data.Y

    try:
        sol = least_squares(resid, theta, method="lm", max_nfev=200 * spec.n_params)
    except (ValueError, np.linalg.LinAlgError):
        return theta, risk
    cand = PerceptronParams.from_vector(spec, sol.x)
    if not np.all(np.isfinite(sol.x)) or not cand.is_feasible(spec, tol=0.0):
        return theta, risk
    new = empirical_risk(spec, cand, data)
    return (sol.x, new) if new < risk else (theta, risk)


def parameter_grid(spec, points):
    """Feasible points of the uniform grid with ``points`` levels per coordinate
    on [-C_theta, C_theta]."""
    levels = np.linspace(-spec.C_theta, spec.C_theta, points)
    mesh = np.stack(np.meshgrid(*[levels] * spec.n_params, indexing="ij"), -1)
    grid = mesh.reshape(-1, spec.n_params)
    kd = spec.K * spec.d
    wn = np.linalg.norm(grid[:, :kd].reshape(-1, spec.K, spec.d), axis=2)
    return grid[np.all(wn <= spec.C_theta * (1 + 1e-12), axis=1)]


def train_erm(spec, data, config=None, callback=None):
    """Empirical risk minimiser over the parameter set.

    Parameters
    ----------
    spec : PerceptronSpec
    data : RegressionData
    config : TrainConfig, optional
        ``mode="pgd"`` runs multi-start projected gradient descent (restarts
        are vectorised, each initialised from its own stream so a restart is
        reproducible from ``(seed, index)``), optionally followed by a
        Levenberg-Marquardt polish of the winner. ``mode="grid"`` returns the
        exact minimiser over :func:`parameter_grid` and needs Kd + K <= 4.
    callback : callable, optional
        Called as ``callback(step, W, Psi)`` after every projected step.

    Returns
    -------
    PerceptronParams
        The restart with the lowest empirical risk; ties go to the lowest
        restart index.
    """
    cfg = config or TrainConfig()
    if cfg.mode == "grid":
        if spec.n_params > 4:
            raise ValueError("grid mode needs Kd + K <= 4")
        grid = parameter_grid(spec, cfg.grid_points)
        risks = risk_on_grid(spec, grid, data.X, data.Y)
        return PerceptronParams.from_vector(spec, grid[int(np.argmin(risks))])
    thetas, risks = _pgd(spec, data, cfg, callback)
    if not np.any(np.isfinite(risks)):
        raise TrainingFailed("all restarts produced non-finite losses")
    best = int(np.argmin(risks))
    theta, risk = thetas[best], risks[best]
    if cfg.polish:
        theta, risk = _polish(spec, data, theta, risk)
    return PerceptronParams.from_vector(spec, theta)


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    stderr: float
    upper_bound: bool = False


def population_risk(spec, params, generator, m=10000, seed=0):
    """Monte Carlo risk on ``m`` fresh stationary draws, with standard error."""
    if m < 100:
        raise ValueError("need m >= 100 draws for a usable standard error")
    X, Y = generator.sample_stationary(m, seed)
    sq = (Y - perceptron_forward(spec, params, X)) ** 2
    return RiskEstimate(float(sq.mean()), float(sq.std(ddof=1) / sqrt(m)))


def excess_risk(spec, params, generator, m=10000, seed=0):
    """R(theta) - R(theta*) = E (f_theta(X) - f_theta*(X))^2 when the noise is
    independent of X, so theta* is the regression function."""
    if m < 100:
        raise ValueError("need m >= 100 draws for a usable standard error")
    X, _ = generator.sample_stationary(m, seed)
    diff = perceptron_forward(spec, params, X) - perceptron_forward(spec, generator.theta_star, X)
    sq = diff * diff
    return RiskEstimate(float(sq.mean()), float(sq.std(ddof=1) / sqrt(m)))


def oracle_risk(spec, generator, T, config=None, m=10000, seed=0):
    """Estimate of inf R: ERM on a 10x longer sample with 10x the restarts,
    scored by :func:`population_risk`. Optimisation error only pushes it up,
    so the estimate is flagged as an upper bound."""
    cfg = config or TrainConfig()
    ss = np.random.SeedSequence(seed)
    data_seed, mc_seed = ss.spawn(2)
    data = generator.sample(10 * T, np.random.default_rng(data_seed))
    big = TrainConfig(
        restarts=10 * cfg.restarts, steps=cfg.steps, step0=cfg.step0,
        seed=cfg.seed, polish=cfg.polish,
    )
    params = train_erm(spec, data, big)
    est = population_risk(spec, params, generator, m, np.random.default_rng(mc_seed))
    return RiskEstimate(est.value, est.stderr, upper_bound=True)


@dataclass(frozen=True)
class BasicInequality:
    passed: bool
    lhs: float
    rhs: float

    @property
    def slack(self):
        return self.rhs - self.lhs


def basic_inequality_check(spec, params_hat, data, generator, theta_grid,
                           m=20000, seed=0, population=None, grid_risk=None):
    """Check |R(theta_hat) - inf R| <= 2 sup |R_T - R| over grid + {theta_hat}.

    R is the Monte Carlo risk on a common set of stationary draws (pass
    ``population=(X, Y)`` to reuse one, and ``grid_risk`` to reuse its values
    on the grid). The comparison is exact whenever theta_hat has the smallest
    empirical risk among the evaluated points.
    """
    grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    if grid.shape[0] == 0 or grid.size == 0:
        raise ValueError("theta grid is empty")
    if population is None:
        population = generator.sample_stationary(m, seed)
    Xp, Yp = population
    if grid_risk is None:
        grid_risk = risk_on_grid(spec, grid, Xp, Yp)
    hat = params_hat.vector[None, :]
    R = np.concatenate([risk_on_grid(spec, hat, Xp, Yp), grid_risk])
    RT = np.concatenate([risk_on_grid(spec, np.vstack([hat, grid]), data.X, data.Y)])
    lhs = abs(R[0] - R.min())
    rhs = 2.0 * float(np.max(np.abs(RT - R)))
    return BasicInequality(bool(lhs <= rhs), float(lhs), rhs)


@dataclass(frozen=True)
class NNConstants:
    C1: float
    C2: float
    d_theta_scale: float
    d_x_scale: float
    c_prime: float


def default_c_prime():
    """2 from the centred part plus C^(1)_2 / sqrt(log 2) from the mean part."""
    return 2.0 + moment_const_c1(2.0) / sqrt(log(2.0))


# ||max_i |X_i| ||_psi2 <= sigma sqrt(3 log(2d) / log 2) <= sqrt(6 / log 2) sigma sqrt(log d), d >= 2
MAX_GAUSS_CONST = sqrt(6.0 / log(2.0))


def nn_condition_constants(spec, sigma_X, sigma_Y, c_prime=None):
    """Constants of the increment and coupling conditions for the perceptron.

    C1 = max{(1 + C') L C sigma_X (K + 1), sqrt(K) C' L C^2 sigma_X, sigma_Y}
    and C2 = K L C^2 C'' sigma_X sqrt(log d), with C = C_theta. At d = 1 the
    log factor vanishes and C2 is floored at its d = 2 value. The parameter
    metric is the Euclidean one (scale 1); the input metric is the sup norm
    scaled by K L C^2.
    """
    if not sigma_X > 0 or not sigma_Y > 0:
        raise ValueError("sigma_X and sigma_Y must be positive")
    cp = default_c_prime() if c_prime is None else float(c_prime)
    if not cp > 0:
        raise ValueError("c_prime must be positive")
    K, L, C = spec.K, spec.L, spec.C_theta
    C1 = max((1.0 + cp) * L * C * sigma_X * (K + 1), sqrt(K) * cp * L * C**2 * sigma_X, sigma_Y)
    C2 = K * L * C**2 * MAX_GAUSS_CONST * sigma_X * sqrt(log(max(spec.d, 2)))
    return NNConstants(C1, C2, 1.0, K * L * C**2, cp)
