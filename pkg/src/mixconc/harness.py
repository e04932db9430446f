"""
Experiment orchestration: configuration, seed derivation, the concentration
dominance and ERM experiments, profiles, and result emission.
"""
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import exp, log

import numpy as np
from scipy.optimize import brentq

from .bounds import (
    BoundInputs,
    effective_sample_size,
    nn_bound,
    theorem_bound,
)
from .chaining import (
    EXACT_GAMMA_MAX_POINTS,
    FiniteMetricSpace,
    entropy_integral_gamma_bound,
    gamma_exact_small,
    gamma_value,
    greedy_admissible_sequence,
)
from .coupling import block_layout
from .erm import (
    PerceptronGenerator,
    PerceptronParams,
    PerceptronSpec,
    TrainConfig,
    basic_inequality_check,
    nn_condition_constants,
    parameter_grid,
    perceptron_forward,
    risk_on_grid,
    train_erm,
)
from .mixing import (
    MarkovChainSpec,
    MixingEnvelope,
    beta_coefficient_exact,
    simulate_ar1,
    simulate_markov_chain,
)
from .subweibull import psi_norm_discrete

KINDS = ("concentration", "erm-oracle", "beta-profile", "gamma-profile")
# fixed ids so seed streams do not depend on dictionary order or hashing
EXPERIMENT_IDS = {k: i for i, k in enumerate(KINDS, start=1)}
CSV_COLUMNS = (
    "experiment", "T", "n", "replication", "seed", "observed", "threshold", "exceeded", "wall_ms",
)


class ConfigError(ValueError):
    pass


def derive_seed(master, experiment, T_index, replication):
    """u64 seed from (master, experiment id, T index, replication index)."""
    ss = np.random.SeedSequence(int(master), spawn_key=(EXPERIMENT_IDS[experiment], T_index, replication))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ResultRecord:
    experiment: str
    T: int
    n: int
    replication: int
    seed: int
    observed: float
    threshold: float
    exceeded: bool
    wall_ms: float
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.exceeded != (self.observed > self.threshold):
            raise ValueError("exceeded flag must equal observed > threshold")


CONCENTRATION_DEFAULTS = {
    "chain": {"P": [[0.7, 0.3], [0.3, 0.7]]},
    "values": None,
    "theta_range": 1.0,
    "theta_points": 101,
    "alpha": 2.0,
    "r": 2.0,
    "s": 2.0,
    "zeta": 10.0,
    "n": None,
    "beta": "exact",
    "target_prob": 0.05,
    "coupling_share": 0.5,
    "form": "compact",
}

ERM_DEFAULTS = {
    "K": 2,
    "d": 2,
    "activation": "tanh",
    "C_theta": 2.0,
    "theta_star": {"w": [[1.0, 0.5], [-0.5, 1.0]], "psi": [1.0, -1.0]},
    "phi": 0.6,
    "x_sd": 1.0,
    "noise_sd": 0.5,
    "zeta": 10.0,
    "mc_draws": 20000,
    "grid_points": 5,
    "train": {},
}

BETA_DEFAULTS = {"P": [[0.7, 0.3], [0.3, 0.7]], "pi": None, "lags": list(range(0, 21))}

GAMMA_DEFAULTS = {"coordinates": None, "grid": {"low": -1.0, "high": 1.0, "points": 101},
                  "alphas": [1.0, 2.0], "metric": "euclidean"}

_DEFAULTS = {
    "concentration": CONCENTRATION_DEFAULTS,
    "erm-oracle": ERM_DEFAULTS,
    "beta-profile": BETA_DEFAULTS,
    "gamma-profile": GAMMA_DEFAULTS,
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict
    replications: int = 1
    T_grid: tuple = (1000,)
    seed: int = 0
    out: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: must be one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError("replications: must be an integer >= 1")
        T = tuple(self.T_grid)
        if len(T) == 0:
            raise ConfigError("T_grid: must be nonempty")
        if any(not isinstance(t, int) or t < 1 for t in T):
            raise ConfigError("T_grid: entries must be positive integers")
        if list(T) != sorted(T):
            raise ConfigError("T_grid: must be sorted ascending")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be an integer in [0, 2^64)")
        object.__setattr__(self, "T_grid", T)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config: top level must be a JSON object")
        doc = dict(doc)
        kind = doc.pop("kind", None)
        if kind not in KINDS:
            raise ConfigError(f"kind: must be one of {KINDS}, got {kind!r}")
        top = {k: doc.pop(k) for k in ("replications", "T_grid", "seed", "out") if k in doc}
        defaults = _DEFAULTS[kind]
        unknown = sorted(set(doc) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown field(s) for {kind}: {', '.join(unknown)}")
        params = {**defaults, **doc}
        return cls(kind=kind, params=params, **top)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"line {err.lineno}, column {err.colno}: {err.msg}") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def with_overrides(self, **kw):
        doc = {
            "kind": self.kind, "replications": self.replications,
            "T_grid": list(self.T_grid), "seed": self.seed, "out": self.out, **self.params,
        }
        doc.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(doc)


def _run(tasks, worker, context, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [worker(context, t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, [context] * len(tasks), tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def _sorted(records):
    return sorted(records, key=lambda r: (r.T, r.replication))


# ---------------------------------------------------------------- concentration


def _chain_from(doc, where):
    try:
        return MarkovChainSpec.from_json(doc)
    except (ValueError, TypeError, KeyError) as err:
        raise ConfigError(f"{where}: {err}") from None


def _beta_for(params, chain):
    beta = params["beta"]
    if beta == "exact":
        return chain
    if beta in (None, "zero") or (isinstance(beta, dict) and beta.get("kind") == "zero"):
        return None
    if isinstance(beta, dict):
        try:
            return MixingEnvelope(**beta)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"beta: {err}") from None
    raise ConfigError("beta: must be 'exact', 'zero' or an envelope object")


@dataclass(frozen=True)
class ConcentrationSetup:
    """Everything fixed across replications of the concentration experiment."""

    chain: MarkovChainSpec
    values: np.ndarray
    grid: np.ndarray
    centred: np.ndarray  # g(z, theta) - g(0, theta), shape (m, grid)
    alpha: float
    C_Theta: float
    C_Z: float
    gamma2: float
    gamma_alpha: float


def loss_family(values, grid):
    """g(z, theta) = (v(z) - theta)^2 for every state and grid point."""
    return (np.asarray(values, float)[:, None] - np.asarray(grid, float)[None, :]) ** 2


def concentration_setup(params):
    """Grid, exact increment constant, coupling constant and chaining
    functionals for the squared-loss family on a finite chain.

    The parameter distance is |theta_1 - theta_2|. Increments are
    -2 (theta_1 - theta_2)(v - E v) + const, so the increment constant is
    2 ||v - E v||_psi_alpha, raised if needed to the smallest single-theta
    norm. For the coupling condition the state space carries the discrete
    metric scaled by D = max_theta (max_z g - min_z g), so C_Z = D.
    """
    chain = _chain_from(params["chain"], "chain")
    m = chain.m
    values = params["values"]
    values = np.linspace(-1.0, 1.0, m) if values is None else np.asarray(values, float)
    if values.shape != (m,):
        raise ConfigError(f"values: need one value per state ({m})")
    alpha = float(params["alpha"])
    if not alpha > 0:
        raise ConfigError("alpha: must be positive")
    rng_ = float(params["theta_range"])
    pts = int(params["theta_points"])
    if not rng_ > 0 or not 2 <= pts <= 10_000:
        raise ConfigError("theta grid: need theta_range > 0 and 2 <= theta_points <= 10000")
    grid = np.linspace(-rng_, rng_, pts)
    G = loss_family(values, grid)
    pi = chain.pi
    mean_v = float(pi @ values)
    inc = 2.0 * psi_norm_discrete(values - mean_v, pi, alpha)
    single = min(psi_norm_discrete(G[:, j] - pi @ G[:, j], pi, alpha) for j in range(pts))
    C_Theta = max(inc, single)
    C_Z = float(np.max(G.max(axis=0) - G.min(axis=0)))
    space = FiniteMetricSpace.from_coordinates(grid[:, None], metric="cityblock")
    seq = greedy_admissible_sequence(space)
    g2 = gamma_value(space, seq, 2.0)
    ga = g2 if alpha == 2.0 else gamma_value(space, seq, alpha)
    return ConcentrationSetup(chain, values, grid, G - G[:1, :], alpha, C_Theta, C_Z, g2, ga)


def _effective_n(params, T):
    n = params["n"]
    if n == "T":
        return T
    if n is not None:
        if not isinstance(n, int) or not 1 <= n <= T:
            raise ConfigError("n: must be 'T' or an integer in 1..T")
        return n
    try:
        return effective_sample_size(T, float(params["zeta"]))[1]
    except ValueError as err:
        raise ConfigError(f"zeta: {err}") from None


def calibrate_bound(setup, params, T, n):
    """Bound inputs whose failure probability equals the target level.

    A ``coupling_share`` of the target goes to the coupling term (this fixes
    eps2); eps1 is then solved numerically for the remainder and never set
    below 2. With a vanishing mixing coefficient eps2 is 0.
    """
    target = float(params["target_prob"])
    share = float(params["coupling_share"])
    if not 0 < target < 1 or not 0 < share < 1:
        raise ConfigError("target_prob and coupling_share must lie in (0, 1)")
    base = BoundInputs(
        alpha=setup.alpha, C_Theta=setup.C_Theta, C_Z=setup.C_Z, T=T, n=n,
        gamma2=setup.gamma2, gamma_alpha=setup.gamma_alpha,
        r=float(params["r"]), s=float(params["s"]),
        beta=_beta_for(params, setup.chain), eps1=2.0, eps2=1.0,
    )
    block_layout(T, n)
    ratio = T / n
    factor = base.coupling_factor()
    eps2 = 0.0 if factor == 0 else 8.0 * ratio * factor / (share * target)
    budget = target if factor == 0 else (1.0 - share) * target
    lead = 5.0 if params["form"] == "compact" else exp(1.0) + 2.0

    def excess(e1):
        return lead * ratio * exp(-e1) - budget

    hi = 2.0 + log(lead * ratio / budget) + 1.0
    eps1 = 2.0 if excess(2.0) <= 0 else brentq(excess, 2.0, hi, xtol=1e-14, rtol=1e-15)
    return BoundInputs(**{**base.__dict__, "eps1": eps1, "eps2": eps2})


def sup_deviation(setup, traj):
    """sup over the grid of |(1/T) sum_t g(Z_t, theta) - E g(Z_1, theta)|."""
    counts = np.bincount(traj, minlength=setup.chain.m) / traj.shape[0]
    return float(np.max(np.abs((counts - setup.chain.pi) @ setup.centred)))


def _concentration_worker(ctx, task):
    setup, thresholds, T_grid, master = ctx
    ti, rep = task
    T = T_grid[ti]
    n, thr = thresholds[ti]
    seed = derive_seed(master, "concentration", ti, rep)
    t0 = time.perf_counter()
    traj = simulate_markov_chain(setup.chain, T, seed).values
    obs = sup_deviation(setup, traj)
    wall = 1e3 * (time.perf_counter() - t0)
    return ResultRecord("concentration", T, n, rep, seed, obs, thr, obs > thr, wall)


def run_concentration_experiment(config, threads=1):
    """Exceedance of the calibrated bound by the observed sup deviation, per
    replication and sample size."""
    if config.kind != "concentration":
        raise ConfigError("kind: expected 'concentration'")
    setup = concentration_setup(config.params)
    thresholds = []
    for T in config.T_grid:
        n = _effective_n(config.params, T)
        inp = calibrate_bound(setup, config.params, T, n)
        tb = theorem_bound(inp)
        res = tb.compact if config.params["form"] == "compact" else tb.decomposed
        thresholds.append((n, res.threshold))
    ctx = (setup, thresholds, config.T_grid, config.seed)
    tasks = [(ti, r) for ti in range(len(config.T_grid)) for r in range(config.replications)]
    return _sorted(_run(tasks, _concentration_worker, ctx, threads))


# ------------------------------------------------------------------------- erm


@dataclass(frozen=True)
class ERMSetup:
    spec: PerceptronSpec
    generator: PerceptronGenerator
    train: TrainConfig
    zeta: float
    mc_draws: int
    grid: np.ndarray
    population: tuple
    grid_risk: np.ndarray
    bound_constant: float


def erm_setup(params, seed):
    try:
        spec = PerceptronSpec(int(params["K"]), int(params["d"]), params["activation"], float(params["C_theta"]))
        star = PerceptronParams.from_json(params["theta_star"])
        gen = PerceptronGenerator(spec, star, float(params["phi"]), float(params["x_sd"]), float(params["noise_sd"]))
        train = TrainConfig(**params["train"])
    except (ValueError, TypeError, KeyError) as err:
        raise ConfigError(f"erm config: {err}") from None
    mc = int(params["mc_draws"])
    if mc < 100:
        raise ConfigError("mc_draws: must be >= 100")
    grid = parameter_grid(spec, int(params["grid_points"]))
    if grid.shape[0] > 10_000:
        raise ConfigError("grid_points: evaluation grid exceeds 10^4 points")
    pop_seed = derive_seed(seed, "erm-oracle", 2**31 - 1, 0)
    population = gen.sample_stationary(mc, pop_seed)
    consts = nn_condition_constants(spec, gen.sigma_X, gen.sigma_Y)
    return ERMSetup(
        spec, gen, train, float(params["zeta"]), mc, grid, population,
        risk_on_grid(spec, grid, *population), consts.C1 + consts.C2,
    )


def _erm_worker(ctx, task):
    setup, T_grid, master = ctx
    ti, rep = task
    T = T_grid[ti]
    seed = derive_seed(master, "erm-oracle", ti, rep)
    t0 = time.perf_counter()
    data = setup.generator.sample(T, seed)
    cfg = TrainConfig(**{**setup.train.__dict__, "seed": seed})
    params = train_erm(setup.spec, data, cfg)
    # excess risk E (f_hat - f_star)^2 on the shared stationary sample
    Xp = setup.population[0]
    diff = perceptron_forward(setup.spec, params, Xp) - perceptron_forward(setup.spec, setup.generator.theta_star, Xp)
    observed = float(np.mean(diff * diff))
    basic = basic_inequality_check(
        setup.spec, params, data, setup.generator, setup.grid,
        population=setup.population, grid_risk=setup.grid_risk,
    )
    if T >= 8:
        nb = nn_bound(T, setup.zeta, setup.spec.d, setup.bound_constant)
        n, thr = nb.n, nb.bound
    else:
        n, thr = effective_sample_size(T, setup.zeta)[1], float("inf")
    wall = 1e3 * (time.perf_counter() - t0)
    extra = {
        "basic_passed": basic.passed, "basic_slack": basic.slack, "params": params.to_json(),
    }
    return ResultRecord("erm-oracle", T, n, rep, seed, observed, thr, observed > thr, wall, extra)


def run_erm_experiment(config, threads=1):
    """Train the perceptron ERM per replication; the observed statistic is
    its excess risk and the threshold the perceptron oracle-inequality bound."""
    if config.kind != "erm-oracle":
        raise ConfigError("kind: expected 'erm-oracle'")
    setup = erm_setup(config.params, config.seed)
    ctx = (setup, config.T_grid, config.seed)
    tasks = [(ti, r) for ti in range(len(config.T_grid)) for r in range(config.replications)]
    return _sorted(_run(tasks, _erm_worker, ctx, threads))


def erm_summary(records):
    """Median excess risk per T and the log-log slope of the medians against n."""
    Ts = sorted({r.T for r in records})
    med = [float(np.median([r.observed for r in records if r.T == T])) for T in Ts]
    ns = [next(r.n for r in records if r.T == T) for T in Ts]
    slope = float(np.polyfit(np.log(ns), np.log(med), 1)[0]) if len(Ts) > 1 else float("nan")
    inversions = int(sum(b > a for a, b in zip(med, med[1:])))
    return {"T": Ts, "n": ns, "median": med, "slope": slope, "inversions": inversions}


# -------------------------------------------------------------------- profiles


def beta_profile(params):
    """Rows (l, beta(l)) for a chain document {"P", "pi"?} and a lag list."""
    chain_doc = {k: params[k] for k in ("P", "pi") if params.get(k) is not None}
    chain = _chain_from(chain_doc, "chain")
    try:
        lags = [int(l) for l in params["lags"]]
    except (TypeError, ValueError):
        raise ConfigError("lags: must be a list of integers") from None
    if any(l < 0 for l in lags):
        raise ConfigError("lags: must be nonnegative")
    return [{"l": l, "beta": beta_coefficient_exact(chain, l)} for l in lags]


def gamma_profile(params):
    """Greedy, entropy-integral and (on small spaces) exact gamma values."""
    coords = params["coordinates"]
    if coords is None:
        g = params["grid"]
        coords = np.linspace(float(g["low"]), float(g["high"]), int(g["points"]))[:, None]
    try:
        space = FiniteMetricSpace.from_coordinates(np.asarray(coords, float), params["metric"])
    except ValueError as err:
        raise ConfigError(f"coordinates: {err}") from None
    seq = greedy_admissible_sequence(space)
    rows = []
    for a in params["alphas"]:
        a = float(a)
        exact = gamma_exact_small(space, a) if space.size <= EXACT_GAMMA_MAX_POINTS else float("nan")
        rows.append({
            "alpha": a, "points": space.size, "gamma_greedy": gamma_value(space, seq, a),
            "entropy_bound": entropy_integral_gamma_bound(space, a), "gamma_exact": exact,
        })
    return rows


def simulate(params, T, seed):
    """Trajectory rows (t, value...) for a chain or an AR(1) document."""
    if "P" in params:
        values = simulate_markov_chain(_chain_from(params, "chain"), T, seed).values[:, None]
    else:
        try:
            values = simulate_ar1(float(params["phi"]), float(params.get("sigma", 1.0)),
                                  int(params.get("d", 1)), T, seed).values
        except (KeyError, ValueError) as err:
            raise ConfigError(f"simulate: {err}") from None
    return [{"t": t + 1, **{f"x{j}": v for j, v in enumerate(row)}} for t, row in enumerate(values)]


# --------------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v != v:
            return "NaN"
        if v in (float("inf"), float("-inf")):
            return "Infinity" if v > 0 else "-Infinity"
        return format(v, ".17g")
    return str(v)


def _rows(records):
    for r in records:
        if isinstance(r, ResultRecord):
            yield {c: getattr(r, c) for c in CSV_COLUMNS}
        else:
            yield r


def render(records, fmt, columns=None):
    rows = list(_rows(records))
    if columns is None:
        columns = CSV_COLUMNS if not rows or isinstance(records[0], ResultRecord) else tuple(rows[0])
    buf = io.StringIO()
    if fmt == "csv":
        buf.write(",".join(columns) + "\n")
        for row in rows:
            buf.write(",".join(_fmt(row[c]) for c in columns) + "\n")
    elif fmt == "json":
        items = []
        for row in rows:
            fields = []
            for c in columns:
                v = row[c]
                s = json.dumps(v) if isinstance(v, str) else _fmt(v)
                fields.append(f"{json.dumps(c)}: {s}")
            items.append("{" + ", ".join(fields) + "}")
        buf.write("[" + ",\n ".join(items) + "]\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue()


def emit_results(records, fmt="csv", path=None):
    """Write records as CSV (fixed columns) or a JSON array with the same
    keys; floats carry 17 significant digits. ``path=None`` writes to stdout."""
    text = render(records, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as err:
        raise OSError(f"cannot write results to {path}: {err.strerror or err}") from err


def read_results_json(path):
    """Parse an emitted JSON file back into :class:`ResultRecord` objects."""
    with open(path) as fh:
        docs = json.load(fh)
    return [ResultRecord(**{**d, "exceeded": bool(d["exceeded"])}) for d in docs]
