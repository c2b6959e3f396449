"""Experiment scenarios, runners, and verification suites behind the CLI.

A scenario config (JSON) names a problem generator, the estimators to run,
and a master seed; runners emit one ResultRow per (estimator, sigma, trial)
with the rows' data columns fully determined by config + seed. Wall-clock
seconds are diagnostic and excluded from reproducibility guarantees.

Generators:
  double_integration - lower-triangular cumulative-sum operator on the unit
    box, observed through m randomly selected rows; the l_2 (or l_inf)
    recovery benchmark across a sigma grid.
  motivating - direct observation of an l_1-ball signal; compares the
    uniform-fit estimate against the best scalar linear estimate. Rows of
    this scenario carry squared l_2 errors, and the bound column holds the
    analytic expected-squared-risk references rather than quantile
    certificates.
  diagonal - power-law diagonal sensing on a scaled l_rho ball with the
    closed-form per-coordinate design; the summary reports the log-log
    slope of the bound against the noise scale.
  inline - a fully specified problem (problem_model JSON schema).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import design_direct as dd
from . import design_sdp as ds
from . import estimator as est
from . import problem_model as pm
from .compat_cones import (
    absolute_norm_cone,
    cone_calculus,
    ellitope_cone,
    spectratope_cone,
)
from .conic.norms import dual_exponent, vec_norm
from .observation import (
    Discrete,
    Poisson,
    RngStream,
    SubGaussian,
    TailNormContext,
    pi_norm,
    sample_noise,
    z_set,
)

CSV_COLUMNS = ("scenario", "estimator", "sigma", "trial", "error", "bound", "seconds")
KNOWN_ESTIMATORS = ("linear", "poly_design1", "poly_design2", "identity_contrast")
KNOWN_SCENARIOS = ("double_integration", "motivating", "diagonal", "inline")
VERIFY_SUITES = ("tail-bounds", "cone-fuzz", "lemma-rademacher", "closed-forms")


class ConfigError(ValueError):
    """Invalid scenario configuration."""


# ---------------------------------------------------------------------------
# Config and result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    estimator: str
    sigma: float
    trial: int
    error: float
    bound: float
    seconds: float

    def __post_init__(self):
        if not self.error >= 0.0:
            raise ValueError("error must be nonnegative")

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    params: dict
    estimators: tuple[str, ...]
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    jobs: int = 1


_GEN_DEFAULTS: dict[str, dict] = {
    "double_integration": {
        "n": 64,
        "m": 32,
        "delta": None,  # defaults to 4 / n
        "sigma_list": [0.1, 0.01, 0.001, 0.0001],
        "eps": 0.1,
        "trials": 20,
        "r": 2.0,
    },
    "motivating": {"n": 100, "sigma": 0.1, "trials": 10000},
    "diagonal": {
        "n": 256,
        "alpha": 0.0,
        "beta": 0.25,
        "delta_exp": 0.0,
        "rho": 2.0,
        "r": 2.0,
        "sigma": [0.1, 0.06, 0.035, 0.02],
        "eps": 0.1,
        "trials": 20,
    },
    "inline": {"problem": None, "trials": 20},
}

_DEFAULT_ESTIMATORS: dict[str, tuple[str, ...]] = {
    "double_integration": ("linear", "poly_design1", "poly_design2"),
    "motivating": ("linear", "identity_contrast"),
    "diagonal": ("poly_design1",),
    "inline": ("poly_design2",),
}


def load_config(data: dict) -> ScenarioConfig:
    """Validate a JSON config dict and fill generator defaults."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known_keys = {"scenario", "params", "estimators", "seed", "out", "format", "jobs"}
    extra = set(data) - known_keys
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    scenario = data.get("scenario")
    if scenario not in KNOWN_SCENARIOS:
        raise ConfigError(f"scenario must be one of {KNOWN_SCENARIOS}, got {scenario!r}")
    params = dict(_GEN_DEFAULTS[scenario])
    given = data.get("params", {})
    if not isinstance(given, dict):
        raise ConfigError("params must be an object")
    unknown = set(given) - set(params)
    if unknown:
        raise ConfigError(f"unknown {scenario} params: {sorted(unknown)}")
    params.update(given)
    estimators = tuple(data.get("estimators", _DEFAULT_ESTIMATORS[scenario]))
    bad = [e for e in estimators if e not in KNOWN_ESTIMATORS]
    if bad or not estimators:
        raise ConfigError(f"estimators must be a nonempty subset of {KNOWN_ESTIMATORS}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    fmt = data.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("format must be 'csv' or 'json'")
    jobs = data.get("jobs", 1)
    if not isinstance(jobs, int) or isinstance(jobs, bool) or jobs < 1:
        raise ConfigError("jobs must be a positive integer")
    eps = params.get("eps")
    if eps is not None and not 0.0 < eps < 1.0:
        raise ConfigError("eps must lie in (0, 1)")
    trials = params.get("trials")
    if not isinstance(trials, int) or isinstance(trials, bool) or trials < 1:
        raise ConfigError("trials must be a positive integer")
    return ScenarioConfig(
        scenario, params, estimators, seed, data.get("out"), fmt, jobs
    )


def load_config_file(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return load_config(data)


def apply_overrides(
    config: ScenarioConfig,
    seed: int | None = None,
    trials: int | None = None,
    out: str | None = None,
    fmt: str | None = None,
    jobs: int | None = None,
) -> ScenarioConfig:
    params = dict(config.params)
    if trials is not None:
        if trials < 1:
            raise ConfigError("trials must be a positive integer")
        params["trials"] = trials
    return replace(
        config,
        params=params,
        seed=config.seed if seed is None else seed,
        out=out if out is not None else config.out,
        format=fmt if fmt is not None else config.format,
        jobs=jobs if jobs is not None else config.jobs,
    )


def render_csv(rows: list[ResultRow]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(
            f"{row.scenario},{row.estimator},{row.sigma!r},{row.trial},"
            f"{row.error!r},{row.bound!r},{row.seconds!r}"
        )
    return "\n".join(lines) + "\n"


def render_rows(rows: list[ResultRow], fmt: str) -> str:
    if fmt == "csv":
        return render_csv(rows)
    return json.dumps([r.as_dict() for r in rows], indent=1) + "\n"


# ---------------------------------------------------------------------------
# Estimator construction
# ---------------------------------------------------------------------------


def _signal_cone(X):
    """A compatible cone covering the symmetrized signal set."""
    if isinstance(X, pm.Box):
        half = 0.5 * (X.upper - X.lower)
        if (half <= 0).any():
            raise ConfigError("signal box must have positive widths")
        n = X.dim
        groups = tuple(
            tuple(
                np.array([[1.0 / half[i] if j == i else 0.0]]) for j in range(n)
            )
            for i in range(n)
        )
        spec = pm.Spectratope(np.eye(n), groups, pm.MonotoneSet("box", upper=np.ones(n)))
        return spectratope_cone(spec)
    if isinstance(X, pm.ScaledBall):
        ball = absolute_norm_cone(X.p, X.dim)
        if np.allclose(X.gamma, 1.0):
            return ball
        return cone_calculus("linear_image", [ball], maps=[np.diag(1.0 / X.gamma)])
    if isinstance(X, pm.Ellitope):
        return ellitope_cone(X)
    if isinstance(X, pm.Spectratope):
        return spectratope_cone(X)
    if isinstance(X, pm.LinearImage):
        return cone_calculus("linear_image", [_signal_cone(X.inner)], maps=[X.M])
    raise ConfigError(f"no automatic compatible cone for {type(X).__name__}")


def _conjugate_ball_cone(norm, nu: int):
    """A compatible cone covering the unit ball of the conjugate norm."""
    if isinstance(norm, pm.LpNorm):
        return absolute_norm_cone(dual_exponent(norm.r), nu)
    if isinstance(norm, pm.SpectratopeDual):
        return spectratope_cone(norm.ball)
    raise ConfigError(f"no automatic compatible cone for norm {norm!r}")


def identity_contrast(problem) -> est.ContrastMatrix:
    """Tail-normalized standard basis columns (one per observation entry)."""
    m = problem.A.shape[0]
    delta = problem.eps / m
    ctx = TailNormContext(problem.scheme, delta, A=problem.A, X=problem.X)
    H = np.eye(m)
    pis = np.empty(m)
    for j in range(m):
        p = pi_norm(ctx, H[:, j])
        if p > 1e-300:
            H[:, j] /= p
            p = 1.0
        pis[j] = p
    return est.ContrastMatrix(H, pis, delta, "identity")


def _default_envelope(problem) -> np.ndarray:
    """Per-coordinate box envelope weights for the image of X_s under B."""
    Xs = pm.symmetrize(problem.X)
    sup = np.array(
        [pm.support_function(Xs, row) for row in problem.B], dtype=float
    )
    return np.where(sup > 1e-12, 1.0 / np.maximum(sup, 1e-300), 1.0)


def _polyhedral_certificate(problem, H) -> float:
    if isinstance(problem.norm, pm.LpNorm) and np.isinf(problem.norm.r):
        return est.risk_linf_exact(problem, H).bound
    if isinstance(problem.norm, pm.LpNorm):
        return est.risk_norm_bound(problem, H, _default_envelope(problem), np.inf).bound
    raise ConfigError("no certificate route for this recovery norm")


def _linear_reliable_bound(problem, H: np.ndarray) -> float:
    """(1 - eps)-reliable error bound for the linear estimate H' omega.

    Coordinate j of the error splits into the bias (B - H'A)_j x, bounded
    over X by its support values, and the Gaussian term (H' xi)_j, which
    stays below sigma ||h_j||_2 sqrt(2 ln(2 nu / eps)) outside probability
    eps / nu. A union bound over coordinates gives the vector bound, and
    its r-norm bounds the error norm with probability at least 1 - eps.
    """
    if not isinstance(problem.norm, pm.LpNorm):
        raise ConfigError("linear certificates are emitted for l_r norms only")
    R = problem.B - H.T @ problem.A
    sups = np.array(
        [
            max(
                pm.support_function(problem.X, row),
                pm.support_function(problem.X, -row),
            )
            for row in R
        ]
    )
    nu = problem.B.shape[0]
    kappa = problem.scheme.sigma * np.sqrt(2.0 * np.log(2.0 * nu / problem.eps))
    vec = sups + kappa * np.linalg.norm(H, axis=0)
    return float(vec_norm(vec, problem.norm.r))


def build_estimator(name: str, problem, rng) -> tuple[tuple, float, float]:
    """Design one estimator; returns (predictor spec, bound, design seconds)."""
    t0 = time.perf_counter()
    if name == "linear":
        H_lin, _ = est.linear_design_baseline(problem)
        spec = ("linear", H_lin)
        bound = _linear_reliable_bound(problem, H_lin)
    elif name == "identity_contrast":
        contrast = identity_contrast(problem)
        spec = ("polyhedral", contrast.H)
        bound = _polyhedral_certificate(problem, contrast)
    elif name == "poly_design1":
        res = dd.build_contrast_direct(problem)
        spec = ("polyhedral", res.H.H)
        bound = res.psi
    elif name == "poly_design2":
        m = problem.A.shape[0]
        hc = ds.build_h_cone(
            z_set(problem.scheme, problem.eps, m, X=problem.X, A=problem.A), m
        )
        res = ds.solve_design_sdp(
            problem,
            _signal_cone(problem.X),
            _conjugate_ball_cone(problem.norm, problem.B.shape[0]),
            hc,
            rng=rng,
        )
        spec = ("polyhedral", res.H.H)
        bound = res.opt
    else:
        raise ConfigError(f"unknown estimator {name!r}")
    return spec, float(bound), time.perf_counter() - t0


def _predict(spec: tuple, problem, omega: np.ndarray) -> np.ndarray:
    kind, H = spec
    if kind == "linear":
        return H.T @ omega
    return est.polyhedral_estimate(problem, H, omega)[1]


# ---------------------------------------------------------------------------
# Trial execution (shared by runners; map order fixes the output order)
# ---------------------------------------------------------------------------


def _trial_key(sigma_index: int, trial: int) -> int:
    # Distinct per (sigma, trial); shared across estimators so every
    # estimator sees the same signals and noise.
    return sigma_index * 1_000_003 + trial


def _run_trial(task: tuple) -> ResultRow:
    scenario, name, spec, problem, sigma, si, trial, seed, bound = task
    gen = RngStream(seed).trial(_trial_key(si, trial))
    x = est._sample_signal(problem.X, gen)
    xi = sample_noise(problem.scheme, x, problem.A, gen)
    omega = problem.A @ x + xi
    t0 = time.perf_counter()
    w = _predict(spec, problem, omega)
    dt = time.perf_counter() - t0
    error = pm.norm_value(problem.norm, problem.B @ x - w)
    return ResultRow(scenario, name, sigma, trial, float(error), bound, dt)


def _map_trials(tasks: list[tuple], jobs: int) -> list[ResultRow]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_trial(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunk = max(1, len(tasks) // (4 * jobs))
        return list(pool.map(_run_trial, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# Scenario runners
# ---------------------------------------------------------------------------


def double_integration_operator(n: int, delta: float) -> np.ndarray:
    """Lower-triangular B with B_ij = delta^2 (i - j + 1) for j <= i."""
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return np.where(j <= i, delta**2 * (i - j + 1.0), 0.0)


def _double_integration_problem(p: dict, sigma: float, seed: int):
    n, m = p["n"], p["m"]
    if not (isinstance(n, int) and isinstance(m, int) and 1 <= m <= n):
        raise ConfigError("need integers 1 <= m <= n")
    delta = 4.0 / n if p["delta"] is None else float(p["delta"])
    if delta <= 0:
        raise ConfigError("delta must be positive")
    B = double_integration_operator(n, delta)
    rows = np.sort(np.random.default_rng(seed).choice(n, size=m, replace=False))
    r = float(p["r"])
    if r < 1.0:
        raise ConfigError("recovery exponent r must be >= 1")
    return pm.EstimationProblem(
        A=B[rows],
        B=B,
        X=pm.Box(-np.ones(n), np.ones(n)),
        norm=pm.LpNorm(r),
        scheme=SubGaussian(float(sigma)),
        eps=float(p["eps"]),
    )


def run_double_integration(config: ScenarioConfig) -> tuple[list[ResultRow], dict]:
    p = config.params
    sigmas = [float(s) for s in np.atleast_1d(p["sigma_list"])]
    if not sigmas or min(sigmas) < 0:
        raise ConfigError("sigma_list must be nonempty and nonnegative")
    trials = p["trials"]
    tasks = []
    bounds: dict[str, list[float]] = {name: [] for name in config.estimators}
    design_seconds: dict[str, float] = {name: 0.0 for name in config.estimators}
    for si, sigma in enumerate(sigmas):
        problem = _double_integration_problem(p, sigma, config.seed)
        for name in config.estimators:
            spec, bound, dt = build_estimator(
                name, problem, np.random.default_rng(config.seed)
            )
            bounds[name].append(bound)
            design_seconds[name] += dt
            for trial in range(trials):
                tasks.append(
                    (
                        "double_integration",
                        name,
                        spec,
                        problem,
                        sigma,
                        si,
                        trial,
                        config.seed,
                        bound,
                    )
                )
    rows = _map_trials(tasks, config.jobs)
    summary = {
        "sigmas": sigmas,
        "bounds": bounds,
        "design_seconds": design_seconds,
    }
    return rows, summary


def l1_uniform_fit(omega: np.ndarray) -> np.ndarray:
    """A minimizer of ||y - omega||_inf over the unit l_1 ball.

    The optimal level t* is the smallest t with sum(|omega_i| - t)_+ <= 1;
    soft-thresholding at t* is feasible and attains it. Exact water-filling
    via prefix sums of the sorted magnitudes.
    """
    omega = np.asarray(omega, dtype=float)
    a = np.abs(omega)
    if a.sum() <= 1.0:
        return omega.copy()
    s = np.sort(a)[::-1]
    cum = np.cumsum(s)
    k = np.arange(1, a.size + 1)
    t = (cum - 1.0) / k
    nxt = np.append(s[1:], 0.0)
    kstar = int(np.argmax(t >= nxt))
    return np.sign(omega) * np.maximum(a - t[kstar], 0.0)


def run_motivating(config: ScenarioConfig) -> tuple[list[ResultRow], dict]:
    p = config.params
    n, sigma, trials = p["n"], float(p["sigma"]), p["trials"]
    if not (isinstance(n, int) and n >= 1):
        raise ConfigError("n must be a positive integer")
    if not 0.0 < sigma <= 2.0 * n / np.sqrt(np.e):
        raise ConfigError("need 0 < sigma <= 2 n / sqrt(e)")
    allowed = {"linear", "identity_contrast"}
    bad = [e for e in config.estimators if e not in allowed]
    if bad:
        raise ConfigError(f"motivating scenario supports only {sorted(allowed)}")
    h_star = 1.0 / (1.0 + n * sigma**2)
    linear_risk = n * sigma**2 / (1.0 + n * sigma**2)
    poly_bound = 8.0 * sigma * np.sqrt(np.log(2.0 * n / sigma))
    X = pm.ScaledBall(np.ones(n), 1.0)
    rows = []
    sums = {name: 0.0 for name in config.estimators}
    for trial in range(trials):
        gen = RngStream(config.seed).trial(trial)
        x = est._sample_signal(X, gen)
        omega = x + sigma * gen.standard_normal(n)
        for name in config.estimators:
            t0 = time.perf_counter()
            if name == "linear":
                x_hat = h_star * omega
                bound = linear_risk
            else:
                x_hat = l1_uniform_fit(omega)
                bound = poly_bound
            dt = time.perf_counter() - t0
            err2 = float(np.sum((x_hat - x) ** 2))
            sums[name] += err2
            rows.append(
                ResultRow("motivating", name, sigma, trial, err2, bound, dt)
            )
    summary = {
        "h_star": h_star,
        "linear_risk": linear_risk,
        "poly_mse_bound": poly_bound,
        "mean_squared_error": {k: v / trials for k, v in sums.items()},
    }
    return rows, summary


def run_diagonal(config: ScenarioConfig) -> tuple[list[ResultRow], dict]:
    p = config.params
    n = p["n"]
    alpha, beta, dexp = float(p["alpha"]), float(p["beta"]), float(p["delta_exp"])
    rho, r, eps, trials = float(p["rho"]), float(p["r"]), float(p["eps"]), p["trials"]
    if not (isinstance(n, int) and n >= 1):
        raise ConfigError("n must be a positive integer")
    if not (beta >= alpha >= 0.0 and dexp >= 0.0):
        raise ConfigError("need beta >= alpha >= 0 and delta_exp >= 0")
    if (beta - alpha) * r >= 1.0:
        raise ConfigError("need (beta - alpha) r < 1")
    if not 1.0 <= rho <= r or np.isinf(r):
        raise ConfigError("need 1 <= rho <= r < inf")
    if tuple(config.estimators) != ("poly_design1",):
        raise ConfigError("the diagonal scenario runs poly_design1 only")
    sig = p["sigma"]
    sigmas = (
        [float(s) for s in sig]
        if isinstance(sig, (list, tuple))
        else [float(sig) * 3.0 ** (-k / 2.0) for k in range(4)]
    )
    if min(sigmas) <= 0:
        raise ConfigError("sigma must be positive")
    if np.sqrt(np.log(2.0 * n / eps)) * max(sigmas) > 1.0:
        raise ConfigError("need sqrt(ln(2 n / eps)) sigma <= 1")
    ell = np.arange(1, n + 1, dtype=float)
    a, b, d = ell**-alpha, ell**-beta, ell**dexp
    rows, entries = [], []
    tasks = []
    for si, sigma in enumerate(sigmas):
        frak, bound, contrast = dd.diagonal_design(a, d, b, sigma, eps, rho, r)
        problem = pm.EstimationProblem(
            A=np.diag(a),
            B=np.diag(b),
            X=pm.ScaledBall(d, rho),
            norm=pm.LpNorm(r),
            scheme=SubGaussian(sigma),
            eps=eps,
        )
        theta = sigma * np.sqrt(2.0 * np.log(2.0 * n / eps))
        entries.append(
            {"sigma": sigma, "theta": theta, "frak_n": frak, "bound": bound}
        )
        for trial in range(trials):
            tasks.append(
                (
                    "diagonal",
                    "poly_design1",
                    ("polyhedral", contrast.H),
                    problem,
                    sigma,
                    si,
                    trial,
                    config.seed,
                    bound,
                )
            )
    rows = _map_trials(tasks, config.jobs)
    for si, entry in enumerate(entries):
        errs = sorted(
            row.error for row in rows[si * trials : (si + 1) * trials]
        )
        k = min(trials, int(np.floor((1.0 - eps) * trials + 1e-9)) + 1)
        entry["quantile"] = errs[k - 1]
    thetas = np.array([e["theta"] for e in entries])
    bounds = np.array([e["bound"] for e in entries])
    slope = (
        float(np.polyfit(np.log(thetas), np.log(bounds), 1)[0])
        if len(entries) >= 2
        else float("nan")
    )
    target = (beta + dexp + 1.0 / rho - 1.0 / r) / (alpha + dexp + 1.0 / rho)
    summary = {"grid": entries, "slope": slope, "target_exponent": target}
    return rows, summary


def run_inline(config: ScenarioConfig) -> tuple[list[ResultRow], dict]:
    p = config.params
    if not isinstance(p.get("problem"), dict):
        raise ConfigError("inline scenario requires a 'problem' object")
    try:
        problem = pm.problem_from_json(p["problem"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid problem spec: {e}") from e
    sigma = float(getattr(problem.scheme, "sigma", 0.0))
    trials = p["trials"]
    tasks = []
    bounds = {}
    for name in config.estimators:
        spec, bound, _ = build_estimator(
            name, problem, np.random.default_rng(config.seed)
        )
        bounds[name] = bound
        for trial in range(trials):
            tasks.append(
                ("inline", name, spec, problem, sigma, 0, trial, config.seed, bound)
            )
    rows = _map_trials(tasks, config.jobs)
    return rows, {"bounds": bounds}


_RUNNERS = {
    "double_integration": run_double_integration,
    "motivating": run_motivating,
    "diagonal": run_diagonal,
    "inline": run_inline,
}


def run_scenario(config: ScenarioConfig) -> tuple[list[ResultRow], dict]:
    return _RUNNERS[config.scenario](config)


def design_report(config: ScenarioConfig) -> dict:
    """Contrast matrices and certificates only, without Monte Carlo trials."""
    p = config.params
    if config.scenario == "double_integration":
        problems = [
            (float(s), _double_integration_problem(p, float(s), config.seed))
            for s in np.atleast_1d(p["sigma_list"])
        ]
    elif config.scenario == "inline":
        if not isinstance(p.get("problem"), dict):
            raise ConfigError("inline scenario requires a 'problem' object")
        problem = pm.problem_from_json(p["problem"])
        problems = [(float(getattr(problem.scheme, "sigma", 0.0)), problem)]
    else:
        raise ConfigError(f"design reports are not defined for {config.scenario}")
    designs = []
    for sigma, problem in problems:
        for name in config.estimators:
            spec, bound, dt = build_estimator(
                name, problem, np.random.default_rng(config.seed)
            )
            H = spec[1]
            designs.append(
                {
                    "estimator": name,
                    "sigma": sigma,
                    "bound": bound,
                    "columns": int(H.shape[1]),
                    "seconds": dt,
                    "H": H.tolist(),
                }
            )
    return {"scenario": config.scenario, "seed": config.seed, "designs": designs}


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------


def _check(name: str, suite: str, passed: bool, detail: str) -> dict:
    return {"suite": suite, "check": name, "passed": bool(passed), "detail": detail}


def _verify_tail_bounds(rng) -> list[dict]:
    out = []
    n_samp = 4000
    delta = 0.05
    Ad = rng.uniform(0.1, 1.0, size=(3, 3))
    Ad /= Ad.sum(axis=0, keepdims=True)
    Ap = rng.uniform(0.2, 2.0, size=(4, 3))
    cases = [
        ("subgaussian", SubGaussian(0.5), np.eye(3), pm.Box(-np.ones(3), np.ones(3))),
        ("discrete", Discrete(7), Ad, pm.SimplexSubset(3)),
        ("poisson", Poisson(), Ap, pm.Box(0.2 * np.ones(3), np.ones(3))),
    ]
    for name, scheme, A, X in cases:
        ctx = TailNormContext(scheme, delta, A=A, X=X)
        m = A.shape[0]
        worst = 0.0
        for _ in range(6):
            h = rng.standard_normal(m)
            h /= pi_norm(ctx, h)
            x = pm.sample_point(X, rng)
            hits = 0
            for _ in range(n_samp):
                xi = sample_noise(scheme, x, A, rng)
                hits += abs(h @ xi) > 1.0
            worst = max(worst, hits / n_samp)
        limit = delta + 3.0 * np.sqrt(delta / n_samp)
        out.append(
            _check(
                name,
                "tail-bounds",
                worst <= limit,
                f"max tail frequency {worst:.4f} vs limit {limit:.4f}",
            )
        )
    return out


def _fuzz_pairs(rng):
    E = pm.Ellitope(
        np.eye(2),
        (np.diag([1.0, 4.0]), np.diag([3.0, 0.5])),
        pm.MonotoneSet("box", upper=np.ones(2)),
    )
    groups = tuple(
        tuple(np.array([[1.0 if j == i else 0.0]]) for j in range(2)) for i in range(2)
    )
    S = pm.Spectratope(np.eye(2), groups, pm.MonotoneSet("box", upper=np.ones(2)))
    M = np.array([[1.0, 0.5], [0.0, 1.0], [1.0, -1.0]])
    ball2 = pm.ScaledBall(np.ones(3), 2.0)
    ballinf = pm.ScaledBall(np.ones(3), np.inf)
    return [
        ("abs-l1", absolute_norm_cone(1.0, 3), pm.ScaledBall(np.ones(3), 1.0)),
        ("abs-l2", absolute_norm_cone(2.0, 3), ball2),
        ("abs-l3", absolute_norm_cone(3.0, 3), pm.ScaledBall(np.ones(3), 3.0)),
        ("abs-linf", absolute_norm_cone(np.inf, 3), ballinf),
        ("ellitope", ellitope_cone(E), E),
        ("spectratope", spectratope_cone(S), S),
        (
            "intersection",
            cone_calculus(
                "intersection",
                [absolute_norm_cone(2.0, 3), absolute_norm_cone(np.inf, 3)],
            ),
            pm.Intersection((ball2, ballinf)),
        ),
        (
            "linear-image",
            cone_calculus("linear_image", [absolute_norm_cone(2.0, 2)], maps=[M]),
            pm.LinearImage(M, pm.ScaledBall(np.ones(2), 2.0)),
        ),
    ]


def _verify_cone_fuzz(rng) -> list[dict]:
    out = []
    for name, cone, X in _fuzz_pairs(rng):
        worst = 0.0
        ok = True
        for _ in range(10):
            V, tau = cone.sample_member(rng)
            for _ in range(10):
                y = pm.sample_point(X, rng)
                val = float(y @ V @ y)
                worst = max(worst, val - tau * (1.0 + 1e-6))
                ok = ok and val <= tau * (1.0 + 1e-6) + 1e-9
        out.append(
            _check(name, "cone-fuzz", ok, f"max excess {worst:.3e}")
        )
    return out


def _verify_lemma(rng) -> list[dict]:
    out = []
    for m in (2, 4, 8, 16):
        A = rng.uniform(0.2, 2.0, size=(m, m))
        X = pm.Box(0.2 * np.ones(m), np.ones(m))
        z = z_set(Poisson(), 0.1, m, X=X, A=A)
        hc = ds.build_h_cone(z, m)
        if hc.variant != "general":
            out.append(
                _check(
                    f"variant-m{m}",
                    "lemma-rademacher",
                    False,
                    "expected the general cone variant",
                )
            )
            continue
        recon_ok = True
        worst = 0.0
        for _ in range(25):
            Q = rng.standard_normal((m, m)) / np.sqrt(m)
            Theta = Q @ Q.T
            mu = hc.required_mu(Theta) * rng.uniform(1.0, 2.0)
            H, lam = ds.theta_to_contrast(Theta, mu, hc, rng)
            err = np.linalg.norm(H @ (lam[:, None] * H.T) - Theta)
            rel = err / max(np.linalg.norm(Theta), 1e-300)
            worst = max(worst, rel)
            recon_ok = recon_ok and rel <= 1e-8
            recon_ok = recon_ok and all(
                z.pi(H[:, j]) <= 1.0 + 1e-9 for j in range(H.shape[1])
            )
            recon_ok = recon_ok and lam.sum() <= mu * (1.0 + 1e-8)
        out.append(
            _check(
                f"reconstruction-m{m}",
                "lemma-rademacher",
                recon_ok,
                f"max relative factorization error {worst:.2e}",
            )
        )

        Q = rng.standard_normal((m, m)) / np.sqrt(m)
        Theta = Q @ Q.T
        mu = hc.required_mu(Theta)
        w, E = np.linalg.eigh(Theta)
        Qf = E * np.sqrt(np.maximum(w, 0.0))[None, :]
        V = ds.cosine_transform_matrix(m)
        scale = np.sqrt(m / max(mu, 1e-300))
        hits = 0
        draws = 400
        for _ in range(draws):
            chi = rng.integers(0, 2, size=m) * 2.0 - 1.0
            Hc = scale * (Qf * chi[None, :]) @ V
            hits += all(z.pi(Hc[:, j]) <= 1.0 for j in range(m))
        rate = hits / draws
        out.append(
            _check(
                f"acceptance-m{m}",
                "lemma-rademacher",
                rate >= 0.40,
                f"sign draw acceptance rate {rate:.2f}",
            )
        )
    return out


def _verify_closed_forms(rng) -> list[dict]:
    out = []
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 7))
        theta_target = rng.uniform(0.2, 0.8)
        a = np.sort(rng.uniform(0.5, 2.0, n))[::-1]
        d = np.sort(rng.uniform(0.5, 2.0, n))
        b = a * np.sort(rng.uniform(0.3, 1.0, n))[::-1]
        eps = 0.1
        sigma = theta_target / np.sqrt(2.0 * np.log(2.0 * n / eps))
        problem = pm.EstimationProblem(
            A=np.diag(a),
            B=np.diag(b),
            X=pm.ScaledBall(d, 2.0),
            norm=pm.LpNorm(2.0),
            scheme=SubGaussian(sigma),
            eps=eps,
        )
        ctx = dd.tail_context(problem, n)
        ell = int(rng.integers(0, n))
        opt, _ = dd.solve_saddle_column(problem, ell, ctx)
        want = b[ell] * min(ctx.theta / a[ell], 1.0 / d[ell])
        worst = max(worst, abs(opt - want))
    out.append(
        _check(
            "saddle-diagonal",
            "closed-forms",
            worst <= 1e-6,
            f"max |saddle - closed form| = {worst:.2e}",
        )
    )

    worst_rel = 0.0
    below = 0.0
    for _ in range(10):
        nu = int(rng.integers(1, 4))
        vs = rng.uniform(0.1, 2.0, nu)
        gamma = rng.uniform(0.3, 3.0, nu)
        rho, r = [(2.0, 3.0), (1.0, 2.0), (np.inf, 2.0), (2.0, np.inf)][
            int(rng.integers(0, 4))
        ]
        val = dd.psi_bound(vs, gamma, rho, r)
        grid = np.linspace(0.0, 1.0, 41)
        best = 0.0
        mesh = np.meshgrid(*([grid] * nu), indexing="ij")
        v = np.stack([g.ravel() for g in mesh], axis=1)
        v = v * np.minimum(1.0, gamma * vs)[None, :]
        if np.isinf(rho):
            feas = v
        else:
            feas = v[(v**rho).sum(axis=1) <= 1.0 + 1e-12]
        if feas.size:
            y = feas / gamma[None, :]
            best = float(
                np.max(np.max(np.abs(y), axis=1))
                if np.isinf(r)
                else np.max((np.abs(y) ** r).sum(axis=1) ** (1.0 / r))
            )
        brute = 2.0 * best
        worst_rel = max(worst_rel, abs(val - brute) / max(brute, 1e-12))
        below = max(below, brute - val)
    out.append(
        _check(
            "psi-brute-force",
            "closed-forms",
            worst_rel <= 0.02 and below <= 1e-9,
            f"max relative gap {worst_rel:.3f}, max underrun {below:.1e}",
        )
    )

    n, sigma, eps = 4, 0.1, 0.1
    problem = pm.EstimationProblem(
        A=np.eye(n),
        B=np.eye(n),
        X=pm.ScaledBall(np.ones(n), 1.0),
        norm=pm.LpNorm(2.0),
        scheme=SubGaussian(sigma),
        eps=eps,
    )
    hc = ds.build_h_cone(z_set(problem.scheme, eps, n), n)
    res = ds.solve_design_sdp(
        problem,
        absolute_norm_cone(1.0, n),
        absolute_norm_cone(2.0, n),
        hc,
        rng=rng,
    )
    kappa = np.sqrt(2.0 * np.log(2.0 * n / eps))
    want = 2.0 * min(kappa * sigma * np.sqrt(n), 1.0)
    rel = abs(res.opt - want) / want
    out.append(
        _check(
            "design2-anchor",
            "closed-forms",
            rel <= 0.02,
            f"anchor relative error {rel:.4f}",
        )
    )
    return out


def run_verify(suite: str, seed: int = 0) -> tuple[list[dict], bool]:
    """Run one verification suite (or 'all'); returns (checks, all passed)."""
    suites = {
        "tail-bounds": _verify_tail_bounds,
        "cone-fuzz": _verify_cone_fuzz,
        "lemma-rademacher": _verify_lemma,
        "closed-forms": _verify_closed_forms,
    }
    names = list(suites) if suite == "all" else [suite]
    if any(nm not in suites for nm in names):
        raise ConfigError(f"suite must be one of {VERIFY_SUITES} or 'all'")
    checks = []
    for nm in names:
        checks.extend(suites[nm](np.random.default_rng(seed)))
    return checks, all(c["passed"] for c in checks)
