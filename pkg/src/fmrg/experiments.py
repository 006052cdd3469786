"""Config-driven studies: ensembles, sweeps, early stopping, gap scaling, checks.

Particles are processed in fixed-size chunks. Each particle draws its noise
from counter-based streams keyed by its global index, and chunk results are
concatenated in index order, so output does not depend on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import linregress

from . import config as C
from .baselines import (RiccatiSolution, dps_signal, flowchef_step, flowdps_step,
                        lqr_exact_control, mpgd_step, run_baseline_trajectory, tilt_sampler)
from .dynamics import TimeGrid, euler_step, posterior_mean, LINEAR
from .errors import ConfigError
from .flowmap import (AnalyticGaussianFlowMap, EulerFlowMap, NumericFlowMap, check_semigroup)
from .guidance import GuidanceConfig, greedy_guidance_signal, run_guided_trajectory, warmup_select
from .rewards import LinearMeasurementReward, QuadraticReward
from .rng import ParticleStreams
from .targets import (DegenerateGaussianTarget, GaussianMixtureTarget, GaussianTarget,
                      gaussian_log_density, sample_target, tilt_closed_form_gaussian)
from .theory import (early_stop_variance, grad_first_order_value, predict_terminal,
                     solve_t_stop)

CHUNK = 4096
N_BATCHES = 100
CSV_COLUMNS = ("method", "lambda", "t_stop", "n_steps", "n_opt", "reuse", "nfe",
               "emp_mean", "emp_mean_se", "emp_var", "emp_var_se", "emp_reward", "emp_reward_se",
               "pred_mean", "pred_var", "pred_reward")


# ---------------------------------------------------------------- builders

def method_name(cfg: C.ExperimentConfig) -> str:
    return C.METHOD_ALIASES.get(cfg.method.name, cfg.method.name)


def build_target(spec: C.TargetSpec):
    try:
        if spec.kind == "gaussian":
            return GaussianTarget(spec.mu1, spec.sigma1)
        if spec.kind == "gmm":
            return GaussianMixtureTarget(spec.weights, spec.means, spec.covs)
        if spec.kind == "degenerate":
            return DegenerateGaussianTarget(spec.mu1, np.asarray(spec.basis, dtype=float).T,
                                            spec.sigma_par, spec.sigma_perp)
    except ValueError as exc:
        raise ConfigError(f"target: {exc}") from exc
    raise ConfigError(f"target.kind must be gaussian, gmm or degenerate, got {spec.kind!r}")


def build_reward(spec: C.RewardSpec, dim):
    if spec.kind == "quadratic":
        a = np.asarray(spec.a, dtype=float)
        if a.size == 1:
            a = np.full(dim, float(a[0]))
        if a.size != dim:
            raise ConfigError("reward.a does not match the target dimension")
        return QuadraticReward(a)
    if spec.kind == "linear":
        A = np.atleast_2d(np.asarray(spec.A, dtype=float))
        if A.shape[1] != dim:
            raise ConfigError("reward.A does not match the target dimension")
        try:
            return LinearMeasurementReward(A, spec.y)
        except ValueError as exc:
            raise ConfigError(f"reward: {exc}") from exc
    raise ConfigError(f"reward.kind must be quadratic or linear, got {spec.kind!r}")


def build_flowmap(target, substeps=1000):
    if isinstance(target, GaussianMixtureTarget):
        return NumericFlowMap(target.velocity(), substeps)
    return AnalyticGaussianFlowMap(target)


def build_grid(spec: C.GuidanceSpec):
    try:
        return TimeGrid(tuple(spec.knots)) if spec.knots else TimeGrid.uniform(spec.n_steps)
    except ValueError as exc:
        raise ConfigError(f"guidance grid: {exc}") from exc


def guidance_config(cfg: C.ExperimentConfig) -> GuidanceConfig:
    g = cfg.guidance
    name = method_name(cfg)
    try:
        return GuidanceConfig(
            variant="E" if name == "FMRG-E" else "J",
            eta=cfg.method.lambda_,
            lambda_schedule=g.schedule,
            n_opt=g.n_opt,
            grid=build_grid(g),
            t_stop=g.t_stop,
            reuse_endpoint=g.reuse,
            warmup_k=g.warmup_k,
            warmup_fraction=g.warmup_fraction,
            renoise_c=g.renoise_c,
            renoise_knots=tuple(g.renoise_knots),
            seed_opt_steps=g.seed_opt_steps,
            seed_opt_eta=None if cfg.method.seed_opt_eta < 0 else cfg.method.seed_opt_eta,
        )
    except ValueError as exc:
        raise ConfigError(f"guidance: {exc}") from exc


# ---------------------------------------------------------------- ensembles

@dataclass
class EnsembleSummary:
    method: str
    lam: float
    t_stop: float
    n_steps: int
    n_opt: int
    reuse: bool
    nfe: int
    emp_mean: float
    emp_mean_se: float
    emp_var: float
    emp_var_se: float
    emp_reward: float
    emp_reward_se: float
    pred_mean: float | None = None
    pred_var: float | None = None
    pred_reward: float | None = None

    def row(self):
        vals = [self.method, self.lam, self.t_stop, self.n_steps, self.n_opt, self.reuse, self.nfe,
                self.emp_mean, self.emp_mean_se, self.emp_var, self.emp_var_se,
                self.emp_reward, self.emp_reward_se, self.pred_mean, self.pred_var, self.pred_reward]
        return [_fmt(v) for v in vals]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, summaries):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for s in summaries:
            fh.write(",".join(s.row()) + "\n")


def batch_means(values, n_batches=N_BATCHES):
    """Mean and batch-means standard error over contiguous batches."""
    values = np.asarray(values, dtype=float)
    B = min(n_batches, values.size)
    mean = float(values.mean())
    if B < 2:
        return mean, float("nan")
    bm = np.array([b.mean() for b in np.array_split(values, B)])
    return mean, float(bm.std(ddof=1) / math.sqrt(B))


def batch_variance(values, n_batches=N_BATCHES):
    values = np.asarray(values, dtype=float)
    var = float(values.var(ddof=1)) if values.size > 1 else float("nan")
    B = min(n_batches, values.size // 2)
    if B < 2:
        return var, float("nan")
    bv = np.array([b.var(ddof=1) for b in np.array_split(values, B)])
    return var, float(bv.std(ddof=1) / math.sqrt(B))


class _Setup:
    def __init__(self, cfg: C.ExperimentConfig):
        self.cfg = cfg
        self.name = method_name(cfg)
        self.target = build_target(cfg.target)
        self.reward = build_reward(cfg.reward, self.target.dim)
        self.fmap = build_flowmap(self.target, cfg.flowmap.substeps)
        self.gcfg = guidance_config(cfg)


def _run_chunk(setup: _Setup, start, count):
    cfg, name = setup.cfg, setup.name
    seed = cfg.ensemble.seed
    d = setup.target.dim
    streams = ParticleStreams(seed, start, count)
    if name == "Tilt":
        x1 = tilt_sampler(setup.target, setup.reward, cfg.method.lambda_, count, seed, start)
        return x1, 0
    if name in ("FMRG-J", "FMRG-E"):
        g = setup.gcfg
        if g.warmup_k > 1:
            x0s = np.stack([streams.normals("x0", j, d) for j in range(g.warmup_k)])
            rec = warmup_select(setup.fmap, setup.reward, g, x0s, streams, record_states=False)
        else:
            x0 = streams.normals("x0", 0, d)
            rec = run_guided_trajectory(setup.fmap, setup.reward, g, x0, streams, record_states=False)
        return rec.terminal, rec.nfe
    x0 = streams.normals("x0", 0, d)
    rec = run_baseline_trajectory(name, setup.fmap, setup.reward, setup.gcfg, x0,
                                  target=setup.target, record_states=False)
    return rec.terminal, rec.nfe


def simulate(cfg: C.ExperimentConfig, threads=1):
    """Terminal states of every particle (index order) and the per-particle NFE."""
    setup = _Setup(cfg)
    n = cfg.ensemble.n_particles
    if n < 1:
        raise ConfigError("ensemble.n_particles must be >= 1")
    chunks = [(s, min(CHUNK, n - s)) for s in range(0, n, CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _run_chunk(setup, *c), chunks))
    else:
        results = [_run_chunk(setup, *c) for c in chunks]
    nfes = {r[1] for r in results}
    assert len(nfes) == 1, "NFE must be identical across particles"
    return np.concatenate([r[0] for r in results], axis=0), nfes.pop(), setup


def prediction(cfg: C.ExperimentConfig, setup: _Setup | None = None):
    """Closed-form ``(mean, variance, reward)`` when the configuration has one, else None."""
    setup = setup or _Setup(cfg)
    if not isinstance(setup.target, GaussianTarget) or not isinstance(setup.reward, QuadraticReward):
        return None
    g = setup.gcfg
    name = setup.name
    if name == "FMRG-J":
        plain = (g.lambda_schedule == "constant" and g.warmup_k == 1 and g.renoise_c == 0
                 and g.seed_opt_steps == 0 and not g.reuse_endpoint)
        if not plain:
            return None
        kind = "greedy"
    elif name == "LQR":
        kind = "exact"
    elif name == "Tilt":
        kind = "tilt"
    else:
        return None
    T, a = setup.target, setup.reward.a
    preds = [predict_terminal(kind, float(m), T.sigma1, float(ai), cfg.method.lambda_, g.t_stop)
             for m, ai in zip(T.mu1, a)]
    return preds[0].mean, preds[0].variance, float(sum(p.expected_reward for p in preds))


def run_ensemble(cfg: C.ExperimentConfig, threads=1, label=None) -> EnsembleSummary:
    x1, nfe, setup = simulate(cfg, threads)
    rewards = setup.reward.value(x1)
    m, m_se = batch_means(x1[:, 0])
    v, v_se = batch_variance(x1[:, 0])
    rw, rw_se = batch_means(rewards)
    pred = prediction(cfg, setup)
    g = setup.gcfg
    return EnsembleSummary(
        method=label or setup.name, lam=cfg.method.lambda_, t_stop=g.t_stop,
        n_steps=g.grid.n_steps, n_opt=g.n_opt, reuse=g.reuse_endpoint, nfe=nfe,
        emp_mean=m, emp_mean_se=m_se, emp_var=v, emp_var_se=v_se,
        emp_reward=rw, emp_reward_se=rw_se,
        pred_mean=pred[0] if pred else None, pred_var=pred[1] if pred else None,
        pred_reward=pred[2] if pred else None,
    )


def with_method(cfg, name, lam=None):
    lam = cfg.method.lambda_ if lam is None else float(lam)
    return replace(cfg, method=replace(cfg.method, name=name, lambda_=lam))


def lambda_sweep(cfg: C.ExperimentConfig, lambdas=None, methods=None, threads=1):
    lambdas = list(cfg.sweep.lambdas if lambdas is None else lambdas)
    methods = list(cfg.sweep.methods if methods is None else methods)
    if not lambdas:
        raise ConfigError("lambda grid must be nonempty")
    if any(lam < 0 for lam in lambdas):
        raise ConfigError("lambda grid must be nonnegative")
    out = []
    for name in methods:
        for lam in lambdas:
            out.append(run_ensemble(with_method(cfg, name, lam), threads))
    return out


def early_stop_study(cfg: C.ExperimentConfig, t_stops=None, threads=1):
    """One greedy ensemble per stopping time plus a row at the variance-matching time."""
    t_stops = list(cfg.earlystop.t_stops if t_stops is None else t_stops)
    if any(not 0 < t <= 1 for t in t_stops):
        raise ConfigError("t_stop grid must lie in (0, 1]")
    base = with_method(cfg, "FMRG-J")
    rows = []
    for ts in t_stops:
        rows.append(run_ensemble(replace(base, guidance=replace(base.guidance, t_stop=float(ts))),
                                 threads))
    T = build_target(cfg.target)
    if isinstance(T, GaussianTarget) and cfg.method.lambda_ > 0:
        ts = solve_t_stop(T.sigma1, cfg.method.lambda_)
        rows.append(run_ensemble(replace(base, guidance=replace(base.guidance, t_stop=ts)),
                                 threads, label="FMRG-J:solve_t_stop"))
    return rows


# ---------------------------------------------------------------- gap scaling

@dataclass
class SlopeResult:
    slope: float
    ci_low: float
    ci_high: float
    lambdas: list
    gaps: list


def _fit(lambdas, gaps):
    fit = linregress(np.log(lambdas), np.log(gaps))
    half = 1.96 * fit.stderr
    return fit.slope, fit.slope - half, fit.slope + half


def scaling_slope(mu1, sigma1, a, lambdas, t, x, corrected=False):
    """Log-log slope of ``|u_LQR - u_greedy|`` (optionally plus ``lam^2 grad V1``) against ``lam``."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size < 2:
        raise ValueError("need at least two lambda values to fit a slope")
    T = GaussianTarget([mu1], sigma1)
    fmap = AnalyticGaussianFlowMap(T)
    r = QuadraticReward([a])
    xv = np.array([x], dtype=float)
    dV1 = grad_first_order_value(fmap, r, t, xv) if corrected else 0.0
    gaps = []
    for lam in lambdas:
        u_star = lqr_exact_control(T, [a], lam, t, xv)
        u_j = lam * greedy_guidance_signal(fmap, r, t, xv, "J")
        gap = float(np.linalg.norm(u_star - u_j + lam**2 * dV1))
        if gap < 1e-13:
            raise ValueError(f"gap {gap:.3g} at lambda={lam} is below float resolution; grid too small")
        gaps.append(gap)
    s, lo, hi = _fit(lambdas, gaps)
    return SlopeResult(s, lo, hi, lambdas.tolist(), gaps)


def slope_grid(cfg: C.ExperimentConfig):
    s = cfg.slope
    if s.n_points < 2:
        raise ConfigError("slope.n_points must be >= 2 to fit a slope")
    if not 0 < s.lambda_min < s.lambda_max:
        raise ConfigError("slope needs 0 < lambda_min < lambda_max")
    return np.logspace(math.log10(s.lambda_min), math.log10(s.lambda_max), s.n_points)


# ---------------------------------------------------------------- identity checks

def _random_cases(n_cases, seed):
    """Alternate 1-D Gaussian, 2-D Gaussian and 2-D mixture velocities with random states."""
    rng = np.random.default_rng(seed)
    gmm = GaussianMixtureTarget([0.4, 0.6], [[-1.0, 0.5], [1.5, -0.5]],
                                [[[0.4, 0.1], [0.1, 0.3]], [[0.6, -0.2], [-0.2, 0.5]]])
    cases = []
    for i in range(n_cases):
        kind = i % 3
        if kind == 0:
            T = GaussianTarget([rng.normal()], rng.uniform(0.3, 2.5))
        elif kind == 1:
            T = GaussianTarget(rng.normal(size=2), rng.uniform(0.3, 2.5))
        else:
            T = gmm
        d = T.dim
        t = float(rng.uniform(0.0, 0.95))
        t_next = float(min(1.0, t + rng.uniform(0.01, 0.1)))
        x = rng.normal(size=d)
        r = QuadraticReward(rng.normal(size=d))
        cases.append((T.velocity(), r, t, t_next, x, float(rng.uniform(0.1, 3.0))))
    return cases


def reduction_check(n_cases=50, seed=0):
    """Max residual of each exact algebraic identity between the methods."""
    res = {"dps_vs_euler_greedy": 0.0, "flowdps_vs_euler_fmrg_e": 0.0,
           "flowchef_vs_euler_fmrg_e": 0.0, "mpgd_vs_euler_fmrg_e": 0.0,
           "posterior_mean_vs_euler": 0.0}

    def upd(k, a, b):
        res[k] = max(res[k], float(np.max(np.abs(a - b))))

    for b, r, t, t_next, x, w in _random_cases(n_cases, seed):
        E = EulerFlowMap(b)
        upd("dps_vs_euler_greedy", dps_signal(b, r, t, x, w),
            w * greedy_guidance_signal(E, r, t, x, "J"))
        sig_e = greedy_guidance_signal(E, r, t, x, "E")
        base = E.eval(t, t_next, x)
        upd("flowdps_vs_euler_fmrg_e", flowdps_step(b, r, t, t_next, x, w),
            base + ((1 - t) * t_next * w) * sig_e)
        upd("flowchef_vs_euler_fmrg_e", flowchef_step(b, r, t, t_next, x, w), base + w * sig_e)
        upd("mpgd_vs_euler_fmrg_e", mpgd_step(b, r, t, t_next, x, w), base + (t_next * w) * sig_e)
        upd("posterior_mean_vs_euler", posterior_mean(b, LINEAR, t, x), euler_step(b, t, 1 - t, x))
    return res


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tol)


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def flow_map_axioms(fmap, label, tol_semigroup, tol_lagrange, tol_euler, seed=0, n=6):
    """Jump, semigroup, Lagrangian and Eulerian residuals on a random ``(s, t, x)`` grid."""
    rng = np.random.default_rng(seed)
    d = fmap.dim
    jump = semi = lag = eul = 0.0
    b = fmap.velocity
    h = 1e-4
    for _ in range(n):
        s, u, t = np.sort(rng.uniform(0.02, 0.98, 3))
        x = rng.normal(size=d)
        jump = max(jump, float(np.max(np.abs(fmap.eval(t, t, x) - x))))
        semi = max(semi, check_semigroup(fmap, float(s), float(u), float(t), x))
        dt_num = (fmap.eval(s, t + h, x) - fmap.eval(s, t - h, x)) / (2 * h)
        lag = max(lag, _rel(dt_num, b(t, fmap.eval(s, t, x))))
        ds_num = (fmap.eval(s + h, t, x) - fmap.eval(s - h, t, x)) / (2 * h)
        eul = max(eul, float(np.max(np.abs(ds_num + fmap.jacobian(s, t, x) @ b(s, x)))))
    return [Check(f"{label}: jump condition", jump, 0.0),
            Check(f"{label}: semigroup", semi, tol_semigroup),
            Check(f"{label}: Lagrangian equation", lag, tol_lagrange),
            Check(f"{label}: Eulerian equation", eul, tol_euler)]


def derivative_checks(fmap, label, seed=0, n=4):
    rng = np.random.default_rng(seed)
    d = fmap.dim
    fd = vj = 0.0
    h = 1e-4
    for _ in range(n):
        s, t = np.sort(rng.uniform(0.0, 1.0, 2))
        x = rng.normal(size=d)
        v = rng.normal(size=d)
        J = fmap.jacobian(s, t, x)
        cols = [(fmap.eval(s, t, x + h * e) - fmap.eval(s, t, x - h * e)) / (2 * h) for e in np.eye(d)]
        fd = max(fd, _rel(J, np.stack(cols, axis=-1)))
        vj = max(vj, float(np.max(np.abs(fmap.vjp(s, t, x, v) - J.T @ v))))
    return [Check(f"{label}: Jacobian vs finite differences (rel)", fd, 1e-4),
            Check(f"{label}: VJP vs Jacobian transpose", vj, 1e-8)]


def verify_suite(n_cases=50, seed=0):
    """Reduction identities plus flow-map, Riccati, stopping-time and tilt invariants."""
    checks = [Check(f"reduction: {k}", v, 1e-10) for k, v in reduction_check(n_cases, seed).items()]
    gauss = AnalyticGaussianFlowMap(GaussianTarget([0.3, -0.2], 1.7))
    gmm = GaussianMixtureTarget([0.4, 0.6], [[-1.0, 0.5], [1.5, -0.5]],
                                [[[0.4, 0.1], [0.1, 0.3]], [[0.6, -0.2], [-0.2, 0.5]]])
    num = NumericFlowMap(gmm.velocity(), 1000)
    checks += flow_map_axioms(gauss, "Gaussian map", 1e-10, 1e-6, 1e-6, seed)
    checks += flow_map_axioms(num, "mixture map", 1e-4, 1e-4, 1e-3, seed, n=3)
    checks += derivative_checks(gauss, "Gaussian map", seed)
    checks += derivative_checks(num, "mixture map", seed, n=2)
    ric = 0.0
    for sigma1, lam in [(0.5, 0.75), (1.0, 0.1), (2.0, 1.0)]:
        R = RiccatiSolution(0.0, sigma1, 1.0, lam)
        ric = max(ric, max(abs(R.residual(t)) for t in np.linspace(0.0, 0.999, 50)))
    checks.append(Check("Riccati residual", ric, 1e-8))
    bs = 0.0
    for sigma1 in (0.5, 1.0, 2.0):
        for lam in (0.01, 0.1, 0.75, 3.0):
            exact = sigma1**2 / (1 + math.pi * lam * sigma1) ** 2
            bs = max(bs, abs(early_stop_variance(sigma1, lam, solve_t_stop(sigma1, lam)) - exact))
    checks.append(Check("stopping-time back-substitution", bs, 1e-10))
    T = GaussianTarget([0.4], 1.3)
    lam, a = 0.6, np.array([1.5])
    tilted = tilt_closed_form_gaussian(T, a, lam)
    grid = np.linspace(-3, 3, 41)[:, None]
    diff = (gaussian_log_density(tilted, grid)
            - (gaussian_log_density(T, grid) + lam * QuadraticReward(a).value(grid)))
    checks.append(Check("tilt log-density offset spread", float(np.ptp(diff)), 1e-10))
    return checks


# ---------------------------------------------------------------- toy inverse problem

def inverse_benchmark_config() -> C.ExperimentConfig:
    """Pinned 2-D mixture benchmark: observe the first coordinate of a hidden sample."""
    cfg = C.ExperimentConfig()
    cfg.target = C.TargetSpec(kind="gmm", weights=[0.5, 0.5],
                              means=[[-1.5, -1.0], [1.5, 1.0]],
                              covs=[[[0.6, 0.3], [0.3, 0.6]], [[0.6, -0.3], [-0.3, 0.6]]])
    cfg.reward = C.RewardSpec(kind="linear", A=[[1.0, 0.0]], y=[0.0])
    cfg.ensemble = C.EnsembleSpec(n_particles=1000, seed=11)
    cfg.method = C.MethodSpec(name="FMRG-E", lambda_=1.0)
    return cfg


@dataclass
class InverseRow:
    method: str
    nfe: int
    median_meas_error: float
    median_log_likelihood: float


def toy_inverse_problem(cfg: C.ExperimentConfig | None = None):
    """Guided methods at matched NFE versus the unguided sampler on a linear measurement."""
    cfg = cfg or inverse_benchmark_config()
    T = build_target(cfg.target)
    if not isinstance(T, GaussianMixtureTarget) or T.dim != 2:
        raise ConfigError("the inverse problem needs a 2-D mixture target")
    A = np.atleast_2d(np.asarray(cfg.reward.A, dtype=float)) if cfg.reward.A else np.array([[1.0, 0.0]])
    truth = sample_target(T, 1, cfg.inverse.truth_seed)[0]
    y = A @ truth
    r = LinearMeasurementReward(A, y)
    fmap = NumericFlowMap(T.velocity(), cfg.flowmap.substeps)
    n, seed = cfg.ensemble.n_particles, cfg.ensemble.seed
    x0 = ParticleStreams(seed, 0, n).normals("x0", 0, 2)
    inv = cfg.inverse
    if len(inv.methods) != len(inv.etas):
        raise ConfigError("inverse.methods and inverse.etas must have equal length")

    def row(name, x1, nfe):
        err = np.sum(r.residual(x1) ** 2, axis=-1)
        return InverseRow(name, nfe, float(np.median(err)), float(np.median(T.log_density(x1))))

    rows = [row("unguided", fmap.eval(0.0, 1.0, x0), 1)]
    for name, eta in zip(inv.methods, inv.etas):
        if name in ("FMRG-E", "FMRG-J"):
            g = GuidanceConfig(variant=name[-1], eta=eta, grid=TimeGrid.uniform(inv.guided_steps),
                               reuse_endpoint=True)
            rec = run_guided_trajectory(fmap, r, g, x0, record_states=False)
        elif name in ("FlowDPS", "FlowChef", "MPGD", "DPS"):
            g = GuidanceConfig(eta=eta, grid=TimeGrid.uniform(inv.euler_steps))
            rec = run_baseline_trajectory(name, fmap, r, g, x0, record_states=False)
        else:
            raise ConfigError(f"inverse problem does not support method {name!r}")
        rows.append(row(name, rec.terminal, rec.nfe))
    return rows, truth, y
