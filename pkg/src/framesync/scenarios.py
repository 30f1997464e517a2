"""Named experiment scenarios with built-in assertions and artifacts.

Each scenario integrates one or more ensembles, evaluates the checks that the
model's guarantees predict, and writes a CSV time series plus a verdict JSON
into the configured output directory. All randomness flows from the single
config seed, so reruns reproduce every number bit-exactly.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics
from .diagnostics import (
    diameter,
    g_functional,
    inter_diameter,
    lock_thresholds,
    phase_lock_detector,
    spread_inequality_residuals,
    velocity_bound_check,
    write_timeseries,
)
from .dynamics import (
    Ensemble,
    ModelParams,
    make_tangent_velocity,
    reduced_velocity,
    rhs_first_order,
    rhs_kuramoto,
    rhs_second_order,
    rhs_so_n,
    rhs_sphere,
    split_transform,
    zero_freqs,
)
from .errors import ConfigError
from .integrator import IntegratorConfig, Trajectory, integrate
from .network import all_to_all, compute_stats
from .stiefel import (
    exp_skew,
    project_tangent,
    random_skew,
    random_stiefel,
    retract_polar,
    tangency_defect,
)

__all__ = [
    "ScenarioConfig",
    "ScenarioReport",
    "Check",
    "SCENARIOS",
    "resolve_config",
    "run_scenario",
    "clustered_states",
    "uniform_states",
    "output_root",
]

OUTPUT_ENV = "FRAMESYNC_OUT"

SCENARIOS = (
    "first_order_homogeneous",
    "first_order_locking",
    "second_order_homogeneous",
    "practical_consensus_sweep",
    "invariance_checks",
)

# fraction of the rotation magnitude that differs between agents in the
# locking scenario; the common part only gauges the relative dynamics
_LOCK_SPREAD = 0.15


# --- configuration ----------------------------------------------------------


@dataclass
class ScenarioConfig:
    scenario: str
    n: int
    p: int
    count: int
    kappa: float | list
    m: float
    gamma: float
    xi_scale: float
    eta: float
    m0: float
    seed: int
    dt: float | None
    horizon: float | None
    record_every: int | None
    output_dir: str
    diameter0: float
    vel_scale: float
    window: float | None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["N"] = d.pop("count")
        return d


_DEFAULTS: dict[str, dict] = {
    "first_order_homogeneous": dict(
        n=4, p=2, N=8, kappa=1.0, xi_scale=0.0, seed=11,
        horizon=50.0, record_every=100, diameter0=1.0,
    ),
    "first_order_locking": dict(
        n=4, p=2, N=3, kappa=2.0, xi_scale=0.1, seed=7,
        horizon=8.0, record_every=50, diameter0=1.0, window=0.3,
    ),
    "second_order_homogeneous": dict(
        n=4, p=2, N=10, kappa=1.0, m=1.0, gamma=2.0, xi_scale=0.0, seed=5,
        horizon=100.0, record_every=50, diameter0=1.0, vel_scale=0.3,
    ),
    "practical_consensus_sweep": dict(
        n=4, p=2, N=5, kappa=[10.0, 100.0, 1000.0], m0=1.0, eta=1.0,
        gamma=1.0, xi_scale=0.1, seed=3, diameter0=1.0, vel_scale=0.2,
    ),
    "invariance_checks": dict(
        n=4, p=2, N=5, kappa=1.0, m=1.0, gamma=2.0, xi_scale=0.1, seed=2,
        horizon=5.0, dt=1e-3, record_every=100, diameter0=1.0, vel_scale=0.3,
    ),
}

_ALL_KEYS = {
    "scenario", "n", "p", "N", "kappa", "m", "gamma", "xi_scale", "eta",
    "m0", "seed", "dt", "horizon", "record_every", "output_dir",
    "diameter0", "vel_scale", "window",
}

# keys that a user may set, per scenario (on top of the always-allowed ones)
_ALLOWED_EXTRA = {
    "first_order_homogeneous": set(),
    "first_order_locking": {"window"},
    "second_order_homogeneous": {"m", "gamma", "vel_scale"},
    "practical_consensus_sweep": {"m0", "eta", "gamma", "vel_scale"},
    "invariance_checks": {"m", "gamma", "vel_scale"},
}
_ALWAYS_ALLOWED = {
    "scenario", "n", "p", "N", "kappa", "xi_scale", "seed", "dt",
    "horizon", "record_every", "output_dir", "diameter0",
}


def default_dt(kappa: float, mass: float = 0.0, friction: float = 1.0) -> float:
    """Step-size policy: resolve the coupling and keep the friction rate
    gamma/m well inside the RK4 stability window, so the orthonormality
    constraint is not degraded by the stiff transient."""
    dt = min(1e-3, 2.5e-3 / max(kappa, 1.0))
    if mass > 0:
        dt = min(dt, 0.5 * mass / friction)
    return dt


def resolve_config(raw: dict) -> ScenarioConfig:
    """Validate a raw config mapping and fill scenario defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "scenario" not in raw:
        raise ConfigError("missing required key 'scenario'")
    scenario = raw["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}"
        )
    unknown = set(raw) - _ALL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    misplaced = set(raw) - _ALWAYS_ALLOWED - _ALLOWED_EXTRA[scenario]
    if misplaced:
        raise ConfigError(
            f"keys not applicable to {scenario}: {', '.join(sorted(misplaced))}"
        )

    merged = dict(_DEFAULTS[scenario])
    merged.update(raw)

    def _num(key, default=None, positive=False, nonneg=False):
        v = merged.get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key} must be a number, got {v!r}")
        v = float(v)
        if positive and v <= 0:
            raise ConfigError(f"{key} must be positive, got {v}")
        if nonneg and v < 0:
            raise ConfigError(f"{key} must be nonnegative, got {v}")
        return v

    def _int(key, default=None, minimum=1):
        v = merged.get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key} must be an integer, got {v!r}")
        if v < minimum:
            raise ConfigError(f"{key} must be >= {minimum}, got {v}")
        return v

    n = _int("n")
    p = _int("p")
    count = _int("N", minimum=2)
    if p > n:
        raise ConfigError(f"need p <= n, got p={p}, n={n}")

    kappa = merged.get("kappa")
    if scenario == "practical_consensus_sweep":
        if not (isinstance(kappa, list) and len(kappa) >= 2):
            raise ConfigError("sweep needs kappa as a list of at least two values")
        kappa = [float(k) for k in kappa]
        if any(k <= 0 for k in kappa) or sorted(kappa) != kappa:
            raise ConfigError("sweep kappa values must be positive and increasing")
        if any(merged.get(k) is not None for k in ("dt", "horizon", "record_every")):
            raise ConfigError("sweep computes dt/horizon/record_every per kappa")
    else:
        kappa = _num("kappa", positive=True)

    mass = _num("m", default=0.0, nonneg=True)
    if scenario in ("first_order_homogeneous", "first_order_locking") and mass != 0.0:
        raise ConfigError(f"{scenario} is first-order; m must be 0")
    if scenario in ("second_order_homogeneous", "invariance_checks") and mass <= 0.0:
        raise ConfigError(f"{scenario} needs m > 0")

    xi_scale = _num("xi_scale", default=0.0, nonneg=True)
    if scenario in ("first_order_homogeneous", "second_order_homogeneous"):
        if xi_scale != 0.0:
            raise ConfigError(f"{scenario} forces xi_scale = 0")
    if scenario in ("first_order_locking", "practical_consensus_sweep"):
        if xi_scale <= 0.0:
            raise ConfigError(f"{scenario} needs xi_scale > 0")

    gamma = _num("gamma", default=1.0, positive=True)
    eta = _num("eta", default=1.0, positive=True)
    m0 = _num("m0", default=1.0, positive=True)
    seed = _int("seed", default=0, minimum=0)

    if scenario == "practical_consensus_sweep":
        dt = horizon = None
        record_every = None
    else:
        dt = _num("dt", positive=True)
        if dt is None:
            dt = default_dt(kappa, mass, gamma)
        horizon = _num("horizon", positive=True)
        record_every = _int("record_every", default=100)
        if horizon is not None and horizon <= dt:
            raise ConfigError("horizon must exceed dt")

    diameter0 = _num("diameter0", default=1.0, positive=True)
    if diameter0 >= 2.0:
        raise ConfigError("diameter0 must be below 2")
    vel_scale = _num("vel_scale", default=0.0, nonneg=True)
    window = _num("window", positive=True) if "window" in merged else None
    output_dir = merged.get("output_dir", f"runs/{scenario}")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir must be a non-empty string")

    return ScenarioConfig(
        scenario=scenario, n=n, p=p, count=count, kappa=kappa, m=mass,
        gamma=gamma, xi_scale=xi_scale, eta=eta, m0=m0, seed=seed, dt=dt,
        horizon=horizon, record_every=record_every, output_dir=output_dir,
        diameter0=diameter0, vel_scale=vel_scale, window=window,
    )


def output_root(cfg: ScenarioConfig) -> Path:
    """Resolve the run's output directory, honouring the env override."""
    base = os.environ.get(OUTPUT_ENV)
    out = Path(cfg.output_dir)
    if base:
        out = Path(base) / out.relative_to(out.anchor) if out.is_absolute() else Path(base) / out
    return out


# --- checks and reports -----------------------------------------------------


@dataclass
class Check:
    """One assertion: measured value against its threshold."""

    name: str
    claim: str
    value: float
    threshold: float
    op: str
    passed: bool

    def __post_init__(self):
        # numpy scalars sneak in from comparisons; JSON needs plain types
        self.value = float(self.value)
        self.threshold = float(self.threshold)
        self.passed = bool(self.passed)


def _le(name, claim, value, threshold) -> Check:
    return Check(name, claim, float(value), float(threshold), "<=",
                 bool(value <= threshold))


def _lt(name, claim, value, threshold) -> Check:
    return Check(name, claim, float(value), float(threshold), "<",
                 bool(value < threshold))


def _gt(name, claim, value, threshold) -> Check:
    return Check(name, claim, float(value), float(threshold), ">",
                 bool(value > threshold))


@dataclass
class ScenarioReport:
    scenario: str
    config: dict
    checks: list[Check]
    artifacts: list[str] = field(default_factory=list)
    repairs: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "passed": self.passed,
            "repairs": self.repairs,
            "assertions": [dataclasses.asdict(c) for c in self.checks],
            "artifacts": self.artifacts,
        }

    def write(self, out_dir: Path) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "verdict.json"
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        return path


# --- initial data -----------------------------------------------------------


def uniform_states(n, p, count, rng) -> np.ndarray:
    """Independent draws, one random frame per agent."""
    return np.stack([random_stiefel(n, p, rng) for _ in range(count)])


def clustered_states(n, p, count, rng, diameter_target=1.0) -> np.ndarray:
    """Frames scattered around a random centre with a prescribed diameter.

    Tangent perturbations of equal size are retracted back to the manifold;
    one rescaling pass lands the realised diameter within a few percent of
    the target (and never above 2x the perturbation size).
    """
    center = random_stiefel(n, p, rng)
    raw = rng.standard_normal((count, n, p))
    dirs = project_tangent(raw, center)
    dirs /= np.linalg.norm(dirs, axis=(-2, -1), keepdims=True)
    radius = diameter_target / 2.0
    states = None
    for _ in range(3):
        states = np.stack([retract_polar(center + radius * d) for d in dirs])
        got, _ = diameter(Ensemble(states))
        if got == 0.0 or abs(got - diameter_target) < 1e-3 * diameter_target:
            break
        radius *= diameter_target / got
    return states


def _tangent_velocities(states, rng, scale) -> np.ndarray:
    """Admissible velocities with per-agent norm exactly scale."""
    raw = rng.standard_normal(states.shape)
    proj = project_tangent(raw, states)
    raw /= np.linalg.norm(proj, axis=(-2, -1), keepdims=True)
    return make_tangent_velocity(states, raw, scale)


def _heterogeneous_freqs(count, p, scale, rng, spread=1.0) -> np.ndarray:
    """Per-agent rotations with sup norm exactly scale.

    spread < 1 makes the agents share a dominant common rotation, with only
    a spread-sized fraction differing between them.
    """
    common = random_skew(p, 1.0, rng)
    if np.linalg.norm(common) > 0:
        common /= np.linalg.norm(common)
    freqs = np.stack(
        [common + spread * random_skew(p, 1.0, rng) for _ in range(count)]
    )
    sup = np.linalg.norm(freqs, axis=(-2, -1)).max()
    return freqs * (scale / sup)


def _spawn(seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


# --- scenario drivers -------------------------------------------------------


def _centered_diff(vals: np.ndarray, h: float) -> np.ndarray:
    return (vals[2:] - vals[:-2]) / (2.0 * h)


def _run_first_order_homogeneous(cfg: ScenarioConfig, out: Path) -> ScenarioReport:
    rng_s, = _spawn(cfg.seed, 1)
    states = clustered_states(cfg.n, cfg.p, cfg.count, rng_s, cfg.diameter0)
    params = ModelParams(kappa=cfg.kappa, freqs=zero_freqs(cfg.count, cfg.p))
    top = all_to_all(cfg.count)
    stats = compute_stats(top)
    traj = integrate(
        Ensemble(states), params, top,
        IntegratorConfig(cfg.dt, cfg.horizon, cfg.record_every),
    )
    d = traj.column("diameter")
    h = float(traj.times[1] - traj.times[0])
    dsq = d**2
    rate = _centered_diff(dsq, h)
    bound = -(cfg.kappa * stats.a_min / 4.0) * (2.0 - dsq[1:-1]) * dsq[1:-1]
    checks = [
        _lt("initial_diameter", "initial diameter below sqrt(2)",
            d[0], math.sqrt(2.0)),
        _le("diameter_monotone",
            "largest per-sample diameter increase at most 1e-10",
            float(np.max(np.diff(d))), 1e-10),
        _le("diameter_rate",
            "centred d(D^2)/dt at most -(kappa a_min/4)(2-D^2)D^2 + 1e-4",
            float(np.max(rate - bound)), 1e-4),
        _le("final_diameter", "diameter at the horizon at most 1e-6",
            d[-1], 1e-6),
        _le("max_drift", "orthonormality drift at most 1e-8 throughout",
            traj.max_drift, 1e-8),
    ]
    csv = out / "first_order_homogeneous.csv"
    out.mkdir(parents=True, exist_ok=True)
    write_timeseries(csv, traj.records)
    return ScenarioReport(cfg.scenario, cfg.to_dict(), checks, [csv.name],
                          traj.repairs)


def _run_first_order_locking(cfg: ScenarioConfig, out: Path) -> ScenarioReport:
    rng_f, rng_a, rng_b = _spawn(cfg.seed, 3)
    freqs = _heterogeneous_freqs(cfg.count, cfg.p, cfg.xi_scale, rng_f,
                                 spread=_LOCK_SPREAD)
    params = ModelParams(kappa=cfg.kappa, freqs=freqs)
    top = all_to_all(cfg.count)
    stats = compute_stats(top)
    th = lock_thresholds(cfg.p, stats.a_min, stats.a_max, stats.gap,
                         params.freq_sup, cfg.kappa)
    window = cfg.window if cfg.window is not None else 0.3
    icfg = IntegratorConfig(cfg.dt, cfg.horizon, cfg.record_every)

    runs = []
    for rng in (rng_a, rng_b):
        states = clustered_states(cfg.n, cfg.p, cfg.count, rng, cfg.diameter0)
        runs.append(integrate(Ensemble(states), params, top, icfg))
    traj_a, traj_b = runs

    d_a = traj_a.column("diameter")
    d_b = traj_b.column("diameter")
    h = float(traj_a.times[1] - traj_a.times[0])

    # entrance into the trap region, then contraction of the relative spread
    inside = np.flatnonzero((d_a < th.alpha) & (d_b < th.alpha))
    entered = len(inside) > 0
    checks = [
        _gt("coupling_above_threshold",
            "kappa exceeds the locking threshold kappa_star",
            cfg.kappa, th.kappa_star),
        _lt("initial_diameter_a", "run A initial diameter below beta",
            d_a[0], th.beta),
        _lt("initial_diameter_b", "run B initial diameter below beta",
            d_b[0], th.beta),
        Check("trap_entrance", "both runs reach diameter below alpha",
              float(entered), 1.0, "==", entered),
    ]

    rate = 2.0 * cfg.kappa * (stats.gap
                              - 2.0 * stats.a_max * math.sqrt(cfg.p) * th.alpha)
    if entered:
        k0 = int(inside[0])
        dists = np.array(
            [inter_diameter(traj_a.ensembles[k], traj_b.ensembles[k])
             for k in range(len(traj_a.times))]
        )
        seg = slice(max(k0, 1), len(dists) - 1)
        fd = (dists[seg.start + 1:seg.stop + 1] - dists[seg.start - 1:seg.stop - 1]) / (2 * h)
        margin = fd + rate * dists[seg]
        fd_tol = 2.0 * h**2 * cfg.kappa**3 * float(np.max(dists[seg])) + 1e-12
        checks.append(_le(
            "relative_contraction",
            "centred d/dt of the relative spread at most "
            "-2 kappa (gap - 2 a_max sqrt(p) alpha) x spread + O(h^2)",
            float(np.max(margin)), fd_tol,
        ))
        start_t = float(traj_a.times[k0])
        # snap the window start onto the window grid
        start_t = math.ceil(start_t / window - 1e-9) * window
    else:
        start_t = 0.0

    report = phase_lock_detector(traj_a, window, tol=1e-6, start_time=start_t)
    rho_theory = math.exp(-rate * window)
    ratio = report.rho / rho_theory if rho_theory > 0 else math.inf
    factor = max(ratio, 1.0 / ratio) if ratio > 0 else math.inf
    final_delta = float(report.deltas[-1])
    rv = reduced_velocity(traj_a.ensembles[-1], params, top)
    vel_mismatch = float(
        np.linalg.norm(rv[:, None] - rv[None, :], axis=(-2, -1)).max()
    )
    checks += [
        Check("locked", "windowed relative-position changes certify locking",
              float(report.locked), 1.0, "==", report.locked),
        _lt("window_ratio", "fitted per-window contraction ratio below one",
            report.rho, 1.0),
        _le("window_ratio_matches_rate",
            "fitted ratio within a factor 2 of exp(-rate x window)",
            factor, 2.0),
        _le("final_delta", "final window change at most 1e-6",
            final_delta, 1e-6),
        _le("velocity_sync",
            "pairwise mismatch of S^T dS/dt at most 10x the final window change",
            vel_mismatch, 10.0 * final_delta),
        _le("max_drift", "orthonormality drift at most 1e-8 throughout",
            max(traj_a.max_drift, traj_b.max_drift), 1e-8),
    ]
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for tag, tr in (("a", traj_a), ("b", traj_b)):
        csv = out / f"first_order_locking_{tag}.csv"
        write_timeseries(csv, tr.records)
        names.append(csv.name)
    return ScenarioReport(cfg.scenario, cfg.to_dict(), checks, names,
                          traj_a.repairs + traj_b.repairs)


def _run_second_order_homogeneous(cfg: ScenarioConfig, out: Path) -> ScenarioReport:
    rng_s, rng_v = _spawn(cfg.seed, 2)
    states = clustered_states(cfg.n, cfg.p, cfg.count, rng_s, cfg.diameter0)
    vels = _tangent_velocities(states, rng_v, cfg.vel_scale)
    params = ModelParams(kappa=cfg.kappa, freqs=zero_freqs(cfg.count, cfg.p),
                         mass=cfg.m, friction=cfg.gamma)
    top = all_to_all(cfg.count)
    traj = integrate(Ensemble(states, vels), params, top,
                     IntegratorConfig(cfg.dt, cfg.horizon, cfg.record_every))
    energy = traj.column("total")
    g = traj.column("avg_sq_dist")
    _, residuals = spread_inequality_residuals(traj, params, top)
    vreport = velocity_bound_check(traj, params, top)
    checks = [
        _le("final_velocity_sup",
            "largest velocity norm at the horizon at most 1e-5",
            float(traj.column("vel_sup")[-1]), 1e-5),
        _le("final_spread", "mean squared spread at the horizon at most 1e-5",
            float(g[-1]), 1e-5),
        _le("energy_monotone",
            "per-sample energy increase at most 1e-10 per step (no rotations)",
            float(np.max(np.diff(energy))), 1e-10 * cfg.record_every),
        Check("spread_inequality",
              "damped spread inequality residuals at least -1e-6",
              float(np.min(residuals)), -1e-6, ">=",
              bool(np.min(residuals) >= -1e-6)),
        Check("velocity_bound",
              "velocity sup stays under its a-priori ceiling",
              float(vreport.sup_observed), float(vreport.bound + 1e-8), "<=",
              vreport.ok),
        _le("max_drift", "orthonormality drift at most 1e-8 throughout",
            traj.max_drift, 1e-8),
    ]
    out.mkdir(parents=True, exist_ok=True)
    csv = out / "second_order_homogeneous.csv"
    write_timeseries(csv, traj.records)
    return ScenarioReport(cfg.scenario, cfg.to_dict(), checks, [csv.name],
                          traj.repairs)


def _sweep_member(cfg: ScenarioConfig, kappa: float, freqs, rng_s, rng_v):
    mass = cfg.m0 / kappa ** (1.0 + cfg.eta)
    dt = default_dt(kappa, mass, cfg.gamma)
    horizon = max(0.3, 40.0 / kappa)
    steps = int(round(horizon / dt))
    record_every = max(1, steps // 200)
    states = clustered_states(cfg.n, cfg.p, cfg.count, rng_s, cfg.diameter0)
    vels = _tangent_velocities(states, rng_v, cfg.vel_scale)
    params = ModelParams(kappa=kappa, freqs=freqs, mass=mass,
                         friction=cfg.gamma)
    top = all_to_all(cfg.count)
    traj = integrate(Ensemble(states, vels), params, top,
                     IntegratorConfig(dt, horizon, record_every))
    g = traj.column("avg_sq_dist")
    tail = g[int(0.75 * len(g)):]
    stats = compute_stats(top)
    ceiling = (params.freq_sup + kappa * stats.a_max * math.sqrt(cfg.p)) / cfg.gamma
    v0 = float(traj.column("vel_sup")[0])
    return traj, float(np.mean(tail)), v0 / ceiling


def _run_practical_consensus_sweep(cfg: ScenarioConfig, out: Path) -> ScenarioReport:
    kappas = list(cfg.kappa)
    rngs = _spawn(cfg.seed, 1 + 2 * len(kappas))
    freqs = _heterogeneous_freqs(cfg.count, cfg.p, cfg.xi_scale, rngs[0])
    tails, premise_ratios, drifts, names, repairs = [], [], [], [], 0
    out.mkdir(parents=True, exist_ok=True)
    for i, kappa in enumerate(kappas):
        traj, tail, ratio = _sweep_member(
            cfg, kappa, freqs, rngs[1 + 2 * i], rngs[2 + 2 * i]
        )
        tails.append(tail)
        premise_ratios.append(ratio)
        drifts.append(traj.max_drift)
        repairs += traj.repairs
        csv = out / f"practical_consensus_kappa_{kappa:g}.csv"
        write_timeseries(csv, traj.records)
        names.append(csv.name)
    tails_arr = np.array(tails)
    slope = float(np.polyfit(np.log(kappas), np.log(tails_arr), 1)[0])
    checks = [
        _lt("initial_velocity_premise",
            "initial velocity sup below (freq_sup + kappa a_max sqrt(p))/gamma",
            float(max(premise_ratios)), 1.0),
        _lt("tail_spread_monotone",
            "tail-averaged spread strictly decreases along the kappa ladder",
            float(np.max(tails_arr[1:] / tails_arr[:-1])), 1.0),
        _le("tail_spread_slope",
            "log-log slope of tail spread versus kappa at most -0.8",
            slope, -0.8),
        _le("max_drift", "orthonormality drift at most 1e-8 in every run",
            float(max(drifts)), 1e-8),
    ]
    report = ScenarioReport(cfg.scenario, cfg.to_dict(), checks, names, repairs)
    report.checks.append(Check(
        "tail_spread_values",
        "tail-averaged spread per kappa: "
        + ", ".join(f"{k:g}: {t:.3e}" for k, t in zip(kappas, tails)),
        slope, 0.0, "info", True,
    ))
    return report


def _run_invariance_checks(cfg: ScenarioConfig, out: Path) -> ScenarioReport:
    rngs = _spawn(cfg.seed, 8)
    top = all_to_all(cfg.count)
    checks: list[Check] = []

    # shared first-order setup with heterogeneous rotations
    states = clustered_states(cfg.n, cfg.p, cfg.count, rngs[0], cfg.diameter0)
    freqs = _heterogeneous_freqs(cfg.count, cfg.p, cfg.xi_scale, rngs[1])
    params1 = ModelParams(kappa=cfg.kappa, freqs=freqs)
    icfg = IntegratorConfig(cfg.dt, cfg.horizon, cfg.record_every)
    base1 = integrate(Ensemble(states), params1, top, icfg)

    # left translation: conjugating the initial data by a fixed orthogonal
    # matrix commutes with the flow
    left = random_stiefel(cfg.n, cfg.n, rngs[2])
    moved = integrate(Ensemble(left @ states), params1, top, icfg)
    dev = float(np.max(np.linalg.norm(
        moved.ensembles[-1].states - left @ base1.ensembles[-1].states,
        axis=(-2, -1))))
    checks.append(_le("left_translation_first",
                      "first-order flow commutes with left translation (1e-8)",
                      dev, 1e-8))

    # splitting: a common rotation is absorbed by right translation
    common = random_skew(cfg.p, 0.2, rngs[3])
    params_c = ModelParams(kappa=cfg.kappa,
                           freqs=np.tile(common, (cfg.count, 1, 1)))
    params_0 = ModelParams(kappa=cfg.kappa, freqs=zero_freqs(cfg.count, cfg.p))
    with_rot = integrate(Ensemble(states), params_c, top, icfg)
    without = integrate(Ensemble(states), params_0, top, icfg)
    recon = split_transform(without.ensembles[-1].states, common,
                            float(with_rot.times[-1]), order=1)
    dev = float(np.max(np.linalg.norm(
        with_rot.ensembles[-1].states - recon, axis=(-2, -1))))
    checks.append(_le("splitting_first",
                      "common rotation splits off the first-order flow (1e-8)",
                      dev, 1e-8))

    # second-order versions of both properties
    vels = _tangent_velocities(states, rngs[4], cfg.vel_scale)
    params2 = ModelParams(kappa=cfg.kappa, freqs=freqs, mass=cfg.m,
                          friction=cfg.gamma)
    base2 = integrate(Ensemble(states, vels), params2, top, icfg)
    moved2 = integrate(Ensemble(left @ states, left @ vels), params2, top, icfg)
    dev = float(np.max(np.linalg.norm(
        moved2.ensembles[-1].states - left @ base2.ensembles[-1].states,
        axis=(-2, -1))))
    checks.append(_le("left_translation_second",
                      "inertial flow commutes with left translation (1e-8)",
                      dev, 1e-8))

    params2_c = ModelParams(kappa=cfg.kappa,
                            freqs=np.tile(common, (cfg.count, 1, 1)),
                            mass=cfg.m, friction=cfg.gamma)
    params2_0 = ModelParams(kappa=cfg.kappa, freqs=zero_freqs(cfg.count, cfg.p),
                            mass=cfg.m, friction=cfg.gamma)
    with_rot2 = integrate(Ensemble(states, vels), params2_c, top, icfg)
    shifted_v = vels - states @ (common / cfg.gamma)
    without2 = integrate(Ensemble(states, shifted_v), params2_0, top, icfg)
    recon = split_transform(without2.ensembles[-1].states, common,
                            float(with_rot2.times[-1]), order=2,
                            friction=cfg.gamma)
    dev = float(np.max(np.linalg.norm(
        with_rot2.ensembles[-1].states - recon, axis=(-2, -1))))
    checks.append(_le("splitting_second",
                      "common rotation splits off the inertial flow (1e-8)",
                      dev, 1e-8))

    # sphere reduction: p=1 frames are unit vectors
    rng = rngs[5]
    dev = 0.0
    top_s = all_to_all(6)
    for _ in range(10):
        pts = uniform_states(3, 1, 6, rng)
        ens = Ensemble(pts)
        par = ModelParams(kappa=1.3, freqs=zero_freqs(6, 1))
        lhs = rhs_first_order(ens, par, top_s)[..., 0]
        rhs = rhs_sphere(pts[..., 0], np.zeros((6, 3, 3)), top_s, 1.3)
        dev = max(dev, float(np.max(np.abs(lhs - rhs))))
    checks.append(_le("sphere_reduction",
                      "p=1 field equals the unit-sphere field (1e-12)",
                      dev, 1e-12))

    # rotation-group reduction: p=n frames are orthogonal matrices
    dev = 0.0
    for _ in range(10):
        rots = uniform_states(3, 3, 6, rng)
        ens = Ensemble(rots)
        par = ModelParams(kappa=0.7, freqs=zero_freqs(6, 3))
        lhs = rhs_first_order(ens, par, top_s)
        rhs = rhs_so_n(rots, np.zeros((6, 3, 3)), top_s, 0.7)
        dev = max(dev, float(np.max(np.abs(lhs - rhs))))
    checks.append(_le("rotation_reduction",
                      "p=n field equals the rotation-group field (1e-12)",
                      dev, 1e-12))

    # phase reduction: p=1, n=2 frames are angles
    top_k = all_to_all(5)
    angles = rng.uniform(0.0, 2.0 * math.pi, 5)
    lift = np.stack([np.cos(angles), np.sin(angles)], axis=1)[..., None]
    par_k = ModelParams(kappa=cfg.kappa, freqs=zero_freqs(5, 1))
    field_frames = rhs_first_order(Ensemble(lift), par_k, top_k)
    rates = rhs_kuramoto(angles, np.zeros(5), top_k, cfg.kappa)
    tangent = np.stack([-np.sin(angles), np.cos(angles)], axis=1)[..., None]
    dev = float(np.max(np.abs(field_frames - rates[:, None, None] * tangent)))
    checks.append(_le("phase_reduction_field",
                      "p=1, n=2 field matches the lifted phase field (1e-10)",
                      dev, 1e-10))

    kur_cfg = IntegratorConfig(cfg.dt, 10.0, cfg.record_every)
    traj_frames = integrate(Ensemble(lift), par_k, top_k, kur_cfg)
    th = angles.copy()
    dev = 0.0
    step = kur_cfg.dt
    for k in range(1, kur_cfg.steps + 1):
        k1 = rhs_kuramoto(th, np.zeros(5), top_k, cfg.kappa)
        k2 = rhs_kuramoto(th + 0.5 * step * k1, np.zeros(5), top_k, cfg.kappa)
        k3 = rhs_kuramoto(th + 0.5 * step * k2, np.zeros(5), top_k, cfg.kappa)
        k4 = rhs_kuramoto(th + step * k3, np.zeros(5), top_k, cfg.kappa)
        th = th + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % kur_cfg.record_every == 0 or k == kur_cfg.steps:
            idx = traj_frames.sample_index(k * step)
            lifted = np.stack([np.cos(th), np.sin(th)], axis=1)[..., None]
            dev = max(dev, float(np.max(np.abs(
                traj_frames.ensembles[idx].states - lifted))))
    checks.append(_le("phase_reduction_trajectory",
                      "p=1, n=2 trajectory tracks the phase model (1e-8)",
                      dev, 1e-8))

    # reduced velocity agrees with S^T dS/dt and is antisymmetric
    ens_h = Ensemble(states)
    rv = reduced_velocity(ens_h, params1, top)
    full = rhs_first_order(ens_h, params1, top)
    dev = float(np.max(np.linalg.norm(
        rv - np.swapaxes(states, -1, -2) @ full, axis=(-2, -1))))
    checks.append(_le("reduced_velocity",
                      "S^T dS/dt equals its closed antisymmetric form (1e-12)",
                      dev, 1e-12))

    # admissibility of generated velocities
    defect = float(np.max(tangency_defect(vels, states)))
    checks.append(_le("velocity_admissible",
                      "generated velocities satisfy the tangency constraint "
                      "(1e-12)", defect, 1e-12))

    # velocity ceiling along the inertial run
    vrep = velocity_bound_check(base2, params2, top)
    checks.append(Check("velocity_bound",
                        "velocity sup stays under its a-priori ceiling",
                        float(vrep.sup_observed), float(vrep.bound + 1e-8),
                        "<=", vrep.ok))

    # restarting from a recorded sample reproduces the tail
    t_mid = float(traj_frames.times[len(traj_frames.times) // 2])
    idx = traj_frames.sample_index(t_mid)
    rest_cfg = IntegratorConfig(cfg.dt, 10.0 - t_mid, cfg.record_every)
    restart = integrate(traj_frames.ensembles[idx], par_k, top_k, rest_cfg)
    dev = float(np.max(np.abs(restart.ensembles[-1].states
                              - traj_frames.ensembles[-1].states)))
    checks.append(_le("time_shift",
                      "restarting from a recorded sample reproduces the tail "
                      "(1e-10)", dev, 1e-10))

    # the inertial field preserves the tangency constraint
    s0 = uniform_states(cfg.n, cfg.p, cfg.count, rngs[6])
    v0 = _tangent_velocities(s0, rngs[7], 0.7)
    _, accel = rhs_second_order(Ensemble(s0, v0), params2, top)
    resid = (np.swapaxes(accel, -1, -2) @ s0
             + np.swapaxes(s0, -1, -2) @ accel
             + 2.0 * np.swapaxes(v0, -1, -2) @ v0)
    checks.append(_le("constraint_propagation",
                      "time derivative of the tangency residual vanishes "
                      "(1e-10)",
                      float(np.max(np.linalg.norm(resid, axis=(-2, -1)))),
                      1e-10))

    out.mkdir(parents=True, exist_ok=True)
    names = []
    for tag, tr in (("first_order", base1), ("second_order", base2)):
        csv = out / f"invariance_{tag}.csv"
        write_timeseries(csv, tr.records)
        names.append(csv.name)
    return ScenarioReport(cfg.scenario, cfg.to_dict(), checks, names,
                          base1.repairs + base2.repairs)


_RUNNERS = {
    "first_order_homogeneous": _run_first_order_homogeneous,
    "first_order_locking": _run_first_order_locking,
    "second_order_homogeneous": _run_second_order_homogeneous,
    "practical_consensus_sweep": _run_practical_consensus_sweep,
    "invariance_checks": _run_invariance_checks,
}


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    """Execute a resolved scenario config; writes artifacts, returns the report."""
    out = output_root(cfg)
    report = _RUNNERS[cfg.scenario](cfg, out)
    report.write(out)
    return report
