"""Scalar monitors, analytic thresholds and certificates for simulation runs.

Everything here is read-only: functions consume ensembles or recorded
trajectories and produce numbers that the scenario layer (and the tests)
compare against the model's guarantees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Ensemble, ModelParams
from .errors import DimensionError, ParameterError
from .network import Topology, compute_stats

__all__ = [
    "DiagnosticsRecord",
    "make_record",
    "write_timeseries",
    "diameter",
    "gram_defect",
    "g_functional",
    "energy",
    "energy_dissipation_rhs",
    "inter_diameter",
    "LockThresholds",
    "lock_thresholds",
    "gronwall_bound",
    "spread_inequality_residuals",
    "VelocityBoundReport",
    "velocity_bound_check",
    "LockReport",
    "phase_lock_detector",
    "ensemble_gram",
]

CSV_COLUMNS = ("t", "D", "Dvel", "G", "K", "L", "E", "maxDrift")
CSV_VERSION = "framesync-timeseries v1"


def _t(x):
    return np.swapaxes(x, -1, -2)


def _pairwise_sq(states: np.ndarray) -> np.ndarray:
    """Squared Frobenius distances ||S_i - S_j||_F^2, shape (N, N).

    Computed from explicit differences: no cancellation near consensus.
    """
    diff = states[:, None] - states[None, :]
    return np.sum(diff * diff, axis=(-2, -1))


def diameter(ens: Ensemble) -> tuple[float, tuple[int, int]]:
    """Largest pairwise Frobenius distance and its (i, j) pair.

    Ties resolve to the lexicographically smallest pair.
    """
    sq = _pairwise_sq(ens.states)
    flat = int(np.argmax(sq))
    i, j = divmod(flat, ens.count)
    return float(math.sqrt(sq[i, j])), (i, j)


def g_functional(ens: Ensemble) -> float:
    """Mean squared spread (1/N^2) sum_{i,j} ||S_i - S_j||_F^2."""
    sq = _pairwise_sq(ens.states)
    return float(sq.sum() / ens.count**2)


def gram_defect(ens: Ensemble) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise defects H_ij = I_p - S_i^T S_j and the traces tr(H_ij + H_ji).

    The trace array equals the squared pairwise distances exactly (in exact
    arithmetic), which the tests exploit as a cross-check.
    """
    states = ens.states
    gram = np.einsum("ius,jut->ijst", states, states)
    h = np.eye(ens.frame_dim) - gram
    trace_sum = np.trace(h, axis1=-2, axis2=-1)
    return h, trace_sum + trace_sum.T


def ensemble_gram(ens: Ensemble) -> np.ndarray:
    """All relative positions S_i^T S_j, shape (N, N, p, p)."""
    return np.einsum("ius,jut->ijst", ens.states, ens.states)


def inter_diameter(ens_a: Ensemble, ens_b: Ensemble) -> float:
    """max_{i,j} ||S_i^T S_j - T_i^T T_j||_F between two ensembles."""
    if ens_a.states.shape != ens_b.states.shape:
        raise DimensionError("ensembles must have identical shapes")
    diff = ensemble_gram(ens_a) - ensemble_gram(ens_b)
    return float(np.linalg.norm(diff, axis=(-2, -1)).max())


def energy(ens: Ensemble, params: ModelParams, topology: Topology):
    """Kinetic, interaction and total energy of a second-order ensemble.

    kinetic = (m/N) sum_i ||V_i||_F^2,
    interaction = (kappa/2N^2) sum_{i,j} a_ij ||S_i - S_j||_F^2.
    """
    if ens.velocities is None:
        raise ParameterError("energy needs velocities")
    n = ens.count
    kin = params.mass / n * float(np.sum(ens.velocities**2))
    sq = _pairwise_sq(ens.states)
    pot = params.kappa / (2 * n**2) * float(np.sum(topology.weights * sq))
    return kin, pot, kin + pot


def energy_dissipation_rhs(ens: Ensemble, params: ModelParams) -> float:
    """Exact rate of change of the total energy along the inertial flow:

    -(2 gamma / N) sum_i ||V_i||_F^2
    + (1/N) sum_i tr(V_i^T S_i Xi_i - Xi_i S_i^T V_i)
    """
    if ens.velocities is None:
        raise ParameterError("dissipation rate needs velocities")
    n = ens.count
    s, v, xi = ens.states, ens.velocities, params.freqs
    fric = -2.0 * params.friction / n * float(np.sum(v * v))
    drive = np.einsum("ist,its->", _t(v) @ s, xi) - np.einsum(
        "ist,its->", xi, _t(s) @ v
    )
    return fric + float(drive) / n


# --- recorded samples -------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    """One sampled row of run diagnostics.

    Velocity-dependent fields are None for first-order runs. total is
    kinetic + interaction by construction.
    """

    t: float
    diameter: float
    vel_sup: float | None
    avg_sq_dist: float
    kinetic: float | None
    interaction: float
    total: float | None
    max_drift: float
    freq_sup: float

    def csv_row(self) -> str:
        vals = (
            self.t,
            self.diameter,
            self.vel_sup,
            self.avg_sq_dist,
            self.kinetic,
            self.interaction,
            self.total,
            self.max_drift,
        )
        return ",".join("" if v is None else format(v, ".17g") for v in vals)


def make_record(
    t: float,
    ens: Ensemble,
    params: ModelParams,
    topology: Topology,
    max_drift: float,
) -> DiagnosticsRecord:
    d, _ = diameter(ens)
    g = g_functional(ens)
    n = ens.count
    sq = _pairwise_sq(ens.states)
    pot = params.kappa / (2 * n**2) * float(np.sum(topology.weights * sq))
    if ens.velocities is None:
        vel_sup = kin = tot = None
    else:
        vel_sup = float(np.linalg.norm(ens.velocities, axis=(-2, -1)).max())
        kin = params.mass / n * float(np.sum(ens.velocities**2))
        tot = kin + pot
    return DiagnosticsRecord(
        t=t,
        diameter=d,
        vel_sup=vel_sup,
        avg_sq_dist=g,
        kinetic=kin,
        interaction=pot,
        total=tot,
        max_drift=max_drift,
        freq_sup=params.freq_sup,
    )


def write_timeseries(path, records) -> None:
    """Write diagnostics rows as CSV with a versioned header comment."""
    with open(path, "w") as fh:
        fh.write(f"# {CSV_VERSION}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")


# --- locking thresholds -----------------------------------------------------

_R_STAR = math.sqrt(2.0 / 3.0)


@dataclass(frozen=True)
class LockThresholds:
    """Coupling threshold and the trap radii of the locking estimate.

    alpha < beta are the positive roots of r^3 - 2r + c0 with
    c0 = 2 sqrt(p) freq_sup / (kappa a_min): initial spreads below beta
    contract into the trap region below alpha. lambda_bound is the ceiling
    gap / (2 a_max sqrt(p)) that alpha stays under whenever
    kappa > kappa_star.
    """

    kappa_star: float
    alpha: float
    beta: float
    lambda_bound: float
    kappa_ok: bool


def _bisect(f, lo, hi, tol=1e-12):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (flo > 0) == (fm > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lock_thresholds(
    p: int,
    a_min: float,
    a_max: float,
    gap: float,
    freq_sup: float,
    kappa: float,
) -> LockThresholds:
    """Solve the cubic threshold data for phase locking.

    Raises ParameterError when the gap window 0 < gap < 8 p a_max^2 fails,
    or when kappa is too weak for the cubic to have positive roots
    (f(sqrt(2/3)) >= 0 with f(r) = r^3 - 2r + c0).
    """
    if p < 1:
        raise ParameterError(f"need p >= 1, got {p}")
    if not 0 < a_min <= a_max:
        raise ParameterError("need 0 < a_min <= a_max")
    if kappa <= 0 or freq_sup < 0:
        raise ParameterError("need kappa > 0 and freq_sup >= 0")
    window = 8.0 * p * a_max**2
    if not 0.0 < gap < window:
        raise ParameterError(
            f"gap {gap:.6g} outside the admissible window (0, {window:.6g})"
        )
    kappa_star = (
        16.0 * p**2 * a_max**3 * freq_sup / (a_min * (window * gap - gap**3))
    )
    lambda_bound = gap / (2.0 * a_max * math.sqrt(p))
    kappa_ok = kappa > max(
        math.sqrt(6.0 * p) / 9.0 * freq_sup / a_min, kappa_star
    )
    c0 = 2.0 * math.sqrt(p) * freq_sup / (kappa * a_min)
    if freq_sup == 0.0:
        return LockThresholds(kappa_star, 0.0, math.sqrt(2.0), lambda_bound, kappa_ok)
    f = lambda r: r**3 - 2.0 * r + c0
    f_min = f(_R_STAR)
    if f_min > 0.0:
        raise ParameterError(
            f"kappa {kappa:.6g} too weak: cubic minimum {f_min:.3e} > 0, no trap radii"
        )
    if f_min == 0.0:
        return LockThresholds(kappa_star, _R_STAR, _R_STAR, lambda_bound, kappa_ok)
    alpha = _bisect(f, 0.0, _R_STAR)
    beta = _bisect(lambda r: -f(r), _R_STAR, math.sqrt(2.0))
    return LockThresholds(kappa_star, alpha, beta, lambda_bound, kappa_ok)


# --- damped second-order comparison bound -----------------------------------


def gronwall_bound(a, b, c, eps0, y0, yprime0, t):
    """Upper envelope for nonnegative y with a y'' + b y' + c y <= eps0.

    Returns (bound evaluated at t, asymptotic bound). t may be scalar or an
    array. Overdamped (b^2 > 4ac) and underdamped (b^2 < 4ac) coefficients
    are supported; the critically damped boundary is rejected.
    """
    if min(a, b, c) <= 0:
        raise ParameterError("need a, b, c > 0")
    if eps0 < 0 or y0 < 0:
        raise ParameterError("need eps0 >= 0 and y0 >= 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("t must be nonnegative")
    disc = b * b - 4.0 * a * c
    if disc == 0.0:
        raise ParameterError("critically damped coefficients are not supported")
    if disc > 0.0:
        root = math.sqrt(disc)
        nu1 = (b + root) / (2.0 * a)
        nu2 = (b - root) / (2.0 * a)
        # the envelope's constant shift: take the conservative value eps0
        shift = eps0
        coef = (a / root) * (yprime0 + nu1 * y0 - 2.0 * eps0 / (b - root))
        bound = (
            eps0 / c
            + (y0 + shift / c) * np.exp(-nu1 * t)
            + coef * (np.exp(-nu2 * t) - np.exp(-nu1 * t))
        )
        limsup = eps0 / c
    else:
        sigma = b / (2.0 * a)
        floor = 4.0 * a * eps0 / (b * b)
        bound = floor + (y0 - floor + (sigma * y0 + yprime0 - 2.0 * eps0 / b) * t) * np.exp(
            -sigma * t
        )
        limsup = floor
    if bound.ndim == 0:
        return float(bound), float(limsup)
    return bound, float(limsup)


# --- trajectory monitors ----------------------------------------------------


def _uniform_spacing(times: np.ndarray) -> float:
    gaps = np.diff(times)
    if len(gaps) < 2:
        raise ParameterError("need at least three samples")
    h = float(gaps[0])
    if np.any(np.abs(gaps - h) > 1e-9 * h):
        raise ParameterError("monitor requires uniformly spaced samples")
    return h


def spread_inequality_residuals(trajectory, params: ModelParams, topology: Topology):
    """Residuals of the damped inequality for the mean squared spread G:

    m G'' + gamma G' + 2 kappa xi G
        <= 16 m Dvel^2 + 8 freq_sup + (16 m sqrt(p) freq_sup / gamma) Dvel

    G'' and G' are centred finite differences on the recorded grid, so the
    residuals carry an O(h^2) error; nonnegativity should be asserted up to
    a tolerance of that size. Returns (interior times, rhs - lhs).
    """
    stats = compute_stats(topology)
    if not stats.row_avg_constant:
        raise ParameterError("inequality requires a constant row average")
    if params.mass <= 0:
        raise ParameterError("inequality applies to the inertial model")
    times = trajectory.times
    h = _uniform_spacing(times)
    g = trajectory.column("avg_sq_dist")
    dvel = trajectory.column("vel_sup")
    if np.isnan(dvel).any():
        raise ParameterError("monitor needs velocity records (second-order run)")
    xi_avg = float(stats.row_avg[0])
    p = trajectory.ensembles[0].frame_dim
    gdot = (g[2:] - g[:-2]) / (2.0 * h)
    gddot = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / h**2
    lhs = params.mass * gddot + params.friction * gdot
    lhs += 2.0 * params.kappa * xi_avg * g[1:-1]
    v = dvel[1:-1]
    rhs = (
        16.0 * params.mass * v**2
        + 8.0 * params.freq_sup
        + 16.0 * params.mass * math.sqrt(p) * params.freq_sup / params.friction * v
    )
    return times[1:-1], rhs - lhs


@dataclass(frozen=True)
class VelocityBoundReport:
    ok: bool
    bound: float
    sup_observed: float
    worst_excess: float


def velocity_bound_check(
    trajectory, params: ModelParams, topology: Topology, slack: float = 1e-8
) -> VelocityBoundReport:
    """Check sup_t max_i ||V_i(t)||_F against its a-priori ceiling

    max( max_i ||V_i(0)||_F, (freq_sup + kappa a_max sqrt(p)) / gamma ).
    """
    dvel = trajectory.column("vel_sup")
    if np.isnan(dvel).any():
        raise ParameterError("velocity bound applies to second-order runs")
    stats = compute_stats(topology)
    p = trajectory.ensembles[0].frame_dim
    ceiling = (params.freq_sup + params.kappa * stats.a_max * math.sqrt(p)) / params.friction
    bound = max(float(dvel[0]), ceiling)
    sup_obs = float(dvel.max())
    return VelocityBoundReport(
        ok=sup_obs <= bound + slack,
        bound=bound,
        sup_observed=sup_obs,
        worst_excess=sup_obs - bound,
    )


@dataclass
class LockReport:
    """Outcome of windowed relative-position differencing.

    deltas[m] is the largest change of any S_i^T S_j across window m. locked
    requires a fitted geometric ratio below one over at least five windows
    and a final delta at most tol.
    """

    locked: bool
    deltas: np.ndarray
    rho: float
    window: float
    tol: float
    boundaries: np.ndarray = field(repr=False)
    limits: np.ndarray = field(repr=False)
    reason: str = ""


def phase_lock_detector(
    trajectory, window: float, tol: float, start_time: float = 0.0
) -> LockReport:
    """Detect convergence of all relative positions S_i^T S_j.

    Samples the recorded Gram matrices at boundaries start_time + m*window,
    forms the per-window sup-change delta(m), and fits a geometric ratio rho
    by least squares on log delta. Requires the trajectory grid to contain
    the boundaries and at least two windows past start_time.
    """
    times = trajectory.times
    h = _uniform_spacing(times)
    if window < 2 * h:
        raise ParameterError("window must span at least two samples")
    stride = window / h
    if abs(stride - round(stride)) > 1e-6:
        raise ParameterError("window must be a multiple of the sample spacing")
    stride = int(round(stride))
    start = start_time / h
    if abs(start - round(start)) > 1e-6:
        raise ParameterError("start_time must lie on the sample grid")
    start = int(round(start))
    idx = list(range(start, len(times), stride))
    if len(idx) < 3:
        raise ParameterError("horizon too short: need at least two windows")
    grams = [ensemble_gram(trajectory.ensembles[k]) for k in idx]
    deltas = np.array(
        [
            float(np.linalg.norm(grams[m] - grams[m - 1], axis=(-2, -1)).max())
            for m in range(1, len(grams))
        ]
    )
    floor = 1e-13
    usable = np.flatnonzero(deltas > floor)
    if len(usable) == 0:
        return LockReport(
            locked=bool(deltas[-1] <= tol),
            deltas=deltas,
            rho=0.0,
            window=window,
            tol=tol,
            boundaries=times[idx],
            limits=grams[-1],
            reason="all window changes at numerical floor",
        )
    if len(deltas) < 5:
        return LockReport(
            locked=False,
            deltas=deltas,
            rho=float("nan"),
            window=window,
            tol=tol,
            boundaries=times[idx],
            limits=grams[-1],
            reason="fewer than five windows",
        )
    # fit on the leading clean stretch, before deltas hit the floor
    last = int(usable[-1]) + 1
    ks = np.arange(last, dtype=float)
    logs = np.log(np.maximum(deltas[:last], floor))
    slope = np.polyfit(ks, logs, 1)[0]
    rho = float(np.exp(slope))
    locked = rho < 1.0 and deltas[-1] <= tol
    reason = "" if locked else f"rho={rho:.3g}, final delta={deltas[-1]:.3e}"
    return LockReport(
        locked=locked,
        deltas=deltas,
        rho=rho,
        window=window,
        tol=tol,
        boundaries=times[idx],
        limits=grams[-1],
        reason=reason,
    )
