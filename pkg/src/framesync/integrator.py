"""Fixed-step RK4 time stepping with orthonormality repair.

The classical Runge-Kutta step is applied to the raw matrix ODE; nothing
inside a step knows about the manifold. After each step any agent whose
orthonormality drift exceeds config.drift_repair is snapped back by the polar
retraction (velocities are re-projected onto the new tangent space), and the
run aborts if drift ever passes config.drift_fail. Runs are deterministic:
same inputs, same floating-point result.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diagnostics
from .dynamics import Ensemble, ModelParams, rhs_first_order, rhs_second_order
from .errors import BlowUpError, DriftError, ParameterError, TangencyError
from .network import Topology
from .stiefel import frame_drift, project_tangent, retract_polar, tangency_defect

__all__ = ["IntegratorConfig", "Trajectory", "step_rk4", "integrate"]


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size, horizon and the orthonormality repair thresholds."""

    dt: float
    horizon: float
    record_every: int = 100
    drift_repair: float = 1e-9
    drift_fail: float = 1e-6

    def __post_init__(self):
        if self.dt <= 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.horizon <= self.dt:
            raise ParameterError("horizon must exceed dt")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")
        if not 0 < self.drift_repair < self.drift_fail:
            raise ParameterError("need 0 < drift_repair < drift_fail")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class Trajectory:
    """Recorded samples of a run: times, ensembles and diagnostics rows."""

    times: np.ndarray
    ensembles: list[Ensemble]
    records: list[diagnostics.DiagnosticsRecord]
    repairs: int = 0

    def column(self, name: str) -> np.ndarray:
        """One diagnostics field across all samples, NaN where undefined."""
        vals = [getattr(r, name) for r in self.records]
        return np.array([np.nan if v is None else v for v in vals])

    def sample_index(self, t: float) -> int:
        """Index of the recorded sample closest to t; must match within dt/2."""
        idx = int(np.argmin(np.abs(self.times - t)))
        return idx

    @property
    def max_drift(self) -> float:
        return float(max(r.max_drift for r in self.records))


def step_rk4(ens: Ensemble, rhs, dt: float) -> Ensemble:
    """One classical RK4 step. rhs maps an Ensemble to its time derivative:
    a states array for first-order ensembles, a (velocities, accelerations)
    pair for second-order ones. No retraction happens here.
    """
    if ens.velocities is None:
        s = ens.states
        k1 = rhs(ens)
        k2 = rhs(Ensemble(s + 0.5 * dt * k1))
        k3 = rhs(Ensemble(s + 0.5 * dt * k2))
        k4 = rhs(Ensemble(s + dt * k3))
        return Ensemble(s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    s, v = ens.states, ens.velocities
    ds1, dv1 = rhs(ens)
    ds2, dv2 = rhs(Ensemble(s + 0.5 * dt * ds1, v + 0.5 * dt * dv1))
    ds3, dv3 = rhs(Ensemble(s + 0.5 * dt * ds2, v + 0.5 * dt * dv2))
    ds4, dv4 = rhs(Ensemble(s + dt * ds3, v + dt * dv3))
    return Ensemble(
        s + (dt / 6.0) * (ds1 + 2.0 * ds2 + 2.0 * ds3 + ds4),
        v + (dt / 6.0) * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4),
    )


def _repair(ens: Ensemble, drifts: np.ndarray, tol: float) -> int:
    """Retract agents whose drift exceeds tol; returns how many were touched."""
    bad = np.flatnonzero(drifts > tol)
    for i in bad:
        ens.states[i] = retract_polar(ens.states[i])
        if ens.velocities is not None:
            ens.velocities[i] = project_tangent(ens.velocities[i], ens.states[i])
    return len(bad)


def integrate(
    ens0: Ensemble,
    params: ModelParams,
    topology: Topology,
    config: IntegratorConfig,
) -> Trajectory:
    """Run the flow selected by the ensemble kind over the configured horizon.

    Samples are recorded at t=0, every record_every-th step, and at the final
    step. The per-sample max_drift is the largest pre-repair drift seen since
    the previous sample.
    """
    ens = ens0.copy()
    drifts = frame_drift(ens.states)
    if np.max(drifts) > config.drift_repair:
        raise DriftError(0.0, int(np.argmax(drifts)), float(np.max(drifts)))
    if ens.second_order:
        if params.mass <= 0:
            raise ParameterError("ensemble has velocities but mass is zero")
        defect = float(np.max(tangency_defect(ens.velocities, ens.states)))
        if defect > 1e-9 * max(1.0, float(np.linalg.norm(ens.velocities))):
            raise TangencyError(
                f"initial velocity tangency defect {defect:.3e} too large"
            )
        rhs = lambda e: rhs_second_order(e, params, topology, check=False)
    else:
        rhs = lambda e: rhs_first_order(e, params, topology)

    dt = config.dt
    n_steps = config.steps
    times = [0.0]
    ensembles = [ens.copy()]
    records = [diagnostics.make_record(0.0, ens, params, topology, float(np.max(drifts)))]
    repairs = 0
    window_drift = 0.0

    for k in range(1, n_steps + 1):
        ens = step_rk4(ens, rhs, dt)
        if not np.isfinite(ens.states).all() or (
            ens.second_order and not np.isfinite(ens.velocities).all()
        ):
            raise BlowUpError(f"non-finite state at t={k * dt:.6g}; reduce dt")
        drifts = frame_drift(ens.states)
        worst = float(np.max(drifts))
        if worst > config.drift_fail:
            raise DriftError(k * dt, int(np.argmax(drifts)), worst)
        window_drift = max(window_drift, worst)
        if worst > config.drift_repair:
            repairs += _repair(ens, drifts, config.drift_repair)
        if k % config.record_every == 0 or k == n_steps:
            t = k * dt
            times.append(t)
            ensembles.append(ens.copy())
            records.append(
                diagnostics.make_record(t, ens, params, topology, window_drift)
            )
            window_drift = 0.0

    return Trajectory(
        times=np.array(times), ensembles=ensembles, records=records, repairs=repairs
    )
