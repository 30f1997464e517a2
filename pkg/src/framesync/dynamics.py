"""Right-hand sides of the frame consensus flows.

First-order model for agent i with frame S_i, natural rotation Xi_i (p x p
antisymmetric) and coupling strength kappa over weights a_ik:

    dS_i/dt = S_i Xi_i
              + (kappa/N) sum_k a_ik [S_k - (S_i S_i^T S_k + S_i S_k^T S_i)/2]

Second-order (inertial) model with mass m and friction gamma:

    m d2S_i/dt2 = -m S_i (dS_i^T dS_i) - gamma dS_i + S_i Xi_i
                  + (m/gamma) (2 dS_i Xi_i - S_i Xi_i S_i^T dS_i
                               + S_i dS_i^T S_i Xi_i)
                  + same coupling sum as first order

Both flows keep S_i^T S_i = I_p invariant; the second-order flow additionally
preserves tangency of the velocity when it holds initially.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, TangencyError
from .network import Topology
from .stiefel import exp_skew, project_tangent, skew, sym, tangency_defect

__all__ = [
    "Ensemble",
    "ModelParams",
    "zero_freqs",
    "rhs_first_order",
    "rhs_second_order",
    "reduced_velocity",
    "rhs_sphere",
    "rhs_kuramoto",
    "rhs_so_n",
    "split_transform",
    "make_tangent_velocity",
]


def _t(x):
    return np.swapaxes(x, -1, -2)


@dataclass
class Ensemble:
    """Stacked agent states (N, n, p), with velocities for the inertial model."""

    states: np.ndarray
    velocities: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 3:
            raise DimensionError(f"states must be (N, n, p), got shape {s.shape}")
        if s.shape[1] < s.shape[2] or s.shape[2] < 1:
            raise DimensionError(f"frames must be tall, got {s.shape[1]}x{s.shape[2]}")
        self.states = s
        if self.velocities is not None:
            v = np.asarray(self.velocities, dtype=float)
            if v.shape != s.shape:
                raise DimensionError(
                    f"velocities shape {v.shape} must match states {s.shape}"
                )
            self.velocities = v

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.states.shape[1]

    @property
    def frame_dim(self) -> int:
        return self.states.shape[2]

    @property
    def second_order(self) -> bool:
        return self.velocities is not None

    def copy(self) -> "Ensemble":
        v = None if self.velocities is None else self.velocities.copy()
        return Ensemble(self.states.copy(), v)


def zero_freqs(n_agents: int, p: int) -> np.ndarray:
    """All-zero natural rotations, the homogeneous ensemble."""
    return np.zeros((n_agents, p, p))


@dataclass
class ModelParams:
    """Coupling strength, inertia and per-agent natural rotations.

    freqs has shape (N, p, p) and every slice must be antisymmetric. mass is
    ignored by the first-order flow; friction enters only the inertial one.
    """

    kappa: float
    freqs: np.ndarray
    mass: float = 0.0
    friction: float = 1.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ParameterError(f"kappa must be nonnegative, got {self.kappa}")
        if self.mass < 0:
            raise ParameterError(f"mass must be nonnegative, got {self.mass}")
        if self.friction <= 0:
            raise ParameterError(f"friction must be positive, got {self.friction}")
        f = np.asarray(self.freqs, dtype=float)
        if f.ndim != 3 or f.shape[1] != f.shape[2]:
            raise DimensionError(f"freqs must be (N, p, p), got shape {f.shape}")
        defect = np.linalg.norm(f + _t(f), axis=(-2, -1)).max()
        if defect > 1e-12 * max(1.0, float(np.abs(f).max())):
            raise ParameterError(f"freqs must be antisymmetric (defect {defect:.3e})")
        self.freqs = f

    @property
    def freq_sup(self) -> float:
        """Largest Frobenius norm among the natural rotations."""
        return float(np.linalg.norm(self.freqs, axis=(-2, -1)).max())


def _check_compatible(ens: Ensemble, params: ModelParams, topology: Topology):
    n_agents = ens.count
    if topology.count != n_agents:
        raise DimensionError(
            f"topology is for {topology.count} agents, ensemble has {n_agents}"
        )
    if params.freqs.shape[0] != n_agents or params.freqs.shape[1] != ens.frame_dim:
        raise DimensionError(
            f"freqs shape {params.freqs.shape} incompatible with "
            f"{n_agents} frames of width {ens.frame_dim}"
        )


def _coupling(states: np.ndarray, weights: np.ndarray, kappa: float) -> np.ndarray:
    """(kappa/N) sum_k a_ik [S_k - (S_i S_i^T S_k + S_i S_k^T S_i)/2].

    The two correction terms together equal S_i sym(S_i^T P_i) for the
    weighted neighbour sum P_i, which is how they are evaluated.
    """
    n_agents = states.shape[0]
    pooled = (weights @ states.reshape(n_agents, -1)).reshape(states.shape)
    return (kappa / n_agents) * (pooled - states @ sym(_t(states) @ pooled))


def _first_order(states, params: ModelParams, topology: Topology):
    return states @ params.freqs + _coupling(states, topology.weights, params.kappa)


def rhs_first_order(ens: Ensemble, params: ModelParams, topology: Topology):
    """Time derivative of the states under the first-order flow, shape (N, n, p)."""
    _check_compatible(ens, params, topology)
    return _first_order(ens.states, params, topology)


def _second_order(states, velocities, params: ModelParams, topology: Topology):
    xi = params.freqs
    m, gamma = params.mass, params.friction
    st_v = _t(states) @ velocities
    force = (
        -m * (states @ (_t(velocities) @ velocities))
        - gamma * velocities
        + states @ xi
        + (m / gamma)
        * (2.0 * velocities @ xi - states @ (xi @ st_v) + states @ (_t(st_v) @ xi))
        + _coupling(states, topology.weights, params.kappa)
    )
    return force / m


def rhs_second_order(ens, params, topology, check: bool = True):
    """Velocities and accelerations under the inertial flow, each (N, n, p).

    Requires mass > 0 (use rhs_first_order for the massless model) and an
    ensemble carrying velocities that satisfy the tangency constraint.
    """
    _check_compatible(ens, params, topology)
    if params.mass <= 0:
        raise ParameterError("second-order flow needs mass > 0")
    if ens.velocities is None:
        raise ParameterError("ensemble carries no velocities")
    if check:
        scale = max(1.0, float(np.linalg.norm(ens.velocities)))
        defect = float(np.max(tangency_defect(ens.velocities, ens.states)))
        if defect > 1e-6 * scale:
            raise TangencyError(
                f"velocity tangency defect {defect:.3e} exceeds tolerance"
            )
    accel = _second_order(ens.states, ens.velocities, params, topology)
    return ens.velocities, accel


def reduced_velocity(ens: Ensemble, params: ModelParams, topology: Topology):
    """S_i^T dS_i/dt of the first-order flow, one antisymmetric p x p per agent:

    Xi_i + (kappa/2N) sum_k a_ik (S_i^T S_k - S_k^T S_i)
    """
    _check_compatible(ens, params, topology)
    states = ens.states
    n_agents = ens.count
    pooled = (topology.weights @ states.reshape(n_agents, -1)).reshape(states.shape)
    return params.freqs + (params.kappa / n_agents) * skew(_t(states) @ pooled)


def rhs_sphere(points, omegas, topology: Topology, kappa: float):
    """Unit-sphere consensus field: Omega_i x_i + (I - x_i x_i^T) local average.

    points has shape (N, n), omegas (N, n, n) antisymmetric. Uses the same
    kappa/N weighting as the frame model, whose p=1 case it reproduces.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise DimensionError(f"points must be (N, n), got shape {x.shape}")
    w = np.asarray(omegas, dtype=float)
    if w.shape != (x.shape[0], x.shape[1], x.shape[1]):
        raise DimensionError(f"omegas shape {w.shape} incompatible with {x.shape}")
    if topology.count != x.shape[0]:
        raise DimensionError("topology size mismatch")
    n_agents = x.shape[0]
    pooled = (kappa / n_agents) * (topology.weights @ x)
    spin = np.einsum("iab,ib->ia", w, x)
    return spin + pooled - x * np.sum(x * pooled, axis=1, keepdims=True)


def rhs_kuramoto(angles, rates, topology: Topology, kappa: float):
    """Classic phase model with kappa/N weighting:

    dtheta_i/dt = nu_i + (kappa/N) sum_j a_ij sin(theta_j - theta_i)
    """
    th = np.asarray(angles, dtype=float)
    nu = np.asarray(rates, dtype=float)
    if th.ndim != 1 or nu.shape != th.shape:
        raise DimensionError("angles and rates must be equal-length vectors")
    if topology.count != th.shape[0]:
        raise DimensionError("topology size mismatch")
    n_agents = th.shape[0]
    diff = np.sin(th[None, :] - th[:, None])
    return nu + (kappa / n_agents) * np.sum(topology.weights * diff, axis=1)


def rhs_so_n(rotations, omegas, topology: Topology, kappa: float):
    """Consensus field on the rotation group:

    dR_i/dt = Omega_i R_i + (kappa/N) sum_j a_ij R_i skew(R_i^T R_j)
    """
    r = np.asarray(rotations, dtype=float)
    if r.ndim != 3 or r.shape[1] != r.shape[2]:
        raise DimensionError(f"rotations must be (N, n, n), got shape {r.shape}")
    w = np.asarray(omegas, dtype=float)
    if w.shape != r.shape:
        raise DimensionError(f"omegas shape {w.shape} must match rotations {r.shape}")
    if topology.count != r.shape[0]:
        raise DimensionError("topology size mismatch")
    n_agents = r.shape[0]
    pooled = (topology.weights @ r.reshape(n_agents, -1)).reshape(r.shape)
    return w @ r + (kappa / n_agents) * (r @ skew(_t(r) @ pooled))


def split_transform(states, xi, t: float, order: int, friction: float = 1.0):
    """Right-translate an ensemble by the rotation that absorbs a common Xi.

    For order 1 returns S_i e^{t Xi}; a homogeneous-flow solution translated
    this way solves the flow with common rotation Xi. For order 2 the
    absorbing rotation is e^{(t/gamma) Xi}.
    """
    s = np.asarray(states, dtype=float)
    if order not in (1, 2):
        raise ParameterError(f"order must be 1 or 2, got {order}")
    if order == 2 and friction <= 0:
        raise ParameterError("friction must be positive")
    rate = 1.0 if order == 1 else 1.0 / friction
    return s @ exp_skew(xi, rate * t)


def make_tangent_velocity(states, raw, scale: float = 1.0):
    """Admissible velocities: scale * tangent projection of raw, per agent."""
    s = np.asarray(states, dtype=float)
    r = np.asarray(raw, dtype=float)
    if r.shape != s.shape:
        raise DimensionError(f"raw shape {r.shape} must match states {s.shape}")
    return scale * project_tangent(r, s)
