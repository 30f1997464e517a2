"""Interaction networks: symmetric positive weight matrices and their statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError

__all__ = ["Topology", "TopologyStats", "all_to_all", "compute_stats"]


@dataclass(frozen=True)
class Topology:
    """Symmetric all-positive coupling weights a_ik for N agents.

    Every pair interacts (a_ik > 0), so the network is complete; the weights
    encode its heterogeneity.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError(f"weights must be square, got shape {w.shape}")
        if w.shape[0] < 1:
            raise DimensionError("need at least one agent")
        if not np.isfinite(w).all():
            raise ParameterError("weights must be finite")
        if not np.array_equal(w, w.T):
            raise ParameterError("weights must be exactly symmetric")
        if np.any(w <= 0.0):
            raise ParameterError("weights must be strictly positive")
        object.__setattr__(self, "weights", w)

    @property
    def count(self) -> int:
        return self.weights.shape[0]


def all_to_all(n_agents: int) -> Topology:
    """Uniform topology with every weight equal to one."""
    if n_agents < 1:
        raise DimensionError(f"need at least one agent, got {n_agents}")
    return Topology(np.ones((n_agents, n_agents)))


@dataclass(frozen=True)
class TopologyStats:
    """Scalar summaries of a weight matrix used by the contraction estimates.

    spread is the largest discrepancy max_{i,j,k} |a_ik - a_jk| between two
    rows in any column; row_avg[i] is the mean weight (1/N) sum_k a_ik; gap
    is the worst-case contraction margin
    a_min - ((N-1)/N) * (a_max + spread), which is positive only for nearly
    uniform weights.
    """

    a_min: float
    a_max: float
    spread: float
    row_avg: np.ndarray = field(repr=False)
    gap: float
    row_avg_constant: bool

    def gap_window_ok(self, p: int) -> bool:
        """Whether 0 < gap < 8 p a_max^2, the admissible window for locking."""
        return 0.0 < self.gap < 8.0 * p * self.a_max**2


def compute_stats(topology: Topology) -> TopologyStats:
    """Summary statistics of the weights; O(N^2) despite the triple quantifier."""
    w = topology.weights
    n = topology.count
    a_min = float(w.min())
    a_max = float(w.max())
    # max over (i,j,k) of |a_ik - a_jk| is the largest column range
    spread = float((w.max(axis=0) - w.min(axis=0)).max())
    row_avg = w.mean(axis=1)
    gap = a_min - (n - 1) / n * (a_max + spread)
    constant = bool(row_avg.max() - row_avg.min() <= 1e-14 * max(1.0, a_max))
    return TopologyStats(
        a_min=a_min,
        a_max=a_max,
        spread=spread,
        row_avg=row_avg,
        gap=float(gap),
        row_avg_constant=constant,
    )
