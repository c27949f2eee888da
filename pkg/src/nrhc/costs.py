"""Consensus performance indices and the growing-horizon schedule.

Weighted norms are quadratic forms, ``|v|^2_P = v' P v``.  The running cost
carries a factor 1/2 and the terminal cost does not, exactly as the consensus
index is usually written:

    J_i = sum_j a_ij |x_i(T) - x_j(T)|^2_{Q_N}  [+ a_i0 |x_i(T) - x_0(T)|^2_{Q_0}]
          + 1/2 int (sum_j a_ij |x_i - x_j|^2_Q + |u_i|^2_R) dtau
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .topology import Topology, neighbors


class CostError(ValueError):
    """Invalid weights or horizon parameters."""


def _spd(name: str, M) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim == 1:
        M = np.diag(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise CostError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise CostError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > 1e-12 * scale:
        raise CostError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise CostError(f"{name} is not positive definite") from None
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class CostSpec:
    """Weights of one agent's local problem.  1-D inputs are read as diagonals."""

    Q: np.ndarray
    Q_N: np.ndarray
    R: np.ndarray
    Q_0: np.ndarray | None = None
    use_terminal_cost: bool = True

    def __post_init__(self):
        object.__setattr__(self, "Q", _spd("Q", self.Q))
        object.__setattr__(self, "Q_N", _spd("Q_N", self.Q_N))
        object.__setattr__(self, "R", _spd("R", self.R))
        if self.Q_0 is not None:
            object.__setattr__(self, "Q_0", _spd("Q_0", self.Q_0))
        n = self.Q.shape[0]
        for name in ("Q_N", "R", "Q_0"):
            M = getattr(self, name)
            if M is not None and M.shape != (n, n):
                raise CostError(f"{name} has shape {M.shape}, expected {(n, n)}")

    @property
    def state_dim(self) -> int:
        return self.Q.shape[0]

    @property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    @classmethod
    def identity(cls, n: int, leader_weight: float | None = None, use_terminal_cost: bool = True) -> "CostSpec":
        I = np.eye(n)
        Q0 = None if leader_weight is None else leader_weight * I
        return cls(I, I, I, Q0, use_terminal_cost)


@dataclass(frozen=True)
class HorizonSchedule:
    """Horizon length ``T(t) = T_f (1 - exp(-alpha t))``."""

    T_f: float
    alpha: float

    def __post_init__(self):
        if not (self.T_f > 0 and math.isfinite(self.T_f)):
            raise CostError(f"T_f must be positive, got {self.T_f}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise CostError(f"alpha must be positive, got {self.alpha}")


def horizon(schedule: HorizonSchedule, t: float) -> tuple[float, float]:
    """Return ``(T(t), dT/dt)``, both analytic."""
    if t < 0:
        raise ValueError(f"horizon undefined for negative time {t}")
    decay = math.exp(-schedule.alpha * t)
    return schedule.T_f * -math.expm1(-schedule.alpha * t), schedule.T_f * schedule.alpha * decay


def _quad(v: np.ndarray, P: np.ndarray) -> float:
    return float(v @ P @ v)


def _neighbor_states(topology: Topology, i: int, neighbor_states: Mapping[int, np.ndarray]):
    out = []
    for j in sorted(neighbors(topology, i)):
        if j not in neighbor_states:
            raise KeyError(f"state of neighbor {j} of agent {i} not supplied")
        out.append((topology.adjacency[i, j], np.asarray(neighbor_states[j], dtype=float)))
    return out


def stage_cost(spec: CostSpec, topology: Topology, i: int, x_i, neighbor_states: Mapping[int, np.ndarray], u_i) -> float:
    """Integrand ``L_i = 1/2 (sum_j a_ij |x_i - x_j|^2_Q + |u_i|^2_R)``."""
    x_i = np.asarray(x_i, dtype=float)
    u_i = np.asarray(u_i, dtype=float)
    total = sum(a * _quad(x_i - x_j, spec.Q) for a, x_j in _neighbor_states(topology, i, neighbor_states))
    return 0.5 * (total + _quad(u_i, spec.R))


def terminal_cost(
    spec: CostSpec,
    topology: Topology,
    i: int,
    x_i,
    neighbor_states: Mapping[int, np.ndarray],
    leader_state=None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Terminal penalty ``phi_i`` with its gradient and Hessian in ``x_i``.

    Neighbor and leader states are treated as constants, so the Hessian
    ``2 (sum_j a_ij) Q_N + 2 a_i0 Q_0`` does not depend on the state.
    The leader term is active when the cost has ``Q_0`` and agent ``i`` has a
    positive leader weight.
    """
    x_i = np.asarray(x_i, dtype=float)
    n = x_i.shape[0]
    phi, grad, hess = 0.0, np.zeros(n), np.zeros((n, n))
    if not spec.use_terminal_cost:
        return phi, grad, hess
    for a, x_j in _neighbor_states(topology, i, neighbor_states):
        diff = x_i - x_j
        phi += a * _quad(diff, spec.Q_N)
        grad += 2.0 * a * (spec.Q_N @ diff)
        hess += 2.0 * a * spec.Q_N
    a0 = topology.leader_weights()[i]
    if spec.Q_0 is not None and a0 > 0:
        if leader_state is None:
            raise ValueError(f"agent {i} is connected to the leader but no leader state was given")
        diff = x_i - np.asarray(leader_state, dtype=float)
        phi += a0 * _quad(diff, spec.Q_0)
        grad += 2.0 * a0 * (spec.Q_0 @ diff)
        hess += 2.0 * a0 * spec.Q_0
    return phi, grad, hess
