"""Consensus and leader-tracking errors, plus closed-loop cost diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .costs import CostSpec
from .topology import Topology

if TYPE_CHECKING:
    from .simulator import TrajectoryLog


@dataclass(frozen=True)
class DisagreementReport:
    t: float
    delta: np.ndarray
    max_pairwise: float
    leader_error: np.ndarray | None = None
    cost_estimate: float | None = None


def max_pairwise(states) -> float:
    states = np.asarray(states, dtype=float)
    if states.shape[0] < 2:
        return 0.0
    return float(pdist(states).max())


def leader_error(states, leader) -> np.ndarray:
    """Euclidean distance of every follower to the leader."""
    if leader is None:
        raise ValueError("leader state required")
    states = np.asarray(states, dtype=float)
    return np.linalg.norm(states - np.asarray(leader, dtype=float), axis=-1)


def consensus_error(states, t: float = 0.0, leader=None, cost_estimate: float | None = None) -> DisagreementReport:
    """Stacked errors ``x_i - x_1`` and the largest pairwise distance."""
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[0] < 1:
        raise ValueError("need at least one agent state")
    delta = (states - states[0]).reshape(-1)
    lead = None if leader is None else leader_error(states, leader)
    return DisagreementReport(t, delta, max_pairwise(states), lead, cost_estimate)


def running_cost(log: "TrajectoryLog", costs: CostSpec | Sequence[CostSpec], topology: Topology) -> np.ndarray:
    """Trapezoid of each agent's running cost along the realized closed loop."""
    if len(log.t) == 0:
        raise ValueError("empty log")
    M = topology.n_agents
    specs = [costs] * M if isinstance(costs, CostSpec) else list(costs)
    A = topology.adjacency
    X, U = log.states, log.controls
    L = np.zeros((len(log.t), M))
    for i, s in enumerate(specs):
        diff = X[:, i, None, :] - X  # (steps, M, n)
        pair = np.einsum("kjn,nm,kjm->kj", diff, s.Q, diff) @ A[i]
        L[:, i] = 0.5 * (pair + np.einsum("kn,nm,km->k", U[:, i], s.R, U[:, i]))
    if len(log.t) == 1:
        return np.zeros(M)
    dt = np.diff(log.t)[:, None]
    return (0.5 * dt * (L[1:] + L[:-1])).sum(axis=0)


def crossing_time(t, values, threshold: float) -> float | None:
    """First time at which ``values`` drops to ``threshold`` or below."""
    values = np.asarray(values)
    hits = np.flatnonzero(values <= threshold)
    return None if hits.size == 0 else float(np.asarray(t)[hits[0]])


def monotone_violation(values, floor: float = 0.0) -> float:
    """Largest excess of a series over its running minimum, relative to that minimum.

    A series is non-increasing up to a relative band ``b`` when the result is
    at most ``b``.  Values at or below ``floor`` count as converged and are
    never a violation.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0
    run_min = np.minimum.accumulate(v)
    excess = np.zeros_like(v)
    active = (v > floor) & (run_min > 0)
    excess[active] = v[active] / run_min[active] - 1.0
    return float(excess.max())
