"""Communication graphs for the agent network.

A :class:`Topology` carries the weighted adjacency ``a_ij`` between agents and,
for leader-following problems, the leader weights ``a_i0``.  The two are kept
apart because they enter different cost terms; :func:`augmented_matrix` and
:meth:`Topology.from_augmented` convert to and from the packed form ``H`` in
which the leader weights sit on the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components


class TopologyError(ValueError):
    """Raised for malformed graphs (self-loops, negative weights, bad shapes)."""


@dataclass(frozen=True)
class Topology:
    adjacency: np.ndarray
    leader_adjacency: np.ndarray | None = None
    directed: bool = True
    n_agents: int = field(init=False)

    def __post_init__(self):
        A = np.array(self.adjacency, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise TopologyError(f"adjacency must be a non-empty square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise TopologyError("adjacency has non-finite entries")
        if np.any(A < 0):
            raise TopologyError("adjacency has negative weights")
        if np.any(np.diag(A) != 0):
            raise TopologyError("adjacency has a self-loop (nonzero diagonal)")
        if not self.directed and not np.array_equal(A, A.T):
            raise TopologyError("undirected topology requires a symmetric adjacency")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "n_agents", A.shape[0])

        if self.leader_adjacency is not None:
            a0 = np.array(self.leader_adjacency, dtype=float).reshape(-1)
            if a0.shape != (A.shape[0],):
                raise TopologyError(
                    f"leader adjacency must have length {A.shape[0]}, got {a0.shape[0]}"
                )
            if not np.all(np.isfinite(a0)) or np.any(a0 < 0):
                raise TopologyError("leader adjacency must be finite and nonnegative")
            a0.setflags(write=False)
            object.__setattr__(self, "leader_adjacency", a0)

    @classmethod
    def from_augmented(cls, H, directed: bool = True) -> "Topology":
        """Split a packed matrix ``H = A + diag(a_0)`` into follower and leader weights."""
        H = np.asarray(H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise TopologyError(f"augmented matrix must be square, got shape {H.shape}")
        a0 = np.diag(H).copy()
        A = H - np.diag(a0)
        return cls(A, a0, directed=directed)

    @property
    def has_leader(self) -> bool:
        return self.leader_adjacency is not None

    def leader_weights(self) -> np.ndarray:
        """Leader weights ``a_i0``; all zeros when the topology has no leader."""
        if self.leader_adjacency is None:
            return np.zeros(self.n_agents)
        return self.leader_adjacency

    def permuted(self, perm) -> "Topology":
        """Relabel agents so that new agent ``k`` is old agent ``perm[k]``."""
        perm = np.asarray(perm)
        A = self.adjacency[np.ix_(perm, perm)]
        a0 = None if self.leader_adjacency is None else self.leader_adjacency[perm]
        return Topology(A, a0, directed=self.directed)

    def to_dict(self) -> dict:
        return {
            "adjacency": self.adjacency.tolist(),
            "leader": None if self.leader_adjacency is None else self.leader_adjacency.tolist(),
            "directed": self.directed,
        }


def _check_index(topology: Topology, i: int) -> None:
    if not 0 <= i < topology.n_agents:
        raise IndexError(f"agent index {i} out of range for {topology.n_agents} agents")


def neighbors(topology: Topology, i: int) -> set[int]:
    """Agents ``j`` with ``a_ij > 0``, i.e. whose state agent ``i`` receives."""
    _check_index(topology, i)
    return {int(j) for j in np.flatnonzero(topology.adjacency[i] > 0)}


def degree_and_laplacian(topology: Topology) -> tuple[np.ndarray, np.ndarray]:
    """Return the in-degree matrix ``D = diag(sum_j a_ij)`` and ``L = D - A``."""
    A = topology.adjacency
    # sorted rows make the degree independent of how neighbors are labelled
    D = np.diag(np.sort(A, axis=1).sum(axis=1))
    return D, D - A


def is_connected(topology: Topology) -> bool:
    """Weak connectivity: a path between every pair once edge directions are ignored."""
    n, _ = connected_components(topology.adjacency > 0, directed=True, connection="weak")
    return n == 1


def is_strongly_connected(topology: Topology) -> bool:
    n, _ = connected_components(topology.adjacency > 0, directed=True, connection="strong")
    return n == 1


def leader_reaches_all(topology: Topology) -> bool:
    """True when every follower receives leader information along some directed path.

    Information flows from ``j`` to ``i`` when ``a_ij > 0``.
    """
    if topology.leader_adjacency is None:
        return False
    reached = set(np.flatnonzero(topology.leader_adjacency > 0).tolist())
    frontier = list(reached)
    A = topology.adjacency
    while frontier:
        j = frontier.pop()
        for i in np.flatnonzero(A[:, j] > 0):
            if int(i) not in reached:
                reached.add(int(i))
                frontier.append(int(i))
    return len(reached) == topology.n_agents


def augmented_matrix(topology: Topology) -> np.ndarray:
    """Packed matrix ``H = A + diag(a_0)``."""
    if topology.leader_adjacency is None:
        raise TopologyError("topology has no leader adjacency")
    return topology.adjacency + np.diag(topology.leader_adjacency)
