"""Per-agent optimality system along the horizon axis.

Each agent ``i`` solves, at every real time ``t``, the problem

    min  phi_i(x_i(T)) + int_0^T L_i(x_i, x_-i, u_i) dtau,   x_i' = F(x_i) + u_i

whose first-order conditions give ``u = -R^{-1} lam`` and the costate flow
``lam' = -(sum_j a_ij Q (x_i - x_j) + F_x(x_i)' lam)``.  Starting from the
current state and costate guess, the state/costate pair is integrated forward
over the horizon; the mismatch ``P = lam(T) - phi_x(x(T))`` is what the
continuation update drives to zero.

Everything here is batched: a :class:`LocalProblem` stacks the local
problems of ``B`` agents (one agent, or the whole network) that read the
states of ``K`` snapshot sources through a ``(B, K)`` weight matrix.
Neighbor and leader states come from a single snapshot and are either held
constant over the horizon or propagated open-loop through ``F``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costs import CostSpec
from .dynamics import DynamicsModel
from .integrators import rk4_stages
from .topology import Topology

DTAU_TARGET = 0.005


class DivergenceError(RuntimeError):
    """Non-finite values during a horizon or sweep integration."""

    def __init__(self, message: str, agents=None, tau: float | None = None, t: float | None = None):
        super().__init__(message)
        self.agents = [] if agents is None else [int(a) for a in agents]
        self.tau = tau
        self.t = t
        self.log = None


def mv(M, v):
    """Batched matrix-vector product over leading axes."""
    return np.matmul(M, v[..., None])[..., 0]


def neighbor_sum(W: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``b_i = sum_j W_ij Y_j`` summed in sorted order.

    Sorting makes the result independent of agent labelling, so relabelling a
    network permutes its trajectories bit-for-bit.
    """
    terms = W[:, :, None] * Y[None, :, :]
    return np.sort(terms, axis=1).sum(axis=1)


def disagreement(W: np.ndarray, x: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``e_i = sum_j W_ij (x_i - Y_j)``, in sorted order like :func:`neighbor_sum`.

    Forming the differences first keeps ``e`` exactly zero when every source
    equals ``x_i``, whatever the degree.  ``x`` is ``(..., B, n)`` and ``Y``
    is ``(..., K, n)`` with matching leading axes.
    """
    terms = W[:, :, None] * (x[..., :, None, :] - Y[..., None, :, :])
    return np.sort(terms, axis=-2).sum(axis=-2)


@dataclass(frozen=True)
class Snapshot:
    """States received once per real-time step: all agents (``K x n``) and the leader."""

    states: np.ndarray
    leader: np.ndarray | None = None


@dataclass(frozen=True)
class LocalProblem:
    model: DynamicsModel
    Q: np.ndarray
    Q_N: np.ndarray
    R: np.ndarray
    R_inv: np.ndarray
    Q_0: np.ndarray
    weights: np.ndarray
    leader_weights: np.ndarray
    terminal: np.ndarray
    predict_neighbors: bool = True
    predict_leader: bool = True
    agents: tuple = ()

    @property
    def batch(self) -> int:
        return self.weights.shape[0]

    @property
    def degree(self) -> np.ndarray:
        return np.sort(self.weights, axis=1).sum(axis=1)

    @classmethod
    def build(
        cls,
        model: DynamicsModel,
        topology: Topology,
        costs: CostSpec | Sequence[CostSpec],
        agents: Sequence[int] | None = None,
        predict_neighbors: bool = True,
        predict_leader: bool = True,
    ) -> "LocalProblem":
        """Stack the local problems of ``agents`` (default: every agent)."""
        M = topology.n_agents
        if isinstance(costs, CostSpec):
            costs = [costs] * M
        if len(costs) != M:
            raise ValueError(f"need one CostSpec per agent ({M}), got {len(costs)}")
        agents = tuple(range(M)) if agents is None else tuple(int(a) for a in agents)
        n = model.state_dim
        specs = [costs[i] for i in agents]
        for s in specs:
            if s.state_dim != n:
                raise ValueError(f"weights are {s.state_dim}-dimensional, model {model.name} is {n}-dimensional")
        zeros = np.zeros((n, n))
        Q0 = np.array([zeros if s.Q_0 is None else s.Q_0 for s in specs])
        has_q0 = np.array([s.Q_0 is not None for s in specs], dtype=float)
        return cls(
            model=model,
            Q=np.array([s.Q for s in specs]),
            Q_N=np.array([s.Q_N for s in specs]),
            R=np.array([s.R for s in specs]),
            R_inv=np.array([s.R_inv for s in specs]),
            Q_0=Q0,
            weights=topology.adjacency[list(agents)].copy(),
            leader_weights=topology.leader_weights()[list(agents)] * has_q0,
            terminal=np.array([s.use_terminal_cost for s in specs], dtype=float),
            predict_neighbors=predict_neighbors,
            predict_leader=predict_leader,
            agents=agents,
        )


@dataclass
class HorizonGrid:
    """Forward solution on ``tau_k = k * dtau``, ``k = 0..n_tau``.

    Arrays are indexed ``[k, agent, component]``; ``neighbors`` holds the
    (possibly predicted) snapshot sources, ``leader`` the leader track and
    ``agg`` the weighted disagreement :func:`disagreement` at every node.
    """

    dtau: float
    x: np.ndarray
    lam: np.ndarray
    dx: np.ndarray
    dlam: np.ndarray
    neighbors: np.ndarray
    leader: np.ndarray | None
    agg: np.ndarray

    @property
    def n_tau(self) -> int:
        return self.x.shape[0] - 1

    @property
    def T(self) -> float:
        return self.n_tau * self.dtau

    @property
    def tau(self) -> np.ndarray:
        return self.dtau * np.arange(self.n_tau + 1)

    def midpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Cubic Hermite values of ``x`` and ``lam`` halfway between grid nodes."""
        h = self.dtau
        xm = 0.5 * (self.x[1:] + self.x[:-1]) + h / 8.0 * (self.dx[:-1] - self.dx[1:])
        lm = 0.5 * (self.lam[1:] + self.lam[:-1]) + h / 8.0 * (self.dlam[:-1] - self.dlam[1:])
        return xm, lm


def horizon_steps(T: float, dtau_target: float = DTAU_TARGET) -> tuple[int, float]:
    """Number of steps and step size spanning ``[0, T]`` at roughly ``dtau_target``."""
    if T < 0:
        raise ValueError(f"negative horizon {T}")
    if T == 0:
        return 0, 0.0
    n = max(1, int(round(T / dtau_target)))
    return n, T / n


def optimal_control(lam, R) -> np.ndarray:
    """Stationary control of the Hamiltonian, ``R u + lam = 0``."""
    lam = np.asarray(lam, dtype=float)
    R = np.asarray(R, dtype=float)
    return -np.linalg.solve(R, lam[..., None])[..., 0]


def _stage_gradient(prob: LocalProblem, x, agg):
    return mv(prob.Q, agg)


def _costate_rate(prob: LocalProblem, x, lam, agg):
    Fx = prob.model.jacobian(x)
    return -(_stage_gradient(prob, x, agg) + mv(np.swapaxes(Fx, -1, -2), lam))


def _pairwise_quadratic(prob: LocalProblem, x, Y, P):
    # sum_j w_ij (x_i - y_j)' P_i (x_i - y_j) for every agent in the batch
    diff = x[:, None, :] - Y[None, :, :]
    return np.einsum("bk,bki,bij,bkj->b", prob.weights, diff, P, diff)


def stage_costs(prob: LocalProblem, x, Y, u) -> np.ndarray:
    """Batched running cost ``L_i`` (with its factor 1/2)."""
    return 0.5 * (_pairwise_quadratic(prob, x, Y, prob.Q) + np.einsum("bi,bij,bj->b", u, prob.R, u))


def hamiltonian(prob: LocalProblem, x, lam, u, Y) -> np.ndarray:
    """``H_i = L_i + lam' (F(x_i) + u_i)`` for each agent of the batch."""
    x, lam, u = (np.asarray(a, dtype=float) for a in (x, lam, u))
    return stage_costs(prob, x, Y, u) + np.einsum("bi,bi->b", lam, prob.model.field(x) + u)


def costate_rhs(prob: LocalProblem, x, lam, Y) -> np.ndarray:
    """``dlam/dtau = -H_x' = -(sum_j a_ij Q (x_i - y_j) + F_x(x_i)' lam)``."""
    x = np.asarray(x, dtype=float)
    return _costate_rate(prob, x, np.asarray(lam, dtype=float), disagreement(prob.weights, x, Y))


def terminal_gradient_hessian(prob: LocalProblem, xT, agg_T, leader_T):
    """``phi_x`` and the constant ``phi_xx`` of the terminal penalty.

    ``agg_T`` is the weighted disagreement at the horizon end.
    """
    mask = prob.terminal
    grad = 2.0 * mv(prob.Q_N, agg_T)
    hess = 2.0 * prob.degree[:, None, None] * prob.Q_N
    if leader_T is not None:
        grad = grad + 2.0 * prob.leader_weights[:, None] * mv(prob.Q_0, xT - leader_T)
        hess = hess + 2.0 * prob.leader_weights[:, None, None] * prob.Q_0
    return mask[:, None] * grad, mask[:, None, None] * hess


def terminal_costate(prob: LocalProblem, xT, Y_T, leader_T=None) -> np.ndarray:
    """Costate demanded at the horizon end, ``lam(T) = phi_x(x(T))``."""
    xT = np.asarray(xT, dtype=float)
    grad, _ = terminal_gradient_hessian(prob, xT, disagreement(prob.weights, xT, np.asarray(Y_T, dtype=float)), leader_T)
    return grad


def terminal_values(prob: LocalProblem, xT, Y_T, leader_T) -> np.ndarray:
    phi = _pairwise_quadratic(prob, xT, Y_T, prob.Q_N)
    if leader_T is not None:
        d = xT - leader_T
        phi = phi + prob.leader_weights * np.einsum("bi,bij,bj->b", d, prob.Q_0, d)
    return prob.terminal * phi


def _check_finite_track(xs, ls, h, prob: LocalProblem, what: str):
    """Raise at the first node where any agent's state or costate is not finite."""
    ok = np.isfinite(xs).all(axis=-1) & np.isfinite(ls).all(axis=-1)  # (nodes, batch)
    if ok.all():
        return
    k = int(np.flatnonzero(~ok.all(axis=1))[0])
    agents = [prob.agents[b] if prob.agents else b for b in np.flatnonzero(~ok[k])]
    tau = k * h
    raise DivergenceError(f"{what} diverged at tau={tau:.6g} for agents {agents}", agents=agents, tau=tau)


def _source_track(model: DynamicsModel, y, n_tau: int, h: float, predict: bool):
    """Nodes and RK4 stage points (stages 2 to 4) of an uncontrolled source."""
    if not predict:
        nodes = np.broadcast_to(y, (n_tau + 1,) + y.shape)
        return nodes, np.broadcast_to(y, (n_tau, 3) + y.shape)
    nodes = np.empty((n_tau + 1,) + y.shape)
    stages = np.empty((n_tau, 3) + y.shape)
    nodes[0] = y
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_tau):
            (_, y2, y3, y4), y = rk4_stages(model.field, y, h)
            stages[k] = (y2, y3, y4)
            nodes[k + 1] = y
    return nodes, stages


def integrate_horizon_forward(
    prob: LocalProblem,
    x0,
    lam0,
    T: float,
    snapshot: Snapshot,
    dtau_target: float = DTAU_TARGET,
) -> HorizonGrid:
    """Classical RK4 of the state/costate pair over ``[0, T]``.

    Snapshot sources travel along with the agents: open-loop through ``F``
    when predicted, constant otherwise.
    """
    model = prob.model
    x = np.array(x0, dtype=float).reshape(prob.batch, -1)
    lam = np.array(lam0, dtype=float).reshape(prob.batch, -1)
    Y = np.array(snapshot.states, dtype=float)
    y0 = None if snapshot.leader is None else np.array(snapshot.leader, dtype=float)
    n_tau, h = horizon_steps(T, dtau_target)

    # sources do not depend on the agents, so their tracks (and RK4 stage
    # points) are computed first; the joint RK4 would produce the same values
    Ys, Ystage = _source_track(model, Y, n_tau, h, prob.predict_neighbors)
    # the leader enters only the terminal penalty, so its nodes suffice
    y0s = None if y0 is None else _source_track(model, y0, n_tau, h, prob.predict_leader)[0]
    W = prob.weights
    R_inv = prob.R_inv
    Q = prob.Q
    field, jac = model.field, model.jacobian

    def rate(x, lam, Yk):
        dx = field(x) - mv(R_inv, lam)
        dl = -(mv(Q, disagreement(W, x, Yk)) + mv(np.swapaxes(jac(x), -1, -2), lam))
        return dx, dl

    xs = np.empty((n_tau + 1,) + x.shape)
    ls = np.empty((n_tau + 1,) + lam.shape)
    xs[0], ls[0] = x, lam
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_tau):
            Yk = Ystage[k]
            a1, b1 = rate(x, lam, Ys[k])
            a2, b2 = rate(x + h / 2 * a1, lam + h / 2 * b1, Yk[0])
            a3, b3 = rate(x + h / 2 * a2, lam + h / 2 * b2, Yk[1])
            a4, b4 = rate(x + h * a3, lam + h * b3, Yk[2])
            x = x + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            lam = lam + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            xs[k + 1], ls[k + 1] = x, lam
    _check_finite_track(xs, ls, h, prob, "horizon integration")

    agg = disagreement(prob.weights, xs, Ys)
    dx = model.field(xs) - mv(prob.R_inv[None], ls)
    dl = -(mv(prob.Q[None], agg)
           + mv(np.swapaxes(model.jacobian(xs), -1, -2), ls))
    return HorizonGrid(h, xs, ls, dx, dl, Ys, y0s, agg)


def residual_P(prob: LocalProblem, grid: HorizonGrid) -> np.ndarray:
    """Optimality residual ``P = lam(T) - phi_x(x(T))`` per agent."""
    leader_T = None if grid.leader is None else grid.leader[-1]
    grad, _ = terminal_gradient_hessian(prob, grid.x[-1], grid.agg[-1], leader_T)
    return grid.lam[-1] - grad


def horizon_cost(prob: LocalProblem, grid: HorizonGrid) -> np.ndarray:
    """Cost of the predicted trajectory: terminal penalty plus trapezoid of ``L_i``."""
    u = -mv(prob.R_inv[None], grid.lam)
    L = np.array([stage_costs(prob, grid.x[k], grid.neighbors[k], u[k]) for k in range(grid.n_tau + 1)])
    integral = grid.dtau * (L.sum(axis=0) - 0.5 * (L[0] + L[-1])) if grid.n_tau else np.zeros(prob.batch)
    leader_T = None if grid.leader is None else grid.leader[-1]
    return terminal_values(prob, grid.x[-1], grid.neighbors[-1], leader_T) + integral
