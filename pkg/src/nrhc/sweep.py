"""Backward-sweep continuation: the non-iterative costate update.

Instead of re-solving the horizon problem at every instant, the costate at
``tau = 0`` is integrated in real time so that the residual ``P`` obeys
``dP/dt = A_s P``.  The needed rate comes from factoring the linear variational
system of the horizon problem as

    dlam_t - dlam_tau = S(tau) (dx_t - dx_tau) + c(tau),

where ``S`` follows a matrix Riccati equation and ``c`` an affine one, both
integrated backward from the horizon end.  At ``tau = 0`` the state term
vanishes and ``dLam/dt = -H_x' + c(0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import HorizonSchedule, horizon
from .integrators import rk4_stages
from .tpbvp import (
    DTAU_TARGET,
    DivergenceError,
    HorizonGrid,
    LocalProblem,
    Snapshot,
    disagreement,
    horizon_cost,
    integrate_horizon_forward,
    mv,
    residual_P,
    terminal_gradient_hessian,
)


def _sym(S):
    return 0.5 * (S + np.swapaxes(S, -1, -2))


@dataclass(frozen=True)
class StabilizationConfig:
    """Stable gain ``A_s`` of the residual dynamics ``dP/dt = A_s P``."""

    A_s: np.ndarray

    def __post_init__(self):
        A = np.array(self.A_s, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A_s must be a square matrix, got shape {A.shape}")
        if not np.all(np.linalg.eigvals(A).real < 0):
            raise ValueError("A_s is not stable (needs eigenvalues with negative real part)")
        A.setflags(write=False)
        object.__setattr__(self, "A_s", A)

    @classmethod
    def scalar(cls, gain: float, n: int) -> "StabilizationConfig":
        return cls(gain * np.eye(n))


@dataclass
class SweepGrid:
    S: np.ndarray
    c: np.ndarray


@dataclass
class SolveResult:
    """Everything computed for one continuation-rate evaluation."""

    rate: np.ndarray
    residual: np.ndarray
    cost: np.ndarray
    T: float
    grid: HorizonGrid
    sweep: SweepGrid


def variational_matrices(prob: LocalProblem, x, lam):
    """Coefficients of the linear variational system along the horizon.

    With the control entering additively and ``H_ux = 0``:
    ``A = F_x``, ``B = R^{-1}``, ``C = H_xx = (sum_j a_ij) Q + d2(lam.F)/dx2``.
    Works on any leading shape ending in ``(batch, n)``.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    A = prob.model.jacobian(x)
    B = np.broadcast_to(prob.R_inv, A.shape)
    C = prob.degree[:, None, None] * prob.Q + prob.model.costate_hessian(lam, x)
    return A, B, C


def prediction_rates(prob: LocalProblem, grid: HorizonGrid, k: int):
    """Velocities of the predicted neighbor and leader tracks at node ``k``."""
    model = prob.model
    Yk = grid.neighbors[k]
    dY = model.field(Yk) if prob.predict_neighbors else np.zeros_like(Yk)
    dy0 = None
    if grid.leader is not None:
        y0 = grid.leader[k]
        dy0 = model.field(y0) if prob.predict_leader else np.zeros_like(y0)
    return dY, dy0


def sweep_terminal_conditions(prob: LocalProblem, grid: HorizonGrid, dTdt: float, P, A_s):
    """``S(T) = phi_xx`` and ``c(T) = (H_x' + dphi_x/dtau)(1 + dT/dt) + A_s P``.

    ``dphi_x/dtau`` is the rate of the terminal gradient along the horizon
    flow, ``2 Q_N sum_j a_ij (x' - y_j') + 2 a_i0 Q_0 (x' - y_0')``.  With
    frozen sources the source rates vanish and it reduces to ``phi_xx f``.
    """
    A_s = np.asarray(A_s, dtype=float)
    leader_T = None if grid.leader is None else grid.leader[-1]
    _, phi_xx = terminal_gradient_hessian(prob, grid.x[-1], grid.agg[-1], leader_T)
    dY, dy0 = prediction_rates(prob, grid, grid.n_tau)
    dx = grid.dx[-1]
    flow = 2.0 * prob.terminal[:, None] * mv(prob.Q_N, disagreement(prob.weights, dx, dY))
    if dy0 is not None:
        flow = flow + 2.0 * (prob.terminal * prob.leader_weights)[:, None] * mv(prob.Q_0, dx - dy0[None, :])
    H_x = -grid.dlam[-1]
    c_T = (H_x + flow) * (1.0 + dTdt) + mv(A_s, np.asarray(P, dtype=float))
    return phi_xx.copy(), c_T


def _sweep_rates(S, c, A, B, C):
    At = np.swapaxes(A, -1, -2)
    SB = S @ B
    dS = -At @ S - S @ A + SB @ S - C
    dc = -mv(At, c) + mv(SB, c)
    return dS, dc


def integrate_sweep_backward(prob: LocalProblem, grid: HorizonGrid, S_T, c_T) -> SweepGrid:
    """RK4 of the Riccati and affine equations from ``tau = T`` down to 0.

    Coefficients are evaluated on the forward grid, with cubic Hermite
    midpoints for the half steps.  ``S`` is re-symmetrized after every step.
    """
    N, h = grid.n_tau, grid.dtau
    S = np.empty((N + 1,) + np.shape(S_T))
    c = np.empty((N + 1,) + np.shape(c_T))
    S[N], c[N] = _sym(np.asarray(S_T, dtype=float)), c_T
    if N == 0:
        return SweepGrid(S, c)
    A, B, C = variational_matrices(prob, grid.x, grid.lam)
    xm, lm = grid.midpoints()
    Am, Bm, Cm = variational_matrices(prob, xm, lm)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N, 0, -1):
            Sk, ck = S[k], c[k]
            s1, d1 = _sweep_rates(Sk, ck, A[k], B[k], C[k])
            s2, d2 = _sweep_rates(Sk - h / 2 * s1, ck - h / 2 * d1, Am[k - 1], Bm[k - 1], Cm[k - 1])
            s3, d3 = _sweep_rates(Sk - h / 2 * s2, ck - h / 2 * d2, Am[k - 1], Bm[k - 1], Cm[k - 1])
            s4, d4 = _sweep_rates(Sk - h * s3, ck - h * d3, A[k - 1], B[k - 1], C[k - 1])
            S[k - 1] = _sym(Sk - h / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4))
            c[k - 1] = ck - h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    ok = np.isfinite(S).all(axis=(-2, -1)) & np.isfinite(c).all(axis=-1)  # (nodes, batch)
    if not ok.all():
        # the sweep runs backward, so the first failure is the last bad node
        k = int(np.flatnonzero(~ok.all(axis=1))[-1])
        agents = [prob.agents[b] if prob.agents else b for b in np.flatnonzero(~ok[k])]
        raise DivergenceError(f"backward sweep diverged at tau={k * h:.6g} for agents {agents}", agents=agents, tau=k * h)
    return SweepGrid(S, c)


def costate_rate(
    prob: LocalProblem,
    x,
    lam,
    snapshot: Snapshot,
    T: float,
    dTdt: float,
    A_s,
    dtau_target: float = DTAU_TARGET,
) -> SolveResult:
    """Forward horizon pass, terminal conditions, backward sweep, ``dLam/dt``."""
    grid = integrate_horizon_forward(prob, x, lam, T, snapshot, dtau_target)
    P = residual_P(prob, grid)
    S_T, c_T = sweep_terminal_conditions(prob, grid, dTdt, P, A_s)
    sweep = integrate_sweep_backward(prob, grid, S_T, c_T)
    rate = grid.dlam[0] + sweep.c[0]
    return SolveResult(rate, P, horizon_cost(prob, grid), T, grid, sweep)


def costate_time_update(
    prob: LocalProblem,
    x,
    lam,
    snapshot: Snapshot,
    t: float,
    dt: float,
    schedule: HorizonSchedule,
    A_s,
    dtau_target: float = DTAU_TARGET,
    method: str = "rk4",
) -> tuple[np.ndarray, SolveResult]:
    """Advance ``Lam`` from ``t`` to ``t + dt``.

    The plant is held at ``u = -R^{-1} Lam(t)`` over the step.  With
    ``method="rk4"`` the rate is re-evaluated at the RK4 stage points of the
    held-input plant, with the snapshot sources moved along their prediction
    model; ``"euler"`` uses the rate at ``t`` only.  Returns the new costate and
    the solve at ``t`` (its residual and cost are the step diagnostics).
    """
    model = prob.model
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    u_hold = -mv(prob.R_inv, lam)

    def at(s, xs, ls, snap):
        T, dTdt = horizon(schedule, t + s)
        return costate_rate(prob, xs, ls, snap, T, dTdt, A_s, dtau_target)

    first = at(0.0, x, lam, snapshot)
    if method == "euler":
        return lam + dt * first.rate, first
    if method != "rk4":
        raise ValueError(f"unknown costate integrator {method!r}")

    xs, _ = rk4_stages(lambda z: model.field(z) + u_hold, x, dt)
    move_nb = (lambda z: model.field(z)) if prob.predict_neighbors else (lambda z: np.zeros_like(z))
    Ys, _ = rk4_stages(move_nb, np.asarray(snapshot.states, dtype=float), dt)
    if snapshot.leader is not None:
        move_l = (lambda z: model.field(z)) if prob.predict_leader else (lambda z: np.zeros_like(z))
        ls_, _ = rk4_stages(move_l, np.asarray(snapshot.leader, dtype=float), dt)
    else:
        ls_ = (None,) * 4

    offsets = (0.0, dt / 2, dt / 2, dt)
    k = [first.rate]
    for s in (1, 2, 3):
        lam_s = lam + offsets[s] * k[-1]
        k.append(at(offsets[s], xs[s], lam_s, Snapshot(Ys[s], ls_[s])).rate)
    lam_next = lam + dt / 6.0 * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3])
    return lam_next, first
