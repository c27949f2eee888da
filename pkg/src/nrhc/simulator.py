"""Closed-loop engine on the real time axis.

One step is bulk-synchronous: every agent receives its neighbors' states once
(a snapshot), all local solves run as one vectorized batch, and only then do
the plants advance with the controls held over ``[t, t + dt]``.  The leader,
when present, evolves uncontrolled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .costs import horizon
from .integrators import rk4_step
from .metrics import leader_error, max_pairwise
from .sweep import costate_rate, costate_time_update
from .tpbvp import DivergenceError, LocalProblem, Snapshot, mv, terminal_costate
from .topology import Topology, neighbors

if TYPE_CHECKING:
    from .scenarios import Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 0.01
    dtau_target: float = 0.005
    duration: float = 10.0
    seed: int = 0
    costate_integrator: str = "rk4"
    predict_neighbors: bool = True
    predict_leader: bool = True

    def __post_init__(self):
        for name in ("dt", "dtau_target", "duration"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0) or (name != "duration" and v == 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.costate_integrator not in ("rk4", "euler"):
            raise ValueError(f"costate_integrator must be 'rk4' or 'euler', got {self.costate_integrator!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass
class SimulationState:
    t: float
    agent_states: np.ndarray
    costates: np.ndarray
    last_controls: np.ndarray
    leader_state: np.ndarray | None = None


@dataclass
class StepDiagnostics:
    t: float
    T: float
    n_tau: int
    residual_norms: np.ndarray
    costs: np.ndarray


@dataclass
class TrajectoryLog:
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    residual_norms: np.ndarray
    costs: np.ndarray
    horizons: np.ndarray
    max_pairwise: np.ndarray
    leader: np.ndarray | None = None
    leader_errors: np.ndarray | None = None
    status: str = "ok"
    message: str = ""


def snapshot_neighbors(state: SimulationState, topology: Topology) -> dict[int, dict[int, np.ndarray]]:
    """Per-agent copies of the neighbor states received at time ``state.t``."""
    return {
        i: {j: state.agent_states[j].copy() for j in sorted(neighbors(topology, i))}
        for i in range(topology.n_agents)
    }


class Simulator:
    def __init__(self, scenario: "Scenario"):
        self.scenario = scenario
        self.config = scenario.simulation
        self.model = scenario.model
        self.topology = scenario.topology
        self.problem = LocalProblem.build(
            scenario.model,
            scenario.topology,
            scenario.costs,
            predict_neighbors=self.config.predict_neighbors,
            predict_leader=self.config.predict_leader,
        )
        self.A_s = scenario.stabilization.A_s
        self.schedule = scenario.horizon

    @property
    def leader_mode(self) -> bool:
        return self.scenario.leader_initial is not None

    def initialize(self) -> SimulationState:
        """States from the scenario; costates at the consistent value ``phi_x(x(0))``."""
        x0 = np.array(self.scenario.initial_conditions, dtype=float)
        leader = None if not self.leader_mode else np.array(self.scenario.leader_initial, dtype=float)
        # T(0) = 0, so the residual vanishes exactly when lam(0) equals the terminal gradient
        lam0 = terminal_costate(self.problem, x0, x0, leader)
        u0 = -mv(self.problem.R_inv, lam0)
        return SimulationState(0.0, x0, lam0, u0, leader)

    def _snapshot(self, state: SimulationState) -> Snapshot:
        leader = None if state.leader_state is None else state.leader_state.copy()
        return Snapshot(state.agent_states.copy(), leader)

    def step(self, state: SimulationState, index: int = 0) -> tuple[SimulationState, StepDiagnostics]:
        cfg = self.config
        snap = self._snapshot(state)
        u = -mv(self.problem.R_inv, state.costates)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                lam_next, solve = costate_time_update(
                    self.problem, state.agent_states, state.costates, snap, state.t, cfg.dt,
                    self.schedule, self.A_s, cfg.dtau_target, cfg.costate_integrator,
                )
        except DivergenceError as exc:
            exc.t = state.t
            raise
        if not np.isfinite(lam_next).all():
            bad = np.flatnonzero(~np.isfinite(lam_next).all(axis=1)).tolist()
            raise DivergenceError(f"costate update diverged at t={state.t:.6g} for agents {bad}", agents=bad, t=state.t)

        F = self.model.field
        x_next = rk4_step(lambda z: F(z) + u, state.agent_states, cfg.dt)
        leader_next = None if state.leader_state is None else rk4_step(F, state.leader_state, cfg.dt)
        t_next = (index + 1) * cfg.dt
        nxt = SimulationState(t_next, x_next, lam_next, -mv(self.problem.R_inv, lam_next), leader_next)
        diag = StepDiagnostics(state.t, solve.T, solve.grid.n_tau,
                               np.linalg.norm(solve.residual, axis=1), solve.cost)
        return nxt, diag

    def diagnose(self, state: SimulationState) -> StepDiagnostics:
        """Residual and predicted cost at ``state`` without advancing it."""
        T, dTdt = horizon(self.schedule, state.t)
        with np.errstate(over="ignore", invalid="ignore"):
            solve = costate_rate(self.problem, state.agent_states, state.costates, self._snapshot(state),
                                 T, dTdt, self.A_s, self.config.dtau_target)
        return StepDiagnostics(state.t, T, solve.grid.n_tau, np.linalg.norm(solve.residual, axis=1), solve.cost)

    def run(self, progress: bool = False) -> TrajectoryLog:
        """Step to the configured duration and return the full log.

        On divergence the :class:`DivergenceError` is re-raised with the partial
        log attached as ``exc.log``.
        """
        state = self.initialize()
        records: list[tuple[SimulationState, StepDiagnostics | None]] = []
        n_steps = self.config.n_steps
        try:
            for k in range(n_steps):
                nxt, diag = self.step(state, k)
                records.append((state, diag))
                state = nxt
                if progress and (k + 1) % max(1, n_steps // 10) == 0:
                    log.info("t=%.3f max|P|=%.3e", state.t, diag.residual_norms.max())
            records.append((state, self.diagnose(state)))
        except DivergenceError as exc:
            records.append((state, None))
            exc.log = self._build_log(records, "diverged", str(exc))
            raise
        return self._build_log(records)

    def _build_log(self, records, status: str = "ok", message: str = "") -> TrajectoryLog:
        M = self.topology.n_agents
        nan = np.full(M, np.nan)
        states = np.array([s.agent_states for s, _ in records])
        leader = None
        errors = None
        if self.leader_mode:
            leader = np.array([s.leader_state for s, _ in records])
            errors = leader_error(states, leader[:, None, :])
        return TrajectoryLog(
            t=np.array([s.t for s, _ in records]),
            states=states,
            controls=np.array([s.last_controls for s, _ in records]),
            residual_norms=np.array([nan if d is None else d.residual_norms for _, d in records]),
            costs=np.array([nan if d is None else d.costs for _, d in records]),
            horizons=np.array([np.nan if d is None else d.T for _, d in records]),
            max_pairwise=np.array([max_pairwise(s.agent_states) for s, _ in records]),
            leader=leader,
            leader_errors=errors,
            status=status,
            message=message,
        )


def initialize(scenario: "Scenario") -> SimulationState:
    return Simulator(scenario).initialize()


def step(state: SimulationState, scenario: "Scenario") -> tuple[SimulationState, StepDiagnostics]:
    index = int(round(state.t / scenario.simulation.dt))
    return Simulator(scenario).step(state, index)


def run(scenario: "Scenario", progress: bool = False) -> TrajectoryLog:
    return Simulator(scenario).run(progress=progress)
