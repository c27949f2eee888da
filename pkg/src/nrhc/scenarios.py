"""Scenario files, the four benchmark presets, and output writing.

A scenario is a JSON document::

    {
      "name": "lu4",
      "model": "lu",                                  # lorenz | lu | chen | {"name": "linear", "matrix": [[...]]}
      "topology": {"adjacency": [[0, 1, 0, 1], ...], "leader": null, "directed": false},
      "initial_conditions": {"agents": [[1, 10, 2], ...], "leader": null},
      "weights": {"Q": [1, 1, 1], "Q_N": [1, 1, 1], "R": [1, 1, 1], "Q_0": null},
      "terminal_cost": true,
      "horizon": {"T_f": 1.0, "alpha": 0.01},
      "stabilization": {"A_s": -50.0},
      "simulation": {"dt": 0.01, "dtau": 0.005, "duration": 10.0, "seed": 0, "costate_integrator": "rk4"},
      "prediction": {"neighbors": "open_loop", "leader": "open_loop"}
    }

Weight entries are diagonals (flat lists) or full row-major matrices;
``"weights"`` may also be a list with one such block per agent.  ``A_s`` is a
scalar multiple of the identity or a full matrix.
"""

from __future__ import annotations

import copy
import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .costs import CostError, CostSpec, HorizonSchedule, _spd
from .dynamics import DynamicsModel, get_model
from .metrics import crossing_time, running_cost
from .simulator import SimulationConfig, TrajectoryLog
from .sweep import StabilizationConfig
from .topology import Topology, TopologyError

PREDICTION_MODES = ("open_loop", "frozen")


class ScenarioError(ValueError):
    """Every problem found while validating a scenario, not just the first."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  - " + "\n  - ".join(self.errors))


@dataclass(frozen=True)
class Scenario:
    name: str
    model: DynamicsModel
    topology: Topology
    initial_conditions: np.ndarray
    costs: tuple
    horizon: HorizonSchedule
    stabilization: StabilizationConfig
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    leader_initial: np.ndarray | None = None
    description: str = ""

    @property
    def n_agents(self) -> int:
        return self.topology.n_agents

    @property
    def terminal_cost(self) -> bool:
        return all(c.use_terminal_cost for c in self.costs)

    def with_simulation(self, **changes) -> "Scenario":
        return replace(self, simulation=replace(self.simulation, **changes))

    def permuted(self, perm) -> "Scenario":
        """Same network with agents relabelled: new agent ``k`` is old agent ``perm[k]``."""
        perm = list(perm)
        return replace(
            self,
            topology=self.topology.permuted(perm),
            initial_conditions=self.initial_conditions[perm],
            costs=tuple(self.costs[p] for p in perm),
        )


# -- serialization -----------------------------------------------------------


def _matrix_to_json(M: np.ndarray):
    if np.array_equal(M, np.diag(np.diag(M))):
        return np.diag(M).tolist()
    return M.tolist()


def _weights_to_json(c: CostSpec) -> dict:
    return {
        "Q": _matrix_to_json(c.Q),
        "Q_N": _matrix_to_json(c.Q_N),
        "R": _matrix_to_json(c.R),
        "Q_0": None if c.Q_0 is None else _matrix_to_json(c.Q_0),
    }


def scenario_to_dict(s: Scenario) -> dict:
    weights = [_weights_to_json(c) for c in s.costs]
    A = s.stabilization.A_s
    a = A[0, 0]
    cfg = s.simulation
    return {
        "name": s.name,
        "description": s.description,
        "model": s.model.to_spec(),
        "topology": s.topology.to_dict(),
        "initial_conditions": {
            "agents": s.initial_conditions.tolist(),
            "leader": None if s.leader_initial is None else s.leader_initial.tolist(),
        },
        "weights": weights[0] if all(w == weights[0] for w in weights) else weights,
        "terminal_cost": s.terminal_cost,
        "horizon": {"T_f": s.horizon.T_f, "alpha": s.horizon.alpha},
        "stabilization": {"A_s": float(a) if np.array_equal(A, a * np.eye(len(A))) else A.tolist()},
        "simulation": {
            "dt": cfg.dt,
            "dtau": cfg.dtau_target,
            "duration": cfg.duration,
            "seed": cfg.seed,
            "costate_integrator": cfg.costate_integrator,
        },
        "prediction": {
            "neighbors": "open_loop" if cfg.predict_neighbors else "frozen",
            "leader": "open_loop" if cfg.predict_leader else "frozen",
        },
    }


def dumps(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"


def _as_matrix(value, n: int, label: str, errors: list[str]):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{label}: not numeric")
        return None
    if M.ndim == 0:
        M = M * np.eye(n)
    elif M.ndim == 1:
        M = np.diag(M)
    if M.shape != (n, n):
        errors.append(f"{label}: expected a length-{n} diagonal or {n}x{n} matrix, got shape {M.shape}")
        return None
    return M


def _build_cost(block, n: int, terminal: bool, label: str, errors: list[str]):
    if not isinstance(block, dict):
        errors.append(f"{label}: expected an object")
        return None
    mats = {}
    for key in ("Q", "Q_N", "R", "Q_0"):
        if block.get(key) is None:
            if key != "Q_0":
                errors.append(f"{label}.{key}: missing")
            mats[key] = None
            continue
        mats[key] = _as_matrix(block[key], n, f"{label}.{key}", errors)
    ok = all(M is not None for k, M in mats.items() if k != "Q_0" or block.get("Q_0") is not None)
    for key, M in mats.items():
        if M is None:
            continue
        try:
            _spd(f"{label}.{key}", M)
        except CostError as exc:
            errors.append(str(exc))
            ok = False
    if not ok:
        return None
    return CostSpec(mats["Q"], mats["Q_N"], mats["R"], mats["Q_0"], terminal)


def scenario_from_dict(data: dict) -> Scenario:
    """Validate a parsed scenario document; raises :class:`ScenarioError` listing all problems."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ScenarioError(["scenario must be a JSON object"])
    data = copy.deepcopy(data)
    for key in ("model", "topology", "initial_conditions", "weights", "horizon"):
        if key not in data:
            errors.append(f"{key}: missing")
    if errors:
        raise ScenarioError(errors)

    model = None
    try:
        model = get_model(data["model"])
    except (ValueError, KeyError, TypeError) as exc:
        errors.append(f"model: {exc}")
    n = model.state_dim if model is not None else None

    topo = None
    tdata = data["topology"] if isinstance(data["topology"], dict) else {}
    A = np.array(tdata.get("adjacency", []), dtype=float) if tdata.get("adjacency") is not None else None
    if A is None:
        errors.append("topology.adjacency: missing")
    else:
        if A.ndim == 2 and A.shape[0] == A.shape[1] and np.any(np.diag(A) != 0):
            errors.append("topology.adjacency: self-loop (nonzero diagonal entry)")
            A = A - np.diag(np.diag(A))
        try:
            topo = Topology(A, tdata.get("leader"), directed=bool(tdata.get("directed", True)))
        except TopologyError as exc:
            errors.append(f"topology: {exc}")

    ic = data["initial_conditions"] if isinstance(data["initial_conditions"], dict) else {}
    X0 = None
    try:
        X0 = np.array(ic.get("agents"), dtype=float)
    except (TypeError, ValueError):
        errors.append("initial_conditions.agents: not numeric")
    if X0 is not None:
        if topo is not None and n is not None and X0.shape != (topo.n_agents, n):
            errors.append(
                f"initial_conditions.agents: expected shape {(topo.n_agents, n)}, got {X0.shape}"
            )
        elif not np.all(np.isfinite(X0)):
            errors.append("initial_conditions.agents: non-finite entries")
    leader0 = ic.get("leader")
    if leader0 is not None:
        leader0 = np.array(leader0, dtype=float)
        if n is not None and leader0.shape != (n,):
            errors.append(f"initial_conditions.leader: expected length {n}, got shape {leader0.shape}")
        elif not np.all(np.isfinite(leader0)):
            errors.append("initial_conditions.leader: non-finite entries")
    if topo is not None and (leader0 is None) != (not topo.has_leader):
        errors.append("leader mode needs both topology.leader and initial_conditions.leader")

    terminal = bool(data.get("terminal_cost", True))
    costs = None
    if n is not None:
        blocks = data["weights"]
        M = topo.n_agents if topo is not None else None
        if isinstance(blocks, list):
            if M is not None and len(blocks) != M:
                errors.append(f"weights: expected {M} per-agent blocks, got {len(blocks)}")
            built = [_build_cost(b, n, terminal, f"weights[{k}]", errors) for k, b in enumerate(blocks)]
        else:
            one = _build_cost(blocks, n, terminal, "weights", errors)
            built = [one] * (M or 1)
        if all(c is not None for c in built):
            costs = tuple(built)
            if topo is not None and topo.has_leader and any(c.Q_0 is None for c in costs):
                errors.append("weights.Q_0: required in leader mode")

    hz = None
    hdata = data["horizon"] if isinstance(data["horizon"], dict) else {}
    try:
        hz = HorizonSchedule(float(hdata.get("T_f", 0)), float(hdata.get("alpha", 0)))
    except (CostError, TypeError, ValueError) as exc:
        errors.append(f"horizon: {exc}")

    stab = None
    As = (data.get("stabilization") or {}).get("A_s", -50.0)
    if n is not None:
        As_m = _as_matrix(As, n, "stabilization.A_s", errors)
        if As_m is not None:
            try:
                stab = StabilizationConfig(As_m)
            except ValueError as exc:
                errors.append(f"stabilization.A_s: {exc}")

    sim = None
    sdata = data.get("simulation") or {}
    pdata = data.get("prediction") or {}
    modes = {}
    for key in ("neighbors", "leader"):
        mode = pdata.get(key, "open_loop")
        if mode not in PREDICTION_MODES:
            errors.append(f"prediction.{key}: expected one of {PREDICTION_MODES}, got {mode!r}")
        modes[key] = mode == "open_loop"
    try:
        sim = SimulationConfig(
            dt=float(sdata.get("dt", 0.01)),
            dtau_target=float(sdata.get("dtau", 0.005)),
            duration=float(sdata.get("duration", 10.0)),
            seed=int(sdata.get("seed", 0)),
            costate_integrator=str(sdata.get("costate_integrator", "rk4")),
            predict_neighbors=modes["neighbors"],
            predict_leader=modes["leader"],
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"simulation: {exc}")

    if errors:
        raise ScenarioError(errors)
    return Scenario(
        name=str(data.get("name", "scenario")),
        model=model,
        topology=topo,
        initial_conditions=X0,
        costs=costs,
        horizon=hz,
        stabilization=stab,
        simulation=sim,
        leader_initial=leader0,
        description=str(data.get("description", "")),
    )


def load_scenario(source) -> Scenario:
    """Load from a path, a JSON string, or an already-parsed dict."""
    if isinstance(source, dict):
        return scenario_from_dict(source)
    text = None
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ScenarioError([f"cannot read scenario file: {exc}"]) from exc
    else:
        text = source
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"parse error: {exc}"]) from exc
    return scenario_from_dict(data)


# -- presets -----------------------------------------------------------------

# columns of the initial-condition matrices are agents
_IC_CONSENSUS = np.array([[1, 2, -10, 9], [10, -1, 20, -10], [2, 5, 8, -2]], dtype=float).T
_IC_LEADER = np.array([[0.1, -1, 2, -10, 9], [0.2, 10, -1, 20, -10], [0.3, 2, 5, 8, -2]], dtype=float).T
# the five-agent Lorenz network only has four initial columns; the fifth agent starts here
FIFTH_AGENT_INITIAL = (5.0, 5.0, 5.0)

_A_LORENZ5 = [
    [0, 0, 1, 0, 0],
    [1, 0, 1, 0, 0],
    [0, 1, 0, 1, 0],
    [1, 0, 0, 0, 1],
    [1, 0, 0, 0, 0],
]
_A_LU4 = [
    [0, 1, 0, 1],
    [1, 0, 1, 0],
    [0, 1, 0, 1],
    [1, 0, 1, 0],
]
_H_LEADER_LORENZ = [
    [1, 1, 0, 0],
    [1, 0, 1, 0],
    [0, 1, 1, 1],
    [0, 0, 1, 0],
]
_H_LEADER_CHEN = [
    [1, 1, 1, 1],
    [1, 0, 1, 0],
    [0, 0, 0, 1],
    [1, 0, 0, 1],
]


def _preset_lorenz5() -> Scenario:
    X0 = np.vstack([_IC_CONSENSUS, FIFTH_AGENT_INITIAL])
    return Scenario(
        name="lorenz5",
        description="Five Lorenz agents on a directed graph, fifth agent starting at (5, 5, 5)",
        model=get_model("lorenz"),
        topology=Topology(_A_LORENZ5, directed=True),
        initial_conditions=X0,
        costs=(CostSpec.identity(3),) * 5,
        horizon=HorizonSchedule(1.0, 0.01),
        stabilization=StabilizationConfig.scalar(-50.0, 3),
    )


def _preset_lu4() -> Scenario:
    return Scenario(
        name="lu4",
        description="Four Lu agents on an undirected ring",
        model=get_model("lu"),
        topology=Topology(_A_LU4, directed=False),
        initial_conditions=_IC_CONSENSUS.copy(),
        costs=(CostSpec.identity(3),) * 4,
        horizon=HorizonSchedule(1.0, 0.01),
        stabilization=StabilizationConfig.scalar(-50.0, 3),
    )


def _preset_leader(name, model, H, T_f, description) -> Scenario:
    topo = Topology.from_augmented(H, directed=not np.array_equal(np.array(H), np.array(H).T))
    return Scenario(
        name=name,
        description=description,
        model=get_model(model),
        topology=topo,
        initial_conditions=_IC_LEADER[1:].copy(),
        leader_initial=_IC_LEADER[0].copy(),
        costs=(CostSpec.identity(3, leader_weight=10.0),) * 4,
        horizon=HorizonSchedule(T_f, 0.01),
        stabilization=StabilizationConfig.scalar(-50.0, 3),
    )


_PRESETS = {
    "lorenz5": _preset_lorenz5,
    "lu4": _preset_lu4,
    "leader_lorenz": lambda: _preset_leader(
        "leader_lorenz", "lorenz", _H_LEADER_LORENZ, 1.0, "Lorenz leader with four Lorenz followers"
    ),
    "leader_chen": lambda: _preset_leader(
        "leader_chen", "chen", _H_LEADER_CHEN, 0.5, "Chen leader with four Chen followers"
    ),
}


def preset_names() -> list[str]:
    return list(_PRESETS)


def preset(name: str) -> Scenario:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(_PRESETS)}") from None


# -- outputs -----------------------------------------------------------------

FLOAT_FMT = "{:.12e}"


def _fmt(v) -> str:
    return FLOAT_FMT.format(float(v))


def trajectories_csv(log: TrajectoryLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = log.states.shape[2]
    w.writerow(["t", "agent"] + [f"x{k + 1}" for k in range(n)] + [f"u{k + 1}" for k in range(n)])
    for k, t in enumerate(log.t):
        for i in range(log.states.shape[1]):
            w.writerow([_fmt(t), i] + [_fmt(v) for v in log.states[k, i]] + [_fmt(v) for v in log.controls[k, i]])
        if log.leader is not None:
            w.writerow([_fmt(t), "leader"] + [_fmt(v) for v in log.leader[k]] + [_fmt(0.0)] * n)
    return buf.getvalue()


def diagnostics_csv(log: TrajectoryLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "agent", "residual_norm", "max_pairwise"])
    for k, t in enumerate(log.t):
        for i in range(log.states.shape[1]):
            w.writerow([_fmt(t), i, _fmt(log.residual_norms[k, i]), _fmt(log.max_pairwise[k])])
    return buf.getvalue()


def _json_float(v):
    v = float(v)
    return v if np.isfinite(v) else None


def summary(log: TrajectoryLog, scenario: Scenario | None = None) -> dict:
    mp = log.max_pairwise
    out = {
        "status": log.status,
        "message": log.message,
        "n_records": len(log.t),
        "final_time": _json_float(log.t[-1]),
        "metrics": {
            "initial_max_pairwise": _json_float(mp[0]),
            "final_max_pairwise": _json_float(mp[-1]),
            "final_residual_max": _json_float(np.nanmax(log.residual_norms[-1])) if np.isfinite(log.residual_norms[-1]).any() else None,
            "max_control_norm": _json_float(np.linalg.norm(log.controls, axis=2).max()),
        },
        "thresholds": {
            "max_pairwise": {
                "10%": crossing_time(log.t, mp, 0.1 * mp[0]),
                "1%": crossing_time(log.t, mp, 0.01 * mp[0]),
            }
        },
    }
    if log.leader_errors is not None:
        e0, e1 = log.leader_errors[0], log.leader_errors[-1]
        out["metrics"]["initial_leader_errors"] = [_json_float(v) for v in e0]
        out["metrics"]["final_leader_errors"] = [_json_float(v) for v in e1]
        worst = (log.leader_errors / e0).max(axis=1)
        out["thresholds"]["leader_error_ratio"] = {
            "10%": crossing_time(log.t, worst, 0.1),
            "1%": crossing_time(log.t, worst, 0.01),
        }
    if scenario is not None:
        out["scenario"] = scenario_to_dict(scenario)
        out["metrics"]["running_cost"] = [_json_float(v) for v in running_cost(log, list(scenario.costs), scenario.topology)]
    return out


def write_outputs(log: TrajectoryLog, out_dir, scenario: Scenario | None = None) -> dict[str, Path]:
    """Write ``trajectories.csv``, ``diagnostics.csv`` and ``summary.json`` into ``out_dir``."""
    if len(log.t) == 0:
        raise ValueError("empty log")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectories": out / "trajectories.csv",
        "diagnostics": out / "diagnostics.csv",
        "summary": out / "summary.json",
    }
    paths["trajectories"].write_text(trajectories_csv(log), encoding="utf-8")
    paths["diagnostics"].write_text(diagnostics_csv(log), encoding="utf-8")
    paths["summary"].write_text(json.dumps(summary(log, scenario), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
