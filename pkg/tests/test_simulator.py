import numpy as np
import pytest

from conftest import linear_scenario
from nrhc.costs import horizon
from nrhc.scenarios import preset
from nrhc.simulator import SimulationConfig, Simulator, initialize, snapshot_neighbors, step
from nrhc.tpbvp import DivergenceError
from oracles import lorenz_field, scalar_riccati


def test_initial_costate_is_consistent():
    s = preset("lu4")
    sim = Simulator(s)
    st = sim.initialize()
    d = sim.diagnose(st)
    assert d.T == 0.0 and d.n_tau == 0
    assert not d.residual_norms.any()
    # lam(0) = phi_x = 2 sum_j a_ij (x_i - x_j)
    x = s.initial_conditions
    A = s.topology.adjacency
    expected = 2 * (A.sum(1)[:, None] * x - A @ x)
    np.testing.assert_allclose(st.costates, expected, rtol=1e-14)
    np.testing.assert_allclose(st.last_controls, -expected, rtol=1e-14)


def test_step_advances_time_exactly():
    s = preset("lorenz5").with_simulation(duration=0.05)
    st = initialize(s)
    for k in range(5):
        st, diag = step(st, s)
        assert st.t == (k + 1) * 0.01
    assert np.isfinite(st.agent_states).all()


def test_snapshot_is_a_copy():
    s = preset("lorenz5")
    st = initialize(s)
    snap = snapshot_neighbors(st, s.topology)
    assert set(snap[3]) == {0, 4}
    snap[3][0][:] = 99.0
    assert st.agent_states[0, 0] != 99.0


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimulationConfig(costate_integrator="leapfrog")
    assert SimulationConfig(duration=10.0, dt=0.01).n_steps == 1000


def test_two_agent_consensus_rate():
    """x' = -x + u for both agents: disagreement decays at 1 + 2 s(0; T) / r."""
    s = linear_scenario([[0, 1], [1, 0]], [1.0, -1.0], a=-1.0, T_f=0.5, alpha=5.0, duration=2.0)
    log = Simulator(s).run()
    e = log.states[:, 0, 0] - log.states[:, 1, 0]
    k0, k1 = 150, 200
    measured = -np.log(e[k1] / e[k0]) / (log.t[k1] - log.t[k0])
    s0 = np.mean([scalar_riccati(-1.0, 1.0, 1.0, 2.0, horizon(s.horizon, t)[0]) for t in log.t[k0:k1 + 1]])
    assert measured == pytest.approx(1.0 + 2.0 * s0, rel=0.05)


def test_leader_evolves_uncontrolled():
    s = preset("leader_lorenz").with_simulation(duration=0.3)
    log = Simulator(s).run()
    y = s.leader_initial.copy()
    ref = [y]
    h = s.simulation.dt
    for _ in range(len(log.t) - 1):
        k1 = lorenz_field(y)
        k2 = lorenz_field(y + h / 2.0 * k1)
        k3 = lorenz_field(y + h / 2.0 * k2)
        k4 = lorenz_field(y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ref.append(y)
    np.testing.assert_array_equal(log.leader, np.array(ref))


def test_log_shapes():
    s = preset("leader_chen").with_simulation(duration=0.1)
    log = Simulator(s).run()
    assert log.t.shape == (11,)
    assert log.states.shape == log.controls.shape == (11, 4, 3)
    assert log.residual_norms.shape == (11, 4)
    assert log.leader_errors.shape == (11, 4)
    assert log.status == "ok"


def test_euler_costate_option_runs():
    s = preset("lu4").with_simulation(duration=0.2, costate_integrator="euler")
    log = Simulator(s).run()
    assert np.isfinite(log.states).all()


def test_divergence_carries_partial_log():
    s = linear_scenario([[0, 1], [1, 0]], [1.0, -1.0], a=400.0, duration=5.0)
    with pytest.raises(DivergenceError) as info, np.errstate(all="ignore"):
        Simulator(s).run()
    exc = info.value
    assert exc.log is not None and exc.log.status == "diverged"
    assert exc.t is not None and 0 < len(exc.log.t) < 501


def _chaotic(n_agents, x0, adjacency=None, terminal=False, duration=0.2):
    from dataclasses import replace

    from nrhc.costs import CostSpec
    from nrhc.topology import Topology

    s = preset("lu4")
    A = np.zeros((n_agents, n_agents)) if adjacency is None else adjacency
    return replace(
        s,
        topology=Topology(A),
        initial_conditions=np.array(x0, dtype=float),
        costs=(CostSpec.identity(3, use_terminal_cost=terminal),) * n_agents,
    ).with_simulation(duration=duration)


def test_snapshot_membership():
    s = preset("lorenz5")
    snap = snapshot_neighbors(initialize(s), s.topology)
    assert set(snap[0]) == {2}
    pair = _chaotic(2, [[1, 2, 3], [4, 5, 6]], np.array([[0, 1], [1, 0]]))
    st = initialize(pair)
    snap = snapshot_neighbors(st, pair.topology)
    np.testing.assert_array_equal(snap[0][1], st.agent_states[1])
    np.testing.assert_array_equal(snap[1][0], st.agent_states[0])


def test_zero_terminal_cost_starts_with_zero_costates():
    s = _chaotic(4, preset("lu4").initial_conditions, preset("lu4").topology.adjacency)
    st = initialize(s)
    assert not st.costates.any() and not st.last_controls.any()


def test_identical_agents_stay_identical():
    s = _chaotic(4, np.tile([1.0, 10, 2], (4, 1)), preset("lu4").topology.adjacency)
    out = Simulator(s).run()
    assert not out.controls.any()
    for k in range(1, 4):
        np.testing.assert_array_equal(out.states[:, k], out.states[:, 0])


def test_lone_agent_follows_its_plant_bit_for_bit():
    from nrhc.integrators import rk4_step

    s = _chaotic(1, [[1.0, 10, 2]])
    out = Simulator(s).run()
    x = s.initial_conditions
    for k in range(1, len(out.t)):
        x = rk4_step(s.model.field, x, s.simulation.dt)
        np.testing.assert_array_equal(out.states[k], x)


def test_zero_duration_gives_one_record():
    out = Simulator(preset("lu4").with_simulation(duration=0.0)).run()
    assert len(out.t) == 1 and out.t[0] == 0.0
    np.testing.assert_array_equal(out.states[0], preset("lu4").initial_conditions)


def test_preset_initial_conditions():
    lu = preset("lu4").initial_conditions
    np.testing.assert_array_equal(lu[:, 0], [1, 2, -10, 9])
    np.testing.assert_array_equal(lu[0], [1, 10, 2])
    lead = preset("leader_chen")
    np.testing.assert_array_equal(lead.leader_initial, [0.1, 0.2, 0.3])
    assert lead.initial_conditions.shape == (4, 3)
