import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import conservative_prism
from tensegrity_rig.builders import build_prism, build_rig, prism_equilibrium_twist
from tensegrity_rig.dynamics import (
    GRAVITY, DynamicsModel, DynamicsState, IntegrationError, LoadSchedule, ModelError, StringLaws,
    accelerations, angular_momentum, bar_force_densities, default_config, energy, linear_momentum,
    max_bar_drift, project, setup_from_config, simulate, step, string_force_densities,
)
from tensegrity_rig.statics import member_lengths
from tensegrity_rig.topology import Member, MemberKind, Node, Topology


def single_bar(length=1.0, anchored=(False, False)):
    nodes = (Node(0, (-length / 2, 0.0, 0.0), anchored[0]), Node(1, (length / 2, 0.0, 0.0), anchored[1]))
    return Topology(nodes, (Member(MemberKind.BAR, (0, 1), "aluminum"),))


NO_STRINGS = StringLaws(np.zeros(0), np.zeros(0), np.zeros(0))


def test_string_law_examples():
    laws = StringLaws([100.0, 100.0, 100.0], [1.0, 1.0, 1.0], 0.0)
    g = string_force_densities([1.0, 1.1, 0.9], [0.0, 0.0, 0.0], laws)
    assert g[0] == 0.0
    assert g[1] == pytest.approx(10 / 1.1)
    assert g[2] == 0.0


def test_string_law_damping_never_pushes():
    laws = StringLaws([100.0], [1.0], 50.0)
    # taut but shortening fast: the damper would push, so the string goes slack
    assert string_force_densities([1.01], [-1.0], laws)[0] == 0.0
    assert string_force_densities([1.01], [0.1], laws)[0] == pytest.approx((1.0 + 5.0) / 1.01)


@settings(max_examples=100, deadline=None)
@given(L=st.floats(0.1, 3), L0=st.floats(0.1, 3), k=st.floats(0, 1e5), c=st.floats(0, 100), v=st.floats(-10, 10))
def test_string_law_tension_only(L, L0, k, c, v):
    g = string_force_densities([L], [v], StringLaws([k], [L0], c))[0]
    assert g >= 0
    if L <= L0:
        assert g == 0.0


def test_string_law_validation():
    with pytest.raises(ValueError):
        StringLaws([-1.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        StringLaws([1.0], [0.0], 0.0)
    with pytest.raises(ValueError):
        StringLaws.from_tension([1.0], [200.0], 100.0)


def test_single_bar_at_rest_has_no_force():
    topo = single_bar()
    model = DynamicsModel(topo, bar_mass=2.0)
    lam = bar_force_densities(model, topo.positions, np.zeros((3, 2)), np.zeros(0), np.zeros((3, 2)))
    assert lam.tolist() == [0.0]


@pytest.mark.parametrize("omega, mass, length", [(3.0, 2.0, 1.0), (10.0, 0.4, 2.5), (0.5, 7.0, 0.3)])
def test_spinning_bar_matches_two_mass_rotor(omega, mass, length):
    topo = single_bar(length)
    model = DynamicsModel(topo, bar_mass=mass)
    # rotation about z through the centre
    V = np.zeros((3, 2))
    V[1, 0], V[1, 1] = -omega * length / 2, omega * length / 2
    lam = bar_force_densities(model, topo.positions, V, np.zeros(0), np.zeros((3, 2)))[0]
    # each end mass m/2 on radius L/2 needs inward force (m/2) w^2 (L/2): tension, so lambda < 0
    tension = (mass / 2) * omega**2 * (length / 2)
    expected = -tension / length
    assert lam == pytest.approx(expected, rel=1e-12)


def test_closed_form_for_separate_bars_with_two_kilogram_ends():
    # two bars with no shared nodes, 2 kg at every end, strings and loads acting
    nodes = [Node(i, tuple(p)) for i, p in enumerate(
        [(0, 0, 0), (1, 0.2, 0), (0, 1, 0.3), (0.1, 1.2, 1.4)])]
    members = (
        Member(MemberKind.BAR, (0, 1), "a"), Member(MemberKind.BAR, (2, 3), "a"),
        Member(MemberKind.STRING, (0, 2), "u"), Member(MemberKind.STRING, (1, 3), "u"),
        Member(MemberKind.STRING, (1, 2), "u"),
    )
    topo = Topology(tuple(nodes), members)
    model = DynamicsModel(topo, bar_mass=4.0, string_mass=0.0)
    assert model.decoupled
    rng = np.random.default_rng(0)
    N = topo.positions
    _, V, _ = project(model, N, rng.normal(size=(3, 4)))
    gamma = rng.uniform(0, 5, 3)
    W = rng.normal(size=(3, 4))
    lam = bar_force_densities(model, N, V, gamma, W)

    B, Bd, S = N @ model.Cb.T, V @ model.Cb.T, N @ model.Cs.T
    F0 = W - S @ np.diag(gamma) @ model.Cs
    l2 = np.diag(B.T @ B)
    closed = -np.diag(Bd.T @ Bd) / l2 - 0.5 * np.diag(B.T @ F0 @ model.Cb.T) / l2
    assert np.allclose(lam, closed, rtol=1e-12, atol=1e-12)


def test_accelerations_keep_bar_length_rate_zero(prism3):
    model = DynamicsModel(prism3, bar_mass=0.3, string_mass=0.01)
    laws = StringLaws.from_stretch(member_lengths(prism3)[prism3.string_indices], 0.02, 500.0)
    rng = np.random.default_rng(2)
    N, V, _ = project(model, prism3.positions, rng.normal(size=(3, 6)))
    A, _, _ = accelerations(model, N, V, laws, np.zeros((3, 6)))
    B, Bd, Bdd = N @ model.Cb.T, V @ model.Cb.T, A @ model.Cb.T
    # second derivative of |b|^2 / 2 is |b'|^2 + b . b''
    assert np.allclose((Bd * Bd).sum(0) + (B * Bdd).sum(0), 0.0, atol=1e-10)


def test_zero_forces_state_unchanged(prism3):
    model = DynamicsModel(prism3, bar_mass=1.0)
    laws = StringLaws.from_stretch(member_lengths(prism3)[prism3.string_indices], 0.0, 100.0)
    s0 = DynamicsState.at_rest(prism3)
    s1, info = step(s0, model, laws, None, 1e-3)
    assert np.array_equal(s1.positions, s0.positions)
    assert not s1.velocities.any()
    assert info.projection == 0.0


def test_free_bar_momentum_and_spin():
    topo = single_bar()
    model = DynamicsModel(topo, bar_mass=2.0)
    V = np.array([[0.3, 0.3], [-0.5, 0.7], [0.1, 0.1]])  # drift plus spin about z
    state = DynamicsState(topo.positions, V)
    p0 = linear_momentum(state, model)
    h0 = angular_momentum(state, model)
    com0 = state.positions.mean(axis=1)
    s = state
    for _ in range(1000):
        s, _ = step(s, model, NO_STRINGS, None, 1e-3)
    p1 = linear_momentum(s, model)
    assert np.allclose(p1, p0, rtol=1e-10, atol=1e-12)
    assert np.allclose(s.positions.mean(axis=1), com0 + 1.0 * p0 / 2.0, atol=1e-10)
    h1 = angular_momentum(s, model)
    assert np.linalg.norm(h1 - h0) <= 1e-9 * np.linalg.norm(h0)


def test_isolated_bars_conserve_angular_momentum(prism3):
    model = DynamicsModel(prism3, bar_mass=0.5, bar_mass_model="consistent")
    laws = StringLaws.from_stretch(member_lengths(prism3)[prism3.string_indices], -0.5, 100.0)  # all slack
    rng = np.random.default_rng(4)
    N, V, _ = project(model, prism3.positions, rng.normal(size=(3, 6)))
    s = DynamicsState(N, V)
    bars = [m.ends for m in prism3.bars]
    h0 = [angular_momentum(s, model, ends) for ends in bars]
    for _ in range(500):
        s, _ = step(s, model, laws, None, 1e-3)
    for ends, h in zip(bars, h0):
        assert np.linalg.norm(angular_momentum(s, model, ends) - h) <= 1e-9 * np.linalg.norm(h)


def test_consistent_mass_rod_inertia():
    topo = single_bar(2.0)
    model = DynamicsModel(topo, bar_mass=3.0, bar_mass_model="consistent")
    V = np.array([[0.0, 0.0], [-1.0, 1.0], [0.0, 0.0]])  # omega = 1 rad/s
    h = angular_momentum(DynamicsState(topo.positions, V), model)
    assert h[2] == pytest.approx(3.0 * 2.0**2 / 12)
    lumped = DynamicsModel(topo, bar_mass=3.0)
    assert angular_momentum(DynamicsState(topo.positions, V), lumped)[2] == pytest.approx(3.0 * 2.0**2 / 4)


def test_model_errors(prism3):
    with pytest.raises(ModelError):
        DynamicsModel(prism3, bar_mass=-1.0)
    with pytest.raises(ModelError):
        DynamicsModel(prism3, bar_mass_model="foo")
    with pytest.raises(ModelError):
        DynamicsModel(prism3, bar_mass=0.0, string_mass=0.0)
    flat = single_bar().with_positions(np.zeros((3, 2)))
    with pytest.raises(ModelError, match="zero-length"):
        DynamicsModel(flat)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_integration_failure_keeps_last_state(prism3):
    model = DynamicsModel(prism3, bar_mass=1.0)
    laws = StringLaws.from_stretch(member_lengths(prism3)[prism3.string_indices], 0.0, 1.0)
    s0 = DynamicsState.at_rest(prism3)
    W = np.full((3, 6), np.inf)
    with pytest.raises(IntegrationError) as info:
        step(s0, model, laws, W, 1e-3)
    assert info.value.last_state is s0
    with pytest.raises(ValueError):
        step(s0, model, laws, None, 0.0)


def test_projection_restores_lengths_and_anchors(rig):
    model = DynamicsModel(rig, bar_mass=0.2, string_mass=0.005)
    rng = np.random.default_rng(9)
    N = rig.positions + rng.normal(scale=1e-3, size=rig.positions.shape)
    V = rng.normal(size=N.shape)
    N1, V1, disp = project(model, N, V)
    assert max_bar_drift(model, N1) < 1e-12
    assert np.array_equal(N1[:, rig.anchored], rig.positions[:, rig.anchored])
    assert not V1[:, rig.anchored].any()
    B = N1 @ model.Cb.T
    Bd = V1 @ model.Cb.T
    assert np.abs((B * Bd).sum(0)[model.constrained]).max() < 1e-10
    assert disp > 0


def test_energy_examples():
    # single node mass m at height h
    nodes = (Node(0, (0.0, 0.0, 3.0)), Node(1, (1.0, 0.0, 0.0), True))
    t = Topology(nodes, (Member(MemberKind.STRING, (0, 1), "u"),))
    model = DynamicsModel(t, bar_mass=0.0, node_mass=[2.0, 0.0])
    laws = StringLaws([10.0], [10.0], 0.0)  # slack
    e = energy(DynamicsState.at_rest(t), model, laws, GRAVITY)
    assert e.gravitational == pytest.approx(2.0 * GRAVITY * 3.0)
    assert e.kinetic == 0.0 and e.elastic == 0.0
    flat = Topology((Node(0, (0.0, 0.0, 0.0)), Node(1, (1.0, 0.0, 0.0))), t.members)
    e0 = energy(DynamicsState.at_rest(flat), DynamicsModel(flat, bar_mass=0.0, node_mass=1.0), laws, GRAVITY)
    assert (e0.kinetic, e0.gravitational, e0.elastic) == (0.0, 0.0, 0.0)


def test_simulate_sampling(prism3):
    model, laws, schedule, state = conservative_prism()
    zero = simulate(model, state, laws, schedule, 0.0, 1e-3)
    assert len(zero) == 1
    a = simulate(model, state, laws, schedule, 0.05, 1e-3, stride=5)
    b = simulate(model, state, laws, schedule, 0.05, 1e-3, stride=10)
    assert len(a) == 11 and len(b) == 6
    assert abs((len(a) - 1) - 2 * (len(b) - 1)) <= 1
    assert a.times[-1] == b.times[-1] == pytest.approx(0.05)
    assert np.array_equal(a.states[-1].positions, b.states[-1].positions)
    with pytest.raises(ValueError):
        simulate(model, state, laws, schedule, -1.0)
    with pytest.raises(ValueError):
        simulate(model, state, laws, schedule, 1.0, stride=0)


def test_short_conservative_run():
    model, laws, schedule, state = conservative_prism()
    traj = simulate(model, state, laws, schedule, 0.5, 1e-4, stride=100)
    E = np.array(traj.diagnostics["total_energy"])
    assert np.abs(E - E[0]).max() / abs(E[0]) < 1e-6
    assert max(traj.diagnostics["bar_drift"]) < 1e-8
    # strings really are prestressed, so the energy is not trivially constant
    assert traj.diagnostics["elastic"][0] > 0


def test_trajectory_csv(prism3):
    model, laws, schedule, state = conservative_prism()
    traj = simulate(model, state, laws, schedule, 0.002, 1e-3)
    lines = traj.to_csv().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["time", "x0", "y0", "z0"]
    assert header[-6:] == ["kinetic", "gravitational", "elastic", "total_energy", "bar_drift", "projection"]
    assert len(lines) == 4
    assert float(lines[1].split(",")[1]) == state.positions[0, 0]


def test_load_schedule():
    topo = single_bar()
    model = DynamicsModel(topo, bar_mass=2.0)
    sched = LoadSchedule.from_dict(
        {"gravity": 10.0, "forces": {"0": [1, 0, 0]}, "pulses": [{"start": 0.1, "stop": 0.2, "node": 1, "force": [0, 5, 0]}]}, 2,
    )
    assert sched.forces(0.0, model).tolist() == [[1, 0], [0, 0], [-10, -10]]
    assert sched.forces(0.15, model)[1, 1] == 5.0
    assert sched.forces(0.2, model)[1, 1] == 0.0


def test_anchored_nodes_never_move(rig):
    cfg = {"loads": {"gravity": GRAVITY, "forces": {str(i): [5.0, 0, 0] for i in rig.group("top")}}}
    model, laws, schedule, state, _ = setup_from_config(rig, cfg)
    traj = simulate(model, state, laws, schedule, 0.02, 1e-4, stride=50)
    for s in traj.states:
        assert np.array_equal(s.positions[:, rig.anchored], rig.positions[:, rig.anchored])
    assert not np.array_equal(traj.states[-1].positions, traj.states[0].positions)


@pytest.mark.slow
def test_rig_settles_under_gravity(rig):
    top = rig.group("top")
    cfg = {
        "node_mass": {str(i): 1.0 for i in top},
        "strings": {"stiffness": 5000.0, "damping": 50.0, "stretch": 0.01},
        "loads": {"gravity": GRAVITY, "forces": {str(i): [5.0, 0.0, 0.0] for i in top}},
    }
    model, laws, schedule, state, _ = setup_from_config(rig, cfg)
    W = schedule.forces(0.0, model)
    traj = simulate(model, state, laws, schedule, 2.0, 1e-4, stride=1000)

    def potential(s):
        e = energy(s, model, laws, 0.0)
        # gravity is already in W, so the load potential covers it
        return e.elastic - float((W * s.positions).sum())

    drop = potential(traj.states[0]) - potential(traj.states[-1])
    assert drop > 0
    assert traj.diagnostics["kinetic"][-1] < 1e-6 * drop


def test_setup_from_config_variants(prism3):
    lengths = member_lengths(prism3)[prism3.string_indices]
    _, laws, _, _, cfg = setup_from_config(prism3, {"strings": {"rest_length": list(lengths * 0.9)}})
    assert np.allclose(laws.rest_length, lengths * 0.9)
    assert cfg["dt"] == default_config()["dt"]
    _, laws, _, _, _ = setup_from_config(prism3, {"strings": {"prestress": 5.0, "stiffness": 1000.0}})
    tension = laws.stiffness * (lengths - laws.rest_length)
    assert tension.min() == pytest.approx(5.0)
    flat = build_prism(3, 1.0, 1.0, 0.0)
    with pytest.raises(ModelError):
        setup_from_config(flat, {"strings": {"prestress": 5.0}})
    _, _, _, state, _ = setup_from_config(prism3, {"initial_velocity": {"0": [0.0, 1.0, 0.0]}})
    assert state.velocities.any()
