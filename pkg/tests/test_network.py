import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssrscan.model import Bus, Line, NetworkModel
from ssrscan.network import (
    SingularNetworkError,
    SusceptanceMatrix,
    build_susceptance,
    eliminate,
    kron_reduce,
    line_flows,
    steady_state_angles,
)


def _net(buses, lines, loads=None):
    return NetworkModel(tuple(Bus(*b) for b in buses), tuple(Line(*l) for l in lines), loads or {})


def _roles(net):
    return {b.id: b.role for b in net.buses}


def test_single_line_laplacian():
    b = build_susceptance(_net([("a", "generator"), ("b", "slack")], [("a", "b", 0.5)]))
    np.testing.assert_array_equal(b.matrix, [[2, -2], [-2, 2]])


def test_parallel_lines_add():
    b = build_susceptance(_net([("a", "generator"), ("b", "slack")], [("a", "b", 0.5), ("a", "b", 0.5)]))
    assert b.matrix[0, 1] == -4.0


def test_bundled_laplacian(two_area):
    B = build_susceptance(two_area.network).matrix
    np.testing.assert_allclose(B, B.T, atol=0)
    np.testing.assert_allclose(B.sum(axis=1), 0, atol=1e-9)
    assert np.all(B - np.diag(np.diag(B)) <= 0)


def test_slack_absorbs_single_load():
    net = _net([("g", "generator"), ("s", "slack")], [("g", "s", 0.5)], {"s": 50})
    c = kron_reduce(build_susceptance(net), _roles(net))
    assert c.terminal[0, 0] == pytest.approx(2.0)
    np.testing.assert_array_equal(c.B_e, [[0.0]])


def test_three_bus_chain():
    # g -(0.5)- l -(0.5)- s. Eliminating l by hand: the series reactance is 1,
    # so A_e = 1, and a load at l is shared equally between g and the slack,
    # raising g's output by 0.5 per unit of load.
    net = _net([("g", "generator"), ("l", "load"), ("s", "slack")], [("g", "l", 0.5), ("l", "s", 0.5)])
    c = kron_reduce(build_susceptance(net), _roles(net))
    assert c.terminal[0, 0] == pytest.approx(1.0)
    assert c.B_e[0, c.load_buses.index("l")] == pytest.approx(0.5)
    assert c.B_e[0, c.load_buses.index("s")] == 0.0
    assert c.A_e.shape == (1, 5)
    np.testing.assert_array_equal(c.A_e[:, 1:], 0)


def _dc_power_flow(net, injections_mw):
    """Reference solve: grounded Laplacian with the slack row and column
    removed, angles of every bus."""
    B = build_susceptance(net)
    slack = net.slack_bus
    keep = [i for i, b in enumerate(B.bus_ids) if b != slack]
    P = np.array([injections_mw.get(b, 0.0) for b in B.bus_ids]) / net.base_mva
    theta = np.zeros(len(B.bus_ids))
    theta[keep] = np.linalg.solve(B.matrix[np.ix_(keep, keep)], P[keep])
    return dict(zip(B.bus_ids, theta))


def test_two_area_matches_independent_power_flow(two_area, coupling):
    net = two_area.network
    inj = {g.bus: g.dispatch_mw for g in two_area.generators}
    for b, mw in net.loads.items():
        inj[b] = inj.get(b, 0.0) - mw
    ref = _dc_power_flow(net, inj)
    got = steady_state_angles(coupling, two_area.dispatch_pu(), net.load_vector_pu())
    for b in net.bus_ids:
        assert got[b] == pytest.approx(ref[b], abs=1e-12)


def test_steady_state_consistency(two_area, coupling):
    angles = steady_state_angles(coupling, two_area.dispatch_pu(), two_area.network.load_vector_pu())
    theta_g = np.array([angles[b] for b in coupling.generator_buses])
    p = coupling.electrical_power(theta_g, two_area.network.load_vector_pu())
    np.testing.assert_allclose(p, two_area.dispatch_pu(), atol=1e-8)


def test_tie_flow_400mw(two_area, coupling):
    net = two_area.network
    angles = steady_state_angles(coupling, two_area.dispatch_pu(), net.load_vector_pu())
    flows = dict(zip(((l.from_bus, l.to_bus) for l in net.lines), line_flows(net, angles)))
    assert flows[("3", "13")] * net.base_mva == pytest.approx(400.0, rel=0.01)


def test_zero_dispatch_zero_load(coupling):
    angles = steady_state_angles(coupling, np.zeros(4), np.zeros(len(coupling.load_buses)))
    assert all(v == 0 for v in angles.values())


def test_single_line_angle():
    net = _net([("g", "generator"), ("s", "slack")], [("g", "s", 0.5)])
    c = kron_reduce(build_susceptance(net), _roles(net))
    angles = steady_state_angles(c, [1.0], [0.0])
    assert angles["g"] - angles["s"] == pytest.approx(0.5)


def test_singular_load_block_names_buses():
    # Load buses x and y form an island with no path to a generator or slack.
    b = SusceptanceMatrix(
        ("g", "s", "x", "y"),
        np.array([[1.0, -1, 0, 0], [-1, 1, 0, 0], [0, 0, 1, -1], [0, 0, -1, 1]]),
    )
    with pytest.raises(SingularNetworkError) as err:
        kron_reduce(b, {"g": "generator", "s": "slack", "x": "load", "y": "load"})
    assert set(err.value.buses) == {"x", "y"}


def test_terminal_block_symmetric(coupling):
    T = coupling.terminal
    np.testing.assert_allclose(T, T.T, atol=1e-10)
    assert np.linalg.eigvalsh(T).min() > 0


def test_shaft_columns_zero(coupling):
    n = coupling.n
    np.testing.assert_array_equal(coupling.A_e[:, n:], 0)


# --- properties on random networks ----------------------------------------

@st.composite
def random_networks(draw):
    n_gen = draw(st.integers(1, 3))
    n_load = draw(st.integers(1, 4))
    ids = [f"g{i}" for i in range(n_gen)] + [f"l{i}" for i in range(n_load)] + ["s"]
    roles = ["generator"] * n_gen + ["load"] * n_load + ["slack"]
    x = st.floats(0.01, 2.0)
    lines = [(ids[i], ids[draw(st.integers(0, i - 1))], draw(x)) for i in range(1, len(ids))]
    for _ in range(draw(st.integers(0, 3))):
        i, j = draw(st.integers(0, len(ids) - 1)), draw(st.integers(0, len(ids) - 1))
        if i != j:
            lines.append((ids[i], ids[j], draw(x)))
    return _net(list(zip(ids, roles)), lines)


@settings(max_examples=50, deadline=None)
@given(random_networks(), st.data())
def test_power_balance(net, data):
    c = kron_reduce(build_susceptance(net), _roles(net))
    theta = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=c.n, max_size=c.n)))
    loads = np.array(data.draw(st.lists(st.floats(0, 5), min_size=len(c.load_buses), max_size=len(c.load_buses))))
    p_gen = c.electrical_power(theta, loads)
    # Slack absorption from the full network solution.
    B = build_susceptance(net)
    angles = dict(zip(c.generator_buses, theta))
    angles.update(zip(c.interior_buses, c.interior_from_terminal @ theta + c.interior_from_load @ loads))
    angles[c.slack_bus] = 0.0
    th = np.array([angles[b] for b in B.bus_ids])
    p_slack = (B.matrix @ th)[B.index(c.slack_bus)]
    interior_load = sum(loads[c.load_buses.index(b)] for b in c.interior_buses)
    assert p_gen.sum() + p_slack == pytest.approx(interior_load, abs=1e-8 * (1 + abs(p_gen).sum()))


@settings(max_examples=50, deadline=None)
@given(random_networks())
def test_two_step_reduction(net):
    B = build_susceptance(net)
    roles = _roles(net)
    one_shot = kron_reduce(B, roles)
    interior = list(one_shot.interior_buses)
    reduced = B
    for bus in interior:
        reduced, _ = eliminate(reduced, [bus])
    gi = [reduced.index(g) for g in one_shot.generator_buses]
    np.testing.assert_allclose(reduced.matrix[np.ix_(gi, gi)], one_shot.terminal, atol=1e-10 * np.abs(one_shot.terminal).max())


@settings(max_examples=50, deadline=None)
@given(random_networks())
def test_reduced_symmetric(net):
    c = kron_reduce(build_susceptance(net), _roles(net))
    np.testing.assert_allclose(c.terminal, c.terminal.T, atol=1e-10 * np.abs(c.terminal).max())
