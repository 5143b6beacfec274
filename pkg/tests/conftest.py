import math

import numpy as np
import pytest

from tensegrity_rig.builders import build_prism, build_rig, prism_equilibrium_twist

# filled by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def prism3():
    return build_prism(3, 1.0, 1.0, prism_equilibrium_twist(3))


@pytest.fixture
def rig():
    return build_rig()


def node_balance_residual(topology, positions, gamma, lam, W):
    """Per-node force sum, member by member; never assembles K.

    Returns the largest force imbalance over free nodes.
    """
    N = np.asarray(positions, dtype=float)
    F = np.array(W, dtype=float, copy=True)
    gi = li = 0
    for m in topology.members:
        i, j = m.ends
        d = N[:, j] - N[:, i]  # from i towards j
        if m.is_bar:
            # compression pushes the ends apart
            F[:, i] -= lam[li] * d
            F[:, j] += lam[li] * d
            li += 1
        else:
            F[:, i] += gamma[gi] * d
            F[:, j] -= gamma[gi] * d
            gi += 1
    worst = 0.0
    for node in topology.nodes:
        if not node.anchored:
            worst = max(worst, math.sqrt(sum(F[d, node.id] ** 2 for d in range(3))))
    return worst


def conservative_prism(stiffness=2000.0, prestress=20.0, kick=0.05, seed=1):
    """Prestressed 3-strut prism with a small random velocity, no damping or loads."""
    from tensegrity_rig.dynamics import DynamicsState, project, setup_from_config

    topo = build_prism(3, 1.0, 1.0, prism_equilibrium_twist(3))
    cfg = {"strings": {"stiffness": stiffness, "prestress": prestress, "damping": 0.0}}
    model, laws, schedule, state, _ = setup_from_config(topo, cfg)
    V = np.random.default_rng(seed).normal(scale=kick, size=(3, topo.n_nodes))
    N, V, _ = project(model, state.positions, V)
    return model, laws, schedule, DynamicsState(N, V, 0.0)
