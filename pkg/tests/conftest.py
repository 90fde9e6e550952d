from __future__ import annotations

import numpy as np
import pytest

from ftcc.graph import Digraph
from ftcc.plant import LtiSystem, joint_rank_checks
from ftcc.scenario import load_scenario


@pytest.fixture(scope="session")
def paper_scenario():
    return load_scenario("paper-4node")


@pytest.fixture(scope="session")
def paper_init(paper_scenario):
    from ftcc.runtime import initialize

    return initialize(paper_scenario)


def random_strongly_connected(rng, n_nodes: int) -> Digraph:
    """Random digraph containing a random Hamiltonian cycle."""
    perm = rng.permutation(n_nodes)
    edges = {(int(perm[i]), int(perm[(i + 1) % n_nodes])) for i in range(n_nodes)}
    extra = int(rng.integers(0, n_nodes * (n_nodes - 1) // 2 + 1))
    for _ in range(extra):
        a, b = (int(v) for v in rng.integers(0, n_nodes, 2))
        if a != b:
            edges.add((a, b))
    return Digraph(n_nodes, tuple(sorted(edges)))


def random_joint_system(rng, n_agents: int, n: int, unstable: bool = True) -> LtiSystem:
    """Random plant that is jointly controllable and observable.

    Draws until the Kalman checks pass; generic draws almost always do.
    """
    for _ in range(50):
        a = rng.normal(size=(n, n))
        if unstable:
            a *= 1.3 / max(1.0, np.max(np.abs(np.linalg.eigvals(a))))
        dims_in = rng.multinomial(n, np.ones(n_agents) / n_agents) + 1
        dims_out = rng.multinomial(n, np.ones(n_agents) / n_agents) + 1
        b_list = tuple(rng.normal(size=(n, int(q))) for q in dims_in)
        c_list = tuple(rng.normal(size=(int(p), n)) for p in dims_out)
        sys = LtiSystem(a=a, b_list=b_list, c_list=c_list)
        ctrl, obsv = joint_rank_checks(sys)
        if ctrl and obsv:
            return sys
    raise AssertionError("failed to draw a jointly controllable/observable system")


def targets_for_spectrum(rng, a: np.ndarray) -> list[complex]:
    """A conjugate-closed full target set matching the spectrum's kinds."""
    eigs = np.linalg.eigvals(a)
    out: list[complex] = []
    for lam in eigs:
        if lam.imag > 1e-9:
            t = complex(rng.uniform(-0.55, 0.55), rng.uniform(0.05, 0.55))
            out += [t, t.conjugate()]
        elif abs(lam.imag) <= 1e-9:
            out.append(complex(rng.uniform(-0.85, 0.85)))
    return out
