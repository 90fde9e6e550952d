import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftcc.consensus import (
    diameter_upper_bound,
    exact_average_fixed_rounds,
    finite_time_average,
    m_bar,
    ratio_step,
)
from ftcc.exceptions import DegenerateInitializationError, InvalidInputError
from ftcc.graph import Digraph, diameter, digraph_from_weight_matrix, out_weight_matrix

from conftest import random_strongly_connected

FOURNODE_P = np.array(
    [
        [1 / 3, 0, 1 / 4, 1 / 3],
        [1 / 3, 1 / 2, 1 / 4, 0],
        [0, 1 / 2, 1 / 4, 1 / 3],
        [1 / 3, 0, 1 / 4, 1 / 3],
    ]
)


def three_cycle():
    return Digraph(3, ((0, 1), (1, 2), (2, 0)))


class TestRatioStep:
    def test_consensus_already_reached(self):
        p = out_weight_matrix(three_cycle())
        alpha = np.full(3, 7.5)
        pi = np.ones(3)
        a2, p2 = ratio_step(alpha, pi, p)
        assert np.allclose(a2 / p2, 7.5)

    def test_two_node_hand_computed(self):
        p = np.full((2, 2), 0.5)
        a2, p2 = ratio_step(np.array([0.0, 2.0]), np.ones(2), p)
        assert np.allclose(a2, [1.0, 1.0])
        assert np.allclose(a2 / p2, [1.0, 1.0])

    def test_mass_conservation_fournode(self):
        rng = np.random.default_rng(0)
        alpha = rng.normal(size=(4, 3))
        pi = np.ones(4)
        total = alpha.sum(axis=0)
        for _ in range(50):
            alpha, pi = ratio_step(alpha, pi, FOURNODE_P)
        assert np.max(np.abs(alpha.sum(axis=0) - total)) < 1e-12
        assert abs(pi.sum() - 4.0) < 1e-12

    @given(st.integers(0, 500))
    @settings(max_examples=25, deadline=None)
    def test_mass_conservation_random(self, seed):
        rng = np.random.default_rng(seed)
        g = random_strongly_connected(rng, int(rng.integers(2, 8)))
        p = out_weight_matrix(g)
        alpha = rng.normal(size=g.node_count)
        pi = np.ones(g.node_count)
        total = alpha.sum()
        for _ in range(30):
            alpha, pi = ratio_step(alpha, pi, p)
        assert abs(alpha.sum() - total) < 1e-12 * max(1.0, abs(total))
        assert np.all(pi > 0)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            ratio_step(np.zeros(3), np.ones(2), np.eye(2))


class TestFormulas:
    @pytest.mark.parametrize(
        "degrees,expected",
        [((0,), 3), ((2, 2, 1, 2), 11), ((1, 1), 7)],
    )
    def test_m_bar(self, degrees, expected):
        assert m_bar(degrees) == expected

    @pytest.mark.parametrize(
        "degrees,expected", [((0,), 0), ((2, 2, 1, 2), 2), ((3, 1), 3)]
    )
    def test_diameter_bound(self, degrees, expected):
        assert diameter_upper_bound(degrees) == expected

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            m_bar(())


class TestTerminationMechanics:
    def _state(self, **kw):
        from ftcc.consensus import RatioNodeState

        st = RatioNodeState(node_id=0, alpha=np.zeros(1), pi=1.0)
        for k, v in kw.items():
            setattr(st, k, v)
        return st

    def test_all_zero_stays_zero(self):
        from ftcc.consensus import max_consensus_step

        g = three_cycle()
        assert max_consensus_step(g, [0, 0, 0], [0, 0, 0], [0, 0, 0]) == [0, 0, 0]

    def test_max_propagates_within_diameter_rounds(self):
        from ftcc.consensus import max_consensus_step

        g = three_cycle()
        phi = [0, 0, 0]
        c = [1, 5, 3]
        for _ in range(diameter(g)):
            phi = max_consensus_step(g, phi, c, c)
        assert phi == [5, 5, 5]

    def test_quiet_rounds_accumulate_to_done(self):
        from ftcc.consensus import termination_update

        st = self._state(c0=6, phi=6, r=1)
        for round_index in range(7, 30):
            termination_update(st, 6, round_index)
            if st.done:
                break
        assert st.r == 6 and st.done

    def test_change_resets_the_held_count(self):
        from ftcc.consensus import termination_update

        st = self._state(c0=6, phi=3, r=4)
        termination_update(st, 5, round_index=4)
        assert st.r == 1   # held-count restarts at the attainment round

    def test_local_budget_cap_terminates(self):
        from ftcc.consensus import termination_update

        st = self._state(c0=4, phi=6, r=1)
        termination_update(st, 6, round_index=11)   # 2*phi - 1
        assert st.done and st.done_round == 11


class TestFiniteTimeAverage:
    def test_single_node(self):
        g = Digraph(1, ())
        res = finite_time_average(g, [42.0])
        assert res.mu[0, 0] == 42.0
        assert res.rounds_used == 0
        assert res.m_bar == 3

    def test_three_cycle_mean(self):
        res = finite_time_average(three_cycle(), [0.0, 3.0, 6.0])
        assert np.allclose(res.mu[:, 0], 3.0, atol=1e-10)
        assert res.degrees == [2, 2, 2]
        assert res.m_bar == 11
        assert max(res.done_rounds) <= res.m_bar

    def test_fournode_budget(self):
        g = digraph_from_weight_matrix(FOURNODE_P)
        res = finite_time_average(g, [0.0, 1.0, 2.0, 3.0], weights=FOURNODE_P)
        assert max(2 * (m + 1) for m in res.degrees) == 6
        assert res.m_bar == 11
        assert max(res.done_rounds) <= 11
        assert np.allclose(res.mu[:, 0], 1.5, atol=1e-10)

    def test_vector_payload(self):
        g = digraph_from_weight_matrix(FOURNODE_P)
        rng = np.random.default_rng(4)
        vals = rng.normal(size=(4, 5))
        res = finite_time_average(g, vals, weights=FOURNODE_P)
        for j in range(4):
            assert np.allclose(res.mu[j], vals.mean(axis=0), atol=1e-9)

    def test_exactness_and_termination_random(self):
        rng = np.random.default_rng(99)
        for _ in range(40):
            g = random_strongly_connected(rng, int(rng.integers(2, 11)))
            x0 = rng.normal(size=g.node_count)
            res = finite_time_average(g, x0)
            scale = max(1.0, abs(x0.mean()))
            assert np.max(np.abs(res.mu[:, 0] - x0.mean())) <= 1e-8 * scale
            assert max(res.done_rounds) <= res.m_bar
            # no node done before its own exact value is computable
            assert all(
                d >= det for d, det in zip(res.done_rounds, res.detection_rounds)
            )
            # the network maximum counter is certified by every node whose
            # detected degree genuinely bounds its in-eccentricity; nodes with
            # degenerate weight rows may under-certify, so only the max view
            # is asserted here
            assert max(res.phi_done) == max(2 * (m + 1) for m in res.degrees)

    def test_diameter_bound_dominates_true_diameter(self):
        rng = np.random.default_rng(123)
        for _ in range(25):
            g = random_strongly_connected(rng, int(rng.integers(2, 9)))
            res = finite_time_average(g, rng.normal(size=g.node_count))
            assert res.diameter_bound >= diameter(g)

    def test_path_with_back_edge_bound(self):
        g = Digraph(4, ((0, 1), (1, 2), (2, 3), (3, 0)))
        res = finite_time_average(g, [1.0, -1.0, 2.0, 0.5])
        assert res.diameter_bound >= diameter(g)

    def test_round_cap_raises(self):
        g = digraph_from_weight_matrix(FOURNODE_P)
        with pytest.raises(DegenerateInitializationError) as err:
            finite_time_average(g, [0.0, 1.0, 2.0, 3.0], round_cap=3)
        assert err.value.history is not None


class TestFixedRounds:
    def test_all_equal_estimates(self):
        g = digraph_from_weight_matrix(FOURNODE_P)
        vals = np.tile([1.0, -2.0], (4, 1))
        mu, rounds = exact_average_fixed_rounds(g, vals, 11, weights=FOURNODE_P)
        assert np.allclose(mu, [1.0, -2.0], atol=1e-12)
        assert rounds <= 11

    def test_three_cycle_scalar(self):
        mu, _ = exact_average_fixed_rounds(three_cycle(), [0.0, 3.0, 6.0], 11)
        assert np.allclose(mu[:, 0], 3.0, atol=1e-10)

    def test_all_zero_estimates(self):
        g = digraph_from_weight_matrix(FOURNODE_P)
        mu, _ = exact_average_fixed_rounds(g, np.zeros((4, 2)), 11, weights=FOURNODE_P)
        assert np.allclose(mu, 0.0)

    def test_insufficient_rounds_raise(self):
        g = digraph_from_weight_matrix(FOURNODE_P)
        with pytest.raises(DegenerateInitializationError):
            exact_average_fixed_rounds(g, [0.0, 1.0, 2.0, 3.0], 3, weights=FOURNODE_P)
