import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opdyn import dynamics as dyn
from opdyn.errors import InvalidArgument, NoAnchorError, TieError
from opdyn.graph import make_complete, make_cycle, make_path, make_random_regular, perturb_weights

S = dyn.OpinionState


def test_tie_proof_examples():
    assert dyn.tie_proof(make_cycle(4)) == make_cycle(4, True)
    assert dyn.tie_proof(make_cycle(5, True)) == make_cycle(5, True)
    g = dyn.tie_proof(make_path(3))
    assert np.flatnonzero(g.self_loops).tolist() == [1]


class TestSampling:
    def test_point_mass(self):
        s = dyn.sample_initial(make_cycle(9), dyn.InitialDistribution.binary(1.0), seed=1)
        assert s.opinions.tolist() == [0] * 9

    def test_uniform_frequency(self):
        g = make_path(10**5)
        s = dyn.sample_initial(g, dyn.InitialDistribution.binary(0.5), seed=2)
        assert abs(s.counts()[0] / g.n - 0.5) < 0.01

    def test_three_way_frequencies(self):
        g = make_path(10**5)
        s = dyn.sample_initial(g, dyn.InitialDistribution((0.5, 0.3, 0.2)), seed=3)
        assert np.allclose(s.counts() / g.n, [0.5, 0.3, 0.2], atol=0.01)

    def test_bad_distribution(self):
        with pytest.raises(InvalidArgument):
            dyn.InitialDistribution((0.5, 0.4))

    def test_biased_gap(self):
        d = dyn.InitialDistribution.biased(3, 0.3)
        gaps = [d.probs[0] - d.probs[b] for b in (1, 2)]
        assert gaps == pytest.approx([0.3, 0.3])


class TestMajorityStep:
    def test_triangle_with_loops(self):
        g = make_complete(3, with_self_loops=True)
        assert dyn.step_majority(g, S([0, 0, 1])).opinions.tolist() == [0, 0, 0]

    def test_fixed_point(self):
        g = make_cycle(7, True)
        assert dyn.step_majority(g, S([0] * 7)).opinions.tolist() == [0] * 7

    def test_c4_alternates(self):
        g = make_cycle(4, True)
        assert dyn.step_majority(g, S([0, 1, 0, 1])).opinions.tolist() == [1, 0, 1, 0]

    def test_even_degree_names_vertex(self):
        with pytest.raises(TieError) as err:
            dyn.step_majority(make_cycle(4), S([0, 1, 0, 1]))
        assert err.value.vertex == 0


class TestPluralityStep:
    def test_unanimous_fixed(self):
        g = perturb_weights(make_complete(5), 1e-3, seed=1)
        assert dyn.step_plurality(g, S([2] * 5, q=3)).opinions.tolist() == [2] * 5

    def test_matches_majority_for_two_alternatives(self):
        g = dyn.tie_proof(make_random_regular(40, 4, seed=7))
        rng = np.random.default_rng(0)
        x = rng.integers(0, 2, size=(1000, g.n)).astype(np.int8)
        assert np.array_equal(dyn.plurality_batch(g, x, 2), dyn.majority_batch(g, x))

    def test_exact_tie(self):
        with pytest.raises(TieError):
            dyn.step_plurality(make_cycle(4), S([0, 0, 1, 1]))

    def test_weights_break_ties(self):
        g = perturb_weights(make_cycle(6), 1e-2, seed=5)
        out = dyn.step_plurality(g, S([0, 1, 2, 0, 1, 2], q=3))
        assert out.q == 3


class TestUnanimitySwitch:
    def test_switches_on_unanimous_neighbours(self):
        g = make_path(3)
        assert dyn.step_unanimity_switch(g, S([1, 0, 1])).opinions[1] == 1

    def test_mixed_neighbours_keep_opinion(self):
        g = make_path(4)
        assert dyn.step_unanimity_switch(g, S([0, 1, 1, 0])).opinions.tolist()[1:3] == [1, 1]

    def test_all_same_fixed(self):
        g = make_cycle(6)
        assert dyn.step_unanimity_switch(g, S([1] * 6)).opinions.tolist() == [1] * 6


def test_custom_rule_sees_history():
    seen = []

    def copy_two_back(v, hist):
        seen.append(hist.shape)
        return hist[0][0]

    rule = dyn.custom_rule(copy_two_back, lookback=2)
    g = make_cycle(3)
    out = dyn.step(g, rule, [S([0, 0, 0]), S([1, 1, 1])])
    assert out.opinions.tolist() == [0, 0, 0]
    assert seen and seen[0][0] == 2


class TestRun:
    def test_all_zero_period_one(self):
        rec = dyn.run(make_cycle(9, True), dyn.MAJORITY_RULE, S([0] * 9))
        assert (rec.period, rec.entry_time) == (1, 0)

    def test_alternating_period_two(self):
        rec = dyn.run(make_cycle(4, True), dyn.MAJORITY_RULE, S([0, 1, 0, 1]))
        assert (rec.period, rec.entry_time) == (2, 0)

    def test_csv_columns(self):
        rec = dyn.run(make_cycle(5, True), dyn.MAJORITY_RULE, S([0, 1, 1, 0, 0]))
        assert rec.to_csv().splitlines()[0] == "t,N_0,N_1,L"

    @settings(max_examples=40, deadline=None)
    @given(st.integers(3, 40), st.integers(0, 2**32 - 1))
    def test_period_bound_on_odd_degree(self, n, seed):
        g = dyn.tie_proof(make_cycle(n))
        s0 = dyn.sample_initial(g, dyn.InitialDistribution.binary(0.5), seed)
        rec = dyn.run(g, dyn.MAJORITY_RULE, s0, t_max=4 * n * 3)
        assert rec.period in (1, 2)


class TestPotential:
    def test_unanimous_triangle(self):
        g = make_complete(3)
        assert dyn.potential(g, S([0, 0, 0]), S([0, 0, 0])) == 6

    def test_bipartite_split(self):
        g = make_cycle(4)
        assert dyn.potential(g, S([0, 1, 0, 1]), S([1, 0, 1, 0])) == 8
        assert dyn.potential(g, S([0, 1, 0, 1]), S([0, 1, 0, 1])) == 0

    def test_size_mismatch(self):
        with pytest.raises(InvalidArgument):
            dyn.potential(make_cycle(4), S([0] * 4), S([0] * 5))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 4))
    def test_nondecreasing_under_plurality(self, seed, q):
        g = perturb_weights(make_random_regular(30, 4, seed=seed % 997), 30.0**-3, seed)
        rng = np.random.default_rng(seed)
        s0 = S(rng.integers(0, q, g.n), q=q)
        rec = dyn.run(g, dyn.PLURALITY_RULE, s0, t_max=500)
        assert np.all(np.diff(rec.potential) >= -dyn.potential_tolerance(g))
        assert rec.period in (1, 2)


class TestCycleOracle:
    def test_worked_example(self):
        assert dyn.cycle_eventual_opinion([0, 0, 1, 0, 1, 1, 0], 3) == (1, 1)

    def test_inside_pair(self):
        assert dyn.cycle_eventual_opinion([1, 1, 0, 1, 0], 0) == (1, 0)

    def test_alternating(self):
        with pytest.raises(NoAnchorError):
            dyn.cycle_eventual_opinion([0, 1, 0, 1, 0, 1], 2)

    @pytest.mark.parametrize("n", [5, 7, 9, 11])
    def test_exhaustive_against_simulation(self, n):
        g = make_cycle(n, True)
        xs = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(np.int8)
        out = dyn.simulate_batch(g, dyn.MAJORITY_RULE, xs, 2, 4 * n)
        final = out.state_at(4 * n)
        for x, f in zip(xs, final):
            for v in range(n):
                assert dyn.cycle_eventual_opinion(x.tolist(), v).opinion == f[v]


def test_batch_state_at_extends_cycles():
    g = make_cycle(4, True)
    out = dyn.simulate_batch(g, dyn.MAJORITY_RULE, np.array([[0, 1, 0, 1]], np.int8), 2, 50)
    assert out.state_at(7).tolist() == [[1, 0, 1, 0]]
    assert out.state_at(8).tolist() == [[0, 1, 0, 1]]
