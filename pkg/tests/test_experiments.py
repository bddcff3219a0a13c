import json
import math
from fractions import Fraction

import numpy as np
import pytest

from opdyn import dynamics as dyn
from opdyn import experiments as ex
from opdyn.errors import InvalidArgument
from opdyn.graph import make_counterexample, make_cycle, make_random_regular, spectral_certificate
from opdyn.seeding import splitmix64, trial_seed
from opdyn.voting import ElectionSystem, elect_plurality


def test_splitmix_reference_vector():
    # first output of the reference SplitMix64 generator seeded with 0
    assert trial_seed(0, 0) == 0xE220A8397B1DCDAF
    assert splitmix64(0) == 0


def test_closed_forms():
    assert ex.cycle_limit(0.5) == pytest.approx(0.5)
    assert ex.cycle_limit(1.0) == pytest.approx(1.0)
    assert ex.cycle_limit(0.75) == pytest.approx(0.703125 / 0.8125)
    assert ex.cycle_threshold(0.5) == pytest.approx(ex.cycle_limit(0.75))


class TestEfficiency:
    def test_point_mass(self):
        cfg = ex.ExperimentConfig(make_cycle(21), delta=1.0, rounds=5, trials=300)
        assert ex.estimate_efficiency(cfg).estimate == 1.0

    def test_unbiased_is_half(self):
        cfg = ex.ExperimentConfig(make_cycle(21), delta=0.0, rounds=21, trials=4000, seed=3)
        res = ex.estimate_efficiency(cfg)
        assert abs(res.estimate - 0.5) <= 3 * res.half_width

    def test_plurality_three_alternatives(self):
        # prime number of voters so the tie-free election applies
        cfg = ex.ExperimentConfig(make_random_regular(53, 4, seed=2), rule=dyn.WEIGHTED_PLURALITY, q=3,
                                  election=ElectionSystem.prime_transitive(3, 53),
                                  delta=0.4, rounds=20, trials=500, seed=5)
        res = ex.estimate_efficiency(cfg)
        assert res.estimate > 0.8 and res.metadata["reperturbations"] == 0

    def test_config_needs_one_bias(self):
        with pytest.raises(InvalidArgument):
            ex.ExperimentConfig(make_cycle(5), rounds=1)
        with pytest.raises(InvalidArgument):
            ex.ExperimentConfig(make_cycle(5), delta=0.1, p=0.6, rounds=1)

    def test_json_sorted(self):
        cfg = ex.ExperimentConfig(make_cycle(11), p=0.75, rounds=11, trials=100)
        js = ex.estimate_efficiency(cfg).to_json()
        assert '"config_echo"' in js and '"wall_ms"' in js


class TestCounterexample:
    def test_bound_value(self):
        assert ex.counterexample_bound("2/3", 50) == pytest.approx((1 / 27) * (1 - math.exp(-1)))

    def test_clique_outvotes_a(self):
        g = make_counterexample("2/3", 1)
        x = np.zeros((1, g.n), np.int8)
        x[0, list(g.roles["A"])] = 1
        final = dyn.simulate_batch(g, dyn.MAJORITY_RULE, x, 2, 2).state_at(2)[0]
        assert elect_plurality(final) == 0

    def test_measured_above_floor(self):
        res = ex.counterexample_failure("2/3", 50, trials=5000, seed=11)
        floor = res.metadata["analytic_lower_bound"]
        assert res.estimate >= floor - 3 * res.half_width

    def test_conditioned_on_a(self):
        res = ex.counterexample_failure("2/3", 50, trials=2000, seed=12, condition_on_a=True)
        assert res.estimate >= (1 - math.exp(-1)) - 3 * res.half_width

    def test_short_horizon_rejected(self):
        with pytest.raises(InvalidArgument):
            ex.counterexample_failure("2/3", 5, trials=10, rounds=1)


class TestInfluence:
    def majority3(self, x):
        return int(sum(x) >= 2)

    def test_majority(self):
        for i in range(3):
            assert ex.estimate_influence(self.majority3, ("1/2", "1/2"), 3, i) == Fraction(1, 8)

    def test_dictator(self):
        got = [ex.estimate_influence(lambda x: x[0], ("1/2", "1/2"), 3, i) for i in range(3)]
        assert got == [Fraction(1, 4), 0, 0]

    def test_constant(self):
        assert ex.estimate_influence(lambda x: 1, ("1/3", "1/3", "1/3"), 3, 1) == 0

    def test_sampled_close_to_exact(self):
        val = ex.estimate_influence(self.majority3, (0.5, 0.5), 3, 0, mode="sampled", samples=4000, seed=1)
        assert val == pytest.approx(0.125, abs=0.02)


def test_dictator_equality():
    rep = ex.dictator_equality_check([0.5, "2/3", 0.9])
    assert rep["all_equal"]
    assert [r["prob_zero"] for r in rep["rows"]] == ["1/2", "2/3", "9/10"]


class TestExpectation:
    def test_unbiased_start(self):
        rep = ex.expectation_bound_check(make_cycle(101), 0.5, 5, 2000, seed=1)
        assert rep["per_t_means"][0] == pytest.approx(50.5, abs=3 * rep["per_t_se"][0] + 1e-9)

    def test_all_zero(self):
        rep = ex.expectation_bound_check(make_cycle(31), 1.0, 10, 200)
        assert all(m == 0 for m in rep["per_t_means"]) and rep["ok"]


@pytest.fixture(scope="module")
def expander():
    return ex.expander_for_unanimity(n=400, d=64, seed=4)


class TestUnanimity:
    def test_needs_certificate(self, expander):
        g, _ = expander
        with pytest.raises(InvalidArgument):
            ex.unanimity_experiment(g, None, dyn.InitialDistribution.binary(0.9), 50, 10)

    def test_rejects_weak_certificate(self):
        g = dyn.tie_proof(make_cycle(21))
        with pytest.raises(InvalidArgument):
            ex.unanimity_experiment(g, spectral_certificate(g), dyn.InitialDistribution.binary(0.9), 50, 10)

    def test_point_mass(self):
        g, cert = ex.expander_for_unanimity(n=2000, d=128, seed=0xD1CE)
        rep = ex.unanimity_experiment(g, cert, dyn.InitialDistribution.binary(1.0), 10, 20)
        assert rep["estimate"] == 1.0 and rep["trigger_violations"] == 0

    @pytest.mark.parametrize("p", [0.6, 0.75, 0.85])
    def test_guarantees_hold_below_trigger_level(self, p):
        g, cert = ex.expander_for_unanimity(n=2000, d=128, seed=0xD1CE)
        rep = ex.unanimity_experiment(g, cert, dyn.InitialDistribution.binary(p), 100, 40, seed=int(p * 100))
        assert rep["trigger_violations"] == rep["unstable_violations"] == rep["almost_consensus_violations"] == 0


def test_threshold_sweep_half_alpha_succeeds():
    rep = ex.threshold_sweep(make_cycle(1001), 0.75, [0.5, 0.6, 0.95], 50, 500, seed=3)
    est = [r["estimate"] for r in rep["rows"]]
    assert est[0] > 0.99
    assert est[0] >= est[1] >= est[2]


def test_threshold_alpha_above_zero_fraction_gives_one():
    # g_alpha is 1 whenever the ones reach (1 - alpha) n; with alpha near 1 that is almost always
    rep = ex.threshold_sweep(make_cycle(101), 0.6, [0.99], 10, 200, seed=1)
    assert rep["rows"][0]["estimate"] < 0.05


def test_cycle_check_small():
    rep = ex.cycle_closed_form_check(301, 0.75, 50, 2000, seed=9)
    assert rep["oracle_mismatches"] == 0
    assert abs(rep["estimate"] - rep["closed_form"]) <= 3 * rep["half_width"] + 0.01


def test_cycle_check_rejects_short_cycle():
    with pytest.raises(InvalidArgument):
        ex.cycle_closed_form_check(51, 0.75, 30, 10)


@pytest.mark.parametrize("workers", [2, 3])
def test_results_independent_of_workers(workers):
    base = ex.ExperimentConfig(make_cycle(51), p=0.7, rounds=51, trials=1700, seed=77)
    par = ex.ExperimentConfig(make_cycle(51), p=0.7, rounds=51, trials=1700, seed=77, workers=workers)
    a, b = (json.loads(ex.estimate_efficiency(c).to_json()) for c in (base, par))
    a.pop("wall_ms"), b.pop("wall_ms")
    assert a == b


def test_periodicity_small():
    rep = ex.periodicity_check(30, seed=5)
    assert rep["ok"] and rep["pairs"] + rep["ties"] == 30
