"""Outcome models, estimator families, and integrated-MSE computation."""

import numpy as np
import pytest

from lue.design import BernoulliDesign, allocation_matrix
from lue.estimators import check_unbiased
from lue.networks import Network, gen_k_regular_directed
from lue.simulation import (
    ExperimentConfig,
    NetworkConfig,
    OutcomeModel,
    UnitParameters,
    build_estimator_family,
    compute_imse,
    config_hash,
    estimate_average_effect,
    potential_outcome,
    sample_parameters,
    true_average_effect,
    unit_exposure_distribution,
)


def three_cycle():
    a = np.zeros((3, 3), dtype=int)
    a[0, 1] = a[1, 2] = a[2, 0] = 1
    return Network(a)


class TestSampleParameters:
    def test_dilated_variance_and_correlation(self):
        """Under dilation the top interference effect tracks the baseline exactly."""
        net = gen_k_regular_directed(4, 2, seed=0)
        model = OutcomeModel("dilated", eta1=1.0)
        alphas, tops = [], []
        for draw in range(10_000):
            params = sample_parameters(net, model, [99, draw])
            alphas.append(params[0].alpha)
            tops.append(params[0].interference[-1])
        alphas, tops = np.array(alphas), np.array(tops)
        assert np.var(tops) == pytest.approx(1.0, abs=0.05)
        assert np.corrcoef(alphas, tops)[0, 1] == pytest.approx(1.0, abs=0.02)

    def test_interaction_zero_level_is_exactly_additive(self):
        net = gen_k_regular_directed(5, 2, seed=1)
        params = sample_parameters(net, OutcomeModel("interaction", mu1=3.0, delta1=0.0), 7)
        assert all(p.interaction is None for p in params)

    def test_independent_zero_mean(self):
        net = gen_k_regular_directed(4, 2, seed=2)
        draws = np.array([
            sample_parameters(net, OutcomeModel("independent"), [5, d])[1].interference[0]
            for d in range(10_000)
        ])
        assert abs(draws.mean()) < 3 / np.sqrt(len(draws))

    def test_interference_mean_scales_with_degree_share(self):
        net = gen_k_regular_directed(6, 3, seed=3)
        model = OutcomeModel("independent", mu1=30.0)
        draws = np.array([
            sample_parameters(net, model, [11, d])[0].interference for d in range(4000)
        ])
        np.testing.assert_allclose(draws.mean(axis=0), [10.0, 20.0, 30.0], atol=0.2)

    def test_common_parameters_shared_across_interaction_levels(self):
        """Changing the interaction strength must not move the other draws."""
        net = gen_k_regular_directed(5, 2, seed=4)
        base = sample_parameters(net, OutcomeModel("interaction", mu1=2.0, delta1=0.0), [3, 0])
        bumped = sample_parameters(net, OutcomeModel("interaction", mu1=2.0, delta1=6.0), [3, 0])
        for p, q in zip(base, bumped):
            assert p.alpha == q.alpha and p.direct == q.direct
            np.testing.assert_array_equal(p.interference, q.interference)
        assert any(q.interaction is not None for q in bumped)

    def test_deterministic_given_seed(self):
        net = gen_k_regular_directed(5, 2, seed=4)
        a = sample_parameters(net, OutcomeModel("independent"), [8, 1])
        b = sample_parameters(net, OutcomeModel("independent"), [8, 1])
        for p, q in zip(a, b):
            assert p.alpha == q.alpha
            np.testing.assert_array_equal(p.interference, q.interference)


class TestPotentialOutcome:
    def test_direct_effect(self):
        params = UnitParameters(1.0, 2.0, np.zeros(2))
        assert potential_outcome(params, (0, 1)) == 3.0

    def test_baseline(self):
        params = UnitParameters(1.5, 2.0, np.array([4.0]))
        assert potential_outcome(params, (0, 0)) == 1.5

    def test_interaction_term(self):
        params = UnitParameters(0.0, 0.0, np.array([0.0, 5.0]), np.array([0.0, 3.0]))
        assert potential_outcome(params, (2, 1)) == 8.0
        assert potential_outcome(params, (2, 0)) == 5.0

    def test_degree_out_of_range(self):
        params = UnitParameters(0.0, 0.0, np.array([1.0]))
        with pytest.raises(ValueError, match="out of range"):
            potential_outcome(params, (2, 1))


class TestBuildEstimatorFamily:
    def setup_method(self):
        self.net = gen_k_regular_directed(10, 2, seed=5)
        self.design = BernoulliDesign(10, 0.5)

    def test_ht0_weights(self):
        family = build_estimator_family("HT0", self.net, self.design)
        dist = unit_exposure_distribution(self.design, self.net, 0)
        est = family[0]
        assert est.support() == {(2, 0), (0, 0)}
        assert est.weight((2, 0)) == pytest.approx(1 / dist[(2, 0)])
        assert est.weight((0, 0)) == pytest.approx(-1 / dist[(0, 0)])

    def test_htavg_halves_the_treated_weight(self):
        family = build_estimator_family("HTAvg", self.net, self.design)
        dist = unit_exposure_distribution(self.design, self.net, 3)
        assert family[3].weight((2, 1)) == pytest.approx(0.5 / dist[(2, 1)])

    def test_mind_satisfies_constraints_everywhere(self):
        family = build_estimator_family("MInd", self.net, self.design)
        for unit, est in family.items():
            dist = unit_exposure_distribution(self.design, self.net, unit)
            assert check_unbiased(est, dist) < 1e-9

    def test_mdil_satisfies_constraints_everywhere(self):
        family = build_estimator_family("MDil", self.net, self.design)
        for unit, est in family.items():
            dist = unit_exposure_distribution(self.design, self.net, unit)
            assert check_unbiased(est, dist) < 1e-9

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown estimator family"):
            build_estimator_family("HT2", self.net, self.design)


class TestEstimateAverageEffect:
    def test_zero_weights_give_zero(self):
        net = three_cycle()
        design = BernoulliDesign(3, 0.5)
        family = build_estimator_family("HT0", net, design)
        for est in family.values():
            est.weights = {}
        params = sample_parameters(net, OutcomeModel("independent"), 0)
        assert estimate_average_effect(family, net, np.array([1, 0, 1]), params) == 0.0

    def test_single_isolated_unit_rejected(self):
        net = Network(np.zeros((1, 1), dtype=int))
        params = [UnitParameters(0.0, 0.0, np.zeros(0))]
        with pytest.raises(ValueError, match="undefined"):
            estimate_average_effect({}, net, np.array([0]), params)

    def test_enumeration_recovers_truth_on_cycle(self):
        """Expectation over all 8 allocations equals the true effect exactly."""
        net = three_cycle()
        design = BernoulliDesign(3, 0.5)
        family = build_estimator_family("HT0", net, design)
        params = sample_parameters(net, OutcomeModel("independent"), 13)
        allocs, probs = allocation_matrix(design, "exhaustive")
        expectation = sum(
            p * estimate_average_effect(family, net, z, params)
            for z, p in zip(allocs, probs)
        )
        assert expectation == pytest.approx(true_average_effect(net, params), abs=1e-12)


class TestExperimentConfig:
    def test_exhaustive_budget(self):
        with pytest.raises(ValueError, match="n <= 20"):
            ExperimentConfig(
                network=NetworkConfig("k_regular", 30, k=2),
                outcome=OutcomeModel("independent"),
                allocation_mode="exhaustive",
            )

    def test_round_trip(self):
        config = ExperimentConfig(
            network=NetworkConfig("erdos_renyi", 12, p_edge=0.25),
            outcome=OutcomeModel("interaction", mu1=10.0, delta1=2.0),
            num_draws=50,
            allocation_mode="sample",
            allocation_count=200,
            master_seed=9,
        )
        again = ExperimentConfig.from_dict(config.to_dict())
        assert again == config
        assert config_hash(again) == config_hash(config)

    def test_network_config_validation(self):
        with pytest.raises(ValueError, match="need k"):
            NetworkConfig("k_regular", 10)
        with pytest.raises(ValueError, match="need p_edge"):
            NetworkConfig("erdos_renyi", 10)

    def test_unknown_estimator_rejected(self):
        with pytest.raises(ValueError, match="unknown estimator"):
            ExperimentConfig(
                network=NetworkConfig("k_regular", 10, k=2),
                outcome=OutcomeModel("independent"),
                estimators=("HT9",),
            )


class TestComputeImse:
    def small_config(self, **overrides):
        base = dict(
            network=NetworkConfig("k_regular", 8, k=2),
            outcome=OutcomeModel("independent"),
            num_draws=25,
            allocation_mode="exhaustive",
            master_seed=17,
        )
        base.update(overrides)
        return ExperimentConfig(**base)

    def test_additive_outcomes_have_no_bias(self):
        report = compute_imse(self.small_config())
        for result in report.results.values():
            assert result.bias_squared < 1e-20

    def test_decomposition_identity(self):
        report = compute_imse(self.small_config())
        for result in report.results.values():
            assert result.imse == pytest.approx(
                result.bias_squared + result.variance, abs=1e-9)

    def test_ht0_invariant_to_interaction(self):
        """Untreated-exposure weights never touch the interaction term."""
        reports = {
            d: compute_imse(self.small_config(
                outcome=OutcomeModel("interaction", mu1=5.0, delta1=float(d))))
            for d in (0, 4)
        }
        np.testing.assert_array_equal(
            reports[0].results["HT0"].per_draw_mse,
            reports[4].results["HT0"].per_draw_mse,
        )

    def test_ht1_bias_matches_interaction_oracle(self):
        """The treated two-term estimator's bias is the mean top-degree interaction."""
        config = self.small_config(
            outcome=OutcomeModel("interaction", mu1=0.0, delta1=3.0), num_draws=8)
        report = compute_imse(config)
        network = config.network.build(np.random.SeedSequence([config.master_seed, 3]))
        for draw in range(config.num_draws):
            params = sample_parameters(network, config.outcome, [config.master_seed, draw])
            theta_bar = true_average_effect(network, params)
            expected_bias = np.mean([p.interaction[-1] for p in params])
            observed_bias = report.results["HT1"].per_draw_mean[draw] - theta_bar
            assert observed_bias == pytest.approx(expected_bias, abs=1e-10)

    def test_sampled_mode_tracks_exact_mode(self):
        exact = compute_imse(self.small_config(num_draws=60))
        sampled = compute_imse(self.small_config(
            num_draws=60, allocation_mode="sample", allocation_count=3000))
        for name in exact.results:
            gap = abs(exact.results[name].imse - sampled.results[name].imse)
            spread = 3 * max(sampled.results[name].standard_error,
                             exact.results[name].standard_error)
            assert gap < max(spread, 0.35 * exact.results[name].imse)

    def test_permutation_equivariance(self):
        """Relabeling units (and their parameters) leaves the exact IMSE unchanged."""
        net = gen_k_regular_directed(7, 2, seed=21)
        design = BernoulliDesign(7, 0.5)
        rng = np.random.default_rng(0)
        perm = rng.permutation(7)
        permuted = Network(net.adjacency[np.ix_(perm, perm)])
        params = sample_parameters(net, OutcomeModel("independent"), 33)
        params_perm = [params[i] for i in perm]
        family = build_estimator_family("HTAvg", net, design)
        family_perm = build_estimator_family("HTAvg", permuted, design)
        allocs, probs = allocation_matrix(design, "exhaustive")
        first = sum(p * estimate_average_effect(family, net, z, params) ** 2
                    for z, p in zip(allocs, probs))
        second = sum(p * estimate_average_effect(family_perm, permuted, z[perm], params_perm) ** 2
                     for z, p in zip(allocs, probs))
        assert second == pytest.approx(first, abs=1e-10)

    def test_metadata_counts_excluded_units(self):
        # this ER seed yields several isolated units
        report = compute_imse(ExperimentConfig(
            network=NetworkConfig("erdos_renyi", 6, p_edge=0.15),
            outcome=OutcomeModel("independent"),
            num_draws=5,
            allocation_mode="exhaustive",
            master_seed=2,
        ))
        network = NetworkConfig("erdos_renyi", 6, p_edge=0.15).build(
            np.random.SeedSequence([2, 3]))
        isolated = int((network.in_degrees == 0).sum())
        assert report.metadata["excluded_degree_zero_units"] == isolated

    def test_reports_are_deterministic(self):
        a = compute_imse(self.small_config())
        b = compute_imse(self.small_config())
        for name in a.results:
            np.testing.assert_array_equal(a.results[name].per_draw_mse,
                                          b.results[name].per_draw_mse)
        assert a.csv_rows() == b.csv_rows()
