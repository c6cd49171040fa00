import math
import unittest

import numpy as np
from pydantic import ValidationError

from src.schemas.Channel_Schemas import ChannelParams
from src.schemas.Estimation_Schemas import ErrorStats, JointErrorStats, MonteCarloScenario, TrialEnsemble
from src.services.channels import ChannelModel, JointChannelModel, displacement_distribution
from src.services.errors import PreconditionError
from src.services.fisher import fi_exact, fisher_matrix, lossy_fi, multiparam_bounds
from src.services.hilbert import PhotonDistribution
from src.services.mle import (
    default_prior,
    fluctuation_study,
    log_likelihood,
    log_mse_slope,
    mle_joint,
    mle_single,
    mle_weak,
    monte_carlo_error,
    sample_counts,
    simulate_ensemble,
    trial_generator,
    weak_estimator_expectation,
)


class TestSampling(unittest.TestCase):
    def test_sample_counts_is_deterministic(self):
        dist = PhotonDistribution.from_probs([0.2, 0.5, 0.3])
        first = sample_counts(dist, 1000, 11)
        second = sample_counts(dist, 1000, 11)
        np.testing.assert_array_equal(first, second)
        self.assertEqual(int(first.sum()), 1000)

    def test_sample_counts_delta(self):
        counts = sample_counts(PhotonDistribution.delta(2, 5), 37, 0)
        np.testing.assert_array_equal(counts, [0, 0, 37, 0, 0])

    def test_empirical_frequencies(self):
        dist = displacement_distribution(3, 1.0)
        M = 10 ** 6
        freq = sample_counts(dist, M, 7) / M
        probs = dist.probs / dist.probs.sum()
        self.assertTrue(np.all(np.abs(freq - probs) <= 5 * np.sqrt(probs * (1 - probs) / M) + 1e-12))

    def test_sample_counts_needs_probes(self):
        with self.assertRaises(PreconditionError):
            sample_counts(PhotonDistribution.delta(0), 0, 0)

    def test_trial_streams(self):
        a = trial_generator(42, 3).random(4)
        b = trial_generator(42, 3).random(4)
        c = trial_generator(42, 4).random(4)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))


class TestLikelihood(unittest.TestCase):
    def test_impossible_outcome(self):
        def dist_at(theta):
            return PhotonDistribution.delta(2, 4)

        self.assertEqual(log_likelihood([0, 1, 0, 0], dist_at, 0.1), -math.inf)
        self.assertEqual(log_likelihood([0, 0, 0, 0, 1], dist_at, 0.1), -math.inf)
        self.assertEqual(log_likelihood([0, 0, 5, 0], dist_at, 0.1), 0.0)

    def test_poisson_log_likelihood(self):
        model = ChannelModel(0, "displacement", 1.0)
        counts = np.array([6, 3, 1])
        expected = 6 * -0.5 + 3 * (-0.5 + math.log(0.5)) + (-0.5 + 2 * math.log(0.5) - math.log(2))
        self.assertAlmostEqual(log_likelihood(counts, model, 0.5), expected, places=8)

    def test_default_prior(self):
        self.assertEqual(default_prior(0.5), (0.05, 5.0))
        self.assertEqual(default_prior(1e-6), (1e-4, 10.0))
        self.assertEqual(default_prior(0.5, "squeezing"), (0.05, 2.0))
        self.assertEqual(default_prior(1.5, "squeezing"), (0.15, 3.0))
        self.assertEqual(default_prior(8.0), (0.8, 16.0))


class TestSingleParameterMLE(unittest.TestCase):
    def test_poisson_mle_is_sample_mean(self):
        model = ChannelModel(0, "displacement", 5.0)
        est = mle_single([6, 3, 1], model, (0.05, 5.0))
        self.assertAlmostEqual(est.value, 0.5, delta=1e-4)
        self.assertFalse(est.at_boundary)

    def test_exact_proportions_recover_truth(self):
        model = ChannelModel(3, "squeezing", 1.0)
        counts = np.rint(1e6 * model.probs(0.2)).astype(int)
        est = mle_single(counts, model, (0.02, 1.0))
        self.assertAlmostEqual(est.value / 0.2, 1.0, delta=1e-3)

    def test_boundary_estimate(self):
        model = ChannelModel(0, "displacement", 5.0)
        est = mle_single([10], model, (0.05, 5.0))
        self.assertTrue(est.at_boundary)
        self.assertAlmostEqual(est.value, 0.05, delta=1e-5)

    def test_prior_validation(self):
        model = ChannelModel(1, "displacement", 1.0)
        with self.assertRaises(PreconditionError):
            mle_single([1, 1, 1], model, (0.5, 0.1))
        with self.assertRaises(PreconditionError):
            mle_single([1, 1, 1], model, (0.1, 2.0))


class TestWeakEstimator(unittest.TestCase):
    def test_examples(self):
        counts = np.zeros(6, dtype=int)
        counts[[1, 2, 3, 4, 5]] = [13, 35, 904, 35, 13]
        Nc_est, Ns_est = mle_weak(counts, 3)
        self.assertAlmostEqual(Nc_est, 0.01)
        self.assertAlmostEqual(Ns_est, 0.004)
        self.assertEqual(mle_weak(np.zeros(6, dtype=int), 3), (0.0, 0.0))

    def test_outside_window_ignored(self):
        counts = np.array([0, 10, 980, 10, 0, 0, 0, 500])
        Nc_est, _ = mle_weak(counts, 2)
        self.assertAlmostEqual(Nc_est, 20 / (1000 * 5))

    def test_expectation_is_unbiased(self):
        e_c, e_s = weak_estimator_expectation(2, 0.002, 0.003, 100)
        self.assertAlmostEqual(e_c, 0.002, places=12)
        self.assertAlmostEqual(e_s, 0.003, places=12)

    def test_enumerated_expectation(self):
        e_c, e_s = weak_estimator_expectation(2, 0.002, 0.003, 4, enumerate_counts=True)
        self.assertAlmostEqual(e_c, 0.002, places=10)
        self.assertAlmostEqual(e_s, 0.003, places=10)


class TestJointMLE(unittest.TestCase):
    def test_exact_proportions_recover_truth(self):
        model = JointChannelModel(2, 0.5, 0.5)
        counts = np.rint(1e6 * model.probs(0.05, 0.05)).astype(int)
        est = mle_joint(counts, 2, (0.005, 0.5), (0.005, 0.5), model=model)
        self.assertAlmostEqual(est.Nc / 0.05, 1.0, delta=2e-2)
        self.assertAlmostEqual(est.Ns / 0.05, 1.0, delta=2e-2)
        self.assertGreaterEqual(est.sweeps, 1)

    def test_prior_validation(self):
        with self.assertRaises(PreconditionError):
            mle_joint([1, 1, 1], 1, (0.5, 0.1), (0.1, 0.5))


class TestMonteCarlo(unittest.TestCase):
    def test_mse_close_to_cramer_rao(self):
        scenario = MonteCarloScenario(m=1, params=ChannelParams(N_c=0.5), M=200, trials=400, seed=3)
        stats = monte_carlo_error(scenario, n_jobs=1)
        self.assertIsInstance(stats, ErrorStats)
        bound = 1 / (200 * fi_exact(1, "displacement", 0.5))
        self.assertAlmostEqual(stats.mse / bound, 1.0, delta=0.3)
        self.assertEqual(stats.trials + stats.failures, 400)
        self.assertGreater(stats.stderr_bar, 0.0)

    def test_result_independent_of_workers(self):
        scenario = MonteCarloScenario(m=2, params=ChannelParams(N_c=0.2), M=100, trials=24, seed=5)
        single = monte_carlo_error(scenario, n_jobs=1)
        parallel = monte_carlo_error(scenario, n_jobs=2)
        self.assertEqual(single.mse, parallel.mse)
        self.assertEqual(single.bias, parallel.bias)

    def test_weak_estimator(self):
        scenario = MonteCarloScenario(m=2, estimator="weak", params=ChannelParams(N_c=0.001), M=2000, trials=100, seed=1)
        stats = monte_carlo_error(scenario, n_jobs=1)
        self.assertEqual(stats.trials, 100)
        self.assertEqual(stats.failures, 0)

    def test_joint_estimator(self):
        scenario = MonteCarloScenario(
            m=2, estimator="joint", params=ChannelParams(N_c=0.05, N_s=0.05), M=500, trials=20, seed=9
        )
        stats = monte_carlo_error(scenario, n_jobs=1)
        self.assertIsInstance(stats, JointErrorStats)
        self.assertEqual(stats.Nc.trials + stats.Nc.failures, 20)
        self.assertGreaterEqual(stats.covariance[0], 0.0)

    def test_log_mse_slope(self):
        self.assertAlmostEqual(log_mse_slope([100, 1000, 10000], [1e-2, 1e-3, 1e-4]), -1.0)

    def test_error_falls_as_one_over_M(self):
        Ms, mses = (100, 1000), []
        for M in Ms:
            scenario = MonteCarloScenario(m=3, params=ChannelParams(N_c=1.0), M=M, trials=300, seed=17)
            stats = monte_carlo_error(scenario, n_jobs=1)
            bound = 1 / (M * fi_exact(3, "displacement", 1.0))
            self.assertAlmostEqual(stats.mse / bound, 1.0, delta=0.35)
            mses.append(stats.mse)
        self.assertAlmostEqual(log_mse_slope(Ms, mses), -1.0, delta=0.2)

    def test_squeezing_at_large_strength(self):
        for m in (0, 3):
            scenario = MonteCarloScenario(m=m, kind="squeezing", params=ChannelParams(N_s=0.5), M=500, trials=150, seed=4)
            stats = monte_carlo_error(scenario, n_jobs=1)
            self.assertEqual(stats.failures, 0)
            bound = 1 / (500 * fi_exact(m, "squeezing", 0.5))
            self.assertAlmostEqual(stats.mse / bound, 1.0, delta=0.45)

    def test_lossy_error_follows_lossy_fisher(self):
        for eta in (0.7, 0.9):
            scenario = MonteCarloScenario(m=3, params=ChannelParams(N_c=1.0, eta=eta), M=500, trials=300, seed=8)
            stats = monte_carlo_error(scenario, n_jobs=1)
            bound = 1 / (500 * lossy_fi(3, "displacement", 1.0, eta))
            self.assertAlmostEqual(stats.mse / bound, 1.0, delta=0.45)
            self.assertGreater(bound, 1 / (500 * fi_exact(3, "displacement", 1.0)))

    def test_joint_error_follows_matrix_bounds(self):
        scenario = MonteCarloScenario(
            m=2, estimator="joint", params=ChannelParams(N_c=0.01, N_s=0.01), M=500, trials=60, seed=12
        )
        stats = monte_carlo_error(scenario, n_jobs=1)
        bound_c, bound_s = multiparam_bounds(fisher_matrix(2, 0.01, 0.01), 500)
        self.assertTrue(0.5 < stats.Nc.mse / bound_c < 1.8)
        self.assertTrue(0.5 < stats.Ns.mse / bound_s < 1.8)


class TestTrialEnsemble(unittest.TestCase):
    def setUp(self):
        self.scenario = MonteCarloScenario(m=1, params=ChannelParams(N_c=0.5), M=200, trials=30, seed=3)

    def test_counts_per_trial(self):
        ensemble = simulate_ensemble(self.scenario)
        self.assertIsInstance(ensemble, TrialEnsemble)
        self.assertEqual((ensemble.M, ensemble.trials, ensemble.seed), (200, 30, 3))
        self.assertEqual(len(ensemble.counts), 30)
        self.assertTrue(all(sum(row) == 200 for row in ensemble.counts))
        self.assertEqual(simulate_ensemble(self.scenario).counts, ensemble.counts)

    def test_same_counts_as_error_estimate(self):
        ensemble = simulate_ensemble(self.scenario)
        model = ChannelModel(1, "displacement", 5.0)
        estimates = np.array([mle_single(row, model, (0.05, 5.0)).value for row in ensemble.counts])
        stats = monte_carlo_error(self.scenario, n_jobs=1)
        self.assertAlmostEqual(float(np.mean((estimates - 0.5) ** 2)), stats.mse, places=12)

    def test_rejects_inconsistent_counts(self):
        with self.assertRaises(ValidationError):
            TrialEnsemble(counts=[[1, 2], [3, 0]], M=3, trials=2, seed=0)
        with self.assertRaises(ValidationError):
            TrialEnsemble(counts=[[1, 2]], M=3, trials=2, seed=0)


class TestFluctuations(unittest.TestCase):
    def setUp(self):
        self.scenario = MonteCarloScenario(m=1, params=ChannelParams(N_c=0.5), M=2000, trials=600, seed=21)

    def test_no_fluctuation(self):
        report = fluctuation_study(0.5, 0.0, self.scenario, n_jobs=1)
        self.assertEqual(report.sigma2, 0.0)
        self.assertEqual(report.realized_variance, 0.0)
        self.assertAlmostEqual(report.excess_error, report.mse - report.cr_value)
        self.assertLess(abs(report.excess_error), 3 * report.stderr_bar + 1e-12)

    def test_per_trial_excess_matches_variance(self):
        sigma = math.sqrt(1e-3)
        report = fluctuation_study(0.5, sigma, self.scenario, n_jobs=1)
        self.assertAlmostEqual(report.sigma2, 1e-3)
        self.assertAlmostEqual(report.realized_variance / 1e-3, 1.0, delta=1e-3)
        self.assertAlmostEqual(report.excess_error / 1e-3, 1.0, delta=0.3)

    def test_per_probe_mode(self):
        report = fluctuation_study(0.5, 0.05, self.scenario.copy(update={"trials": 50}), mode="per_probe", n_jobs=1)
        self.assertEqual(report.mode, "per_probe")
        self.assertTrue(np.isfinite(report.mse))

    def test_independent_draws_excess_is_second_order(self):
        # averaging per outcome only bends the distribution by O(sigma²)
        sigma2 = 1e-3
        report = fluctuation_study(0.5, math.sqrt(sigma2), self.scenario, mode="per_probe", n_jobs=1)
        self.assertLess(abs(report.excess_error), 0.2 * sigma2)

    def test_wide_fluctuation_departs_from_sigma2(self):
        sigma = 0.25
        report = fluctuation_study(0.5, sigma, self.scenario, n_jobs=1)
        self.assertAlmostEqual(report.realized_variance / sigma ** 2, 0.886, delta=0.005)
        self.assertAlmostEqual(report.excess_error / report.realized_variance, 1.0, delta=0.25)

    def test_bad_arguments(self):
        with self.assertRaises(PreconditionError):
            fluctuation_study(0.5, -0.1, self.scenario)
        with self.assertRaises(PreconditionError):
            fluctuation_study(0.5, 0.1, self.scenario, mode="per_shot")


if __name__ == "__main__":
    unittest.main()
