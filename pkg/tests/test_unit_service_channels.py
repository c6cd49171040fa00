import math
import unittest

import numpy as np
from scipy.special import gammaln

from src.schemas.Channel_Schemas import ChannelParams, FockProbe, GaussianProbe, MixtureProbe
from src.services.channels import (
    ChannelModel,
    JointChannelModel,
    channel_distribution,
    combined_distribution,
    displacement_distribution,
    exact_quadrature_points,
    loss_after_channel_distribution,
    loss_before_channel_distribution,
    loss_density,
    loss_distribution,
    lossy_probe,
    mean_photon_added,
    phase_randomized_output,
    squeezing_distribution,
    weak_limit_distribution,
)
from src.services.errors import PreconditionError, TruncationError
from src.services.hilbert import DensityOperator, PhotonDistribution


class TestDisplacementAndSqueezing(unittest.TestCase):
    def test_displacement_vacuum_is_poisson(self):
        dist = displacement_distribution(0, 1.0)
        self.assertAlmostEqual(dist.prob(0), math.exp(-1), places=12)
        self.assertAlmostEqual(dist.prob(3), math.exp(-1) / 6, places=12)

    def test_zero_strength_is_identity(self):
        self.assertEqual(displacement_distribution(3, 0.0).prob(3), 1.0)
        self.assertEqual(squeezing_distribution(3, 0.0).prob(3), 1.0)

    def test_displacement_weak_strength(self):
        dist = displacement_distribution(3, 1e-4)
        self.assertAlmostEqual(dist.prob(2) / 3e-4, 1.0, delta=1e-2)
        self.assertAlmostEqual(dist.prob(4) / 4e-4, 1.0, delta=1e-2)

    def test_squeezing_vacuum(self):
        dist = squeezing_distribution(0, 0.25)
        self.assertAlmostEqual(dist.prob(2), math.tanh(0.5) ** 2 / (2 * math.cosh(0.5)), places=10)

    def test_squeezing_weak_strength(self):
        dist = squeezing_distribution(3, 1e-4)
        self.assertAlmostEqual(dist.prob(1) / 1.5e-4, 1.0, delta=1e-2)
        self.assertAlmostEqual(dist.prob(5) / 5e-4, 1.0, delta=1e-2)

    def test_squeezing_parity(self):
        for m in (2, 3):
            dist = squeezing_distribution(m, 0.5)
            odd = dist.probs[(np.arange(dist.dim) - m) % 2 == 1]
            self.assertTrue(np.all(odd == 0.0))

    def test_normalization_under_default_cutoff(self):
        for m in (0, 3, 7):
            for dist in (displacement_distribution(m, 2.0), squeezing_distribution(m, 0.5)):
                self.assertLess(dist.truncation_loss, 1e-8)
                self.assertAlmostEqual(dist.total() + dist.truncation_loss, 1.0, places=12)

    def test_displacement_mean(self):
        for m in (0, 2, 5):
            self.assertAlmostEqual(displacement_distribution(m, 1.3).mean(), m + 1.3, delta=1e-8)

    def test_explicit_cutoff_too_small(self):
        with self.assertRaises(TruncationError):
            displacement_distribution(3, 2.0, cutoff=6)

    def test_mean_photon_added(self):
        self.assertEqual(mean_photon_added("displacement", 0.3), 0.3)
        self.assertEqual(mean_photon_added("squeezing", 0.0), 0.0)
        self.assertAlmostEqual(mean_photon_added("squeezing", 1.0), math.sinh(1.0) ** 2, places=12)
        with self.assertRaises(PreconditionError):
            mean_photon_added("rotation", 1.0)


class TestCombinedAndWeakLimit(unittest.TestCase):
    def test_combined_trivial_cases(self):
        self.assertAlmostEqual(combined_distribution(2, ChannelParams()).prob(2), 1.0)
        params = ChannelParams(N_c=0.7)
        exact = displacement_distribution(2, 0.7)
        combined = combined_distribution(2, params)
        self.assertLess(exact.total_variation(combined), 1e-14)

    def test_combined_weak_strengths(self):
        dist = combined_distribution(2, ChannelParams(N_c=0.01, N_s=0.01))
        self.assertAlmostEqual(dist.prob(1) / 0.02, 1.0, delta=0.1)
        self.assertAlmostEqual(dist.prob(0) / 0.005, 1.0, delta=0.1)
        # p(4) picks up the second-order displacement term N_c²(m+1)(m+2)/4 as well
        self.assertAlmostEqual(dist.prob(4) / (0.03 + 0.0001 * 3), 1.0, delta=0.15)

    def test_weak_limit_overstates_two_photon_gain(self):
        # first-order weight N_s(m+1)(m+2)/4 = 0.03; the exact amplitude and the
        # depletion by both channels leave about 0.0267
        weak = weak_limit_distribution(2, 0.01, 0.01)
        exact = combined_distribution(2, ChannelParams(N_c=0.01, N_s=0.01))
        self.assertAlmostEqual(weak.prob(4), 0.03, places=12)
        self.assertTrue(0.025 < exact.prob(4) < 0.0285)
        self.assertLess(exact.prob(4), weak.prob(4))

    def test_weak_limit_examples(self):
        dist = weak_limit_distribution(3, 0.001, 0.0)
        self.assertAlmostEqual(dist.prob(2), 0.003)
        self.assertAlmostEqual(dist.prob(4), 0.004)
        self.assertAlmostEqual(dist.prob(3), 0.993)
        dist = weak_limit_distribution(0, 0.0, 0.001)
        self.assertAlmostEqual(dist.prob(2), 0.0005)
        self.assertAlmostEqual(dist.prob(0), 0.9995)
        self.assertEqual(weak_limit_distribution(5, 0.0, 0.0).prob(5), 1.0)

    def test_weak_limit_sums_to_one(self):
        for m in range(6):
            self.assertAlmostEqual(weak_limit_distribution(m, 0.002, 0.003).total(), 1.0, places=14)

    def test_weak_limit_precondition(self):
        with self.assertRaises(PreconditionError):
            weak_limit_distribution(3, 0.1, 0.0)

    def test_weak_limit_converges_to_exact(self):
        N = 1e-3
        for m in (0, 1, 2):
            weak = weak_limit_distribution(m, N, N)
            exact = combined_distribution(m, ChannelParams(N_c=N, N_s=N))
            for n in range(max(0, m - 2), m + 3):
                if weak.prob(n) > 0:
                    self.assertLess(abs(weak.prob(n) - exact.prob(n)) / weak.prob(n), 10 * N)


class TestLoss(unittest.TestCase):
    def test_loss_distribution_examples(self):
        np.testing.assert_array_equal(loss_distribution(PhotonDistribution.delta(2), 1.0).probs, [0.0, 0.0, 1.0])
        single = loss_distribution(PhotonDistribution.delta(1), 0.7)
        np.testing.assert_allclose(single.probs, [0.3, 0.7], atol=1e-14)
        triple = loss_distribution(PhotonDistribution.delta(3), 0.9)
        np.testing.assert_allclose(triple.probs, [0.001, 0.027, 0.243, 0.729], atol=1e-14)

    def test_lossy_probe(self):
        probe = lossy_probe(3, 0.9)
        self.assertIsInstance(probe, MixtureProbe)
        np.testing.assert_allclose(probe.weights, [0.001, 0.027, 0.243, 0.729], atol=1e-14)

    def test_loss_density_vacuum_fixed_point(self):
        vacuum = DensityOperator.fock(0, 4)
        np.testing.assert_allclose(loss_density(vacuum, 0.4).matrix, vacuum.matrix, atol=1e-14)
        self.assertIs(loss_density(vacuum, 1.0), vacuum)

    def test_loss_density_matches_diagonal(self):
        dist = displacement_distribution(2, 0.8)
        rho = loss_density(DensityOperator.diagonal(dist), 0.6)
        expected = loss_distribution(dist, 0.6)
        np.testing.assert_allclose(np.real(np.diag(rho.matrix)), expected.probs, atol=1e-10)
        self.assertLess(rho.off_diagonal_norm(), 1e-14)

    def test_loss_density_coherent_state(self):
        # loss maps a coherent state |β⟩ to |√η β⟩
        beta, eta = 1.1, 0.64
        rho = DensityOperator.from_ket(_coherent_ket(beta, 40))
        out = loss_density(rho, eta)
        np.testing.assert_allclose(out.matrix, np.outer(_coherent_ket(math.sqrt(eta) * beta, 40), _coherent_ket(math.sqrt(eta) * beta, 40)), atol=1e-10)

    def test_loss_commutes_with_displacement(self):
        for m in range(6):
            for eta in (0.5, 0.7, 0.9):
                after = loss_after_channel_distribution(m, 1.0, eta)
                before = loss_before_channel_distribution(m, eta * 1.0, eta)
                self.assertLess(after.total_variation(before), 1e-8)

    def test_channel_distribution_dispatch(self):
        params = ChannelParams(N_c=0.5, eta=0.8)
        fock = channel_distribution(FockProbe(m=2), params)
        mixture = channel_distribution(MixtureProbe(weights=[0.0, 0.0, 1.0]), params)
        self.assertLess(fock.total_variation(mixture), 1e-12)
        coherent = channel_distribution(GaussianProbe(beta=0.0, zeta=0.0), ChannelParams(N_c=0.5))
        self.assertLess(coherent.total_variation(displacement_distribution(0, 0.5)), 1e-9)


class TestPhaseRandomization(unittest.TestCase):
    def test_fock_probe_matches_closed_form(self):
        dim = 30
        out = phase_randomized_output(DensityOperator.fock(2, dim), "displacement", 0.8)
        closed = displacement_distribution(2, 0.8, dim)
        np.testing.assert_allclose(np.real(np.diag(out.matrix)), closed.probs, atol=1e-9)
        self.assertLess(out.off_diagonal_norm(), 1e-9)

    def test_fock_probe_squeezing_matches_closed_form(self):
        dim = 40
        out = phase_randomized_output(DensityOperator.fock(1, dim), "squeezing", 0.2)
        closed = squeezing_distribution(1, 0.2, dim)
        np.testing.assert_allclose(np.real(np.diag(out.matrix)), closed.probs, atol=1e-9)

    def test_zero_strength(self):
        rho = DensityOperator.fock(1, 5)
        self.assertIs(phase_randomized_output(rho, "squeezing", 0.0), rho)

    def test_vacuum_probe_gives_poisson(self):
        out = phase_randomized_output(DensityOperator.fock(0, 30), "displacement", 1.5, K=exact_quadrature_points(30), adaptive=False)
        poisson = displacement_distribution(0, 1.5, 30)
        np.testing.assert_allclose(np.real(np.diag(out.matrix)), poisson.probs, atol=1e-12)

    def test_rejects_bad_quadrature(self):
        with self.assertRaises(PreconditionError):
            phase_randomized_output(DensityOperator.fock(0, 10), "displacement", 0.5, K=12)

    def test_leaking_output_raises(self):
        with self.assertRaises(TruncationError):
            phase_randomized_output(DensityOperator.fock(3, 6), "displacement", 2.0)

    def test_exact_quadrature_points(self):
        self.assertEqual(exact_quadrature_points(30), 64)
        self.assertEqual(exact_quadrature_points(2), 8)


class TestChannelModel(unittest.TestCase):
    def test_model_matches_distribution(self):
        model = ChannelModel(3, "displacement", 2.0)
        exact = displacement_distribution(3, 1.0, model.dim)
        np.testing.assert_allclose(model.probs(1.0), exact.probs, atol=1e-14)

    def test_lossy_model_uses_loss_before_channel(self):
        model = ChannelModel(3, "squeezing", 0.3, eta=0.7)
        expected = channel_distribution(FockProbe(m=3), ChannelParams(N_s=0.25, eta=0.7), model.dim)
        np.testing.assert_allclose(model.probs(0.25), expected.probs, atol=1e-13)

    def test_joint_model(self):
        model = JointChannelModel(2, 0.1, 0.1)
        expected = combined_distribution(2, ChannelParams(N_c=0.05, N_s=0.02), model.dim)
        np.testing.assert_allclose(model.probs(0.05, 0.02), expected.probs, atol=1e-13)

    def test_model_rejects_unknown_kind(self):
        with self.assertRaises(PreconditionError):
            ChannelModel(1, "thermal", 1.0)


def _coherent_ket(beta, dim):
    n = np.arange(dim)
    return np.exp(-0.5 * beta ** 2 + n * np.log(beta) - 0.5 * gammaln(n + 1.0))


if __name__ == "__main__":
    unittest.main()
