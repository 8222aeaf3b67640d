import unittest
import os
import sys
import io
from fractions import Fraction

import numpy as np
from hypothesis import given, settings, strategies as st

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))  # Add project root to Python path
from sources.de import (psi, psi_all, psi_exact, psi_mean_check, profile, select_channels, gap_metrics,
                        sample_chain, sample_chain_batch, unpolarized_fraction_mc)
from sources.errors import PreconditionError, CapExceededError
from sources.lyapunov import PowerFn, lambda_sup, corollary1_bound
from sources.operators import RSOperator
from sources.schemas import ScalingQuery

class TestPsi(unittest.TestCase):
    def test_binary_values(self):
        self.assertAlmostEqual(psi(2, 0, 0.5), 0.75, places=14)
        self.assertAlmostEqual(psi(2, 1, 0.5), 0.25, places=14)
        self.assertAlmostEqual(psi(2, 0, 0.3), 2 * 0.3 - 0.09, places=14)

    def test_endpoints_absorb(self):
        for q in (2, 3, 16):
            for i in range(q):
                self.assertEqual(psi(q, i, 0.0), 0.0)
                self.assertEqual(psi(q, i, 1.0), 1.0)

    def test_matches_exact_tail(self):
        for q in (3, 4, 7):
            for x in (Fraction(1, 3), Fraction(5, 8)):
                for i in range(q):
                    self.assertAlmostEqual(psi(q, i, float(x)), float(psi_exact(q, i, x)), places=13)

    def test_large_field_matches_exact_tail(self):
        self.assertAlmostEqual(psi(1024, 511, 0.5), float(psi_exact(1024, 511, Fraction(1, 2))), delta=1e-12)

    def test_decreasing_in_i(self):
        children = psi_all(8, np.linspace(0.01, 0.99, 50))
        self.assertTrue(np.all(np.diff(children, axis=0) <= 0))

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from([2, 3, 4, 8, 16]), st.floats(0.0, 1.0))
    def test_symmetry(self, q, x):
        children = psi_all(q, x)
        mirrored = psi_all(q, 1.0 - x)
        np.testing.assert_allclose(children, 1.0 - mirrored[::-1], atol=1e-12)

    def test_mean_preserved(self):
        xs = np.linspace(0.0, 1.0, 1001)
        for q in (2, 3, 16, 256):
            np.testing.assert_allclose(psi_mean_check(q, xs), xs, atol=1e-10)

    def test_shape(self):
        self.assertEqual(psi_all(4, np.zeros((3, 5))).shape, (4, 3, 5))

    def test_preconditions(self):
        with self.assertRaises(PreconditionError):
            psi(1, 0, 0.5)
        with self.assertRaises(PreconditionError):
            psi(2, 2, 0.5)
        with self.assertRaises(PreconditionError):
            psi(2, 0, 1.5)
        with self.assertRaises(PreconditionError):
            psi_all(2, [0.2, float("nan")])

class TestProfile(unittest.TestCase):
    def test_big_endian_order(self):
        eps = 0.3
        prof = profile(3, 2, eps)
        expected = [psi(3, b, psi(3, a, eps)) for a in range(3) for b in range(3)]
        np.testing.assert_allclose(prof.values(), expected, atol=1e-15)

    def test_zero_stages(self):
        prof = profile(4, 0, 0.2)
        self.assertEqual(prof.size, 1)
        self.assertEqual(list(prof.values()), [0.2])

    def test_mean_preserved(self):
        for q, n, eps in ((2, 12, 0.5), (16, 3, 0.5), (3, 6, 0.1)):
            self.assertLess(abs(profile(q, n, eps).mean() - eps), 1e-10)

    def test_streaming_matches_materialized(self):
        full = profile(2, 10, 0.3)
        streamed = profile(2, 10, 0.3, materialize_cap=100)
        self.assertTrue(streamed.is_streaming)
        chunks = np.concatenate([chunk for _, chunk in streamed.iter_chunks()])
        np.testing.assert_allclose(chunks, full.values(), atol=1e-15)
        self.assertAlmostEqual(streamed.mean(), full.mean(), places=12)
        self.assertEqual(streamed.count_in(0.1, 0.9), full.count_in(0.1, 0.9))
        with self.assertRaises(CapExceededError):
            streamed.values()

    def test_stream_cap(self):
        with self.assertRaises(CapExceededError):
            profile(2, 30, 0.5, stream_cap=1000)

    def test_histogram(self):
        prof = profile(2, 8, 0.5)
        rows = prof.histogram(10)
        self.assertEqual(len(rows), 10)
        self.assertEqual(sum(count for _, _, count in rows), 256)
        self.assertEqual(rows[0][0], 0.0)
        self.assertEqual(rows[-1][1], 1.0)

    def test_csv_export(self):
        buffer = io.StringIO()
        profile(2, 1, 0.5).to_csv(buffer)
        self.assertEqual(buffer.getvalue(), "index,rate\n0,0.75\n1,0.25\n")

    def test_preconditions(self):
        with self.assertRaises(PreconditionError):
            profile(2, -1, 0.5)
        with self.assertRaises(PreconditionError):
            profile(6, 1, 1.2)

class TestSelectChannels(unittest.TestCase):
    def test_best_channels(self):
        prof = profile(2, 2, 0.5)
        indices, union_bound = select_channels(prof, 2)
        self.assertEqual(list(indices), [3, 2])
        self.assertAlmostEqual(union_bound, 0.0625 + 0.4375, places=14)

    def test_streaming_selection(self):
        full = select_channels(profile(2, 9, 0.4), 100)
        streamed = select_channels(profile(2, 9, 0.4, materialize_cap=16), 100)
        self.assertEqual(list(full[0]), list(streamed[0]))
        self.assertAlmostEqual(full[1], streamed[1], places=12)

    def test_ties_break_by_index(self):
        indices, union_bound = select_channels(profile(2, 3, 0.0), 3)
        self.assertEqual(list(indices), [0, 1, 2])
        self.assertEqual(union_bound, 0.0)

    def test_bounds(self):
        prof = profile(2, 2, 0.5)
        self.assertEqual(len(select_channels(prof, 0)[0]), 0)
        self.assertEqual(sorted(select_channels(prof, 4)[0]), [0, 1, 2, 3])
        with self.assertRaises(PreconditionError):
            select_channels(prof, 5)

class TestGapMetrics(unittest.TestCase):
    def test_gap_lower_bound(self):
        eps = 0.5
        prof = profile(2, 12, eps)
        metrics = gap_metrics(prof, ScalingQuery(gamma=0.5), eps)
        self.assertAlmostEqual(metrics.threshold, 2 ** -6, places=15)
        self.assertGreaterEqual(metrics.gap, -metrics.threshold * metrics.good_fraction - 1e-12)
        self.assertIsNotNone(metrics.bound)
        self.assertAlmostEqual(metrics.gap_bound, metrics.bound - eps, places=15)

    def test_bound_absent_above_three_quarters(self):
        metrics = gap_metrics(profile(2, 0, 0.5), ScalingQuery(gamma=0.5), 0.5)
        self.assertIsNone(metrics.bound)
        self.assertIsNone(metrics.gap_bound)

class TestMarkovChain(unittest.TestCase):
    def test_single_path_stays_in_range(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            value = sample_chain(4, 6, 0.4, rng)
            self.assertTrue(0.0 <= value <= 1.0)

    def test_batch_independent_of_workers(self):
        a = sample_chain_batch(4, 5, 0.5, 95, seed=7, workers=1, block_size=10)
        b = sample_chain_batch(4, 5, 0.5, 95, seed=7, workers=4, block_size=10)
        np.testing.assert_array_equal(a, b)
        self.assertEqual(a.shape, (95,))

    def test_batch_mean_is_martingale(self):
        samples = sample_chain_batch(2, 8, 0.3, 50000, seed=5)
        self.assertLess(abs(samples.mean() - 0.3), 5 * samples.std() / np.sqrt(samples.size))

    def test_unpolarized_fraction_against_profile(self):
        q, n, x0, eta = 16, 3, 0.5, 0.01
        estimate = unpolarized_fraction_mc(q, n, x0, 100000, eta, seed=7)
        exact = profile(q, n, x0).fraction_in(eta, 1.0 - eta)
        sigma = np.sqrt(exact * (1.0 - exact) / estimate.trials)
        self.assertLessEqual(abs(estimate.estimate - exact), 3 * sigma)
        example_bound = 7 * 4096 ** -0.353
        self.assertLessEqual(exact, example_bound)
        self.assertLessEqual(estimate.estimate, example_bound)

    def test_seeded_runs_repeat(self):
        a = unpolarized_fraction_mc(16, 3, 0.5, 20000, 0.01, seed=7)
        b = unpolarized_fraction_mc(16, 3, 0.5, 20000, 0.01, seed=7)
        self.assertEqual(a, b)

    def test_trials_precondition(self):
        with self.assertRaises(PreconditionError):
            sample_chain_batch(2, 3, 0.5, 0, seed=0)

class TestPowerFunctionOnProfile(unittest.TestCase):
    def test_corollary_prefactor_bounds_unpolarized_fraction(self):
        # (1/4)^beta / (eta(1-eta))^beta * lambda^n dominates the exact fraction
        q, n, eps, eta, beta = 16, 3, 0.5, 0.01, 0.58
        lam = lambda_sup(RSOperator(q), PowerFn(beta)).value
        self.assertAlmostEqual(lam, 0.375, delta=0.002)
        exact = profile(q, n, eps).fraction_in(eta, 1.0 - eta)
        self.assertLessEqual(exact, corollary1_bound(lam, n, eps, eta, beta))
        self.assertAlmostEqual(PowerFn(beta)(0.5), 0.25 ** beta, places=15)

if __name__ == "__main__":
    unittest.main()
