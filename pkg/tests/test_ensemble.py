import unittest
import os
import sys
import tempfile
from fractions import Fraction
from math import comb
from unittest import mock

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))  # Add project root to Python path
from sources.ensemble import (gaussian_binomial, phi_count, rank_dist, theta, rho, RhoTable, get_rho_table,
                              cache_path, rho_mc, rho_mc_row, rho_exhaustive, phi_bar, gbar_sequence,
                              averaged_g1_exhaustive, lambda_m, check_conjecture1, check_conjecture2)
from sources.gf import FieldParams, all_full_rank
from sources.kernel import Kernel, profile_poly
from sources.errors import PreconditionError, InvariantError

SLOW = os.getenv("POLAR_SLOW_TESTS") == "1"

class TestCounting(unittest.TestCase):
    def test_gaussian_binomial(self):
        self.assertEqual(gaussian_binomial(4, 2, 2), 35)
        self.assertEqual(gaussian_binomial(3, 1, 3), 13)
        self.assertEqual(gaussian_binomial(5, 0, 7), 1)
        self.assertEqual(gaussian_binomial(2, 3, 2), 0)

    def test_phi_count(self):
        # ordered bases of F_2^2 and |GL(2, F_3)|
        self.assertEqual(phi_count(2, 2, 2), 6)
        self.assertEqual(phi_count(2, 2, 3), 48)
        self.assertEqual(phi_count(0, 5, 2), 1)
        self.assertEqual(phi_count(3, 2, 2), 0)

    def test_rank_distribution_sums_to_one(self):
        for k, d, q in ((3, 4, 2), (2, 2, 3), (4, 1, 4)):
            self.assertEqual(sum(rank_dist(k, d, q, j) for j in range(min(k, d) + 1)), 1)

    def test_theta(self):
        # 1 x 2 binary matrix, S = first column: rank(G_S) = 1 with probability 1/2
        self.assertEqual(theta(2, 1, 1, 1, 2, 1), Fraction(1, 2))
        total = sum(theta(3, 2, r, j, 2, 1) for r in range(3) for j in range(r + 1))
        self.assertEqual(total, 1)

class TestRho(unittest.TestCase):
    def test_small_values(self):
        self.assertEqual(rho(2, 0, 1, 2), Fraction(2, 3))
        self.assertEqual(rho(2, 1, 1, 2), Fraction(1, 3))
        self.assertEqual([rho(3, i, 1, 2) for i in range(3)], [Fraction(6, 7), Fraction(5, 7), Fraction(3, 7)])

    def test_boundary_columns(self):
        for m, q in ((4, 2), (3, 3)):
            for i in range(m):
                self.assertEqual(rho(m, i, 0, q), 1)
                self.assertEqual(rho(m, i, m, q), 0)

    def test_preconditions(self):
        with self.assertRaises(PreconditionError):
            rho(3, 3, 1, 2)
        with self.assertRaises(PreconditionError):
            rho(3, 0, 4, 2)
        with self.assertRaises(PreconditionError):
            rho(3, 0, 1, 6)

    def test_matches_exhaustive_enumeration(self):
        for m, q in ((1, 2), (2, 2), (3, 2), (2, 3)):
            for i in range(m):
                for d in range(m + 1):
                    self.assertEqual(rho(m, i, d, q), rho_exhaustive(m, i, d, q), (m, i, d, q))

    def test_matches_averaged_kernels(self):
        # C(m, d) rho[i][d] is the GL(m, F_q) average of the kernel coefficients a[i][d]
        for m, q in ((2, 2), (3, 2), (2, 3)):
            kernels = [profile_poly(Kernel(G), workers=1) for G in all_full_rank(m, m, FieldParams(q))]
            for i in range(m):
                for d in range(m + 1):
                    average = Fraction(sum(p.coeffs[i][d] for p in kernels), len(kernels))
                    self.assertEqual(average, comb(m, d) * rho(m, i, d, q))

class TestRhoTable(unittest.TestCase):
    def test_identities_small(self):
        for q in (2, 3, 4):
            for m in range(1, 9):
                table = RhoTable.build(m, q, workers=1)
                self.assertEqual(table.identity_failures(), [])
                self.assertEqual(table.monotonicity_failures(), [])
        RhoTable.build(16, 2, workers=1).check_identities()

    @unittest.skipUnless(SLOW, "set POLAR_SLOW_TESTS=1 for the large exact tables")
    def test_identities_large(self):
        for q in (2, 3, 4):
            for m in range(9, 17):
                RhoTable.build(m, q).check_identities()
        for m in (32, 64):
            RhoTable.build(m, 2).check_identities()

    def test_parallel_build_matches(self):
        self.assertEqual(RhoTable.build(6, 3, workers=1), RhoTable.build(6, 3, workers=2))

    def test_check_identities_raises(self):
        table = RhoTable.build(2, 2, workers=1)
        table.rho[0][1] = Fraction(1, 2)
        with self.assertRaises(InvariantError):
            table.check_identities()

    def test_lines(self):
        lines = RhoTable.build(2, 2, workers=1).lines()
        self.assertEqual(lines[0], "2 2")
        self.assertIn("0 1 2/3", lines)
        self.assertIn("1 1 1/3", lines)
        self.assertIn("0 0 1/1", lines)

    def test_cache_round_trip(self):
        with tempfile.TemporaryDirectory() as folder:
            built = get_rho_table(5, 2, cache_dir=folder, workers=1)
            self.assertTrue(os.path.exists(cache_path(5, 2, folder)))
            with mock.patch.object(RhoTable, "build", side_effect=AssertionError("cache not used")):
                loaded = get_rho_table(5, 2, cache_dir=folder)
        self.assertEqual(built, loaded)

    def test_incomplete_cache_file(self):
        with tempfile.TemporaryDirectory() as folder:
            path = cache_path(2, 2, folder)
            with open(path, "w", encoding="utf-8") as handle:
                handle.write("2 2\n0 0 1/1\n")
            with self.assertRaises(InvariantError):
                get_rho_table(2, 2, cache_dir=folder)

class TestAveragedPolynomials(unittest.TestCase):
    def test_mean_preserved(self):
        xs = np.linspace(0.0, 1.0, 201)
        for m, q in ((8, 2), (5, 3), (16, 2)):
            table = RhoTable.build(m, q, workers=1)
            np.testing.assert_allclose(np.mean(table.evaluate_all(xs), axis=0), xs, atol=1e-10)

    def test_phi_bar_endpoints(self):
        table = RhoTable.build(4, 2, workers=1)
        for i in range(4):
            self.assertAlmostEqual(phi_bar(4, i, 2, 0.0, table=table), 0.0)
            self.assertAlmostEqual(phi_bar(4, i, 2, 1.0, table=table), 1.0)
        with self.assertRaises(PreconditionError):
            phi_bar(4, 4, 2, 0.5, table=table)

    def test_exhaustive_average_below_gbar1(self):
        # V is concave, so averaging V(phi_i) over GL(m, F_q) stays below V(phi_bar_i)
        m, q, beta = 3, 2, 0.5
        xs = np.linspace(0.05, 0.95, 19)
        table = RhoTable.build(m, q, workers=1)
        gbar_1 = gbar_sequence(m, q, beta, 1, grid_points=1001, table=table)[0]
        exhaustive = averaged_g1_exhaustive(m, q, beta, xs)
        self.assertTrue(np.all(exhaustive <= gbar_1(xs) + 1e-3))

    def test_gbar_depth_cap(self):
        table = RhoTable.build(2, 2, workers=1)
        with self.assertRaises(PreconditionError):
            gbar_sequence(2, 2, 0.35, 0, table=table)
        with self.assertRaises(PreconditionError):
            gbar_sequence(2, 2, 0.35, 9, table=table)

class TestMonteCarlo(unittest.TestCase):
    def _assert_row_agrees(self, m, q, trials, seed, sigmas):
        table = RhoTable.build(m, q, workers=1)
        for i in range(m):
            estimates = rho_mc_row(m, i, q, trials, np.random.default_rng([seed, i]))
            for d, estimate in enumerate(estimates):
                p = float(table.rho[i][d])
                sigma = np.sqrt(p * (1 - p) / trials)
                self.assertLessEqual(abs(estimate.estimate - p), sigmas * sigma + 1e-12, (m, q, i, d))

    def test_row_estimates(self):
        self._assert_row_agrees(3, 2, 20000, 1, 4.5)
        self._assert_row_agrees(2, 3, 20000, 2, 4.5)

    def test_single_cell(self):
        estimate = rho_mc(2, 0, 1, 2, 30000, np.random.default_rng(9))
        self.assertTrue(estimate.within(2 / 3, sigmas=4.5))

    @unittest.skipUnless(SLOW, "set POLAR_SLOW_TESTS=1 for the 10^5-trial sweep")
    def test_row_estimates_full(self):
        for q in (2, 3, 4):
            for m in range(1, 7):
                self._assert_row_agrees(m, q, 100000, m * 10 + q, 4.5)

class TestLambdaM(unittest.TestCase):
    def test_m16(self):
        table = RhoTable.build(16, 2, workers=1)
        report = lambda_m(16, 2, 0.35, table=table)
        self.assertAlmostEqual(report.value, 0.6729, delta=0.003)
        self.assertTrue(check_conjecture1(16, 2, 0.35, 1, table=table).passed)

    @unittest.skipUnless(SLOW, "set POLAR_SLOW_TESTS=1 for the m = 32 and m = 64 tables")
    def test_m32_m64(self):
        for m, expected in ((32, 0.4558), (64, 0.2880)):
            table = RhoTable.build(m, 2)
            self.assertAlmostEqual(lambda_m(m, 2, 0.35, table=table).value, expected, delta=0.003)
            self.assertTrue(check_conjecture1(m, 2, 0.35, 1, table=table).passed)

    def test_conjecture1_report(self):
        report = check_conjecture1(8, 2, 0.35, 3, grid_points=2001, table=RhoTable.build(8, 2, workers=1))
        self.assertEqual(report.depth, 3)
        self.assertEqual(len(report.max_second_difference), 3)
        for value, error in zip(report.max_second_difference, report.interpolation_error):
            self.assertGreaterEqual(error, 0.0)

    def test_conjecture2_is_evidence_only(self):
        with tempfile.TemporaryDirectory() as folder:
            tables = {m: get_rho_table(m, 2, cache_dir=folder, workers=1) for m in (4, 8)}
            with mock.patch("sources.ensemble.get_rho_table", side_effect=lambda m, q: tables[m]):
                report = check_conjecture2([4, 8], 2, 0.35, grid_points=2000)
        self.assertEqual(report.m_list, [4, 8])
        self.assertLess(report.slope, 0.0)
        with self.assertRaises(PreconditionError):
            check_conjecture2([4, 4], 2, 0.35)

if __name__ == "__main__":
    unittest.main()
