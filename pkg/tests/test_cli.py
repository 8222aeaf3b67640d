import unittest
import os
import sys
import io
import json
import tempfile
from contextlib import redirect_stdout, redirect_stderr

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))  # Add project root to Python path
from cli import main, EXIT_USAGE, EXIT_PRECONDITION

def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        try:
            code = main(list(argv))
        except SystemExit as e:
            code = e.code
    return code, out.getvalue(), err.getvalue()

class TestEnvelope(unittest.TestCase):
    def test_psi(self):
        code, out, _ = run("psi", "--q", "2", "--i", "0", "--x", "0.5")
        self.assertEqual(code, 0)
        envelope = json.loads(out)
        self.assertEqual(envelope["version"], "0.1.0")
        self.assertEqual(envelope["config"]["command"], "psi")
        self.assertEqual(envelope["config"]["arguments"], {"i": 0, "q": 2, "x": 0.5})
        self.assertAlmostEqual(envelope["result"]["psi"], 0.75)

    def test_lambda_example(self):
        code, out, _ = run("lambda", "--op", "rs", "--q", "16", "--beta", "0.58")
        self.assertEqual(code, 0)
        self.assertAlmostEqual(json.loads(out)["result"]["lambda"], 0.375, delta=0.002)

    def test_lambda_on_kernel(self):
        code, out, _ = run("lambda", "--op", "arikan:1", "--beta", "0.66", "--grid-points", "2000")
        self.assertEqual(code, 0)
        self.assertAlmostEqual(json.loads(out)["result"]["lambda"], 0.83, delta=0.01)

    def test_rho_table(self):
        code, out, _ = run("rho", "--m", "2", "--q", "2", "--exact", "--no-cache")
        self.assertEqual(code, 0)
        self.assertIn("0 1 2/3", json.loads(out)["result"]["lines"])

    def test_bound_and_q0(self):
        code, out, _ = run("bound", "--q", "16", "--n", "4", "--gamma", "1", "--beta", "0.25")
        self.assertEqual(code, 0)
        self.assertGreater(json.loads(out)["result"]["bound"], 0.0)
        code, out, _ = run("bound", "--q0", "--gamma", "1", "--delta", "0.25")
        self.assertEqual(code, 0)
        self.assertIn("q0", json.loads(out)["result"])

    def test_output_file(self):
        with tempfile.TemporaryDirectory() as folder:
            path = os.path.join(folder, "mbeta.json")
            code, out, _ = run("mbeta", "--beta", "0.5", "--output", path)
            with open(path, "r", encoding="utf-8") as handle:
                envelope = json.load(handle)
        self.assertEqual(code, 0)
        self.assertEqual(out, "")
        self.assertAlmostEqual(envelope["result"]["m_beta"], 1.6147, delta=5e-4)

class TestCsv(unittest.TestCase):
    def test_profile_rates(self):
        code, out, _ = run("profile", "--q", "2", "--n", "1", "--eps", "0.5", "--format", "csv")
        self.assertEqual(code, 0)
        self.assertEqual(out, "index,rate\n0,0.75\n1,0.25\n")

    def test_profile_histogram(self):
        code, out, _ = run("profile", "--q", "2", "--n", "6", "--eps", "0.5", "--hist", "4", "--format", "csv")
        lines = out.splitlines()
        self.assertEqual(lines[0], "bin_lo,bin_hi,count")
        self.assertEqual(sum(int(line.split(",")[2]) for line in lines[1:]), 64)

    def test_kernel_profile(self):
        code, out, _ = run("kernel-profile", "--kernel", "arikan:1", "--format", "csv")
        self.assertEqual(code, 0)
        self.assertEqual(out.splitlines()[:3], ["i,d,a_id", "0,0,1", "0,1,2"])

class TestDeterminism(unittest.TestCase):
    def test_mc_chain_repeats(self):
        argv = ["mc-chain", "--q", "16", "--n", "3", "--x0", "0.5", "--trials", "100000", "--eta", "0.01", "--seed", "7"]
        first = run(*argv)
        second = run(*argv)
        self.assertEqual(first[0], 0)
        self.assertEqual(first[1], second[1])

    def test_mc_chain_independent_of_workers(self):
        argv = ["mc-chain", "--q", "4", "--n", "5", "--x0", "0.3", "--trials", "25000", "--eta", "0.05", "--seed", "3"]
        self.assertEqual(run(*argv, "--workers", "1")[1], run(*argv, "--workers", "4")[1])

class TestErrors(unittest.TestCase):
    def test_unknown_flag(self):
        code, out, err = run("psi", "--q", "2", "--i", "0", "--x", "0.5", "--bogus")
        self.assertEqual(code, EXIT_USAGE)
        self.assertEqual(out, "")
        self.assertTrue(err.startswith("error: UsageError:"))
        self.assertEqual(len(err.strip().splitlines()), 1)

    def test_precondition(self):
        code, out, err = run("psi", "--q", "2", "--i", "5", "--x", "0.5")
        self.assertEqual(code, EXIT_PRECONDITION)
        self.assertEqual(out, "")
        self.assertTrue(err.startswith("error: PreconditionError:"))

    def test_theorem_hypothesis(self):
        code, _, err = run("bound", "--q", "2", "--n", "1", "--gamma", "0.4", "--beta", "0.5")
        self.assertEqual(code, EXIT_PRECONDITION)
        self.assertIn("3/4", err)

    def test_validation_error(self):
        code, _, err = run("construct", "--q", "2", "--n", "4", "--eps", "0.5", "--k", "3", "--gamma", "-1")
        self.assertEqual(code, EXIT_PRECONDITION)
        self.assertTrue(err.startswith("error: ValidationError:"))
        self.assertEqual(len(err.strip().splitlines()), 1)

class TestScript(unittest.TestCase):
    def test_shebang(self):
        path = os.path.join(os.path.dirname(__file__), "..", "cli.py")
        with open(path, "r", encoding="utf-8") as handle:
            self.assertEqual(handle.readline().strip(), "#!/usr/bin/env python3")

class TestChecks(unittest.TestCase):
    def test_check_inequalities(self):
        code, out, _ = run("check-inequalities", "--q", "4", "--beta", "0.5", "--points", "300")
        self.assertEqual(code, 0)
        self.assertTrue(json.loads(out)["result"]["passed"])

if __name__ == "__main__":
    unittest.main()
