#!/usr/bin/env python3
"""End-to-end checks for the exlasso command-line tool.

Usage: cli_check.py <exlasso executable> <result schema>
"""

import csv
import io
import json
import math
import os
import subprocess
import sys
import tempfile
import unittest

import jsonschema

EXE = None
SCHEMA = None


def run(*args, env=None, check_code=None):
    proc = subprocess.run([EXE, *map(str, args)], capture_output=True, text=True, env=env, timeout=600)
    if check_code is not None and proc.returncode != check_code:
        raise AssertionError(
            f"exlasso {' '.join(map(str, args))} exited {proc.returncode}, wanted {check_code}\n"
            f"stdout:\n{proc.stdout}\nstderr:\n{proc.stderr}")
    return proc


def read_vector(path):
    with open(path) as f:
        return [float(line) for line in f if line.strip()]


def without_times(result):
    return {k: v for k, v in result.items() if k != "times"}


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = cls.tmp.name
        cls.inst = os.path.join(cls.dir, "inst")
        out = run("gen", "--m", 60, "--l", 5, "--p", 8, "--seed", 3, "--weights", "uniform",
                  "--lambda-b", 0.05, "--out", cls.inst, check_code=0).stdout
        cls.gen_lines = dict(line.split(" ", 1) for line in out.strip().splitlines())
        cls.manifest = cls.gen_lines["manifest"]
        with open(SCHEMA) as f:
            cls.schema = json.load(f)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.dir, name)

    def solve(self, *extra, code=0, name="r.json"):
        out = self.path(name)
        run("solve", "--manifest", self.manifest, "--out-json", out, *extra, check_code=code)
        with open(out) as f:
            result = json.load(f)
        jsonschema.validate(result, self.schema)
        return result

    def test_gen_reports_sizes_and_manifest(self):
        self.assertEqual(self.gen_lines["m"], "60")
        self.assertEqual(self.gen_lines["n"], "40")
        self.assertEqual(self.gen_lines["l"], "5")
        with open(self.manifest) as f:
            manifest = json.load(f)
        lam = 0.05 * float(self.gen_lines["norm_inf_At_b"])
        self.assertAlmostEqual(manifest["lambda"], lam, delta=1e-12 * lam)
        self.assertEqual(manifest["n"], 40)

    def test_gen_is_deterministic(self):
        other = self.path("again")
        run("gen", "--m", 60, "--l", 5, "--p", 8, "--seed", 3, "--weights", "uniform",
            "--lambda-b", 0.05, "--out", other, check_code=0)
        for name in ("A.csv", "b.csv", "w.txt", "groups.txt", "manifest.json"):
            with open(os.path.join(self.inst, name)) as a, open(os.path.join(other, name)) as b:
                self.assertEqual(a.read(), b.read(), name)

    def test_gen_libsvm_round_trips_through_solve(self):
        d = self.path("svm")
        run("gen", "--m", 60, "--l", 5, "--p", 8, "--seed", 3, "--weights", "uniform",
            "--lambda-b", 0.05, "--format", "libsvm", "--out", d, check_code=0)
        a = self.solve(name="csv.json")
        run("solve", "--manifest", os.path.join(d, "manifest.json"), "--out-json", self.path("svm.json"),
            check_code=0)
        with open(self.path("svm.json")) as f:
            b = json.load(f)
        self.assertAlmostEqual(a["objective"], b["objective"], delta=1e-9 * abs(a["objective"]))

    def test_solve_result_matches_schema_and_is_deterministic(self):
        x1, x2 = self.path("x1.csv"), self.path("x2.csv")
        a = self.solve("--out-x", x1, name="a.json")
        b = self.solve("--out-x", x2, name="b.json")
        self.assertTrue(a["converged"])
        self.assertLessEqual(a["eta_kkt"], 1e-6)
        self.assertEqual(a["solution_path"], x1)
        a.pop("solution_path")
        b.pop("solution_path")
        self.assertEqual(without_times(a), without_times(b))
        self.assertEqual(read_vector(x1), read_vector(x2))
        self.assertEqual(len(read_vector(x1)), 40)
        self.assertEqual(sum(a["nnz_per_group"]), sum(1 for v in read_vector(x1) if v != 0.0))

    def test_solvers_agree(self):
        xs = {}
        for solver in ("ppdna", "admm", "apg", "ilsa"):
            x = self.path(f"x_{solver}.csv")
            r = self.solve("--solver", solver, "--tol", 1e-9, "--out-x", x, name=f"{solver}.json")
            self.assertTrue(r["converged"], solver)
            self.assertEqual(r["solver"], solver)
            xs[solver] = read_vector(x)
        ref = xs["ppdna"]
        scale = 1.0 + math.sqrt(sum(v * v for v in ref))
        for solver, x in xs.items():
            dist = math.sqrt(sum((p - q) ** 2 for p, q in zip(x, ref)))
            self.assertLessEqual(dist, 1e-5 * scale, solver)

    def test_every_strategy_converges(self):
        objectives = []
        for strategy in ("auto", "cholesky", "woodbury", "cg"):
            r = self.solve("--strategy", strategy, "--tol", 1e-9, name=f"s_{strategy}.json")
            self.assertTrue(r["converged"], strategy)
            objectives.append(r["objective"])
        self.assertLessEqual(max(objectives) - min(objectives), 1e-8 * abs(objectives[0]))

    def test_lambda_overrides(self):
        r = self.solve("--lambda", 2.5, name="l.json")
        self.assertEqual(r["lambda"], 2.5)
        r = self.solve("--lambda-b", 0.2, name="lb.json")
        lam = 0.2 * float(self.gen_lines["norm_inf_At_b"])
        self.assertAlmostEqual(r["lambda"], lam, delta=1e-12 * lam)

    def test_iteration_cap_exits_one(self):
        r = self.solve("--max-iters", 1, "--tol", 1e-14, code=1, name="cap.json")
        self.assertFalse(r["converged"])
        self.assertIn("cap", r["message"])

    def test_usage_errors_exit_two(self):
        cases = [
            ("solve", "--manifest", self.manifest, "--lambda", 1, "--lambda-b", 0.1),
            ("solve", "--manifest", self.manifest, "--solver", "newton"),
            ("solve", "--manifest", self.manifest, "--strategy", "qr"),
            ("solve", "--manifest", self.path("missing.json")),
            ("solve", "--manifest", self.manifest, "--lambda", -1),
            ("gen", "--m", 0, "--out", self.path("bad")),
            ("gen", "--out", self.path("bad"), "--loss", "hinge"),
            ("path", "--manifest", self.manifest, "--grid", 1, 0.1),
            ("path", "--manifest", self.manifest, "--grid", 1, 0.1, 2.5),
            ("bench", "--solvers", "newton"),
            ("frobnicate",),
            (),
        ]
        for args in cases:
            self.assertEqual(run(*args).returncode, 2, args)
        self.assertEqual(run("--help").returncode, 0)

    def test_bench_csv_rows_in_cell_order(self):
        rows = {}
        for threads in ("1", "3"):
            env = dict(os.environ, EXLASSO_NUM_THREADS=threads)
            out = run("bench", "--m", 40, "--l", 4, "--p", 5, 10, "--lambda-b", 1e-1, 1e-2,
                      "--solvers", "ppdna", "apg", env=env, check_code=0).stdout
            table = list(csv.DictReader(io.StringIO(out)))
            self.assertEqual(len(table), 8)
            self.assertEqual(list(table[0].keys()),
                             ["instance", "lambda_b", "lambda", "solver", "iters", "eta_kkt", "seconds", "status"])
            for row in table:
                self.assertEqual(row["status"], "converged")
                self.assertLessEqual(float(row["eta_kkt"]), 1e-6)
            rows[threads] = [{k: v for k, v in r.items() if k != "seconds"} for r in table]
        self.assertEqual(rows["1"], rows["3"])
        order = [(r["instance"], r["lambda_b"], r["solver"]) for r in rows["1"]]
        self.assertEqual(order[0], ("m40_l4_p5_s0", "0.10000000000000001", "ppdna"))
        self.assertEqual(order[1][2], "apg")
        self.assertEqual(order[4][0], "m40_l4_p10_s0")

    def test_bench_writes_file(self):
        out = self.path("bench.csv")
        run("bench", "--m", 30, "--l", 3, "--p", 4, "--lambda", 0.5, "--out", out, check_code=0)
        with open(out) as f:
            table = list(csv.DictReader(f))
        self.assertEqual(len(table), 1)
        self.assertEqual(table[0]["lambda_b"], "")
        self.assertEqual(float(table[0]["lambda"]), 0.5)

    def test_path_warm_and_cold_agree(self):
        out = self.path("path.csv")
        proc = run("path", "--manifest", self.manifest, "--grid", 1, 1e-2, 5, "--compare-warmstart",
                   "--out", out, check_code=0)
        self.assertIn("speedup", proc.stdout)
        with open(out) as f:
            table = list(csv.DictReader(f))
        self.assertEqual(len(table), 10)
        warm = [r for r in table if r["mode"] == "warm"]
        cold = [r for r in table if r["mode"] == "cold"]
        self.assertEqual(len(warm), 5)
        for w, c in zip(warm, cold):
            self.assertEqual(w["lambda"], c["lambda"])
            self.assertEqual(w["converged"], "true")
            self.assertEqual(c["converged"], "true")
        lambdas = [float(r["lambda"]) for r in warm]
        self.assertTrue(all(a > b for a, b in zip(lambdas, lambdas[1:])))
        self.assertAlmostEqual(lambdas[0], float(self.gen_lines["norm_inf_At_b"]), delta=1e-9 * lambdas[0])
        nnz = [int(r["nnz"]) for r in warm]
        self.assertLessEqual(nnz[0], nnz[-1])

    def test_path_absolute_grid(self):
        proc = run("path", "--manifest", self.manifest, "--grid", 10, 1, 2, "--absolute", check_code=0)
        table = list(csv.DictReader(io.StringIO(proc.stdout)))
        self.assertEqual([float(r["lambda"]) for r in table], [10.0, 1.0])
        self.assertEqual({r["mode"] for r in table}, {"warm"})


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit("usage: cli_check.py <exlasso> <result.schema.json>")
    EXE, SCHEMA = sys.argv[1], sys.argv[2]
    unittest.main(argv=sys.argv[:1], verbosity=2)
