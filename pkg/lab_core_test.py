import os
import tempfile
import unittest
from unittest import mock

import numpy as np
from marshmallow import ValidationError

import lab_core
import report_utils
from utils import ConfigurationError, DomainError

class EnvTestCase(unittest.TestCase):

    def setUp(self):
        patcher = mock.patch.dict(os.environ)
        patcher.start()
        self.addCleanup(patcher.stop)
        for key in ("LAB_CONFIG", "LAB_LOG_LEVEL", "LAB_THREADS"):
            os.environ.pop(key, None)
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write_config(self, text):
        path = os.path.join(self.tmp.name, "lab.cfg")
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

class ConfigFileTest(EnvTestCase):

    def test_read(self):
        path = self.write_config("# grid\nn_tau = 128  # even\n\nsweep_u = 0.1, 0.05\n")
        self.assertEqual(lab_core.read_config_file(path), {"n_tau": "128", "sweep_u": "0.1, 0.05"})

    def test_unreadable(self):
        with self.assertRaises(ConfigurationError):
            lab_core.read_config_file(os.path.join(self.tmp.name, "missing.cfg"))

    def test_malformed(self):
        with self.assertRaises(ConfigurationError):
            lab_core.read_config_file(self.write_config("n_tau 128\n"))

class LoadConfigTest(EnvTestCase):

    def test_defaults(self):
        config = lab_core.load_config()
        self.assertEqual(config.n_tau, 512)
        self.assertEqual(config.threads, 1)
        self.assertIsNone(config.sweep_t)
        self.assertEqual(config.profile, "leading")

    def test_resolution_order(self):
        path = self.write_config("n_tau = 128\nthreads = 2\nlog_level = WARNING\n")
        os.environ["LAB_THREADS"] = "3"
        config = lab_core.load_config(path, {"log_level": "DEBUG", "out_dir": None})
        self.assertEqual(config.n_tau, 128)
        self.assertEqual(config.threads, 3)
        self.assertEqual(config.log_level, "DEBUG")
        self.assertEqual(config.out_dir, "out")

    def test_env_config_path(self):
        os.environ["LAB_CONFIG"] = self.write_config("n_modes = 4\n")
        self.assertEqual(lab_core.load_config().n_modes, 4)

    def test_records(self):
        path = self.write_config("m = 1\nn = 2\nprofile = decorated\noffdiag_b = 2,1,0.5\n"
                                 "beltrami_tails = 1,1,1,0.1,0; 1,1,-1,0,0.2\nthick_metric = 2.0\n")
        config = lab_core.load_config(path)
        self.assertEqual(config.offdiag_b, {(2, 1): 0.5 + 0j})
        self.assertEqual(config.beltrami_tails, {(1, 1): {1: 0.1 + 0j, -1: 0.2j}})
        self.assertEqual(config.thick_metric, [2.0])
        dump = lab_core.config_dump(config)
        self.assertEqual(dump["offdiag_b"], "2,1,0.5,0.0")
        self.assertEqual(dump["beltrami_tails"], "1,1,-1,0.0,0.2;1,1,1,0.1,0.0")

    def test_invalid(self):
        cases = (
            "bogus = 1\n",
            "sweep_t =\n",
            "collar_c1 = 0.6\n",
            "n_tau = 129\n",
            "sweep_t = 1e-6\nsweep_u = 0.1\n",
            "m = 1\nn = 2\nthick_metric = 1.0, 2.0\n",
            "m = 2\nn = 1\n",
            "sweep_t = 2.0\n",
            "offdiag_b = 2,1\n",
            "threads = 0\n",
            "perturb_c = 0\n",
            "block_symmetry_tol = 0\n",
        )
        for text in cases:
            with self.assertRaises(ValidationError, msg=text):
                lab_core.load_config(self.write_config(text))

class SweepValuesTest(EnvTestCase):

    def test_default_range(self):
        values = lab_core.sweep_values(lab_core.load_config())
        self.assertEqual(len(values), 5)
        self.assertAlmostEqual(values[0].real, 1e-4, delta=1e-16)
        self.assertAlmostEqual(abs(values[-1]) / 1e-20, 1.0, places=10)

    def test_from_u(self):
        config = lab_core.load_config(overrides={"sweep_u": [0.1], "t_phase": np.pi / 2})
        t = lab_core.sweep_values(config)[0]
        self.assertAlmostEqual(abs(t) / np.exp(-10 * np.pi), 1.0, places=12)
        self.assertAlmostEqual(np.angle(t), np.pi / 2, places=12)

    def test_explicit(self):
        config = lab_core.load_config(overrides={"sweep_t": "1e-6, 1e-8+1e-9j"})
        self.assertEqual(lab_core.sweep_values(config), [1e-6 + 0j, 1e-8 + 1e-9j])

class PointTest(EnvTestCase):

    @classmethod
    def setUpClass(cls):
        cls.u = 0.05
        with mock.patch.dict(os.environ, {"LAB_CONFIG": "", "LAB_LOG_LEVEL": "", "LAB_THREADS": ""}):
            cls.config = lab_core.load_config(overrides={"n_tau": 256, "n_modes": 8, "sweep_u": [cls.u]})
        cls.result = lab_core.evaluate_point(cls.config, lab_core.sweep_values(cls.config)[0])

    def test_row(self):
        row = self.result.row
        self.assertEqual(set(row), {name for name, _ in report_utils.REPORT_COLUMNS})
        self.assertAlmostEqual(row["u"], self.u, places=12)
        self.assertAlmostEqual(row["h_norm"], 0.5, delta=5 * self.u)
        self.assertAlmostEqual(row["cometric_norm"], 1.0, delta=5 * self.u)
        self.assertAlmostEqual(row["tau_norm"] / (3 / (4 * np.pi**2)), 1.0, delta=0.1)
        self.assertAlmostEqual(row["ricci_curv_norm"] / (3 / (8 * np.pi**4)), 1.0, delta=0.15)
        self.assertAlmostEqual(row["poincare_over_ricci"], 1 / 3, delta=0.05)
        self.assertIsNone(row["thick_curv"])
        self.assertLess(row["hsc_perturbed"], 0)

    def test_forms(self):
        self.assertEqual(sorted(self.result.forms), sorted(lab_core.METRIC_FORMS))
        self.assertEqual(self.result.forms["poincare"].name, "poincare")

    def test_json(self):
        data = self.result.to_json()
        self.assertEqual(data["t"][1], 0.0)
        self.assertIn("ricci_curvature", data["tensors"])
        self.assertEqual(sorted(data["tensors"]["ricci_curvature"]["blocks"]),
                         ["block1", "block2", "block3", "block4"])

    def test_cache(self):
        lab_core.cache_clear()
        t = lab_core.sweep_values(self.config)[0]
        first = lab_core.cached_point(self.config, t)
        self.assertIs(lab_core.cached_point(self.config, t), first)
        self.assertEqual(first.row, self.result.row)
    def test_cache_bounded(self):
        lab_core.cache_clear()
        self.addCleanup(lab_core.cache_clear)
        values = [1e-6, 1e-7, 1e-8]
        with mock.patch("lab_config.POINT_CACHE_SIZE", 2), \
                mock.patch("lab_core.evaluate_point", side_effect=lambda config, t: ("point", t)):
            for t in values:
                lab_core.cached_point(self.config, t)
            keys = [t for _, t in lab_core.point_cache.entries]
            self.assertEqual(keys, [1e-7 + 0j, 1e-8 + 0j])
            self.assertEqual(lab_core.cached_point(self.config, 1e-6), ("point", 1e-6 + 0j))


class RunSweepTest(EnvTestCase):

    def config(self, **changes):
        overrides = {"n_tau": 128, "n_modes": 8, "sweep_u": [0.1, 0.05], "out_dir": self.tmp.name}
        overrides.update(changes)
        return lab_core.load_config(overrides=overrides)

    def test_thread_counts_agree(self):
        lab_core.cache_clear()
        single, err = lab_core.run_sweep(self.config())
        self.assertIsNone(err)
        lab_core.cache_clear()
        pooled, err = lab_core.run_sweep(self.config(threads=2))
        self.assertIsNone(err)
        self.assertEqual([r.row for r in single], [r.row for r in pooled])
        self.assertGreater(single[0].u, single[1].u)

    def test_failure(self):
        results, err = lab_core.run_sweep(self.config(sweep_u=None, sweep_t=[0.9]))
        self.assertIsNone(results)
        self.assertIsInstance(err, DomainError)

    def test_sweep_outputs_deterministic(self):
        contents = []
        for _ in range(2):
            lab_core.cache_clear()
            paths, err = lab_core.sweep(self.config())
            self.assertIsNone(err)
            self.assertEqual([os.path.basename(p) for p in paths], ["report.csv", "bundle.json"])
            contents.append([open(p, "rb").read() for p in paths])
        self.assertEqual(contents[0], contents[1])
        self.assertEqual(contents[0][0].decode().count("\n"), 3)

    def test_bundle_independent_of_scheduling(self):
        bundles = []
        for threads in (1, 2):
            out = os.path.join(self.tmp.name, f"threads{threads}")
            os.makedirs(out)
            lab_core.cache_clear()
            paths, err = lab_core.sweep(self.config(threads=threads, out_dir=out))
            self.assertIsNone(err)
            bundles.append(open(paths[1], "rb").read())
        self.assertEqual(bundles[0], bundles[1])
        self.assertNotIn(b"out_dir", bundles[0])
        self.assertNotIn(b"threads", bundles[0])

    def test_equivalence(self):
        paths, err = lab_core.equivalence(self.config())
        self.assertIsNone(err)
        names = {os.path.basename(p) for p in paths}
        self.assertIn("equivalence_wp_ricci.json", names)
        self.assertIn("equivalence_ricci_poincare.json", names)
        self.assertIn("equivalence.csv", names)
        self.assertIn("schwarz.json", names)
        self.assertEqual(len(names), 12)

    def test_single_point_equivalence(self):
        results, err = lab_core.run_sweep(self.config(sweep_u=[0.05]))
        self.assertIsNone(err)
        reports, schwarz = lab_core.equivalence_reports(self.config(sweep_u=[0.05]), results)
        self.assertEqual(reports[("ricci", "poincare")].verdict, "insufficient sweep")
        self.assertEqual(schwarz.verdict, "insufficient sweep")

if __name__ == '__main__':
    unittest.main()
