import csv
import json
import os
import tempfile
import unittest

import numpy as np

import metric_tensors as mt
import report_utils as ru

class FieldTest(unittest.TestCase):

    def test_complex_pair(self):
        field = ru.ComplexPair()
        self.assertEqual(field.serialize("z", {"z": 1 - 2j}), [1.0, -2.0])
        self.assertIsNone(field.serialize("z", {"z": None}))
        self.assertEqual(field.deserialize([0.5, 1.5]), 0.5 + 1.5j)

    def test_complex_array(self):
        out = ru.ComplexArray().serialize("a", {"a": np.array([[1j, 2.0]])})
        self.assertEqual(out, [[[0.0, 1.0], [2.0, 0.0]]])

class SchemaTest(unittest.TestCase):

    def test_hermitian_form(self):
        form = mt.HermitianForm([[2.0, 1j], [-1j, 2.0]], [3.0, 1.0], "wp")
        data = form.to_json()
        self.assertEqual(data["name"], "wp")
        self.assertEqual(data["scale"], [3.0, 1.0])
        self.assertEqual(data["matrix"][0][1], [0.0, 1.0])
        np.testing.assert_allclose(data["eigenvalues"], [1.0, 3.0])

    def test_curvature_tensor(self):
        tensor = mt.CurvatureTensor(np.ones((1, 1, 1, 1)), [2.0], "r", {"block1": np.full((1, 1, 1, 1), 0.5)})
        data = tensor.to_json()
        self.assertEqual(data["array"], [[[[[1.0, 0.0]]]]])
        self.assertEqual(data["blocks"]["block1"], [[[[[0.5, 0.0]]]]])
        self.assertIsNone(data["assembly_defect"])
        tensor.assembly_defect = 2e-5
        self.assertEqual(tensor.to_json()["assembly_defect"], 2e-5)

    def test_report_row(self):
        data = ru.ReportRowSchema().dump({"u": 0.1, "h_norm": 0.5, "thick_curv": None})
        self.assertEqual(data["u"], 0.1)
        self.assertIsNone(data["thick_curv"])

    def test_bundle(self):
        data = ru.BundleSchema().dump(ru.bundle({"m": 1}, {"numpy": "2.1.3"}, []))
        self.assertEqual(data, {"schema": 1, "config": {"m": 1}, "versions": {"numpy": "2.1.3"}, "points": []})

class WriterTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_csv_precision(self):
        path = ru.write_report_csv(ru.out_path(self.tmp.name, "report.csv"), [{"u": 1 / 3, "h_norm": 0.5}])
        with open(path, encoding="utf-8") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0][:4], ["t_re", "t_im", "u", "h_norm[h*|t|^2/u^3]"])
        self.assertEqual(len(rows[0]), len(ru.REPORT_COLUMNS))
        self.assertEqual(rows[1][2], "0.33333333333333331")
        self.assertEqual(float(rows[1][2]), 1 / 3)
        self.assertEqual(rows[1][0], "")

    def test_json_sorted(self):
        path = ru.write_json(os.path.join(self.tmp.name, "x.json"), {"b": 1, "a": [1.5]})
        with open(path, encoding="utf-8") as f:
            text = f.read()
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(json.loads(text), {"a": [1.5], "b": 1})

    def test_out_path_creates_directory(self):
        path = ru.out_path(os.path.join(self.tmp.name, "nested", "dir"), "f.csv")
        self.assertTrue(os.path.isdir(os.path.dirname(path)))

if __name__ == '__main__':
    unittest.main()
