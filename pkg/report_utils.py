import csv
import json
import logging
import os

import numpy as np
from marshmallow import Schema, fields

import lab_config

logger = logging.getLogger(__name__)

class ComplexPair(fields.Field):
    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        value = complex(value)
        return [value.real, value.imag]

    def _deserialize(self, value, attr, data, **kwargs):
        re, im = value
        return complex(re, im)

class ComplexArray(fields.Field):
    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        arr = np.asarray(value, dtype=complex)
        return np.stack([arr.real, arr.imag], axis=-1).tolist()

    def _deserialize(self, value, attr, data, **kwargs):
        arr = np.asarray(value, dtype=float)
        return arr[..., 0] + 1j * arr[..., 1]

class FloatArray(fields.Field):

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        return [float(x) for x in np.ravel(value)]

class HermitianFormSchema(Schema):
    name = fields.String()
    scale = FloatArray()
    matrix = ComplexArray()
    eigenvalues = fields.Method("get_eigenvalues")

    def get_eigenvalues(self, obj):
        return [float(x) for x in obj.eigenvalues()]

class CurvatureTensorSchema(Schema):
    name = fields.String()
    scale = FloatArray()
    array = ComplexArray()
    blocks = fields.Dict(keys=fields.String(), values=ComplexArray())
    assembly_defect = fields.Float(allow_none=True)

class EquivalenceReportSchema(Schema):
    name_a = fields.String()
    name_b = fields.String()
    t = fields.List(ComplexPair(allow_none=True))
    u = fields.List(fields.Float())
    lam_min = fields.List(fields.Float())
    lam_max = fields.List(fields.Float())
    c_low = fields.Float()
    c_high = fields.Float()
    exponent = fields.Float(allow_none=True, dump_only=True)
    exponent_min = fields.Float(allow_none=True)
    exponent_max = fields.Float(allow_none=True)
    residual = fields.Float(allow_none=True)
    verdict = fields.String()
    c_max = fields.Float()
    notes = fields.List(fields.String())

class SchwarzReportSchema(Schema):
    sup = fields.Float()
    exponent = fields.Float(allow_none=True)
    bounded = fields.Boolean()
    verdict = fields.String()

# (attribute, CSV header); headers name the normalization of each column
REPORT_COLUMNS = (
    ("t_re", "t_re"),
    ("t_im", "t_im"),
    ("u", "u"),
    ("h_norm", "h_norm[h*|t|^2/u^3]"),
    ("cometric_norm", "cometric_norm[g*u^3/(2|t|^2)]"),
    ("tau_norm", "tau_norm[tau*|t|^2/u^2]"),
    ("ricci_curv_norm", "ricci_curv_norm[Rt*|t|^4/u^4]"),
    ("perturbed_curv_norm", "perturbed_curv_norm[P*|t|^4/u^4]"),
    ("hsc_wp_ratio", "hsc_wp_ratio[HSC_WP/(-3/(2pi^2*u))]"),
    ("hsc_ricci", "hsc_ricci"),
    ("hsc_perturbed", "hsc_perturbed"),
    ("thick_curv", "thick_curv[Rt_thick]"),
    ("wp_over_ricci", "wp_over_ricci[lambda_max]"),
    ("mcmullen_over_ricci", "mcmullen_over_ricci[lambda_max]"),
    ("poincare_over_ricci", "poincare_over_ricci[lambda_max]"),
    ("cometric_defect", "cometric_defect"),
    ("self_adjoint_defect", "self_adjoint_defect"),
    ("ricci_symmetry_defect", "ricci_symmetry_defect"),
    ("order_gap", "order_gap"),
    ("approx_normalized", "approx_normalized"),
    ("teich_lower_norm", "teich_lower_norm[lower*|t|/u]"),
    ("max_residual", "max_residual"),
    ("block1", "block1[frame]"),
    ("block2", "block2[frame]"),
    ("block3", "block3[frame]"),
    ("block4", "block4[frame]"),
)

ReportRowSchema = Schema.from_dict({name: fields.Float(allow_none=True) for name, _ in REPORT_COLUMNS},
                                   name="ReportRowSchema")

class PointSchema(Schema):
    t = ComplexPair()
    u = fields.Float()
    row = fields.Nested(ReportRowSchema)
    forms = fields.Dict(keys=fields.String(), values=fields.Nested(HermitianFormSchema))
    tensors = fields.Dict(keys=fields.String(), values=fields.Nested(CurvatureTensorSchema))

class BundleSchema(Schema):
    schema_version = fields.Integer(data_key="schema", attribute="schema")
    config = fields.Dict()
    versions = fields.Dict(keys=fields.String(), values=fields.String())
    points = fields.List(fields.Nested(PointSchema))

def format_value(value):
    if value is None:
        return ""
    return "%.17g" % value

def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([value if isinstance(value, str) else format_value(value) for value in row])
    logger.info("wrote %s", path)
    return path

def write_report_csv(path, rows):
    header = [title for _, title in REPORT_COLUMNS]
    return write_csv(path, header, [[row.get(name) for name, _ in REPORT_COLUMNS] for row in rows])

def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("wrote %s", path)
    return path

def bundle(config_dump, versions, points):
    return {"schema": lab_config.JSON_SCHEMA_VERSION, "config": config_dump, "versions": versions, "points": points}

def out_path(out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)
