import itertools
import json
import logging
import os
import sys
import threading
import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
from gevent.threadpool import ThreadPool
from marshmallow import Schema, fields, validate, validates_schema, post_load, ValidationError, RAISE

import lab_config
import collar_geometry
import sections_operators
import differentials_family
import metric_tensors
import comparison_lab
import report_utils
from log_utils import library_versions
from utils import LabError, ConfigurationError, NumericalFailure

logger = logging.getLogger(__name__)
point_cache = SimpleNamespace(lock=threading.Lock(), entries={})

LAB_MODULES = (collar_geometry, sections_operators, differentials_family, metric_tensors, comparison_lab, report_utils)

# metric forms held per sweep point, in equivalence report order
METRIC_FORMS = ("wp", "ricci", "perturbed_ricci", "mcmullen", "poincare")

def logger_setup(level, handler):
    for module in LAB_MODULES + (sys.modules[__name__],):
        module.logger.setLevel(level)
        module.logger.addHandler(handler)

def logger_clear(handler):
    for module in LAB_MODULES + (sys.modules[__name__],):
        module.logger.removeHandler(handler)

#
# Config
#

def read_config_file(path):
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as ex:
        raise ConfigurationError(f"cannot read config file '{path}': {ex}") from ex
    values = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values

def _split(value, sep):
    return [part.strip() for part in value.split(sep) if part.strip()]

class CommaList(fields.List):
    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str):
            value = _split(value, ",")
        elif not isinstance(value, (list, tuple)):
            value = [value]
        return super()._deserialize(value, attr, data, **kwargs)

class ComplexValue(fields.Field):

    def _serialize(self, value, attr, obj, **kwargs):
        return None if value is None else [complex(value).real, complex(value).imag]

    def _deserialize(self, value, attr, data, **kwargs):
        try:
            return complex(value.replace(" ", "")) if isinstance(value, str) else complex(value)
        except (TypeError, ValueError) as ex:
            raise ValidationError(f"not a complex number: {value!r}") from ex

class TailRecords(fields.Field):
    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        records = []
        for (i, j), coeffs in sorted(value.items()):
            for k, a in sorted(coeffs.items()):
                a = complex(a)
                records.append(f"{i},{j},{k},{a.real!r},{a.imag!r}")
        return ";".join(records)

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, dict):
            return value
        out = {}
        for record in _split(value, ";"):
            parts = _split(record, ",")
            if len(parts) != 5:
                raise ValidationError(f"tail record '{record}' needs i,j,k,re,im")
            try:
                i, j, k = (int(x) for x in parts[:3])
                a = complex(float(parts[3]), float(parts[4]))
            except ValueError as ex:
                raise ValidationError(f"tail record '{record}': {ex}") from ex
            out.setdefault((i, j), {})[k] = a
        return out

class PairRecords(fields.Field):
    """Off-diagonal constants as `i,j,re[,im];...` records keyed by 1-based (direction, collar)."""

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        return ";".join(f"{i},{j},{complex(a).real!r},{complex(a).imag!r}" for (i, j), a in sorted(value.items()))

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, dict):
            return value
        out = {}
        for record in _split(value, ";"):
            parts = _split(record, ",")
            if len(parts) not in (3, 4):
                raise ValidationError(f"off-diagonal record '{record}' needs i,j,re[,im]")
            try:
                i, j = int(parts[0]), int(parts[1])
                a = complex(float(parts[2]), float(parts[3]) if len(parts) == 4 else 0.0)
            except ValueError as ex:
                raise ValidationError(f"off-diagonal record '{record}': {ex}") from ex
            out[(i, j)] = a
        return out

_positive = validate.Range(min=0, min_inclusive=False)
_nonnegative = validate.Range(min=0)

class LabConfigSchema(Schema):

    class Meta:
        unknown = RAISE

    n_tau = fields.Integer(load_default=lab_config.N_TAU, validate=validate.Range(min=8))
    n_modes = fields.Integer(load_default=lab_config.N_MODES, validate=validate.Range(min=1))
    laurent_max = fields.Integer(load_default=lab_config.LAURENT_MAX, validate=validate.Range(min=1))
    collar_c = fields.Float(load_default=lab_config.COLLAR_C, validate=validate.Range(0, 1, min_inclusive=False,
                                                                                        max_inclusive=False))
    collar_c1 = fields.Float(load_default=lab_config.COLLAR_C1, validate=_positive)
    m = fields.Integer(load_default=1, validate=validate.Range(min=1))
    n = fields.Integer(load_default=1, validate=validate.Range(min=1))
    profile = fields.String(load_default=lab_config.PROFILE_LEADING,
                            validate=validate.OneOf([lab_config.PROFILE_LEADING, lab_config.PROFILE_DECORATED]))
    thick_metric = CommaList(fields.Float(validate=_positive), load_default=None, allow_none=True)
    thick_curvature = CommaList(fields.Float(validate=_positive), load_default=None, allow_none=True)
    beltrami_tails = TailRecords(load_default=None, allow_none=True)
    quadratic_tails = TailRecords(load_default=None, allow_none=True)
    offdiag_b = PairRecords(load_default=None, allow_none=True)
    offdiag_beta = PairRecords(load_default=None, allow_none=True)
    bound_m = fields.Float(load_default=lab_config.BOUND_M, validate=_positive)
    bound_eps = fields.Float(load_default=lab_config.BOUND_EPS, validate=validate.Range(0, 0.5, max_inclusive=False))
    pinch_delta = fields.Float(load_default=lab_config.PINCH_DELTA, validate=_positive)
    sweep_t = CommaList(ComplexValue(), load_default=None, allow_none=True, validate=validate.Length(min=1))
    sweep_u = CommaList(fields.Float(validate=_positive), load_default=None, allow_none=True,
                        validate=validate.Length(min=1))
    sweep_log10_t_start = fields.Float(load_default=lab_config.SWEEP_LOG10_T_START)
    sweep_log10_t_stop = fields.Float(load_default=lab_config.SWEEP_LOG10_T_STOP)
    sweep_points = fields.Integer(load_default=lab_config.SWEEP_POINTS, validate=validate.Range(min=1))
    t_phase = fields.Float(load_default=0.0)
    s = CommaList(ComplexValue(), load_default=None, allow_none=True)
    perturb_c = fields.Float(load_default=lab_config.PERTURB_C, validate=_positive)
    mcmullen_eps = fields.Float(load_default=lab_config.MCMULLEN_EPS, validate=_positive)
    mcmullen_delta = fields.Float(load_default=lab_config.MCMULLEN_DELTA, validate=_positive)
    equiv_c_max = fields.Float(load_default=lab_config.EQUIV_C_MAX, validate=validate.Range(min=1))
    exponent_tol = fields.Float(load_default=lab_config.EXPONENT_TOL, validate=_positive)
    solver_tol = fields.Float(load_default=lab_config.SOLVER_TOL, validate=_positive)
    symmetry_tol = fields.Float(load_default=lab_config.SYMMETRY_TOL, validate=_positive)
    block_symmetry_tol = fields.Float(load_default=lab_config.BLOCK_SYMMETRY_TOL, validate=_positive)
    noise_floor = fields.Float(load_default=lab_config.NOISE_FLOOR, validate=_nonnegative)
    approx_bound = fields.Float(load_default=lab_config.APPROX_BOUND, validate=_positive)
    bergman_n = fields.Integer(load_default=lab_config.BERGMAN_N, validate=validate.Range(min=4))
    tolerance_scale = fields.Float(load_default=lab_config.TOLERANCE_SCALE, validate=_nonnegative)
    out_dir = fields.String(load_default=lab_config.OUT_DIR)
    threads = fields.Integer(load_default=lab_config.THREADS, validate=validate.Range(min=1))
    log_level = fields.String(load_default=lab_config.LOG_LEVEL,
                              validate=validate.OneOf(["DEBUG", "INFO", "WARNING", "ERROR"]))

    @validates_schema
    def validate_cross_fields(self, data, **kwargs):
        if data["n_tau"] % 2:
            raise ValidationError("n_tau must be even", "n_tau")
        if data["collar_c1"] >= data["collar_c"]:
            raise ValidationError("collar_c1 must be below collar_c", "collar_c1")
        if data["m"] > data["n"]:
            raise ValidationError(f"m = {data['m']} exceeds n = {data['n']}", "m")
        if data.get("sweep_t") is not None and data.get("sweep_u") is not None:
            raise ValidationError("give at most one of sweep_t and sweep_u", "sweep_t")
        thick = data["n"] - data["m"]
        for key in ("thick_metric", "thick_curvature", "s"):
            if data.get(key) is not None and len(data[key]) != thick:
                raise ValidationError(f"{key} needs n - m = {thick} entries", key)
        for t in data.get("sweep_t") or ():
            if not 0 < abs(t) < 1:
                raise ValidationError(f"sweep_t entry {t} has modulus outside (0, 1)", "sweep_t")
        if data.get("sweep_t") is None and data.get("sweep_u") is None:
            if data["sweep_log10_t_start"] >= 0 or data["sweep_log10_t_stop"] >= 0:
                raise ValidationError("log10 |t| sweep bounds must be negative", "sweep_log10_t_start")

    @post_load
    def make_config(self, data, **kwargs):
        return SimpleNamespace(**data)

def load_config(path=None, overrides=None):
    raw = {}
    path = path or os.getenv("LAB_CONFIG")
    if path:
        raw.update(read_config_file(path))
    if os.getenv("LAB_LOG_LEVEL"):
        raw["log_level"] = os.getenv("LAB_LOG_LEVEL")
    if os.getenv("LAB_THREADS"):
        raw["threads"] = os.getenv("LAB_THREADS")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    return LabConfigSchema().load(raw)

def config_dump(config):
    return LabConfigSchema().dump(config)

# output location and scheduling never change results
SCHEDULING_KEYS = ("out_dir", "threads", "log_level")

def config_payload(config):
    dump = config_dump(config)
    for key in SCHEDULING_KEYS:
        dump.pop(key, None)
    return dump

def config_fingerprint(config):
    return json.dumps(config_payload(config), sort_keys=True)

def sweep_values(config):
    phase = np.exp(1j * config.t_phase)
    if config.sweep_t is not None:
        return [complex(t) for t in config.sweep_t]
    if config.sweep_u is not None:
        return [complex(np.exp(-np.pi / u) * phase) for u in config.sweep_u]
    exponents = np.linspace(config.sweep_log10_t_start, config.sweep_log10_t_stop, config.sweep_points)
    return [complex(10.0**x * phase) for x in exponents]

def build_family(config, t):
    return differentials_family.make_model_family(
        config.m, config.n, t, s=tuple(config.s or ()), profile=config.profile, c=config.collar_c,
        beltrami_tails=config.beltrami_tails, quadratic_tails=config.quadratic_tails, offdiag_b=config.offdiag_b,
        offdiag_beta=config.offdiag_beta, thick_metric=config.thick_metric, thick_curvature=config.thick_curvature,
        bound_m=config.bound_m, bound_eps=config.bound_eps, delta=config.pinch_delta, laurent_max=config.laurent_max)

def build_pipeline(config, t):
    family = build_family(config, t)
    grids = family.build_grids(config.n_tau, config.n_modes)
    return metric_tensors.TensorPipeline(family, grids, config.solver_tol, config.symmetry_tol,
                                         config.block_symmetry_tol)

#
# Sweep points
#

@dataclass
class PointResult:
    t: complex
    u: float
    row: dict
    forms: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)

    def to_json(self):
        return report_utils.PointSchema().dump(self)

def report_row(pipeline, config):
    family = pipeline.family
    grids = pipeline.grids
    t = family.point.t[0]
    u = family.u(0)
    mod = abs(t)
    direction = np.zeros(family.n)
    direction[0] = 1.0
    h = pipeline.wp_metric()
    tau = pipeline.ricci_metric()
    tilde = pipeline.perturbed_metric(config.perturb_c)
    wp_curv = pipeline.wp_curvature()
    ricci_curv = pipeline.ricci_curvature()
    perturbed_curv = pipeline.perturbed_curvature(config.perturb_c)
    approx = differentials_family.approx_residual(family, 0, 0, grids, c1=config.collar_c1, tol=config.solver_tol,
                                                  e_field=pipeline.e(0, 0))
    teich, _ = comparison_lab.teichmuller_dual_lower_bound(family, 0, grids)
    row = {
        "t_re": t.real,
        "t_im": t.imag,
        "u": u,
        "h_norm": h.entry(0, 0).real * mod**2 / u**3,
        "cometric_norm": pipeline.wp_cometric().entry(0, 0).real * u**3 / (2 * mod**2),
        "tau_norm": tau.entry(0, 0).real * mod**2 / u**2,
        "ricci_curv_norm": ricci_curv.entry(0, 0, 0, 0).real * mod**4 / u**4,
        "perturbed_curv_norm": perturbed_curv.entry(0, 0, 0, 0).real * mod**4 / u**4,
        "hsc_wp_ratio": metric_tensors.holomorphic_sectional(wp_curv, h, direction) / (-3 / (2 * np.pi**2 * u)),
        "hsc_ricci": metric_tensors.holomorphic_sectional(ricci_curv, tau, direction),
        "hsc_perturbed": metric_tensors.holomorphic_sectional(perturbed_curv, tilde, direction),
        "thick_curv": None,
        "wp_over_ricci": float(comparison_lab.generalized_eigenvalues(h, tau)[-1]),
        "mcmullen_over_ricci": float(comparison_lab.generalized_eigenvalues(
            pipeline.mcmullen_metric(config.mcmullen_eps, config.mcmullen_delta), tau)[-1]),
        "poincare_over_ricci": float(comparison_lab.generalized_eigenvalues(pipeline.poincare_metric(), tau)[-1]),
        "cometric_defect": pipeline.cometric_defect(),
        "self_adjoint_defect": pipeline.self_adjoint_defect(),
        "ricci_symmetry_defect": ricci_curv.assembly_defect,
        "order_gap": pipeline.symmetrization_order_gap(),
        "approx_normalized": approx.normalized,
        "teich_lower_norm": teich * mod / u,
        "max_residual": max(pipeline.residuals().values(), default=0.0),
    }
    if family.n > family.m:
        k = family.m
        row["thick_curv"] = ricci_curv.entry(k, k, k, k).real
    for name, block in ricci_curv.blocks.items():
        row[name] = block[0, 0, 0, 0].real
    for key, value in row.items():
        if value is not None and not np.isfinite(value):
            raise NumericalFailure(f"report entry {key} is not finite", f"t = {t}")
    return row

def evaluate_point(config, t):
    start = time.time()
    pipeline = build_pipeline(config, t)
    row = report_row(pipeline, config)
    forms = {
        "wp": pipeline.wp_metric(),
        "ricci": pipeline.ricci_metric(),
        "perturbed_ricci": pipeline.perturbed_metric(config.perturb_c),
        "mcmullen": pipeline.mcmullen_metric(config.mcmullen_eps, config.mcmullen_delta),
        "poincare": pipeline.poincare_metric(),
    }
    tensors = {
        "wp_curvature": pipeline.wp_curvature(),
        "ricci_curvature": pipeline.ricci_curvature(),
        "perturbed_curvature": pipeline.perturbed_curvature(config.perturb_c),
    }
    result = PointResult(complex(t), row["u"], row, forms, tensors)
    logger.info("t = %.6g%+.6gj, u = %.6g: %.2fs", t.real, t.imag, result.u, time.time() - start)
    return result

def __cached(key):
    ## assumes lock is held
    return point_cache.entries.get(key)

def __store(key, result):
    ## assumes lock is held
    entries = point_cache.entries
    if key not in entries:
        entries[key] = result
        while len(entries) > lab_config.POINT_CACHE_SIZE:
            del entries[next(iter(entries))]
    return entries[key]

def cached_point(config, t):
    key = (config_fingerprint(config), complex(t))
    with point_cache.lock:
        result = __cached(key)
    if result is not None:
        return result
    result = evaluate_point(config, complex(t))
    with point_cache.lock:
        return __store(key, result)

def cache_clear():
    with point_cache.lock:
        point_cache.entries.clear()

def _point_outcome(job):
    config, t = job
    try:
        return cached_point(config, t), None
    except LabError as ex:
        logger.error("sweep point t = %s: %s", t, ex)
        return None, ex

def run_sweep(config):
    values = sweep_values(config)
    logger.info("sweep of %d points on %d threads", len(values), config.threads)
    jobs = [(config, t) for t in values]
    if config.threads > 1:
        pool = ThreadPool(config.threads)
        try:
            outcomes = pool.map(_point_outcome, jobs)
        finally:
            pool.kill()
    else:
        outcomes = [_point_outcome(job) for job in jobs]
    for _, err in outcomes:
        if err is not None:
            return None, err
    return [result for result, _ in outcomes], None

#
# Reports
#

def write_sweep(config, results):
    out = config.out_dir
    paths = [report_utils.write_report_csv(report_utils.out_path(out, lab_config.REPORT_CSV),
                                           [result.row for result in results])]
    data = report_utils.bundle(config_payload(config), library_versions(), results)
    paths.append(report_utils.write_json(report_utils.out_path(out, lab_config.BUNDLE_JSON),
                                         report_utils.BundleSchema().dump(data)))
    return paths

def sweep(config):
    results, err = run_sweep(config)
    if err:
        return None, err
    return write_sweep(config, results), None

def equivalence_reports(config, results):
    u = [result.u for result in results]
    t = [result.t for result in results]
    reports = {}
    for a, b in itertools.combinations(METRIC_FORMS, 2):
        forms_a = [result.forms[a] for result in results]
        forms_b = [result.forms[b] for result in results]
        reports[(a, b)] = comparison_lab.equivalence_report(forms_a, forms_b, u, t, config.equiv_c_max,
                                                            config.exponent_tol)
    schwarz = comparison_lab.schwarz_check([result.forms["ricci"] for result in results],
                                           [result.forms["wp"] for result in results], u, config.equiv_c_max,
                                           config.exponent_tol)
    return reports, schwarz

def write_equivalence(config, results, reports, schwarz):
    out = config.out_dir
    dump = config_payload(config)
    paths = []
    for (a, b), report in reports.items():
        data = {"schema": lab_config.JSON_SCHEMA_VERSION, "config": dump, "pair": [a, b], "report": report.to_json()}
        paths.append(report_utils.write_json(report_utils.out_path(out, f"equivalence_{a}_{b}.json"), data))
    data = {"schema": lab_config.JSON_SCHEMA_VERSION, "config": dump, "pair": ["ricci", "wp"],
            "report": schwarz.to_json()}
    paths.append(report_utils.write_json(report_utils.out_path(out, lab_config.SCHWARZ_JSON), data))
    header = ["t_re", "t_im", "u"]
    for a, b in reports:
        header += [f"{a}/{b} lambda_min", f"{a}/{b} lambda_max"]
    rows = []
    for idx, result in enumerate(results):
        row = [result.t.real, result.t.imag, result.u]
        for report in reports.values():
            row += [report.lam_min[idx], report.lam_max[idx]]
        rows.append(row)
    paths.append(report_utils.write_csv(report_utils.out_path(out, lab_config.EQUIVALENCE_CSV), header, rows))
    return paths

def equivalence(config):
    results, err = run_sweep(config)
    if err:
        return None, err
    try:
        reports, schwarz = equivalence_reports(config, results)
    except LabError as ex:
        logger.error("equivalence reports: %s", ex)
        return None, ex
    for (a, b), report in reports.items():
        logger.info("%s vs %s: %s", a, b, report.verdict)
    logger.info("schwarz ricci -> wp: %s", schwarz.verdict)
    return write_equivalence(config, results, reports, schwarz), None
