import logging
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

import lab_config
import lab_core
import collar_geometry as cg
import sections_operators as so
import differentials_family as df
import comparison_lab as cl
import metric_tensors as mt
from utils import LabError, ConfigurationError, hermitian_defect, relative_gap

logger = logging.getLogger(__name__)

RICCI_METRIC_CONSTANT = 3 / (4 * np.pi**2)
RICCI_CURVATURE_CONSTANT = 3 / (8 * np.pi**4)
# normalized residuals may wobble by this factor and still count as non-increasing
MONOTONE_SLACK = 1.1
APPROX_SWEEP_U = (0.1, 0.05, 0.025)

@dataclass
class CheckResult:
    name: str
    target: str
    measured: float
    tolerance: float
    passed: bool
    notes: list = field(default_factory=list)

def _result(name, target, measured, tolerance, config, notes=()):
    tolerance = tolerance * config.tolerance_scale
    notes = list(notes)
    passed = bool(measured < tolerance) and not notes
    return CheckResult(name, target, float(measured), tolerance, passed, notes)

def _variant(config, **changes):
    values = dict(vars(config))
    values.update(sweep_t=None, sweep_u=None, profile=lab_config.PROFILE_LEADING, beltrami_tails=None,
                  quadratic_tails=None, offdiag_b=None, offdiag_beta=None, thick_metric=None, thick_curvature=None,
                  s=None, m=1, n=1)
    values.update(changes)
    return SimpleNamespace(**values)

def _sweep(config):
    results, err = lab_core.run_sweep(config)
    if err:
        raise err
    return results

def _leading(config):
    return _sweep(_variant(config, sweep_u=list(lab_config.ACCEPT_SWEEP_U)))

def _decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))

## checks

def check_ke_identity(config):
    def collar(n_tau):
        chart = cg.CollarChart(lab_config.ACCEPT_KE_U)
        grid = cg.grid_build(chart, n_tau, 0)
        return cg.ke_residual(cg.collar_density(chart, chart.r_of_tau(grid.tau)), grid)
    chart = cg.CuspChart(lab_config.ACCEPT_KE_U)
    grid = cg.cusp_grid(chart, 512, inner=1e-8, outer=0.1)
    cusp = cg.ke_residual(cg.cusp_density(chart, grid.r), grid)
    coarse, fine = collar(32), collar(64)
    notes = []
    if coarse / fine < 3.5:
        notes.append(f"refinement ratio {coarse / fine:.3g} below 3.5")
    return _result("ke_identity", "KE residual of collar and cusp densities below 1e-8", max(collar(512), cusp),
                   1e-8, config, notes)

def _manufactured_rhs(s, k, u):
    # (□+1)s³ in mode k
    return -3 * s**3 * (1 - s**2) + 1.5 * s**5 + s**3 + 0.5 * s**2 * (k / u)**2 * s**3

def check_green_exactness(config):
    grid = cg.grid_build(cg.CollarChart(lab_config.ACCEPT_GREEN_U), 256, 8)
    s = grid.s
    rhs = so.Section.from_radial(grid, 0, s**4)
    boundary = so.Section.from_radial(grid, 0, 0.5 * s**2)
    leading = so.green_solve(so.GreenProblem(rhs, boundary))
    err_leading = float(np.max(np.abs(leading.mode(0) - 0.5 * s**2)))
    err_manufactured = 0.0
    for k in (0, 2):
        target = so.Section(grid, 0, [s**3], k)
        problem = so.GreenProblem(so.Section(grid, 0, [_manufactured_rhs(s, k, grid.u)], k), target)
        solved = so.green_solve(problem)
        err_manufactured = max(err_manufactured, float(np.max(np.abs(solved.mode(k) - s**3))))
    logger.info("green exactness: leading %.3g, manufactured %.3g", err_leading, err_manufactured)
    return _result("green_exactness", "T(sin^4) = sin^2/2 within 1e-8, sin^3 in modes 0 and 2 within 1e-7",
                   max(err_leading / 1e-8, err_manufactured / 1e-7), 1.0, config)

def check_wp_cometric(config):
    results = _leading(config)
    gaps = [abs(r.row["cometric_norm"] - 1) for r in results]
    measured = max(gap / (5 * r.u) for gap, r in zip(gaps, results))
    notes = [] if _decreasing(gaps) else ["cometric gap not decreasing in u"]
    return _result("wp_cometric", "g*u^3/(2|t|^2) -> 1 within 5u", measured, 1.0, config, notes)

def check_wp_metric(config):
    results = _leading(config)
    measured = max(abs(r.row["h_norm"] - 0.5) / (0.5 * 5 * r.u) for r in results)
    return _result("wp_metric", "h*|t|^2/u^3 -> 1/2 within 0.5*5u", measured, 1.0, config)

def check_ricci_metric(config):
    results = [r for r in _leading(config) if r.u <= 0.05]
    measured = max(abs(r.row["tau_norm"] / RICCI_METRIC_CONSTANT - 1) for r in results)
    return _result("ricci_metric", "tau*|t|^2/u^2 -> 3/(4pi^2)", measured, 0.10, config)

def check_ricci_curvature(config):
    results = [r for r in _leading(config) if r.u <= 0.05]
    measured = max(abs(r.row["ricci_curv_norm"] / RICCI_CURVATURE_CONSTANT - 1) for r in results)
    for r in results:
        logger.info("u = %.4g blocks %s", r.u, ", ".join(f"{k} {r.row[k]:.5g}" for k in
                                                          ("block1", "block2", "block3", "block4")))
    return _result("ricci_curvature", "Rt*|t|^4/u^4 -> 3/(8pi^4)", measured, 0.15, config)

def check_sign_pinching(config):
    results = _leading(config)
    measured = max(abs(r.row["hsc_wp_ratio"] - 1) for r in results)
    notes = []
    for r in results:
        if not -1.0 <= r.row["hsc_perturbed"] <= -0.4:
            notes.append(f"perturbed HSC {r.row['hsc_perturbed']:.4g} outside [-1, -0.4] at u = {r.u:.4g}")
        if not r.tensors["wp_curvature"].array[0, 0, 0, 0].real > 0:
            notes.append(f"WP R_1111 not positive at u = {r.u:.4g}")
        if not r.tensors["ricci_curvature"].array[0, 0, 0, 0].real > 0:
            notes.append(f"Ricci R_1111 not positive at u = {r.u:.4g}")
    return _result("sign_pinching", "HSC_WP -> -3/(2pi^2 u), perturbed HSC in [-1, -0.4]", measured, 0.20,
                   config, notes)

def _coupled(config):
    return _variant(config, sweep_u=list(lab_config.ACCEPT_SWEEP_U), n=2, profile=lab_config.PROFILE_DECORATED,
                    offdiag_b={(2, 1): 0.5})

def check_thick_bounded(config):
    results = _sweep(_coupled(config))
    values = [r.row["thick_curv"] for r in results]
    measured = max(values) / min(values) - 1
    return _result("thick_bounded", "thick-direction Rt stays O(1) across a coupled sweep", measured, 0.10, config)

def check_equivalence_verdicts(config):
    results = _sweep(_coupled(config))
    reports, _ = lab_core.equivalence_reports(config, results)
    wp = reports[("wp", "ricci")]
    notes = []
    if wp.verdict != cl.VERDICT_NOT_EQUIVALENT:
        notes.append(f"wp vs ricci verdict '{wp.verdict}'")
    for pair in (("ricci", "perturbed_ricci"), ("ricci", "mcmullen"), ("ricci", "poincare")):
        report = reports[pair]
        if report.verdict != cl.VERDICT_EQUIVALENT:
            notes.append(f"{pair[0]} vs {pair[1]} verdict '{report.verdict}'")
    measured = float("inf") if wp.exponent is None else abs(wp.exponent - 1)
    return _result("equivalence_verdicts", "WP/Ricci exponent 1 on a coupled family, other pairs equivalent",
                   measured, 0.1, config, notes)

def check_classical(config):
    disk = cl.DomainModel.disk()
    errors = [abs(cl.kobayashi_ball(r, 1.0) - 2 / r) / 1e-12 for r in (0.5, 1.0, 6.0)]
    errors.append(abs(cl.bergman_kernel_numeric(disk, 0.5, config.bergman_n) - 16 / (9 * np.pi)) / 1e-6)
    errors.append(abs(cl.bergman_metric_numeric(disk, 0.0, config.bergman_n) - 2) / 1e-4)
    notes = []
    rng = np.random.default_rng(0)
    radii = 0.7 * np.sqrt(rng.random(100))
    angles = 2 * np.pi * rng.random(100)
    for z in radii * np.exp(1j * angles):
        c_norm = cl.caratheodory_disk(z, 1.0)
        if c_norm > cl.kobayashi_disk(z, 1.0) * (1 + 1e-12):
            notes.append(f"C > K at {z:.4g}")
        if c_norm > 2 * cl.bergman_norm(disk, z, 1.0, config.bergman_n):
            notes.append(f"C > 2B at {z:.4g}")
    lower, upper = cl.bers_pinch_bounds(1.0)
    for rho in np.linspace(2, 6, 9):
        if not lower <= cl.kobayashi_ball(rho, 1.0) <= upper:
            notes.append(f"ball of radius {rho:g} outside the pinch bounds")
    return _result("classical", "ball, disk and Bergman values exact; C <= K, C <= 2B", max(errors), 1.0, config,
                   notes[:5])

def check_approx_order(config):
    notes = []
    measured = 0.0
    cases = (("diagonal", 0, 0), ("collar", 0, 1), ("mixed", 0, 2))
    series = {case: [] for case, _, _ in cases}
    for u in APPROX_SWEEP_U:
        family = df.make_model_family(2, 3, np.exp(-np.pi / u), profile=lab_config.PROFILE_DECORATED,
                                      offdiag_b={(2, 1): 0.5, (3, 1): 0.5}, c=config.collar_c)
        grids = family.build_grids(config.n_tau, config.n_modes)
        for case, i, j in cases:
            report = df.approx_residual(family, i, j, grids, c1=config.collar_c1, tol=config.solver_tol)
            series[case].append(report.normalized)
            measured = max(measured, report.normalized)
    for case, values in series.items():
        if any(b > a * MONOTONE_SLACK for a, b in zip(values, values[1:])):
            notes.append(f"{case} residuals {['%.3g' % v for v in values]} increase as u shrinks")
    return _result("approx_order", "normalized sup|e - e~| bounded and non-increasing", measured,
                   config.approx_bound, config, notes)

def check_structural(config):
    results = _sweep(config)
    measured = 0.0
    notes = []
    for r in results:
        for form in r.forms.values():
            measured = max(measured, hermitian_defect(form.matrix))
        ric = mt.ricci_contract(r.tensors["wp_curvature"], r.forms["wp"])
        measured = max(measured, relative_gap(ric.matrix, -r.forms["ricci"].matrix))
        for name, tensor in r.tensors.items():
            defect = tensor.symmetry_defect()
            if defect > config.symmetry_tol:
                notes.append(f"{name} symmetry defect {defect:.3g} at u = {r.u:.4g}")
            if tensor.assembly_defect is not None and tensor.assembly_defect > config.block_symmetry_tol:
                notes.append(f"{name} assembly defect {tensor.assembly_defect:.3g} at u = {r.u:.4g}")
    fresh = lab_core.evaluate_point(config, results[0].t)
    if fresh.row != results[0].row:
        notes.append("re-evaluating the first sweep point changed its report row")
    rows = {}
    for threads in (1, max(2, config.threads)):
        lab_core.cache_clear()
        rows[threads] = [r.row for r in _sweep(SimpleNamespace(**dict(vars(config), threads=threads)))]
    if len(set(map(repr, rows.values()))) != 1:
        notes.append(f"report rows differ between thread counts {sorted(rows)}")
    return _result("structural", "Hermitian forms, Kähler tensors, Ricci contraction identity, determinism",
                   measured, 1e-10, config, notes)

CHECKS = {
    "ke_identity": check_ke_identity,
    "green_exactness": check_green_exactness,
    "wp_cometric": check_wp_cometric,
    "wp_metric": check_wp_metric,
    "ricci_metric": check_ricci_metric,
    "ricci_curvature": check_ricci_curvature,
    "sign_pinching": check_sign_pinching,
    "thick_bounded": check_thick_bounded,
    "equivalence_verdicts": check_equivalence_verdicts,
    "classical": check_classical,
    "approx_order": check_approx_order,
    "structural": check_structural,
}

def select_checks(only=None):
    if not only:
        return list(CHECKS)
    names = [name.strip() for name in only.split(",") if name.strip()] if isinstance(only, str) else list(only)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise ConfigurationError(f"unknown checks {', '.join(unknown)}; known: {', '.join(CHECKS)}")
    return names

def run_checks(config, only=None):
    results = []
    for name in select_checks(only):
        logger.info("check %s", name)
        try:
            result = CHECKS[name](config)
        except LabError as ex:
            logger.error("check %s: %s", name, ex)
            result = CheckResult(name, "", float("nan"), 0.0, False, [f"{type(ex).__name__}: {ex}"])
        logger.info("check %s: %s", name, "pass" if result.passed else "FAIL")
        results.append(result)
    return results

def format_table(results):
    lines = ["%-22s %-10s %-12s %-12s %s" % ("check", "verdict", "measured", "tolerance", "target")]
    for r in results:
        lines.append("%-22s %-10s %-12.4g %-12.4g %s" % (r.name, "pass" if r.passed else "FAIL", r.measured,
                                                          r.tolerance, r.target))
        for note in r.notes:
            lines.append("    " + note)
    return "\n".join(lines)
