import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
from numpy.polynomial.legendre import leggauss

import lab_config
from differentials_family import wp_duality_pairing
from report_utils import EquivalenceReportSchema, SchwarzReportSchema
from utils import ConfigurationError, DomainError, NumericalFailure

logger = logging.getLogger(__name__)

## model domains

DISK = "disk"
BALL = "ball"
ANNULUS = "annulus"
SANDWICH = "sandwich"

@dataclass(frozen=True)
class DomainModel:
    kind: str
    radius: float = 1.0
    inner: float = 0.0
    dimension: int = 1

    def __post_init__(self):
        if self.kind not in (DISK, BALL, ANNULUS, SANDWICH):
            raise ConfigurationError(f"unknown domain kind '{self.kind}'")
        if not self.radius > 0 or self.inner < 0:
            raise DomainError(f"domain radii must be positive, got {self.inner}, {self.radius}")
        if self.kind in (ANNULUS, SANDWICH) and not 0 < self.inner < self.radius:
            raise DomainError(f"{self.kind} needs 0 < inner < outer, got {self.inner}, {self.radius}")
        if self.dimension < 1:
            raise ConfigurationError(f"domain dimension {self.dimension} must be at least 1")

    @classmethod
    def ball(cls, radius, dimension=1):
        return cls(BALL, radius, 0.0, dimension)

    @classmethod
    def disk(cls, radius=1.0):
        return cls(DISK, radius)

    @classmethod
    def annulus(cls, inner, outer):
        return cls(ANNULUS, outer, inner)

    @classmethod
    def sandwich(cls, inner=2.0, outer=6.0, dimension=1):
        return cls(SANDWICH, outer, inner, dimension)

    def contains(self, z):
        r = float(np.linalg.norm(np.atleast_1d(z)))
        if self.kind == ANNULUS:
            return self.inner < r < self.radius
        return r < self.radius

## Kobayashi and Carathéodory norms

def _vector_norm(v):
    return float(np.linalg.norm(np.atleast_1d(np.asarray(v, dtype=complex))))

def kobayashi_ball(r, v):
    if not r > 0:
        raise DomainError(f"ball radius {r} must be positive")
    return 2 * _vector_norm(v) / r

def caratheodory_ball(r, v):
    # the ball is convex, so the two norms agree at its center
    return kobayashi_ball(r, v)

def kobayashi_disk(z, v, radius=1.0):
    if not radius > 0:
        raise DomainError(f"disk radius {radius} must be positive")
    if abs(z) >= radius:
        raise DomainError(f"point {z} outside the disk of radius {radius}")
    return 2 * radius * abs(v) / (radius**2 - abs(z)**2)

def caratheodory_disk(z, v, radius=1.0):
    return kobayashi_disk(z, v, radius)

def kobayashi_bounds(domain, v):
    if domain.kind != SANDWICH:
        value = kobayashi_ball(domain.radius, v)
        return [value, value]
    return [kobayashi_ball(domain.radius, v), kobayashi_ball(domain.inner, v)]

def bers_pinch_bounds(v):
    return kobayashi_bounds(DomainModel.sandwich(2.0, 6.0), v)

## Bergman kernel

def _basis_powers(domain, n):
    if domain.kind == ANNULUS:
        return np.arange(-(n // 2), n - n // 2)
    return np.arange(n)

@lru_cache(maxsize=32)
def _bergman_factor(domain, n):
    # quadrature exact for every product z^j z̄^k of the basis
    powers = _basis_powers(domain, n)
    n_theta = 2 * n + 1
    n_r = n + 8
    nodes, weights = leggauss(n_r)
    lo = domain.inner if domain.kind == ANNULUS else 0.0
    r = lo + (domain.radius - lo) * (nodes + 1) / 2
    wr = weights * (domain.radius - lo) / 2 * r
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    z = (r[:, None] * np.exp(1j * theta[None, :])).ravel()
    w = np.repeat(wr, n_theta) * 2 * np.pi / n_theta
    basis = z[:, None]**powers[None, :]
    norms = np.sqrt(w @ np.abs(basis)**2)
    # modified Gram-Schmidt of the weighted samples, as a QR factorization
    _, factor = np.linalg.qr(np.sqrt(w)[:, None] * basis / norms)
    return powers, norms, factor

def _bergman_terms(domain, z, n):
    if domain.kind not in (DISK, BALL, ANNULUS) or domain.dimension != 1:
        raise ConfigurationError(f"Bergman kernel needs a planar disk or annulus, got {domain.kind}")
    if n < 4:
        raise ConfigurationError(f"Bergman basis size {n} must be at least 4")
    if not domain.contains(z):
        raise DomainError(f"point {z} outside the {domain.kind}")
    powers, norms, factor = _bergman_factor(domain, n)
    row = complex(z)**powers / norms
    return np.abs(scipy.linalg.solve_triangular(factor, row, trans='T'))**2

def bergman_kernel_numeric(domain, z, n=lab_config.BERGMAN_N):
    terms = _bergman_terms(domain, z, n)
    kernel = float(np.sum(terms))
    if not kernel > 0:
        raise NumericalFailure(f"Bergman kernel vanishes at {z}", domain.kind)
    ratio = abs(z)**2 / domain.radius**2
    tail = terms[-1] * ratio / (1 - ratio)
    if domain.kind == ANNULUS:
        inner_ratio = domain.inner**2 / abs(z)**2
        tail += terms[0] * inner_ratio / (1 - inner_ratio)
    if tail > lab_config.BERGMAN_TAIL_TOL * kernel:
        logger.warning("Bergman series truncated at %d terms, tail estimate %.3g of %.6g", n, tail, kernel)
    return kernel

def bergman_metric_numeric(domain, z, n=lab_config.BERGMAN_N, step=lab_config.BERGMAN_STEP):
    z = complex(z)
    values = [np.log(bergman_kernel_numeric(domain, z + d, n)) for d in (step, -step, 1j * step, -1j * step)]
    center = np.log(bergman_kernel_numeric(domain, z, n))
    metric = (sum(values) - 4 * center) / step**2 / 4
    if not metric > 0:
        raise NumericalFailure(f"Bergman metric {metric:.3g} not positive at {z}", domain.kind)
    return float(metric)

def bergman_norm(domain, z, v, n=lab_config.BERGMAN_N):
    return float(np.sqrt(bergman_metric_numeric(domain, z, n)) * abs(v))

## Teichmüller norms

def teichmuller_conorm(sections, scale=1.0, n_theta=None):
    total = 0.0
    for sec in sections:
        if sec.weight != -2:
            raise ConfigurationError(f"conorm expects weight -2 dual sections, got weight {sec.weight}")
        if sec.is_zero():
            continue
        density = np.mean(np.abs(sec.sample(n_theta)), axis=0)
        total += float(np.dot(sec.grid.weights, density))
    return total / scale

def quadratic_conorm(family, i, grids):
    return teichmuller_conorm([family.quadratic_section(i, g) for g in grids], family.scale(i))

def teichmuller_dual_lower_bound(family, i, grids):
    """A lower bound for ‖A_i‖_T: the best |[A_i:φ_j]|/‖φ_j‖_T over the stored quadratic basis.

    Returns (bound, j) with j the maximizing direction, or (0.0, None) when no basis element is supported."""
    best, best_j = 0.0, None
    for j in range(family.n):
        conorm = quadratic_conorm(family, j, grids)
        if conorm == 0:
            continue
        value = abs(wp_duality_pairing(family, i, j, grids)) / conorm
        if value > best:
            best, best_j = value, j
    return best, best_j

## metric comparisons

def generalized_eigenvalues(a, b):
    if not np.allclose(a.scale, b.scale, rtol=1e-12):
        raise ConfigurationError(f"{a.name} and {b.name} are held in different frames")
    ma = 0.5 * (a.matrix + a.matrix.conj().T)
    mb = 0.5 * (b.matrix + b.matrix.conj().T)
    try:
        return scipy.linalg.eigh(ma, mb, eigvals_only=True)
    except np.linalg.LinAlgError as ex:
        raise NumericalFailure(f"{b.name} is not positive definite", b.name) from ex

def _fit_exponent(u, ratio):
    x = np.log(np.asarray(u, dtype=float))
    y = np.log(np.asarray(ratio, dtype=float))
    if len(x) < 2 or np.ptp(x) == 0:
        return None, None
    coeffs = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((np.polyval(coeffs, x) - y)**2)))
    return float(coeffs[0]), residual

VERDICT_EQUIVALENT = "equivalent"
VERDICT_NOT_EQUIVALENT = "not equivalent"
VERDICT_INSUFFICIENT = "insufficient sweep"

@dataclass
class EquivalenceReport:
    name_a: str
    name_b: str
    t: list
    u: list
    lam_min: list
    lam_max: list
    c_low: float
    c_high: float
    exponent_min: float = None
    exponent_max: float = None
    residual: float = None
    verdict: str = VERDICT_INSUFFICIENT
    c_max: float = lab_config.EQUIV_C_MAX
    notes: list = field(default_factory=list)

    @property
    def exponent(self):
        if self.exponent_min is None:
            return None
        return max(self.exponent_min, self.exponent_max, key=abs)

    def to_json(self):
        return EquivalenceReportSchema().dump(self)

def equivalence_report(forms_a, forms_b, u, t=None, c_max=lab_config.EQUIV_C_MAX, exponent_tol=lab_config.EXPONENT_TOL):
    if not len(forms_a) == len(forms_b) == len(u):
        raise ConfigurationError(f"mismatched sweeps: {len(forms_a)}, {len(forms_b)} forms for {len(u)} points")
    if not forms_a:
        raise ConfigurationError("empty sweep")
    t = list(t) if t is not None else [None] * len(u)
    lam_min, lam_max = [], []
    for a, b in zip(forms_a, forms_b):
        lam = generalized_eigenvalues(a, b)
        lam_min.append(float(lam[0]))
        lam_max.append(float(lam[-1]))
    report = EquivalenceReport(forms_a[0].name, forms_b[0].name, t, [float(x) for x in u], lam_min, lam_max,
                               min(lam_min), max(lam_max), c_max=c_max)
    report.exponent_min, residual_min = _fit_exponent(u, lam_min)
    report.exponent_max, residual_max = _fit_exponent(u, lam_max)
    if report.exponent_min is None:
        report.notes.append("fewer than two distinct sweep points")
        return report
    report.residual = max(residual_min, residual_max)
    bounded = 1 / c_max <= report.c_low and report.c_high <= c_max
    exponents = (("lam_min", report.exponent_min), ("lam_max", report.exponent_max))
    degenerate = [(label, value) for label, value in exponents if abs(value) > exponent_tol]
    report.verdict = VERDICT_EQUIVALENT if bounded and not degenerate else VERDICT_NOT_EQUIVALENT
    if not bounded:
        report.notes.append(f"constants [{report.c_low:.4g}, {report.c_high:.4g}] outside [1/{c_max:g}, {c_max:g}]")
    for label, value in degenerate:
        report.notes.append(f"{label} degenerates like u^{value:.3f}")
    logger.info("%s vs %s: [%.4g, %.4g] exponents %.3f, %.3f -> %s", report.name_a, report.name_b, report.c_low,
                report.c_high, report.exponent_min, report.exponent_max, report.verdict)
    return report

@dataclass(frozen=True)
class SchwarzReport:
    sup: float
    exponent: float
    bounded: bool
    verdict: str

    def to_json(self):
        return SchwarzReportSchema().dump(self)

def schwarz_check(forms_g, forms_h, u, c_max=lab_config.EQUIV_C_MAX, exponent_tol=lab_config.EXPONENT_TOL):
    if not len(forms_g) == len(forms_h) == len(u):
        raise ConfigurationError("mismatched sweeps")
    for form in list(forms_g) + list(forms_h):
        form.require_positive_definite()
    top = [float(generalized_eigenvalues(h, g)[-1]) for g, h in zip(forms_g, forms_h)]
    exponent, _ = _fit_exponent(u, top)
    sup = max(top)
    if exponent is None:
        return SchwarzReport(sup, None, sup <= c_max, VERDICT_INSUFFICIENT)
    # ratios growing as u -> 0 have a negative exponent
    bounded = sup <= c_max and exponent > -exponent_tol
    return SchwarzReport(sup, exponent, bounded, "finite constant" if bounded else "no finite constant")
