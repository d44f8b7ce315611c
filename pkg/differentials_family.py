import logging
from dataclasses import dataclass, field

import numpy as np

import lab_config
import collar_geometry as cg
from sections_operators import Section, GreenProblem, green_solve, integrate
from utils import ConfigurationError, DomainError, ModelValidationError, require_modulus_below_one

logger = logging.getLogger(__name__)

# relative slack for coefficient bounds that are met with equality
BOUND_SLACK = 1e-12

@dataclass(frozen=True)
class PinchingPoint:
    t: tuple
    s: tuple = ()
    n: int = None
    delta: float = lab_config.PINCH_DELTA

    def __post_init__(self):
        object.__setattr__(self, 't', tuple(complex(x) for x in np.atleast_1d(self.t)))
        object.__setattr__(self, 's', tuple(complex(x) for x in np.atleast_1d(self.s)))
        if self.n is None:
            object.__setattr__(self, 'n', len(self.t) + len(self.s))
        if not self.t:
            raise ConfigurationError("a pinching point needs at least one degeneration direction")
        if len(self.t) > self.n:
            raise ConfigurationError(f"m = {len(self.t)} degeneration directions exceed n = {self.n}")
        if len(self.s) not in (0, self.n - len(self.t)):
            raise ConfigurationError(f"expected {self.n - len(self.t)} non-degenerate parameters, got {len(self.s)}")
        for idx, t in enumerate(self.t):
            require_modulus_below_one(f"t_{idx + 1}", t)
        norm = float(np.linalg.norm(np.concatenate([np.abs(self.t), np.abs(self.s)])))
        if norm >= self.delta:
            raise DomainError(f"|(t, s)| = {norm:.6g} outside the pinching neighborhood of radius {self.delta}")

    @property
    def m(self):
        return len(self.t)

    @property
    def u(self):
        return tuple(float(cg.u_from_t(t)) for t in self.t)

    @property
    def u0(self):
        return sum(self.u) + sum(abs(x) for x in self.s)

@dataclass(frozen=True)
class QuadraticCoeffs:
    """Laurent tails α (keyed (direction, collar) then k) and off-diagonal constants κ with β = κ|t_j|^{1/2-ε}."""
    tails: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)

@dataclass(frozen=True)
class BeltramiCoeffs:
    tails: dict = field(default_factory=dict)
    b: dict = field(default_factory=dict)

def _laurent_rows(grid, tails, phase):
    # conj of Σ a_k z^k (k > 0) and Σ a_k (t/z)^{|k|} (k < 0), times z/z̄, as mode -> radial profile
    rows = {}
    u = grid.u
    for k, a in tails.items():
        if k > 0:
            radial = np.conj(a) * np.exp(k * grid.tau / u)
        else:
            radial = np.conj(a) * np.exp(1j * k * phase) * np.exp(k * (np.pi + grid.tau) / u)
        rows[2 - k] = rows.get(2 - k, 0) + radial
    return rows

def _rows_section(grid, weight, rows, factor):
    rows = {k: v for k, v in rows.items() if np.any(v)}
    if not rows:
        return Section.zeros(grid, weight)
    kmin, kmax = min(rows), max(rows)
    values = np.zeros((kmax - kmin + 1, grid.tau.size), dtype=complex)
    for k, v in rows.items():
        values[k - kmin] = v * factor
    return Section(grid, weight, values, kmin)

class BeltramiFamily:
    """A model degenerating family stored in the scale frame.

    Direction i carries the scale u_i/(π|t_i|) (degeneration directions) or 1 (thick directions); Beltrami data is
    divided by it, so every tensor entry in true units is the frame entry times the product of the index scales.
    """

    def __init__(self, point, quadratic, beltrami, thick_metric, thick_curvature, profile=lab_config.PROFILE_LEADING,
                 c=lab_config.COLLAR_C, bound_m=lab_config.BOUND_M, bound_eps=lab_config.BOUND_EPS,
                 laurent_max=lab_config.LAURENT_MAX):
        self.point = point
        self.quadratic = quadratic
        self.beltrami = beltrami
        self.thick_metric = np.asarray(thick_metric, dtype=float)
        self.thick_curvature = np.asarray(thick_curvature, dtype=float)
        self.profile = profile
        self.c = c
        self.bound_m = bound_m
        self.bound_eps = bound_eps
        self.laurent_max = laurent_max
        self.charts = [cg.CollarChart(u, c) for u in point.u]
        self._cache = {}

    @property
    def m(self):
        return self.point.m

    @property
    def n(self):
        return self.point.n

    def is_collar(self, i):
        return i < self.m

    def u(self, j):
        return self.charts[j].u

    def scale(self, i):
        if self.is_collar(i):
            return self.u(i) / (np.pi * abs(self.point.t[i]))
        return 1.0

    @property
    def scales(self):
        return np.array([self.scale(i) for i in range(self.n)])

    def build_grids(self, n_tau=lab_config.N_TAU, n_modes=lab_config.N_MODES):
        return [cg.grid_build(chart, n_tau, n_modes, collar=j) for j, chart in enumerate(self.charts)]

    ## Beltrami data

    def b_frame(self, i, j):
        if i == j:
            t = self.point.t[j]
            return -t / abs(t)
        kappa = self.beltrami.b.get((i, j), 0)
        if self.is_collar(i):
            return kappa * np.pi * self.u(j) * self.u(i)**2
        return kappa * self.u(j)

    def b_true(self, i, j):
        return self.scale(i) * self.b_frame(i, j)

    def beltrami_order(self, i, j):
        if i == j:
            return np.pi
        if self.is_collar(i):
            return np.pi * self.u(i)**2 / self.u(j)**2
        return 1 / self.u(j)**2

    def beltrami_tails_frame(self, i, j):
        order = self.beltrami_order(i, j)
        return {k: a * order for k, a in self.beltrami.tails.get((i, j), {}).items()}

    def beltrami_section(self, i, grid):
        key = ('A', i, grid)
        if key not in self._cache:
            j = grid.collar
            rows = _laurent_rows(grid, self.beltrami_tails_frame(i, j), np.angle(self.point.t[j]))
            rows[2] = rows.get(2, 0) + np.conj(self.b_frame(i, j))
            self._cache[key] = _rows_section(grid, -2, rows, grid.s**2)
        return self._cache[key]

    ## quadratic differential data

    def quadratic_prefactor_frame(self, i):
        if self.is_collar(i):
            t = self.point.t[i]
            return -(self.u(i) / np.pi**2) * t / abs(t)
        return 1.0

    def quadratic_prefactor(self, i):
        if self.is_collar(i):
            return -self.point.t[i] / np.pi
        return 1.0

    def beta(self, i, j):
        if i == j:
            return 1.0
        kappa = self.quadratic.beta.get((i, j), 0)
        return kappa * abs(self.point.t[j])**(0.5 - self.bound_eps)

    def quadratic_section(self, i, grid):
        key = ('Psi', i, grid)
        if key not in self._cache:
            j = grid.collar
            rows = _laurent_rows(grid, self.quadratic.tails.get((i, j), {}), np.angle(self.point.t[j]))
            rows[2] = rows.get(2, 0) + np.conj(self.beta(i, j))
            factor = np.conj(self.quadratic_prefactor_frame(i)) * 2 * grid.s**2 / grid.u**2
            self._cache[key] = _rows_section(grid, -2, rows, factor)
        return self._cache[key]

    def pair_section(self, i, j, grid):
        key = ('f', i, j, grid)
        if key not in self._cache:
            self._cache[key] = self.beltrami_section(i, grid) * self.beltrami_section(j, grid).conj()
        return self._cache[key]

    def e_profile(self, i, j, grid):
        """½sin²τ b̄_i b_j on collar c when c is one of the two directions, else 0 (frame units)."""
        c = grid.collar
        if c not in (i, j) or not self.is_collar(c):
            return Section.zeros(grid, 0)
        strength = np.conj(self.b_frame(i, c)) * self.b_frame(j, c)
        return Section.from_radial(grid, 0, 0.5 * strength * grid.s**2)

def _check_indices(name, keys, n, m, diagonal_allowed):
    for i, j in keys:
        if not (0 <= i < n and 0 <= j < m):
            raise ConfigurationError(f"{name} entry ({i + 1}, {j + 1}) outside n = {n} directions and m = {m} collars")
        if i == j and not diagonal_allowed:
            raise ConfigurationError(f"{name} entry ({i + 1}, {j + 1}) is diagonal")

def _check_tails(name, tails, c, bound, laurent_max):
    for (i, j), coeffs in tails.items():
        if any(k == 0 or abs(k) > laurent_max for k in coeffs):
            raise ConfigurationError(f"{name} tail for ({i + 1}, {j + 1}) has an order outside 1 <= |k| <= {laurent_max}")
        lower = sum(abs(a) * c**(-k) for k, a in coeffs.items() if k < 0)
        upper = sum(abs(a) * c**k for k, a in coeffs.items() if k > 0)
        for side, value in (("k<0", lower), ("k>0", upper)):
            if value > bound * (1 + BOUND_SLACK):
                raise ModelValidationError(f"{name}[{i + 1},{j + 1}] sum {side}", value, bound)

def validate_family(family):
    m, n = family.m, family.n
    bound = family.bound_m
    u0 = family.point.u0
    _check_indices("quadratic_tails", family.quadratic.tails, n, m, True)
    _check_indices("beltrami_tails", family.beltrami.tails, n, m, True)
    _check_indices("offdiag_beta", family.quadratic.beta, n, m, False)
    _check_indices("offdiag_b", family.beltrami.b, n, m, False)
    _check_tails("quadratic", family.quadratic.tails, family.c, bound, family.laurent_max)
    _check_tails("beltrami", family.beltrami.tails, family.c, bound, family.laurent_max)
    for (i, j) in family.quadratic.beta:
        value = abs(family.beta(i, j))
        limit = bound * abs(family.point.t[j])**(0.5 - family.bound_eps)
        if value > limit * (1 + BOUND_SLACK):
            raise ModelValidationError(f"beta[{i + 1},{j + 1}]", value, limit)
    for (i, j), kappa in family.beltrami.b.items():
        if abs(kappa) > bound * (1 + BOUND_SLACK):
            raise ModelValidationError(f"b[{i + 1},{j + 1}] relative", abs(kappa), bound)
    for j in range(m):
        gap = abs(family.beta(j, j) - 1)
        if gap > bound * u0:
            raise ModelValidationError(f"beta[{j + 1},{j + 1}] - 1", gap, bound * u0)
        t = family.point.t[j]
        gap = abs(family.b_frame(j, j) + t / abs(t))
        if gap > bound * u0:
            raise ModelValidationError(f"b[{j + 1},{j + 1}] leading form", gap, bound * u0)
    if family.thick_metric.size != n - m or family.thick_curvature.size != n - m:
        raise ConfigurationError(f"thick blocks need {n - m} entries")
    if np.any(family.thick_metric <= 0) or np.any(family.thick_curvature <= 0):
        raise ConfigurationError("thick metric and curvature entries must be positive")

def _index_dict(entries):
    # config records use 1-based directions and collars
    out = {}
    for key, value in (entries or {}).items():
        out[(key[0] - 1, key[1] - 1)] = value
    return out

def make_model_family(m, n, t, s=(), profile=lab_config.PROFILE_LEADING, c=lab_config.COLLAR_C,
                      beltrami_tails=None, quadratic_tails=None, offdiag_b=None, offdiag_beta=None,
                      thick_metric=None, thick_curvature=None, bound_m=lab_config.BOUND_M,
                      bound_eps=lab_config.BOUND_EPS, delta=lab_config.PINCH_DELTA,
                      laurent_max=lab_config.LAURENT_MAX):
    t = np.atleast_1d(np.asarray(t, dtype=complex))
    if t.size == 1:
        t = np.repeat(t, m)
    if t.size != m:
        raise ConfigurationError(f"got {t.size} pinching parameters for m = {m}")
    point = PinchingPoint(tuple(t), tuple(s), n, delta)
    if profile not in (lab_config.PROFILE_LEADING, lab_config.PROFILE_DECORATED):
        raise ConfigurationError(f"unknown profile '{profile}'")
    decorations = (beltrami_tails, quadratic_tails, offdiag_b, offdiag_beta)
    if profile == lab_config.PROFILE_LEADING and any(decorations):
        raise ConfigurationError("the leading profile takes no tails or off-diagonal data")
    thick_metric = np.ones(n - m) if thick_metric is None else thick_metric
    thick_curvature = np.ones(n - m) if thick_curvature is None else thick_curvature
    quadratic = QuadraticCoeffs(_index_dict(quadratic_tails), _index_dict(offdiag_beta))
    beltrami = BeltramiCoeffs(_index_dict(beltrami_tails), _index_dict(offdiag_b))
    family = BeltramiFamily(point, quadratic, beltrami, thick_metric, thick_curvature, profile, c, bound_m, bound_eps,
                            laurent_max)
    validate_family(family)
    logger.debug("family m=%d n=%d u=%s profile=%s", m, n, point.u, profile)
    return family

## pointwise evaluation in true units

def _collar_tau(family, j, z):
    chart = family.charts[j]
    r = abs(z)
    if r <= 0:
        raise DomainError("z = 0 is not on a collar")
    tau = chart.tau_of_r(r)
    chart.check_tau(tau)
    return tau

def _laurent_value(coeffs, z, t):
    total = 0j
    for k, a in coeffs.items():
        total += a * (z**k if k > 0 else (t / z)**(-k))
    return total

def quadratic_eval(family, i, j, z):
    z = complex(z)
    _collar_tau(family, j, z)
    q = _laurent_value(family.quadratic.tails.get((i, j), {}), z, family.point.t[j])
    return family.quadratic_prefactor(i) * (q + family.beta(i, j)) / z**2

def beltrami_eval(family, i, j, z):
    z = complex(z)
    tau = _collar_tau(family, j, z)
    p = _laurent_value(family.beltrami_tails_frame(i, j), z, family.point.t[j])
    frame = (z / np.conj(z)) * np.sin(tau)**2 * (np.conj(p) + np.conj(family.b_frame(i, j)))
    return family.scale(i) * frame

## pair fields

def _as_grids(grids):
    return [grids] if isinstance(grids, cg.CollarGrid) else list(grids)

@dataclass
class PairField:
    i: int
    j: int
    kind: str
    sections: dict

    def conj(self):
        return PairField(self.j, self.i, self.kind, {c: s.conj() for c, s in self.sections.items()})

    def section(self, grid):
        return self.sections.get(grid.collar) or Section.zeros(grid, 0)

    def integrate(self):
        return sum((integrate(s) for s in self.sections.values()), 0j)

    def sup(self):
        return max((s.sup_abs() for s in self.sections.values()), default=0.0)

def f_pair(family, i, j, grids):
    sections = {}
    for grid in _as_grids(grids):
        sec = family.pair_section(i, j, grid)
        if not sec.is_zero():
            sections[grid.collar] = sec
    return PairField(i, j, 'f', sections)

def e_green(family, i, j, grids, tol=lab_config.SOLVER_TOL, f_field=None):
    f_field = f_field or f_pair(family, i, j, grids)
    sections = {}
    for grid in _as_grids(grids):
        rhs = f_field.section(grid)
        if rhs.is_zero():
            continue
        # ẽ vanishes at both collar ends
        sections[grid.collar] = green_solve(GreenProblem(rhs, None, tol))
    return PairField(i, j, 'e', sections)

def cutoff_eta(x, c=lab_config.COLLAR_C, c1=lab_config.COLLAR_C1):
    if not 0 < c1 < c < 1:
        raise ConfigurationError(f"cut radii need 0 < c1 < c < 1, got c1 = {c1}, c = {c}")
    y = np.clip((np.asarray(x, dtype=float) - np.log(c1)) / (np.log(c) - np.log(c1)), 0.0, 1.0)
    return 1 - y**3 * (10 - 15 * y + 6 * y**2)

def cutoff_bounds(c=lab_config.COLLAR_C, c1=lab_config.COLLAR_C1):
    if not 0 < c1 < c < 1:
        raise ConfigurationError(f"cut radii need 0 < c1 < c < 1, got c1 = {c1}, c = {c}")
    width = np.log(c) - np.log(c1)
    return 15 / 8 / width, 10 / np.sqrt(3) / width**2

def e_tilde(family, i, j, grids, c=None, c1=lab_config.COLLAR_C1):
    c = family.c if c is None else c
    sections = {}
    for grid in _as_grids(grids):
        profile = family.e_profile(i, j, grid)
        if profile.is_zero():
            continue
        log_r = grid.log_r
        ramp = cutoff_eta(log_r, c, c1) * cutoff_eta(grid.chart.log_rho - log_r, c, c1)
        sections[grid.collar] = profile * ramp
    return PairField(i, j, 'e_tilde', sections)

@dataclass(frozen=True)
class ApproxReport:
    i: int
    j: int
    case: str
    sup: float
    normalized: float

def approx_residual(family, i, j, grids, c1=lab_config.COLLAR_C1, tol=lab_config.SOLVER_TOL, e_field=None):
    collars = [x for x in (i, j) if family.is_collar(x)]
    if not collars:
        raise ConfigurationError(f"directions {i + 1} and {j + 1} are both non-degenerate")
    grids = _as_grids(grids)
    exact = e_field or e_green(family, i, j, grids, tol)
    approx = e_tilde(family, i, j, grids, c1=c1)
    sup = 0.0
    for grid in grids:
        sup = max(sup, (exact.section(grid) - approx.section(grid)).sup_abs())
    if i == j:
        case = 'diagonal'
        factor = 1 / (np.pi**2 * family.u(i)**2)
    elif len(collars) == 2:
        case = 'collar'
        ui, uj = family.u(i), family.u(j)
        factor = (ui * uj / np.pi**2) / (ui**3 * uj**3)
    else:
        case = 'mixed'
        uc = family.u(collars[0])
        factor = (uc / np.pi) / uc**3
    return ApproxReport(i, j, case, sup, sup * factor)

def pairing(mu, psi):
    """[μ:φ] on one collar, with φ given through its dual section ψ = λ⁻¹φ̄ so that μφ dxdy = μψ̄ dv."""
    return integrate(mu * psi.conj())

def wp_duality_pairing(family, i, j, grids):
    total = sum((pairing(family.beltrami_section(i, g), family.quadratic_section(j, g)) for g in _as_grids(grids)), 0j)
    return total * family.scale(i) / family.scale(j)
