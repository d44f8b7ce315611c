import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.linalg import solve_banded, LinAlgError

import lab_config
from utils import ConfigurationError, NumericalFailure

logger = logging.getLogger(__name__)

class Section:
    """A weight-p field on a collar grid, stored as angular Fourier modes times τ-samples.

    values[m] holds the coefficient of e^{i(kmin+m)θ}; coefficients carry no power of r, which the Maass operators
    never produce.
    """

    def __init__(self, grid, weight, values, kmin=0, residuals=None):
        if abs(weight) > lab_config.MAX_WEIGHT:
            raise ConfigurationError(f"weight {weight} outside [-{lab_config.MAX_WEIGHT}, {lab_config.MAX_WEIGHT}]")
        values = np.array(values, dtype=complex, ndmin=2)
        if values.shape[1] != grid.tau.size:
            raise ConfigurationError(f"section has {values.shape[1]} radial samples, grid has {grid.tau.size}")
        values.flags.writeable = False
        self.grid = grid
        self.weight = weight
        self.values = values
        self.kmin = kmin
        self.residuals = residuals or {}

    @classmethod
    def from_radial(cls, grid, weight, profile, mode=0):
        profile = np.broadcast_to(np.asarray(profile, dtype=complex), grid.tau.shape)
        return cls(grid, weight, profile[None, :], mode)

    @classmethod
    def zeros(cls, grid, weight):
        return cls(grid, weight, np.zeros((1, grid.tau.size)), 0)

    @property
    def kmax(self):
        return self.kmin + self.values.shape[0] - 1

    @property
    def modes(self):
        return np.arange(self.kmin, self.kmax + 1)

    def mode(self, k):
        if self.kmin <= k <= self.kmax:
            return self.values[k - self.kmin]
        return np.zeros(self.grid.tau.size, dtype=complex)

    def is_zero(self):
        return not np.any(self.values)

    def _check_grid(self, other):
        if other.grid is not self.grid:
            raise ConfigurationError("sections live on different grids")

    def _combine(self, other, sign):
        self._check_grid(other)
        if other.weight != self.weight:
            raise ConfigurationError(f"cannot add weights {self.weight} and {other.weight}")
        kmin = min(self.kmin, other.kmin)
        kmax = max(self.kmax, other.kmax)
        values = np.zeros((kmax - kmin + 1, self.grid.tau.size), dtype=complex)
        values[self.kmin - kmin:self.kmax - kmin + 1] += self.values
        values[other.kmin - kmin:other.kmax - kmin + 1] += sign * other.values
        return Section(self.grid, self.weight, values, kmin)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return Section(self.grid, self.weight, -self.values, self.kmin)

    def __mul__(self, other):
        if isinstance(other, Section):
            self._check_grid(other)
            values = np.zeros((self.values.shape[0] + other.values.shape[0] - 1, self.grid.tau.size), dtype=complex)
            for idx, row in enumerate(self.values):
                values[idx:idx + other.values.shape[0]] += row * other.values
            return Section(self.grid, self.weight + other.weight, values, self.kmin + other.kmin).truncated()
        # scalar or radial profile
        return Section(self.grid, self.weight, self.values * other, self.kmin)

    def __rmul__(self, other):
        return self.__mul__(other)

    def conj(self):
        return Section(self.grid, -self.weight, np.conj(self.values[::-1]), -self.kmax)

    def truncated(self):
        # spectral truncation to the grid's modes, dropping empty edge modes
        keep = np.flatnonzero(np.any(self.values != 0, axis=1) & (np.abs(self.modes) <= self.grid.n_modes))
        if keep.size == 0:
            return Section.zeros(self.grid, self.weight)
        lo, hi = keep[0], keep[-1]
        return Section(self.grid, self.weight, self.values[lo:hi + 1], self.kmin + lo, self.residuals)

    def sample(self, n_theta=None):
        if n_theta is None:
            n_theta = 2 * max(abs(self.kmin), abs(self.kmax)) + 8
        theta = 2 * np.pi * np.arange(n_theta) / n_theta
        return np.exp(1j * np.outer(theta, self.modes)) @ self.values

    def sup_abs(self, region=None, n_theta=None):
        mask = np.ones(self.grid.tau.size, dtype=bool)
        if region is not None:
            mask = (self.grid.tau >= region[0]) & (self.grid.tau <= region[1])
        if not mask.any() or self.is_zero():
            return 0.0
        return float(np.max(np.abs(self.sample(n_theta)[:, mask])))

def integrate(section):
    if section.weight != 0:
        raise ConfigurationError(f"cannot integrate a weight {section.weight} section")
    return complex(np.dot(section.grid.weights, section.mode(0)))

def _product_integral(a, b, weights):
    a._check_grid(b)
    if a.weight + b.weight != 0:
        raise ConfigurationError(f"cannot integrate a weight {a.weight + b.weight} product")
    total = 0j
    for k in range(max(a.kmin, -b.kmax), min(a.kmax, -b.kmin) + 1):
        total += np.dot(weights, a.mode(k) * b.mode(-k))
    return complex(total)

def integrate_product(a, b):
    return _product_integral(a, b, a.grid.weights)

def green_pairing(a, b):
    """∫ a·b dv with the weights the homogeneous Green operator is symmetric under.

    For f, g of weight 0, green_pairing(T f, g) == green_pairing(f, T g) up to rounding, with T the green_solve of
    a problem without boundary data.
    """
    return _product_integral(a, b, a.grid.green_weights)

def tau_derivative(section, order=1):
    grid = section.grid
    def _diff(part):
        spline = make_interp_spline(grid.tau, part.T, k=lab_config.DERIVATIVE_SPLINE_DEGREE)
        return spline.derivative(order)(grid.tau).T
    return _diff(section.values.real) + 1j * _diff(section.values.imag)

def _check_weight(sigma, p):
    if sigma.weight != p:
        raise ConfigurationError(f"operator expects weight {p}, got {sigma.weight}")

def maass_K(p, sigma):
    """K_p(σ) = ρ^{p-1}∂_z(ρ^{-p}σ) with ρ² = λ; lowers the Fourier mode by one."""
    _check_weight(sigma, p)
    grid = sigma.grid
    if sigma.is_zero():
        return Section.zeros(grid, p + 1)
    u = grid.u
    k = sigma.modes[:, None]
    deriv = tau_derivative(sigma)
    values = grid.s * (u * deriv + (p + k) * sigma.values) + u * p * grid.ds * sigma.values
    return Section(grid, p + 1, values / (np.sqrt(2) * u), sigma.kmin - 1)

def maass_L(p, sigma):
    _check_weight(sigma, p)
    grid = sigma.grid
    if sigma.is_zero():
        return Section.zeros(grid, p - 1)
    u = grid.u
    k = sigma.modes[:, None]
    deriv = tau_derivative(sigma)
    values = grid.s * (u * deriv - (p + k) * sigma.values) - u * p * grid.ds * sigma.values
    return Section(grid, p - 1, values / (np.sqrt(2) * u), sigma.kmin + 1)

def box(f):
    """□f = -λ^{-1}∂_z∂_z̄ f, mode by mode -(sin²τ/2)(f'' - (k/u)² f)."""
    _check_weight(f, 0)
    grid = f.grid
    if f.is_zero():
        return Section.zeros(grid, 0)
    k = f.modes[:, None]
    second = tau_derivative(f, 2)
    values = -0.5 * grid.s**2 * (second - (k / grid.u)**2 * f.values)
    return Section(grid, 0, values, f.kmin)

def operator_P(f):
    _check_weight(f, 0)
    return maass_K(1, maass_K(0, f))

def operator_P_bar(f):
    return operator_P(f.conj()).conj()

@dataclass(frozen=True)
class GreenProblem:
    """(□+1)e = rhs with Dirichlet data read off the endpoint values of `boundary`.

    Without a boundary the data is zero and the scheme drops the end-node forcing, which makes the solution
    operator symmetric under green_pairing.
    """
    rhs: object
    boundary: object = None
    tol: float = lab_config.SOLVER_TOL

    def __post_init__(self):
        _check_weight(self.rhs, 0)
        if not np.all(np.isfinite(self.rhs.values)):
            raise NumericalFailure("Green problem has a non-finite right-hand side")
        if self.boundary is not None:
            _check_weight(self.boundary, 0)
            self.rhs._check_grid(self.boundary)
            ends = self.boundary.values[:, [0, -1]]
            if not np.all(np.isfinite(ends)):
                raise NumericalFailure("Green problem has non-finite boundary values")

    @property
    def homogeneous(self):
        return self.boundary is None

def _numerov_mode(grid, k, rhs, left, right, homogeneous=False):
    # e'' = q e - F with q = 2/s² + (k/u)², F = 2 rhs / s², fourth order three-point scheme
    h2 = grid.step**2
    q = 2 / grid.s**2 + (k / grid.u)**2
    forcing = 2 * rhs / grid.s**2
    if homogeneous:
        # interior rows of 12 - h²D² and D² commute, so e = S·W·rhs with S symmetric and W = green_weights
        forcing = forcing.copy()
        forcing[[0, -1]] = 0
        left = right = 0
    side = 1 - h2 * q / 12
    diag = 2 + 5 * h2 * q / 6
    n = grid.tau.size - 2
    banded = np.zeros((3, n))
    banded[0, 1:] = -side[2:-1]
    banded[1, :] = diag[1:-1]
    banded[2, :-1] = -side[1:-2]
    b = h2 / 12 * (forcing[2:] + 10 * forcing[1:-1] + forcing[:-2])
    b[0] += side[0] * left
    b[-1] += side[-1] * right
    try:
        interior = solve_banded((1, 1), banded, b)
    except (LinAlgError, ValueError) as ex:
        raise NumericalFailure(f"Green solve failed: {ex}", f"mode {k}") from ex
    applied = banded[1] * interior
    applied[:-1] += banded[0, 1:] * interior[1:]
    applied[1:] += banded[2, :-1] * interior[:-1]
    scale = max(float(np.max(np.abs(b))), np.finfo(float).tiny)
    residual = float(np.max(np.abs(applied - b))) / scale
    return np.concatenate(([left], interior, [right])), residual

def green_solve(problem):
    rhs = problem.rhs
    grid = rhs.grid
    boundary = problem.boundary if problem.boundary is not None else Section.zeros(grid, 0)
    kmin = min(rhs.kmin, boundary.kmin)
    kmax = max(rhs.kmax, boundary.kmax)
    values = np.zeros((kmax - kmin + 1, grid.tau.size), dtype=complex)
    residuals = {}
    for k in range(kmin, kmax + 1):
        f = rhs.mode(k)
        bc = boundary.mode(k)
        if not np.any(f) and bc[0] == 0 and bc[-1] == 0:
            continue
        values[k - kmin], residuals[k] = _numerov_mode(grid, k, f, bc[0], bc[-1], problem.homogeneous)
        logger.debug("green solve mode %d residual %.3g", k, residuals[k])
        if residuals[k] > problem.tol:
            raise NumericalFailure(f"Green solve residual {residuals[k]:.3g} above {problem.tol:.3g}", f"mode {k}")
    return Section(grid, 0, values, kmin, residuals)

def xi(k, f, family):
    return -(family.beltrami_section(k, f.grid) * operator_P(f))

def xi_bar(k, f, family):
    return xi(k, f.conj(), family).conj()

def Q_terms(k, l, f, family, e_field):
    """The three terms of Q_{kl̄}(f): P̄(e_{kl̄})P(f), -2 f_{kl̄}□f and λ^{-1}∂_z f_{kl̄}∂_z̄ f."""
    f._check_grid(e_field)
    f_kl = family.pair_section(k, l, f.grid)
    first = operator_P_bar(e_field) * operator_P(f)
    second = -2 * (f_kl * box(f))
    third = maass_K(0, f_kl) * maass_L(0, f)
    return first, second, third

def Q_op(k, l, f, family, e_field):
    first, second, third = Q_terms(k, l, f, family, e_field)
    return first + second + third

def ck_norm(sigma, k, region=None):
    if k not in (0, 1, 2):
        raise ConfigurationError(f"C^k norm of order {k} unsupported")
    total = sigma.sup_abs(region)
    frontier = [sigma]
    for _ in range(k):
        words = []
        for sec in frontier:
            for op, step in ((maass_K, 1), (maass_L, -1)):
                if abs(sec.weight + step) > lab_config.MAX_WEIGHT:
                    continue
                words.append(op(sec.weight, sec))
        total += sum(w.sup_abs(region) for w in words)
        frontier = words
    return total
