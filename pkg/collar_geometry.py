import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

import lab_config
from utils import DomainError, ConfigurationError, require_modulus_below_one

logger = logging.getLogger(__name__)

# relative slack when testing closed collar bounds
BOUNDS_SLACK = 1e-12

def u_from_t(t):
    mod = require_modulus_below_one("pinching parameter", t)
    return -np.pi / np.log(mod)

@dataclass(frozen=True)
class CollarChart:
    u: float
    c: float = lab_config.COLLAR_C

    def __post_init__(self):
        if not self.u > 0:
            raise DomainError(f"collar modulus u = {self.u} must be positive")
        if not 0 < self.c < 1:
            raise DomainError(f"collar constant c = {self.c} must lie in (0, 1)")
        if self.tau_min >= self.tau_max:
            raise DomainError(f"collar annulus is empty for u = {self.u:.6g}, c = {self.c}")

    @classmethod
    def from_t(cls, t, c=lab_config.COLLAR_C):
        return cls(float(u_from_t(t)), c)

    @property
    def log_rho(self):
        return -np.pi / self.u

    @property
    def rho(self):
        return np.exp(self.log_rho)

    @property
    def tau_min(self):
        return -np.pi - self.u * np.log(self.c)

    @property
    def tau_max(self):
        return self.u * np.log(self.c)

    @property
    def r_bounds(self):
        return self.rho / self.c, self.c

    @property
    def geodesic_radius(self):
        return np.exp(-np.pi / (2 * self.u))

    def tau_of_r(self, r):
        return self.u * np.log(r)

    def r_of_tau(self, tau):
        return np.exp(np.asarray(tau) / self.u)

    def check_tau(self, tau):
        tau = np.asarray(tau, dtype=float)
        slack = BOUNDS_SLACK * max(1.0, abs(self.tau_min))
        if np.any(tau < self.tau_min - slack) or np.any(tau > self.tau_max + slack):
            raise DomainError(f"point outside the collar τ-range [{self.tau_min:.6g}, {self.tau_max:.6g}]")
        return tau

    def area(self, tau_lo=None, tau_hi=None):
        tau_lo = self.tau_min if tau_lo is None else tau_lo
        tau_hi = self.tau_max if tau_hi is None else tau_hi
        return np.pi * self.u * (1 / np.tan(tau_lo) - 1 / np.tan(tau_hi))

@dataclass(frozen=True)
class CuspChart:
    c: float = lab_config.COLLAR_C

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise DomainError(f"cusp radius bound c = {self.c} must lie in (0, 1)")

class CollarGrid:
    """Uniform τ-grid on a collar with composite Simpson weights for the area element dv.

    n_tau counts intervals, so there are n_tau + 1 nodes including both ends of the closed collar.
    """

    def __init__(self, chart, n_tau, n_modes, tau_lo=None, tau_hi=None, collar=0):
        self.chart = chart
        self.n_tau = n_tau
        self.n_modes = n_modes
        self.collar = collar
        tau_lo = chart.tau_min if tau_lo is None else tau_lo
        tau_hi = chart.tau_max if tau_hi is None else tau_hi
        chart.check_tau([tau_lo, tau_hi])
        self.tau = np.linspace(tau_lo, tau_hi, n_tau + 1)
        self.step = (tau_hi - tau_lo) / n_tau
        self.modes = np.arange(-n_modes, n_modes + 1)
        sin_tau = np.sin(self.tau)
        # s = |sin τ| on the collar, ds/dτ = -cos τ
        self.s = -sin_tau
        self.ds = -np.cos(self.tau)
        simpson = np.ones(n_tau + 1)
        simpson[1:-1:2] = 4
        simpson[2:-1:2] = 2
        simpson *= self.step / 3
        self.weights = 2 * np.pi * simpson * 0.5 * chart.u / sin_tau**2
        # trapezoid weights without the end nodes, the pairing of the homogeneous Green scheme
        trapezoid = np.full(n_tau + 1, self.step)
        trapezoid[[0, -1]] = 0
        self.green_weights = 2 * np.pi * trapezoid * 0.5 * chart.u / sin_tau**2

    @property
    def u(self):
        return self.chart.u

    @property
    def log_r(self):
        return self.tau / self.chart.u

    def area(self):
        return float(np.sum(self.weights))

class CuspGrid:
    def __init__(self, chart, n_intervals, inner, outer):
        self.chart = chart
        self.log_r = np.linspace(np.log(inner), np.log(outer), n_intervals + 1)

    @property
    def r(self):
        return np.exp(self.log_r)

def collar_density(chart, r):
    r = np.abs(np.asarray(r))
    if np.any(r <= 0):
        raise DomainError("collar density needs a positive radius")
    tau = chart.check_tau(chart.tau_of_r(r))
    return 0.5 * chart.u**2 / (r**2 * np.sin(tau)**2)

def cusp_density(chart, u_coord):
    mod = np.abs(np.asarray(u_coord))
    if np.any(mod <= 0) or np.any(mod >= chart.c):
        raise DomainError(f"cusp coordinate outside the punctured disk 0 < |u| < {chart.c}")
    return 1 / (2 * mod**2 * np.log(mod)**2)

@lru_cache(maxsize=None)
def _centered_weights(width):
    # second-derivative weights on offsets -h..h, exact for polynomials of degree < width
    half = width // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    powers = np.arange(width)
    rhs = np.zeros(width)
    rhs[2] = 2.0
    return np.linalg.solve(offsets[None, :]**powers[:, None], rhs)

def ke_residual(density_field, grid):
    """Max relative residual of the Kähler-Einstein identity ∂_z∂_z̄ log λ = λ on a rotationally invariant density.

    With s = log r the identity reads ¼ e^{-2s} (log λ)''(s) = λ. The second derivative is a centered
    finite difference on the uniform s-grid, so the residual covers the nodes the stencil fits around.
    """
    log_r = np.asarray(grid.log_r)
    width = lab_config.KE_STENCIL_NODES
    if log_r.size < width:
        raise ConfigurationError(f"grid has {log_r.size} nodes, the derivative stencil needs {width}")
    step = (log_r[-1] - log_r[0]) / (log_r.size - 1)
    if not np.allclose(np.diff(log_r), step, rtol=1e-9, atol=0):
        raise ConfigurationError("KE residual needs a grid uniform in log r")
    density = np.asarray(density_field, dtype=float)
    if np.any(density <= 0):
        raise DomainError("density must be positive on the grid")
    log_density = np.log(density)
    # second differences annihilate the chord; removing it keeps the rounding error small
    chord = log_density[0] + (log_density[-1] - log_density[0]) * (log_r - log_r[0]) / (log_r[-1] - log_r[0])
    second = np.correlate(log_density - chord, _centered_weights(width), mode="valid") / step**2
    half = width // 2
    inner = slice(half, log_r.size - half)
    residual = 0.25 * second * np.exp(-2 * log_r[inner] - log_density[inner]) - 1
    return float(np.max(np.abs(residual)))


def plumbing_map(eta, t, c=lab_config.COLLAR_C):
    mod = abs(eta)
    if not abs(t) / c < mod < c:
        raise DomainError(f"|eta| = {mod:.6g} outside the plumbing collar ({abs(t) / c:.6g}, {c})")
    return t / eta

def circle_length(chart, r, n_samples):
    theta = 2 * np.pi * np.arange(n_samples) / n_samples
    points = r * np.exp(1j * theta)
    density = collar_density(chart, np.abs(points))
    # periodic trapezoid rule
    return float(np.sum(np.sqrt(2 * density) * np.abs(points)) * 2 * np.pi / n_samples)

def geodesic_length_numeric(chart, n_samples):
    if n_samples < 16:
        raise ConfigurationError(f"n_samples = {n_samples} below 16")
    return circle_length(chart, chart.geodesic_radius, n_samples)

def poincare_model_density(t):
    mod = require_modulus_below_one("pinching parameter", t)
    return 1 / (4 * mod**2 * np.log(mod)**2)

def grid_build(chart, n_tau, n_modes, tau_lo=None, tau_hi=None, collar=0):
    if n_tau < 8 or n_tau % 2:
        raise ConfigurationError(f"n_tau = {n_tau} must be an even number of intervals, at least 8")
    if n_modes < 0:
        raise ConfigurationError(f"n_modes = {n_modes} must be non-negative")
    return CollarGrid(chart, n_tau, n_modes, tau_lo, tau_hi, collar)

def cusp_grid(chart, n_intervals, inner=None, outer=None):
    inner = chart.c * 1e-8 if inner is None else inner
    outer = chart.c / 2 if outer is None else outer
    if not 0 < inner < outer < chart.c:
        raise ConfigurationError(f"cusp grid annulus ({inner}, {outer}) not inside (0, {chart.c})")
    if n_intervals + 1 < lab_config.KE_STENCIL_NODES:
        raise ConfigurationError(f"cusp grid needs at least {lab_config.KE_STENCIL_NODES} nodes")
    return CuspGrid(chart, n_intervals, inner, outer)
