import logging
from itertools import permutations

import numpy as np
from scipy.interpolate import BPoly

import lab_config
from sections_operators import Section, GreenProblem, green_solve, integrate_product, green_pairing, xi, xi_bar, Q_op
from differentials_family import f_pair, e_green
from report_utils import HermitianFormSchema, CurvatureTensorSchema
from utils import ConfigurationError, DomainError, NumericalFailure, AssemblyError, relative_gap

logger = logging.getLogger(__name__)

class HermitianForm:
    """An n×n Hermitian form held in the scale frame: true entries are matrix[i, j]·scale[i]·scale[j]."""

    def __init__(self, matrix, scale, name):
        self.matrix = np.array(matrix, dtype=complex, ndmin=2)
        self.scale = np.asarray(scale, dtype=float)
        self.name = name
        self._inverse = None

    @property
    def n(self):
        return self.matrix.shape[0]

    def entry(self, i, j):
        return self.matrix[i, j] * self.scale[i] * self.scale[j]

    def eigenvalues(self):
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    def is_positive_definite(self):
        return bool(np.all(self.eigenvalues() > 0))

    def require_positive_definite(self):
        if not self.is_positive_definite():
            raise ConfigurationError(f"{self.name} is not positive definite, eigenvalues {self.eigenvalues()}")
        return self

    def inverse(self):
        if self._inverse is None:
            try:
                inv = np.linalg.inv(self.matrix.T)
            except np.linalg.LinAlgError as ex:
                raise NumericalFailure(f"{self.name} is singular", self.name) from ex
            defect = cometric_defect(inv, self.matrix)
            if defect > lab_config.INVERSE_TOL:
                raise NumericalFailure(f"{self.name} inverse defect {defect:.3g}", self.name)
            self._inverse = HermitianForm(inv, 1 / self.scale, f"{self.name}^-1")
        return self._inverse

    def __add__(self, other):
        if not np.allclose(self.scale, other.scale, rtol=1e-14):
            raise ConfigurationError(f"cannot add {self.name} and {other.name} held in different frames")
        return HermitianForm(self.matrix + other.matrix, self.scale, f"{self.name}+{other.name}")

    def scaled(self, factor, name=None):
        return HermitianForm(factor * self.matrix, self.scale, name or self.name)

    def to_json(self):
        return HermitianFormSchema().dump(self)

def cometric_defect(cometric, metric):
    cometric = getattr(cometric, 'matrix', cometric)
    metric = getattr(metric, 'matrix', metric)
    return float(np.max(np.abs(cometric.T @ metric - np.eye(metric.shape[0]))))

class CurvatureTensor:
    """R[i, j̄, k, l̄] in the scale frame, with optional named blocks kept for diagnostics.

    assembly_defect is the Kähler symmetry defect of the tensor as assembled, before any projection.
    """

    def __init__(self, array, scale, name, blocks=None, assembly_defect=None):
        self.array = np.asarray(array, dtype=complex)
        self.scale = np.asarray(scale, dtype=float)
        self.name = name
        self.blocks = blocks or {}
        self.assembly_defect = assembly_defect

    @property
    def n(self):
        return self.array.shape[0]

    def entry(self, i, j, k, l):
        return self.array[i, j, k, l] * np.prod(self.scale[[i, j, k, l]])

    def symmetry_defect(self):
        r = self.array
        return max(relative_gap(r, r.transpose(2, 1, 0, 3)),
                   relative_gap(r, r.transpose(0, 3, 2, 1)),
                   relative_gap(r, np.conj(r.transpose(1, 0, 3, 2))))

    def check_symmetry(self, tol=lab_config.SYMMETRY_TOL):
        defect = self.symmetry_defect()
        if defect > tol:
            raise AssemblyError(f"{self.name} violates the Kähler symmetries, defect {defect:.3g}")
        return defect

    def __add__(self, other):
        return CurvatureTensor(self.array + other.array, self.scale, f"{self.name}+{other.name}")

    def to_json(self):
        return CurvatureTensorSchema().dump(self)

def kahler_projection(array):
    r = 0.5 * (array + array.transpose(2, 1, 0, 3))
    r = 0.5 * (r + r.transpose(0, 3, 2, 1))
    return 0.5 * (r + np.conj(r.transpose(1, 0, 3, 2)))

class Symmetrizer:
    def __init__(self, name, axes):
        self.name = name
        self.axes = tuple(axes)

    @property
    def terms(self):
        return list(permutations(self.axes))

    def apply(self, array):
        total = np.zeros_like(array)
        for perm in self.terms:
            order = list(range(array.ndim))
            for src, dst in zip(self.axes, perm):
                order[src] = dst
            total = total + np.transpose(array, order)
        return total

# block 1 integrand layout [i,k,α,j̄,l̄,β̄]: σ₁ on (i,k,α), σ₂ on (j̄,l̄)
# block 3 conjugate integral layout [j̄,l̄,δ̄,p,γ]
SIGMA1 = Symmetrizer("sigma1", (0, 1, 2))
SIGMA2 = Symmetrizer("sigma2", (3, 4))
SIGMA1_TILDE = Symmetrizer("sigma1_tilde", (0, 1, 2))

def _check_perturbation(c):
    if not c > 0:
        raise ConfigurationError(f"perturbation constant C = {c} must be positive")

class TensorPipeline:
    def __init__(self, family, grids=None, solver_tol=lab_config.SOLVER_TOL, symmetry_tol=lab_config.SYMMETRY_TOL,
                 block_symmetry_tol=lab_config.BLOCK_SYMMETRY_TOL):
        self.family = family
        self.grids = grids if grids is not None else family.build_grids()
        self.solver_tol = solver_tol
        self.symmetry_tol = symmetry_tol
        self.block_symmetry_tol = block_symmetry_tol
        self.scale = family.scales
        self._f = {}
        self._e = {}
        self._cache = {}

    @property
    def n(self):
        return self.family.n

    def f(self, i, j):
        if (i, j) not in self._f:
            self._f[(i, j)] = f_pair(self.family, i, j, self.grids)
        return self._f[(i, j)]

    def e(self, i, j):
        if (i, j) not in self._e:
            self._e[(i, j)] = e_green(self.family, i, j, self.grids, self.solver_tol, self.f(i, j))
        return self._e[(i, j)]

    def residuals(self):
        out = {}
        for (i, j), field in self._e.items():
            for collar, sec in field.sections.items():
                out[f"e[{i + 1},{j + 1}]@{collar + 1}"] = max(sec.residuals.values(), default=0.0)
        return out

    def _memo(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def _thick(self):
        return range(self.family.m, self.n)

    ## Weil-Petersson

    def wp_metric(self):
        def build():
            h = np.array([[self.f(i, j).integrate() for j in range(self.n)] for i in range(self.n)])
            for offset, i in enumerate(self._thick()):
                h[i, i] += self.family.thick_metric[offset]
            return HermitianForm(h, self.scale, "wp").require_positive_definite()
        return self._memo('wp', build)

    def wp_cometric(self):
        def build():
            g = np.zeros((self.n, self.n), dtype=complex)
            for grid in self.grids:
                psi = [self.family.quadratic_section(i, grid) for i in range(self.n)]
                for i in range(self.n):
                    for j in range(self.n):
                        g[i, j] += integrate_product(psi[i].conj(), psi[j])
            for offset, i in enumerate(self._thick()):
                g[i, i] += 1 / self.family.thick_metric[offset]
            return HermitianForm(g, 1 / self.scale, "wp_cometric").require_positive_definite()
        return self._memo('wp_cometric', build)

    def cometric_defect(self):
        return cometric_defect(self.wp_cometric(), self.wp_metric())

    def _ef(self):
        def build():
            n = self.n
            ef = np.zeros((n, n, n, n), dtype=complex)
            for grid in self.grids:
                c = grid.collar
                f = {(k, l): self.f(k, l).sections[c] for k, l in np.ndindex(n, n) if c in self.f(k, l).sections}
                for (i, j), e_sec in self._e_sections(grid).items():
                    for (k, l), f_sec in f.items():
                        ef[i, j, k, l] += green_pairing(e_sec, f_sec)
            return ef
        return self._memo('ef', build)

    def self_adjoint_defect(self):
        ef = self._ef()
        return relative_gap(ef, ef.transpose(2, 3, 0, 1))

    def wp_curvature(self):
        def build():
            ef = self._ef()
            r = ef + ef.transpose(0, 3, 2, 1)
            for offset, i in enumerate(self._thick()):
                r[i, i, i, i] += self.family.thick_curvature[offset]
            tensor = CurvatureTensor(r, self.scale, "wp_curvature")
            tensor.assembly_defect = tensor.check_symmetry(self.symmetry_tol)
            return tensor
        return self._memo('wp_curvature', build)

    ## Ricci and perturbed Ricci metrics

    def ricci_metric(self):
        def build():
            hinv = self.wp_metric().inverse().matrix
            tau = np.einsum('kl,ijkl->ij', hinv, self.wp_curvature().array)
            return HermitianForm(tau, self.scale, "ricci").require_positive_definite()
        return self._memo('ricci', build)

    def perturbed_metric(self, c=lab_config.PERTURB_C):
        _check_perturbation(c)
        def build():
            tau = self.ricci_metric().matrix + c * self.wp_metric().matrix
            return HermitianForm(tau, self.scale, "perturbed_ricci").require_positive_definite()
        return self._memo(('perturbed', c), build)

    ## curvature of the Ricci metrics

    def _e_sections(self, grid):
        c = grid.collar
        return {(i, j): self.e(i, j).sections[c] for i, j in np.ndindex(self.n, self.n) if c in self.e(i, j).sections}

    def _xi(self, conjugate):
        def build():
            op = xi_bar if conjugate else xi
            out = {}
            for grid in self.grids:
                found = {}
                for (i, j), e_sec in self._e_sections(grid).items():
                    for k in range(self.n):
                        value = op(k, e_sec, self.family)
                        if not value.is_zero():
                            found[(k, i, j)] = value
                out[grid.collar] = found
            return out
        return self._memo(('xi', conjugate), build)

    def _xi_green(self):
        # zero Dirichlet data
        def build():
            return {c: {key: green_solve(GreenProblem(value, None, self.solver_tol)) for key, value in found.items()}
                    for c, found in self._xi(False).items()}
        return self._memo('xi_green', build)

    def _block_integrals(self):
        def build():
            n = self.n
            j_arr = np.zeros((n,) * 6, dtype=complex)
            v_arr = np.zeros((n,) * 6, dtype=complex)
            w1 = np.zeros((n,) * 5, dtype=complex)
            w2 = np.zeros((n,) * 5, dtype=complex)
            xg = self._xi_green()
            xs = self._xi(False)
            xb = self._xi(True)
            for grid in self.grids:
                c = grid.collar
                es = self._e_sections(grid)
                # J[k,i,a,l,b,j] = ∫ T(ξ_k(e_ia)) ξ̄_l(e_bj)
                for (k, i, a), x in xg[c].items():
                    for (l, b, j), y in xb[c].items():
                        j_arr[k, i, a, l, b, j] += green_pairing(x, y)
                # V[i,k,a,j,l,b] = ∫ Q_kl(e_ia) e_bj
                for (i, a), e_ia in es.items():
                    for k, l in np.ndindex(n, n):
                        e_kl = es.get((k, l), Section.zeros(grid, 0))
                        if e_kl.is_zero() and self.family.pair_section(k, l, grid).is_zero():
                            continue
                        q = Q_op(k, l, e_ia, self.family, e_kl)
                        for (b, j), e_bj in es.items():
                            v_arr[i, k, a, j, l, b] += green_pairing(q, e_bj)
                # W1[i,k,a,q,b] = ∫ ξ_k(e_iq) e_ab and W2[j,l,d,p,g] = ∫ ξ̄_l(e_pj) e_gd
                for (k, i, q), x in xs[c].items():
                    for (a, b), e_ab in es.items():
                        w1[i, k, a, q, b] += green_pairing(x, e_ab)
                for (l, p, j), y in xb[c].items():
                    for (g, d), e_gd in es.items():
                        w2[j, l, d, p, g] += green_pairing(y, e_gd)
            return j_arr, v_arr, w1, w2
        return self._memo('block_integrals', build)

    def _block1_integrand(self):
        # U[i,k,a,j,l,b] = J[k,i,a,l,b,j] + J[k,i,a,j,b,l]
        j_arr = self._block_integrals()[0]
        return np.einsum('kialbj->ikajlb', j_arr) + np.einsum('kiajbl->ikajlb', j_arr)

    def finalcurv_blocks(self, c=None):
        """The four blocks of the Ricci-metric curvature; with c, τ̃ = τ + c·h replaces τ in the third block."""
        _, v_arr, w1, w2 = self._block_integrals()
        hinv = self.wp_metric().inverse().matrix
        tau = self.ricci_metric()
        tilde = tau if c is None else self.perturbed_metric(c)
        tinv = tilde.inverse().matrix
        block1 = np.einsum('ab,ikajlb->ijkl', hinv, SIGMA2.apply(SIGMA1.apply(self._block1_integrand())))
        block2 = np.einsum('ab,ikajlb->ijkl', hinv, SIGMA1.apply(v_arr))
        block3 = -np.einsum('pq,ab,gd,ikaqb,jldpg->ijkl', tinv, hinv, hinv,
                            SIGMA1.apply(w1), SIGMA1_TILDE.apply(w2))
        block4 = np.einsum('pj,pq,iqkl->ijkl', tau.matrix, hinv, self.wp_curvature().array)
        return {'block1': block1, 'block2': block2, 'block3': block3, 'block4': block4}

    def _assemble(self, total, name, blocks):
        # the block sum carries collar boundary terms; bound them, then keep the Kähler-symmetric part
        raw = CurvatureTensor(total, self.scale, name, blocks)
        defect = raw.symmetry_defect()
        if defect > self.block_symmetry_tol:
            raise AssemblyError(f"{name} blocks violate the Kähler symmetries, defect {defect:.3g} above "
                                f"{self.block_symmetry_tol:.3g}")
        logger.debug("%s block symmetry defect %.3g", name, defect)
        tensor = CurvatureTensor(kahler_projection(total), self.scale, name, blocks, defect)
        tensor.check_symmetry(self.symmetry_tol)
        return tensor

    def ricci_curvature(self):
        def build():
            blocks = self.finalcurv_blocks()
            return self._assemble(sum(blocks.values()), "ricci_curvature", blocks)
        return self._memo('ricci_curvature', build)

    def perturbed_curvature(self, c=lab_config.PERTURB_C):
        _check_perturbation(c)
        def build():
            blocks = self.finalcurv_blocks(c)
            total = sum(blocks.values()) + c * self.wp_curvature().array
            return self._assemble(total, "perturbed_curvature", blocks)
        return self._memo(('perturbed_curvature', c), build)

    def symmetrization_order_gap(self):
        """Relative gap between block 1 symmetrized over (i, k, α) before the h^{αβ̄} contraction and over (i, k)
        after it, the latter rescaled to the same number of terms."""
        hinv = self.wp_metric().inverse().matrix
        contracted = np.einsum('ab,ikajlb->ijkl', hinv, self._block1_integrand())
        both = contracted + contracted.transpose(2, 1, 0, 3)
        after = 3 * (both + both.transpose(0, 3, 2, 1))
        return relative_gap(self.finalcurv_blocks()['block1'], after)

    ## comparison metrics

    def mcmullen_metric(self, eps=lab_config.MCMULLEN_EPS, delta=lab_config.MCMULLEN_DELTA):
        if eps <= 0 or delta <= 0:
            raise ConfigurationError(f"McMullen constants must be positive, got eps = {eps}, delta = {delta}")
        def build():
            matrix = self.wp_metric().matrix.copy()
            for i in range(self.family.m):
                matrix[i, i] += mcmullen_frame_density(self.family.u(i), eps, delta)
            return HermitianForm(matrix, self.scale, "mcmullen").require_positive_definite()
        return self._memo(('mcmullen', eps, delta), build)

    def poincare_metric(self):
        def build():
            matrix = np.zeros((self.n, self.n), dtype=complex)
            for i in range(self.family.m):
                log_t = -np.log(abs(self.family.point.t[i]))
                matrix[i, i] = (np.pi / (2 * self.family.u(i) * log_t))**2
            for offset, i in enumerate(self._thick()):
                matrix[i, i] = self.family.thick_metric[offset]
            return HermitianForm(matrix, self.scale, "poincare")
        return self._memo('poincare', build)

## curvature diagnostics

def holomorphic_sectional(tensor, form, v):
    v = np.asarray(v, dtype=complex)
    if not np.any(v):
        raise DomainError("holomorphic sectional curvature needs a nonzero direction")
    w = v * tensor.scale
    num = np.einsum('ijkl,i,j,k,l->', tensor.array, w, np.conj(w), w, np.conj(w))
    x = v * form.scale
    norm = np.real(np.einsum('ij,i,j->', form.matrix, x, np.conj(x)))
    return float(-np.real(num) / norm**2)

def ricci_contract(tensor, form):
    ric = -np.einsum('kl,ijkl->ij', form.inverse().matrix, tensor.array)
    return HermitianForm(ric, tensor.scale, f"ric({tensor.name})")

_LOG_BRIDGE = BPoly.from_derivatives([1.0, 2.0], [[0.0, 0.0, 0.0], [np.log(2.0), 0.5, -0.25]])

def mcmullen_log(x, derivative=0):
    if derivative not in (0, 1, 2):
        raise ConfigurationError(f"McMullen Log derivative of order {derivative} unsupported")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("McMullen Log needs a positive argument")
    tail = (np.log(np.maximum(x, 2.0)), 1 / x, -1 / x**2)[derivative]
    bridge = _LOG_BRIDGE.derivative(derivative) if derivative else _LOG_BRIDGE
    out = np.where(x >= 2, tail, np.where(x <= 1, 0.0, bridge(np.clip(x, 1.0, 2.0))))
    return out[()] if out.ndim == 0 else out

def mcmullen_frame_density(u, eps, delta):
    """-δ ∂_t∂_t̄ Log(ε/l) for l = 2πu, divided by the square of the direction scale."""
    x = eps / (2 * np.pi * u)
    kappa = eps / (2 * np.pi**2)
    return float(-delta * mcmullen_log(x, 2) * kappa**2 * np.pi**2 / (4 * u**2))

## module-level entry points

def _pipeline(family, grids):
    return grids if isinstance(grids, TensorPipeline) else TensorPipeline(family, grids)

def wp_metric(family, grids=None):
    return _pipeline(family, grids).wp_metric()

def wp_cometric(family, grids=None):
    return _pipeline(family, grids).wp_cometric()

def wp_curvature(family, grids=None):
    return _pipeline(family, grids).wp_curvature()

def ricci_metric(family, grids=None):
    return _pipeline(family, grids).ricci_metric()

def perturbed_metric(family, c=lab_config.PERTURB_C, grids=None):
    return _pipeline(family, grids).perturbed_metric(c)

def ricci_curvature(family, grids=None):
    return _pipeline(family, grids).ricci_curvature()

def perturbed_curvature(family, c=lab_config.PERTURB_C, grids=None):
    return _pipeline(family, grids).perturbed_curvature(c)

def mcmullen_correction(family, eps=lab_config.MCMULLEN_EPS, delta=lab_config.MCMULLEN_DELTA, grids=None):
    return _pipeline(family, grids).mcmullen_metric(eps, delta)

def poincare_metric(family, grids=None):
    return _pipeline(family, grids).poincare_metric()
