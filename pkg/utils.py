import logging

import numpy as np

logger = logging.getLogger(__name__)

class LabError(Exception):
    pass

class DomainError(LabError):
    pass

class ConfigurationError(LabError):
    pass

class ModelValidationError(LabError):
    def __init__(self, sum_name, value, bound):
        super().__init__(f"{sum_name} = {value:.6g} exceeds its bound {bound:.6g}")
        self.sum_name = sum_name
        self.value = value
        self.bound = bound

class NumericalFailure(LabError):
    def __init__(self, msg, provenance=None):
        if provenance:
            msg = f"{msg} ({provenance})"
        super().__init__(msg)
        self.provenance = provenance

class AssemblyError(LabError):
    pass

def relative_gap(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(a - b), initial=0.0)) / scale

def hermitian_defect(matrix):
    return relative_gap(matrix, np.conj(np.transpose(matrix)))

def require_modulus_below_one(name, value):
    mod = abs(value)
    if not 0 < mod < 1:
        raise DomainError(f"{name} has modulus {mod:.6g}, outside (0, 1)")
    return mod
