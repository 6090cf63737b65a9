"""Dense complex linear-algebra kernel used by every other module.

Matrices are plain complex128 numpy arrays in row-major order. All
functions are pure; nothing here mutates its inputs.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-12
POLAR_MIN_SV = 1e-10


class DimensionError(ValueError):
    """Shape mismatch between operands."""


class NearSingularError(ValueError):
    """Polar factor requested for a (near-)singular matrix."""


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-d complex128 array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {m.shape}")
    return m


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.complex128)


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return (a + a.conj().T) / 2


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        return False
    return bool(np.abs(a - a.conj().T).max() <= tol)


def is_unitary(a, tol: float = UNITARY_TOL) -> bool:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        return False
    return bool(np.abs(a.conj().T @ a - identity(a.shape[0])).max() <= tol)


def expm(a) -> np.ndarray:
    """Matrix exponential (Pade scaling-and-squaring via scipy)."""
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"expm needs a square matrix, got {a.shape}")
    return np.asarray(sla.expm(a), dtype=np.complex128)


def unitary_exp(h: np.ndarray, t: float = 1.0) -> np.ndarray:
    """e^{-i t h} for Hermitian h via eigendecomposition.

    Structurally unitary (up to roundoff), which the propagators rely on;
    cross-checked against the Pade route in the test suite.
    """
    h = as_matrix(h)
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * t * w)
    return (v * phases) @ v.conj().T


def opnorm(a) -> float:
    """Operator norm (largest singular value)."""
    a = as_matrix(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False)[0])


def kron(a, b) -> np.ndarray:
    """Kronecker product, system factor first (slow/outer indices)."""
    return np.kron(as_matrix(a), as_matrix(b))


def partial_trace_system(a, dim_s: int, dim_e: int) -> np.ndarray:
    """Trace out the system factor: returns tr_s(a) on the environment."""
    a = as_matrix(a)
    n = dim_s * dim_e
    if a.shape != (n, n):
        raise DimensionError(
            f"partial_trace_system: expected {(n, n)} for dims ({dim_s},{dim_e}), got {a.shape}"
        )
    return np.einsum("aiaj->ij", a.reshape(dim_s, dim_e, dim_s, dim_e))


def polar_unitary(a, min_sv: float = POLAR_MIN_SV) -> np.ndarray:
    """Unitary factor U of the polar decomposition a = U P.

    Raises NearSingularError when the smallest singular value is <= min_sv,
    signalling that the input is too far from any unitary for the factor to
    be meaningful.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"polar_unitary needs a square matrix, got {a.shape}")
    u, s, vh = np.linalg.svd(a)
    if s[-1] <= min_sv:
        raise NearSingularError(
            f"smallest singular value {s[-1]:.3e} <= {min_sv:.0e}; no meaningful unitary factor"
        )
    return u @ vh


def phase_align(a: np.ndarray, b: np.ndarray) -> float:
    """Phase theta maximising overlap of a with e^{i theta} b (via tr(b* a))."""
    z = np.trace(b.conj().T @ a)
    if abs(z) == 0.0:
        return 0.0
    return float(np.angle(z))


def dist_up_to_phase(a, b) -> float:
    """min_theta ||a - e^{i theta} b||, theta taken from the phase of tr(b* a).

    Global phases are physically irrelevant in the cycle evolutions (e.g. the
    (-1)^m factors the Pauli cycles produce), so comparisons that should
    ignore them go through here.
    """
    a, b = as_matrix(a), as_matrix(b)
    theta = phase_align(a, b)
    return opnorm(a - np.exp(1j * theta) * b)
