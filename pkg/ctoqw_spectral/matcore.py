"""Dense complex linear algebra shared by every other module.

The vec map stacks rows (row-major), so vec(A X B^T) = kron(A, B) vec(X) and
the map rho -> B rho B* is represented by sandwich(B) = B (x) conj(B).
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse.linalg import expm_multiply

from .errors import DimensionError

ComplexMatrix = NDArray[np.complex128]
VecVector = NDArray[np.complex128]

HERMITIAN_TOL = 1e-10
PSD_FLOOR = 1e-10


def as_matrix(m) -> ComplexMatrix:
    """Coerce to a 2-D complex array."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {arr.shape}")
    return arr


def _require_square(m: ComplexMatrix, what: str = "matrix") -> None:
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {m.shape}")


def vec(m) -> VecVector:
    """Stack the rows of a square matrix into a vector of length d²."""
    m = as_matrix(m)
    _require_square(m)
    return m.reshape(-1).copy()


def unvec(v, d: int) -> ComplexMatrix:
    """Inverse of vec."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if v.size != d * d:
        raise DimensionError(f"vector of length {v.size} cannot be unvec'd to {d}x{d}")
    return v.reshape(d, d).copy()


def kron(a, b) -> ComplexMatrix:
    return np.kron(as_matrix(a), as_matrix(b))


def sandwich(b) -> ComplexMatrix:
    """⌈B⌉ = B ⊗ conj(B), the vec image of rho -> B rho B*."""
    b = as_matrix(b)
    _require_square(b, "sandwich operand")
    return np.kron(b, b.conj())


def left_mult(m) -> ComplexMatrix:
    """Superoperator of X -> M X."""
    m = as_matrix(m)
    return np.kron(m, np.eye(m.shape[0]))


def right_mult(m) -> ComplexMatrix:
    """Superoperator of X -> X M."""
    m = as_matrix(m)
    return np.kron(np.eye(m.shape[0]), m.T)


def hermitian_part(m) -> ComplexMatrix:
    m = as_matrix(m)
    return 0.5 * (m + m.conj().T)


def antihermitian_part(m) -> ComplexMatrix:
    """(M − M*)/(2i), Hermitian-valued."""
    m = as_matrix(m)
    return (m - m.conj().T) / 2j


def hermiticity_defect(m) -> float:
    m = as_matrix(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def is_hermitian(m, tol: float = HERMITIAN_TOL, relative: bool = False) -> bool:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(m)))) if relative and m.size else 1.0
    return hermiticity_defect(m) <= tol * scale


def eig_hermitian(m) -> tuple[NDArray[np.float64], ComplexMatrix]:
    """Ascending eigenvalues and a unitary eigenvector matrix of a Hermitian matrix."""
    m = as_matrix(m)
    _require_square(m)
    if not is_hermitian(m, HERMITIAN_TOL, relative=True):
        raise DimensionError(f"matrix is not Hermitian (defect {hermiticity_defect(m):.3e})")
    eigenvalues, eigenvectors = sla.eigh(hermitian_part(m))
    return eigenvalues, eigenvectors


def sqrt_psd(m) -> ComplexMatrix:
    """Unique positive semidefinite square root."""
    eigenvalues, u = eig_hermitian(m)
    scale = max(1.0, float(np.max(np.abs(eigenvalues)))) if eigenvalues.size else 1.0
    if eigenvalues.size and eigenvalues[0] < -PSD_FLOOR * scale:
        raise DimensionError(f"matrix has negative eigenvalue {eigenvalues[0]:.3e}")
    root = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return (u * root) @ u.conj().T


def inv_sqrt_pd(m) -> ComplexMatrix:
    """Inverse square root of a positive definite matrix."""
    eigenvalues, u = eig_hermitian(m)
    if eigenvalues.size and eigenvalues[0] <= 0:
        raise DimensionError(f"matrix is not positive definite (eigenvalue {eigenvalues[0]:.3e})")
    return (u / np.sqrt(eigenvalues)) @ u.conj().T


def expm(g, t: float = 1.0) -> ComplexMatrix:
    """e^{tG} by scaling and squaring."""
    g = as_matrix(g)
    _require_square(g)
    if not np.all(np.isfinite(g)):
        raise DimensionError("generator has non-finite entries")
    return sla.expm(t * g)


def expm_action(g, v, t: float) -> VecVector:
    """e^{tG} v. Sparse generators are never densified."""
    if t < 0:
        raise DimensionError(f"time must be non-negative, got {t}")
    if sp.issparse(g):
        if not np.all(np.isfinite(g.data)):
            raise DimensionError("generator has non-finite entries")
    else:
        g = as_matrix(g)
    v = np.asarray(v, dtype=np.complex128)
    if g.shape[1] != v.shape[0]:
        raise DimensionError(f"generator of shape {g.shape} cannot act on vector of length {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise DimensionError("vector has non-finite entries")
    if t == 0:
        return v.copy()
    if sp.issparse(g):
        return expm_multiply(g * t, v)
    return expm(g, t) @ v


def condition_number(m) -> float:
    m = as_matrix(m)
    if m.size == 0:
        return 1.0
    return float(np.linalg.cond(m))


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of the Hermitian part."""
    return float(sla.eigvalsh(hermitian_part(m))[0])


def max_eigenvalue(m) -> float:
    """Largest eigenvalue of the Hermitian part."""
    return float(sla.eigvalsh(hermitian_part(m))[-1])
