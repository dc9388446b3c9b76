"""Dense symmetric linear algebra kernel.

Symmetric eigendecomposition, a continuous Lyapunov solver, orthonormal
complement bases, and angle computations. Every result carries (and is
checked against) an explicit numerical certificate, so downstream modules
can trust the invariants instead of re-deriving them.

All functions are pure and all returned values are immutable; they are safe
to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CertificateError
from .tolerances import (
    COMPLEMENT_ORTHO_TOL,
    EIG_ORTHONORMALITY_TOL,
    EIG_RECONSTRUCTION_RTOL,
    LYAPUNOV_RESIDUAL_RTOL,
)


def _as_float_array(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise ValueError(f"{name} contains {bad} non-finite entries (shape {arr.shape})")
    return arr


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SymMatrix:
    """A dense real matrix stored exactly symmetric.

    The upper triangle of the input is authoritative and is mirrored onto
    the lower triangle at construction, so ``array[i, j] == array[j, i]``
    holds exactly (bitwise) afterwards.
    """

    array: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.array, "matrix")
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("matrix dimension must be at least 1")
        mirrored = np.triu(arr) + np.triu(arr, 1).T
        object.__setattr__(self, "array", _readonly(mirrored))

    @property
    def dim(self) -> int:
        return self.array.shape[0]

    def __matmul__(self, other):
        return self.array @ np.asarray(other)


def as_matrix(a) -> np.ndarray:
    """Plain ndarray view of a SymMatrix or array-like."""
    if isinstance(a, SymMatrix):
        return a.array
    return np.asarray(a, dtype=float)


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvector columns.

    Construction verifies the orthonormality and reconstruction certificates;
    an instance therefore proves that ``matrix = V diag(w) V^T`` to the
    library tolerances.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _readonly(np.array(self.eigenvalues, dtype=float)))
        object.__setattr__(self, "eigenvectors", _readonly(np.array(self.eigenvectors, dtype=float)))

    @property
    def min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max(self) -> float:
        return float(self.eigenvalues[-1])

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def sym_eigen(a) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    The result is certified: the eigenvector Gram defect must stay below
    ``EIG_ORTHONORMALITY_TOL`` and the max-norm reconstruction error below
    ``EIG_RECONSTRUCTION_RTOL * max(1, max|a|)``.
    """
    arr = as_matrix(a)
    if isinstance(a, SymMatrix):
        sym = arr
    else:
        arr = _as_float_array(arr, "matrix")
        sym = SymMatrix(arr).array
    w, v = np.linalg.eigh(sym)

    dim = sym.shape[0]
    ortho = np.abs(v @ v.T - np.eye(dim)).max()
    if ortho > EIG_ORTHONORMALITY_TOL:
        raise CertificateError("eigenvector-orthonormality", f"Gram defect {ortho:.3e}")
    scale = max(1.0, np.abs(sym).max())
    recon = np.abs(sym - (v * w) @ v.T).max()
    if recon > EIG_RECONSTRUCTION_RTOL * scale:
        raise CertificateError(
            "eigen-reconstruction", f"residual {recon:.3e} exceeds {EIG_RECONSTRUCTION_RTOL * scale:.3e}"
        )
    return EigenDecomposition(w, v)


def min_eigenvalue(a) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return sym_eigen(a).min


def solve_lyapunov(a, q) -> SymMatrix:
    """Solve ``P a + a^T P + q = 0`` for symmetric positive definite P.

    Uses the Kronecker vectorization ``(I (x) a^T + a^T (x) I) vec(P) = -vec(q)``
    solved by dense LU with partial pivoting, then symmetrizes. Intended for
    small systems (the cost grows like dim**6).

    The result is certified: the residual ``max|P a + a^T P + q|`` must stay
    below ``LYAPUNOV_RESIDUAL_RTOL * max|q|`` and P must be positive definite.
    Either failure (e.g. when ``a`` is not Hurwitz) raises CertificateError
    naming the violated certificate.
    """
    a_arr = _as_float_array(as_matrix(a), "a")
    q_sym = q if isinstance(q, SymMatrix) else SymMatrix(_as_float_array(as_matrix(q), "q"))
    dim = a_arr.shape[0]
    if a_arr.ndim != 2 or a_arr.shape[0] != a_arr.shape[1]:
        raise ValueError(f"a must be square, got shape {a_arr.shape}")
    if q_sym.dim != dim:
        raise ValueError(f"dimension mismatch: a is {dim}x{dim}, q is {q_sym.dim}x{q_sym.dim}")
    if sym_eigen(q_sym).min <= 0:
        raise ValueError("q must be positive definite")

    eye = np.eye(dim)
    system = np.kron(eye, a_arr.T) + np.kron(a_arr.T, eye)
    try:
        vec_p = np.linalg.solve(system, -q_sym.array.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise CertificateError(
            "lyapunov-solvability",
            f"Kronecker system is singular ({exc}); a pair of eigenvalues of a sums to zero",
        ) from None
    p_raw = vec_p.reshape(dim, dim)
    p = SymMatrix(0.5 * (p_raw + p_raw.T))

    residual = np.abs(p.array @ a_arr + a_arr.T @ p.array + q_sym.array).max()
    bound = LYAPUNOV_RESIDUAL_RTOL * np.abs(q_sym.array).max()
    if residual > bound:
        raise CertificateError(
            "lyapunov-residual",
            f"max|P a + a^T P + q| = {residual:.3e} exceeds {bound:.3e}; a is likely not Hurwitz",
        )
    smallest = sym_eigen(p).min
    if smallest <= 0:
        raise CertificateError(
            "lyapunov-positive-definiteness",
            f"solution has min eigenvalue {smallest:.3e}; a is not Hurwitz",
        )
    return p


def orthonormal_complement_basis(g) -> np.ndarray:
    """Columns spanning the orthogonal complement of a nonzero vector.

    Returns a (dim, dim-1) matrix with orthonormal columns, each orthogonal
    to ``g`` within ``COMPLEMENT_ORTHO_TOL * |g|``. Computed as the trailing
    columns of the full Householder QR factor of ``[g]``, so the basis is
    deterministic. For dim == 1 the complement is empty (shape (1, 0)).
    """
    vec = _as_float_array(g, "g").reshape(-1)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("cannot build a complement basis for the zero vector")
    full_q, _ = np.linalg.qr(vec.reshape(-1, 1), mode="complete")
    basis = full_q[:, 1:]

    dim = vec.size
    if dim > 1:
        ortho_to_g = np.abs(basis.T @ vec).max()
        if ortho_to_g > COMPLEMENT_ORTHO_TOL * norm:
            raise CertificateError(
                "complement-orthogonality", f"max|u.g| = {ortho_to_g:.3e} for |g| = {norm:.3e}"
            )
        gram = np.abs(basis.T @ basis - np.eye(dim - 1)).max()
        if gram > COMPLEMENT_ORTHO_TOL:
            raise CertificateError("complement-orthonormality", f"Gram defect {gram:.3e}")
    return _readonly(basis)


def angle_between(y, g) -> float:
    """Angle in [0, pi] between two nonzero vectors.

    Computed as ``2 atan2(|u - v|, |u + v|)`` on the normalized vectors,
    which stays fully accurate near 0 and pi where the arccos-of-dot form
    loses half the significant digits; identically parallel inputs give
    exactly 0. Values below pi/2 correspond to positive alignment y.g > 0.
    """
    y_vec = _as_float_array(y, "y").reshape(-1)
    g_vec = _as_float_array(g, "g").reshape(-1)
    ny = float(np.linalg.norm(y_vec))
    ng = float(np.linalg.norm(g_vec))
    if ny == 0.0 or ng == 0.0:
        raise ValueError("angle is undefined for zero-norm input")
    u = y_vec / ny
    v = g_vec / ng
    return 2.0 * float(np.arctan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))
