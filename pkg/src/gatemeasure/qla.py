"""Dense complex linear algebra on V, W and V (x) W.

Matrices and states are plain ``numpy`` arrays of dtype ``complex128``.
Composite indices are system-major: the basis vector ``e_a (x) e_i`` of
``V (x) W`` sits at position ``a * m + i`` where ``m = dim W``.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, NonHermitianInput

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
IDENTITY_TOL = 1e-9


def as_matrix(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {arr.shape}")
    return arr


def as_state(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.complex128)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionMismatch(f"expected a non-empty 1-d state, got shape {arr.shape}")
    return arr


def max_norm(a) -> float:
    """Largest absolute entry."""
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(a))


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and max_norm(a - dagger(a)) <= tol


def is_unitary(u, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return max_norm(dagger(u) @ u - np.eye(u.shape[0])) <= tol


def basis_vector(j: int, dim: int) -> np.ndarray:
    if not 0 <= j < dim:
        raise IndexOutOfRange(f"basis index {j} outside [0, {dim})")
    e = np.zeros(dim, dtype=np.complex128)
    e[j] = 1.0
    return e


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product of two matrices or two vectors.

    Entry ``(ra, rb), (ca, cb)`` of the result lives at row ``ra * rows(b) + rb``
    and column ``ca * cols(b) + cb``.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != b.ndim or a.ndim not in (1, 2):
        raise DimensionMismatch("tensor_product needs two vectors or two matrices")
    return np.kron(a, b)


def evolution_operator(Hhat, t: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """Return ``exp(-i Hhat t / hbar)`` via the Hermitian eigendecomposition."""
    H = as_matrix(Hhat)
    if not is_hermitian(H):
        raise NonHermitianInput(
            f"generator is not Hermitian (max |H - H^dag| = {max_norm(H - dagger(H)):.3e})"
        )
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    evals, Q = np.linalg.eigh(H)
    phases = np.exp(-1j * evals * (t / hbar))
    return (Q * phases) @ dagger(Q)


def gate_projector(j: int, N: int, m: int) -> np.ndarray:
    """Projector onto ``v_j (x) W``, i.e. ``|v_j><v_j| (x) I_m``."""
    if not 0 <= j < N:
        raise IndexOutOfRange(f"gate index {j} outside [0, {N})")
    diag = np.zeros(N * m)
    diag[j * m:(j + 1) * m] = 1.0
    return np.diag(diag).astype(np.complex128)


def partial_trace_W(A, N: int, m: int) -> np.ndarray:
    """Trace out the apparatus factor: ``(Tr_W A)[a, b] = sum_i A[(a, i), (b, i)]``."""
    A = as_matrix(A)
    if A.shape != (N * m, N * m):
        raise DimensionMismatch(f"expected a {N * m}x{N * m} operator, got {A.shape}")
    return np.einsum("aibi->ab", A.reshape(N, m, N, m))


def partial_inner_left(v, xi) -> np.ndarray:
    """Contract ``xi`` in ``V1 (x) V2`` with ``v`` in ``V1``: ``sum_a conj(v_a) xi[(a, b)]``."""
    v = as_state(v)
    xi = as_state(xi)
    if xi.size % v.size:
        raise DimensionMismatch(f"dim {xi.size} is not a multiple of {v.size}")
    return np.conj(v) @ xi.reshape(v.size, xi.size // v.size)


def random_unitary(dim: int, seed: int) -> np.ndarray:
    """Haar-distributed unitary from a seeded ``numpy`` PCG64 generator."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, seed: int | np.random.Generator) -> np.ndarray:
    """Seeded dense Hermitian matrix with spectrum of order one."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    # (G + G^dag)/2 is exactly Hermitian in floating point
    return (g + dagger(g)) / (2.0 * np.sqrt(dim))


def change_basis(Hhat, basis, m: int) -> np.ndarray:
    """Express ``Hhat`` in the frame where the columns of ``basis`` are the standard ``v_j``.

    ``basis`` is an N x N unitary whose column j is the measured vector v_j.
    Returns ``(B^dag (x) I) Hhat (B (x) I)``, re-symmetrized to stay exactly Hermitian.
    """
    B = as_matrix(basis)
    if not is_unitary(B):
        raise ValueError("basis matrix is not unitary")
    T = np.kron(B, np.eye(m))
    H = dagger(T) @ as_matrix(Hhat) @ T
    return (H + dagger(H)) / 2
