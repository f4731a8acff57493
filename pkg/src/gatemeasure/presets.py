"""Combined Hamiltonians for the shipped apparatus modes.

``trivial``  Hhat = 0
``ideal``    Hhat = H_S (x) I_m with H_S diagonal; closeness follows |<v_j, xi>|^2
``product``  Hhat = H_S (x) I_m + I_N (x) H_M with H_M a seeded Hermitian
``random``   seeded dense Hermitian coupling system and apparatus
``custom``   user-supplied matrix

All randomness comes from ``numpy.random.default_rng(seed)`` (PCG64).
"""
from __future__ import annotations

import numpy as np

from . import qla
from .errors import DimensionMismatch
from .gates import Apparatus, build_apparatus

MODES = ("trivial", "ideal", "product", "random", "custom")


def system_diagonal(N: int, seed: int, h_system=None) -> np.ndarray:
    if h_system is not None:
        h = np.asarray(h_system, dtype=float)
        if h.shape != (N,):
            raise DimensionMismatch(f"expected {N} diagonal entries, got shape {h.shape}")
        return h
    return np.random.default_rng(seed).uniform(-1.0, 1.0, N)


def preset_hamiltonian(mode: str, N: int, m: int, seed: int = 0, h_system=None,
                       custom=None) -> np.ndarray:
    if mode == "trivial":
        return np.zeros((N * m, N * m), dtype=np.complex128)
    if mode == "ideal":
        return np.kron(np.diag(system_diagonal(N, seed, h_system)), np.eye(m)).astype(np.complex128)
    if mode == "product":
        HS = np.diag(system_diagonal(N, seed, h_system))
        HM = qla.random_hermitian(m, np.random.default_rng([seed, 1]))
        return np.kron(HS, np.eye(m)) + np.kron(np.eye(N), HM)
    if mode == "random":
        return qla.random_hermitian(N * m, seed)
    if mode == "custom":
        if custom is None:
            raise ValueError("custom mode needs an explicit Hamiltonian")
        return qla.as_matrix(custom)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def preset_apparatus(mode: str, N: int, m: int | None = None, seed: int = 0, hbar: float = 1.0,
                     h_system=None, custom=None) -> Apparatus:
    m = N if m is None else m
    H = preset_hamiltonian(mode, N, m, seed=seed, h_system=h_system, custom=custom)
    return build_apparatus(H, N, m, hbar)
