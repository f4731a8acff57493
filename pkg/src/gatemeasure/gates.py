"""Gates, gate energies and the three-step measurement process.

Gate indices are zero-based throughout the Python API: gate ``j`` is the
gate whose exit space is ``v_j (x) W`` with ``v_j`` the j-th standard basis
vector of V.  Measuring in another basis is done by rotating the combined
Hamiltonian first (see :func:`gatemeasure.qla.change_basis`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qla
from .errors import AllGatesClosed, DimensionMismatch, IndexOutOfRange

#: closeness at or below this (after normalization) counts as an exact zero
ZERO_CLOSENESS = 1e-14
#: energies closer than this are treated as equal by the gate ordering
TIE_TOL = 1e-12
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Apparatus:
    """Combined system + apparatus model with its precomputed gate operators.

    ``gate_ops[j]`` is ``M_j = Tr_W(P_{v_j (x) W} U1)``, an N x N operator of
    rank at most one whose range is ``span{v_j}``.
    """

    N: int
    m: int
    hbar: float
    Hhat: np.ndarray
    U1: np.ndarray
    gate_ops: tuple

    @property
    def n_gates(self) -> int:
        return self.N

    @property
    def input_dim(self) -> int:
        return self.N

    def collapse(self, j: int, xi: np.ndarray) -> np.ndarray:
        return qla.basis_vector(j, self.N)


def build_apparatus(Hhat, N: int, m: int, hbar: float = 1.0) -> Apparatus:
    """Precompute ``U(1)`` and the gate trace operators for a combined Hamiltonian."""
    H = qla.as_matrix(Hhat)
    if N < 1 or m < 1:
        raise DimensionMismatch("N and m must be positive")
    if H.shape != (N * m, N * m):
        raise DimensionMismatch(f"Hhat must be {N * m}x{N * m}, got {H.shape}")
    U1 = qla.evolution_operator(H, 1.0, hbar)
    ops = tuple(qla.partial_trace_W(qla.gate_projector(j, N, m) @ U1, N, m) for j in range(N))
    for op in ops:
        op.setflags(write=False)
    H = H.copy()
    H.setflags(write=False)
    U1.setflags(write=False)
    return Apparatus(N=N, m=m, hbar=float(hbar), Hhat=H, U1=U1, gate_ops=ops)


def check_apparatus(app: Apparatus) -> list[str]:
    """Return a list of violated apparatus invariants (empty when all hold)."""
    problems = []
    U1 = qla.evolution_operator(app.Hhat, 1.0, app.hbar)
    if qla.max_norm(U1 - app.U1) > qla.IDENTITY_TOL:
        problems.append("U1 does not match exp(-i Hhat / hbar)")
    for j, M in enumerate(app.gate_ops):
        s = np.linalg.svd(M, compute_uv=False)
        if len(s) > 1 and s[1] >= RANK_TOL:
            problems.append(f"gate {j}: second singular value {s[1]:.3e}")
        off = M.copy()
        off[j, :] = 0
        if np.linalg.norm(off, 2) >= RANK_TOL:
            problems.append(f"gate {j}: range leaves span(v_{j})")
    total = qla.partial_trace_W(app.U1, app.N, app.m)
    if qla.max_norm(sum(app.gate_ops) - total) > qla.IDENTITY_TOL:
        problems.append("gate operators do not sum to Tr_W(U1)")
    return problems


class EnergyLedger:
    """Mutable vector of gate energies with a conserved total.

    Each energy is held as a (value, compensation) pair and updated with
    Neumaier summation so the total stays tight over millions of steps.
    Single writer: do not share one ledger between concurrent runs.
    """

    __slots__ = ("_hi", "_lo", "C", "history_len")

    def __init__(self, rho: Sequence[float], C: float | None = None, history_len: int = 0):
        self._hi = [float(r) for r in rho]
        if not self._hi:
            raise ValueError("ledger needs at least one gate")
        self._lo = [0.0] * len(self._hi)
        self.C = math.fsum(self._hi) if C is None else float(C)
        self.history_len = int(history_len)

    @classmethod
    def zeros(cls, n_gates: int) -> "EnergyLedger":
        return cls([0.0] * n_gates)

    def __len__(self) -> int:
        return len(self._hi)

    def __repr__(self) -> str:
        return f"EnergyLedger(rho={list(self.rho)!r}, C={self.C!r}, history_len={self.history_len})"

    @property
    def rho(self) -> tuple:
        return tuple(h + l for h, l in zip(self._hi, self._lo))

    def snapshot(self) -> tuple:
        return self.rho

    def copy(self) -> "EnergyLedger":
        new = EnergyLedger.__new__(EnergyLedger)
        new._hi = list(self._hi)
        new._lo = list(self._lo)
        new.C = self.C
        new.history_len = self.history_len
        return new

    def total(self) -> float:
        return math.fsum(self._hi + self._lo)

    def drift(self) -> float:
        return abs(self.total() - self.C)

    def conserved(self) -> bool:
        return self.drift() <= 1e-9 * (self.history_len + 1)

    def _add(self, j: int, x: float) -> None:
        s = self._hi[j]
        t = s + x
        if abs(s) >= abs(x):
            self._lo[j] += (s - t) + x
        else:
            self._lo[j] += (x - t) + s
        self._hi[j] = t

    def shift(self, delta: Sequence[float]) -> None:
        """Add ``delta`` to the energies without touching ``C`` or the history."""
        if len(delta) != len(self._hi):
            raise DimensionMismatch("delta length does not match the number of gates")
        for j, d in enumerate(delta):
            self._add(j, float(d))

    def step(self, closeness: Sequence[float], open_gates: Sequence[bool]) -> int:
        """Apply steps 2 and 3 of a measurement and return the chosen gate.

        Every energy receives its closeness; the maximal open gate under
        :func:`gate_greater` (on the updated energies) is chosen and pays 1.
        """
        n = len(self._hi)
        for j in range(n):
            self._add(j, closeness[j])
        values = [self._hi[j] + self._lo[j] for j in range(n)]
        chosen = select_gate(values, open_gates)
        self._add(chosen, -1.0)
        self.history_len += 1
        return chosen


def gate_greater(j: int, rho_j: float, k: int, rho_k: float) -> bool:
    """True when gate ``j`` with energy ``rho_j`` outranks gate ``k``.

    Higher energy wins; energies within ``TIE_TOL`` tie and the larger index wins.
    """
    if j == k:
        raise ValueError("gate_greater compares two distinct gates")
    if abs(rho_j - rho_k) <= TIE_TOL:
        return j > k
    return rho_j > rho_k


def select_gate(values: Sequence[float], open_gates: Sequence[bool]) -> int:
    candidates = [j for j in range(len(values)) if open_gates[j]]
    if not candidates:
        raise AllGatesClosed("no open gate to choose from")
    top = max(values[j] for j in candidates)
    # highest index among the gates tied with the top energy
    return max(j for j in candidates if values[j] >= top - TIE_TOL)


@dataclass(frozen=True, eq=False)
class MeasurementOutcome:
    closeness: np.ndarray
    chosen: int
    collapsed_state: np.ndarray
    ledger_before: tuple
    ledger_after: tuple
    disregarded: tuple = field(default_factory=tuple)


def _check_input(app, xi) -> np.ndarray:
    xi = qla.as_state(xi)
    if xi.size != app.input_dim:
        raise DimensionMismatch(f"state has dim {xi.size}, apparatus expects {app.input_dim}")
    return xi


def closeness(app, xi) -> np.ndarray:
    """Unnormalized closeness ``c_j = ||G_j xi||^2`` for every gate operator ``G_j``."""
    xi = _check_input(app, xi)
    return np.array([np.vdot(y, y).real for y in (G @ xi for G in app.gate_ops)])


def normalize_for_measurement(app, xi):
    """Rescale ``xi`` so its closeness vector sums to one.

    Returns ``(scaled_state, closeness_vector)``.  Raises :class:`AllGatesClosed`
    when the total closeness is negligible relative to ``||xi||^2``.
    """
    xi = _check_input(app, xi)
    c = closeness(app, xi)
    total = math.fsum(c)
    norm2 = np.vdot(xi, xi).real
    if norm2 == 0.0 or total <= ZERO_CLOSENESS * norm2:
        raise AllGatesClosed(f"state is invisible to every gate (total closeness {total:.3e})")
    return xi / math.sqrt(total), c / total


def open_mask(c: Sequence[float]) -> list:
    return [cj > ZERO_CLOSENESS for cj in c]


def measure(app, ledger: EnergyLedger, xi) -> MeasurementOutcome:
    """Run one measurement of ``xi``, updating ``ledger`` in place."""
    if len(ledger) != app.n_gates:
        raise DimensionMismatch("ledger size does not match the number of gates")
    scaled, c = normalize_for_measurement(app, xi)
    mask = open_mask(c)
    before = ledger.snapshot()
    chosen = ledger.step(c.tolist(), mask)
    return MeasurementOutcome(
        closeness=c,
        chosen=chosen,
        collapsed_state=app.collapse(chosen, qla.as_state(xi)),
        ledger_before=before,
        ledger_after=ledger.snapshot(),
        disregarded=tuple(j for j, ok in enumerate(mask) if not ok),
    )


def _check_gate(app: Apparatus, j: int) -> None:
    if not 0 <= j < app.N:
        raise IndexOutOfRange(f"gate index {j} outside [0, {app.N})")


def u_hat_j(app: Apparatus, j: int, t: float) -> np.ndarray:
    """Branch operator ``U(t) U(1)^-1 P_{v_j (x) W} U(1)`` on the combined space."""
    _check_gate(app, j)
    Ut = qla.evolution_operator(app.Hhat, t, app.hbar)
    return Ut @ qla.dagger(app.U1) @ qla.gate_projector(j, app.N, app.m) @ app.U1


def u_j_trace(app: Apparatus, j: int, t: float, xi) -> np.ndarray:
    """System-side branch evolution ``Tr_W(u_hat_j(t)) xi``."""
    xi = _check_input(app, xi)
    return qla.partial_trace_W(u_hat_j(app, j, t), app.N, app.m) @ xi


def schrodinger_residual(app: Apparatus, j: int, t: float, h: float = 1e-4,
                         traced: bool = False) -> float:
    """Max-norm gap between a central difference of the branch operator and its generator.

    Compares ``i hbar (X(t+h) - X(t-h)) / 2h`` against ``Hhat X(t)`` where X is
    ``u_hat_j``; with ``traced=True`` both sides are traced over W first.
    """
    plus, minus, now = (u_hat_j(app, j, s) for s in (t + h, t - h, t))
    lhs = 1j * app.hbar * (plus - minus) / (2 * h)
    rhs = app.Hhat @ now
    if traced:
        lhs = qla.partial_trace_W(lhs, app.N, app.m)
        rhs = qla.partial_trace_W(rhs, app.N, app.m)
    return qla.max_norm(lhs - rhs)


def independence_residual(app: Apparatus, H_system) -> np.ndarray:
    """Per-gate ``|| Tr_W(Hhat P_j U1) - H_system M_j ||_max``."""
    H = qla.as_matrix(H_system)
    if H.shape != (app.N, app.N):
        raise DimensionMismatch(f"H_system must be {app.N}x{app.N}, got {H.shape}")
    out = np.empty(app.N)
    for j, M in enumerate(app.gate_ops):
        lhs = qla.partial_trace_W(app.Hhat @ qla.gate_projector(j, app.N, app.m) @ app.U1, app.N, app.m)
        out[j] = qla.max_norm(lhs - H @ M)
    return out


def is_independence_compatible(residuals, tol: float = 1e-10) -> bool:
    return float(np.max(residuals)) < tol
