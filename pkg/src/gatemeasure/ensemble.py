"""Repeated measurements, frequency bounds and extensions of the gate model.

The bounds used by :func:`run_repeated` come from the conservation argument:
with ``C`` the conserved energy total and every initial energy above ``B``
(``B < -|C| - 3``), each energy stays inside ``(B, C - (N - 1) B)`` forever,
and for a repeated state ``rho_j = rho_j(0) + n c_j - n_j``.  So the count
deviation ``|n c_j - n_j|`` is bounded by a constant and ``n_j / n -> c_j``
at rate ``O(1/n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import qla
from .errors import BoundViolation, DimensionMismatch, NotAPartition
from .gates import (
    Apparatus,
    EnergyLedger,
    measure,
    normalize_for_measurement,
    open_mask,
)

PARTITION_TOL = 1e-10


@dataclass
class RunStatistics:
    n: int
    counts: tuple
    closeness_ref: tuple
    max_deviation: float
    bound_B: float | None = None
    bound_upper: float | None = None
    violations: int = 0
    offset: float = 0.0
    outcomes: list | None = None
    final_energies: tuple | None = None

    def frequencies(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / max(self.n, 1)

    def frequency_error(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(self.frequencies() - np.asarray(self.closeness_ref))))


def born_bounds(C: float, energies: Sequence[float]) -> tuple[float, float]:
    """Return ``(B, upper)`` for a ledger with total ``C`` and current ``energies``.

    ``B = -(|C| + 4)`` unless some energy already sits at or below it, in which
    case B drops to one unit under the smallest energy.
    """
    B = min(-(abs(C) + 4.0), min(energies) - 1.0)
    return B, C - (len(energies) - 1) * B


def zero_sum_noise(n_gates: int, magnitude: float, seed: int) -> np.ndarray:
    if magnitude < 0:
        raise ValueError("magnitude must be non-negative")
    if magnitude == 0:
        return np.zeros(n_gates)
    noise = np.random.default_rng(seed).uniform(-magnitude, magnitude, n_gates)
    return noise - noise.mean()


def perturb_energies(ledger: EnergyLedger, magnitude: float, seed: int) -> EnergyLedger:
    """Return a copy of ``ledger`` with seeded zero-sum noise added to the energies."""
    out = ledger.copy()
    out.shift(zero_sum_noise(len(ledger), magnitude, seed))
    return out


def _perturb_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def run_repeated(app, ledger: EnergyLedger, xi, n: int, *,
                 perturb: tuple[float, int] | None = None,
                 seed: int = 0,
                 record: bool = False,
                 on_step: Callable | None = None,
                 strict: bool = True) -> RunStatistics:
    """Measure the same state ``n`` times on one ledger, checking the bounds at every step.

    Parameters
    ----------
    app : Apparatus, SubspaceApparatus or EntangledApparatus
    ledger : EnergyLedger
        Updated in place.
    perturb : (magnitude, period), optional
        Every ``period`` steps the energies get zero-sum noise; the bounds are
        re-derived from the perturbed energies.
    record : bool
        Keep the full outcome sequence in ``RunStatistics.outcomes``.
    on_step : callable, optional
        Called as ``on_step(step, chosen, closeness, energies, deviation)``
        after every measurement (``step`` counts from 1).
    strict : bool
        Raise :class:`BoundViolation` on the first violated bound instead of counting.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if len(ledger) != app.n_gates:
        raise DimensionMismatch("ledger size does not match the number of gates")
    _, c = normalize_for_measurement(app, xi)
    cl = c.tolist()
    mask = open_mask(cl)
    N = len(cl)
    rho0 = ledger.rho
    C = ledger.C
    B, U = born_bounds(C, rho0)
    # a single gate always holds exactly C, so its upper bound is attained
    slack = 1e-9 if N == 1 else 0.0
    shift = [0.0] * N
    counts = [0] * N
    outcomes = [] if record else None
    max_dev = 0.0
    violations = 0
    k_perturb = 0

    def fail(msg):
        nonlocal violations
        violations += 1
        if strict:
            raise BoundViolation(msg)

    for step in range(1, n + 1):
        j0 = ledger.step(cl, mask)
        counts[j0] += 1
        if record:
            outcomes.append(j0)
        rho = ledger.rho
        step_dev = 0.0
        for j in range(N):
            d = step * cl[j] - counts[j]
            if abs(d) > step_dev:
                step_dev = abs(d)
            from_counts = rho0[j] + shift[j] + d
            if not (B < from_counts < U + slack and B < rho[j] < U + slack):
                fail(f"step {step}, gate {j}: energy {rho[j]!r} (counts give {from_counts!r}) "
                     f"outside ({B}, {U})")
        if step_dev > max_dev:
            max_dev = step_dev
        if abs(math.fsum(rho) - C) > 1e-9 * (ledger.history_len + 1):
            fail(f"step {step}: energy total drifted to {math.fsum(rho)!r}, expected {C!r}")
        if on_step is not None:
            on_step(step, j0, cl, rho, step_dev)
        if perturb is not None and perturb[0] > 0 and step % perturb[1] == 0:
            noise = zero_sum_noise(N, perturb[0], _perturb_seed(seed, k_perturb))
            k_perturb += 1
            ledger.shift(noise)
            shift = [s + float(x) for s, x in zip(shift, noise)]
            B = min(B, min(ledger.rho) - 1.0)
            U = C - (N - 1) * B

    return RunStatistics(
        n=n,
        counts=tuple(counts),
        closeness_ref=tuple(cl),
        max_deviation=max_dev,
        bound_B=B,
        bound_upper=U,
        violations=violations,
        offset=max(abs(r + s) for r, s in zip(rho0, shift)),
        outcomes=outcomes,
        final_energies=ledger.rho,
    )


def born_limit_check(stats: RunStatistics, tol: float = 0.0) -> bool:
    """True iff every frequency is within the deterministic ``O(1/n)`` envelope of its closeness."""
    if stats.n == 0:
        return True
    envelope = max(abs(stats.bound_B), stats.bound_upper) + stats.offset
    return stats.frequency_error() <= envelope / stats.n + tol


def iid_reference(c: Sequence[float], n: int, seed: int) -> RunStatistics:
    """Counts from ``n`` i.i.d. draws with probabilities ``c`` (seeded PCG64)."""
    p = np.asarray(c, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("closeness vector must sum to 1")
    draws = np.random.default_rng(seed).choice(p.size, size=n, p=p / p.sum())
    counts = np.bincount(draws, minlength=p.size)
    dev = float(np.max(np.abs(n * p - counts))) if n else 0.0
    return RunStatistics(n=n, counts=tuple(int(x) for x in counts),
                         closeness_ref=tuple(p.tolist()), max_deviation=dev)


# -- entanglement -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EntangledApparatus:
    """Gates ``v_j (x) V2 (x) W`` for a system that is half of an entangled pair.

    The combined evolution acts as ``base.U1`` on ``V1 (x) W`` and as the
    identity on ``V2``; the composite order is ``V1 (x) V2 (x) W``.  Energies
    are those of the base apparatus, one per ``v_j``.
    """

    base: Apparatus
    dim2: int
    U_ext: np.ndarray
    gate_ops: tuple

    @property
    def n_gates(self) -> int:
        return self.base.N

    @property
    def input_dim(self) -> int:
        return self.base.N * self.dim2

    def collapse(self, j: int, xi: np.ndarray) -> np.ndarray:
        return qla.basis_vector(j, self.base.N)


def extend_by_identity(U: np.ndarray, N: int, m: int, dim2: int) -> np.ndarray:
    """Lift an operator on ``V1 (x) W`` to ``V1 (x) V2 (x) W``, acting trivially on V2."""
    U4 = np.asarray(U).reshape(N, m, N, m)
    ext = np.einsum("aicj,bd->abicdj", U4, np.eye(dim2))
    return ext.reshape(N * dim2 * m, N * dim2 * m)


def build_entangled_apparatus(base: Apparatus, dim2: int) -> EntangledApparatus:
    if dim2 < 1:
        raise DimensionMismatch("dim2 must be positive")
    N, m = base.N, base.m
    U_ext = extend_by_identity(base.U1, N, m, dim2)
    ops = []
    for j in range(N):
        P = np.kron(np.kron(np.outer(qla.basis_vector(j, N), qla.basis_vector(j, N)), np.eye(dim2)),
                    np.eye(m))
        ops.append(qla.partial_trace_W(P @ U_ext, N * dim2, m))
    return EntangledApparatus(base=base, dim2=dim2, U_ext=U_ext, gate_ops=tuple(ops))


def measure_entangled(eapp: EntangledApparatus, ledger: EnergyLedger, xi):
    """Measure the first half of ``xi``; return the outcome and the (unnormalized) partner state."""
    xi = qla.as_state(xi)
    if xi.size != eapp.input_dim:
        raise DimensionMismatch(f"state has dim {xi.size}, expected {eapp.input_dim}")
    outcome = measure(eapp, ledger, xi)
    partner = qla.partial_inner_left(qla.basis_vector(outcome.chosen, eapp.base.N), xi)
    return outcome, partner


def reduced_born_weights(xi, N: int) -> np.ndarray:
    """``||<v_j, xi>||^2 / ||xi||^2`` for each basis vector of the first factor."""
    xi = qla.as_state(xi)
    blocks = xi.reshape(N, xi.size // N)
    w = np.sum(np.abs(blocks) ** 2, axis=1)
    return w / w.sum()


def run_entangled(eapp: EntangledApparatus, ledger: EnergyLedger, xi, n: int, *,
                  fresh_ledgers: bool = False, record: bool = False) -> tuple[RunStatistics, list]:
    """Repeat entangled measurements ``n`` times.

    With ``fresh_ledgers`` every trial starts from a copy of ``ledger`` (which is
    left untouched); otherwise all trials share and update ``ledger`` and the
    frequency bounds of :func:`run_repeated` apply.  Returns the statistics
    and the partner state of every trial.
    """
    xi = qla.as_state(xi)
    if not fresh_ledgers:
        stats = run_repeated(eapp, ledger, xi, n, record=True)
        partners = [qla.partial_inner_left(qla.basis_vector(j, eapp.base.N), xi) for j in stats.outcomes]
        if not record:
            stats.outcomes = None
        return stats, partners
    counts = [0] * eapp.n_gates
    outcomes, partners = [], []
    c = None
    for _ in range(n):
        outcome, partner = measure_entangled(eapp, ledger.copy(), xi)
        c = outcome.closeness
        counts[outcome.chosen] += 1
        outcomes.append(outcome.chosen)
        partners.append(partner)
    if c is None:
        _, c = normalize_for_measurement(eapp, xi)
    dev = float(np.max(np.abs(n * np.asarray(c) - counts))) if n else 0.0
    stats = RunStatistics(n=n, counts=tuple(counts), closeness_ref=tuple(c.tolist()),
                          max_deviation=dev, outcomes=outcomes if record else None,
                          final_energies=ledger.rho)
    return stats, partners


# -- orthogonal-subspace gates ------------------------------------------------

@dataclass(frozen=True, eq=False)
class SubspaceApparatus:
    """Apparatus whose gates are ``V_k (x) W`` for a partition of V into orthogonal subspaces."""

    projectors: tuple
    Hhat: np.ndarray
    m: int
    hbar: float
    U1: np.ndarray
    gate_ops: tuple
    eigenvalues: tuple | None = None

    @property
    def N(self) -> int:
        return self.projectors[0].shape[0]

    @property
    def n_gates(self) -> int:
        return len(self.projectors)

    @property
    def input_dim(self) -> int:
        return self.N

    def collapse(self, k: int, xi: np.ndarray) -> np.ndarray:
        """Normalized projection of ``xi`` onto ``V_k``.

        Falls back to the normalized gate image when ``xi`` has no component in ``V_k``.
        """
        y = self.projectors[k] @ xi
        norm = np.linalg.norm(y)
        if norm <= 1e-14 * max(np.linalg.norm(xi), 1e-300):
            y = self.gate_ops[k] @ xi
            norm = np.linalg.norm(y)
        return y / norm


def check_partition(projectors, tol: float = PARTITION_TOL) -> None:
    if not projectors:
        raise NotAPartition("need at least one subspace")
    N = projectors[0].shape[0]
    for k, P in enumerate(projectors):
        if P.shape != (N, N):
            raise NotAPartition(f"projector {k} has shape {P.shape}, expected {(N, N)}")
        if qla.max_norm(P - qla.dagger(P)) > tol or qla.max_norm(P @ P - P) > tol:
            raise NotAPartition(f"matrix {k} is not an orthogonal projector")
    for a in range(len(projectors)):
        for b in range(a + 1, len(projectors)):
            if qla.max_norm(projectors[a] @ projectors[b]) > tol:
                raise NotAPartition(f"subspaces {a} and {b} are not orthogonal")
    if qla.max_norm(sum(projectors) - np.eye(N)) > tol:
        raise NotAPartition("projectors do not sum to the identity")


def build_subspace_apparatus(projectors, Hhat, m: int, hbar: float = 1.0,
                             eigenvalues=None) -> SubspaceApparatus:
    """Gate operator for subspace k is ``Tr_W((P_k (x) I_m) U1)``."""
    Ps = tuple(qla.as_matrix(P) for P in projectors)
    check_partition(Ps)
    N = Ps[0].shape[0]
    H = qla.as_matrix(Hhat)
    if H.shape != (N * m, N * m):
        raise DimensionMismatch(f"Hhat must be {N * m}x{N * m}, got {H.shape}")
    U1 = qla.evolution_operator(H, 1.0, hbar)
    ops = tuple(qla.partial_trace_W(np.kron(P, np.eye(m)) @ U1, N, m) for P in Ps)
    if eigenvalues is not None:
        eigenvalues = tuple(float(x) for x in eigenvalues)
        if len(eigenvalues) != len(Ps):
            raise DimensionMismatch("one eigenvalue label per subspace")
    return SubspaceApparatus(projectors=Ps, Hhat=H, m=m, hbar=float(hbar), U1=U1,
                             gate_ops=ops, eigenvalues=eigenvalues)


def projectors_from_groups(groups: Sequence[Sequence[int]], N: int) -> list:
    """Coordinate projectors for a partition of ``range(N)`` into index groups."""
    out = []
    for g in groups:
        d = np.zeros(N)
        d[list(g)] = 1.0
        out.append(np.diag(d).astype(np.complex128))
    return out


def eigenspace_projectors(H, tol: float = 1e-9) -> tuple[list, list]:
    """Distinct eigenvalues of a Hermitian ``H`` and the projectors onto their eigenspaces."""
    H = qla.as_matrix(H)
    if not qla.is_hermitian(H):
        raise qla.NonHermitianInput("observable must be Hermitian")
    evals, Q = np.linalg.eigh(H)
    values, projectors = [], []
    start = 0
    for i in range(1, len(evals) + 1):
        if i == len(evals) or evals[i] - evals[i - 1] > tol:
            block = Q[:, start:i]
            values.append(float(np.mean(evals[start:i])))
            projectors.append(block @ qla.dagger(block))
            start = i
    return values, projectors


# -- tie-freedom of the initial energies -------------------------------------

class Collision(NamedTuple):
    j: int
    k: int
    m_j: int
    n_j: int
    m_k: int
    n_k: int


def generic_init_check(rho0: Sequence[float], c: Sequence[float], K: int,
                       tol: float = 1e-12) -> list[Collision]:
    """Search for integer combinations that make two gate energies coincide.

    Checks ``rho0[j] + m_j + n_j c[j] == rho0[k] + m_k + n_k c[k]`` (within
    ``tol``) for every pair ``j < k`` and all integers with absolute value at
    most ``K``.  The relation is symmetric, so each unordered pair is reported
    once.  An empty result means no tie can arise within that horizon.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(rho0) != len(c):
        raise DimensionMismatch("rho0 and c must have the same length")
    r = np.arange(-K, K + 1)
    mm, nn = (a.ravel() for a in np.meshgrid(r, r, indexing="ij"))
    out = []
    for j in range(len(c)):
        a = rho0[j] + mm + nn * c[j]
        for k in range(j + 1, len(c)):
            b = rho0[k] + mm + nn * c[k]
            order = np.argsort(b, kind="stable")
            bs = b[order]
            lo = np.searchsorted(bs, a - tol, side="left")
            hi = np.searchsorted(bs, a + tol, side="right")
            for ia in np.nonzero(hi > lo)[0]:
                for ib in order[lo[ia]:hi[ia]]:
                    out.append(Collision(j, k, int(mm[ia]), int(nn[ia]), int(mm[ib]), int(nn[ib])))
    return out
