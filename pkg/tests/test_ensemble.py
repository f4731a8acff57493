import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bruteforce_orbit, random_state, traced_apply_bruteforce
from gatemeasure import ensemble, gates, qla
from gatemeasure.errors import BoundViolation, DimensionMismatch, NotAPartition
from gatemeasure.presets import preset_apparatus


def ideal(N, m=None):
    return preset_apparatus("ideal", N, m or N, h_system=np.linspace(-1, 1, N))


# -- repeated runs ---------------------------------------------------------------

def test_periodic_orbit():
    ledger = gates.EnergyLedger.zeros(2)
    stats = ensemble.run_repeated(ideal(2), ledger, np.sqrt([0.7, 0.3]), 10, record=True)
    assert [j + 1 for j in stats.outcomes] == [1, 2, 1, 1, 2, 1, 1, 1, 2, 1]
    assert max(abs(r) for r in ledger.rho) < 1e-12
    assert stats.counts == (7, 3)
    assert (stats.bound_B, stats.bound_upper) == (-4.0, 4.0)


def test_eigenstate_is_certain():
    stats = ensemble.run_repeated(ideal(3), gates.EnergyLedger.zeros(3), qla.basis_vector(0, 3), 500)
    assert stats.counts == (500, 0, 0)
    assert stats.max_deviation == 0.0


def test_bound_for_four_gates():
    n = 20_000
    stats = ensemble.run_repeated(ideal(4), gates.EnergyLedger.zeros(4), np.sqrt([0.4, 0.3, 0.2, 0.1]), n)
    assert (stats.bound_B, stats.bound_upper) == (-4.0, 12.0)
    assert stats.max_deviation <= 12
    assert stats.frequency_error() <= 12 / n
    assert stats.violations == 0


def test_zero_steps():
    stats = ensemble.run_repeated(ideal(2), gates.EnergyLedger.zeros(2), np.sqrt([0.7, 0.3]), 0, record=True)
    assert stats.counts == (0, 0) and stats.outcomes == []
    assert ensemble.born_limit_check(stats)


def test_run_agrees_with_single_measurements():
    app = preset_apparatus("random", 3, 2, seed=4)
    xi = random_state(3, 4)
    a, b = gates.EnergyLedger([0.3, 0.1, -0.2]), gates.EnergyLedger([0.3, 0.1, -0.2])
    stats = ensemble.run_repeated(app, a, xi, 300, record=True)
    assert stats.outcomes == [gates.measure(app, b, xi).chosen for _ in range(300)]
    assert a.rho == b.rho


@given(st.integers(0, 10_000), st.integers(0, 10_000),
       st.lists(st.floats(-6, 6), min_size=3, max_size=3))
@settings(max_examples=30, deadline=None)
def test_bounds_hold_from_any_start(app_seed, state_seed, rho0):
    app = preset_apparatus("random", 3, 2, seed=app_seed)
    ledger = gates.EnergyLedger(rho0)
    stats = ensemble.run_repeated(app, ledger, random_state(3, state_seed), 400)
    assert stats.violations == 0
    assert ensemble.born_limit_check(stats)
    assert all(stats.bound_B < r < stats.bound_upper for r in ledger.rho)


def test_on_step_records():
    rows = []
    ensemble.run_repeated(ideal(2), gates.EnergyLedger.zeros(2), np.sqrt([0.7, 0.3]), 4,
                          on_step=lambda *r: rows.append(r))
    assert [r[0] for r in rows] == [1, 2, 3, 4]
    assert [r[1] for r in rows] == [0, 1, 0, 0]


def test_broken_selection_is_caught(monkeypatch):
    monkeypatch.setattr(gates, "select_gate", lambda values, open_gates: 0)
    with pytest.raises(BoundViolation):
        ensemble.run_repeated(ideal(2), gates.EnergyLedger.zeros(2), np.sqrt([0.5, 0.5]), 100)
    ledger = gates.EnergyLedger.zeros(2)
    stats = ensemble.run_repeated(ideal(2), ledger, np.sqrt([0.5, 0.5]), 100, strict=False)
    assert stats.violations > 0


# -- Born limit check ------------------------------------------------------------

def test_born_limit_check_single_step():
    stats = ensemble.run_repeated(ideal(2), gates.EnergyLedger.zeros(2), np.sqrt([0.7, 0.3]), 1)
    assert abs(stats.frequency_error() - 0.3) < 1e-12
    assert ensemble.born_limit_check(stats)


def test_born_limit_check_negative_control():
    stats = ensemble.run_repeated(ideal(2), gates.EnergyLedger.zeros(2), np.sqrt([0.7, 0.3]), 1000)
    assert ensemble.born_limit_check(stats, tol=0)
    stats.counts = (500, 500)
    assert not ensemble.born_limit_check(stats)


# -- i.i.d. baseline ---------------------------------------------------------------

def test_iid_certain():
    assert ensemble.iid_reference([1.0, 0.0], 1000, 3).counts == (1000, 0)


def test_iid_seeded():
    a = ensemble.iid_reference([0.2, 0.5, 0.3], 5000, 9)
    b = ensemble.iid_reference([0.2, 0.5, 0.3], 5000, 9)
    assert a.counts == b.counts and sum(a.counts) == 5000


def test_iid_rejects_unnormalized():
    with pytest.raises(ValueError):
        ensemble.iid_reference([0.5, 0.6], 10, 0)


def test_iid_error_is_statistical():
    n = 10_000
    det = ensemble.run_repeated(ideal(2), gates.EnergyLedger.zeros(2), np.sqrt([0.5, 0.5]), n)
    iid_errors = [ensemble.iid_reference([0.5, 0.5], n, s).frequency_error() for s in range(100)]
    assert det.frequency_error() <= 2 / n
    assert np.median(iid_errors) > 10 / n


# -- entanglement ----------------------------------------------------------------

def bell(N=2):
    return sum(np.kron(qla.basis_vector(j, N), qla.basis_vector(j, N)) for j in range(N)) / np.sqrt(N)


def test_entangled_gate_projector_layout():
    base = preset_apparatus("trivial", 2, 3)
    eapp = ensemble.build_entangled_apparatus(base, 2)
    np.testing.assert_array_equal(eapp.U_ext, np.eye(12))
    P = np.kron(np.kron(np.diag([1.0, 0.0]), np.eye(2)), np.eye(3))
    assert qla.max_norm(eapp.gate_ops[0] - qla.partial_trace_W(P, 4, 3)) == 0


def test_entangled_closeness_bell():
    m = 3
    eapp = ensemble.build_entangled_apparatus(preset_apparatus("trivial", 2, m), 2)
    np.testing.assert_allclose(gates.closeness(eapp, bell()), [m * m / 2, m * m / 2], atol=1e-13)
    ledger = gates.EnergyLedger.zeros(2)
    out, partner = ensemble.measure_entangled(eapp, ledger, bell())
    np.testing.assert_allclose(partner, qla.basis_vector(out.chosen, 2) / np.sqrt(2), atol=1e-15)
    np.testing.assert_array_equal(out.collapsed_state, qla.basis_vector(out.chosen, 2))


def test_entangled_product_state():
    u = np.array([0.6, 0.8j, 0.0])
    eapp = ensemble.build_entangled_apparatus(preset_apparatus("trivial", 2, 2), 3)
    out, partner = ensemble.measure_entangled(eapp, gates.EnergyLedger([0.0, 5.0]), np.kron([1, 0], u))
    assert out.chosen == 0 and out.disregarded == (1,)
    np.testing.assert_allclose(partner, u)


@pytest.mark.parametrize("seed", range(4))
def test_entangled_ops_match_factorized_oracle(seed):
    base = preset_apparatus("random", 2, 3, seed=seed)
    eapp = ensemble.build_entangled_apparatus(base, 2)
    xi = random_state(4, seed)
    for j in range(2):
        oracle = np.kron(base.gate_ops[j], np.eye(2)) @ xi
        np.testing.assert_allclose(eapp.gate_ops[j] @ xi, oracle, atol=1e-13)
        P = np.kron(np.kron(np.outer(qla.basis_vector(j, 2), qla.basis_vector(j, 2)), np.eye(2)), np.eye(3))
        np.testing.assert_allclose(eapp.gate_ops[j] @ xi,
                                   traced_apply_bruteforce(P @ eapp.U_ext, xi, 4, 3), atol=1e-13)


def test_entangled_dimension_check():
    eapp = ensemble.build_entangled_apparatus(preset_apparatus("trivial", 2, 2), 2)
    with pytest.raises(DimensionMismatch):
        ensemble.measure_entangled(eapp, gates.EnergyLedger.zeros(2), np.ones(3))


@pytest.mark.parametrize("mode", ["trivial", "ideal"])
def test_entangled_frequencies_match_reduced_weights(mode):
    n = 3000
    base = preset_apparatus(mode, 3, 2, h_system=[0.1, 0.5, -0.3])
    eapp = ensemble.build_entangled_apparatus(base, 2)
    xi = random_state(6, 17)
    stats, partners = ensemble.run_entangled(eapp, gates.EnergyLedger.zeros(3), xi, n)
    weights = ensemble.reduced_born_weights(xi, 3)
    envelope = max(abs(stats.bound_B), stats.bound_upper)
    assert np.max(np.abs(n * weights - np.asarray(stats.counts))) <= envelope
    assert len(partners) == n


def test_entangled_fresh_ledgers_repeat_the_first_choice():
    eapp = ensemble.build_entangled_apparatus(preset_apparatus("trivial", 2, 2), 2)
    ledger = gates.EnergyLedger.zeros(2)
    stats, _ = ensemble.run_entangled(eapp, ledger, bell(), 50, fresh_ledgers=True)
    assert stats.counts == (0, 50)
    assert ledger.rho == (0.0, 0.0) and ledger.history_len == 0


# -- subspaces --------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_singleton_subspaces_reduce_to_base(seed):
    base = preset_apparatus("random", 3, 2, seed=seed)
    sapp = ensemble.build_subspace_apparatus(ensemble.projectors_from_groups([[0], [1], [2]], 3), base.Hhat, 2)
    xi = random_state(3, seed)
    np.testing.assert_array_equal(gates.closeness(sapp, xi), gates.closeness(base, xi))
    a, b = gates.EnergyLedger.zeros(3), gates.EnergyLedger.zeros(3)
    assert ([gates.measure(base, a, xi).chosen for _ in range(200)]
            == [gates.measure(sapp, b, xi).chosen for _ in range(200)])


def test_single_subspace_is_certain():
    base = preset_apparatus("random", 3, 2, seed=1)
    sapp = ensemble.build_subspace_apparatus([np.eye(3)], base.Hhat, 2)
    xi = random_state(3, 1)
    assert abs(gates.closeness(sapp, xi)[0] - gates.closeness(base, xi).sum()) < 1e-12
    stats = ensemble.run_repeated(sapp, gates.EnergyLedger.zeros(1), xi, 20)
    assert stats.counts == (20,)


def test_two_block_partition_closeness():
    base = preset_apparatus("trivial", 3, 2)
    groups = [[0, 1], [2]]
    sapp = ensemble.build_subspace_apparatus(ensemble.projectors_from_groups(groups, 3), base.Hhat, 2)
    xi = np.sqrt([0.5, 0.3, 0.2])
    oracle = []
    for g in groups:
        P = np.kron(np.diag([1.0 if i in g else 0.0 for i in range(3)]), np.eye(2))
        y = traced_apply_bruteforce(P @ base.U1, xi, 3, 2)
        oracle.append(np.vdot(y, y).real)
    c = gates.closeness(sapp, xi)
    np.testing.assert_allclose(c, oracle, atol=1e-13)
    np.testing.assert_allclose(c / c.sum(), [0.8, 0.2], atol=1e-15)
    out = gates.measure(sapp, gates.EnergyLedger.zeros(2), xi)
    assert out.chosen == 0
    np.testing.assert_allclose(out.collapsed_state, np.array([np.sqrt(0.5), np.sqrt(0.3), 0]) / np.sqrt(0.8))


def test_partition_checks():
    H = np.zeros((6, 6))
    with pytest.raises(NotAPartition):
        ensemble.build_subspace_apparatus(ensemble.projectors_from_groups([[0, 1], [1, 2]], 3), H, 2)
    with pytest.raises(NotAPartition):
        ensemble.build_subspace_apparatus(ensemble.projectors_from_groups([[0], [1]], 3), H, 2)
    with pytest.raises(NotAPartition):
        ensemble.build_subspace_apparatus([np.full((3, 3), 0.5)], H, 2)


def test_eigenspace_gates_report_eigenvalues():
    U = qla.random_unitary(3, 2)
    H_obs = U @ np.diag([1.0, 1.0, -2.0]) @ qla.dagger(U)
    values, projectors = ensemble.eigenspace_projectors(H_obs)
    assert values == pytest.approx([-2.0, 1.0])
    assert [round(np.trace(P).real) for P in projectors] == [1, 2]
    sapp = ensemble.build_subspace_apparatus(projectors, np.zeros((6, 6)), 2, eigenvalues=values)
    xi = U[:, 2]
    assert gates.measure(sapp, gates.EnergyLedger.zeros(2), xi).chosen == 0
    assert sapp.eigenvalues[0] == pytest.approx(-2.0)


# -- perturbation ------------------------------------------------------------------

def test_perturb_zero_is_identity():
    ledger = gates.EnergyLedger([0.3, -0.1, 0.5])
    assert ensemble.perturb_energies(ledger, 0.0, 7).rho == ledger.rho


@given(st.integers(0, 2**32), st.floats(0, 10))
def test_perturb_preserves_total(seed, magnitude):
    ledger = gates.EnergyLedger([0.3, -0.1, 0.5, 2.0])
    out = ensemble.perturb_energies(ledger, magnitude, seed)
    assert abs(out.total() - ledger.total()) < 1e-12
    assert out.C == ledger.C


def test_perturb_seeds_differ():
    ledger = gates.EnergyLedger.zeros(3)
    a = ensemble.perturb_energies(ledger, 1.0, 1)
    b = ensemble.perturb_energies(ledger, 1.0, 2)
    assert a.rho != b.rho
    assert abs(a.total() - b.total()) < 1e-12
    assert a.rho == ensemble.perturb_energies(ledger, 1.0, 1).rho


def test_perturbed_run_keeps_invariants():
    ledger = gates.EnergyLedger.zeros(3)
    stats = ensemble.run_repeated(ideal(3), ledger, np.sqrt([0.2, 0.5, 0.3]), 5000,
                                  perturb=(3.0, 97), seed=5)
    assert stats.violations == 0
    assert ledger.conserved()
    assert ensemble.born_limit_check(stats)


# -- generic initialization ----------------------------------------------------------

def collisions_bruteforce(rho0, c, K):
    found = set()
    r = range(-K, K + 1)
    for j, k in itertools.combinations(range(len(c)), 2):
        for mj, nj, mk, nk in itertools.product(r, r, r, r):
            if abs(rho0[j] + mj + nj * c[j] - (rho0[k] + mk + nk * c[k])) <= 1e-12:
                found.add((j, k, mj, nj, mk, nk))
    return found


def test_symmetric_start_collides():
    hits = ensemble.generic_init_check([0.0, 0.0], [0.5, 0.5], 1)
    assert (0, 1, 0, 0, 0, 0) in hits


def test_irrational_offset_is_tie_free():
    rho0, c = [0.0, 1 / math.pi], [0.7, 0.3]
    assert ensemble.generic_init_check(rho0, c, 5) == []
    assert collisions_bruteforce(rho0, c, 5) == set()


def test_constructed_collision():
    hits = ensemble.generic_init_check([0.3, 0.0], [0.7, 0.3], 2)
    assert (0, 1, 0, 0, 0, 1) in hits
    assert set(hits) == collisions_bruteforce([0.3, 0.0], [0.7, 0.3], 2)


def test_collisions_match_bruteforce_three_gates():
    rho0, c = [0.0, 0.25, 0.5], [0.5, 0.25, 0.25]
    assert set(ensemble.generic_init_check(rho0, c, 2)) == collisions_bruteforce(rho0, c, 2)
