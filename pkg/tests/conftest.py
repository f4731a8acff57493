import numpy as np
import pytest

from gatemeasure import gates, qla

ACCEPTANCE_RESULTS = []


def kron_bruteforce(a, b):
    """Kronecker product straight from the index definition."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    out = np.zeros((a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]), dtype=complex)
    for ra in range(a.shape[0]):
        for ca in range(a.shape[1]):
            for rb in range(b.shape[0]):
                for cb in range(b.shape[1]):
                    out[ra * b.shape[0] + rb, ca * b.shape[1] + cb] = a[ra, ca] * b[rb, cb]
    return out


def traced_apply_bruteforce(A, xi, N, m):
    """sum_i <A (xi (x) w_i), w_i>_W, the partial trace applied to a vector, by explicit loops."""
    out = np.zeros(N, dtype=complex)
    for i in range(m):
        w = np.zeros(m)
        w[i] = 1.0
        z = A @ np.kron(xi, w)
        for a in range(N):
            out[a] += z[a * m + i]
    return out


def random_state(dim, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim) + 1j * rng.standard_normal(dim)


@pytest.fixture
def random_app():
    return gates.build_apparatus(qla.random_hermitian(6, 11), 3, 2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


def bruteforce_orbit(c, rho0, n):
    """Exact re-simulation of the three-step rule on Fractions.

    Returns (outcomes, final energies); ties go to the larger index.
    """
    from fractions import Fraction

    c = [Fraction(x) for x in c]
    rho = [Fraction(x) for x in rho0]
    outcomes = []
    for _ in range(n):
        rho = [r + x for r, x in zip(rho, c)]
        j0 = max((j for j in range(len(c)) if c[j] > 0), key=lambda j: (rho[j], j))
        rho[j0] -= 1
        outcomes.append(j0)
    return outcomes, rho
