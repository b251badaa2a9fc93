import numpy as np
import pytest

from topoloc.codes import build_kitaev

SIGMA = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_on(n, factors):
    """Dense operator with the given {qubit: 2x2} factors (little-endian)."""
    out = np.array([[1.0 + 0j]])
    for q in range(n):
        out = np.kron(factors.get(q, SIGMA["I"]), out)
    return out


def dense_string(p):
    """Dense matrix of a PauliString via the Kronecker oracle."""
    return p.sign * kron_on(p.n_qubits, {q: SIGMA[a] for q, a in p.factors.items()})


def random_state(rng, n):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


@pytest.fixture(scope="session")
def kitaev22():
    return build_kitaev(2, 2)


@pytest.fixture(scope="session")
def kitaev33():
    return build_kitaev(3, 3)
