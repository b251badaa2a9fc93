import numpy as np
import pytest

from topoloc.codes import (LatticeError, LoopSpec, build_color, build_kitaev,
                           stabilizer_generators, stabilizer_ground_state)
from topoloc.localize import Region, canonical_setup
from topoloc.pauli import PauliString, multiply_strings
from topoloc.spectrum import ground_state_at
from topoloc.witness import (DerivationError, WitnessConstructionError,
                             build_witness, validate_witness_conditions,
                             verify_decomposition, verify_star_pt_bound,
                             witness_expectation)

from conftest import dense_string


def _stab_product(lat, which, one_based_ids):
    axis = "Z" if which == "P" else "X"
    supports = lat.plaquettes if which == "P" else lat.vertices
    return multiply_strings([
        PauliString.from_factors(lat.n_qubits, {q: axis for q in supports[i - 1]})
        for i in one_based_ids
    ])


# the published generator tables for the five lattice sizes, L^x_h and L^z_h
TABLE = {
    (2, 2): {"X": [("V", [3, 4]), ("P", [2])],
             "Z": [("P", [1, 2]), ("V", [4])]},
    (3, 2): {"X": [("V", [4, 5, 6]), ("P", [2, 3]), ("P", [3])],
             "Z": [("P", [1, 2, 3]), ("V", [5, 6]), ("V", [6])]},
    (4, 2): {"X": [("V", [5, 6, 7, 8]), ("P", [2, 3, 4]), ("P", [3, 4]), ("P", [4])],
             "Z": [("P", [1, 2, 3, 4]), ("V", [6, 7, 8]), ("V", [7, 8]), ("V", [8])]},
    (3, 3): {"X": [("V", [7, 8, 9]), ("P", [5, 6]), ("P", [6])],
             "Z": [("P", [4, 5, 6]), ("V", [8, 9]), ("V", [9])]},
    (5, 2): {"X": [("V", [6, 7, 8, 9, 10]), ("P", [2, 3, 4, 5]), ("P", [3, 4, 5]),
                   ("P", [4, 5]), ("P", [5])],
             "Z": [("P", [1, 2, 3, 4, 5]), ("V", [7, 8, 9, 10]), ("V", [8, 9, 10]),
                   ("V", [9, 10])]},
}


def test_witness_generators_match_published_tables():
    for dims, per_kind in TABLE.items():
        lat = build_kitaev(*dims)
        for kind, entries in per_kind.items():
            wit = build_witness(lat, LoopSpec(kind, "h"))
            assert len(wit.generators) == len(lat.loop_support(LoopSpec(kind, "h")))
            for built, (which, ids) in zip(wit.generators, entries):
                want = _stab_product(lat, which, ids)
                assert (built.x, built.z, built.sign) == (want.x, want.z, want.sign), \
                    (dims, kind, built.to_text(), want.to_text())


def test_witness_vertical_loops_and_conditions():
    for dims in ((2, 2), (3, 2), (2, 3), (3, 3)):
        lat = build_kitaev(*dims)
        for spec in (LoopSpec("X", "v"), LoopSpec("Z", "v")):
            wit = build_witness(lat, spec)
            assert len(wit.generators) == len(lat.loop_support(spec))


def test_witness_rejects_color():
    with pytest.raises(LatticeError):
        build_witness(build_color(3, 2), LoopSpec("X", "h", "r"))


def test_condition_b_fault_injection(kitaev22):
    wit = build_witness(kitaev22, LoopSpec("X", "h"))
    with pytest.raises(WitnessConstructionError, match="condition"):
        validate_witness_conditions(wit.region, wit.generators[:-1], 8)
    # replacing a generator with a plain stabilizer that is identity on the
    # loop breaks completeness as well
    plaq = PauliString.from_factors(8, {q: "Z" for q in kitaev22.plaquettes[2]})
    broken = (wit.generators[0], plaq)
    with pytest.raises(WitnessConstructionError):
        validate_witness_conditions(wit.region, broken, 8)


def test_condition_a_fault_injection(kitaev22):
    # a generator anticommuting outside the loop must be rejected
    wit = build_witness(kitaev22, LoopSpec("X", "h"))
    omega = wit.region
    outside = next(q for q in range(8) if q not in omega)
    clash_x = PauliString.from_factors(8, {outside: "X", omega[0]: "Z", omega[1]: "Z"})
    clash_z = PauliString.from_factors(8, {outside: "Z", omega[0]: "X", omega[1]: "X"})
    with pytest.raises(WitnessConstructionError, match="condition \\(a\\)"):
        validate_witness_conditions(omega, (clash_x, clash_z), 8)


def test_witness_expectation_g0_and_piecewise(kitaev22):
    psi = stabilizer_ground_state(kitaev22)
    for kind in ("X", "Z"):
        wit = build_witness(kitaev22, LoopSpec(kind, "h"))
        val = witness_expectation(psi, wit)
        assert abs(val.w + 0.5) < 1e-12
        assert abs(val.bound - 1.0) < 1e-12
    # piecewise form of the bound
    from topoloc.witness import WitnessValue

    assert WitnessValue(0.3, max(-2 * 0.3, 0.0)).bound == 0.0
    assert WitnessValue(0.0, max(-0.0, 0.0)).bound == 0.0


def test_witness_expectation_matches_dense(kitaev22):
    rng = np.random.default_rng(3)
    wit = build_witness(kitaev22, LoopSpec("X", "h"))
    dense = wit.assembled.to_dense()
    for _ in range(5):
        v = rng.normal(size=256) + 1j * rng.normal(size=256)
        v /= np.linalg.norm(v)
        assert abs(witness_expectation(v, wit).w - np.vdot(v, dense @ v).real) < 1e-11
    # maximally mixed state both ways
    rho = np.eye(256) / 256.0
    assert abs(witness_expectation(rho, wit).w - np.trace(dense).real / 256.0) < 1e-12


def test_decomposition_residual_pure(kitaev22):
    for g in (0.0, 0.5):
        state = stabilizer_ground_state(kitaev22) if g == 0 else ground_state_at(kitaev22, g).vector
        for kind in ("X", "Z"):
            wit = build_witness(kitaev22, LoopSpec(kind, "h"))
            setup = canonical_setup(kitaev22, LoopSpec(kind, "h"))
            assert verify_decomposition(state, wit, setup) < 1e-9


def test_decomposition_residual_mixed(kitaev22):
    a = ground_state_at(kitaev22, 0.3).vector
    b = ground_state_at(kitaev22, 1.1).vector
    rho = 0.6 * np.outer(a, a.conj()) + 0.4 * np.outer(b, b.conj())
    wit = build_witness(kitaev22, LoopSpec("X", "h"))
    setup = canonical_setup(kitaev22, LoopSpec("X", "h"))
    assert verify_decomposition(rho, wit, setup) < 1e-9


def test_witness_bound_below_e_prime(kitaev22):
    from topoloc.localize import bound_from_ensemble, measure_ensemble

    for g in (0.1, 0.5, 1.0, 2.0):
        state = ground_state_at(kitaev22, g).vector
        for kind in ("X", "Z"):
            spec = LoopSpec(kind, "h")
            region = Region.from_loop(kitaev22, spec)
            eprime = bound_from_ensemble(
                measure_ensemble(state, region, canonical_setup(kitaev22, spec))).value
            ew = witness_expectation(state, build_witness(kitaev22, spec)).bound
            assert ew <= eprime + 1e-9


def test_star_pt_bound_all_sizes():
    for n in range(2, 7):
        report = verify_star_pt_bound(n)
        assert report["pt_formula_error"] < 1e-12
        assert report["bound_error"] < 1e-9
        assert abs(report["negativity"] - 1.0) < 1e-10
    with pytest.raises(ValueError):
        verify_star_pt_bound(7)


def test_star_pt_indices_n3():
    # |Omega|=3: the conjugation multi-indices are {0, 4, 3, 7}, i.e. identity,
    # Z on the hub digit, Z on both leaf digits, Z on all three
    from topoloc.codes import graph_state_vector
    from topoloc.localize import partial_transpose
    from topoloc.pauli import to_sparse

    m, hub = 3, 2
    adj = np.zeros((3, 3), dtype=bool)
    adj[2, 0] = adj[0, 2] = adj[2, 1] = adj[1, 2] = True
    rho = np.outer(graph_state_vector(3, adj), graph_state_vector(3, adj))

    def z_l(l):
        # l is the decimal of the binary string l_1 l_2 l_3 with l_1 the hub
        qubits = {}
        for digit in range(3):
            if (l >> (2 - digit)) & 1:
                qubits[hub if digit == 0 else (1 - (digit - 1))] = "Z"
        # digit 0 -> hub (local qubit 2); digits 1,2 -> leaves (local 1, 0)
        return to_sparse(PauliString.from_factors(3, qubits)).toarray()

    closed = 0.5 * (z_l(0) @ rho @ z_l(0) + z_l(4) @ rho @ z_l(4)
                    + z_l(3) @ rho @ z_l(3) - z_l(7) @ rho @ z_l(7))
    assert np.abs(closed - partial_transpose(rho, 3, (hub,))).max() < 1e-12
