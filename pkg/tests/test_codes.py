import json

import numpy as np
import pytest

from topoloc.codes import (CodeLattice, LatticeError, LoopSpec, build_color,
                           build_kitaev, graph_equivalent, graph_generators,
                           graph_state_vector, group_sign, hadamard_conjugate,
                           lattice_description, loop_operator,
                           stabilizer_generators, stabilizer_ground_state,
                           state_stabilizer_generators)
from topoloc.pauli import apply_pauli, apply_single_qubit, commutes, pauli_product

KITAEV_SPECS = [LoopSpec("X", "h"), LoopSpec("Z", "h"), LoopSpec("X", "v"), LoopSpec("Z", "v")]

H2 = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


def expectation(p, v):
    return np.vdot(v, apply_pauli(p, v)).real


def test_kitaev_counts():
    for nph, npv in [(2, 2), (3, 2), (2, 3), (4, 2), (3, 3)]:
        lat = build_kitaev(nph, npv)
        assert lat.n_qubits == 2 * nph * npv
        assert len(lat.plaquettes) == len(lat.vertices) == nph * npv
        memb_p = np.zeros(lat.n_qubits, dtype=int)
        memb_v = np.zeros(lat.n_qubits, dtype=int)
        for p in lat.plaquettes:
            memb_p[list(p)] += 1
        for v in lat.vertices:
            memb_v[list(v)] += 1
        assert (memb_p == 2).all() and (memb_v == 2).all()


def test_kitaev_paper_lattice_is_18_qubits():
    lat = build_kitaev(3, 3)
    assert lat.n_qubits == 18 and lat.n_plaquettes == 9


def test_kitaev_small_dims_rejected():
    with pytest.raises(LatticeError):
        build_kitaev(1, 3)


def test_loop_supports_match_published_labels(kitaev33, kitaev22):
    def labels(lat, spec):
        return [q + 1 for q in lat.loop_support(spec)]

    assert labels(kitaev33, LoopSpec("X", "h")) == [10, 11, 12]
    assert labels(kitaev33, LoopSpec("Z", "h")) == [13, 14, 15]
    assert labels(kitaev33, LoopSpec("Z", "v")) == [6, 12, 18]
    assert labels(kitaev22, LoopSpec("Z", "v")) == [4, 8]
    assert labels(kitaev22, LoopSpec("X", "h")) == [3, 4]


def test_stabilizers_commute_and_loops_commute():
    for lat in (build_kitaev(2, 2), build_kitaev(3, 2), build_kitaev(3, 3)):
        gens = stabilizer_generators(lat)
        assert all(commutes(a, b) for i, a in enumerate(gens) for b in gens[i + 1:])
        for spec in KITAEV_SPECS:
            loop = loop_operator(lat, spec)
            assert all(commutes(loop, g) for g in gens)


def test_plaquette_weights():
    assert all(len(p) == 4 for p in build_kitaev(3, 2).plaquettes)
    assert all(len(p) == 6 for p in build_color(3, 2).plaquettes)


def test_crossing_loops_share_one_qubit_and_anticommute(kitaev33):
    lx = loop_operator(kitaev33, LoopSpec("X", "h"))
    lz = loop_operator(kitaev33, LoopSpec("Z", "v"))
    assert len(set(lx.support) & set(lz.support)) == 1
    assert not commutes(lx, lz)
    # squared loops are the identity with +1 phase
    sq, phase = pauli_product(lx, lx)
    assert sq.weight == 0 and phase == 1


def test_loop_even_overlap_with_opposite_type_stabilizers():
    # an X loop must cross every Z-type stabilizer an even number of times
    # (and vice versa); same-type overlaps commute regardless
    for lat in (build_kitaev(3, 3), build_color(3, 2)):
        for key, support in lat.loop_supports.items():
            sup = set(support)
            kinds = [key[0].upper()] if lat.kind == "kitaev" else ["X", "Z"]
            for kind in kinds:
                opposite = (lat.plaquettes if kind == "X"
                            else (lat.vertices if lat.kind == "kitaev" else lat.plaquettes))
                for stab in opposite:
                    assert len(sup & set(stab)) % 2 == 0, (key, kind)


def test_color_lattice_structure():
    lat = build_color(3, 2)
    assert lat.n_qubits == 12 and lat.n_plaquettes == 6
    per_qubit = {q: [] for q in range(12)}
    for plq, col in zip(lat.plaquettes, lat.plaquette_colors):
        for q in plq:
            per_qubit[q].append(col)
    assert all(sorted(cols) == ["b", "g", "r"] for cols in per_qubit.values())
    # adjacent plaquettes (sharing an edge) carry distinct colors
    for i, a in enumerate(lat.plaquettes):
        for j, b in enumerate(lat.plaquettes):
            if i < j and len(set(a) & set(b)) >= 2:
                assert lat.plaquette_colors[i] != lat.plaquette_colors[j]


def test_color_bad_dims_rejected():
    with pytest.raises(LatticeError):
        build_color(4, 2)
    with pytest.raises(LatticeError):
        build_color(3, 3)


def test_color_loops_commute_with_stabilizers():
    lat = build_color(3, 2)
    gens = stabilizer_generators(lat)
    for d in ("h", "v"):
        for c in ("r", "g", "b"):
            for k in ("X", "Z"):
                loop = loop_operator(lat, LoopSpec(k, d, c))
                assert all(commutes(loop, g) for g in gens)


def test_loop_spec_validation():
    lat = build_kitaev(2, 2)
    with pytest.raises(LatticeError):
        lat.loop_support(LoopSpec("X", "h", "r"))
    with pytest.raises(LatticeError):
        build_color(3, 2).loop_support(LoopSpec("X", "h"))


def test_ground_state_stabilizer_expectations():
    for lat in (build_kitaev(2, 2), build_kitaev(3, 2), build_kitaev(3, 3),
                build_color(3, 2)):
        psi = stabilizer_ground_state(lat)
        assert abs(np.linalg.norm(psi) - 1.0) < 1e-12
        for gen in stabilizer_generators(lat):
            assert abs(expectation(gen, psi) - 1.0) < 1e-10


def test_ground_state_energy_2x2(kitaev22):
    from topoloc.spectrum import FieldParams, build_hamiltonian

    psi = stabilizer_ground_state(kitaev22)
    h = build_hamiltonian(kitaev22, FieldParams(0.0))
    assert abs(h.expectation(psi) + 8.0) < 1e-12


def test_sector_states_orthogonal(kitaev22):
    states = [stabilizer_ground_state(kitaev22, (a, b))
              for a in (0, 1) for b in (0, 1)]
    gram = np.array([[abs(np.vdot(u, v)) for v in states] for u in states])
    assert np.allclose(gram, np.eye(4), atol=1e-12)


def test_color_sector_states_orthogonal():
    lat = build_color(3, 2)
    states = [stabilizer_ground_state(lat, s)
              for s in [(0, 0, 0, 0), (1, 0, 0, 0), (0, 1, 1, 0), (1, 1, 1, 1)]]
    gram = np.array([[abs(np.vdot(u, v)) for v in states] for u in states])
    assert np.allclose(gram, np.eye(4), atol=1e-12)


# ---------------------------------------------------------------------------
# graph equivalence
# ---------------------------------------------------------------------------

def test_graph_equivalence_published_examples(kitaev22, kitaev33):
    eq = graph_equivalent(kitaev22, LoopSpec("Z", "v"))
    assert [q + 1 for q in eq.omega] == [4, 8]
    assert len(eq.star_edges) == 1  # two nodes joined by one link
    eq3 = graph_equivalent(kitaev33, LoopSpec("Z", "v"))
    assert eq3.hub + 1 == 18
    assert len(eq3.star_edges) == 2  # 3-node star


def test_graph_equivalence_dense_state_match():
    # Hadamards on s_c map the code state onto the certificate's graph state
    for dims, spec in [((2, 2), LoopSpec("Z", "v")), ((2, 2), LoopSpec("X", "h")),
                       ((3, 2), LoopSpec("Z", "h")), ((3, 2), LoopSpec("X", "v"))]:
        lat = build_kitaev(*dims)
        eq = graph_equivalent(lat, spec)
        vec = stabilizer_ground_state(lat).astype(complex)
        for q in eq.s_c:
            vec = apply_single_qubit(H2, q, vec)
        target = graph_state_vector(lat.n_qubits, eq.adjacency)
        assert abs(abs(np.vdot(vec, target)) - 1.0) < 1e-10


def test_graph_generators_have_graph_form_with_plus_sign(kitaev33):
    eq = graph_equivalent(kitaev33, LoopSpec("Z", "v"))
    conj = [hadamard_conjugate(g, eq.s_c)
            for g in state_stabilizer_generators(kitaev33)]
    for k in graph_generators(eq, kitaev33.n_qubits):
        x_factors = [a for a in k.factors.values() if a == "X"]
        assert len(x_factors) == 1
        assert group_sign(k, conj) == 1


def test_graph_equivalence_rejects_color():
    with pytest.raises(LatticeError):
        graph_equivalent(build_color(3, 2), LoopSpec("X", "h", "r"))


def test_lattice_description_roundtrip(kitaev22):
    desc = lattice_description(kitaev22)
    blob = json.dumps(desc)
    back = json.loads(blob)
    assert back["n_qubits"] == 8
    assert len(back["plaquettes"]) == 4 and len(back["vertices"]) == 4
    assert back["loops"]["z/v"] == [3, 7]
    color_desc = lattice_description(build_color(3, 2))
    assert len(color_desc["edges"]) == 18
