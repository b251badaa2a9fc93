"""Local witness operators from stabilizer subsets and the witness bound.

A witness for a loop region is W = I/2 - prod_j (I + s_j)/2 with {s_j}
products of plaquette/vertex stabilizers; its expectation w in the full state
yields the bound max(-2w, 0) on the localizable entanglement over the loop,
valid for the hub:rest bipartition of the star graph the construction targets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .codes import CodeLattice, LatticeError, LoopSpec, kitaev_loop_rows
from .localize import MeasurementSetup, OutcomeEnsemble, Region, measure_ensemble
from .pauli import (PauliString, SparseOperator, commutes, multiply_strings,
                    pauli_expectation)


class WitnessConstructionError(ValueError):
    """A §-style membership condition failed for the candidate generator set."""


@dataclass
class WitnessOperator:
    """Region, generator strings, and lazy assembly of the witness operator."""

    region: tuple
    generators: tuple
    n_qubits: int
    _assembled: SparseOperator | None = None

    @property
    def projector_terms(self):
        """(coeff, string) expansion of prod_j (I+s_j)/2 over subset products."""
        m = len(self.generators)
        terms = []
        for r in range(m + 1):
            for subset in itertools.combinations(range(m), r):
                if subset:
                    s = multiply_strings([self.generators[i] for i in subset])
                else:
                    s = PauliString.identity(self.n_qubits)
                terms.append((0.5 ** m, s))
        return terms

    @property
    def assembled(self) -> SparseOperator:
        if self._assembled is None:
            terms = [(-c, s) for c, s in self.projector_terms]
            terms.append((0.5, PauliString.identity(self.n_qubits)))
            self._assembled = SparseOperator(self.n_qubits, tuple(terms), hermitian=True)
        return self._assembled

    def restricted_generator(self, j: int, qubits) -> PauliString:
        return self.generators[j].restrict(qubits)

    def to_json(self) -> dict:
        return {
            "region": [q + 1 for q in self.region],
            "generators": [s.to_text() for s in self.generators],
            "n_qubits": self.n_qubits,
        }


@dataclass(frozen=True)
class WitnessValue:
    w: float
    bound: float


def _local_string(s: PauliString, omega) -> PauliString:
    """Map the omega-restriction of a string onto the local loop register."""
    factors = {}
    for i, q in enumerate(omega):
        axis = s.axis_on(q)
        if axis is not None:
            factors[i] = axis
    return PauliString.from_factors(max(len(omega), 1), factors, s.sign)


def _stabilizer_state_local(generators_local, m: int) -> np.ndarray:
    """State stabilized by m independent local generators, or None if inconsistent."""
    dim = 1 << m
    rho = np.eye(dim, dtype=complex)
    from .pauli import to_sparse

    for s in generators_local:
        mat = to_sparse(s).toarray()
        rho = 0.25 * (np.eye(dim) + mat) @ rho @ (np.eye(dim) + mat.conj().T)
    trace = np.trace(rho).real
    if trace < 1e-12:
        return None
    rho /= trace
    vals, vecs = np.linalg.eigh(rho)
    if vals[-1] < 1.0 - 1e-9:
        return None  # projectors inconsistent or dependent: not a pure state
    return vecs[:, -1]


def validate_witness_conditions(region, generators, n_qubits):
    """Check the two membership conditions; raises with the failing one.

    (a) the parts of the generators outside the loop must pairwise commute
        (and the full strings must commute);
    (b) the loop restrictions must be a complete, independent generator set of
        a genuinely multiparty entangled pure state on the loop.
    """
    omega = tuple(region)
    omega_bar = tuple(q for q in range(n_qubits) if q not in set(omega))
    for i, a in enumerate(generators):
        for b in generators[i + 1:]:
            if not commutes(a, b):
                raise WitnessConstructionError("condition (a): full strings do not commute")
            if not commutes(a.restrict(omega_bar), b.restrict(omega_bar)):
                raise WitnessConstructionError(
                    "condition (a): generator parts outside the loop do not commute"
                )
    m = len(omega)
    if len(generators) != m:
        raise WitnessConstructionError(
            f"condition (b): need {m} generators for a complete set, got {len(generators)}"
        )
    local = [_local_string(s, omega) for s in generators]
    psi = _stabilizer_state_local(local, m)
    if psi is None:
        raise WitnessConstructionError(
            "condition (b): loop restrictions are dependent or inconsistent"
        )
    if m > 1:
        for r in range(1, m // 2 + 1):
            for a_set in itertools.combinations(range(m), r):
                rest = [x for x in range(m) if x not in a_set]
                mat = psi.reshape([2] * m).transpose(
                    [m - 1 - q for q in reversed(a_set)]
                    + [m - 1 - q for q in reversed(rest)]
                ).reshape(1 << r, -1)
                s = np.linalg.svd(mat, compute_uv=False)
                if len(s) < 2 or s[1] < 1e-9:
                    raise WitnessConstructionError(
                        f"condition (b): loop state is a product across split {a_set}"
                    )
    return True


def build_witness(lat: CodeLattice, spec: LoopSpec) -> WitnessOperator:
    """Witness generators for a Kitaev loop: one full line of crossed-type
    partners plus the cumulative-product chain of the stabilizers the loop
    crosses, matching the published sets on the 2x2..5x2 and 3x3 lattices.
    """
    if lat.kind != "kitaev":
        raise LatticeError("witness construction covers the Kitaev code only")
    nph, npv = lat.dims
    rows = kitaev_loop_rows(lat)
    n = lat.n_qubits

    def plaq(r, c):
        return PauliString.from_factors(
            n, {q: "Z" for q in lat.plaquettes[(r % npv) * nph + (c % nph)]}
        )

    def vert(r, c):
        return PauliString.from_factors(
            n, {q: "X" for q in lat.vertices[(r % npv) * nph + (c % nph)]}
        )

    kind, direction = spec.operator_kind, spec.direction
    if direction == "h":
        along = range(nph)
        if kind == "X":
            r0 = rows[("x", "h")]
            first = multiply_strings([vert(r0 + 1, c) for c in along])
            chains = [multiply_strings([plaq(r0, c) for c in range(t, nph)])
                      for t in range(1, nph)]
        else:
            r1 = rows[("z", "h")]
            first = multiply_strings([plaq(r1 - 1, c) for c in along])
            chains = [multiply_strings([vert(r1, c) for c in range(t, nph)])
                      for t in range(1, nph)]
    else:
        along = range(npv)
        if kind == "X":
            c0 = rows[("x", "v")]
            first = multiply_strings([vert(r, c0 + 1) for r in along])
            chains = [multiply_strings([plaq(r, c0) for r in range(t, npv)])
                      for t in range(1, npv)]
        else:
            c1 = rows[("z", "v")]
            first = multiply_strings([plaq(r, c1 - 1) for r in along])
            chains = [multiply_strings([vert(r, c1) for r in range(t, npv)])
                      for t in range(1, npv)]

    generators = tuple([first] + chains)
    region = lat.loop_support(spec)
    validate_witness_conditions(region, generators, n)
    return WitnessOperator(region=tuple(region), generators=generators, n_qubits=n)


def witness_expectation(state, witness: WitnessOperator) -> WitnessValue:
    """w = Tr[W rho] evaluated term by term (matrix-free), and max(-2w, 0)."""
    import scipy.sparse as sp

    if sp.issparse(state):
        state = state.toarray()
    state = np.asarray(state)
    acc = 0.0
    for coeff, s in witness.projector_terms:
        acc += coeff * pauli_expectation(s, state).real
    w = 0.5 - acc
    return WitnessValue(w=w, bound=max(-2.0 * w, 0.0))


def _outcome_signs(witness: WitnessOperator, setup: MeasurementSetup, region: Region):
    """Per-generator outcome-sign masks: eta_j(k) = prod over the generator's
    complement support of the measured eigenvalues, read off symbolically.

    Requires every complement factor of every generator to match the measured
    axis on that qubit; anything else makes eta ill-defined.
    """
    axis_map = setup.axis_map
    mbar = region.omega_bar
    pos = {q: j for j, q in enumerate(mbar)}
    masks = []
    for s in witness.generators:
        mask = 0
        for q in mbar:
            axis = s.axis_on(q)
            if axis is None:
                continue
            if axis_map[q] != axis:
                raise WitnessConstructionError(
                    f"generator factor {axis} on qubit {q + 1} is not the measured axis"
                )
            mask |= 1 << pos[q]
        masks.append(mask)
    return masks


def verify_decomposition(state, witness: WitnessOperator, setup: MeasurementSetup) -> float:
    """Residual |w - sum_k p_k w_k| of the projective decomposition of W.

    w_k is the expectation of the outcome-signed local witness
    I/2 - prod_j (I + eta_j s_j^Omega)/2 in the post-measured loop state.
    """
    from .pauli import to_sparse

    region = Region(witness.n_qubits, witness.region)
    ens = measure_ensemble(state, region, setup)
    masks = _outcome_signs(witness, setup, region)
    m = len(witness.region)
    dim = 1 << m
    local_mats = [to_sparse(_local_string(s, witness.region)).toarray()
                  for s in witness.generators]

    w_direct = witness_expectation(state, witness).w
    total = 0.0
    for i, k in enumerate(ens.outcomes):
        proj = np.eye(dim, dtype=complex)
        for mask, mat in zip(masks, local_mats):
            eta = -1.0 if bin(int(k) & mask).count("1") % 2 else 1.0
            proj = proj @ (np.eye(dim) + eta * mat) / 2.0
        wk = 0.5 - np.trace(proj @ ens.density(i)).real
        total += ens.probs[i] * wk
    return abs(w_direct - total)


# ---------------------------------------------------------------------------
# star-graph partial-transpose regression (the witness-bound derivation)
# ---------------------------------------------------------------------------

class DerivationError(AssertionError):
    """A step of the witness lower-bound derivation failed numerically."""


def verify_star_pt_bound(n_omega: int) -> dict:
    """Check the closed-form star-graph partial transpose and the bound map.

    Builds the n-node star graph state with the hub as subsystem A and checks:
    (i) the four-term Z-conjugation formula against direct partial
    transposition, (ii) that D = -f (W')^{T_A} + h I at (f, h) = (2, 1) has
    unit operator norm, the advertised singular values, and attains -2w as the
    bound for w < 0 (0 for w >= 0), (iii) the star state's hub:rest
    negativity is 1.
    """
    from .codes import graph_state_vector
    from .localize import negativity, partial_transpose
    from .pauli import to_sparse

    if not 2 <= n_omega <= 6:
        raise ValueError("n_omega must be between 2 and 6")
    m = n_omega
    hub = m - 1  # local MSB plays the leading multi-index digit
    adj = np.zeros((m, m), dtype=bool)
    for leaf in range(m - 1):
        adj[hub, leaf] = adj[leaf, hub] = True
    psi = graph_state_vector(m, adj)
    rho = np.outer(psi, psi)
    dim = 1 << m

    def z_conj(mask_qubits):
        s = PauliString.from_factors(m, {q: "Z" for q in mask_qubits})
        mat = to_sparse(s).toarray()
        return mat @ rho @ mat

    leaves = list(range(m - 1))
    closed = 0.5 * (z_conj([]) + z_conj([hub]) + z_conj(leaves) + -1.0 * z_conj(leaves + [hub]))
    direct = partial_transpose(rho, m, (hub,))
    formula_err = float(abs(closed - direct).max())
    if formula_err > 1e-12:
        raise DerivationError(f"closed-form partial transpose off by {formula_err:.2e}")

    w_pt = 0.5 * np.eye(dim) - direct  # (W')^{T_A} for W' = I/2 - rho
    f_opt, h_opt = 2.0, 1.0
    d_mat = -f_opt * w_pt + h_opt * np.eye(dim)
    svals = np.linalg.svd(d_mat, compute_uv=False)
    expected = {abs(h_opt), abs(h_opt - f_opt), abs(h_opt - f_opt / 2.0)}
    sval_err = float(max(min(abs(s - e) for e in expected) for s in svals))
    norm_err = abs(svals.max() - 1.0)
    if sval_err > 1e-10 or norm_err > 1e-10:
        raise DerivationError("singular values of D deviate from {|h|, |h-f|, |h-f/2|}")

    # bound attainment over a feasible (f, h) grid, for sample w of both signs;
    # for the star state D's singular values are exactly the three candidates,
    # so the feasibility test ||D|| <= 1 is closed-form
    grid = np.linspace(-3.0, 3.0, 121)
    feasible = []
    for f in grid:
        for h in grid:
            if max(abs(h), abs(h - f), abs(h - f / 2.0)) <= 1.0 + 1e-12:
                feasible.append((f, h))
    bound_err = 0.0
    for w in (-0.5, -0.2, 0.1, 0.0):
        best = max(-f * w + h - 1.0 for f, h in feasible)
        target = -2.0 * w if w < 0 else 0.0
        bound_err = max(bound_err, abs(best - target))
    if bound_err > 1e-9:
        raise DerivationError(f"optimal (f, h) bound off by {bound_err:.2e}")

    neg = negativity(rho, a_positions=(hub,))
    if abs(neg - 1.0) > 1e-10:
        raise DerivationError(f"star-state hub:rest negativity {neg} != 1")

    return {
        "n_omega": n_omega,
        "pt_formula_error": formula_err,
        "singular_value_error": sval_err,
        "bound_error": bound_err,
        "negativity": neg,
    }
