"""Field-perturbed code Hamiltonians and ground states across the sweep range.

Units are fixed throughout: J = 1, hbar = 1, so the only parameter is the
dimensionless field g = h/J and all energies are in units of J.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .codes import CodeLattice, stabilizer_generators, stabilizer_ground_state
from .pauli import PauliString, SparseOperator

# explicit sparse assembly below this size, matrix-free gather kernel at or above
MATRIX_FREE_THRESHOLD = 16

GAP_TOLERANCE = 1e-10
RESIDUAL_TOLERANCE = 1e-8


class SolverError(RuntimeError):
    """Eigensolver did not reach the requested residual."""


class NearDegeneracyError(RuntimeError):
    """Gap at g > 0 below tolerance; the 'unique ground state' contract fails."""


@dataclass(frozen=True)
class FieldParams:
    """Dimensionless parallel-field strength g = h/J."""

    g: float

    def __post_init__(self):
        if self.g < 0:
            raise ValueError("g must be non-negative")


@dataclass
class GroundStateResult:
    energy: float
    vector: np.ndarray
    residual: float
    degenerate: bool
    gap: float | None = None


def field_axis(lat: CodeLattice) -> str:
    """The parallel field couples to sigma^z on the Kitaev code, sigma^x on the color code."""
    return "Z" if lat.kind == "kitaev" else "X"


def build_hamiltonian(lat: CodeLattice, params: FieldParams) -> SparseOperator:
    """H = -sum(stabilizers) - g * sum_i sigma^(field axis)_i with J = 1."""
    n = lat.n_qubits
    terms = [(-1.0, s) for s in stabilizer_generators(lat)]
    axis = field_axis(lat)
    if params.g != 0.0:
        terms += [
            (-params.g, PauliString.from_factors(n, {q: axis})) for q in range(n)
        ]
    return SparseOperator(n_qubits=n, terms=tuple(terms), hermitian=True)


def _split_terms(h: SparseOperator):
    """Diagonal vector plus pure-X flip masks of the Hamiltonian terms.

    All terms of both models are either diagonal in the computational basis
    (Z-type) or sign-free bit-flip permutations (pure X-type).
    """
    from .pauli import _parity_u32

    n = h.n_qubits
    dim = 1 << n
    idx = np.arange(dim, dtype=np.uint32)
    diag = np.zeros(dim)
    flips = []
    for coeff, s in h.terms:
        if s.x == 0:
            signs = 1.0 - 2.0 * _parity_u32(idx & np.uint32(s.z))
            diag += coeff * s.sign * signs
        elif s.z == 0:
            flips.append((coeff * s.sign, s.x))
        else:
            raise ValueError("mixed XZ term outside the supported model family")
    return idx, diag, flips


def _fused_matvec(h: SparseOperator):
    """Fast full-space matvec: one diagonal multiply plus one gather per X term."""
    idx, diag, flips = _split_terms(h)
    perms = [(c, idx ^ np.uint32(x)) for c, x in flips]

    def matvec(v):
        out = diag * v
        for c, perm in perms:
            out += c * v[perm]
        return out

    return matvec


def kitaev_sector_basis(lat: CodeLattice) -> np.ndarray:
    """Basis indices of the symmetry sector holding the default stabilizer state.

    The two Z-loop operators commute with the Kitaev Hamiltonian at every g and
    are diagonal in the computational basis; the default sector is their joint
    +1 eigenspace (even bit parity on both default Z-loop supports).
    """
    from .pauli import _parity_u32

    m1 = sum(1 << q for q in lat.loop_supports[("z", "h")])
    m2 = sum(1 << q for q in lat.loop_supports[("z", "v")])
    idx = np.arange(1 << lat.n_qubits, dtype=np.uint32)
    keep = (_parity_u32(idx & np.uint32(m1)) == 0) & (_parity_u32(idx & np.uint32(m2)) == 0)
    return np.flatnonzero(keep).astype(np.uint32)


def _sector_matvec(h: SparseOperator, sub: np.ndarray):
    """Matvec restricted to a parity sector (X terms flip an even number of
    loop-support bits, so the sector is exactly invariant)."""
    idx, diag, flips = _split_terms(h)
    lookup = np.empty(len(idx), dtype=np.int64)
    lookup[sub] = np.arange(len(sub))
    diag_sub = diag[sub]
    perms = [(c, lookup[sub ^ np.uint32(x)]) for c, x in flips]

    def matvec(v):
        out = diag_sub * v
        for c, perm in perms:
            out += c * v[perm]
        return out

    return matvec


def ground_state(
    h: SparseOperator,
    params: FieldParams,
    lat: CodeLattice,
    v0: np.ndarray | None = None,
    maxiter: int = 20000,
) -> GroundStateResult:
    """Lowest eigenpair of the perturbed code Hamiltonian.

    At g = 0 the eigensolver is bypassed and the zero-exponent stabilizer
    construction is returned with the degeneracy flag set.  For g > 0 on the
    Kitaev code the solve is restricted to the symmetry sector of the default
    stabilizer state (the Z-loop parities commute with H at every g and are
    diagonal, so the restriction is exact); this pins the sector convention
    and keeps the g -> 0 limit continuous.  The color code is solved in the
    full space seeded with the stabilizer state.
    """
    n = h.n_qubits
    if params.g == 0.0:
        vec = stabilizer_ground_state(lat)
        energy = -2.0 * lat.n_plaquettes
        residual = float(np.linalg.norm(h.matvec(vec) - energy * vec))
        return GroundStateResult(energy, vec, residual, degenerate=True)

    seed = stabilizer_ground_state(lat) if v0 is None else v0
    sub = kitaev_sector_basis(lat) if lat.kind == "kitaev" else None
    if sub is not None:
        op = spla.LinearOperator((len(sub), len(sub)),
                                 matvec=_sector_matvec(h, sub), dtype=np.float64)
        v0_eff = seed[sub]
        norm = np.linalg.norm(v0_eff)
        if norm < 1e-12:
            raise ValueError("seed vector has no weight in the default sector")
        v0_eff = v0_eff / norm
    elif n >= MATRIX_FREE_THRESHOLD:
        op = spla.LinearOperator((h.dimension, h.dimension),
                                 matvec=_fused_matvec(h), dtype=np.float64)
        v0_eff = seed
    else:
        op = h.to_csr()
        v0_eff = seed
    try:
        vals, vecs = spla.eigsh(op, k=2, which="SA", v0=v0_eff, maxiter=maxiter,
                                tol=1e-11)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"eigsh did not converge at g={params.g}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    energy = float(vals[0])
    small = np.ascontiguousarray(vecs[:, 0])
    small = small / np.linalg.norm(small)
    if sub is not None:
        vec = np.zeros(h.dimension)
        vec[sub] = small
    else:
        vec = small
    if np.vdot(seed, vec).real < 0:
        vec = -vec
    gap = float(vals[1] - vals[0])
    if gap < GAP_TOLERANCE:
        raise NearDegeneracyError(
            f"gap {gap:.3e} below {GAP_TOLERANCE} at g={params.g}; ground state not unique"
        )
    residual = float(np.linalg.norm(h.matvec(vec) - energy * vec))
    if residual > RESIDUAL_TOLERANCE:
        raise SolverError(
            f"residual {residual:.3e} above {RESIDUAL_TOLERANCE} at g={params.g}"
        )
    return GroundStateResult(energy, vec, residual, degenerate=False, gap=gap)


def ground_state_at(lat: CodeLattice, g: float, v0=None) -> GroundStateResult:
    """Convenience wrapper: build H and solve at one field value."""
    params = FieldParams(g)
    return ground_state(build_hamiltonian(lat, params), params, lat, v0=v0)
