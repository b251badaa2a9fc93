"""Measurement setups and the localizable-entanglement bound hierarchy.

Computes, on a region Omega forming a nontrivial loop: negativity of
post-measurement states, the exact localizable entanglement (LE) via
continuous optimization, its Pauli-restricted variant (RLE) via exhaustive
enumeration, the canonical-setup bound E', and the preferred-set
approximation E'' with its worst-case error.

Local register convention: inside a region, qubit ``omega[i]`` maps to bit
``i`` of the reduced index (little-endian), and outcome index bit ``j`` is the
measured value of the j-th smallest qubit of the complement (0 for the +1
projector).  Bipartitions are lists of local positions into ``omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from .codes import CodeLattice, LatticeError, LoopSpec
from .pauli import apply_single_qubit, conjugate_single_qubit

SQ2 = 1.0 / math.sqrt(2.0)
AXIS_ROTATIONS = {
    "Z": np.eye(2, dtype=complex),
    "X": np.array([[SQ2, SQ2], [SQ2, -SQ2]], dtype=complex),
    "Y": np.array([[SQ2, -1j * SQ2], [SQ2, 1j * SQ2]], dtype=complex),
}
# angles (theta, phi) reproducing each Pauli axis in the continuous family
AXIS_ANGLES = {"Z": (0.0, 0.0), "X": (math.pi / 2, 0.0), "Y": (math.pi / 2, math.pi / 2)}

PRUNE_TOL = 1e-14
COMPLETENESS_TOL = 1e-10
DENSITY_QUBIT_CAP = 12


class ExhaustiveLimitError(ValueError):
    """Requested enumeration or optimization exceeds the configured limit."""


class EnsembleError(RuntimeError):
    """Probability bookkeeping of a measurement ensemble failed its budget."""


@dataclass(frozen=True)
class Region:
    """Loop region Omega, its complement, and the seed-measure bipartition."""

    n_qubits: int
    omega: tuple
    a_positions: tuple = (0,)

    def __post_init__(self):
        if len(set(self.omega)) != len(self.omega):
            raise ValueError("omega has repeated qubits")
        if not all(0 <= q < self.n_qubits for q in self.omega):
            raise ValueError("omega outside register")
        if not self.a_positions or len(self.a_positions) >= len(self.omega):
            raise ValueError("bipartition must leave both sides non-empty")
        if not all(0 <= i < len(self.omega) for i in self.a_positions):
            raise ValueError("bipartition positions index into omega")

    @classmethod
    def from_loop(cls, lat: CodeLattice, spec: LoopSpec, a_positions=(0,)) -> "Region":
        return cls(lat.n_qubits, tuple(lat.loop_support(spec)), tuple(a_positions))

    @property
    def omega_bar(self) -> tuple:
        inside = set(self.omega)
        return tuple(q for q in range(self.n_qubits) if q not in inside)

    @property
    def m(self) -> int:
        return len(self.omega)

    def with_bipartition(self, a_positions) -> "Region":
        return Region(self.n_qubits, self.omega, tuple(a_positions))


@dataclass(frozen=True)
class MeasurementSetup:
    """Pauli axis for every qubit outside the region."""

    axes: tuple  # ((qubit, axis), ...) sorted by qubit

    @classmethod
    def from_dict(cls, axes: dict) -> "MeasurementSetup":
        return cls(tuple(sorted((int(q), a) for q, a in axes.items())))

    @property
    def axis_map(self) -> dict:
        return dict(self.axes)

    def validate(self, region: Region):
        qs = tuple(q for q, _ in self.axes)
        if qs != region.omega_bar:
            raise ValueError("setup must cover exactly the complement of omega")
        if any(a not in AXIS_ROTATIONS for _, a in self.axes):
            raise ValueError("axes must be X, Y or Z")

    def to_text(self) -> str:
        """E.g. ``Z:7,8,9; X:rest`` with 1-based labels; majority axis is 'rest'."""
        groups = {}
        for q, a in self.axes:
            groups.setdefault(a, []).append(q + 1)
        rest_axis = max(groups, key=lambda a: len(groups[a]))
        parts = [
            f"{a}:{','.join(str(q) for q in qs)}"
            for a, qs in sorted(groups.items()) if a != rest_axis
        ]
        parts.append(f"{rest_axis}:rest")
        return "; ".join(parts)

    @classmethod
    def from_text(cls, text: str, region: Region) -> "MeasurementSetup":
        explicit = {}
        rest_axis = None
        for chunk in text.split(";"):
            axis, _, labels = chunk.strip().partition(":")
            axis = axis.strip().upper()
            if labels.strip() == "rest":
                rest_axis = axis
            else:
                for tok in labels.split(","):
                    explicit[int(tok) - 1] = axis
        axes = {}
        for q in region.omega_bar:
            if q in explicit:
                axes[q] = explicit[q]
            elif rest_axis is not None:
                axes[q] = rest_axis
            else:
                raise ValueError(f"no axis for qubit {q + 1}")
        return cls.from_dict(axes)


@dataclass(frozen=True)
class PreferredSet:
    """Measurement outcomes retained by the calibrated-threshold approximation."""

    outcomes: tuple
    p_c: float
    calibration_points: tuple

    def __post_init__(self):
        if not self.outcomes:
            raise EnsembleError("preferred set is empty; the setup is broken")
        if self.p_c <= 0:
            raise ValueError("p_c must be positive")

    def epsilon_m(self, n_measured: int) -> float:
        return ((1 << n_measured) - len(self.outcomes)) * self.p_c


@dataclass
class OutcomeEnsemble:
    """Measurement outcomes with probabilities and post-measured region states.

    ``pure_rows`` holds unnormalized state rows (outcome k gives the reduced
    pure state ``pure_rows[k] / sqrt(probs[k])``) when the input was a vector;
    ``mixed_blocks`` holds unnormalized density blocks otherwise.
    """

    region: Region
    setup: MeasurementSetup
    outcomes: np.ndarray
    probs: np.ndarray
    pure_rows: np.ndarray | None = None
    mixed_blocks: np.ndarray | None = None
    restricted: PreferredSet | None = None
    skipped_mass: float = 0.0

    @property
    def kind(self) -> str:
        return "pure" if self.pure_rows is not None else "mixed"

    def density(self, i: int) -> np.ndarray:
        """Normalized post-measured density matrix of entry i."""
        if self.pure_rows is not None:
            v = self.pure_rows[i] / math.sqrt(self.probs[i])
            return np.outer(v, v.conj())
        return self.mixed_blocks[i] / self.probs[i]

    def validate(self, atol=1e-10):
        total = self.probs.sum() + self.skipped_mass
        if self.restricted is None and abs(total - 1.0) > COMPLETENESS_TOL:
            raise EnsembleError(f"probabilities sum to {total}, not 1")
        if self.restricted is not None and total > 1.0 + COMPLETENESS_TOL:
            raise EnsembleError("restricted ensemble exceeds unit mass")
        for i in range(len(self.probs)):
            rho = self.density(i)
            if abs(rho - rho.conj().T).max() > atol:
                raise EnsembleError("post-measured state not Hermitian")
            if abs(np.trace(rho) - 1.0) > atol:
                raise EnsembleError("post-measured state trace != 1")
            if np.linalg.eigvalsh(rho).min() < -atol:
                raise EnsembleError("post-measured state not positive")


@dataclass(frozen=True)
class BoundValue:
    """One entanglement bound: LE, RLE, E_prime, E_double_prime or E_witness."""

    kind: str
    value: float
    epsilon_m: float = 0.0
    setup: MeasurementSetup | None = None

    def __post_init__(self):
        if self.value < -1e-12:
            raise ValueError("bound values are non-negative")


# ---------------------------------------------------------------------------
# negativity
# ---------------------------------------------------------------------------

def partial_transpose(rho: np.ndarray, n_local: int, a_positions) -> np.ndarray:
    """Transpose the subsystem at the given local bit positions."""
    axes = list(range(2 * n_local))
    for a in a_positions:
        row_ax = n_local - 1 - a
        col_ax = 2 * n_local - 1 - a
        axes[row_ax], axes[col_ax] = axes[col_ax], axes[row_ax]
    dim = 1 << n_local
    return rho.reshape([2] * (2 * n_local)).transpose(axes).reshape(dim, dim)


def negativity(rho: np.ndarray, a_positions=(0,), normalized: bool = False) -> float:
    """Negativity ||rho^{T_A}||_1 - 1 of a density matrix over local qubits.

    ``a_positions`` lists the local qubit positions forming side A.  The
    normalized variant divides by d - 1 with d the smaller side's dimension.
    """
    rho = np.asarray(rho)
    if abs(rho - rho.conj().T).max() > 1e-8:
        raise ValueError("density matrix is not Hermitian within 1e-8")
    if abs(np.trace(rho) - 1.0) > 1e-8:
        raise ValueError("density matrix trace differs from 1 beyond 1e-8")
    n_local = rho.shape[0].bit_length() - 1
    lam = np.linalg.eigvalsh(partial_transpose(rho, n_local, a_positions))
    val = float(np.abs(lam).sum() - 1.0)
    if normalized:
        d = min(1 << len(a_positions), 1 << (n_local - len(a_positions)))
        val /= d - 1
    return max(val, 0.0)


def _local_permutation(m: int, a_positions) -> np.ndarray | None:
    """Index map bringing the A positions to the low bits, or None if already there."""
    a = len(a_positions)
    if tuple(a_positions) == tuple(range(a)):
        return None
    order = list(a_positions) + [i for i in range(m) if i not in set(a_positions)]
    chi = np.arange(1 << m)
    src = np.zeros_like(chi)
    for new, old in enumerate(order):
        src |= ((chi >> new) & 1) << old
    return src

def _pure_neg_sum(rows, probs, m, a_positions, normalized):
    """sum_k p_k N(rho_k) for unnormalized pure rows via Schmidt coefficients."""
    perm = _local_permutation(m, a_positions)
    if perm is not None:
        rows = rows[:, perm]
    da = 1 << len(a_positions)
    db = 1 << (m - len(a_positions))
    mats = rows.reshape(-1, db, da)
    if da == 2:
        gram00 = np.einsum("kb,kb->k", mats[:, :, 0].conj(), mats[:, :, 0]).real
        gram11 = np.einsum("kb,kb->k", mats[:, :, 1].conj(), mats[:, :, 1]).real
        cross = np.einsum("kb,kb->k", mats[:, :, 0].conj(), mats[:, :, 1])
        det = np.clip(gram00 * gram11 - np.abs(cross) ** 2, 0.0, None)
        contrib = 2.0 * np.sqrt(det)
    else:
        s = np.linalg.svd(mats, compute_uv=False)
        contrib = s.sum(axis=1) ** 2 - probs
    if normalized:
        contrib = contrib / (min(da, db) - 1)
    return float(contrib.sum())


def _mixed_neg_sum(blocks, probs, m, a_positions, normalized):
    """sum_k p_k N(rho_k) for unnormalized density blocks via batched PT spectra."""
    perm = _local_permutation(m, a_positions)
    if perm is not None:
        blocks = blocks[:, perm][:, :, perm]
    a = len(a_positions)
    da, db = 1 << a, 1 << (m - a)
    four = blocks.reshape(-1, db, da, db, da)
    pt = four.transpose(0, 1, 4, 3, 2).reshape(-1, 1 << m, 1 << m)
    lam = np.linalg.eigvalsh(pt)
    contrib = np.abs(lam).sum(axis=1) - probs
    if normalized:
        contrib = contrib / (min(da, db) - 1)
    return float(np.clip(contrib, 0.0, None).sum())


def _ensemble_neg_sum(ens: OutcomeEnsemble, normalized=False) -> float:
    m = ens.region.m
    a_pos = ens.region.a_positions
    if ens.pure_rows is not None:
        return _pure_neg_sum(ens.pure_rows, ens.probs, m, a_pos, normalized)
    return _mixed_neg_sum(ens.mixed_blocks, ens.probs, m, a_pos, normalized)


# ---------------------------------------------------------------------------
# canonical measurement setup
# ---------------------------------------------------------------------------

def canonical_setup(lat: CodeLattice, spec: LoopSpec) -> MeasurementSetup:
    """The graph-state-preserving Pauli setup read off the lattice geometry.

    Kitaev X loop: qubits off the loop but on the plaquettes the loop crosses
    are measured in Z, everything else in X.  Kitaev Z loop: qubits off the
    loop but on the vertices the loop passes are measured in X, the rest in Z.
    Color X loop: lattice neighbors of the loop in X, the rest in Z.
    """
    support = set(lat.loop_support(spec))
    axes = {}
    if lat.kind == "kitaev":
        crossed_type = lat.plaquettes if spec.operator_kind == "X" else lat.vertices
        near_axis = "Z" if spec.operator_kind == "X" else "X"
        far_axis = "X" if spec.operator_kind == "X" else "Z"
        near = set()
        for stab in crossed_type:
            if support & set(stab):
                near |= set(stab)
        near -= support
        for q in range(lat.n_qubits):
            if q in support:
                continue
            axes[q] = near_axis if q in near else far_axis
        return MeasurementSetup.from_dict(axes)
    if spec.operator_kind != "X":
        raise LatticeError("canonical setup for the color code covers X loops only")
    near = set()
    for q in support:
        near |= set(lat.neighbors(q))
    near -= support
    for q in range(lat.n_qubits):
        if q in support:
            continue
        axes[q] = "X" if q in near else "Z"
    return MeasurementSetup.from_dict(axes)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

def _slice_axes(n: int, region: Region):
    """Transpose order moving measured qubits to the outcome index."""
    mbar = region.omega_bar
    order = [n - 1 - q for q in reversed(mbar)] + [n - 1 - q for q in reversed(region.omega)]
    return order


def _sliced_rows(psi: np.ndarray, region: Region) -> np.ndarray:
    """(2^|complement|, 2^|omega|) amplitude table of a rotated state vector."""
    n = region.n_qubits
    t = psi.reshape([2] * n).transpose(_slice_axes(n, region))
    return np.ascontiguousarray(t).reshape(1 << len(region.omega_bar), 1 << region.m)


def _rotate_vector(psi, setup_axes, matrices=None):
    out = psi
    for q, axis in setup_axes:
        u = AXIS_ROTATIONS[axis] if matrices is None else matrices[q]
        out = apply_single_qubit(u, q, out)
    return out


def ensemble_probabilities(state: np.ndarray, region: Region, setup: MeasurementSetup) -> np.ndarray:
    """Full outcome distribution (length 2^|complement|) of a state vector."""
    setup.validate(region)
    rot = _rotate_vector(state.astype(complex, copy=True), setup.axes)
    rows = _sliced_rows(rot, region)
    return np.einsum("kc,kc->k", rows.conj(), rows).real


def measure_ensemble(
    state,
    region: Region,
    setup: MeasurementSetup,
    restrict: PreferredSet | None = None,
    prune_tol: float = PRUNE_TOL,
) -> OutcomeEnsemble:
    """Measure every complement qubit along its setup axis.

    Parameters
    ----------
    state : vector (2^N,), dense density matrix (2^N, 2^N) or scipy sparse
    region, setup : the loop region and the Pauli axes on its complement
    restrict : optional preferred set; only those outcomes are produced
    prune_tol : full-ensemble outcomes below this probability are dropped
        (their mass is audited against the completeness budget)

    The reduced states are obtained by streaming projective contraction of the
    rotated state (amplitude slicing per outcome); no 2^N x 2^N projector is
    ever formed.
    """
    setup.validate(region)
    if sp.issparse(state):
        state = state.toarray()
    state = np.asarray(state)
    if state.ndim == 1:
        rot = _rotate_vector(state.astype(complex, copy=True), setup.axes)
        rows = _sliced_rows(rot, region)
        probs = np.einsum("kc,kc->k", rows.conj(), rows).real
        if restrict is not None:
            ks = np.asarray(restrict.outcomes, dtype=np.int64)
            ens = OutcomeEnsemble(region, setup, ks, probs[ks], pure_rows=rows[ks],
                                  restricted=restrict,
                                  skipped_mass=float(1.0 - probs[ks].sum()))
            return ens
        total = probs.sum()
        if abs(total - 1.0) > COMPLETENESS_TOL:
            raise EnsembleError(f"outcome probabilities sum to {total:.12f}")
        keep = np.flatnonzero(probs > prune_tol)
        return OutcomeEnsemble(region, setup, keep, probs[keep], pure_rows=rows[keep],
                               skipped_mass=float(1.0 - probs[keep].sum()))

    n = region.n_qubits
    if n > DENSITY_QUBIT_CAP:
        raise ExhaustiveLimitError(
            f"density-matrix ensembles capped at N={DENSITY_QUBIT_CAP}"
        )
    rho = state.astype(complex, copy=True)
    for q, axis in setup.axes:
        if axis != "Z":
            rho = conjugate_single_qubit(AXIS_ROTATIONS[axis], q, rho)
    order = _slice_axes(n, region)
    d = len(region.omega_bar)
    m = region.m
    four = rho.reshape([2] * (2 * n)).transpose(order + [ax + n for ax in order])
    four = np.ascontiguousarray(four).reshape(1 << d, 1 << m, 1 << d, 1 << m)
    if restrict is not None:
        ks = np.asarray(restrict.outcomes, dtype=np.int64)
    else:
        ks = np.arange(1 << d)
    blocks = four[ks, :, ks, :]
    probs = np.einsum("kcc->k", blocks).real
    if restrict is not None:
        return OutcomeEnsemble(region, setup, ks, probs, mixed_blocks=blocks,
                               restricted=restrict,
                               skipped_mass=float(1.0 - probs.sum()))
    total = probs.sum()
    if abs(total - 1.0) > COMPLETENESS_TOL:
        raise EnsembleError(f"outcome probabilities sum to {total:.12f}")
    keep = np.flatnonzero(probs > prune_tol)
    return OutcomeEnsemble(region, setup, keep, probs[keep], mixed_blocks=blocks[keep],
                           skipped_mass=float(1.0 - probs[keep].sum()))


def bound_from_ensemble(ens: OutcomeEnsemble, normalized: bool = False) -> BoundValue:
    """Average negativity over the ensemble: E' for full, E'' for preferred-set."""
    value = _ensemble_neg_sum(ens, normalized)
    if ens.restricted is None:
        return BoundValue("E_prime", value, setup=ens.setup)
    eps = ens.restricted.epsilon_m(len(ens.region.omega_bar))
    return BoundValue("E_double_prime", value, epsilon_m=eps, setup=ens.setup)


def build_preferred_set(
    lat: CodeLattice,
    spec: LoopSpec,
    setup: MeasurementSetup,
    p_c: float = 1e-10,
    calibration_gs=(0.0, 0.2),
) -> PreferredSet:
    """Union of the outcome sets with p_k > p_c over the calibration ground states."""
    from .spectrum import ground_state_at

    if 0.0 not in calibration_gs:
        raise ValueError("calibration list must contain g = 0")
    region = Region.from_loop(lat, spec)
    kept = set()
    for g in calibration_gs:
        probs = ensemble_probabilities(ground_state_at(lat, g).vector, region, setup)
        kept.update(np.flatnonzero(probs > p_c).tolist())
    return PreferredSet(tuple(sorted(kept)), p_c, tuple(calibration_gs))


# ---------------------------------------------------------------------------
# restricted and continuous localizable entanglement
# ---------------------------------------------------------------------------

def _leaf_value(state, region, normalized):
    if state.ndim == 1:
        rows = _sliced_rows(state, region)
        probs = np.einsum("kc,kc->k", rows.conj(), rows).real
        return _pure_neg_sum(rows, probs, region.m, region.a_positions, normalized)
    n = region.n_qubits
    order = _slice_axes(n, region)
    d, m = len(region.omega_bar), region.m
    four = state.reshape([2] * (2 * n)).transpose(order + [ax + n for ax in order])
    four = np.ascontiguousarray(four).reshape(1 << d, 1 << m, 1 << d, 1 << m)
    ks = np.arange(1 << d)
    blocks = four[ks, :, ks, :]
    probs = np.einsum("kcc->k", blocks).real
    keep = probs > PRUNE_TOL
    return _mixed_neg_sum(blocks[keep], probs[keep], m, region.a_positions, normalized)


def _apply_measurement_matrix(state, u, q):
    if state.ndim == 1:
        return apply_single_qubit(u, q, state)
    return conjugate_single_qubit(u, q, state)


def restricted_le(
    state,
    region: Region,
    normalized: bool = False,
    max_measured: int = 12,
    collect: int = 0,
):
    """Maximum of the average negativity over all 3^|complement| Pauli setups.

    Returns a BoundValue carrying the optimizing setup.  With ``collect`` > 0
    also returns the best ``collect`` (value, axes) pairs for optimizer seeding.
    """
    mbar = region.omega_bar
    if len(mbar) > max_measured:
        raise ExhaustiveLimitError(
            f"{len(mbar)} measured qubits exceed the exhaustive limit {max_measured}"
        )
    if sp.issparse(state):
        state = state.toarray()
    state = np.asarray(state).astype(complex)
    results = []

    def dfs(level, current, axes):
        if level == len(mbar):
            results.append((_leaf_value(current, region, normalized), axes))
            return
        q = mbar[level]
        for axis in ("X", "Y", "Z"):
            nxt = current if axis == "Z" else _apply_measurement_matrix(
                current, AXIS_ROTATIONS[axis], q)
            dfs(level + 1, nxt, axes + (axis,))

    dfs(0, state, ())
    results.sort(key=lambda t: -t[0])
    best_val, best_axes = results[0]
    setup = MeasurementSetup.from_dict(dict(zip(mbar, best_axes)))
    bound = BoundValue("RLE", best_val, setup=setup)
    if collect:
        return bound, results[:collect]
    return bound


@dataclass
class LEConfig:
    """Multi-start settings of the continuous LE optimizer."""

    top_pauli: int = 16
    n_random: int = 64
    maxiter: int = 4000
    fatol: float = 1e-10
    xatol: float = 1e-6
    seed: int = 0
    max_measured: int = 10


def _angle_rotations(params):
    theta = params[0::2]
    phi = params[1::2]
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    e = np.exp(-1j * phi)
    mats = np.empty((len(theta), 2, 2), dtype=complex)
    mats[:, 0, 0] = c
    mats[:, 0, 1] = s * e
    mats[:, 1, 0] = -s * np.conj(e)
    mats[:, 1, 1] = c
    return mats


def localizable_entanglement(
    state,
    region: Region,
    config: LEConfig | None = None,
    normalized: bool = False,
) -> BoundValue:
    """Best found average negativity over per-qubit projective measurements.

    Derivative-free local search (Nelder-Mead on two angles per measured
    qubit), started from the best Pauli setups and random points; the result
    is max(RLE, refined starts) and is a certified lower bound on the true LE.
    """
    config = config or LEConfig()
    mbar = region.omega_bar
    if len(mbar) > config.max_measured:
        raise ExhaustiveLimitError(
            f"{len(mbar)} measured qubits exceed the optimizer limit {config.max_measured}"
        )
    if sp.issparse(state):
        state = state.toarray()
    state = np.asarray(state).astype(complex)
    rle, seeds = restricted_le(state, region, normalized=normalized,
                               max_measured=config.max_measured,
                               collect=max(config.top_pauli, 1))

    def objective(params):
        mats = _angle_rotations(np.asarray(params))
        current = state
        for (q, u) in zip(mbar, mats):
            current = _apply_measurement_matrix(current, u, q)
        return -_leaf_value(current, region, normalized)

    starts = []
    for _, axes in seeds[: config.top_pauli]:
        starts.append(np.array([v for a in axes for v in AXIS_ANGLES[a]]))
    rng = np.random.default_rng(config.seed)
    for _ in range(config.n_random):
        theta = rng.uniform(0.0, math.pi, len(mbar))
        phi = rng.uniform(0.0, 2.0 * math.pi, len(mbar))
        starts.append(np.column_stack([theta, phi]).ravel())

    best = rle.value
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"maxiter": config.maxiter, "fatol": config.fatol,
                                "xatol": config.xatol, "adaptive": True})
        if -res.fun > best:
            best = -res.fun
    return BoundValue("LE", best)
