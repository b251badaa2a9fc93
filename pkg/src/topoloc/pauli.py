"""Pauli-string algebra and sparse/matrix-free operators on N-qubit registers.

Bit convention (fixed throughout the package): qubit ``q`` is bit ``q`` of the
computational-basis index, i.e. basis state ``|b_0 b_1 ... b_{N-1}>`` has index
``sum_q b_q * 2**q`` (little-endian).  ``X`` on qubit 0 maps ``|00...0>`` to the
basis state with index 1.  Bit value 0 is the +1 eigenstate of ``sigma^z``.

Pauli strings are stored as X/Z bitmasks plus a sign in {+1, -1}; a qubit with
both the X and the Z bit set carries ``sigma^y``.  Phases arising from products
are tracked exactly over {1, i, -1, -i}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

AXES = ("X", "Y", "Z")

# maximum register size for explicit matrix assembly (2^20 x 2^20)
MAX_DENSE_QUBITS = 20

# i^k lookup with exact components
_PHASES = (1 + 0j, 1j, -1 + 0j, -1j)

# single-qubit products: (a, b) -> (c, k) meaning sigma^a sigma^b = i^k sigma^c,
# with axes encoded as (x bit, z bit) and 'I' as (0, 0)
_MUL = {}
for _a, (_ax, _az) in (("I", (0, 0)), ("X", (1, 0)), ("Y", (1, 1)), ("Z", (0, 1))):
    for _b, (_bx, _bz) in (("I", (0, 0)), ("X", (1, 0)), ("Y", (1, 1)), ("Z", (0, 1))):
        _cx, _cz = _ax ^ _bx, _az ^ _bz
        if _a == "I" or _b == "I" or _a == _b:
            _k = 0
        else:
            # XY=iZ, YZ=iX, ZX=iY (cyclic); reversed order picks up i^3
            _k = 1 if (_a, _b) in (("X", "Y"), ("Y", "Z"), ("Z", "X")) else 3
        _MUL[(_ax, _az, _bx, _bz)] = (_cx, _cz, _k)


class QubitCountError(ValueError):
    """Raised when two strings or a string and a state disagree on N."""


class DimensionError(ValueError):
    """Raised when an explicit matrix would exceed the configured maximum."""


def _parity_u32(arr: np.ndarray) -> np.ndarray:
    """Bit parity of each entry of a non-negative integer array (N <= 32 bits)."""
    x = arr.astype(np.uint32, copy=True)
    x ^= x >> np.uint32(16)
    x ^= x >> np.uint32(8)
    x ^= x >> np.uint32(4)
    x ^= x >> np.uint32(2)
    x ^= x >> np.uint32(1)
    return (x & np.uint32(1)).astype(np.int8)


@dataclass(frozen=True)
class PauliString:
    """Signed tensor product of single-qubit Pauli factors (identity elsewhere)."""

    n_qubits: int
    x: int = 0
    z: int = 0
    sign: int = 1

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if (self.x | self.z) >> self.n_qubits:
            raise ValueError("factor outside qubit range")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @classmethod
    def from_factors(cls, n_qubits, factors, sign=1):
        """Build from a {qubit: axis} map, e.g. ``{0: 'X', 3: 'Z'}``."""
        x = z = 0
        for q, axis in factors.items():
            if not 0 <= q < n_qubits:
                raise ValueError(f"qubit {q} outside register of {n_qubits}")
            if axis in ("X", "Y"):
                x |= 1 << q
            if axis in ("Z", "Y"):
                z |= 1 << q
            if axis not in AXES:
                raise ValueError(f"unknown axis {axis!r}")
        return cls(n_qubits, x, z, sign)

    @classmethod
    def identity(cls, n_qubits):
        return cls(n_qubits)

    @property
    def factors(self) -> dict:
        """{qubit: axis} map of the non-identity factors."""
        out = {}
        for q in range(self.n_qubits):
            bx, bz = (self.x >> q) & 1, (self.z >> q) & 1
            if bx or bz:
                out[q] = "Y" if (bx and bz) else ("X" if bx else "Z")
        return out

    @property
    def support(self) -> tuple:
        return tuple(sorted(self.factors))

    @property
    def weight(self) -> int:
        return (self.x | self.z).bit_count()

    @property
    def n_y(self) -> int:
        return (self.x & self.z).bit_count()

    def axis_on(self, q):
        bx, bz = (self.x >> q) & 1, (self.z >> q) & 1
        if not (bx or bz):
            return None
        return "Y" if (bx and bz) else ("X" if bx else "Z")

    def restrict(self, qubits) -> "PauliString":
        """Same-width string keeping only the factors on ``qubits``."""
        mask = 0
        for q in qubits:
            mask |= 1 << q
        return PauliString(self.n_qubits, self.x & mask, self.z & mask, self.sign)

    def negate(self) -> "PauliString":
        return PauliString(self.n_qubits, self.x, self.z, -self.sign)

    def to_text(self) -> str:
        """Text form with 1-based qubit labels, e.g. ``+X1 Z4 Z7``; identity is ``+I``."""
        head = "+" if self.sign > 0 else "-"
        parts = [f"{axis}{q + 1}" for q, axis in sorted(self.factors.items())]
        return head + (" ".join(parts) if parts else "I")

    @classmethod
    def from_text(cls, text, n_qubits) -> "PauliString":
        """Parse the :meth:`to_text` format (1-based labels)."""
        text = text.strip()
        sign = 1
        if text[0] in "+-":
            sign = 1 if text[0] == "+" else -1
            text = text[1:].strip()
        factors = {}
        if text and text != "I":
            for token in text.split():
                axis, label = token[0].upper(), int(token[1:])
                factors[label - 1] = axis
        return cls.from_factors(n_qubits, factors, sign)

    def __str__(self):
        return self.to_text()


def pauli_product(a: PauliString, b: PauliString):
    """Multiply two Pauli strings.

    Returns ``(c, phase)`` with ``a * b == phase * c`` where ``c`` carries sign
    +1 and ``phase`` is one of the exact complex values 1, i, -1, -i.
    """
    if a.n_qubits != b.n_qubits:
        raise QubitCountError(f"qubit counts differ: {a.n_qubits} vs {b.n_qubits}")
    k = 0 if a.sign * b.sign > 0 else 2
    x, z = a.x ^ b.x, a.z ^ b.z
    common = (a.x | a.z) & (b.x | b.z)
    q = common
    while q:
        low = q & -q
        i = low.bit_length() - 1
        k += _MUL[((a.x >> i) & 1, (a.z >> i) & 1, (b.x >> i) & 1, (b.z >> i) & 1)][2]
        q ^= low
    return PauliString(a.n_qubits, x, z, 1), _PHASES[k % 4]


def multiply_strings(strings):
    """Product of several strings; raises if the accumulated phase is imaginary.

    Intended for products of commuting stabilizer-type operators, where the
    result is again a signed Pauli string.
    """
    strings = list(strings)
    acc = strings[0]
    phase = 1 + 0j
    for s in strings[1:]:
        acc, p = pauli_product(acc, s)
        phase *= p
    if phase.imag != 0:
        raise ValueError("product carries an imaginary phase; not a signed string")
    return acc.negate() if phase.real < 0 else acc


def commutes(a: PauliString, b: PauliString) -> bool:
    """True iff the strings commute (even number of anticommuting sites)."""
    if a.n_qubits != b.n_qubits:
        raise QubitCountError(f"qubit counts differ: {a.n_qubits} vs {b.n_qubits}")
    return ((a.x & b.z).bit_count() + (a.z & b.x).bit_count()) % 2 == 0


def _coeff_array(p: PauliString, indices: np.ndarray) -> np.ndarray:
    """Column coefficients <index^x| P |index> for the given basis indices."""
    zy = p.z  # Z and Y sites both contribute (-1)^bit
    signs = 1.0 - 2.0 * _parity_u32(indices & np.uint32(zy)).astype(np.float64)
    scale = p.sign * _PHASES[p.n_y % 4]
    if scale.imag == 0:
        return signs * scale.real
    return signs * scale


def apply_pauli(p: PauliString, v: np.ndarray) -> np.ndarray:
    """Apply a Pauli string to a state vector without materializing a matrix."""
    dim = 1 << p.n_qubits
    if v.shape != (dim,):
        raise QubitCountError(f"state length {v.shape} incompatible with N={p.n_qubits}")
    idx = np.arange(dim, dtype=np.uint32)
    src = idx ^ np.uint32(p.x)
    return _coeff_array(p, src) * v[src]


def to_sparse(p: PauliString, max_qubits: int = MAX_DENSE_QUBITS) -> sp.csr_matrix:
    """Explicit CSR matrix of a Pauli string (real dtype when #Y is even)."""
    if p.n_qubits > max_qubits:
        raise DimensionError(f"N={p.n_qubits} exceeds assembly limit {max_qubits}")
    dim = 1 << p.n_qubits
    cols = np.arange(dim, dtype=np.int64)
    rows = cols ^ p.x
    data = _coeff_array(p, cols.astype(np.uint32))
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))


def pauli_expectation(p: PauliString, state: np.ndarray) -> complex:
    """<state|P|state> for a vector, or Tr[P rho] for a square array."""
    if state.ndim == 1:
        return complex(np.vdot(state, apply_pauli(p, state)))
    dim = state.shape[0]
    idx = np.arange(dim, dtype=np.uint32)
    src = idx ^ np.uint32(p.x)
    # Tr[P rho] = sum_i P[i, i^x] rho[i^x, i]
    return complex(np.sum(_coeff_array(p, src) * np.asarray(state[src, idx]).ravel()))


def apply_single_qubit(u: np.ndarray, q: int, v: np.ndarray) -> np.ndarray:
    """Apply a 2x2 matrix to qubit ``q`` of a state vector."""
    n = v.shape[0]
    m = v.reshape(-1, 2, 1 << q)
    return np.matmul(u, m).reshape(n)


def conjugate_single_qubit(u: np.ndarray, q: int, rho: np.ndarray) -> np.ndarray:
    """``(u on qubit q) rho (u^dagger on qubit q)`` for a density matrix."""
    n = rho.shape[0]
    block = 1 << q
    m = rho.reshape(-1, 2, block * n)
    m = np.matmul(u, m).reshape(n, n)
    m = m.reshape(n, -1, 2, block)
    m = np.einsum("ij,abjc->abic", u.conj(), m)
    return m.reshape(n, n)


@dataclass
class SparseOperator:
    """Real-coefficient combination of Pauli strings with lazy matrix assembly.

    Acts matrix-free through :meth:`matvec`; :meth:`to_csr` materializes the
    2^N x 2^N sparse matrix for operators that are reused many times.
    """

    n_qubits: int
    terms: tuple  # ((coeff, PauliString), ...)
    hermitian: bool = True
    _csr: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for coeff, s in self.terms:
            if s.n_qubits != self.n_qubits:
                raise QubitCountError("term width mismatch")
            if self.hermitian and abs(complex(coeff).imag) > 1e-12:
                raise ValueError("hermitian operator requires real coefficients")

    @property
    def dimension(self) -> int:
        return 1 << self.n_qubits

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v, dtype=np.result_type(v.dtype, np.float64))
        for coeff, s in self.terms:
            out += coeff * apply_pauli(s, v)
        return out

    def to_csr(self) -> sp.csr_matrix:
        if self._csr is None:
            dim = self.dimension
            acc = sp.csr_matrix((dim, dim))
            for coeff, s in self.terms:
                acc = acc + coeff * to_sparse(s)
            acc.sum_duplicates()
            if self.hermitian:
                defect = abs(acc - acc.conjugate().T).max()
                if defect > 1e-12:
                    raise ValueError(f"hermitian flag violated: defect {defect:.2e}")
            self._csr = acc
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def expectation(self, state: np.ndarray) -> float:
        val = sum(coeff * pauli_expectation(s, state) for coeff, s in self.terms)
        return val.real if self.hermitian else val
