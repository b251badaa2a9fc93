"""Single-qubit dephasing dynamics with a time-dependent rate, and collapse times.

The master equation is drho/dt = -i[H, rho] + gamma(t) sum_i (Z_i rho Z_i - rho)
in dimensionless units (t -> J t / hbar), integrated with fixed-step RK4.
The dephasing superoperator is a Hadamard product: sum_i Z_i rho Z_i - N rho
multiplies entry (a, b) by -2 * hamming(a XOR b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gamma as euler_gamma

from .pauli import SparseOperator

DENSITY_QUBIT_CAP = 12
MARKOVIAN_BOUNDARY = 2.0  # zero-temperature Ohmicity above which gamma(t) turns negative

try:
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


@_njit(cache=True, fastmath=False)
def _rhs_kernel(indptr, indices, data, damp, r, g, a, out):
    dim = r.shape[0]
    for i in range(dim):
        for j in range(dim):
            a[i, j] = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            c = data[k]
            src = indices[k]
            for j in range(dim):
                a[i, j] += c * r[src, j]
    for i in range(dim):
        for j in range(dim):
            out[i, j] = -1j * (a[i, j] - np.conj(a[j, i])) + g * damp[i, j] * r[i, j]


@_njit(cache=True, fastmath=False)
def _rk4_chunk(indptr, indices, data, damp, rho, g0, gh, g1, dt, n_steps):
    dim = rho.shape[0]
    a = np.empty_like(rho)
    k = np.empty_like(rho)
    y = np.empty_like(rho)
    acc = np.empty_like(rho)
    for step in range(n_steps):
        _rhs_kernel(indptr, indices, data, damp, rho, g0[step], a, k)
        for i in range(dim):
            for j in range(dim):
                acc[i, j] = k[i, j]
                y[i, j] = rho[i, j] + 0.5 * dt * k[i, j]
        _rhs_kernel(indptr, indices, data, damp, y, gh[step], a, k)
        for i in range(dim):
            for j in range(dim):
                acc[i, j] += 2.0 * k[i, j]
                y[i, j] = rho[i, j] + 0.5 * dt * k[i, j]
        _rhs_kernel(indptr, indices, data, damp, y, gh[step], a, k)
        for i in range(dim):
            for j in range(dim):
                acc[i, j] += 2.0 * k[i, j]
                y[i, j] = rho[i, j] + dt * k[i, j]
        _rhs_kernel(indptr, indices, data, damp, y, g1[step], a, k)
        for i in range(dim):
            for j in range(dim):
                rho[i, j] += (dt / 6.0) * (acc[i, j] + k[i, j])
    return rho


class IntegrationError(RuntimeError):
    """Positivity or bookkeeping broke down; usually wants a smaller step."""


class CollapseAnalysisError(RuntimeError):
    """The series has no trough / never crosses the requested level."""


@dataclass(frozen=True)
class BathParams:
    """Ohmicity and cutoff of the zero-temperature bosonic dephasing bath."""

    s: float
    omega_c: float = 1.0

    def __post_init__(self):
        if self.s <= 0 or self.omega_c <= 0:
            raise ValueError("need s > 0 and omega_c > 0")


def dephasing_rate(t, bath: BathParams):
    """gamma(t) = w_c [1 + (w_c t)^2]^(-s/2) sin(s arctan(w_c t)) Gamma(s)."""
    wt = bath.omega_c * np.asarray(t, dtype=float)
    val = (bath.omega_c * (1.0 + wt**2) ** (-bath.s / 2.0)
           * np.sin(bath.s * np.arctan(wt)) * euler_gamma(bath.s))
    return val if np.ndim(t) else float(val)


@dataclass
class EctResult:
    """Entanglement collapse time and its reference level."""

    tau: float
    e_c: float
    kind: str  # 'non_markovian_trough' or 'markovian_crossing'


@dataclass
class Trajectory:
    """Recorded times, scalar diagnostics, observables, optional sparse states."""

    times: np.ndarray
    observables: dict
    trace_drift: np.ndarray
    herm_defect: np.ndarray
    purity: np.ndarray
    gamma: np.ndarray
    min_eigs: dict = field(default_factory=dict)  # spot checks {time: lambda_min}
    states: list | None = None
    final_state: np.ndarray | None = None


def density_from_state(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    return np.outer(vec, vec.conj())


def _hamming_table(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.uint32)
    pop = np.zeros(1 << n, dtype=np.int8)
    x = idx.copy()
    while x.any():
        pop += (x & 1).astype(np.int8)
        x >>= 1
    return pop


def evolve(
    rho0: np.ndarray,
    h: SparseOperator,
    bath: BathParams,
    t_end: float,
    dt: float = 1e-3,
    record_every: float = 0.1,
    threshold: float = 1e-8,
    observables: dict | None = None,
    store_states: bool = False,
    rate_override=None,
    positivity_checks: int = 5,
) -> Trajectory:
    """Integrate the dephasing master equation with fixed-step RK4.

    ``observables`` maps names to callables ``f(rho, t)`` evaluated at recorded
    steps.  Recorded states are thresholded in place (entries below
    ``threshold`` zeroed) and optionally stored as sparse matrices.
    ``rate_override`` replaces gamma(t) (e.g. ``lambda t: 0.0`` for unitary
    evolution checks).  Positivity is spot-checked at ``positivity_checks``
    evenly spaced recorded steps.
    """
    n = h.n_qubits
    if n > DENSITY_QUBIT_CAP:
        raise IntegrationError(
            f"density-matrix evolution capped at N={DENSITY_QUBIT_CAP} (got {n})"
        )
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = np.array(rho0, dtype=complex)
    dim = 1 << n
    if rho.shape != (dim, dim):
        raise ValueError("rho0 dimension mismatch")
    hmat = h.to_csr()
    damp = (-2.0 * _hamming_table(n)[np.bitwise_xor.outer(
        np.arange(dim, dtype=np.uint32), np.arange(dim, dtype=np.uint32))]).astype(np.float64)
    rate = (lambda t: dephasing_rate(t, bath)) if rate_override is None else rate_override

    def rhs(t, r):
        # r stays Hermitian along the flow, so r @ H = (H @ r)^dagger
        a = hmat @ r
        out = a - a.conj().T
        out *= -1j
        g = rate(t)
        if g != 0.0:
            out += g * (damp * r)
        return out

    steps_per_record = max(int(round(record_every / dt)), 1)
    n_steps = int(round(t_end / dt))
    n_records = n_steps // steps_per_record + 1
    times, drifts, herms, purs, gams = [], [], [], [], []
    obs_series = {name: [] for name in (observables or {})}
    states = [] if store_states else None
    checks_at = set(np.linspace(0, n_records - 1, positivity_checks).astype(int)) \
        if positivity_checks else set()
    min_eigs = {}

    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    csr_args = (hmat.indptr, hmat.indices, np.ascontiguousarray(hmat.data, dtype=np.float64))

    def advance(r, t0, count):
        ts = t0 + dt * np.arange(count)
        g0 = np.array([rate(x) for x in ts])
        gh = np.array([rate(x + dt / 2) for x in ts])
        g1 = np.array([rate(x + dt) for x in ts])
        if HAVE_NUMBA:
            return _rk4_chunk(*csr_args, damp, r, g0, gh, g1, dt, count)
        for i in range(count):
            k1 = rhs(ts[i], r)
            k2 = rhs(ts[i] + dt / 2, r + (dt / 2) * k1)
            k3 = rhs(ts[i] + dt / 2, r + (dt / 2) * k2)
            k4 = rhs(ts[i] + dt, r + dt * k3)
            r = r + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return r

    for record_count in range(n_records):
        step = record_count * steps_per_record
        t = step * dt
        tr = np.trace(rho).real
        drift = abs(tr - 1.0)
        rho /= tr
        herm = float(abs(rho - rho.conj().T).max())
        rho[np.abs(rho) < threshold] = 0.0
        times.append(t)
        drifts.append(drift)
        herms.append(herm)
        purs.append(float(np.trace(rho @ rho).real))
        gams.append(rate(t))
        for name, fn in (observables or {}).items():
            obs_series[name].append(fn(rho, t))
        if record_count in checks_at:
            lam_min = float(np.linalg.eigvalsh(rho).min())
            min_eigs[t] = lam_min
            if lam_min < -1e-5:
                raise IntegrationError(
                    f"positivity violated (lambda_min={lam_min:.2e} at t={t}); reduce dt"
                )
        if store_states:
            states.append(sp.csr_matrix(rho))
        if record_count == n_records - 1:
            break
        count = min(steps_per_record, n_steps - step)
        rho = advance(rho, t, count)

    return Trajectory(
        times=np.array(times),
        observables={k: np.array(v) for k, v in obs_series.items()},
        trace_drift=np.array(drifts),
        herm_defect=np.array(herms),
        purity=np.array(purs),
        gamma=np.array(gams),
        min_eigs=min_eigs,
        states=states,
        final_state=rho,
    )


def collapse_time(times, values, bath_s: float, reference: float | None = None) -> EctResult:
    """Collapse time of an entanglement series.

    Non-Markovian mode (no reference): the level is the value at the first
    interior local minimum (trough) and tau is the first time the series
    reaches it.  Markovian mode (reference level given): tau is the first
    downward crossing of the level, located by interpolating the bracketing
    samples.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    spacing = np.diff(times).max()
    if spacing > 0.05 + 1e-12:
        raise CollapseAnalysisError(
            f"grid spacing {spacing:.3f} too coarse to resolve troughs (need <= 0.05)"
        )
    if reference is None:
        trough = None
        for i in range(1, len(values) - 1):
            if values[i] < values[i - 1] - 1e-12 and values[i] <= values[i + 1] + 1e-12:
                trough = i
                break
        if trough is None:
            raise CollapseAnalysisError("series has no trough (monotone or flat)")
        e_c = float(values[trough])
        reach = np.flatnonzero(values[: trough + 1] <= e_c + 1e-12)[0]
        return EctResult(tau=float(times[reach]), e_c=e_c, kind="non_markovian_trough")
    below = np.flatnonzero(values <= reference)
    if len(below) == 0 or below[0] == 0:
        raise CollapseAnalysisError(
            f"series never crosses the level {reference} from above"
        )
    j = below[0]
    t0, t1 = times[j - 1], times[j]
    v0, v1 = values[j - 1], values[j]
    tau = t0 if v0 == v1 else t0 + (v0 - reference) * (t1 - t0) / (v0 - v1)
    return EctResult(tau=float(tau), e_c=float(reference), kind="markovian_crossing")
