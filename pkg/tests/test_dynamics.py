import numpy as np
import pytest

from topoloc.codes import build_kitaev
from topoloc.dynamics import (BathParams, CollapseAnalysisError, IntegrationError,
                              collapse_time, dephasing_rate, density_from_state,
                              evolve)
from topoloc.pauli import PauliString, SparseOperator
from topoloc.spectrum import FieldParams, build_hamiltonian, ground_state_at


def test_bath_validation():
    with pytest.raises(ValueError):
        BathParams(0.0)
    with pytest.raises(ValueError):
        BathParams(1.0, omega_c=-1.0)


def test_rate_zero_at_origin_and_ohmic_closed_form():
    for s in (0.5, 1.0, 2.0, 3.0):
        assert dephasing_rate(0.0, BathParams(s)) == 0.0
    b = BathParams(1.0)
    ts = np.linspace(0.01, 20, 200)
    assert np.allclose(dephasing_rate(ts, b), ts / (1 + ts**2), atol=1e-14)
    assert abs(dephasing_rate(1.0, b) - 0.5) < 1e-15


def test_rate_sign_law():
    ts = np.linspace(0.0, 100.0, 4000)
    for s in (0.5, 1.0, 2.0):
        assert dephasing_rate(ts, BathParams(s)).min() >= -1e-15
    for s in (2.5, 3.0, 4.0):
        assert dephasing_rate(ts, BathParams(s)).min() < -1e-6


def test_single_qubit_pure_dephasing_closed_form():
    h0 = SparseOperator(1, ((0.0, PauliString.identity(1)),))
    plus = np.array([1.0, 1.0]) / np.sqrt(2.0)
    traj = evolve(density_from_state(plus), h0, BathParams(1.0), t_end=3.0,
                  dt=1e-3, record_every=0.1, threshold=0.0,
                  observables={"od": lambda r, t: r[0, 1].real})
    assert np.abs(traj.observables["od"] - 0.5 / (1 + traj.times**2)).max() < 1e-12


def test_unitary_evolution_preserves_purity(kitaev22):
    rho0 = density_from_state(ground_state_at(kitaev22, 0.5).vector)
    traj = evolve(rho0, build_hamiltonian(kitaev22, FieldParams(0.3)),
                  BathParams(3.0), t_end=1.0, dt=1e-3, record_every=0.1,
                  rate_override=lambda t: 0.0)
    assert np.abs(traj.purity - 1.0).max() < 1e-8
    assert traj.trace_drift.max() < 1e-10


def test_populations_frozen_when_h_commutes_with_z():
    # pure Z-type Hamiltonian: dephasing leaves computational populations alone
    n = 3
    terms = ((-1.0, PauliString.from_factors(n, {0: "Z", 1: "Z"})),
             (-0.5, PauliString.from_factors(n, {2: "Z"})))
    h = SparseOperator(n, terms)
    rng = np.random.default_rng(4)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    v /= np.linalg.norm(v)
    rho0 = density_from_state(v)
    traj = evolve(rho0, h, BathParams(1.0), t_end=2.0, dt=1e-3, record_every=0.5,
                  threshold=0.0)
    final = traj.final_state
    assert np.abs(np.diag(final) - np.diag(rho0)).max() < 1e-10


def test_trajectory_invariants_short_run(kitaev22):
    rho0 = density_from_state(ground_state_at(kitaev22, 0.8).vector)
    traj = evolve(rho0, build_hamiltonian(kitaev22, FieldParams(0.8)),
                  BathParams(3.0), t_end=2.0, dt=1e-3, record_every=0.1,
                  store_states=True)
    assert traj.herm_defect.max() <= 1e-10
    assert traj.trace_drift.max() <= 1e-8 * 0.1  # drift per recorded interval
    assert min(traj.min_eigs.values()) >= -1e-7
    assert len(traj.states) == len(traj.times)
    # thresholding: recorded sparse states carry no tiny entries
    data = traj.states[-1].toarray()
    nonzero = np.abs(data[np.abs(data) > 0])
    assert nonzero.min() >= 1e-8


def test_density_cap():
    h = SparseOperator(13, ((1.0, PauliString.identity(13)),))
    with pytest.raises(IntegrationError):
        evolve(np.eye(2) / 2, h, BathParams(1.0), t_end=0.1)


def test_collapse_time_modes_and_errors():
    ts = np.arange(0.0, 12.0, 0.02)
    wave = 0.5 + 0.3 * np.cos(ts)
    res = collapse_time(ts, wave, 3.0)
    assert res.kind == "non_markovian_trough"
    assert abs(res.e_c - 0.2) < 1e-6 and abs(res.tau - np.pi) < 0.03

    mono = np.exp(-0.5 * ts)
    cross = collapse_time(ts, mono, 1.0, reference=0.2)
    assert cross.kind == "markovian_crossing"
    assert abs(cross.tau + np.log(0.2) / 0.5) < 1e-3

    with pytest.raises(CollapseAnalysisError):
        collapse_time(ts, mono, 3.0)  # monotone: no trough
    with pytest.raises(CollapseAnalysisError):
        collapse_time(ts, mono + 1.0, 1.0, reference=0.2)  # floors above level
    with pytest.raises(CollapseAnalysisError):
        collapse_time(np.arange(0, 5, 0.2), np.cos(np.arange(0, 5, 0.2)), 3.0)


def test_rk4_halving_short_window(kitaev22):
    rho0 = density_from_state(ground_state_at(kitaev22, 0.8).vector)
    h = build_hamiltonian(kitaev22, FieldParams(0.8))
    runs = {}
    for dt in (1e-3, 5e-4):
        traj = evolve(rho0, h, BathParams(3.0), t_end=1.0, dt=dt,
                      record_every=0.1, threshold=0.0,
                      observables={"p01": lambda r, t: abs(r[0, 1])})
        runs[dt] = traj.observables["p01"]
    assert np.abs(runs[1e-3] - runs[5e-4]).max() < 1e-8
