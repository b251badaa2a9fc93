import numpy as np
import pytest

from topoloc.codes import LoopSpec, build_kitaev
from topoloc.qpt import (KITAEV_GC, HierarchyViolation, PeakLocationError,
                         check_hierarchy, derivative_peak, fit_scaling, sweep,
                         truncate_at_zero)


def test_derivative_peak_tanh():
    g = np.round(np.arange(0.0, 1.0001, 0.005), 10)
    values = np.tanh((0.33 - g) / 0.08)
    gm, height = derivative_peak(g, values)
    assert abs(gm - 0.33) < 0.0025
    assert height > 0


def test_derivative_peak_invariances():
    g = np.round(np.arange(0.0, 1.0001, 0.01), 10)
    values = np.tanh((0.4 - g) / 0.1)
    gm, h = derivative_peak(g, values)
    gm_shift, h_shift = derivative_peak(g, values + 5.0)
    gm_neg, h_neg = derivative_peak(g, -values)
    assert abs(gm - gm_shift) < 1e-9 and abs(h - h_shift) < 1e-9
    assert abs(gm - gm_neg) < 1e-12 and abs(h - h_neg) < 1e-12


def test_derivative_peak_boundary_error():
    g = np.linspace(0, 1, 40)
    with pytest.raises(PeakLocationError):
        derivative_peak(g, 2.0 * g)  # monotone linear: max slope everywhere


def test_fit_scaling_round_trip():
    for alpha, nu in ((0.38, 0.58), (0.448, 0.655), (1.7, 0.21)):
        pts = [(n, KITAEV_GC + alpha * n ** (-nu)) for n in (8, 12, 16, 18, 20)]
        fit = fit_scaling(pts, KITAEV_GC)
        assert abs(fit.amplitude - alpha) < 1e-10
        assert abs(fit.exponent - nu) < 1e-10
        assert fit.fit_residual < 1e-12


def test_fit_scaling_validation():
    with pytest.raises(ValueError):
        fit_scaling([(8, 0.4), (12, 0.39)], KITAEV_GC)
    with pytest.raises(ValueError):
        fit_scaling([(8, 0.4), (12, 0.39), (16, 0.3)], KITAEV_GC)  # below g_c


def test_truncate_witness_series():
    g = np.arange(0.0, 1.0, 0.1)
    vals = np.array([0.9, 0.7, 0.4, 0.2, 0.05, 0.0, 0.0, 0.0, 0.0, 0.0])
    tg, tv = truncate_at_zero(g, vals)
    assert len(tg) == 6 and tv[-1] == 0.0
    empty_g, empty_v = truncate_at_zero(g, np.zeros(10))
    assert len(empty_g) == 0


def test_check_hierarchy_raises():
    with pytest.raises(HierarchyViolation):
        check_hierarchy({"E_L": 0.5, "E_RL": 0.6})
    with pytest.raises(HierarchyViolation):
        check_hierarchy({"E_prime": 0.2, "E_w": 0.4})
    check_hierarchy({"E_L": 0.6, "E_RL": 0.6, "E_prime": 0.5, "E_w": 0.1})


def test_sweep_basic_and_parallel_determinism(kitaev22):
    grid = np.arange(0.0, 0.81, 0.2)
    rec1 = sweep(kitaev22, LoopSpec("X", "h"), grid,
                 bounds=("E_prime", "E_dprime", "E_w"))
    rec2 = sweep(kitaev22, LoopSpec("X", "h"), grid,
                 bounds=("E_prime", "E_dprime", "E_w"), workers=2)
    for key in rec1.columns:
        assert np.array_equal(rec1.columns[key], rec2.columns[key]), key
    assert abs(rec1.columns["E_prime"][0] - 1.0) < 1e-10
    assert (np.diff(rec1.columns["energy"]) <= 1e-10).all()
    # g = 2 endpoint never exceeds the g = 0 value
    assert rec1.columns["E_prime"][-1] <= rec1.columns["E_prime"][0] + 1e-12


def test_sweep_peak_moves_toward_gc():
    # even the coarse 8-vs-12 qubit pair must show the drift toward g_c
    grid = np.round(np.arange(0.30, 0.601, 0.01), 10)
    gms = []
    for dims in ((2, 2), (3, 2)):
        lat = build_kitaev(*dims)
        rec = sweep(lat, LoopSpec("X", "h"), grid, bounds=("E_dprime",))
        gm, _ = derivative_peak(rec.g, rec.columns["E_dprime"])
        gms.append(gm)
    assert gms[1] < gms[0]
    assert gms[1] > KITAEV_GC
