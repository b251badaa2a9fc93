"""Field sweeps of the entanglement bounds, derivative peaks, and scaling fits."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codes import CodeLattice, LoopSpec, build_color, build_kitaev
from .localize import (LEConfig, PreferredSet, Region, bound_from_ensemble,
                       build_preferred_set, canonical_setup, localizable_entanglement,
                       measure_ensemble, restricted_le)
from .spectrum import FieldParams, build_hamiltonian, ground_state
from .witness import build_witness, witness_expectation

# published critical fields of the topological-to-polarized transition
KITAEV_GC = 0.328474
COLOR_GC = 0.385

HIERARCHY_TOL = 1e-9

BOUND_ORDER = ("E_L", "E_RL", "E_prime", "E_dprime", "E_w")


class HierarchyViolation(AssertionError):
    """The bound chain LE >= RLE >= E' >= E'' (and E' >= E^w) failed."""


class PeakLocationError(RuntimeError):
    """Derivative maximum sits on the grid boundary; widen the grid."""


@dataclass
class SweepRecord:
    """Per-field-value bound table for one lattice/loop/bipartition."""

    lattice_kind: str
    dims: tuple
    spec: LoopSpec
    a_positions: tuple
    g: np.ndarray
    columns: dict
    eps_m: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class ScalingFit:
    """Power-law approach g_m(N) = g_c + amplitude * N^(-exponent)."""

    g_c_inf: float
    points: tuple  # ((N, g_m), ...)
    amplitude: float
    exponent: float
    fit_residual: float


def check_hierarchy(values: dict, tol: float = HIERARCHY_TOL, context: str = ""):
    """Assert the bound chain on one row of sweep values."""
    chain = [k for k in ("E_L", "E_RL", "E_prime", "E_dprime") if k in values]
    for upper, lower in zip(chain, chain[1:]):
        if values[lower] > values[upper] + tol:
            raise HierarchyViolation(
                f"{lower}={values[lower]:.12f} exceeds {upper}={values[upper]:.12f} {context}"
            )
    if "E_w" in values:
        cap = next((values[k] for k in ("E_prime", "E_RL", "E_L") if k in values), None)
        if cap is not None and values["E_w"] > cap + tol:
            raise HierarchyViolation(
                f"E_w={values['E_w']:.12f} exceeds {cap:.12f} {context}"
            )


def _lattice_for(kind: str, dims) -> CodeLattice:
    return build_kitaev(*dims) if kind == "kitaev" else build_color(*dims)


def _sweep_point(args) -> dict:
    """One field value: ground state plus every requested bound (pool worker)."""
    (kind, dims, spec, a_positions, g, wants, preferred, le_config,
     normalized, validate) = args
    lat = _lattice_for(kind, dims)
    params = FieldParams(g)
    res = ground_state(build_hamiltonian(lat, params), params, lat)
    state = res.vector
    region = Region.from_loop(lat, spec, a_positions)
    out = {"g": g, "energy": res.energy}
    setup = canonical_setup(lat, spec) if {"E_prime", "E_dprime"} & set(wants) else None
    if "E_L" in wants:
        out["E_L"] = localizable_entanglement(
            state, region, le_config, normalized=normalized).value
    if "E_RL" in wants:
        out["E_RL"] = restricted_le(state, region, normalized=normalized).value
    if "E_prime" in wants:
        ens = measure_ensemble(state, region, setup)
        out["E_prime"] = bound_from_ensemble(ens, normalized=normalized).value
    if "E_dprime" in wants:
        ens = measure_ensemble(state, region, setup, restrict=preferred)
        bv = bound_from_ensemble(ens, normalized=normalized)
        out["E_dprime"] = bv.value
        out["eps_m"] = bv.epsilon_m
    if "E_w" in wants:
        witness = build_witness(lat, spec)
        out["E_w"] = witness_expectation(state, witness).bound
    if validate:
        check_hierarchy(out, context=f"at g={g}")
    return out


def sweep(
    lat: CodeLattice,
    spec: LoopSpec,
    g_grid,
    bounds=("E_prime", "E_dprime", "E_w"),
    a_positions=(0,),
    le_config: LEConfig | None = None,
    preferred: PreferredSet | None = None,
    normalized: bool = False,
    workers: int = 1,
    validate: bool = True,
) -> SweepRecord:
    """Ground state and requested bounds at every g, hierarchy-checked inline.

    Sweep points are independent: with ``workers`` > 1 they run in a process
    pool and are reassembled in grid order, so results do not depend on the
    worker count.
    """
    g_grid = np.asarray(sorted(g_grid), dtype=float)
    wants = tuple(bounds)
    if "E_dprime" in wants and preferred is None:
        preferred = build_preferred_set(lat, spec, canonical_setup(lat, spec))
    if "E_L" in wants and le_config is None:
        le_config = LEConfig()
    args = [(lat.kind, lat.dims, spec, tuple(a_positions), float(g), wants,
             preferred, le_config, normalized, validate) for g in g_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, args))
    else:
        rows = [_sweep_point(a) for a in args]
    rows.sort(key=lambda r: r["g"])
    columns = {}
    for key in list(wants) + ["energy"]:
        if key in rows[0]:
            columns[key] = np.array([r[key] for r in rows])
    eps = np.array([r["eps_m"] for r in rows]) if "eps_m" in rows[0] else None
    meta = {"preferred_size": len(preferred.outcomes) if preferred else None}
    return SweepRecord(lat.kind, lat.dims, spec, tuple(a_positions),
                       g_grid, columns, eps_m=eps, meta=meta)


def derivative_peak(g, values, refine: bool = True):
    """Location and height of the maximum of |d(values)/dg|.

    Central differences on the (possibly non-uniform) grid; the maximum must
    be interior, and a parabola through the maximum triple refines g_m.
    """
    g = np.asarray(g, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(g) < 5:
        raise ValueError("need at least 5 grid points")
    deriv = np.abs(np.gradient(values, g))
    if deriv.max() - deriv.min() <= 1e-12 * max(deriv.max(), 1.0):
        raise PeakLocationError("derivative is flat; no interior maximum")
    i = int(np.argmax(deriv))
    if i == 0 or i == len(g) - 1:
        raise PeakLocationError(f"derivative peak at grid boundary g={g[i]}")
    if not refine:
        return float(g[i]), float(deriv[i])
    x0, x1, x2 = g[i - 1], g[i], g[i + 1]
    y0, y1, y2 = deriv[i - 1], deriv[i], deriv[i + 1]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0:  # not concave; fall back to the grid maximum
        return float(x1), float(y1)
    gm = -b / (2 * a)
    height = float(y1 + (a * gm**2 + b * gm) - (a * x1**2 + b * x1))
    return float(gm), height


def truncate_at_zero(g, values, tol: float = 1e-12):
    """Prefix of a witness series up to the g beyond which it stays at zero."""
    values = np.asarray(values, dtype=float)
    nonzero = np.flatnonzero(values > tol)
    if len(nonzero) == 0:
        return np.asarray(g)[:0], values[:0]
    stop = nonzero[-1] + 2  # keep the first zero sample so the drop is visible
    return np.asarray(g)[:stop], values[:stop]


def fit_scaling(points, g_c_inf: float) -> ScalingFit:
    """Least squares of ln|g_m - g_c| on ln N: slope -exponent, intercept ln(amplitude)."""
    points = sorted((int(n), float(gm)) for n, gm in points)
    if len(points) < 3:
        raise ValueError("need at least 3 (N, g_m) points")
    ns = np.array([p[0] for p in points], dtype=float)
    gms = np.array([p[1] for p in points], dtype=float)
    diffs = gms - g_c_inf
    if np.any(diffs <= 0):
        raise ValueError("g_m must stay above g_c for the log fit")
    x, y = np.log(ns), np.log(diffs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return ScalingFit(g_c_inf, tuple(points), float(np.exp(intercept)),
                      float(-slope), resid)
