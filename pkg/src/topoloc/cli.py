"""Batch front-end: TOML configs, sweep/dynamics/scaling runs, self-validation.

Subcommands: sweep | dynamics | scaling | validate.  Tables land in CSV (one
row per grid point, bit-for-bit reproducible for a fixed config and seed),
run metadata and fits in JSON.  Exit codes: 0 success, 1 invariant failure,
2 config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

try:
    import tomllib
except ImportError:  # python 3.10
    import tomli as tomllib

from . import __version__
from .codes import CodeLattice, LatticeError, LoopSpec, build_color, build_kitaev
from .dynamics import (BathParams, CollapseAnalysisError, collapse_time,
                       dephasing_rate, density_from_state, evolve)
from .localize import (LEConfig, Region, bound_from_ensemble, build_preferred_set,
                       canonical_setup, measure_ensemble, restricted_le)
from .qpt import (COLOR_GC, KITAEV_GC, HierarchyViolation, SweepRecord,
                  derivative_peak, fit_scaling, sweep, truncate_at_zero)
from .spectrum import FieldParams, build_hamiltonian, ground_state, ground_state_at
from .witness import build_witness, witness_expectation


class ConfigError(ValueError):
    """Bad or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """Everything a batch run needs; defaults follow the published choices."""

    model: str = "kitaev"
    dims: tuple = (2, 2)
    loop_kind: str = "X"
    loop_direction: str = "h"
    loop_color: str | None = None
    bipartition: tuple = (0,)
    normalized_seed: bool = False
    bounds: tuple = ("E_prime", "E_dprime", "E_w")
    g_start: float = 0.0
    g_stop: float = 2.0
    g_step: float = 0.02
    g_refine: tuple = ((0.2, 0.5, 0.005),)
    g_values: tuple | None = None
    p_c: float = 1e-10
    calibration: tuple = (0.0, 0.2)
    top_pauli: int = 16
    random_starts: int = 64
    seed: int = 0
    s_values: tuple = (1.0, 3.0)
    dyn_g_values: tuple = (0.1, 0.8)
    t_end: float = 50.0
    dt: float = 1e-3
    record_every: float = 0.1
    threshold: float = 1e-8
    scaling_lattices: tuple = ((2, 2), (3, 2), (4, 2), (3, 3))
    scaling_bound: str = "E_dprime"
    scaling_window: tuple = (0.30, 0.55)
    scaling_step: float = 0.005
    out_dir: str = "results"
    workers: int = 1

    def validate(self):
        if self.model not in ("kitaev", "color"):
            raise ConfigError(f"unknown model {self.model!r}")
        for dims in (self.dims,) + tuple(self.scaling_lattices):
            if 2 * dims[0] * dims[1] > 20:
                raise ConfigError(
                    f"lattice {dims} needs {2 * dims[0] * dims[1]} qubits; the "
                    "state-vector machinery is capped at 20"
                )
        if self.loop_kind not in ("X", "Z") or self.loop_direction not in ("h", "v"):
            raise ConfigError("loop kind must be X/Z and direction h/v")
        if (self.loop_color is not None) != (self.model == "color"):
            raise ConfigError("loop color is required iff model is color")
        if self.g_step <= 0 or self.g_stop < self.g_start:
            raise ConfigError("bad g grid")
        if self.p_c <= 0:
            raise ConfigError("p_c must be positive")
        if 0.0 not in self.calibration:
            raise ConfigError("calibration list must contain g = 0")
        if self.dt <= 0 or self.record_every < self.dt:
            raise ConfigError("need dt > 0 and record_every >= dt")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        unknown = set(self.bounds) - {"E_L", "E_RL", "E_prime", "E_dprime", "E_w"}
        if unknown:
            raise ConfigError(f"unknown bounds {sorted(unknown)}")
        if len(self.scaling_lattices) < 3:
            raise ConfigError("scaling needs at least 3 lattice sizes")

    @property
    def loop_spec(self) -> LoopSpec:
        return LoopSpec(self.loop_kind, self.loop_direction, self.loop_color)

    def lattice(self) -> CodeLattice:
        build = build_kitaev if self.model == "kitaev" else build_color
        return build(*self.dims)

    def grid(self) -> np.ndarray:
        if self.g_values is not None:
            return np.asarray(sorted(self.g_values), dtype=float)
        vals = set(np.round(np.arange(self.g_start, self.g_stop + 1e-12, self.g_step), 10))
        for lo, hi, step in self.g_refine:
            vals |= set(np.round(np.arange(lo, hi + 1e-12, step), 10))
        return np.array(sorted(v for v in vals if self.g_start <= v <= self.g_stop))

    def le_config(self) -> LEConfig:
        return LEConfig(top_pauli=self.top_pauli, n_random=self.random_starts,
                        seed=self.seed)

    def hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    """Merge a TOML file (sections flattened per the schema) and CLI overrides."""
    raw = {}
    if path:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        flat = {
            ("experiment", "model"): "model", ("experiment", "dims"): "dims",
            ("experiment", "workers"): "workers", ("experiment", "seed"): "seed",
            ("loop", "kind"): "loop_kind", ("loop", "direction"): "loop_direction",
            ("loop", "color"): "loop_color",
            ("region", "bipartition"): "bipartition",
            ("region", "normalized_seed"): "normalized_seed",
            ("sweep", "bounds"): "bounds", ("sweep", "g_start"): "g_start",
            ("sweep", "g_stop"): "g_stop", ("sweep", "g_step"): "g_step",
            ("sweep", "refine"): "g_refine", ("sweep", "g_values"): "g_values",
            ("preferred", "p_c"): "p_c", ("preferred", "calibration"): "calibration",
            ("optimizer", "top_pauli"): "top_pauli",
            ("optimizer", "random_starts"): "random_starts",
            ("dynamics", "s_values"): "s_values",
            ("dynamics", "g_values"): "dyn_g_values",
            ("dynamics", "t_end"): "t_end", ("dynamics", "dt"): "dt",
            ("dynamics", "record_every"): "record_every",
            ("dynamics", "threshold"): "threshold",
            ("scaling", "lattices"): "scaling_lattices",
            ("scaling", "bound"): "scaling_bound",
            ("scaling", "g_window"): "scaling_window",
            ("scaling", "g_step"): "scaling_step",
            ("output", "dir"): "out_dir",
        }
        for (section, key), attr in flat.items():
            if section in doc and key in doc[section]:
                raw[attr] = doc[section][key]
        known = {s for s, _ in flat}
        for section in doc:
            if section not in known:
                raise ConfigError(f"unknown config section [{section}]")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    for tup_key in ("dims", "bipartition", "bounds", "calibration", "s_values",
                    "dyn_g_values", "scaling_window", "g_values"):
        if tup_key in raw and raw[tup_key] is not None:
            raw[tup_key] = tuple(raw[tup_key])
    if "g_refine" in raw:
        raw["g_refine"] = tuple(tuple(w) for w in raw["g_refine"])
    if "scaling_lattices" in raw:
        raw["scaling_lattices"] = tuple(tuple(d) for d in raw["scaling_lattices"])
    env_workers = os.environ.get("TOPOLOC_WORKERS")
    if env_workers:
        raw["workers"] = int(env_workers)
    try:
        cfg = ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_table(path: str, header: list, rows: list, cfg_hash: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# topoloc {__version__} config={cfg_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_meta(path: str, cfg: ExperimentConfig, payload: dict):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    doc = {
        "tool": "topoloc",
        "version": __version__,
        "config_hash": cfg.hash(),
        "config": asdict(cfg),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=list)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_sweep(cfg: ExperimentConfig) -> int:
    lat = cfg.lattice()
    spec = cfg.loop_spec
    record = sweep(
        lat, spec, cfg.grid(), bounds=cfg.bounds, a_positions=cfg.bipartition,
        le_config=cfg.le_config(), normalized=cfg.normalized_seed,
        workers=cfg.workers,
    )
    header = ["g"] + [b for b in ("E_L", "E_RL", "E_prime", "E_dprime") if b in record.columns]
    if record.eps_m is not None:
        header.append("eps_m")
    if "E_w" in record.columns:
        header.append("E_w")
    rows = []
    for i, g in enumerate(record.g):
        row = [g] + [record.columns[b][i] for b in header[1:] if b != "eps_m"]
        if record.eps_m is not None:
            row.insert(header.index("eps_m"), record.eps_m[i])
        rows.append(row)
    tag = f"{cfg.model}_{'x'.join(map(str, cfg.dims))}_{cfg.loop_kind}{cfg.loop_direction}"
    write_table(os.path.join(cfg.out_dir, f"sweep_{tag}.csv"), header, rows, cfg.hash())
    write_meta(os.path.join(cfg.out_dir, f"sweep_{tag}.json"), cfg,
               {"kind": "sweep", "rows": len(rows), "preferred": record.meta})
    return 0


def _dynamics_observables(lat, spec, cfg):
    setup = canonical_setup(lat, spec)
    region = Region.from_loop(lat, spec, cfg.bipartition)
    preferred = build_preferred_set(lat, spec, setup, p_c=cfg.p_c,
                                    calibration_gs=cfg.calibration)
    witness = build_witness(lat, spec) if lat.kind == "kitaev" else None

    def e_dprime(rho, t):
        ens = measure_ensemble(rho, region, setup, restrict=preferred)
        return bound_from_ensemble(ens, normalized=cfg.normalized_seed).value

    obs = {"E_dprime": e_dprime}
    if witness is not None:
        obs["E_w"] = lambda rho, t: witness_expectation(rho, witness).bound
    return obs


def cmd_dynamics(cfg: ExperimentConfig) -> int:
    lat = cfg.lattice()
    spec = cfg.loop_spec
    obs = _dynamics_observables(lat, spec, cfg)
    trajectories = {}
    for g in cfg.dyn_g_values:
        rho0 = density_from_state(ground_state_at(lat, g).vector)
        for s in cfg.s_values:
            traj = evolve(rho0, build_hamiltonian(lat, FieldParams(g)),
                          BathParams(s), t_end=cfg.t_end, dt=cfg.dt,
                          record_every=cfg.record_every, threshold=cfg.threshold,
                          observables=obs)
            trajectories[(g, s)] = traj
            rows = [
                [t, 1.0 - drift, pur] +
                [traj.observables[name][i] for name in sorted(obs)] + [gam]
                for i, (t, drift, pur, gam) in enumerate(
                    zip(traj.times, traj.trace_drift, traj.purity, traj.gamma))
            ]
            tag = f"{cfg.model}_{'x'.join(map(str, cfg.dims))}_{cfg.loop_kind}{cfg.loop_direction}_g{g}_s{s}"
            write_table(os.path.join(cfg.out_dir, f"dynamics_{tag}.csv"),
                        ["t", "trace", "purity"] + sorted(obs) + ["gamma_t"],
                        rows, cfg.hash())

    summary = {}
    non_markovian = [s for s in cfg.s_values if s > 2.0]
    markovian = [s for s in cfg.s_values if s <= 2.0]
    for g in cfg.dyn_g_values:
        for s in non_markovian:
            traj = trajectories[(g, s)]
            try:
                ect = collapse_time(traj.times, traj.observables["E_dprime"], s)
            except CollapseAnalysisError as exc:
                summary[f"g={g}/s={s}"] = {"error": str(exc)}
                continue
            summary[f"g={g}/s={s}"] = {"tau_nm": ect.tau, "e_c": ect.e_c}
            for sp in markovian:
                trajm = trajectories[(g, sp)]
                try:
                    ectm = collapse_time(trajm.times, trajm.observables["E_dprime"],
                                         sp, reference=ect.e_c)
                    summary[f"g={g}/s={sp}->s={s}"] = {"tau_m": ectm.tau, "e_c": ect.e_c}
                except CollapseAnalysisError as exc:
                    summary[f"g={g}/s={sp}->s={s}"] = {"error": str(exc)}
    write_meta(os.path.join(cfg.out_dir, "dynamics_summary.json"), cfg,
               {"kind": "dynamics", "ect": summary})
    return 0


def cmd_scaling(cfg: ExperimentConfig, synthetic: tuple | None = None) -> int:
    g_c = KITAEV_GC if cfg.model == "kitaev" else COLOR_GC
    points = []
    per_n = []
    if synthetic is not None:
        alpha, nu = synthetic
        for dims in cfg.scaling_lattices:
            n = 2 * dims[0] * dims[1]
            points.append((n, g_c + alpha * n ** (-nu)))
            per_n.append([n, dims[0], dims[1], points[-1][1], 0.0])
    else:
        lo, hi = cfg.scaling_window
        grid = np.round(np.arange(lo, hi + 1e-12, cfg.scaling_step), 10)
        for dims in cfg.scaling_lattices:
            lat = build_kitaev(*dims) if cfg.model == "kitaev" else build_color(*dims)
            record = sweep(lat, cfg.loop_spec, grid, bounds=(cfg.scaling_bound,),
                           a_positions=cfg.bipartition, workers=cfg.workers)
            series_g, series_v = record.g, record.columns[cfg.scaling_bound]
            if cfg.scaling_bound == "E_w":
                series_g, series_v = truncate_at_zero(series_g, series_v)
            gm, height = derivative_peak(series_g, series_v)
            points.append((lat.n_qubits, gm))
            per_n.append([lat.n_qubits, dims[0], dims[1], gm, height])
    fit = fit_scaling(points, g_c)
    write_table(os.path.join(cfg.out_dir, "scaling_points.csv"),
                ["N", "nph", "npv", "g_m", "peak_height"], per_n, cfg.hash())
    write_meta(os.path.join(cfg.out_dir, "scaling_fit.json"), cfg, {
        "kind": "scaling", "bound": cfg.scaling_bound, "g_c": g_c,
        "amplitude": fit.amplitude, "exponent": fit.exponent,
        "fit_residual": fit.fit_residual,
        "points": [list(p) for p in fit.points],
        "synthetic": list(synthetic) if synthetic else None,
    })
    return 0


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _suite_pauli(rng):
    from .pauli import PauliString, apply_pauli, commutes, pauli_product, to_sparse

    checks = 0
    for _ in range(30):
        n = int(rng.integers(1, 6))
        def rand_string():
            factors = {q: "XYZ"[rng.integers(3)] for q in range(n) if rng.random() < 0.6}
            return PauliString.from_factors(n, factors, sign=int(rng.choice([1, -1])))
        a, b = rand_string(), rand_string()
        ma, mb = to_sparse(a).toarray(), to_sparse(b).toarray()
        c, phase = pauli_product(a, b)
        assert np.allclose(ma @ mb, phase * to_sparse(c).toarray(), atol=1e-12)
        assert commutes(a, b) == bool(np.allclose(ma @ mb, mb @ ma))
        v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        assert np.allclose(apply_pauli(a, v), ma @ v, atol=1e-12)
        assert abs(np.linalg.norm(apply_pauli(a, v)) - np.linalg.norm(v)) < 1e-12
        checks += 4
    return checks


def _suite_codes(rng):
    from .codes import stabilizer_generators, stabilizer_ground_state, graph_equivalent
    from .pauli import apply_pauli, commutes

    checks = 0
    for lat in (build_kitaev(2, 2), build_kitaev(3, 2), build_color(3, 2)):
        gens = stabilizer_generators(lat)
        assert all(commutes(a, b) for i, a in enumerate(gens) for b in gens[i + 1:])
        psi = stabilizer_ground_state(lat)
        for gen in gens:
            assert abs(np.vdot(psi, apply_pauli(gen, psi)).real - 1.0) < 1e-10
        checks += 1 + len(gens)
    for spec in (LoopSpec("X", "h"), LoopSpec("Z", "v")):
        eq = graph_equivalent(build_kitaev(2, 2), spec)
        assert eq.hub in eq.omega
        checks += 1
    return checks


def _suite_spectrum(rng):
    lat = build_kitaev(2, 2)
    checks = 0
    for g in (0.1, 0.5, 1.5):
        res = ground_state_at(lat, g)
        dense = np.linalg.eigvalsh(build_hamiltonian(lat, FieldParams(g)).to_dense())
        assert abs(res.energy - dense[0]) < 1e-9
        checks += 1
    return checks


def _suite_localize(rng):
    from .localize import EnsembleError, localizable_entanglement
    from .qpt import check_hierarchy

    lat = build_kitaev(2, 2)
    checks = 0
    cfg = LEConfig(top_pauli=2, n_random=4, maxiter=800)
    for g in (0.3, 0.9):
        state = ground_state_at(lat, g).vector
        for spec in (LoopSpec("X", "h"), LoopSpec("Z", "h")):
            region = Region.from_loop(lat, spec)
            setup = canonical_setup(lat, spec)
            ens = measure_ensemble(state, region, setup)
            ens.validate()
            values = {
                "E_L": localizable_entanglement(state, region, cfg).value,
                "E_RL": restricted_le(state, region).value,
                "E_prime": bound_from_ensemble(ens).value,
                "E_w": witness_expectation(state, build_witness(lat, spec)).bound,
            }
            check_hierarchy(values, context=f"validate g={g}")
            checks += 1
    return checks


def _suite_witness(rng):
    from .witness import (WitnessConstructionError, validate_witness_conditions,
                          verify_decomposition, verify_star_pt_bound)

    checks = 0
    for dims in ((2, 2), (3, 2), (3, 3)):
        lat = build_kitaev(*dims)
        for kind in ("X", "Z"):
            build_witness(lat, LoopSpec(kind, "h"))
            checks += 1
    # deliberate fault injection: dropping a generator must fail condition (b)
    lat = build_kitaev(2, 2)
    wit = build_witness(lat, LoopSpec("X", "h"))
    try:
        validate_witness_conditions(wit.region, wit.generators[:-1], lat.n_qubits)
        raise AssertionError("mutated generator set was not rejected")
    except WitnessConstructionError:
        checks += 1
    state = ground_state_at(lat, 0.5).vector
    resid = verify_decomposition(state, wit, canonical_setup(lat, LoopSpec("X", "h")))
    assert resid < 1e-9, resid
    checks += 1
    for n in range(2, 6):
        verify_star_pt_bound(n)
        checks += 1
    return checks


def _suite_dynamics(rng):
    from .pauli import PauliString, SparseOperator

    checks = 0
    t = np.linspace(0, 100, 2000)
    assert all(dephasing_rate(t, BathParams(s)).min() >= -1e-15 for s in (0.5, 1, 2))
    assert all(dephasing_rate(t, BathParams(s)).min() < 0 for s in (2.5, 3, 4))
    checks += 2
    h0 = SparseOperator(1, ((0.0, PauliString.identity(1)),))
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    traj = evolve(density_from_state(plus), h0, BathParams(1.0), t_end=2.0,
                  dt=1e-3, record_every=0.1, threshold=0.0,
                  observables={"od": lambda r, t_: r[0, 1].real})
    assert np.abs(traj.observables["od"] - 0.5 / (1 + traj.times**2)).max() < 1e-10
    checks += 1
    return checks


def _suite_rle_timing(rng):
    lat = build_kitaev(2, 2)
    state = ground_state_at(lat, 0.5).vector
    region = Region.from_loop(lat, LoopSpec("X", "h"))
    start = time.time()
    restricted_le(state, region)
    elapsed = time.time() - start
    print(f"    729-setup RLE at N=8: {elapsed:.2f}s")
    assert elapsed < 600
    return 1


def cmd_validate() -> int:
    suites = [
        ("pauli dense oracles", _suite_pauli),
        ("code lattices and ground states", _suite_codes),
        ("eigensolver vs dense", _suite_spectrum),
        ("measurement hierarchy", _suite_localize),
        ("witness construction and derivation", _suite_witness),
        ("dephasing dynamics", _suite_dynamics),
        ("exhaustive-enumeration timing", _suite_rle_timing),
    ]
    rng = np.random.default_rng(0)
    failures = 0
    for name, fn in suites:
        try:
            count = fn(rng)
            print(f"PASS {name} ({count} checks)")
        except Exception as exc:  # noqa: BLE001 - failures are the output
            failures += 1
            print(f"FAIL {name}: {exc}")
    print(f"{len(suites) - failures}/{len(suites)} suites passed")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _add_common(parser):
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--model", choices=["kitaev", "color"])
    parser.add_argument("--dims", type=int, nargs=2, metavar=("A", "B"))
    parser.add_argument("--loop", help="loop spec like Xh, Zh, Xv or Xh:r for color")
    parser.add_argument("--bipartition", type=int, nargs="+",
                        help="0-based positions inside the loop forming side A")
    parser.add_argument("--bounds", nargs="+",
                        choices=["E_L", "E_RL", "E_prime", "E_dprime", "E_w"])
    parser.add_argument("--out", dest="out_dir")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--seed", type=int)


def _overrides(args) -> dict:
    over = {
        "model": args.model, "out_dir": args.out_dir,
        "workers": args.workers, "seed": args.seed,
    }
    if args.dims:
        over["dims"] = tuple(args.dims)
    if args.bounds:
        over["bounds"] = tuple(args.bounds)
    if args.bipartition:
        over["bipartition"] = tuple(args.bipartition)
    if args.loop:
        token = args.loop
        color = None
        if ":" in token:
            token, color = token.split(":")
        over["loop_kind"] = token[0].upper()
        over["loop_direction"] = token[1].lower()
        over["loop_color"] = color
    return over


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="topoloc", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("sweep", "dynamics", "scaling"):
        sub = subs.add_parser(name)
        _add_common(sub)
        if name == "scaling":
            sub.add_argument("--synthetic", type=float, nargs=2,
                             metavar=("AMPLITUDE", "EXPONENT"),
                             help="plant g_m data instead of sweeping")
    subs.add_parser("validate")
    args = parser.parse_args(argv)

    if args.command == "validate":
        return cmd_validate()
    try:
        cfg = load_config(args.config, _overrides(args))
    except (ConfigError, FileNotFoundError, tomllib.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "dynamics":
            return cmd_dynamics(cfg)
        return cmd_scaling(cfg, synthetic=tuple(args.synthetic)
                           if getattr(args, "synthetic", None) else None)
    except (HierarchyViolation, AssertionError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 1
    except (LatticeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
