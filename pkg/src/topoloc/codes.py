"""Periodic Kitaev and color-code lattices: stabilizers, nontrivial loops,
stabilizer ground states, and the Hadamard map onto graph states.

Kitaev indexing (documented, fixed): the ``nph x npv`` plaquette grid has
vertex lines r = 0..npv-1 and columns c = 0..nph-1.  Qubits live on edges and
are numbered line by line, horizontal edges before the vertical edges that
leave the line upward:

    h(r, c) = r*2*nph + c          edge (r,c)-(r,c+1)
    v(r, c) = r*2*nph + nph + c    edge (r,c)-(r+1,c)

so a 3x3 code numbers qubits 0..17 with 1-based text labels matching the
row-by-row pictures used for this lattice family.  Vertex and plaquette ids
are row-major: V(r,c) = P(r,c) = r*nph + c.

Color-code indexing: brick-wall honeycomb with vertex columns x = 0..2*cols-1
and rows y = 0..rows-1, qubit (x, y) = y*2*cols + x.  Vertical edges sit at
x+y even; hexagon F(a, b) (a+b even) covers columns a..a+2 of rows b, b+1 and
carries color a mod 3 (0=r, 1=g, 2=b).  3-colorability under periodic wrap
requires cols % 3 == 0 and rows even.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import PauliString, apply_pauli, commutes, multiply_strings, pauli_product

COLOR_NAMES = ("r", "g", "b")


class LatticeError(ValueError):
    """Invalid lattice dimensions or an unsupported lattice/loop combination."""


@dataclass(frozen=True)
class LoopSpec:
    """A nontrivial loop: operator kind X/Z, winding direction, color-code color."""

    operator_kind: str  # 'X' or 'Z'
    direction: str      # 'h' or 'v'
    color: str | None = None

    def __post_init__(self):
        if self.operator_kind not in ("X", "Z"):
            raise ValueError("operator_kind must be 'X' or 'Z'")
        if self.direction not in ("h", "v"):
            raise ValueError("direction must be 'h' or 'v'")
        if self.color is not None and self.color not in COLOR_NAMES:
            raise ValueError(f"color must be one of {COLOR_NAMES}")


@dataclass(eq=False)
class CodeLattice:
    """Periodic code lattice; treat as immutable after construction.

    ``loop_supports`` is keyed by ``(kind, direction)`` for the Kitaev code
    (X and Z loops in the same direction live on parallel but distinct edge
    rows) and by ``(direction, color)`` for the color code (X and Z loops of
    one color share their support).
    """

    kind: str
    n_qubits: int
    dims: tuple
    plaquettes: tuple
    vertices: tuple = ()
    plaquette_colors: tuple = ()
    edges: tuple = ()
    loop_supports: dict = None
    qubit_coords: tuple = ()

    @property
    def n_plaquettes(self) -> int:
        return len(self.plaquettes)

    def loop_support(self, spec: LoopSpec) -> tuple:
        if self.kind == "kitaev":
            if spec.color is not None:
                raise LatticeError("kitaev loops carry no color")
            return self.loop_supports[(spec.operator_kind.lower(), spec.direction)]
        if spec.color is None:
            raise LatticeError("color-code loops need a color")
        return self.loop_supports[(spec.direction, spec.color)]

    def neighbors(self, q: int) -> tuple:
        """Qubits sharing a lattice edge with q (color code only)."""
        out = set()
        for a, b in self.edges:
            if a == q:
                out.add(b)
            elif b == q:
                out.add(a)
        return tuple(sorted(out))


# ---------------------------------------------------------------------------
# Kitaev code
# ---------------------------------------------------------------------------

def build_kitaev(nph: int, npv: int) -> CodeLattice:
    """Kitaev code on an nph x npv plaquette grid with periodic boundaries."""
    if nph < 2 or npv < 2:
        raise LatticeError("need at least 2 plaquettes per direction (loops degenerate)")
    n = 2 * nph * npv

    def h(r, c):
        return (r % npv) * 2 * nph + (c % nph)

    def v(r, c):
        return (r % npv) * 2 * nph + nph + (c % nph)

    vertices = tuple(
        tuple(sorted((h(r, c), h(r, c - 1), v(r, c), v(r - 1, c))))
        for r in range(npv) for c in range(nph)
    )
    plaquettes = tuple(
        tuple(sorted((h(r, c), h(r + 1, c), v(r, c), v(r, c + 1))))
        for r in range(npv) for c in range(nph)
    )

    # Loop rows follow the published pictures: the X loop runs through the
    # middle plaquette row r0, the Z loop along the vertex line just above it.
    r0 = (npv - 1) // 2
    c0 = (nph - 1) // 2
    r1 = (r0 + 1) % npv
    c1 = (c0 + 1) % nph
    loops = {
        ("x", "h"): tuple(v(r0, c) for c in range(nph)),
        ("z", "h"): tuple(h(r1, c) for c in range(nph)),
        ("x", "v"): tuple(h(r, c0) for r in range(npv)),
        ("z", "v"): tuple(v(r, c1) for r in range(npv)),
    }

    coords = [None] * n
    for r in range(npv):
        for c in range(nph):
            coords[h(r, c)] = (c + 0.5, float(r))
            coords[v(r, c)] = (float(c), r + 0.5)

    return CodeLattice(
        kind="kitaev",
        n_qubits=n,
        dims=(nph, npv),
        plaquettes=plaquettes,
        vertices=vertices,
        loop_supports=loops,
        qubit_coords=tuple(coords),
    )


def kitaev_loop_rows(lat: CodeLattice) -> dict:
    """Row/column indices the default loops occupy (used by setup and witness rules)."""
    nph, npv = lat.dims
    r0 = (npv - 1) // 2
    c0 = (nph - 1) // 2
    return {
        ("x", "h"): r0, ("z", "h"): (r0 + 1) % npv,
        ("x", "v"): c0, ("z", "v"): (c0 + 1) % nph,
    }


# ---------------------------------------------------------------------------
# Color code
# ---------------------------------------------------------------------------

def build_color(cols: int, rows: int) -> CodeLattice:
    """Color code on a periodic brick-wall honeycomb of cols x rows hexagons."""
    if cols < 3 or cols % 3 != 0:
        raise LatticeError(
            f"cols={cols} is not 3-colorable under periodic wrap (need cols % 3 == 0, cols >= 3)"
        )
    if rows < 2 or rows % 2 != 0:
        raise LatticeError(
            f"rows={rows} breaks the brick offset at the seam (need even rows >= 2)"
        )
    width = 2 * cols
    n = width * rows

    def vid(x, y):
        return (y % rows) * width + (x % width)

    edges = []
    for y in range(rows):
        for x in range(width):
            edges.append((vid(x, y), vid(x + 1, y)))
            if (x + y) % 2 == 0:
                edges.append((vid(x, y), vid(x, y + 1)))
    edges = tuple(tuple(sorted(e)) for e in edges)

    plaquettes = []
    colors = []
    anchors = []
    for b in range(rows):
        for a in range(width):
            if (a + b) % 2 == 0:
                plaquettes.append(tuple(sorted(
                    vid(a + d, b + e) for d in range(3) for e in range(2)
                )))
                colors.append(COLOR_NAMES[a % 3])
                anchors.append((a, b))

    loops = {}
    for color in COLOR_NAMES:
        for direction in ("h", "v"):
            loops[(direction, color)] = _color_loop_support(
                cols, rows, plaquettes, colors, anchors, color, direction
            )

    coords = tuple((float(x), float(y)) for y in range(rows) for x in range(width))
    return CodeLattice(
        kind="color",
        n_qubits=n,
        dims=(cols, rows),
        plaquettes=tuple(plaquettes),
        plaquette_colors=tuple(colors),
        edges=edges,
        loop_supports=loops,
        qubit_coords=coords,
    )


def _color_faces_of_vertex(x, y):
    """Unwrapped anchors of the three faces containing vertex (x, y)."""
    if (x + y) % 2 == 0:
        return ((x - 2, y), (x, y), (x - 1, y - 1))
    return ((x - 1, y), (x - 2, y - 1), (x, y - 1))


def _color_loop_support(cols, rows, plaquettes, colors, anchors, color, direction):
    """Shortest closed walk of ``color``-colored links winding once in ``direction``.

    Links of a color connect same-color plaquettes; the walk is found by BFS on
    the lifted (unwrapped) shrunk lattice, so the winding numbers are exact.
    """
    width = 2 * cols
    idx = {anchor: i for i, anchor in enumerate(anchors)}
    want = COLOR_NAMES.index(color)

    def face_at(a, b):
        return idx[(a % width, b % rows)]

    # collect colored links: (face_u, face_v, lift da, lift db, qubits)
    links = []
    for y in range(rows):
        for x in range(width):
            candidates = [((x, y), (x + 1, y))]
            if (x + y) % 2 == 0:
                candidates.append(((x, y), (x, y + 1)))
            for (ux, uy), (wx, wy) in candidates:
                fu = [f for f in _color_faces_of_vertex(ux, uy) if f[0] % 3 == want]
                fv = [f for f in _color_faces_of_vertex(wx, wy) if f[0] % 3 == want]
                if len(fu) != 1 or len(fv) != 1 or fu[0] == fv[0]:
                    continue  # link not of this color
                (au, bu), (av, bv) = fu[0], fv[0]
                q1 = (uy % rows) * width + (ux % width)
                q2 = (wy % rows) * width + (wx % width)
                links.append((face_at(au, bu), face_at(av, bv),
                              av - au, bv - bu, (q1, q2)))

    target = (width, 0) if direction == "h" else (0, rows)
    best = None
    for start in {l[0] for l in links}:
        found = _lifted_cycle(links, start, target, width, rows)
        if found is not None and (best is None or len(found) < len(best)):
            best = found
    if best is None:
        raise LatticeError(f"no {direction} loop of color {color!r} found")
    support = []
    for qpair in best:
        for q in qpair:
            if q not in support:
                support.append(q)
    return tuple(support)


def _lifted_cycle(links, start, target, width, rows):
    """BFS from ``start`` back to itself with lift equal to +-``target``."""
    from collections import deque

    adj = {}
    for fu, fv, da, db, qubits in links:
        adj.setdefault(fu, []).append((fv, da, db, qubits))
        adj.setdefault(fv, []).append((fu, -da, -db, qubits))
    lim_a, lim_b = width + 3, rows + 1
    init = (start, 0, 0)
    seen = {init: None}
    queue = deque([init])
    goals = {(start, target[0], target[1]), (start, -target[0], -target[1])}
    while queue:
        node = queue.popleft()
        f, da, db = node
        for g, ea, eb, qubits in adj.get(f, ()):
            nxt = (g, da + ea, db + eb)
            if abs(nxt[1]) > lim_a or abs(nxt[2]) > lim_b or nxt in seen:
                continue
            seen[nxt] = (node, qubits)
            if nxt in goals:
                path = []
                cur = nxt
                while seen[cur] is not None:
                    cur, qp = seen[cur]
                    path.append(qp)
                return path[::-1]
            queue.append(nxt)
    return None


# ---------------------------------------------------------------------------
# Stabilizers, loops, ground states
# ---------------------------------------------------------------------------

def stabilizer_generators(lat: CodeLattice) -> list:
    """All plaquette/vertex stabilizer strings (Z-type first, then X-type)."""
    n = lat.n_qubits
    if lat.kind == "kitaev":
        zs = [PauliString.from_factors(n, {q: "Z" for q in p}) for p in lat.plaquettes]
        xs = [PauliString.from_factors(n, {q: "X" for q in v}) for v in lat.vertices]
    else:
        zs = [PauliString.from_factors(n, {q: "Z" for q in p}) for p in lat.plaquettes]
        xs = [PauliString.from_factors(n, {q: "X" for q in p}) for p in lat.plaquettes]
    return zs + xs


def loop_operator(lat: CodeLattice, spec: LoopSpec) -> PauliString:
    support = lat.loop_support(spec)
    return PauliString.from_factors(
        lat.n_qubits, {q: spec.operator_kind for q in support}
    )


def _project_onto(stabilizer: PauliString, v: np.ndarray) -> np.ndarray:
    return 0.5 * (v + apply_pauli(stabilizer, v))


def stabilizer_ground_state(lat: CodeLattice, sector=None) -> np.ndarray:
    """Zero-field stabilizer ground state for the requested loop sector.

    Kitaev sectors are (a, b) exponents of the two X loops; color sectors are
    (a1, a2, b1, b2) exponents of the r/g X loops in each direction.  The
    projector chain runs on the all-zeros state and is normalized once at the
    end.
    """
    n = lat.n_qubits
    v = np.zeros(1 << n)
    v[0] = 1.0
    if lat.kind == "kitaev":
        sector = (0, 0) if sector is None else tuple(sector)
        for star in lat.vertices:
            v = _project_onto(PauliString.from_factors(n, {q: "X" for q in star}), v)
        loop_specs = [LoopSpec("X", "h"), LoopSpec("X", "v")]
    else:
        sector = (0, 0, 0, 0) if sector is None else tuple(sector)
        for plaq in lat.plaquettes:
            v = _project_onto(PauliString.from_factors(n, {q: "X" for q in plaq}), v)
        loop_specs = [
            LoopSpec("X", "h", "r"), LoopSpec("X", "h", "g"),
            LoopSpec("X", "v", "r"), LoopSpec("X", "v", "g"),
        ]
    if any(e not in (0, 1) for e in sector):
        raise ValueError("sector exponents must be 0 or 1")
    for exponent, spec in zip(sector, loop_specs):
        if exponent:
            v = apply_pauli(loop_operator(lat, spec), v)
    return v / np.linalg.norm(v)


def state_stabilizer_generators(lat: CodeLattice) -> list:
    """Full-rank generator set of the default-sector stabilizer state.

    Drops one dependent generator of each type and appends the two Z loops
    that pin the default sector.
    """
    n = lat.n_qubits
    gens = stabilizer_generators(lat)
    half = len(gens) // 2
    kept = gens[: half - 1] + gens[half: 2 * half - 1]
    if lat.kind == "kitaev":
        kept += [loop_operator(lat, LoopSpec("Z", "h")),
                 loop_operator(lat, LoopSpec("Z", "v"))]
    else:
        kept += [loop_operator(lat, LoopSpec("Z", "h", "r")),
                 loop_operator(lat, LoopSpec("Z", "v", "g"))]
    assert len(kept) == n
    return kept


# ---------------------------------------------------------------------------
# GF(2) helpers (columns encoded as python ints over vertex rows)
# ---------------------------------------------------------------------------

def _gf2_reduce(vec, basis):
    """Reduce vec against (vector, combo) pairs; returns (residue, combo)."""
    combo = 0
    for bvec, bcombo in basis:
        pivot = bvec & -bvec
        if vec & pivot:
            vec ^= bvec
            combo ^= bcombo
    return vec, combo


def _gf2_solve_subset(columns, target):
    """Find a subset of ``columns`` (id, vec) XOR-ing to ``target``, else None."""
    basis = []
    for cid, vec in columns:
        res, combo = _gf2_reduce(vec, basis)
        if res:
            basis.append((res, combo | (1 << cid)))
    res, combo = _gf2_reduce(target, basis)
    if res:
        return None
    return [i for i in range(combo.bit_length()) if (combo >> i) & 1]


def _gf2_greedy_basis(columns, rank, required_count):
    """Pick the first ``rank`` independent columns; the first ``required_count``
    entries must all be chosen, else None."""
    basis = []
    chosen = []
    for pos, (cid, vec) in enumerate(columns):
        res, _ = _gf2_reduce(vec, [(b, 0) for b in basis])
        if res:
            basis.append(res)
            chosen.append(cid)
        elif pos < required_count:
            return None
        if len(chosen) == rank:
            return chosen
    return None


# ---------------------------------------------------------------------------
# Graph-state equivalence
# ---------------------------------------------------------------------------

@dataclass
class GraphEquivalence:
    """Certificate that Hadamards on ``s_c`` map the code state to a graph state."""

    s_c: tuple            # qubits receiving a Hadamard
    adjacency: np.ndarray  # N x N boolean adjacency of the graph
    omega: tuple
    hub: int
    star_edges: tuple     # edges of the induced star over omega
    info_set: tuple       # non-Hadamard qubits (one basis of the code's X support)


def hadamard_conjugate(p: PauliString, qubits) -> PauliString:
    """Conjugate by Hadamards on ``qubits`` (X <-> Z, sign flips per Y there)."""
    mask = 0
    for q in qubits:
        mask |= 1 << q
    y_flips = (p.x & p.z & mask).bit_count()
    x = (p.x & ~mask) | (p.z & mask)
    z = (p.z & ~mask) | (p.x & mask)
    sign = p.sign * (-1 if y_flips % 2 else 1)
    return PauliString(p.n_qubits, x, z, sign)


def group_sign(p: PauliString, generators) -> int | None:
    """Sign with which ``p`` occurs in the group generated by ``generators``.

    Returns +1 or -1 when the unsigned string is a product of generators
    (compared against ``p.sign``... the caller reads: ``p`` equals returned
    sign times the group element with matching X/Z pattern), None otherwise.
    """
    n = p.n_qubits
    cols = []
    for i, g in enumerate(generators):
        cols.append((i, _symplectic_int(g, n)))
    combo = _gf2_solve_subset(cols, _symplectic_int(p, n))
    if combo is None:
        return None
    if not combo:
        product = PauliString.identity(n)
    else:
        product = multiply_strings([generators[i] for i in combo])
    return p.sign * product.sign


def _symplectic_int(p: PauliString, n: int) -> int:
    return p.x | (p.z << n)


def _star_columns(lat: CodeLattice):
    """Columns of the X-support generator matrix, one int per qubit.

    Rows are the X-type stabilizers whose span is the ground state's
    computational-basis support (vertex stars for Kitaev).
    """
    supports = lat.vertices if lat.kind == "kitaev" else lat.plaquettes
    cols = [0] * lat.n_qubits
    for row, sup in enumerate(supports):
        for q in sup:
            cols[q] |= 1 << row
    return cols


def graph_equivalent(lat: CodeLattice, spec: LoopSpec) -> GraphEquivalence:
    """Hadamard set and graph for the default-sector state, with a star over the loop.

    Searches both placements of the hub (Hadamarded or kept) and every hub
    choice within the loop; raises LatticeError when no certificate exists.
    """
    if lat.kind != "kitaev":
        raise LatticeError("graph equivalence is implemented for the Kitaev code only")
    omega = lat.loop_support(spec)
    cols = _star_columns(lat)
    rank = len(lat.vertices) - 1
    n = lat.n_qubits

    for hub in reversed(omega):
        leaves = [q for q in omega if q != hub]
        result = _try_hub_hadamarded(cols, rank, n, omega, hub, leaves)
        if result is None:
            result = _try_hub_kept(cols, rank, n, omega, hub, leaves)
        if result is not None:
            info_set = result
            adjacency = _bipartite_adjacency(cols, info_set, n)
            star = tuple(sorted((hub, leaf) if hub < leaf else (leaf, hub)
                                for leaf in leaves))
            eq = GraphEquivalence(
                s_c=tuple(q for q in range(n) if q not in set(info_set)),
                adjacency=adjacency,
                omega=omega,
                hub=hub,
                star_edges=star,
                info_set=tuple(info_set),
            )
            if _star_certified(eq):
                return eq
    raise LatticeError(f"no Hadamard set yields a star over the loop {spec}")


def _try_hub_hadamarded(cols, rank, n, omega, hub, leaves):
    """Hub in the Hadamard set: leaves enter the kept basis and must expand the
    hub column together with columns outside the loop."""
    target = 0
    for q in omega:
        target ^= cols[q]
    outside = [(q, cols[q]) for q in range(n) if q not in set(omega)]
    mu = _gf2_solve_subset(outside, target)
    if mu is None:
        return None
    ordered = ([(q, cols[q]) for q in leaves]
               + [(q, cols[q]) for q in mu]
               + [(q, c) for q, c in outside if q not in set(mu)])
    return _gf2_greedy_basis(ordered, rank, len(leaves) + len(mu))


def _try_hub_kept(cols, rank, n, omega, hub, leaves):
    """Hub kept: need a codeword covering the whole loop whose support,
    apart from the hub, avoids the kept basis."""
    # solve for row combo w with (w . S) = 1 on omega
    om = list(omega)
    constraint_cols = []
    n_rows = max(c.bit_length() for c in cols)
    for r in range(n_rows):
        vec = 0
        for j, q in enumerate(om):
            if (cols[q] >> r) & 1:
                vec |= 1 << j
        constraint_cols.append((r, vec))
    ones = (1 << len(om)) - 1
    w = _gf2_solve_subset(constraint_cols, ones)
    if w is None:
        return None
    codeword = set()
    for q in range(n):
        bit = 0
        for r in w:
            bit ^= (cols[q] >> r) & 1
        if bit:
            codeword.add(q)
    if not set(omega) <= codeword:
        return None
    banned = (codeword | set(omega)) - {hub}
    ordered = [(hub, cols[hub])] + [(q, cols[q]) for q in range(n) if q not in banned and q != hub]
    return _gf2_greedy_basis(ordered, rank, 1)


def _bipartite_adjacency(cols, info_set, n):
    """Adjacency of the graph state: kept qubit i links to Hadamarded j iff the
    unique codeword through i alone crosses j."""
    basis = []
    for q in info_set:
        res, combo = _gf2_reduce(cols[q], basis)
        basis.append((res, combo | (1 << q)))
    adj = np.zeros((n, n), dtype=bool)
    kept = set(info_set)
    for j in range(n):
        if j in kept:
            continue
        res, combo = _gf2_reduce(cols[j], basis)
        assert res == 0, "column outside code span"
        for i in info_set:
            if (combo >> i) & 1:
                adj[i, j] = adj[j, i] = True
    return adj


def _star_certified(eq: GraphEquivalence) -> bool:
    sub = eq.adjacency[np.ix_(eq.omega, eq.omega)]
    pos = {q: i for i, q in enumerate(eq.omega)}
    want = np.zeros_like(sub)
    for a, b in eq.star_edges:
        want[pos[a], pos[b]] = want[pos[b], pos[a]] = True
    return bool(np.array_equal(sub, want))


def graph_generators(eq: GraphEquivalence, n: int) -> list:
    """Graph-state generators K_i = X_i prod_{j ~ i} Z_j for the certificate graph."""
    out = []
    for i in range(n):
        factors = {i: "X"}
        for j in np.flatnonzero(eq.adjacency[i]):
            factors[int(j)] = "Z"
        out.append(PauliString.from_factors(n, factors))
    return out


def graph_state_vector(n: int, adjacency: np.ndarray) -> np.ndarray:
    """Dense graph state via the controlled-phase construction (test oracle)."""
    dim = 1 << n
    idx = np.arange(dim)
    bits = (idx[:, None] >> np.arange(n)[None, :]) & 1
    v = np.ones(dim) / np.sqrt(dim)
    for i in range(n):
        for j in range(i + 1, n):
            if adjacency[i, j]:
                v = v * np.where((bits[:, i] & bits[:, j]) == 1, -1.0, 1.0)
    return v


def lattice_description(lat: CodeLattice) -> dict:
    """JSON-ready description: coordinates and membership lists."""
    desc = {
        "kind": lat.kind,
        "dims": list(lat.dims),
        "n_qubits": lat.n_qubits,
        "qubit_coords": [list(c) for c in lat.qubit_coords],
        "plaquettes": [list(p) for p in lat.plaquettes],
        "loops": {
            "/".join(str(part) for part in key): list(sup)
            for key, sup in lat.loop_supports.items()
        },
    }
    if lat.kind == "kitaev":
        desc["vertices"] = [list(v) for v in lat.vertices]
    else:
        desc["plaquette_colors"] = list(lat.plaquette_colors)
        desc["edges"] = [list(e) for e in lat.edges]
    return desc
