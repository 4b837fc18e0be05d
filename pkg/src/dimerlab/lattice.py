"""Periodic bipartite graph specifications, flatness checks, and torus enumeration.

A graph is given by one fundamental domain of a Z^2-periodic bipartite planar
graph: n white and n black vertices, a list of weighted signed edges with
domain offsets, and a planar realization (vertex coordinates plus two period
vectors). Loading validates the combinatorial and sign structure; in
particular every face of the induced torus embedding must carry the correct
alternating sign product, which is what makes signed edge weights usable as
Kasteleyn entries downstream.

Small tori can be enumerated exactly (all perfect matchings, rational
arithmetic), which serves as the ground-truth oracle for everything else.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = [
    "GraphSpecError",
    "FlatnessError",
    "PatternError",
    "VertexRef",
    "EdgeSpec",
    "GraphSpec",
    "Pattern",
    "TorusEnumeration",
    "load_graph_spec",
    "load_pattern_spec",
    "validate_pattern",
    "enumerate_torus",
    "bundled_graph_path",
    "bundled_graph_names",
]

TORUS_VERTEX_BUDGET = 36


class GraphSpecError(ValueError):
    """Raised when a graph specification is malformed or inconsistent."""


class FlatnessError(GraphSpecError):
    """Raised when a face violates the alternating sign condition."""


class PatternError(ValueError):
    """Raised when a pattern is malformed relative to its graph."""


# ---------------------------------------------------------------------------
# data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VertexRef:
    """A vertex of the infinite graph: color, index in the domain, domain offset."""

    color: str
    index: int
    offset: tuple[int, int] = (0, 0)

    def translated(self, shift: tuple[int, int]) -> "VertexRef":
        return VertexRef(
            self.color, self.index,
            (self.offset[0] + shift[0], self.offset[1] + shift[1]),
        )


@dataclass(frozen=True)
class EdgeSpec:
    """One edge class of the fundamental domain.

    The edge joins white vertex `white` in domain (0, 0) to black vertex
    `black` in domain `offset`. Its Kasteleyn entry is
    sign * weight * z**(-dy) * w**(dx) for offset (dx, dy).
    """

    id: str
    white: int
    black: int
    offset: tuple[int, int]
    weight: float
    sign: complex

    def white_ref(self, shift: tuple[int, int] = (0, 0)) -> VertexRef:
        return VertexRef("white", self.white, shift)

    def black_ref(self, shift: tuple[int, int] = (0, 0)) -> VertexRef:
        return VertexRef(
            "black", self.black,
            (self.offset[0] + shift[0], self.offset[1] + shift[1]),
        )


@dataclass
class GraphSpec:
    """A validated periodic bipartite graph with planar realization.

    Attributes
    ----------
    name : str
        Label from the source file.
    n : int
        Number of white (= black) vertices per fundamental domain.
    edges : list[EdgeSpec]
        Edge classes, in source order.
    white_pos, black_pos : ndarray, shape (n, 2)
        Vertex coordinates after rescaling to a unit-area domain.
    periods : ndarray, shape (2, 2)
        Period vectors as rows, after rescaling.
    rescale_factor : float
        Factor applied to the source realization so |det periods| = 1.
    graph_hash : str
        Stable hash of the combinatorial + geometric content.
    """

    name: str
    n: int
    edges: list[EdgeSpec]
    white_pos: np.ndarray
    black_pos: np.ndarray
    periods: np.ndarray
    rescale_factor: float
    graph_hash: str

    # -- lookups -----------------------------------------------------------

    def edge_by_id(self, edge_id: str) -> EdgeSpec:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise GraphSpecError(f"graph {self.name!r} has no edge with id {edge_id!r}")

    def edges_at_white(self, i: int) -> list[EdgeSpec]:
        return [e for e in self.edges if e.white == i]

    def edges_at_black(self, j: int) -> list[EdgeSpec]:
        return [e for e in self.edges if e.black == j]

    def vertex_position(self, v: VertexRef) -> np.ndarray:
        base = self.white_pos[v.index] if v.color == "white" else self.black_pos[v.index]
        return base + np.asarray(v.offset, dtype=float) @ self.periods

    def kasteleyn_entry_terms(self) -> list[tuple[int, int, complex, int, int]]:
        """All matrix monomials as (white, black, coeff, zpow, wpow)."""
        terms = []
        for e in self.edges:
            dx, dy = e.offset
            terms.append((e.white, e.black, e.sign * e.weight, -dy, dx))
        return terms

    def kasteleyn_matrix(self, z: complex, w: complex) -> np.ndarray:
        """Evaluate the n x n Fourier-transformed Kasteleyn matrix at (z, w)."""
        K = np.zeros((self.n, self.n), dtype=complex)
        for i, j, c, zp, wp in self.kasteleyn_entry_terms():
            K[i, j] += c * z**zp * w**wp
        return K


@dataclass(frozen=True)
class Pattern:
    """A finite set of edge instances with a marked vertex.

    `edges` lists (edge_id, domain offset) pairs; instances must be distinct
    and vertex-disjoint, and `marked` must be one of their endpoints.
    """

    edges: tuple[tuple[str, tuple[int, int]], ...]
    marked: VertexRef

    def translated(self, shift: tuple[int, int]) -> "Pattern":
        moved = tuple(
            (eid, (off[0] + shift[0], off[1] + shift[1])) for eid, off in self.edges
        )
        return Pattern(moved, self.marked.translated(shift))


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------


def _as_spec_dict(source) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, Path):
        text = source.read_text()
    elif isinstance(source, str):
        text = Path(source).read_text() if not source.lstrip().startswith("{") else source
    else:
        raise GraphSpecError(f"unsupported graph spec source type {type(source)!r}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphSpecError(f"graph spec is not valid JSON: {exc}") from exc


def _parse_sign(raw) -> complex:
    if isinstance(raw, (int, float)):
        s = complex(raw)
    elif isinstance(raw, (list, tuple)) and len(raw) == 2:
        s = complex(raw[0], raw[1])
    else:
        raise GraphSpecError(f"edge sign must be a number or [re, im] pair, got {raw!r}")
    if abs(abs(s) - 1.0) > 1e-12:
        raise GraphSpecError(f"edge sign must have modulus 1, got {raw!r}")
    return s


def load_graph_spec(source) -> GraphSpec:
    """Parse, validate, and rescale a graph specification.

    `source` may be a path, a JSON string, or an already-parsed dict. The
    realization is rescaled so the fundamental domain has unit area (the
    factor is recorded on the result). Raises GraphSpecError on structural
    problems and FlatnessError, naming the offending face, when the edge
    signs are not flat.
    """
    spec = _as_spec_dict(source)
    try:
        name = spec["name"]
        nw = int(spec["vertices"]["white"])
        nb = int(spec["vertices"]["black"])
        raw_edges = spec["edges"]
        realization = spec["realization"]
    except (KeyError, TypeError) as exc:
        raise GraphSpecError(f"graph spec missing required field: {exc}") from exc

    if nw != nb:
        raise GraphSpecError(
            f"graph {name!r} must have equal color counts, got {nw} white / {nb} black"
        )
    n = nw

    edges: list[EdgeSpec] = []
    seen_ids = set()
    for k, re_ in enumerate(raw_edges):
        try:
            eid = str(re_["id"])
            wi, bj = int(re_["w"]), int(re_["b"])
            dx, dy = (int(re_["offset"][0]), int(re_["offset"][1]))
            weight = float(re_["weight"])
            sign = _parse_sign(re_["sign"])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise GraphSpecError(f"edge entry {k} of graph {name!r} is malformed: {exc}") from exc
        if eid in seen_ids:
            raise GraphSpecError(f"graph {name!r} repeats edge id {eid!r}")
        seen_ids.add(eid)
        if not (0 <= wi < n and 0 <= bj < n):
            raise GraphSpecError(
                f"edge {eid!r} of graph {name!r} references vertex out of range"
            )
        if not (weight > 0) or not math.isfinite(weight):
            raise GraphSpecError(
                f"edge {eid!r} of graph {name!r} has nonpositive weight {weight}"
            )
        edges.append(EdgeSpec(eid, wi, bj, (dx, dy), weight, sign))

    if not edges:
        raise GraphSpecError(f"graph {name!r} has no edges")

    for i in range(n):
        if not any(e.white == i for e in edges):
            raise GraphSpecError(f"white vertex {i} of graph {name!r} has degree 0")
        if not any(e.black == i for e in edges):
            raise GraphSpecError(f"black vertex {i} of graph {name!r} has degree 0")

    try:
        white_pos = np.asarray(realization["white"], dtype=float).reshape(n, 2)
        black_pos = np.asarray(realization["black"], dtype=float).reshape(n, 2)
        periods = np.asarray(realization["periods"], dtype=float).reshape(2, 2)
    except (KeyError, ValueError, TypeError) as exc:
        raise GraphSpecError(f"realization of graph {name!r} is malformed: {exc}") from exc

    area = abs(float(np.linalg.det(periods)))
    if area <= 0 or not math.isfinite(area):
        raise GraphSpecError(f"periods of graph {name!r} are degenerate")
    scale = 1.0 / math.sqrt(area)

    g = GraphSpec(
        name=name,
        n=n,
        edges=edges,
        white_pos=white_pos * scale,
        black_pos=black_pos * scale,
        periods=periods * scale,
        rescale_factor=scale,
        graph_hash=_hash_spec(name, n, edges, white_pos, black_pos, periods),
    )
    _check_flatness(g)
    return g


def _hash_spec(name, n, edges, white_pos, black_pos, periods) -> str:
    canon = {
        "name": name,
        "n": n,
        "edges": [
            [e.id, e.white, e.black, list(e.offset), repr(e.weight),
             repr(e.sign.real), repr(e.sign.imag)]
            for e in sorted(edges, key=lambda e: e.id)
        ],
        "white": [[repr(x) for x in row] for row in np.asarray(white_pos)],
        "black": [[repr(x) for x in row] for row in np.asarray(black_pos)],
        "periods": [[repr(x) for x in row] for row in np.asarray(periods)],
    }
    blob = json.dumps(canon, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# faces and the alternating sign condition
# ---------------------------------------------------------------------------

# Faces of the torus embedding are traced with the rotation system induced by
# the realization: incident edges are sorted by angle around each vertex, and
# each directed edge hands off to the next one around the face it borders.


def _incident_directions(g: GraphSpec):
    """For each (color, index): list of (edge index, direction vector)."""
    around: dict[tuple[str, int], list[tuple[int, np.ndarray]]] = {}
    for k, e in enumerate(g.edges):
        shift = np.asarray(e.offset, dtype=float) @ g.periods
        d_wb = g.black_pos[e.black] + shift - g.white_pos[e.white]
        if np.hypot(*d_wb) < 1e-12:
            raise GraphSpecError(
                f"edge {e.id!r} of graph {g.name!r} has coincident endpoints"
            )
        around.setdefault(("white", e.white), []).append((k, d_wb))
        around.setdefault(("black", e.black), []).append((k, -d_wb))
    for key, lst in around.items():
        lst.sort(key=lambda kd: math.atan2(kd[1][1], kd[1][0]))
    return around


def _trace_faces(g: GraphSpec):
    """Return faces as lists of (edge index, +1 if traversed white-to-black).

    Also returns, per face, the total domain winding accumulated along the
    boundary; a consistent planar realization gives winding (0, 0) for every
    face.
    """
    around = _incident_directions(g)
    order: dict[tuple[str, int], list[int]] = {k: [e for e, _ in v] for k, v in around.items()}

    def next_dart(edge_idx: int, orient: int):
        # Arrive at the head of the dart; leave along the previous edge in
        # counterclockwise order around the head (clockwise-next), which
        # traces each face once.
        e = g.edges[edge_idx]
        head = ("black", e.black) if orient > 0 else ("white", e.white)
        ring = order[head]
        pos = ring.index(edge_idx)
        nxt = ring[(pos - 1) % len(ring)]
        return nxt, -orient

    faces = []
    seen: set[tuple[int, int]] = set()
    for start_edge in range(len(g.edges)):
        for start_orient in (+1, -1):
            if (start_edge, start_orient) in seen:
                continue
            face = []
            winding = np.zeros(2, dtype=int)
            dart = (start_edge, start_orient)
            while dart not in seen:
                seen.add(dart)
                face.append(dart)
                ei, orient = dart
                winding += orient * np.asarray(g.edges[ei].offset, dtype=int)
                dart = next_dart(ei, orient)
            faces.append((face, tuple(winding)))
    return faces


def _face_label(g: GraphSpec, face) -> str:
    return " -> ".join(
        f"{g.edges[ei].id}({'wb' if o > 0 else 'bw'})" for ei, o in face
    )


def _check_flatness(g: GraphSpec) -> None:
    faces = _trace_faces(g)
    total_darts = sum(len(f) for f, _ in faces)
    if total_darts != 2 * len(g.edges):
        raise GraphSpecError(f"graph {g.name!r}: face tracing is inconsistent")
    for face, winding in faces:
        if winding != (0, 0):
            raise GraphSpecError(
                f"graph {g.name!r}: face [{_face_label(g, face)}] has nonzero "
                f"domain winding {winding}; realization and offsets disagree"
            )
        if len(face) % 2 != 0:
            raise GraphSpecError(
                f"graph {g.name!r}: face [{_face_label(g, face)}] has odd length"
            )
        k = len(face) // 2
        prod = complex(1.0)
        for ei, orient in face:
            s = g.edges[ei].sign
            prod *= s if orient > 0 else 1.0 / s
        want = -1.0 if k % 2 == 0 else 1.0
        # a face with 2k edges needs alternating sign product (-1)^(k+1)
        if abs(prod - want) > 1e-9:
            raise FlatnessError(
                f"graph {g.name!r}: face [{_face_label(g, face)}] has alternating "
                f"sign product {prod:.6g}, expected {want:+.0f}"
            )


# ---------------------------------------------------------------------------
# patterns
# ---------------------------------------------------------------------------


def load_pattern_spec(source, graph: GraphSpec) -> Pattern:
    """Parse a pattern description (path, JSON text, or dict) and validate it."""
    if isinstance(source, dict):
        spec = source
    else:
        text = source if str(source).lstrip().startswith("{") else Path(source).read_text()
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PatternError(f"pattern spec is not valid JSON: {exc}") from exc
    try:
        marked_raw = spec["marked"]
        marked = VertexRef(
            str(marked_raw["color"]),
            int(marked_raw["index"]),
            (int(marked_raw["offset"][0]), int(marked_raw["offset"][1])),
        )
        edges = tuple(
            (str(it["id"]), (int(it["offset"][0]), int(it["offset"][1])))
            for it in spec["edges"]
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise PatternError(f"pattern spec is malformed: {exc}") from exc
    pat = Pattern(edges, marked)
    validate_pattern(graph, pat)
    return pat


def pattern_vertices(graph: GraphSpec, pattern: Pattern) -> list[VertexRef]:
    """All endpoint vertices of the pattern's edge instances, in edge order."""
    out = []
    for eid, off in pattern.edges:
        e = graph.edge_by_id(eid)
        out.append(e.white_ref(off))
        out.append(e.black_ref(off))
    return out


def validate_pattern(graph: GraphSpec, pattern: Pattern) -> None:
    """Check distinctness, vertex-disjointness, and the marked vertex.

    Raises PatternError with a specific message on the first violation.
    """
    if not pattern.edges:
        raise PatternError("pattern has no edges")
    if pattern.marked.color not in ("white", "black"):
        raise PatternError(f"marked vertex color {pattern.marked.color!r} is invalid")
    if len(set(pattern.edges)) != len(pattern.edges):
        raise PatternError("pattern repeats an edge instance")
    verts = pattern_vertices(graph, pattern)  # raises on unknown edge id
    if len(set(verts)) != len(verts):
        dup = [v for v in verts if verts.count(v) > 1][0]
        raise PatternError(
            f"pattern edges are not vertex-disjoint: {dup.color} {dup.index} "
            f"at offset {dup.offset} is shared"
        )
    if pattern.marked not in set(verts):
        raise PatternError("marked vertex is not an endpoint of the pattern")


# ---------------------------------------------------------------------------
# exact torus enumeration
# ---------------------------------------------------------------------------


@dataclass
class TorusEnumeration:
    """Exact partition data of an L x L torus quotient.

    `Z` is the weighted matching count (exact rational), `n_matchings` the
    unweighted count, and `marginals` maps edge id to the exact probability
    that the instance in domain (0, 0) is matched, or None when Z = 0.
    Instance counts for every domain are kept for translation checks.
    """

    L: int
    Z: Fraction
    n_matchings: int
    marginals: dict[str, Fraction] | None
    instance_counts: dict[tuple[str, tuple[int, int]], Fraction]


def enumerate_torus(graph: GraphSpec, L: int, constraint=None) -> TorusEnumeration:
    """Enumerate all perfect matchings of the L x L torus quotient exactly.

    Arithmetic is exact (weights are dyadic floats, hence exact Fractions),
    so vertex marginal sums equal 1 identically. `constraint` may be a list
    of (edge_id, (mx, my)) instances forced to be present; Z and marginals
    are then for the conditioned ensemble. Graphs beyond the vertex budget
    (2 n L^2 > 36) are rejected.
    """
    n_vertices = 2 * graph.n * L * L
    if n_vertices > TORUS_VERTEX_BUDGET:
        raise GraphSpecError(
            f"torus enumeration budget exceeded: {n_vertices} vertices > "
            f"{TORUS_VERTEX_BUDGET}"
        )
    if L < 1:
        raise GraphSpecError("torus size must be at least 1")

    nwhite = graph.n * L * L

    def wid(i: int, mx: int, my: int) -> int:
        return (i * L + mx) * L + my

    # adjacency: per white instance, the (black instance, edge class, domain)
    adj: list[list[tuple[int, int, tuple[int, int]]]] = [[] for _ in range(nwhite)]
    for k, e in enumerate(graph.edges):
        dx, dy = e.offset
        for mx in range(L):
            for my in range(L):
                bj = wid(e.black, (mx + dx) % L, (my + dy) % L)
                adj[wid(e.white, mx, my)].append((bj, k, (mx, my)))

    weights = [Fraction(e.weight) for e in graph.edges]

    forced: dict[int, tuple[int, int, tuple[int, int]]] = {}
    pre_product = Fraction(1)
    pre_black = 0
    if constraint:
        used_blacks = set()
        for eid, (mx, my) in constraint:
            e = graph.edge_by_id(eid)
            k = graph.edges.index(e)
            wi = wid(e.white, mx % L, my % L)
            bj = wid(e.black, (mx + e.offset[0]) % L, (my + e.offset[1]) % L)
            if wi in forced or bj in used_blacks:
                raise PatternError("constraint edges collide on the torus")
            forced[wi] = (bj, k, (mx % L, my % L))
            used_blacks.add(bj)
            pre_product *= weights[k]
            pre_black |= 1 << bj
        # a constraint can also self-collide via wraparound on small tori
        if len(used_blacks) != len(forced):
            raise PatternError("constraint edges collide on the torus")

    free_whites = [wv for wv in range(nwhite) if wv not in forced]

    Z = Fraction(0)
    n_match = 0
    counts: dict[tuple[int, tuple[int, int]], Fraction] = {}
    chosen: list[tuple[int, tuple[int, int]]] = []

    def dfs(pos: int, used: int, prod: Fraction) -> None:
        nonlocal Z, n_match
        if pos == len(free_whites):
            Z += prod
            n_match += 1
            for key in chosen:
                counts[key] = counts.get(key, Fraction(0)) + prod
            for wv, (bj, k, dom) in forced.items():
                counts[(k, dom)] = counts.get((k, dom), Fraction(0)) + prod
            return
        wv = free_whites[pos]
        for bj, k, dom in adj[wv]:
            bit = 1 << bj
            if used & bit:
                continue
            chosen.append((k, dom))
            dfs(pos + 1, used | bit, prod * weights[k])
            chosen.pop()

    dfs(0, pre_black, pre_product)

    if Z == 0:
        return TorusEnumeration(L, Z, n_match, None, {})

    marginals = {
        e.id: counts.get((k, (0, 0)), Fraction(0)) / Z
        for k, e in enumerate(graph.edges)
    }
    inst = {
        (graph.edges[k].id, dom): c / Z for (k, dom), c in counts.items()
    }
    return TorusEnumeration(L, Z, n_match, marginals, inst)


# ---------------------------------------------------------------------------
# bundled graph files
# ---------------------------------------------------------------------------


def bundled_graph_path(name: str) -> Path:
    p = Path(__file__).parent / "graphs" / f"{name}.json"
    if not p.exists():
        raise GraphSpecError(
            f"no bundled graph named {name!r}; available: {bundled_graph_names()}"
        )
    return p


def bundled_graph_names() -> list[str]:
    return sorted(p.stem for p in (Path(__file__).parent / "graphs").glob("*.json"))
