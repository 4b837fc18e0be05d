"""Local dimer statistics: pattern probabilities, correlations, and sampling.

All local statistics of a Gibbs measure in the supported phases reduce to
finite determinants of inverse-Kasteleyn coefficients. A pattern with edges
e_1 .. e_k has probability

    P[pattern] = (prod_i K_ei) * det E,   E_ij = K^-1(b_i, w_j),

where K_e is the real-space Kasteleyn entry (sign times weight) and the
E matrix couples the pattern's own black and white endpoints. Joint
probabilities use the same determinant over the union of patterns (shared
edge instances are counted once; patterns whose instances collide on a
vertex are simply incompatible and get probability zero).

Window sampling applies the conditional form of the same determinants edge
by edge: each decision updates the window's kernel block with a Schur
complement (presence) or a rank-one absence correction, so samples are
drawn from the exact finite-dimensional marginal in a fixed deterministic
order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import GraphSpec, Pattern, PatternError, VertexRef, validate_pattern
from .kernels import KernelTable, kernel_coefficient
from .spectral import liquid_geometry

__all__ = [
    "PatternAnalysis",
    "SamplerError",
    "WindowState",
    "pattern_probability",
    "joint_probability",
    "centered_correlation",
    "build_window_state",
    "sample_window",
    "window_marginals",
    "check_matching_violations",
    "inclusion_exclusion_check",
]

_PIVOT_TOL = 1e-12
_PROB_SLACK = 1e-9


class SamplerError(RuntimeError):
    """Raised when conditional probabilities leave [0, 1] or pivots vanish."""


# ---------------------------------------------------------------------------
# pattern determinants
# ---------------------------------------------------------------------------


def _edge_instances(graph: GraphSpec, pattern: Pattern):
    """(edge, offset, black_domain, white_domain) for each pattern edge."""
    out = []
    for eid, off in pattern.edges:
        e = graph.edge_by_id(eid)
        bdom = (off[0] + e.offset[0], off[1] + e.offset[1])
        out.append((e, off, bdom, off))
    return out


def _kernel_block(table: KernelTable, instances) -> np.ndarray:
    k = len(instances)
    E = np.empty((k, k), dtype=complex)
    for i, (ei, _, bdom_i, _) in enumerate(instances):
        for j, (ej, _, _, wdom_j) in enumerate(instances):
            off = (bdom_i[0] - wdom_j[0], bdom_i[1] - wdom_j[1])
            E[i, j] = kernel_coefficient(table, ei.black, ej.white, off)
    return E


@dataclass
class PatternAnalysis:
    """Determinant data of one pattern under one kernel table.

    `probability` is (prod K_e) det E. For liquid tables the dressed
    adjugate block `Q_block` (root monomial phases folded in), the frame
    normalization `nu`, and `dipole_sq` = tr((E^-1 Q_block)^2) are filled
    when E is invertible; they feed the dipole vector and the
    scaling-limit machinery.
    """

    pattern: Pattern
    edges: list
    E: np.ndarray
    probability: float
    K_product: complex
    invertible: bool
    E_inv: np.ndarray | None = None
    Q_block: np.ndarray | None = None
    dipole_sq: complex | None = None
    nu: float | None = None


def _dressed_Q_block(table: KernelTable, instances):
    """(dressed adjugate block, frame normalization) or None off-liquid."""
    sd = table.spectral
    if sd.phase != "liquid_generic":
        return None
    geo = liquid_geometry(sd)
    z0, w0 = geo.root.z, geo.root.w
    k = len(instances)
    Qb = np.empty((k, k), dtype=complex)
    for i, (ei, _, bdom_i, _) in enumerate(instances):
        db = z0 ** (-bdom_i[1]) * w0 ** (bdom_i[0])
        for j, (ej, _, _, wdom_j) in enumerate(instances):
            dw = z0 ** (wdom_j[1]) * w0 ** (-wdom_j[0])
            Qb[i, j] = db * geo.Q_at_root[ei.black, ej.white] * dw
    return Qb, geo.nu


def pattern_probability(table: KernelTable, pattern: Pattern) -> PatternAnalysis:
    """Evaluate the pattern determinant; singular E reports probability 0."""
    validate_pattern(table.graph, pattern)
    inst = _edge_instances(table.graph, pattern)
    E = _kernel_block(table, inst)
    Kprod = complex(np.prod([e.sign * e.weight for e, *_ in inst]))
    det = complex(np.linalg.det(E))
    prob = (Kprod * det).real
    k = len(inst)
    scale = np.abs(E).max() or 1.0
    invertible = abs(det) > (1e-12 * scale) ** k
    ana = PatternAnalysis(
        pattern=pattern, edges=inst, E=E, probability=prob,
        K_product=Kprod, invertible=invertible,
    )
    if invertible:
        ana.E_inv = np.linalg.inv(E)
        dressed = _dressed_Q_block(table, inst)
        if dressed is not None:
            Qb, nu = dressed
            ana.Q_block = Qb
            ana.nu = nu
            M = ana.E_inv @ Qb
            ana.dipole_sq = complex(np.trace(M @ M))
    else:
        ana.probability = 0.0
    return ana


def _union_instances(graph: GraphSpec, patterns):
    """Union of edge instances, counted once; None when they conflict.

    Two distinct instances sharing a vertex cannot both be dimers, which
    makes the joint event empty rather than an error.
    """
    seen: dict[tuple, tuple] = {}
    occupied: dict[VertexRef, tuple] = {}
    order = []
    for pat in patterns:
        for eid, off in pat.edges:
            key = (eid, off)
            e = graph.edge_by_id(eid)
            if key in seen:
                continue
            vb, vw = e.black_ref(off), e.white_ref(off)
            for v in (vb, vw):
                if v in occupied and occupied[v] != key:
                    return None
            occupied[vb] = key
            occupied[vw] = key
            seen[key] = key
            order.append((eid, off))
    return order


def joint_probability(table: KernelTable, patterns) -> float:
    """Probability that every pattern occurs simultaneously.

    Shared edge instances are required once; vertex conflicts between
    distinct instances yield probability 0.
    """
    pats = list(patterns)
    if not pats:
        raise PatternError("joint probability needs at least one pattern")
    for p in pats:
        validate_pattern(table.graph, p)
    union = _union_instances(table.graph, pats)
    if union is None:
        return 0.0
    merged = Pattern(tuple(union), pats[0].marked)
    inst = _edge_instances(table.graph, merged)
    E = _kernel_block(table, inst)
    Kprod = np.prod([e.sign * e.weight for e, *_ in inst])
    return float((Kprod * np.linalg.det(E)).real)


def centered_correlation(table: KernelTable, p1: Pattern, p2: Pattern) -> float:
    """Cov(1_{p1}, 1_{p2}) = joint minus product of marginals.

    The two patterns must not share an edge instance (a repeated edge makes
    the centered quantity degenerate); sharing is an error here, unlike in
    joint_probability.
    """
    shared = set(p1.edges) & set(p2.edges)
    if shared:
        raise PatternError(
            f"centered correlation requires disjoint patterns; shared {sorted(shared)}"
        )
    joint = joint_probability(table, [p1, p2])
    a1 = pattern_probability(table, p1)
    a2 = pattern_probability(table, p2)
    return joint - a1.probability * a2.probability


def inclusion_exclusion_check(table: KernelTable, e1, e2) -> float:
    """Residual P(e1) - P(e1, e2) - P(e1, e2 absent).

    The absence term is computed through the conditional (rank-one) route
    the sampler uses, so a nonzero residual flags an inconsistency between
    the joint determinant and the sequential machinery.
    """
    g = table.graph
    pe1 = Pattern((e1,), g.edge_by_id(e1[0]).white_ref(e1[1]))
    pe2 = Pattern((e2,), g.edge_by_id(e2[0]).white_ref(e2[1]))
    p1 = pattern_probability(table, pe1).probability
    joint = joint_probability(table, [pe1, pe2])

    # conditional route: decide e2 absent first, then evaluate e1
    ea, oa = e2
    eb, ob = e1
    E2 = _kernel_block(table, _edge_instances(g, pe2))[0, 0]
    K2 = g.edge_by_id(ea).sign * g.edge_by_id(ea).weight
    p2 = (K2 * E2).real
    inst = _edge_instances(g, Pattern((e1, e2), pe1.marked))
    M = _kernel_block(table, inst)  # order: e1 then e2
    denom = 1.0 - K2 * M[1, 1]
    M11_cond = M[0, 0] + K2 * M[0, 1] * M[1, 0] / denom
    K1 = g.edge_by_id(eb).sign * g.edge_by_id(eb).weight
    p_e1_and_not_e2 = ((1.0 - p2) * (K1 * M11_cond)).real
    return float(p1 - joint - p_e1_and_not_e2)


# ---------------------------------------------------------------------------
# window sampling
# ---------------------------------------------------------------------------


@dataclass
class WindowState:
    """Precomputed data for repeated sampling of one window.

    Edges are fixed in lexicographic (offset, id) order. `M0` is the kernel
    block between all distinct black and white endpoints; `disjoint` records
    whether the window's edges are vertex-disjoint, in which case each
    decision only ever touches the trailing block and updates cost O((E-t)^2).
    """

    graph: GraphSpec
    edges: list
    K_vals: np.ndarray
    b_of_edge: np.ndarray
    w_of_edge: np.ndarray
    M0: np.ndarray
    disjoint: bool
    real_arithmetic: bool
    blacks: list
    whites: list


def build_window_state(table: KernelTable, window) -> WindowState:
    """Assemble the sampling state for a list of (edge_id, offset) instances."""
    g = table.graph
    items = sorted(set(window), key=lambda t: (t[1], t[0]))
    if not items:
        raise PatternError("window has no edges")
    edges = []
    blacks: dict[VertexRef, int] = {}
    whites: dict[VertexRef, int] = {}
    b_idx, w_idx, kv = [], [], []
    for eid, off in items:
        e = g.edge_by_id(eid)
        vb, vw = e.black_ref(off), e.white_ref(off)
        bi = blacks.setdefault(vb, len(blacks))
        wi = whites.setdefault(vw, len(whites))
        edges.append((e, off))
        b_idx.append(bi)
        w_idx.append(wi)
        kv.append(e.sign * e.weight)
    disjoint = len(blacks) == len(edges) and len(whites) == len(edges)

    blist = list(blacks)
    wlist = list(whites)
    M = np.empty((len(blist), len(wlist)), dtype=complex)
    for vb, bi in blacks.items():
        for vw, wi in whites.items():
            off = (vb.offset[0] - vw.offset[0], vb.offset[1] - vw.offset[1])
            M[bi, wi] = kernel_coefficient(table, vb.index, vw.index, off)
    kv_arr = np.asarray(kv, dtype=complex)
    real_ok = (np.abs(M.imag).max() < 1e-12) and (np.abs(kv_arr.imag).max() < 1e-12)
    return WindowState(
        graph=g, edges=edges, K_vals=kv_arr, b_of_edge=np.asarray(b_idx),
        w_of_edge=np.asarray(w_idx),
        M0=(M.real.copy() if real_ok else M),
        disjoint=disjoint,
        real_arithmetic=real_ok,
        blacks=blist, whites=wlist,
    )


def sample_window(state: WindowState, rng: np.random.Generator) -> np.ndarray:
    """Draw one exact sample; returns a boolean presence array per edge.

    Decisions follow the fixed window order. Conditional probabilities
    outside [0 - slack, 1 + slack] or pivots below the relative tolerance
    abort with SamplerError rather than producing a biased sample.
    """
    M = state.M0.copy()
    nE = len(state.edges)
    Kv = state.K_vals.real if state.real_arithmetic else state.K_vals
    out = np.zeros(nE, dtype=bool)
    scale = float(np.abs(M).max()) or 1.0
    us = rng.random(nE)
    for t in range(nE):
        b = state.b_of_edge[t]
        w = state.w_of_edge[t]
        piv = M[b, w]
        p = float((Kv[t] * piv).real)
        if not (-_PROB_SLACK <= p <= 1.0 + _PROB_SLACK):
            raise SamplerError(
                f"conditional probability {p} for edge {t} leaves [0, 1]"
            )
        present = us[t] < p
        out[t] = present
        if t == nE - 1:
            break
        if state.disjoint:
            # disjoint windows index vertices in window order, so the
            # untouched block is the plain trailing submatrix view
            col = M[t + 1:, w]
            row = M[b, t + 1:]
            if present:
                if abs(piv) < _PIVOT_TOL * scale:
                    raise SamplerError(f"pivot underflow at edge {t}")
                M[t + 1:, t + 1:] -= np.outer(col / piv, row)
            else:
                denom = 1.0 - Kv[t] * piv
                if abs(denom) < _PIVOT_TOL:
                    raise SamplerError(f"absence pivot underflow at edge {t}")
                M[t + 1:, t + 1:] += np.outer(col * (Kv[t] / denom), row)
        else:
            if present:
                if abs(piv) < _PIVOT_TOL * scale:
                    raise SamplerError(f"pivot underflow at edge {t}")
                M -= np.outer(M[:, w], M[b, :]) / piv
                M[b, :] = 0.0
                M[:, w] = 0.0
            else:
                denom = 1.0 - Kv[t] * piv
                if abs(denom) < _PIVOT_TOL:
                    raise SamplerError(f"absence pivot underflow at edge {t}")
                M += (Kv[t] / denom) * np.outer(M[:, w], M[b, :])
    return out


def window_marginals(state: WindowState, table: KernelTable) -> np.ndarray:
    """Exact single-edge probabilities for every window edge (for checks)."""
    out = np.empty(len(state.edges))
    for t, (e, off) in enumerate(state.edges):
        pat = Pattern(((e.id, off),), e.white_ref(off))
        out[t] = pattern_probability(table, pat).probability
    return out


def check_matching_violations(state: WindowState, sample: np.ndarray) -> int:
    """Count pairs of present edges sharing a vertex (0 for a valid sample)."""
    bad = 0
    used_b: dict[int, int] = {}
    used_w: dict[int, int] = {}
    for t, present in enumerate(sample):
        if not present:
            continue
        bi, wi = int(state.b_of_edge[t]), int(state.w_of_edge[t])
        bad += (bi in used_b) + (wi in used_w)
        used_b[bi] = t
        used_w[wi] = t
    return bad
