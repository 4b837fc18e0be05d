"""Characteristic polynomial, torus roots, phase, and liquid frame geometry.

The Fourier-transformed Kasteleyn matrix K(z, w) of a periodic bipartite
graph is an n x n matrix of Laurent monomials. Everything downstream is
driven by its determinant P(z, w) (the characteristic polynomial), the
adjugate Q(z, w) with Q K = K Q = P Id, and the structure of the zeros of P
on the unit torus |z| = |w| = 1:

* no zeros: gaseous phase, exponentially decaying correlations;
* a conjugate pair of simple zeros: generic liquid phase, polynomial decay;
* a single degenerate real zero: non-generic liquid (phase boundary).

For n <= 6 both P and Q are expanded symbolically as Laurent polynomials
(exact monomial bookkeeping, float coefficients); beyond that a numeric
fallback evaluates determinants and adjugates pointwise.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import GraphSpec, GraphSpecError

__all__ = [
    "SpectralError",
    "LaurentPoly",
    "SpectralData",
    "DualGeometry",
    "build_spectral",
    "find_torus_roots",
    "classify_phase",
    "liquid_geometry",
]

EXACT_MAX_N = 6


class SpectralError(ValueError):
    """Raised on degenerate or ambiguous spectral structure."""


# ---------------------------------------------------------------------------
# Laurent polynomials in two variables
# ---------------------------------------------------------------------------


class LaurentPoly:
    """Sparse Laurent polynomial in (z, w) with complex coefficients.

    Stored as {(zpow, wpow): coeff}. Supports ring operations, partial
    derivatives, and vectorized evaluation on tensor grids. Coefficients
    below 1e-14 of the largest are dropped to keep products sparse.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms: dict[tuple[int, int], complex] = dict(terms) if terms else {}

    @classmethod
    def monomial(cls, coeff: complex, zpow: int, wpow: int) -> "LaurentPoly":
        return cls({(zpow, wpow): complex(coeff)})

    @classmethod
    def zero(cls) -> "LaurentPoly":
        return cls()

    @classmethod
    def one(cls) -> "LaurentPoly":
        return cls({(0, 0): 1.0 + 0.0j})

    def copy(self) -> "LaurentPoly":
        return LaurentPoly(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __add__(self, other: "LaurentPoly") -> "LaurentPoly":
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return LaurentPoly(out)._pruned()

    def __sub__(self, other: "LaurentPoly") -> "LaurentPoly":
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) - c
        return LaurentPoly(out)._pruned()

    def __neg__(self) -> "LaurentPoly":
        return LaurentPoly({k: -c for k, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return LaurentPoly({k: c * other for k, c in self.terms.items()})._pruned()
        out: dict[tuple[int, int], complex] = {}
        for (za, wa), ca in self.terms.items():
            for (zb, wb), cb in other.terms.items():
                k = (za + zb, wa + wb)
                out[k] = out.get(k, 0.0) + ca * cb
        return LaurentPoly(out)._pruned()

    __rmul__ = __mul__

    def _pruned(self) -> "LaurentPoly":
        if not self.terms:
            return self
        top = max(abs(c) for c in self.terms.values())
        if top == 0.0:
            return LaurentPoly()
        cut = 1e-14 * top
        self.terms = {k: c for k, c in self.terms.items() if abs(c) > cut}
        return self

    def dz(self) -> "LaurentPoly":
        return LaurentPoly(
            {(zp - 1, wp): c * zp for (zp, wp), c in self.terms.items() if zp != 0}
        )

    def dw(self) -> "LaurentPoly":
        return LaurentPoly(
            {(zp, wp - 1): c * wp for (zp, wp), c in self.terms.items() if wp != 0}
        )

    def __call__(self, z: complex, w: complex) -> complex:
        return sum(c * z**zp * w**wp for (zp, wp), c in self.terms.items())

    def eval_outer(self, zvals: np.ndarray, wvals: np.ndarray) -> np.ndarray:
        """Evaluate on the tensor grid zvals x wvals; axis 0 is z, axis 1 is w."""
        out = np.zeros((len(zvals), len(wvals)), dtype=complex)
        zpows = sorted({zp for zp, _ in self.terms})
        zcache = {zp: zvals**zp for zp in zpows}
        for (zp, wp), c in self.terms.items():
            out += np.outer(zcache[zp], c * wvals**wp)
        return out

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def is_real(self, tol: float = 1e-12) -> bool:
        scale = self.max_abs_coeff() or 1.0
        return all(abs(c.imag) <= tol * scale for c in self.terms.values())


def _laurent_matrix(graph: GraphSpec) -> list[list[LaurentPoly]]:
    n = graph.n
    M = [[LaurentPoly.zero() for _ in range(n)] for _ in range(n)]
    for i, j, c, zp, wp in graph.kasteleyn_entry_terms():
        M[i][j] = M[i][j] + LaurentPoly.monomial(c, zp, wp)
    return M


def _laurent_det(M: list[list[LaurentPoly]]) -> LaurentPoly:
    n = len(M)
    if n == 1:
        return M[0][0].copy()
    det = LaurentPoly.zero()
    # expand along the first row, skipping structural zeros
    for j in range(n):
        if not M[0][j]:
            continue
        minor = [[M[r][c] for c in range(n) if c != j] for r in range(1, n)]
        term = M[0][j] * _laurent_det(minor)
        det = det + (term if j % 2 == 0 else -term)
    return det


def _laurent_adjugate(M: list[list[LaurentPoly]]) -> list[list[LaurentPoly]]:
    """adj(M)[i][j] = (-1)^(i+j) * minor with row j, column i deleted."""
    n = len(M)
    if n == 1:
        return [[LaurentPoly.one()]]
    adj = [[LaurentPoly.zero() for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [
                [M[r][c] for c in range(n) if c != i]
                for r in range(n) if r != j
            ]
            m = _laurent_det(minor)
            adj[i][j] = m if (i + j) % 2 == 0 else -m
    return adj


# ---------------------------------------------------------------------------
# spectral data
# ---------------------------------------------------------------------------


@dataclass
class TorusRoot:
    """A zero of P on the unit torus, in angle coordinates."""

    z: complex
    w: complex
    theta: float
    phi: float
    residual: float
    grad_norm: float
    double: bool

    def is_real_point(self, tol: float = 1e-8) -> bool:
        return abs(self.z.imag) < tol and abs(self.w.imag) < tol

    def conjugate_of(self, other: "TorusRoot", tol: float = 1e-7) -> bool:
        return (abs(self.z - other.z.conjugate()) < tol
                and abs(self.w - other.w.conjugate()) < tol)


@dataclass
class SpectralData:
    """Characteristic polynomial data for one graph.

    P and Q are exact Laurent expansions for n <= 6 (`exact` True); larger
    graphs fall back to pointwise numeric determinants and adjugates.
    `phase` and `roots` are filled by build_spectral.
    """

    graph: GraphSpec
    n: int
    exact: bool
    P: LaurentPoly | None
    Q: list[list[LaurentPoly]] | None
    phase: str = "unclassified"
    roots: list[TorusRoot] = field(default_factory=list)

    # -- pointwise evaluation ---------------------------------------------

    def P_eval(self, z: complex, w: complex) -> complex:
        if self.exact:
            return self.P(z, w)
        return complex(np.linalg.det(self.graph.kasteleyn_matrix(z, w)))

    def Q_eval(self, z: complex, w: complex) -> np.ndarray:
        """Full adjugate matrix at a point, indexed [black, white]."""
        if self.exact:
            n = self.n
            return np.array(
                [[self.Q[b][wi](z, w) for wi in range(n)] for b in range(n)],
                dtype=complex,
            )
        return _numeric_adjugate(self.graph.kasteleyn_matrix(z, w))

    def dP(self, z: complex, w: complex) -> tuple[complex, complex]:
        """(dP/dz, dP/dw) at a point."""
        if self.exact:
            return self.P.dz()(z, w), self.P.dw()(z, w)
        h = 1e-7
        fz = (self.P_eval(z * cmath.exp(h * 1j), w) - self.P_eval(z * cmath.exp(-h * 1j), w)) \
            / (2j * h * z)
        fw = (self.P_eval(z, w * cmath.exp(h * 1j)) - self.P_eval(z, w * cmath.exp(-h * 1j))) \
            / (2j * h * w)
        return fz, fw

    # -- grid evaluation ---------------------------------------------------

    def P_grid(self, zvals: np.ndarray, wvals: np.ndarray) -> np.ndarray:
        if self.exact:
            return self.P.eval_outer(zvals, wvals)
        out = np.empty((len(zvals), len(wvals)), dtype=complex)
        for i, z in enumerate(zvals):
            out[i] = [np.linalg.det(self.graph.kasteleyn_matrix(z, w)) for w in wvals]
        return out

    def kernel_integrand_grid(self, zvals, wvals, pairs):
        """Q_bw / P on the tensor grid for each requested (black, white) pair.

        Returns {(b, w): array of shape (len(zvals), len(wvals))}. The grids
        must avoid zeros of P; callers use half-offset angle grids for that.
        """
        if self.exact:
            Pg = self.P_grid(zvals, wvals)
            return {
                (b, w): self.Q[b][w].eval_outer(zvals, wvals) / Pg
                for (b, w) in pairs
            }
        # numeric route: one stacked inverse per z-row, K^-1 = Q/P directly
        out = {p: np.empty((len(zvals), len(wvals)), dtype=complex) for p in pairs}
        n = self.n
        terms = self.graph.kasteleyn_entry_terms()
        for i, z in enumerate(zvals):
            Ks = np.zeros((len(wvals), n, n), dtype=complex)
            for wi, bj, c, zp, wp in terms:
                Ks[:, wi, bj] += c * z**zp * wvals**wp
            inv = np.linalg.inv(Ks)
            for (b, w) in pairs:
                out[(b, w)][i] = inv[:, b, w]
        return out


def _numeric_adjugate(K: np.ndarray) -> np.ndarray:
    """Adjugate via cofactor minors; stable also at singular points."""
    n = K.shape[0]
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    adj = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(K, j, axis=0), i, axis=1)
            adj[i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return adj


def build_spectral(graph: GraphSpec, root_grid: int = 64) -> SpectralData:
    """Expand P and Q, locate torus roots, and classify the phase."""
    if graph.n <= EXACT_MAX_N:
        M = _laurent_matrix(graph)
        P = _laurent_det(M)
        Q = _laurent_adjugate(M)
        sd = SpectralData(graph, graph.n, True, P, Q)
    else:
        sd = SpectralData(graph, graph.n, False, None, None)
    sd.roots = find_torus_roots(sd, grid=root_grid)
    sd.phase = classify_phase(sd)
    return sd


# ---------------------------------------------------------------------------
# torus roots
# ---------------------------------------------------------------------------


def find_torus_roots(sd: SpectralData, grid: int = 64) -> list[TorusRoot]:
    """Locate zeros of P on |z| = |w| = 1 by coarse scan plus damped Newton.

    The scan grid is half-offset in both angles so roots at low-order
    rational angles are never sampled exactly. Local minima of |P| are
    refined with a damped least-squares Newton iteration in the angles;
    candidates that fail to reach a small residual are discarded, so a
    gaseous minimum simply does not qualify.
    """
    if grid < 64:
        raise SpectralError(f"root scan grid must be at least 64, got {grid}")
    theta = 2.0 * np.pi * (np.arange(grid) + 0.5) / grid
    zv = np.exp(1j * theta)
    A = np.abs(sd.P_grid(zv, zv))
    scale = float(A.max())
    if scale == 0.0:
        raise SpectralError("characteristic polynomial is identically zero")

    # local minima on the periodic grid
    neigh = [np.roll(np.roll(A, di, 0), dj, 1)
             for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    is_min = np.ones_like(A, dtype=bool)
    for Bm in neigh:
        is_min &= A <= Bm
    cand = np.argwhere(is_min & (A < 0.5 * scale))

    roots: list[TorusRoot] = []
    for i, j in cand:
        res = _refine_root(sd, theta[i], theta[j], scale)
        if res is None:
            continue
        th, ph, resid, grad = res
        # a degenerate root at a real point leaves Newton stranded at
        # O(sqrt(resid)) along the flat direction; snapping to multiples of
        # pi recovers the exact location when it really is one
        th_s = round(th / math.pi) * math.pi
        ph_s = round(ph / math.pi) * math.pi
        snap = abs(sd.P_eval(cmath.exp(1j * th_s), cmath.exp(1j * ph_s)))
        if snap <= max(resid, 1e-13 * scale):
            th, ph, resid = th_s % (2 * math.pi), ph_s % (2 * math.pi), snap
        z, w = cmath.exp(1j * th), cmath.exp(1j * ph)
        if any(abs(z - r.z) + abs(w - r.w) < 1e-4 for r in roots):
            continue
        roots.append(TorusRoot(
            z=z, w=w, theta=th, phi=ph, residual=resid, grad_norm=grad,
            double=grad < 1e-6 * scale,
        ))
    roots.sort(key=lambda r: (round(r.theta, 9), round(r.phi, 9)))
    return roots


def _refine_root(sd: SpectralData, th: float, ph: float, scale: float):
    """Damped Newton in torus angles; None if no true zero is reached."""
    for _ in range(80):
        z, w = cmath.exp(1j * th), cmath.exp(1j * ph)
        val = sd.P_eval(z, w)
        if abs(val) < 1e-13 * scale:
            break
        pz, pw = sd.dP(z, w)
        dth, dph = 1j * z * pz, 1j * w * pw  # d/dtheta, d/dphi
        J = np.array([[dth.real, dph.real], [dth.imag, dph.imag]])
        rhs = -np.array([val.real, val.imag])
        step, *_ = np.linalg.lstsq(J, rhs, rcond=None)
        lam = 1.0
        while lam > 1e-6:
            z2 = cmath.exp(1j * (th + lam * step[0]))
            w2 = cmath.exp(1j * (ph + lam * step[1]))
            if abs(sd.P_eval(z2, w2)) < abs(val):
                break
            lam *= 0.5
        if lam <= 1e-6:
            break
        th += lam * step[0]
        ph += lam * step[1]
    z, w = cmath.exp(1j * th), cmath.exp(1j * ph)
    resid = abs(sd.P_eval(z, w))
    if resid > 1e-9 * scale:
        return None
    pz, pw = sd.dP(z, w)
    grad = math.hypot(abs(1j * z * pz), abs(1j * w * pw))
    return th % (2 * math.pi), ph % (2 * math.pi), resid, grad


def classify_phase(sd: SpectralData) -> str:
    """Map the root structure to a phase label.

    0 roots: gaseous. A conjugate pair of simple roots: liquid_generic.
    A single real root (degenerate or boundary): liquid_nongeneric. Many
    roots mean P vanishes on a curve (solid / unsupported). Anything else
    raises naming the candidates.
    """
    roots = sd.roots
    if len(roots) == 0:
        return "gaseous"
    if len(roots) == 1:
        r = roots[0]
        if r.is_real_point() or r.double:
            return "liquid_nongeneric"
        raise SpectralError(
            f"ambiguous root structure: single non-real simple root at "
            f"z={r.z:.6g}, w={r.w:.6g}"
        )
    if len(roots) == 2:
        r0, r1 = roots
        if r0.double or r1.double:
            raise SpectralError(
                f"ambiguous root structure: two roots but multiplicity flags "
                f"{[r0.double, r1.double]} at z={r0.z:.6g} and z={r1.z:.6g}"
            )
        if r0.conjugate_of(r1):
            return "liquid_generic"
        raise SpectralError(
            f"ambiguous root structure: two simple roots that are not a "
            f"conjugate pair: (z={r0.z:.6g}, w={r0.w:.6g}) and "
            f"(z={r1.z:.6g}, w={r1.w:.6g})"
        )
    if len(roots) > 4:
        return "solid"
    raise SpectralError(
        "ambiguous root structure: " + ", ".join(
            f"(z={r.z:.6g}, w={r.w:.6g}, double={r.double})" for r in roots
        )
    )


# ---------------------------------------------------------------------------
# liquid frame geometry
# ---------------------------------------------------------------------------


@dataclass
class DualGeometry:
    """Direct-frame data of a generic liquid model.

    The root (z0, w0) is the member of the conjugate pair for which the
    frame (xhat, yhat) = (i z0 P_z, i w0 P_w) is direct, i.e.
    Im(conj(xhat) yhat) > 0. Each edge carries the complex increment
    omega(e) = i K_e(z0, w0) Q_be,we(z0, w0); rescaling by
    nu = 1 / sqrt(Im(conj(xhat) yhat)) maps onto the unit-area frame used
    by all scaling-limit formulas, where e*(e) = nu omega(e).
    """

    root: TorusRoot
    alpha: complex
    beta: complex
    xhat: complex
    yhat: complex
    nu: float
    omega: dict[str, complex]
    e_star: dict[str, complex]
    Q_at_root: np.ndarray

    def frame_area(self) -> float:
        """Im(conj(xhat) yhat); twice the area of the frame's dual cell."""
        return (self.xhat.conjugate() * self.yhat).imag


def _frame_at(sd: SpectralData, root: TorusRoot):
    alpha, beta = sd.dP(root.z, root.w)
    xhat = 1j * root.z * alpha
    yhat = 1j * root.w * beta
    return alpha, beta, xhat, yhat


def liquid_geometry(sd: SpectralData) -> DualGeometry:
    """Select the direct-frame root and assemble the dual edge increments.

    Raises SpectralError when the phase is not generic liquid, or when
    neither root of the pair gives a strictly direct frame (the degenerate
    boundary situation).
    """
    if sd.phase != "liquid_generic":
        raise SpectralError(
            f"liquid geometry requires phase liquid_generic, got {sd.phase!r}"
        )
    best = None
    for root in sd.roots:
        alpha, beta, xhat, yhat = _frame_at(sd, root)
        area2 = (xhat.conjugate() * yhat).imag
        if area2 > 1e-10 * (abs(xhat) * abs(yhat) + 1e-300):
            best = (root, alpha, beta, xhat, yhat, area2)
            break
    if best is None:
        raise SpectralError(
            "neither torus root yields a strictly direct frame; "
            "the model sits on a degenerate boundary"
        )
    root, alpha, beta, xhat, yhat, area2 = best
    nu = 1.0 / math.sqrt(area2)
    Qr = sd.Q_eval(root.z, root.w)
    omega: dict[str, complex] = {}
    for e in sd.graph.edges:
        dx, dy = e.offset
        K_e = e.sign * e.weight * root.z ** (-dy) * root.w ** dx
        omega[e.id] = 1j * K_e * Qr[e.black, e.white]
    e_star = {eid: nu * om for eid, om in omega.items()}
    return DualGeometry(
        root=root, alpha=alpha, beta=beta, xhat=xhat, yhat=yhat, nu=nu,
        omega=omega, e_star=e_star, Q_at_root=Qr,
    )


def frame_certificates(sd: SpectralData, geo: DualGeometry) -> dict[str, float]:
    """Residuals of the structural identities satisfied by the dual frame.

    div_white / div_black: the omega increments are divergence free around
    every vertex. crossing_x / crossing_y: summing omega with multiplicity
    -dy (resp. +dx) reproduces xhat (resp. yhat).
    """
    g = sd.graph
    div_w = max(
        abs(sum(geo.omega[e.id] for e in g.edges_at_white(i))) for i in range(g.n)
    )
    div_b = max(
        abs(sum(geo.omega[e.id] for e in g.edges_at_black(j))) for j in range(g.n)
    )
    sx = sum((-e.offset[1]) * geo.omega[e.id] for e in g.edges)
    sy = sum((+e.offset[0]) * geo.omega[e.id] for e in g.edges)
    return {
        "div_white": div_w,
        "div_black": div_b,
        "crossing_x": abs(sx - geo.xhat),
        "crossing_y": abs(sy - geo.yhat),
    }
