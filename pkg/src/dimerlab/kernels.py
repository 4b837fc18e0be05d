"""Inverse Kasteleyn coefficient tables and large-offset asymptotics.

The inverse Kasteleyn operator is translation invariant, so all of its
matrix elements are Fourier coefficients

    K^-1(b at (x, y), w at (0, 0)) = avg over torus of z^-y w^x Q_bw / P.

Tables of these coefficients are built by sampling the integrand on angle
grids that are half-offset in both directions (torus zeros at rational
angles are never sampled) and reading coefficients off 2-D FFTs. In the
gaseous phase the coefficients decay exponentially and a single grid is
spectrally accurate. In the liquid phase coefficients decay like 1/r and
grid sums carry an O(1/N^2) alias bias, so tables combine a ladder of
grids (N, 2N, 4N) with per-entry Richardson extrapolation; grid sizes are
chosen divisible by the order of the root phases so the alias phases match
across levels.

A separate semi-analytic route computes whole rows K^-1(., y) for n = 1
graphs whose polynomial is linear in z (the z integral collapses to
residues), which serves both the strip identities and as an independent
cross-check on the FFT path.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.fft

from .lattice import GraphSpec
from .spectral import SpectralData, SpectralError, liquid_geometry

__all__ = [
    "KernelError",
    "KernelTable",
    "AsymptoticEvaluator",
    "build_kernel_table",
    "kernel_coefficient",
    "asymptotic_coefficient",
    "decay_rate",
    "dump_table",
    "load_table",
    "strip_kernel_row",
]

_MAGIC = b"DIMKT1\n"


class KernelError(ValueError):
    """Raised on kernel table misuse (range, phase, format)."""


# ---------------------------------------------------------------------------
# grid choice
# ---------------------------------------------------------------------------


def _phase_order(sd: SpectralData, max_order: int = 48) -> int:
    """Smallest q such that all root angles are multiples of 2 pi / q.

    Returns 1 when there are no roots, 0 when no q <= max_order works
    (irrational or high-order angles).
    """
    if not sd.roots:
        return 1
    qs = []
    for r in sd.roots:
        for ang in (r.theta, r.phi):
            frac = ang / (2.0 * math.pi) % 1.0
            best = 0
            for q in range(1, max_order + 1):
                if abs(frac * q - round(frac * q)) < 1e-7 * q:
                    best = q
                    break
            if best == 0:
                return 0
            qs.append(best)
    return math.lcm(*qs)


def _pick_base_grid(sd: SpectralData, radius: int, requested: int | None) -> int:
    """Base grid size: even, >= 2 radius + 2 on the top ladder level, and a
    multiple of the root-phase order when that order is small."""
    need_top = 2 * radius + 2
    base = requested or max(256, -(-need_top // 4))
    q = _phase_order(sd)
    unit = 2 * max(q, 1)  # even and phase-aligned
    base = -(-base // unit) * unit
    while 4 * base < need_top:
        base += unit
    return base


# ---------------------------------------------------------------------------
# table construction
# ---------------------------------------------------------------------------


@dataclass
class KernelTable:
    """Offset-indexed inverse Kasteleyn coefficients for one graph.

    `values[(b, w)][y + radius, x + radius]` is the coefficient coupling
    black vertex b in domain (x, y) to white vertex w in domain (0, 0).
    `zones` records, per ladder level, the largest sup-norm radius whose
    entries used that many grids (for method tagging). `resonant` marks
    non-generic liquid tables whose grid sums are only conditionally
    stable.
    """

    graph: GraphSpec
    spectral: SpectralData
    radius: int
    grids: tuple[int, ...]
    method: str
    resonant: bool
    values: dict[tuple[int, int], np.ndarray]
    zones: tuple[int, ...] = ()
    richardson_order: float | None = None

    def coefficient(self, black: int, white: int, offset: tuple[int, int]) -> complex:
        return kernel_coefficient(self, black, white, offset)

    def method_tag(self, offset: tuple[int, int]) -> str:
        r = max(abs(offset[0]), abs(offset[1]))
        if r > self.radius:
            return "asymptotic"
        if self.method == "fft_grid":
            return "fft_grid"
        # zones are (raw_max, two_level_max, three_level_max) sup radii
        if len(self.zones) >= 2 and r <= self.zones[1]:
            return "refined"
        return "fft_grid"


def _grid_coefficients(sd: SpectralData, N: int, radius: int, pairs):
    """Raw grid sums S_N(x, y) for |x|, |y| <= radius, one array per pair."""
    theta = 2.0 * np.pi * (np.arange(N) + 0.5) / N
    zv = np.exp(1j * theta)
    R = radius
    yi = np.arange(-R, R + 1) % N
    xi = np.arange(-R, R + 1) % N
    ph_y = np.exp(-1j * np.pi * np.arange(-R, R + 1) / N)
    ph_x = np.exp(+1j * np.pi * np.arange(-R, R + 1) / N)
    phase = np.outer(ph_y, ph_x)
    out = {}
    Fg = sd.kernel_integrand_grid(zv, zv, pairs)
    for p in pairs:
        G = scipy.fft.fft(scipy.fft.ifft(Fg[p], axis=1), axis=0)
        del Fg[p]
        out[p] = phase * G[np.ix_(yi, xi)] / N
        del G
    return out


def build_kernel_table(
    sd: SpectralData,
    radius: int = 64,
    base_grid: int | None = None,
    pairs=None,
) -> KernelTable:
    """Build a coefficient table out to sup-norm `radius`.

    Gaseous tables use one grid (doubling it moves nothing beyond roundoff).
    Liquid tables use the (N, 2N, 4N) ladder with per-entry Richardson
    extrapolation: entries with sup radius < N/2 combine three levels,
    entries below 2N/2 two levels, the rest stay raw top-grid sums.
    Non-generic liquid tables are built the same way but flagged resonant.
    """
    if sd.phase == "solid":
        raise KernelError("kernel tables are not defined in the solid phase")
    if pairs is None:
        pairs = [(b, w) for b in range(sd.n) for w in range(sd.n)]
    if radius < 1:
        raise KernelError("radius must be positive")

    if sd.phase == "gaseous":
        N = base_grid or 256
        N = max(N, 2 * radius + 2)
        if N % 2:
            N += 1
        vals = _grid_coefficients(sd, N, radius, pairs)
        return KernelTable(
            graph=sd.graph, spectral=sd, radius=radius, grids=(N,),
            method="fft_grid", resonant=False, values=vals,
            zones=(radius,),
        )

    # liquid ladder
    N1 = _pick_base_grid(sd, radius, base_grid)
    N2, N3 = 2 * N1, 4 * N1
    r3 = min(radius, N1 // 2 - 1)
    r2 = min(radius, N2 // 2 - 1)
    S1 = _grid_coefficients(sd, N1, r3, pairs) if r3 >= 0 else {}
    S2 = _grid_coefficients(sd, N2, r2, pairs)
    S3 = _grid_coefficients(sd, N3, radius, pairs)

    orders = []
    vals = {}
    for p in pairs:
        out = S3[p]
        R = radius
        # two-level refinement on the middle zone
        sl2 = np.s_[R - r2:R + r2 + 1, R - r2:R + r2 + 1]
        A2g, A3g = S2[p], out[sl2]
        refined2 = A3g + (A3g - A2g) / 3.0
        # three-level refinement innermost, with an order estimate
        sl3_in2 = np.s_[r2 - r3:r2 + r3 + 1, r2 - r3:r2 + r3 + 1]
        A1g = S1[p]
        A2c = A2g[sl3_in2]
        A3c = out[R - r3:R + r3 + 1, R - r3:R + r3 + 1]
        d12 = A2c - A1g
        d23 = A3c - A2c
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs(d12) / np.maximum(np.abs(d23), 1e-300)
        good = (np.abs(d12) > 1e-14) & (np.abs(d23) > 1e-14)
        if good.any():
            orders.append(float(np.median(np.log2(ratio[good]))))
        r23 = A3c + d23 / 3.0
        r12 = A2c + d12 / 3.0
        refined3 = r23 + (r23 - r12) / 7.0
        out = out.copy()
        out[sl2] = refined2
        out[R - r3:R + r3 + 1, R - r3:R + r3 + 1] = refined3
        vals[p] = out

    return KernelTable(
        graph=sd.graph, spectral=sd, radius=radius, grids=(N1, N2, N3),
        method="richardson", resonant=(sd.phase == "liquid_nongeneric"),
        values=vals, zones=(radius, r2, r3),
        richardson_order=(float(np.median(orders)) if orders else None),
    )


def kernel_coefficient(
    table: KernelTable, black: int, white: int, offset: tuple[int, int]
) -> complex:
    """Look up one coefficient; offsets beyond the table radius raise."""
    x, y = offset
    R = table.radius
    if abs(x) > R or abs(y) > R:
        raise KernelError(
            f"offset {offset} outside table radius {R}; extend the table or "
            f"use asymptotic_coefficient"
        )
    try:
        arr = table.values[(black, white)]
    except KeyError:
        raise KernelError(f"pair (black={black}, white={white}) not tabulated")
    return complex(arr[y + R, x + R])


# ---------------------------------------------------------------------------
# asymptotics
# ---------------------------------------------------------------------------


@dataclass
class AsymptoticEvaluator:
    """Leading large-offset form of the liquid inverse kernel.

    coefficient(b, w, (x, y)) evaluates
        (1/pi) Re( z0^-y w0^x Q_bw(z0, w0) / (x xhat + y yhat) )
    at the direct-frame root (the overall sign is pinned numerically against
    exact tables; see the test suite). Only meaningful for generic liquid models and
    offsets away from the origin.
    """

    spectral: SpectralData

    def __post_init__(self):
        geo = liquid_geometry(self.spectral)
        self._geo = geo

    def coefficient(self, black: int, white: int, offset: tuple[int, int]) -> complex:
        x, y = offset
        if x == 0 and y == 0:
            raise KernelError("asymptotic form is undefined at offset (0, 0)")
        geo = self._geo
        zeta = geo.root.z ** (-y) * geo.root.w ** x
        u = x * geo.xhat + y * geo.yhat
        val = (zeta * geo.Q_at_root[black, white] / u).real / math.pi
        return complex(val)


def asymptotic_coefficient(
    sd: SpectralData, black: int, white: int, offset: tuple[int, int]
) -> complex:
    return AsymptoticEvaluator(sd).coefficient(black, white, offset)


# ---------------------------------------------------------------------------
# decay diagnostics
# ---------------------------------------------------------------------------


def decay_rate(table: KernelTable, max_radius: int | None = None) -> dict:
    """Fit ring maxima of |K^-1| to exponential and power-law decay.

    Rings are sup-norm shells r = 1 .. max_radius. Both models are fit by
    least squares on log scale and the better one is reported, with its
    parameter (rate per step, or power exponent). Requires at least two
    decades of dynamic range above the numerical floor.
    """
    R = table.radius if max_radius is None else min(max_radius, table.radius)
    if R < 8:
        raise KernelError("decay fit needs table radius >= 8")
    stack = np.stack([np.abs(v) for v in table.values.values()]).max(axis=0)
    C = table.radius
    ring = np.empty(R)
    for r in range(1, R + 1):
        sq = stack[C - r:C + r + 1, C - r:C + r + 1]
        ring[r - 1] = max(sq[0].max(), sq[-1].max(), sq[:, 0].max(), sq[:, -1].max())
    floor = 1e-14 * ring.max()
    keep = ring > floor
    r_vals = np.arange(1, R + 1)[keep].astype(float)
    y_vals = np.log(ring[keep])
    if len(r_vals) < 4 or (y_vals.max() - y_vals.min()) < 2 * math.log(10):
        raise KernelError(
            "decay fit needs at least two decades of dynamic range; "
            f"got {(y_vals.max() - y_vals.min()) / math.log(10):.2f}"
        )

    def lsq(xs):
        Amat = np.vstack([xs, np.ones_like(xs)]).T
        coef, res, *_ = np.linalg.lstsq(Amat, y_vals, rcond=None)
        resid = float(res[0]) if len(res) else float(
            ((Amat @ coef - y_vals) ** 2).sum()
        )
        return coef, resid

    (slope_e, _), res_e = lsq(r_vals)
    (slope_p, _), res_p = lsq(np.log(r_vals))
    if res_e <= res_p:
        return {"model": "exponential", "rate": -float(slope_e),
                "exponent": -float(slope_p), "residual": res_e,
                "alternative_residual": res_p}
    return {"model": "power", "exponent": -float(slope_p),
            "rate": -float(slope_e), "residual": res_p,
            "alternative_residual": res_e}


# ---------------------------------------------------------------------------
# binary dump / load
# ---------------------------------------------------------------------------


def dump_table(table: KernelTable, path) -> None:
    """Write the table as little-endian complex pairs with a short header."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        head = struct.pack(
            "<16s i i i B", table.graph.graph_hash.encode(), table.graph.n,
            table.radius, len(table.grids), 1 if table.resonant else 0,
        )
        fh.write(head)
        fh.write(struct.pack(f"<{len(table.grids)}i", *table.grids))
        fh.write(struct.pack("<16s", table.method.encode().ljust(16)))
        fh.write(struct.pack("<i", len(table.values)))
        for (b, w), arr in sorted(table.values.items()):
            fh.write(struct.pack("<ii", b, w))
            fh.write(np.ascontiguousarray(arr, dtype="<c16").tobytes())


def load_table(path, sd: SpectralData) -> KernelTable:
    """Read a dumped table back; the graph hash must match `sd`'s graph."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise KernelError(f"{path}: not a kernel table dump")
        ghash, n, radius, ngrids, resonant = struct.unpack(
            "<16s i i i B", fh.read(16 + 4 + 4 + 4 + 1)
        )
        if ghash.decode() != sd.graph.graph_hash:
            raise KernelError(
                f"{path}: table was built for graph hash {ghash.decode()!r}, "
                f"not {sd.graph.graph_hash!r}"
            )
        grids = struct.unpack(f"<{ngrids}i", fh.read(4 * ngrids))
        method = struct.unpack("<16s", fh.read(16))[0].decode().strip()
        npairs = struct.unpack("<i", fh.read(4))[0]
        side = 2 * radius + 1
        vals = {}
        for _ in range(npairs):
            b, w = struct.unpack("<ii", fh.read(8))
            buf = fh.read(16 * side * side)
            vals[(b, w)] = np.frombuffer(buf, dtype="<c16").reshape(side, side).copy()
    zones = (radius,) if len(grids) == 1 else (
        radius, min(radius, grids[1] // 2 - 1), min(radius, grids[0] // 2 - 1)
    )
    return KernelTable(
        graph=sd.graph, spectral=sd, radius=radius, grids=tuple(grids),
        method=method, resonant=bool(resonant), values=vals, zones=zones,
    )


# ---------------------------------------------------------------------------
# semi-analytic strip rows (n = 1, polynomial linear in z)
# ---------------------------------------------------------------------------


def _split_linear_in_z(sd: SpectralData):
    """P = A(w) + z B(w) as coefficient dicts {wpow: coeff}; errors otherwise."""
    if not sd.exact or sd.n != 1:
        raise KernelError("strip rows require an n = 1 graph with exact P")
    A: dict[int, complex] = {}
    B: dict[int, complex] = {}
    for (zp, wp), c in sd.P.terms.items():
        if zp == 0:
            A[wp] = A.get(wp, 0.0) + c
        elif zp == 1:
            B[wp] = B.get(wp, 0.0) + c
        else:
            raise KernelError(f"strip rows require P linear in z; found z^{zp}")
    return A, B


def strip_kernel_row(sd: SpectralData, y: int, xmax: int, grid: int = 1 << 17):
    """K^-1(x, y) for |x| <= xmax via residues in z and one 1-D FFT in w.

    Returns a complex array indexed x + xmax. The z integral is exact
    (P is linear in z for the supported graphs); the w integral is a
    half-offset grid sum whose alias error is O(1/grid) per coefficient.
    """
    A, B = _split_linear_in_z(sd)
    W = grid
    if W < 2 * xmax + 2:
        raise KernelError("strip grid too small for the requested xmax")
    phi = 2.0 * np.pi * (np.arange(W) + 0.5) / W
    wv = np.exp(1j * phi)
    Av = sum(c * wv**p for p, c in A.items())
    Bv = sum(c * wv**p for p, c in B.items())
    zstar = -Av / Bv
    inside = np.abs(zstar) < 1.0

    f = np.zeros(W, dtype=complex)
    if y >= 0:
        # residue at 0: coefficient of z^y in 1/(A + zB)
        f += (-Bv) ** y / Av ** (y + 1)
    # residue at z* when the pole is inside the unit circle
    f += np.where(inside, zstar ** (-y - 1) / Bv, 0.0)

    coeffs = scipy.fft.ifft(f)
    xs = np.arange(-xmax, xmax + 1)
    return np.exp(1j * np.pi * xs / W) * coeffs[xs % W]
