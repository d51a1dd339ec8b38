"""Discrete conformal modulus via anisotropic conductivity.

The modulus of a quadrilateral (reciprocal extremal length of the family
joining the marked sides) equals the Dirichlet energy of the potential
with plates on the marked sides; the modulus of an annulus (extremal
length of the connecting family, not reciprocal) equals the reciprocal of
that energy.  Image moduli under a map with Beltrami coefficient mu are
computed intrinsically with the conductivity tensor

    A = [[|1-mu|^2, -2 Im mu], [-2 Im mu, |1+mu|^2]] / (1 - |mu|^2),

which has unit determinant; no image meshing is involved.  Discretization
is bilinear (Q1) finite elements on structured grids; a five-point stencil
cannot carry the mixed term -2 Im mu, which is why elements are used.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def _q1_gradients():
    """Gradients of the four bilinear shape functions at 2x2 Gauss points."""
    G = np.empty((4, 4, 2))
    for g, (x, y) in enumerate([(a, b) for b in _GAUSS for a in _GAUSS]):
        G[g] = [[-(1 - y), -(1 - x)], [(1 - y), -x], [y, x], [-y, (1 - x)]]
    return G

_G_REF = _q1_gradients()


def _element_matrices(Acells, hx, hy):
    """Per-cell 4x4 stiffness for constant conductivity per cell."""
    G = _G_REF.copy()
    G[:, :, 0] /= hx
    G[:, :, 1] /= hy
    return np.einsum("gia,cab,gjb->cij", G, Acells, G) * (hx * hy / 4.0)


def _fem_energy(conn, n_nodes, Acells, hx, hy, fixed):
    """Assemble, apply Dirichlet data, solve, return the Dirichlet energy.

    conn: (ncells, 4) node ids in the local order (0,0),(1,0),(1,1),(0,1);
    fixed: dict node id -> value.
    """
    Ke = _element_matrices(Acells, hx, hy)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n_nodes, n_nodes))

    u = np.zeros(n_nodes)
    fixed_ids = np.fromiter(fixed.keys(), dtype=np.int64)
    u[fixed_ids] = np.fromiter(fixed.values(), dtype=float)
    free = np.ones(n_nodes, dtype=bool)
    free[fixed_ids] = False
    # nodes not referenced by any cell stay out of the system
    referenced = np.zeros(n_nodes, dtype=bool)
    referenced[conn.ravel()] = True
    free &= referenced

    Kff = K[free][:, free]
    rhs = -K[free][:, ~free] @ u[~free]
    nf = int(free.sum())
    if nf > 0:
        if nf <= 45_000:
            u[free] = spla.spsolve(Kff.tocsc(), rhs)
        else:
            try:
                import pyamg
                ml = pyamg.smoothed_aggregation_solver(Kff.tocsr(), max_coarse=200)
                u[free] = ml.solve(rhs, tol=1e-11, accel="cg", maxiter=400)
            except Exception:
                u[free] = spla.spsolve(Kff.tocsc(), rhs)
    mask = referenced
    return float(u[mask] @ (K[mask][:, mask] @ u[mask]))


# ---------------------------------------------------------------------------
# conductivity fields
# ---------------------------------------------------------------------------

class ConductivityField:
    """2x2 symmetric positive definite matrix field on the plane."""

    def __init__(self, sampler, det_tol=1e-9):
        self._sampler = sampler
        self.det_tol = det_tol

    @staticmethod
    def identity():
        def sampler(z):
            out = np.zeros(np.shape(z) + (2, 2))
            out[..., 0, 0] = 1.0
            out[..., 1, 1] = 1.0
            return out
        return ConductivityField(sampler)

    def sample(self, z):
        A = self._sampler(np.asarray(z, dtype=complex))
        return A


def beltrami_to_matrix(mu):
    """Conductivity matrices for coefficient values mu (any shape)."""
    mu = np.asarray(mu, dtype=complex)
    a2 = np.abs(mu) ** 2
    if np.any(a2 >= 1.0):
        raise ValueError("|mu| >= 1 sample in conductivity conversion")
    den = 1.0 - a2
    out = np.empty(mu.shape + (2, 2))
    out[..., 0, 0] = np.abs(1.0 - mu) ** 2 / den
    out[..., 1, 1] = np.abs(1.0 + mu) ** 2 / den
    out[..., 0, 1] = out[..., 1, 0] = -2.0 * mu.imag / den
    return out


def conductivity_from_beltrami(field):
    """Intrinsic conductivity of the conformal structure of a field.

    Samples the coefficient grid by nearest neighbor, preserving the
    piecewise structure and the unit determinant exactly at samples.
    """
    def sampler(z):
        return beltrami_to_matrix(field.sample_at(z))
    return ConductivityField(sampler)


# ---------------------------------------------------------------------------
# quadrilaterals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quadrilateral:
    """Four boundary vertices in counterclockwise order with a marked pair.

    marked 'vertical' joins sides (v3 v0) and (v1 v2); 'horizontal' joins
    (v0 v1) and (v2 v3).  The curve family of the modulus connects the
    marked pair.  Sides are straight segments.
    """
    vertices: tuple
    marked: str = "vertical"

    def __post_init__(self):
        if len(self.vertices) != 4:
            raise ValueError("a quadrilateral needs four vertices")
        if self.marked not in ("vertical", "horizontal"):
            raise ValueError("marked must be 'vertical' or 'horizontal'")
        v = [complex(p) for p in self.vertices]
        area = 0.0
        for q in range(4):
            a, b = v[q], v[(q + 1) % 4]
            area += a.real * b.imag - b.real * a.imag
        if abs(area) < 1e-14:
            raise ValueError("degenerate quadrilateral")

    @staticmethod
    def rectangle(x0, x1, y0, y1, marked="vertical"):
        if not (x1 > x0 and y1 > y0):
            raise ValueError("degenerate rectangle")
        return Quadrilateral((complex(x0, y0), complex(x1, y0),
                              complex(x1, y1), complex(x0, y1)), marked)


def modulus_euclidean_rectangle(a, b, marked="vertical"):
    """Closed-form modulus of an a x b rectangle.

    Marked vertical sides (curves run horizontally): Mod = b/a;
    marked horizontal: Mod = a/b.  The two markings are reciprocal.
    """
    if a <= 0 or b <= 0:
        raise ValueError("side lengths must be positive")
    return b / a if marked == "vertical" else a / b


def _bilinear_pullback(quad, conductivity, nx, ny):
    """Pulled-back conductivity per cell of the reference unit square."""
    v = np.array([complex(p) for p in quad.vertices])
    xi = (np.arange(nx) + 0.5) / nx
    eta = (np.arange(ny) + 0.5) / ny
    XI, ETA = np.meshgrid(xi, eta)
    F = (v[0] * (1 - XI) * (1 - ETA) + v[1] * XI * (1 - ETA)
         + v[2] * XI * ETA + v[3] * (1 - XI) * ETA)
    dFdxi = (-v[0] * (1 - ETA) + v[1] * (1 - ETA) + v[2] * ETA - v[3] * ETA)
    dFdeta = (-v[0] * (1 - XI) - v[1] * XI + v[2] * XI + v[3] * (1 - XI))
    J = np.empty(F.shape + (2, 2))
    J[..., 0, 0] = dFdxi.real
    J[..., 1, 0] = dFdxi.imag
    J[..., 0, 1] = dFdeta.real
    J[..., 1, 1] = dFdeta.imag
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(detJ <= 0):
        raise ValueError("quadrilateral is not positively oriented/convex")
    Jinv = np.empty_like(J)
    Jinv[..., 0, 0] = J[..., 1, 1]
    Jinv[..., 1, 1] = J[..., 0, 0]
    Jinv[..., 0, 1] = -J[..., 0, 1]
    Jinv[..., 1, 0] = -J[..., 1, 0]
    Jinv /= detJ[..., None, None]
    A = conductivity.sample(F)
    At = np.einsum("...ab,...bc,...dc->...ad", Jinv, A, Jinv) * detJ[..., None, None]
    return At.reshape(-1, 2, 2)


def _grid_conn(nx, ny, periodic_y=False):
    """Connectivity of a structured grid; optionally wraps the y axis."""
    nyn = ny if periodic_y else ny + 1
    def nid(i, j):
        return (j % nyn if periodic_y else j) * (nx + 1) + i
    i = np.arange(nx)
    j = np.arange(ny)
    I, J = np.meshgrid(i, j)
    conn = np.stack([nid(I, J), nid(I + 1, J), nid(I + 1, J + 1), nid(I, J + 1)],
                    axis=-1).reshape(-1, 4)
    return conn, nyn * (nx + 1)


def _solve_reference(Acells, nx, ny, marked):
    conn, n_nodes = _grid_conn(nx, ny)
    fixed = {}
    if marked == "vertical":
        for j in range(ny + 1):
            fixed[j * (nx + 1)] = 0.0
            fixed[j * (nx + 1) + nx] = 1.0
    else:
        for i in range(nx + 1):
            fixed[i] = 0.0
            fixed[ny * (nx + 1) + i] = 1.0
    return _fem_energy(conn, n_nodes, Acells, 1.0 / nx, 1.0 / ny, fixed)


def modulus_discrete(quad, conductivity=None, n_short=64, full_output=False,
                     max_cells=3_000_000):
    """Modulus of a quadrilateral under a conductivity structure.

    Solves the anisotropic Laplace problem on the bilinear reference
    square with plates on the marked sides and reports the Dirichlet
    energy, which matches modulus_euclidean_rectangle conventions.  The
    value is computed at two resolutions; with full_output=True a dict
    with both values and a Richardson error estimate is returned.
    """
    if n_short < 8:
        raise ValueError("resolution too coarse (need n_short >= 8)")
    if conductivity is None:
        conductivity = ConductivityField.identity()
    v = [complex(p) for p in quad.vertices]
    w = 0.5 * (abs(v[1] - v[0]) + abs(v[2] - v[3]))
    h = 0.5 * (abs(v[3] - v[0]) + abs(v[2] - v[1]))
    short = min(w, h)

    def run(ns):
        nx = max(4, int(round(ns * w / short)))
        ny = max(4, int(round(ns * h / short)))
        if nx * ny > max_cells:
            raise ValueError("requested modulus grid exceeds cell budget")
        A = _bilinear_pullback(quad, conductivity, nx, ny)
        return _solve_reference(A, nx, ny, quad.marked)

    coarse = run(n_short // 2)
    fine = run(n_short)
    est = abs(fine - coarse) / 3.0  # second-order assumption
    if full_output:
        return {"value": fine, "coarse": coarse,
                "richardson_error": est, "n_short": n_short}
    return fine


# ---------------------------------------------------------------------------
# annuli
# ---------------------------------------------------------------------------

def _round_annulus_energy(r, R, conductivity, n_rho, n_phi):
    """Energy of the annulus potential in log-polar coordinates."""
    L = np.log(R / r)
    h_rho = L / n_rho
    h_phi = 2.0 * np.pi / n_phi
    rho = np.log(r) + (np.arange(n_rho) + 0.5) * h_rho
    phi = (np.arange(n_phi) + 0.5) * h_phi
    P, Q = np.meshgrid(rho, phi)   # Q rows over phi, P over rho
    z = np.exp(P + 1j * Q)
    A = conductivity.sample(z)
    c, s = np.cos(Q), np.sin(Q)
    Rot = np.empty(P.shape + (2, 2))
    Rot[..., 0, 0] = c
    Rot[..., 0, 1] = -s
    Rot[..., 1, 0] = s
    Rot[..., 1, 1] = c
    # pullback under exp: A~ = Rot(-phi) A Rot(phi)
    At = np.einsum("...ba,...bc,...cd->...ad", Rot, A, Rot)
    conn, n_nodes = _grid_conn(n_rho, n_phi, periodic_y=True)
    fixed = {}
    for j in range(n_phi):
        fixed[j * (n_rho + 1)] = 0.0
        fixed[j * (n_rho + 1) + n_rho] = 1.0
    return _fem_energy(conn, n_nodes, At.reshape(-1, 2, 2), h_rho, h_phi, fixed)


def _square_ring_energy(inner, outer, conductivity, n_half):
    """Energy between the boundary squares [-inner,inner]^2, [-outer,outer]^2."""
    hi = int(round(inner / outer * n_half))
    if abs(hi * outer / n_half - inner) > 1e-9 * outer:
        raise ValueError("inner square must align with the ring grid")
    n = 2 * n_half
    h = outer / n_half
    xc = -outer + (np.arange(n) + 0.5) * h
    X, Y = np.meshgrid(xc, xc)
    active = ~((np.abs(X) < inner) & (np.abs(Y) < inner))
    A = conductivity.sample(X + 1j * Y)
    conn, n_nodes = _grid_conn(n, n)
    conn = conn[active.ravel()]
    Acells = A.reshape(-1, 2, 2)[active.ravel()]
    fixed = {}
    for t in range(n + 1):
        for nid in (t, n * (n + 1) + t, t * (n + 1), t * (n + 1) + n):
            fixed[nid] = 1.0
    lo, hip = n_half - hi, n_half + hi
    for t in range(lo, hip + 1):
        for nid in (lo * (n + 1) + t, hip * (n + 1) + t,
                    t * (n + 1) + lo, t * (n + 1) + hip):
            fixed[nid] = 0.0
    return _fem_energy(conn, n_nodes, Acells, h, h, fixed)


def modulus_annulus_discrete(inner, outer, conductivity=None, resolution=128,
                             full_output=False):
    """Extremal length of the family connecting two boundary components.

    Boundaries are ('circle', radius) or ('square', half_width); both must
    be of the same kind and concentric at 0.  Round annuli solve in
    log-polar coordinates (exact for the flat structure), square rings on
    a masked Cartesian grid.  Returns 1/energy: the connecting family's
    extremal length, so the flat round annulus A(r, R) gives
    log(R/r)/(2 pi).
    """
    if conductivity is None:
        conductivity = ConductivityField.identity()
    kind_i, size_i = inner
    kind_o, size_o = outer
    if kind_i != kind_o:
        raise ValueError("mixed boundary kinds are not supported")
    if not 0 < size_i < size_o:
        raise ValueError("need 0 < inner size < outer size")

    def run(res):
        if kind_i == "circle":
            aspect = np.log(size_o / size_i) / (2 * np.pi)
            n_rho = max(8, int(round(res * min(1.0, aspect))))
            n_phi = max(16, int(round(res * min(1.0, 1.0 / aspect))))
            return _round_annulus_energy(size_i, size_o, conductivity, n_rho, n_phi)
        if kind_i == "square":
            return _square_ring_energy(size_i, size_o, conductivity, res // 2)
        raise ValueError("unknown boundary kind %r" % kind_i)

    e_coarse = run(resolution // 2)
    e_fine = run(resolution)
    lam_fine = 1.0 / e_fine
    lam_coarse = 1.0 / e_coarse
    est = abs(lam_fine - lam_coarse) / 3.0
    if full_output:
        return {"value": lam_fine, "coarse": lam_coarse, "richardson_error": est}
    return lam_fine


# ---------------------------------------------------------------------------
# rough quasiconformality diagnostics
# ---------------------------------------------------------------------------

def random_rectangles(n_rect, half_window, side_floor, seed):
    """Deterministic axis-aligned test rectangles inside B(0, half_window)."""
    from ._rng import counter_uniform
    rects = []
    q = 0
    attempt = 0
    while len(rects) < n_rect and attempt < 100 * n_rect:
        u = [counter_uniform(seed, attempt, t) for t in range(4)]
        attempt += 1
        wmax = max(side_floor * 1.05, 0.45 * half_window)
        w = side_floor + (wmax - side_floor) * u[0]
        h = side_floor + (wmax - side_floor) * u[1]
        cx = (2 * u[2] - 1) * (half_window - w / 2 - 1e-9)
        cy = (2 * u[3] - 1) * (half_window - h / 2 - 1e-9)
        if np.hypot(abs(cx) + w / 2, abs(cy) + h / 2) <= half_window:
            rects.append((cx - w / 2, cx + w / 2, cy - h / 2, cy + h / 2))
            q += 1
    if len(rects) < n_rect:
        raise RuntimeError("could not place the requested rectangles")
    return rects


def rough_qc_report(field, rectangles, side_floor, n_short=48):
    """Empirical modulus distortion over a family of rectangles.

    For each rectangle and both markings, compares the intrinsic modulus
    (conductivity route) with the Euclidean one and accumulates
    max(ratio, 1/ratio).  Returns a dict with the per-rectangle table and
    the empirical distortion bound ``K`` (the max).
    """
    cond = conductivity_from_beltrami(field)
    rows = []
    worst = 1.0
    for idx, (x0, x1, y0, y1) in enumerate(rectangles):
        if (x1 - x0) < side_floor - 1e-9 or (y1 - y0) < side_floor - 1e-9:
            raise ValueError("rectangle %d has a side below the floor" % idx)
        for marked in ("vertical", "horizontal"):
            quad = Quadrilateral.rectangle(x0, x1, y0, y1, marked)
            eu = modulus_euclidean_rectangle(x1 - x0, y1 - y0, marked)
            im = modulus_discrete(quad, cond, n_short=n_short)
            ratio = im / eu
            kr = max(ratio, 1.0 / ratio)
            worst = max(worst, kr)
            rows.append({"rect": idx, "marked": marked, "euclidean": eu,
                         "intrinsic": im, "ratio": ratio, "distortion": kr})
    return {"K": worst, "rows": rows, "side_floor": side_floor}


def annulus_chain_diagnostic(field, base_half_width, depth, resolution=192):
    """Moduli of nested square rings Q(2^k n, 2^{k+1} n) under the field.

    Returns per-ring intrinsic moduli (connecting-family extremal length)
    and their running sum; a divergent sum is evidence that the image
    surface has no finite conformal boundary.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if base_half_width * 2 ** depth > field.L + 1e-9:
        raise ValueError("field domain too small for the requested chain")
    cond = conductivity_from_beltrami(field)
    mods = []
    for kk in range(depth):
        inner = base_half_width * 2 ** kk
        outer = 2 * inner
        lam = modulus_annulus_discrete(("square", inner), ("square", outer),
                                       cond, resolution=resolution)
        mods.append(lam)
    return {"ring_moduli": mods, "running_sum": list(np.cumsum(mods)),
            "base_half_width": base_half_width}
