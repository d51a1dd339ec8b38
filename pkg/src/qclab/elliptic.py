"""Conformal machinery for the checkerboard-of-hemispheres geometry.

A rectangular cell grid is mapped onto the Riemann sphere, one hemisphere
per cell, by a doubly periodic conformal map built from Jacobi elliptic
functions.  Cells alternate between the upper and lower hemisphere; the
map extends across cell edges by Schwarz reflection.  Everything here is
deterministic geometry: randomness enters only in the surface module.

Conventions
-----------
The equator of the sphere carries an angular coordinate ``theta`` with the
four reference points 1, inf, -1, 0 at theta = 0, pi/2, pi, 3pi/2.  The
upper hemisphere is charted onto the unit disk by the sphere rotation
``u = (1 + i z)/(z + i)``, under which the equator point at angle theta is
exactly ``exp(i theta)``; the lower hemisphere uses the conjugate chart.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ellipj, ellipk, ellipkinc

TAU = 2.0 * np.pi

# boundary angles closer than this to the pole of the boundary coordinate
# are mapped to inf
_POLE_TOL = 1e-12


def boundary_coordinate(theta):
    """Equator angle -> point of the extended real line.

    Closed form tan(theta/2 + pi/4), chosen so that the angles
    0, pi/2, pi, 3pi/2 map to 1, inf, -1, 0.  The pole is returned as
    +inf (the extended real line has a single point at infinity).
    """
    th = np.asarray(theta, dtype=float)
    c = np.cos(th / 2 + np.pi / 4)
    s = np.sin(th / 2 + np.pi / 4)
    safe = np.abs(c) > _POLE_TOL
    out = np.where(safe, s / np.where(safe, c, 1.0), np.inf)
    return float(out) if out.ndim == 0 else out


def _homog(x):
    """Extended real/complex -> projective pair (p, q) with x = p/q."""
    if np.isinf(x):
        return (1.0, 0.0)
    return (x, 1.0)


def cross_ratio(a, b, c, d):
    """Cross ratio (a-c)(b-d) / ((a-d)(b-c)) on the extended line.

    Infinities are handled projectively, so e.g. cross_ratio(2, 1, 0, inf)
    is exactly 2.  Raises on coincident points.  For four points in cyclic
    order the value lies in (1, inf).
    """
    pts = [_homog(x) for x in (a, b, c, d)]

    def det(u, v):
        return u[0] * v[1] - v[0] * u[1]

    pa, pb, pc, pd = pts
    for i in range(4):
        for j in range(i + 1, 4):
            if det(pts[i], pts[j]) == 0:
                raise ValueError("cross ratio of coincident points")
    return (det(pa, pc) * det(pb, pd)) / (det(pa, pd) * det(pb, pc))


class Mobius:
    """Fractional linear map represented by a 2x2 complex matrix."""

    def __init__(self, mat):
        self.mat = np.asarray(mat, dtype=complex).reshape(2, 2)
        self.det = self.mat[0, 0] * self.mat[1, 1] - self.mat[0, 1] * self.mat[1, 0]
        if self.det == 0:
            raise ValueError("singular Mobius matrix")

    @staticmethod
    def through(src, dst):
        """Unique Mobius map sending three finite points to three finite points."""

        def to01inf(z1, z2, z3):
            return np.array([[z2 - z3, -z1 * (z2 - z3)], [z2 - z1, -z3 * (z2 - z1)]], dtype=complex)

        a = to01inf(*src)
        b = to01inf(*dst)
        return Mobius(np.linalg.inv(b) @ a)

    def inv(self):
        a, b = self.mat[0]
        c, d = self.mat[1]
        return Mobius([[d, -b], [-c, a]])

    def __call__(self, s):
        num, den = self.apply_homog(np.asarray(s, dtype=complex), 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(den == 0, np.inf, num / np.where(den == 0, 1.0, den))
        return out

    def apply_homog(self, p, q):
        """Apply to a projective pair; stable where p/q overflows."""
        a, b = self.mat[0]
        c, d = self.mat[1]
        return a * p + b * q, c * p + d * q

    def deriv(self, s):
        c, d = self.mat[1]
        return self.det / (c * np.asarray(s, dtype=complex) + d) ** 2


# chart of the upper hemisphere onto the unit disk; a sphere rotation
DISK_CHART = Mobius([[1j, 1.0], [1.0, 1j]])


def jacobi_cpx(z, m):
    """Jacobi sn, cn, dn of a complex argument, parameter m = k^2.

    Returned in homogeneous form (sn*D, cn*D, dn*D, D) where D is the
    common denominator of the real/imaginary addition formulas.  D -> 0 at
    the poles, so ratios of the homogeneous parts stay finite there.
    """
    z = np.asarray(z, dtype=complex)
    s, c, d, _ = ellipj(z.real, m)
    s1, c1, d1, _ = ellipj(z.imag, 1.0 - m)
    den = c1 * c1 + m * (s * s1) ** 2
    sn = s * d1 + 1j * (c * d * s1 * c1)
    cn = c * c1 - 1j * (s * d * s1 * d1)
    dn = d * c1 * d1 - 1j * m * (s * c * s1)
    return sn, cn, dn, den


def _solve_elliptic_parameter(aspect, tol=1e-14):
    """Parameter m with 2K(m)/K(1-m) = aspect, by bisection."""
    lo, hi = 1e-12, 1.0 - 1e-12

    def ratio(m):
        return 2.0 * ellipk(m) / ellipk(1.0 - m)

    if not (ratio(lo) < aspect < ratio(hi)):
        raise ValueError("cell aspect ratio out of solvable range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ratio(mid) < aspect:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def unwrap_anchors(theta_anchors):
    """Anchors as an increasing array th[0..4] with th[4] = th[0] + 2pi."""
    th = np.asarray(theta_anchors, dtype=float)
    if th.shape != (4,):
        raise ValueError("need exactly four anchor angles")
    th = np.mod(th, TAU)
    base = th[0]
    rel = np.mod(th - base, TAU)
    if np.any(np.diff(rel) <= 0):
        raise ValueError("anchor angles not strictly increasing in cyclic order")
    th = base + rel
    return np.concatenate([th, [th[0] + TAU]])


# vertex label by lattice parity: corners of the base cell [0,a]x[0,b]
# carry labels 1,2,3,4 counterclockwise
_LABEL_BY_PARITY = {(0, 0): 1, (1, 0): 2, (1, 1): 3, (0, 1): 4}


def vertex_label(vi, vj):
    """Label 1..4 of the lattice vertex at integer position (vi, vj)."""
    vi = np.asarray(vi)
    vj = np.asarray(vj)
    pi = vi & 1
    pj = vj & 1
    # table lookup without dict for vectorization
    return np.where(pj == 0, np.where(pi == 0, 1, 2), np.where(pi == 0, 4, 3))


class CellChart:
    """Doubly periodic conformal chart of the plane cell grid on the sphere.

    Parameters
    ----------
    theta_anchors : four equator angles, strictly increasing cyclically.
    midpoints : optional angles interior to the four arcs; default is the
        arc midpoints.  The cell on which the chart is built maps its
        corner with label i to the equator point at angle ``midpoints[i-1]``.
    cell_width : width of one cell in plane units.
    cell_height : optional; the conformally consistent value is derived
        from the anchors, and a supplied value must agree with it.

    Notes
    -----
    Only three corner images determine a Mobius map; the fourth matches
    exactly when the cell aspect ratio equals the one induced by the
    corner cross ratio.  The constructor enforces this to 1e-8.
    """

    def __init__(self, theta_anchors=(0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi),
                 midpoints=None, cell_width=1.0, cell_height=None):
        if cell_width <= 0:
            raise ValueError("cell_width must be positive")
        self.th = unwrap_anchors(theta_anchors)
        if midpoints is None:
            mids = 0.5 * (self.th[:4] + self.th[1:])
        else:
            mids = np.asarray(midpoints, dtype=float)
            mids = self.th[:4] + np.mod(mids - self.th[:4], TAU)
            if np.any(mids >= self.th[1:]) or np.any(mids <= self.th[:4]):
                raise ValueError("midpoints must lie strictly inside their arcs")
        self.mid = mids

        circle = np.exp(1j * self.mid)
        chi = cross_ratio(*circle)
        chi = float(np.real(chi))
        if not chi > 1.0:
            raise ValueError("corner points not in admissible cyclic position")
        k = (np.sqrt(chi) - 1.0) / (np.sqrt(chi) + 1.0)
        aspect = 2.0 * ellipk(k * k) / ellipk(1.0 - k * k)

        self.a = float(cell_width)
        b_derived = self.a / aspect
        if cell_height is None:
            self.b = b_derived
        else:
            if abs(cell_height - b_derived) > 1e-8 * max(1.0, b_derived):
                raise ValueError(
                    "cell_height %.12g inconsistent with anchors (expected %.12g)"
                    % (cell_height, b_derived))
            self.b = float(cell_height)

        # re-derive the parameter from the realized aspect ratio by bisection
        self.m = _solve_elliptic_parameter(self.a / self.b)
        self.k = np.sqrt(self.m)
        self.K = float(ellipk(self.m))
        self.Kp = float(ellipk(1.0 - self.m))
        self.scale = 2.0 * self.K / self.a  # = Kp / b

        # disk chart Mobius: sn corner values -> circle points exp(i mid)
        src = (-1.0 + 0j, 1.0 + 0j, 1.0 / self.k + 0j)
        self.N = Mobius.through(src, tuple(circle[:3]))
        fourth = self.N(-1.0 / self.k)
        if abs(fourth - circle[3]) > 1e-8:
            raise ValueError("fourth corner mismatch: anchors and aspect incompatible")
        # sphere chart Mobius (half-plane model)
        self.M = Mobius(np.linalg.inv(DISK_CHART.mat) @ self.N.mat)

        self._center = None  # cached preimage of the disk center

    # ---- folding ---------------------------------------------------------

    def cell_of(self, z):
        """Integer cell indices (i, j) containing each point."""
        z = np.asarray(z, dtype=complex)
        i = np.floor(z.real / self.a).astype(np.int64)
        j = np.floor(z.imag / self.b).astype(np.int64)
        return i, j

    def is_white(self, i, j):
        """True where the cell maps to the upper hemisphere."""
        return ((i + j) & 1) == 0

    def _fold(self, z):
        """Reflect into the base cell [0,a]x[0,b].

        Returns (w, white, sign) where ``w`` is the folded coordinate,
        ``white`` flags upper-hemisphere cells and ``sign`` is the factor
        (-1)^{rx} entering the chart derivative.
        """
        z = np.asarray(z, dtype=complex)
        i, j = self.cell_of(z)
        x = z.real - i * self.a
        y = z.imag - j * self.b
        rx = (i & 1).astype(bool)
        ry = (j & 1).astype(bool)
        x = np.where(rx, self.a - x, x)
        y = np.where(ry, self.b - y, y)
        white = self.is_white(i, j)
        sign = np.where(rx, -1.0, 1.0)
        return x + 1j * y, white, sign

    # ---- chart evaluation ------------------------------------------------

    def _base_homog(self, w):
        """Homogeneous sn data at the rectangle coordinate of folded points."""
        zeta = self.scale * (w - 0.5 * self.a)
        return jacobi_cpx(zeta, self.m)

    def _mat_chart(self, mob, z, want_deriv):
        """Shared evaluation of Mobius(sn(...)) with reflection bookkeeping."""
        w, white, sign = self._fold(z)
        sn, cn, dn, den = self._base_homog(w)
        a, b = mob.mat[0]
        c, d = mob.mat[1]
        num = a * sn + b * den
        dnm = c * sn + d * den
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(dnm == 0, np.inf + 0j, num / np.where(dnm == 0, 1.0, dnm))
        val = np.where(white, val, np.conj(val))
        if not want_deriv:
            return val, None, white
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            dval = mob.det * cn * dn * self.scale / dnm**2
        dval = sign * np.where(white, dval, np.conj(dval))
        return val, dval, white

    def disk_chart(self, z, want_deriv=False):
        """Chart value u in the closed unit disk (+ du/dz if requested).

        White cells use the upper-hemisphere disk chart, black cells the
        conjugate chart, so u is holomorphic in z on every open cell and
        |u| = 1 exactly on the cell edges.
        """
        val, dval, white = self._mat_chart(self.N, z, want_deriv)
        if want_deriv:
            return val, dval
        return val

    def sphere(self, z):
        """Value of the periodic map in the plane chart of the sphere."""
        val, _, _ = self._mat_chart(self.M, z, False)
        return val

    def sphere_deriv(self, z):
        """Derivative of the sphere-chart value; inf at poles."""
        _, dval, _ = self._mat_chart(self.M, z, True)
        return dval

    def sphere_deriv_recip(self, z):
        """Derivative of 1/value, finite at the poles of the map."""
        a, b = self.M.mat[0]
        c, d = self.M.mat[1]
        flipped = Mobius([[c, d], [a, b]])
        _, dval, _ = self._mat_chart(flipped, z, True)
        return dval

    # ---- angular sectors ---------------------------------------------------

    def equator_angle(self, z, u=None):
        """Domain equator angle psi of the chart value (white: arg u)."""
        if u is None:
            u = self.disk_chart(z)
        _, white, _ = self._fold(z)
        psi = np.angle(u)
        psi = np.where(white, psi, -psi)
        return self.th[0] + np.mod(psi - self.th[0], TAU)

    def sector_of(self, z, u=None):
        """Angular sector data for each point.

        Returns (i, j, arc, branch, psi): cell indices, arc index 0..3,
        branch 0 for [theta_i, m_i) and 1 for [m_i, theta_{i+1}), and the
        domain equator angle psi.  Points exactly on a sector boundary are
        assigned by the half-open convention.
        """
        z = np.asarray(z, dtype=complex)
        i, j = self.cell_of(z)
        psi = self.equator_angle(z, u)
        arc = np.zeros_like(i)
        for idx in range(4):
            arc = np.where((psi >= self.th[idx]) & (psi < self.th[idx + 1]), idx, arc)
        branch = (psi >= self.mid[arc]).astype(np.int64)
        return i, j, arc, branch, psi

    def sector_vertex(self, z, u=None):
        """Lattice vertex (vi, vj) owning the sector of each point."""
        i, j, arc, branch, psi = self.sector_of(z, u)
        label = arc + 1
        vi = np.zeros_like(i)
        vj = np.zeros_like(j)
        # exactly one corner of cell (i, j) carries each label
        for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
            hit = vertex_label(i + di, j + dj) == label
            vi = np.where(hit, i + di, vi)
            vj = np.where(hit, j + dj, vj)
        return vi, vj, arc, branch, psi

    # ---- special points and ray tracing -----------------------------------

    def center_point(self):
        """Preimage in the base cell of the disk-chart origin."""
        if self._center is None:
            target = self.N.inv()(0.0)
            zeta = self._invert_sn(complex(target), complex(self.K * 0.2 + 0.5j * self.Kp))
            self._center = complex((zeta / self.scale) + 0.5 * self.a)
        return self._center

    def _invert_sn(self, s_target, zeta0, steps=60):
        """Newton inversion of sn on the rectangle."""
        zeta = zeta0
        for _ in range(steps):
            sn, cn, dn, den = jacobi_cpx(zeta, self.m)
            f = sn / den - s_target
            df = (cn / den) * (dn / den)
            if df == 0:
                break
            step = f / df
            # keep iterates inside the closed rectangle
            new = zeta - step
            new = complex(min(max(new.real, -self.K), self.K),
                          min(max(new.imag, 0.0), self.Kp))
            if abs(new - zeta) < 1e-15:
                zeta = new
                break
            zeta = new
        return zeta

    def _boundary_preimage(self, s):
        """Rectangle boundary point with the given real/inf sn value."""
        k = self.k
        if np.isinf(s):
            return complex(0.0, self.Kp)
        s = float(s)
        if -1.0 <= s <= 1.0:
            return complex(float(ellipkinc(np.arcsin(s), self.m)), 0.0)
        if s > 1.0:
            if s <= 1.0 / k + 1e-12:
                sq = min(max((1.0 - 1.0 / s**2) / (1.0 - self.m), 0.0), 1.0)
                v = float(ellipkinc(np.arcsin(np.sqrt(sq)), 1.0 - self.m))
                return complex(self.K, v)
            x = float(ellipkinc(np.arcsin(1.0 / (k * s)), self.m))
            return complex(x, self.Kp)
        # s < -1
        if s >= -1.0 / k - 1e-12:
            sq = min(max((1.0 - 1.0 / s**2) / (1.0 - self.m), 0.0), 1.0)
            v = float(ellipkinc(np.arcsin(np.sqrt(sq)), 1.0 - self.m))
            return complex(-self.K, v)
        x = float(ellipkinc(np.arcsin(1.0 / (k * s)), self.m))
        return complex(x, self.Kp)

    def base_corner(self, label):
        """Base-cell corner carrying the given label (1..4)."""
        return {1: 0j, 2: complex(self.a, 0), 3: complex(self.a, self.b),
                4: complex(0, self.b)}[label]

    def anchor_point(self, arc):
        """Base-cell boundary point mapping to the anchor theta[arc]."""
        s = complex(self.N.inv()(np.exp(1j * self.th[arc])))
        if np.isinf(s.real) or np.isinf(s.imag) or abs(s) > 1e12:
            sv = np.inf
        else:
            if abs(s.imag) > 1e-9 * max(1.0, abs(s)):
                raise RuntimeError("anchor preimage not on the boundary")
            sv = s.real
        zeta = self._boundary_preimage(sv)
        return complex(zeta / self.scale + 0.5 * self.a)

    def trace_ray(self, kind, idx, npts=16):
        """Preimage polyline of a chart ray, in base-cell coordinates.

        kind 'anchor' traces the ray at angle theta[idx] from the cell
        center point to the cell boundary; kind 'mid' traces the ray at
        angle mid[idx] ending at the corner with label idx+1.  Returns an
        (npts+1, ) complex array from center to boundary.
        """
        ang = self.th[idx] if kind == "anchor" else self.mid[idx]
        end = self.anchor_point(idx) if kind == "anchor" else self.base_corner(idx + 1)
        start = self.center_point()
        rho = np.linspace(0.0, 1.0, npts + 1)
        pts = np.empty(npts + 1, dtype=complex)
        pts[0] = start
        pts[-1] = end
        guess = start
        for q in range(1, npts):
            target_u = rho[q] * np.exp(1j * ang)
            s_target = complex(self.N.inv()(target_u))
            guess_zeta = self.scale * (guess - 0.5 * self.a)
            zeta = self._invert_sn(s_target, guess_zeta)
            guess = zeta / self.scale + 0.5 * self.a
            pts[q] = guess
        return pts
