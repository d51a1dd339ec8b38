"""Beltrami equation solver for compactly supported coefficients.

Solves w_zbar = mu * w_z for mu supported in B(0, R) on a periodic grid
over [-L, L]^2 with L >= 2R.  The auxiliary density h = w_zbar satisfies
the singular integral equation h = mu + mu * S[h], where S is the
Beurling transform, a Fourier multiplier conj(xi)/xi.  Since sup|mu| = k
< 1 and S is an L^2 isometry, the Neumann iteration converges
geometrically at rate k.  The map is reconstructed as

    w(z) = z + mean(h) * conj(z) + C[h](z),

with C the Cauchy transform (multiplier 2/(i xi), zero mode dropped); the
mean term restores the zero mode that the periodic transform cannot
carry.  The result is post-composed with the affine map fixing 0 and 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .beltrami import BeltramiField, grid_axes, grid_points


class NonConvergenceError(RuntimeError):
    """Neumann iteration failed to reach tolerance within max_iter."""


@dataclass
class DiscreteMap:
    """Grid-sampled plane map with bilinear interpolation.

    values[j, i] is w at x[i] + i y[j] on the uniform grid over [-L, L).
    Maps returned by the solver fix 0 and 1 exactly (post-normalization)
    and carry convergence metadata.
    """
    values: np.ndarray
    L: float
    normalized: bool = True
    meta: dict = dfield(default_factory=dict)

    @property
    def n(self):
        return self.values.shape[0]

    def points(self):
        return grid_points(self.L, self.n)

    def evaluate(self, z):
        """Bilinear interpolation; errors outside the grid domain."""
        z = np.asarray(z, dtype=complex)
        n = self.n
        step = 2.0 * self.L / n
        fx = (z.real + self.L) / step
        fy = (z.imag + self.L) / step
        if np.any((fx < -1e-9) | (fx > n - 1 + 1e-9) | (fy < -1e-9) | (fy > n - 1 + 1e-9)):
            raise ValueError("evaluation point outside map domain")
        ix = np.clip(np.floor(fx).astype(np.int64), 0, n - 2)
        iy = np.clip(np.floor(fy).astype(np.int64), 0, n - 2)
        tx = np.clip(fx - ix, 0.0, 1.0)
        ty = np.clip(fy - iy, 0.0, 1.0)
        v = self.values
        w = (v[iy, ix] * (1 - tx) * (1 - ty) + v[iy, ix + 1] * tx * (1 - ty)
             + v[iy + 1, ix] * (1 - tx) * ty + v[iy + 1, ix + 1] * tx * ty)
        return w

    def __call__(self, z):
        return self.evaluate(z)

    def coverage_radius(self, margin=1):
        """min |w| over the domain boundary: B(0, r) is inside the image."""
        v = self.values
        m = margin
        ring = np.concatenate([v[m, m:-m], v[-1 - m, m:-m], v[m:-m, m], v[m:-m, -1 - m]])
        return float(np.abs(ring).min())

    def wirtinger(self):
        """Central finite-difference w_z and w_zbar on the grid interior."""
        step = 2.0 * self.L / self.n
        wx = np.gradient(self.values, step, axis=1)
        wy = np.gradient(self.values, step, axis=0)
        wz = 0.5 * (wx - 1j * wy)
        wzb = 0.5 * (wx + 1j * wy)
        return wz, wzb

    def jacobian(self):
        wz, wzb = self.wirtinger()
        return np.abs(wz) ** 2 - np.abs(wzb) ** 2


def _multipliers(L, n):
    k1 = 2.0 * np.pi * sfft.fftfreq(n, d=2.0 * L / n)
    xi = k1[None, :] + 1j * k1[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        beurling = np.where(xi == 0, 0.0, np.conj(xi) / np.where(xi == 0, 1.0, xi))
        cauchy = np.where(xi == 0, 0.0, 2.0 / (1j * np.where(xi == 0, 1.0, xi)))
    return beurling, cauchy


def beurling_transform(h, L):
    """Discrete Beurling transform (periodic, spectral)."""
    n = h.shape[0]
    mult, _ = _multipliers(L, n)
    return sfft.ifft2(mult * sfft.fft2(h, workers=-1), workers=-1)


def cauchy_transform(h, L):
    """Periodic dbar-antiderivative plus the mean * conj(z) zero mode."""
    n = h.shape[0]
    _, mult = _multipliers(L, n)
    base = sfft.ifft2(mult * sfft.fft2(h, workers=-1), workers=-1)
    return base + h.mean() * np.conj(grid_points(L, n))


def _boundary_collar(field, width=2):
    """Mask of samples within `width` cells of a region/sector boundary."""
    rm = field.region_map
    if rm is None:
        return np.zeros(field.values.shape, dtype=bool)
    edge = np.zeros(rm.shape, dtype=bool)
    edge[:, 1:] |= rm[:, 1:] != rm[:, :-1]
    edge[:, :-1] |= rm[:, 1:] != rm[:, :-1]
    edge[1:, :] |= rm[1:, :] != rm[:-1, :]
    edge[:-1, :] |= rm[1:, :] != rm[:-1, :]
    if width > 0:
        edge = ndimage.binary_dilation(edge, iterations=width)
    return edge


def residual_stats(dmap, field, collar=2):
    """Finite-difference residual |w_zbar - mu w_z| away from jumps.

    Excludes a collar around coefficient jumps, around the truncation
    circle, and a frame near the domain boundary, where central
    differences are meaningless.
    """
    mu = field.values
    if mu.shape != dmap.values.shape:
        fld_pts = dmap.points()
        mu = field.sample_at(fld_pts)
    wz, wzb = dmap.wirtinger()
    res = np.abs(wzb - mu * wz)
    bad = _boundary_collar(field, collar)
    n = dmap.n
    frame = max(collar, 2)
    box = np.zeros((n, n), dtype=bool)
    box[frame:-frame, frame:-frame] = True
    R = field.meta.get("truncation_radius")
    if R is not None:
        pts = dmap.points()
        step = 2.0 * dmap.L / n
        ring = np.abs(np.abs(pts) - R) <= (collar + 1) * step
        bad |= ring
    ok = box & ~bad
    vals = res[ok]
    if vals.size == 0:
        return {"sup": float("nan"), "median": float("nan"), "count": 0}
    return {"sup": float(vals.max()), "median": float(np.median(vals)),
            "count": int(vals.size)}


def solve_truncated(field, tol=1e-8, max_iter=400, collar=2):
    """Solve the Beltrami equation for a truncated coefficient field.

    Returns a DiscreteMap fixing 0 and 1. Iteration stops when successive
    h-iterates differ by < tol*(1-k) in sup norm; raises
    NonConvergenceError otherwise. The finite-difference residual away
    from coefficient jumps is recorded in meta['residual'].
    """
    mu = field.values
    n = field.n
    L = field.L
    k = field.sup()
    if k >= 1.0:
        raise ValueError("sup|mu| must be < 1")

    R = field.meta.get("truncation_radius")
    if R is None:
        supp = np.abs(mu) > 0
        if supp.any():
            R = float(np.abs(field.points()[supp]).max())
        else:
            R = 0.0
    if R > 0 and L < 2 * R - 1e-9:
        raise ValueError("domain too small: need L >= 2R for padding (L=%g, R=%g)"
                         % (L, R))

    beur, cau = _multipliers(L, n)
    h = mu.copy()
    stop = tol * max(1.0 - k, 1e-12)
    iters = 0
    diff = 0.0
    if np.abs(mu).max() == 0.0:
        h[:] = 0.0
    else:
        for iters in range(1, max_iter + 1):
            sh = sfft.ifft2(beur * sfft.fft2(h, workers=-1), workers=-1)
            h_new = mu * (1.0 + sh)
            diff = float(np.abs(h_new - h).max())
            h = h_new
            if diff < stop:
                break
        else:
            raise NonConvergenceError(
                "no convergence in %d iterations (diff=%.3g, k=%.3g); "
                "k may be too close to 1 or the grid too coarse" % (max_iter, diff, k))

    pts = grid_points(L, n)
    w = pts + h.mean() * np.conj(pts) + sfft.ifft2(cau * sfft.fft2(h, workers=-1), workers=-1)

    raw = DiscreteMap(w, L, normalized=False)
    w0 = raw.evaluate(0.0 + 0.0j)
    w1 = raw.evaluate(1.0 + 0.0j)
    if w1 == w0:
        raise NonConvergenceError("degenerate normalization: w(1) == w(0)")
    w = (w - w0) / (w1 - w0)

    dmap = DiscreteMap(w, L, normalized=True, meta={
        "source_hash": field.content_hash(),
        "truncation_radius": R,
        "iterations": iters,
        "h_diff": diff,
        "sup_mu": k,
        "seed": field.seed,
    })
    dmap.meta["residual"] = residual_stats(dmap, field, collar=collar)
    return dmap


def solve_limit(field, radii, eval_radius, tol=1e-6, solver_tol=1e-8, n_eval=512):
    """Truncation ladder: solve at increasing radii until maps stabilize.

    Returns the map for the first rung whose sup-difference from the
    previous rung on B(0, eval_radius) is below tol; if the ladder is
    exhausted the last map is returned flagged unconverged, with the
    Cauchy-difference sequence in meta['ladder_diffs'].
    """
    from .beltrami import truncate

    radii = sorted(float(r) for r in radii)
    if not radii:
        raise ValueError("empty radius ladder")
    if eval_radius >= field.L:
        raise ValueError("evaluation set exceeds the grid domain")

    rng_pts = _disk_points(eval_radius, n_eval)
    prev = None
    diffs = []
    last = None
    for R in radii:
        dmap = solve_truncated(truncate(field, R), tol=solver_tol)
        cur = dmap.evaluate(rng_pts)
        if prev is not None:
            d = float(np.abs(cur - prev).max())
            diffs.append(d)
            if d < tol:
                dmap.meta["ladder_diffs"] = diffs
                dmap.meta["ladder_converged"] = True
                return dmap
        prev = cur
        last = dmap
    last.meta["ladder_diffs"] = diffs
    last.meta["ladder_converged"] = False
    return last


def _disk_points(radius, count):
    """Deterministic low-discrepancy points in the closed disk."""
    i = np.arange(count)
    r = radius * np.sqrt((i + 0.5) / count)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    return r * np.exp(1j * golden * i)


def evaluate(dmap, z):
    """Interpolated map value (module-level alias)."""
    return dmap.evaluate(z)


def invert_at(dmap, w_target, guess=None, tol=1e-9, max_iter=60):
    """Solve evaluate(z) = w_target by damped Newton with grid fallback.

    The target must lie inside the image of the grid boundary (winding
    test); raises if Newton stalls even from the best grid seed.
    """
    w_target = complex(w_target)
    if not _inside_image(dmap, w_target):
        raise ValueError("target outside the image of the map domain")
    wz_grid, wzb_grid = dmap.wirtinger()
    gz = DiscreteMap(wz_grid, dmap.L, normalized=False)
    gzb = DiscreteMap(wzb_grid, dmap.L, normalized=False)

    def newton(z0):
        z = complex(z0)
        lim = dmap.L - 2.0 * dmap.L / dmap.n
        f = dmap.evaluate(z) - w_target
        for _ in range(max_iter):
            if abs(f) <= tol:
                return z
            p = complex(gz.evaluate(z))
            q = complex(gzb.evaluate(z))
            det = abs(p) ** 2 - abs(q) ** 2
            if det <= 0:
                return None
            step = (np.conj(p) * f - q * np.conj(f)) / det
            lam = 1.0
            while lam > 1e-6:
                zn = z - lam * step
                zn = complex(np.clip(zn.real, -lim, lim), np.clip(zn.imag, -lim, lim))
                fn = dmap.evaluate(zn) - w_target
                if abs(fn) < abs(f):
                    z, f = zn, fn
                    break
                lam *= 0.5
            else:
                return None
        return z if abs(f) <= tol else None

    if guess is not None:
        z = newton(guess)
        if z is not None:
            return z
    # grid-search fallback: best few starting nodes
    d = np.abs(dmap.values - w_target)
    flat = np.argsort(d, axis=None)[:8]
    pts = dmap.points()
    for q in flat:
        z = newton(pts.flat[q])
        if z is not None:
            return z
    raise NonConvergenceError("Newton inversion failed for target %r" % w_target)


def _inside_image(dmap, w_target, margin=1):
    v = dmap.values
    m = margin
    ring = np.concatenate([v[m, m:-m], v[m:-m, -1 - m], v[-1 - m, m:-m][::-1],
                           v[m:-m, m][::-1]])
    # winding number of the boundary image around the target
    rel = np.concatenate([ring, ring[:1]]) - w_target
    ang = np.unwrap(np.angle(rel))
    winding = (ang[-1] - ang[0]) / (2 * np.pi)
    return abs(winding) > 0.5


def map_from_function(func, L, n, meta=None):
    """DiscreteMap sampling an explicit formula (oracles, controls)."""
    vals = np.asarray(func(grid_points(L, n)), dtype=complex)
    return DiscreteMap(vals, L, normalized=True, meta=meta or {"synthetic": True})
