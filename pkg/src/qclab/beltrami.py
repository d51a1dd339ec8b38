"""Random Beltrami coefficient fields sampled on partitions.

A field is an n x n complex grid over [-L, L]^2 with |mu| < 1 everywhere,
plus per-region records of the realized sup |mu|.  Draws are keyed by
(seed, RegionId) through the counter RNG, so a field is reproducible and
independent of evaluation order.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.special import ndtri

from ._rng import counter_uniform
from .partition import RegionId, SquareGridPartition

_ONE_MINUS = 1.0 - 1e-9


def grid_axes(L, n):
    """Uniform periodic grid nodes over [-L, L): x[i] = -L + 2L i/n."""
    step = 2.0 * L / n
    ax = -L + step * np.arange(n)
    return ax, step


def grid_points(L, n):
    ax, _ = grid_axes(L, n)
    return ax[None, :] + 1j * ax[:, None]


@dataclass
class BeltramiField:
    """Grid-sampled Beltrami coefficient.

    values[j, i] is the sample at x[i] + i y[j]; region_sup maps RegionId
    to the recorded sup |mu| on that region; region_map optionally labels
    each grid sample with an integer region/sector id (used to keep
    finite differences away from coefficient jumps).
    """
    values: np.ndarray
    L: float
    seed: int | None = None
    partition: object | None = None
    region_sup: dict = dfield(default_factory=dict)
    region_map: np.ndarray | None = None
    meta: dict = dfield(default_factory=dict)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=complex)
        n = self.values.shape[0]
        if self.values.shape != (n, n):
            raise ValueError("field grid must be square")
        amax = float(np.abs(self.values).max()) if self.values.size else 0.0
        if amax > _ONE_MINUS:
            raise ValueError("|mu| = %.12g reaches the unit bound" % amax)

    @property
    def n(self):
        return self.values.shape[0]

    def points(self):
        return grid_points(self.L, self.n)

    def sup(self):
        """Global sup |mu| (grid samples and recorded region bounds)."""
        amax = float(np.abs(self.values).max()) if self.values.size else 0.0
        if self.region_sup:
            amax = max(amax, max(self.region_sup.values()))
        return min(amax, _ONE_MINUS)

    def dilatation(self):
        """Pointwise quasiconformal dilatation (1+|mu|)/(1-|mu|)."""
        a = np.abs(self.values)
        return (1.0 + a) / (1.0 - a)

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.values).tobytes())
        h.update(np.float64(self.L).tobytes())
        return h.hexdigest()[:16]

    def sample_at(self, z):
        """Nearest-sample lookup; errors outside the grid domain."""
        z = np.asarray(z, dtype=complex)
        step = 2.0 * self.L / self.n
        ix = np.rint((z.real + self.L) / step).astype(np.int64)
        iy = np.rint((z.imag + self.L) / step).astype(np.int64)
        if np.any((ix < 0) | (ix > self.n) | (iy < 0) | (iy > self.n)):
            raise ValueError("point outside field domain")
        ix = np.clip(ix, 0, self.n - 1)
        iy = np.clip(iy, 0, self.n - 1)
        return self.values[iy, ix]


# ---------------------------------------------------------------------------
# region laws
# ---------------------------------------------------------------------------

class RegionLaw:
    """One random coefficient function per region.

    ``realize(u)`` consumes uniforms u[0..n_uniforms) and returns
    (func, sup) where func maps complex points on the region to
    coefficient values with |value| <= sup < 1.  Every draw must report
    its own sup bound; that contract replaces any measurability bookkeeping.
    """

    n_uniforms = 1
    description = "abstract"

    def realize(self, u):
        raise NotImplementedError


class PointMassLaw(RegionLaw):
    """Constant coefficient, no randomness."""

    def __init__(self, mu0):
        mu0 = complex(mu0)
        if abs(mu0) > _ONE_MINUS:
            raise ValueError("point mass must satisfy |mu| < 1")
        self.mu0 = mu0
        self.description = "point_mass(%r)" % mu0

    def realize(self, u):
        mu0 = self.mu0
        return (lambda z: np.full(np.shape(z), mu0, dtype=complex)), abs(mu0)


class UniformModulusLaw(RegionLaw):
    """Constant coefficient t*exp(i*phase) with t uniform in [lo, hi]."""

    def __init__(self, lo, hi, phase=0.0):
        if not (0 <= lo <= hi < 1):
            raise ValueError("need 0 <= lo <= hi < 1")
        self.lo, self.hi, self.phase = float(lo), float(hi), float(phase)
        self.description = "uniform(%g, %g)" % (lo, hi)

    def realize(self, u):
        t = self.lo + (self.hi - self.lo) * u[0]
        mu0 = t * np.exp(1j * self.phase)
        return (lambda z: np.full(np.shape(z), mu0, dtype=complex)), abs(mu0)


class TwoPointLaw(RegionLaw):
    """Constant coefficient equal to a with probability p, else b."""

    def __init__(self, a, b, p=0.5):
        if max(abs(complex(a)), abs(complex(b))) > _ONE_MINUS:
            raise ValueError("values must satisfy |mu| < 1")
        self.a, self.b, self.p = complex(a), complex(b), float(p)
        self.description = "two_point(%r, %r, p=%g)" % (a, b, p)

    def realize(self, u):
        mu0 = self.a if u[0] < self.p else self.b
        return (lambda z: np.full(np.shape(z), mu0, dtype=complex)), abs(mu0)


class TruncatedNormalLaw(RegionLaw):
    """Constant real coefficient ~ N(mean, sigma) truncated to |t| <= bound."""

    def __init__(self, mean=0.0, sigma=0.2, bound=0.9):
        if not 0 < bound < 1:
            raise ValueError("bound must lie in (0, 1)")
        self.mean, self.sigma, self.bound = float(mean), float(sigma), float(bound)
        self.description = "trunc_normal(%g, %g, |t|<=%g)" % (mean, sigma, bound)

    def realize(self, u):
        from scipy.special import ndtr
        lo = ndtr((-self.bound - self.mean) / self.sigma)
        hi = ndtr((self.bound - self.mean) / self.sigma)
        t = self.mean + self.sigma * ndtri(lo + (hi - lo) * u[0])
        t = float(np.clip(t, -self.bound, self.bound))
        return (lambda z: np.full(np.shape(z), t, dtype=complex)), abs(t)


# ---------------------------------------------------------------------------
# sampling and transforms
# ---------------------------------------------------------------------------

def _region_uniforms(seed, rid, n_uniforms):
    ci, cj = rid.cell
    return np.array([counter_uniform(seed, ci, cj, rid.local, k)
                     for k in range(n_uniforms)])


def sample_field(partition, laws, L, n, seed, max_nodes=64_000_000):
    """Draw one coefficient per region, independently, keyed by RegionId.

    laws: mapping local_index -> RegionLaw (or a single law for all).
    Regions translated by the partition period share a law, so the field
    is periodic in distribution.  Same seed -> bit-identical field.
    """
    if n * n > max_nodes:
        raise ValueError("grid exceeds the configured memory budget")
    if not isinstance(laws, dict):
        laws = {loc: laws for loc in partition.local_indices()}
    for loc in partition.local_indices():
        if loc not in laws:
            raise ValueError("no law for local index %d" % loc)

    pts = grid_points(L, n)
    x0, x1, y0, y1 = partition.window
    if (pts.real.min() < x0 - 1e-9 or pts.real.max() > x1 + 1e-9
            or pts.imag.min() < y0 - 1e-9 or pts.imag.max() > y1 + 1e-9):
        raise ValueError("grid extends beyond the partition window")

    values = np.zeros((n, n), dtype=complex)
    region_map = np.zeros((n, n), dtype=np.int64)
    region_sup = {}

    if isinstance(partition, SquareGridPartition):
        i, j = partition.cell_indices(pts)
        ni = partition.irange[1] - partition.irange[0]
        region_map = (j - partition.jrange[0]) * ni + (i - partition.irange[0])
        for rid in partition.region_ids():
            mask = (i == rid.cell[0]) & (j == rid.cell[1])
            if not mask.any():
                # still draw, so the field extends deterministically
                pass
            u = _region_uniforms(seed, rid, laws[rid.local].n_uniforms)
            func, sup = laws[rid.local].realize(u)
            region_sup[rid] = float(sup)
            if mask.any():
                values[mask] = func(pts[mask])
    else:
        rids = partition.region_of(pts.ravel())
        uniq = {}
        idx = np.empty(n * n, dtype=np.int64)
        for q, rid in enumerate(rids):
            if rid not in uniq:
                uniq[rid] = len(uniq)
            idx[q] = uniq[rid]
        region_map = idx.reshape(n, n)
        flat = values.reshape(-1)
        zflat = pts.ravel()
        for rid, code in uniq.items():
            u = _region_uniforms(seed, rid, laws[rid.local].n_uniforms)
            func, sup = laws[rid.local].realize(u)
            region_sup[rid] = float(sup)
            sel = idx == code
            flat[sel] = func(zflat[sel])

    fld = BeltramiField(values, L, seed=seed, partition=partition,
                        region_sup=region_sup, region_map=region_map)
    bad = float(np.abs(values).max()) if values.size else 0.0
    if bad > _ONE_MINUS:
        raise ValueError("law produced |mu| >= 1")
    return fld


def field_from_function(func, L, n, sup=None, meta=None):
    """Field with values func(z) on the grid; single synthetic region."""
    pts = grid_points(L, n)
    values = np.asarray(func(pts), dtype=complex)
    s = float(np.abs(values).max()) if sup is None else float(sup)
    fld = BeltramiField(values, L, region_sup={RegionId((0, 0), 0): s},
                        meta=meta or {})
    return fld


def truncate(field, R):
    """Zero the coefficient outside the open disk B(0, R)."""
    if R <= 0:
        raise ValueError("truncation radius must be positive")
    pts = field.points()
    keep = np.abs(pts) < R
    values = np.where(keep, field.values, 0.0)
    meta = dict(field.meta)
    meta["truncation_radius"] = float(R)
    return BeltramiField(values, field.L, seed=field.seed, partition=field.partition,
                         region_sup=dict(field.region_sup),
                         region_map=field.region_map, meta=meta)


def rescale(field, delta, mode="scaled"):
    """Coefficient of the map conjugated by z -> delta*z.

    mode 'scaled' (default) returns the exact rescaled field: the value at
    z equals the input value at z/delta, realized by shrinking the grid
    domain to [-delta*L, delta*L] with samples unchanged.  mode 'resample'
    keeps the original domain and pulls values by nearest sample, which
    requires delta >= 1 so that z/delta stays inside the source domain.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if mode == "scaled":
        meta = dict(field.meta)
        meta["rescaled_by"] = meta.get("rescaled_by", 1.0) * delta
        return BeltramiField(field.values.copy(), field.L * delta, seed=field.seed,
                             partition=field.partition,
                             region_sup=dict(field.region_sup),
                             region_map=field.region_map, meta=meta)
    if mode == "resample":
        if delta < 1.0:
            raise ValueError("resample mode needs delta >= 1 (source domain too small)")
        pts = field.points()
        values = field.sample_at(pts / delta)
        return BeltramiField(values, field.L, seed=field.seed, meta=dict(field.meta))
    raise ValueError("unknown rescale mode %r" % mode)


def pullback_conformal(field, g, gprime):
    """Precompose the underlying map with a conformal g.

    Output value at z is field(g(z)) * conj(g'(z)) / g'(z); |mu| is
    preserved pointwise.  g must map the grid into the field domain and
    g' must not vanish on the grid.
    """
    pts = field.points()
    gz = np.asarray(g(pts), dtype=complex)
    gp = np.asarray(gprime(pts), dtype=complex)
    if np.any(gp == 0):
        raise ValueError("g' vanishes at a grid sample")
    values = field.sample_at(gz) * np.conj(gp) / gp
    return BeltramiField(values, field.L, seed=field.seed,
                         region_sup=dict(field.region_sup), meta=dict(field.meta))


def probabilistic_bound_estimate(laws, eps, trials, seed):
    """Empirical uniform bound k with P(sup|mu| <= k on a region) >= 1-eps.

    For each law, draws `trials` independent region sups and takes the
    smallest realized value whose empirical tail mass is within eps; the
    result is the max over laws, with the dilatation bound (1+k)/(1-k).
    """
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if isinstance(laws, RegionLaw):
        laws = [laws]
    if isinstance(laws, dict):
        laws = list(laws.values())
    worst = 0.0
    for li, law in enumerate(laws):
        sups = np.empty(trials)
        for t in range(trials):
            u = np.array([counter_uniform(seed, li, t, k)
                          for k in range(law.n_uniforms)])
            _, sup = law.realize(u)
            if sup >= 1.0:
                raise ValueError("law reported sup >= 1")
            sups[t] = sup
        sups.sort()
        rank = int(np.ceil((1.0 - eps) * trials)) - 1
        rank = min(max(rank, 0), trials - 1)
        worst = max(worst, float(sups[rank]))
    return {"k": worst, "K": (1.0 + worst) / (1.0 - worst)}
