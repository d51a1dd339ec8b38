"""Randomly glued checkerboards of hemispheres and their Beltrami fields.

Each lattice vertex carries a random marked angle alpha on its boundary
arc; each hemisphere is deformed by the piecewise linear circle map
fixing the four anchor angles and moving each arc midpoint to the alpha
of the owning vertex.  In the conformal disk chart of a hemisphere the
deformation is u -> |u| exp(i k(arg u)) with k piecewise linear, so the
coefficient is exp(2i arg u) (1-s)/(1+s) on the sector with slope s, and
|mu| is constant on each of the eight triangles per cell.  Pulling back
through the (holomorphic) cell chart multiplies by the unimodular factor
conj(D)/D, leaving |mu| per triangle unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.special import ndtr, ndtri

from ._rng import counter_uniform
from .beltrami import BeltramiField
from .elliptic import (TAU, CellChart, boundary_coordinate, cross_ratio,
                       unwrap_anchors, vertex_label)

__all__ = [
    "ArcLaw", "UniformArcLaw", "PointMassArcLaw", "TruncatedNormalArcLaw",
    "SurfaceModel", "SurfaceSample", "default_model", "law_from_config",
    "boundary_coordinate", "cross_ratio", "elliptic_base_map",
    "sample_surface", "sector_slopes", "sector_beltrami", "surface_beltrami",
    "area_weight_grid", "composite_disk_value", "deformed_boundary_angle",
]


# ---------------------------------------------------------------------------
# vertex laws on arcs
# ---------------------------------------------------------------------------

class ArcLaw:
    """Distribution of the marked angle on an open arc (lo, hi).

    draw() consumes one uniform and must return an angle strictly inside
    the arc; laws with a cdf support distribution tests.
    """

    n_uniforms = 1

    def draw(self, u, lo, mid, hi):
        raise NotImplementedError

    def config(self):
        raise NotImplementedError


class UniformArcLaw(ArcLaw):
    """Uniform on the middle (1 - 2*margin) portion of the arc."""

    def __init__(self, margin=0.1):
        if not 0 <= margin < 0.5:
            raise ValueError("margin must lie in [0, 0.5)")
        self.margin = float(margin)

    def draw(self, u, lo, mid, hi):
        return lo + (self.margin + (1.0 - 2.0 * self.margin) * u) * (hi - lo)

    def cdf(self, alpha, lo, mid, hi):
        t = (np.asarray(alpha) - lo) / (hi - lo)
        return np.clip((t - self.margin) / (1.0 - 2.0 * self.margin), 0.0, 1.0)

    def config(self):
        return {"kind": "uniform", "margin": self.margin}


class PointMassArcLaw(ArcLaw):
    """Deterministic marked angle; defaults to the arc midpoint."""

    def __init__(self, angle=None):
        self.angle = angle if angle is None else float(angle)

    def draw(self, u, lo, mid, hi):
        if self.angle is None:
            return mid
        a = lo + np.mod(self.angle - lo, TAU)
        if not lo < a < hi:
            raise ValueError("point mass angle outside its arc")
        return a

    def config(self):
        return {"kind": "point_mass", "angle": self.angle}


class TruncatedNormalArcLaw(ArcLaw):
    """Normal around the midpoint, truncated to the middle of the arc."""

    def __init__(self, rel_sigma=0.15, margin=0.1):
        if not 0 < margin < 0.5:
            raise ValueError("margin must lie in (0, 0.5)")
        self.rel_sigma = float(rel_sigma)
        self.margin = float(margin)

    def _bounds(self, lo, mid, hi):
        width = hi - lo
        return lo + self.margin * width, hi - self.margin * width, self.rel_sigma * width

    def draw(self, u, lo, mid, hi):
        a, b, sig = self._bounds(lo, mid, hi)
        ca = ndtr((a - mid) / sig)
        cb = ndtr((b - mid) / sig)
        return mid + sig * ndtri(ca + (cb - ca) * u)

    def cdf(self, alpha, lo, mid, hi):
        a, b, sig = self._bounds(lo, mid, hi)
        ca = ndtr((a - mid) / sig)
        cb = ndtr((b - mid) / sig)
        return np.clip((ndtr((np.asarray(alpha) - mid) / sig) - ca) / (cb - ca), 0, 1)

    def config(self):
        return {"kind": "trunc_normal", "rel_sigma": self.rel_sigma,
                "margin": self.margin}


def law_from_config(cfg):
    kind = cfg.get("kind")
    if kind == "uniform":
        return UniformArcLaw(cfg.get("margin", 0.1))
    if kind == "point_mass":
        return PointMassArcLaw(cfg.get("angle"))
    if kind == "trunc_normal":
        return TruncatedNormalArcLaw(cfg.get("rel_sigma", 0.15), cfg.get("margin", 0.1))
    raise ValueError("unknown arc law %r" % kind)


# ---------------------------------------------------------------------------
# model and samples
# ---------------------------------------------------------------------------

@dataclass
class SurfaceModel:
    """Anchors, midpoints, vertex laws, and cell geometry."""
    theta_anchors: tuple = (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi)
    vertex_laws: dict = dfield(default_factory=dict)
    cell_width: float = 1.0
    cell_height: float | None = None

    def __post_init__(self):
        self.chart = CellChart(theta_anchors=self.theta_anchors,
                               cell_width=self.cell_width,
                               cell_height=self.cell_height)
        self.cell_height = self.chart.b
        if not self.vertex_laws:
            self.vertex_laws = {lab: UniformArcLaw() for lab in (1, 2, 3, 4)}
        for lab in (1, 2, 3, 4):
            if lab not in self.vertex_laws:
                raise ValueError("missing vertex law for label %d" % lab)

    @property
    def midpoints(self):
        return tuple(self.chart.mid)

    def arc_bounds(self, label):
        th = self.chart.th
        return th[label - 1], self.chart.mid[label - 1], th[label]

    def config(self):
        return {
            "theta_anchors": list(map(float, self.theta_anchors)),
            "cell_width": self.cell_width,
            "cell_height": self.cell_height,
            "midpoints": list(map(float, self.chart.mid)),
            "vertex_laws": {str(lab): law.config()
                            for lab, law in sorted(self.vertex_laws.items())},
        }


def default_model(law=None):
    """Quarter-circle anchors, square cells, uniform middle-80% laws."""
    laws = None
    if law is not None:
        laws = {lab: law for lab in (1, 2, 3, 4)}
    return SurfaceModel(vertex_laws=laws or {})


def model_from_config(cfg):
    laws = {int(lab): law_from_config(c)
            for lab, c in cfg.get("vertex_laws", {}).items()}
    return SurfaceModel(theta_anchors=tuple(cfg["theta_anchors"]),
                        vertex_laws=laws,
                        cell_width=cfg.get("cell_width", 1.0),
                        cell_height=cfg.get("cell_height"))


def elliptic_base_map(model):
    """The doubly periodic cell-to-sphere evaluator of the model."""
    return model.chart


@dataclass
class SurfaceSample:
    """Marked angle per lattice vertex over a window of vertices.

    alpha[j - vj0, i - vi0] is the angle of vertex (i, j), strictly inside
    the arc of its label; identically labeled vertices are iid.
    """
    vi0: int
    vj0: int
    alpha: np.ndarray
    seed: int
    model: SurfaceModel

    @property
    def vi1(self):
        return self.vi0 + self.alpha.shape[1]

    @property
    def vj1(self):
        return self.vj0 + self.alpha.shape[0]

    def covers(self, vi, vj):
        return (np.all(vi >= self.vi0) and np.all(vi < self.vi1)
                and np.all(vj >= self.vj0) and np.all(vj < self.vj1))

    def alpha_at(self, vi, vj):
        if not self.covers(vi, vj):
            raise ValueError("sample does not cover the requested vertices")
        return self.alpha[np.asarray(vj) - self.vj0, np.asarray(vi) - self.vi0]

    def labels(self):
        vi = np.arange(self.vi0, self.vi1)
        vj = np.arange(self.vj0, self.vj1)
        return vertex_label(vi[None, :], vj[:, None])

    def rows(self):
        """(vi, vj, label, alpha) rows for the text serialization."""
        lab = self.labels()
        out = []
        for j in range(self.alpha.shape[0]):
            for i in range(self.alpha.shape[1]):
                out.append((self.vi0 + i, self.vj0 + j, int(lab[j, i]),
                            float(self.alpha[j, i])))
        return out


def sample_surface(model, window, seed):
    """Independent marked angles for every vertex meeting the window.

    window is (x0, x1, y0, y1) in plane units; draws are keyed by
    (seed, vertex), so enlarging the window preserves existing draws.
    """
    x0, x1, y0, y1 = window
    a, b = model.chart.a, model.chart.b
    vi0 = int(np.floor(x0 / a))
    vi1 = int(np.ceil(x1 / a)) + 1
    vj0 = int(np.floor(y0 / b))
    vj1 = int(np.ceil(y1 / b)) + 1
    vi = np.arange(vi0, vi1)
    vj = np.arange(vj0, vj1)
    VI, VJ = np.meshgrid(vi, vj)
    labels = vertex_label(VI, VJ)
    u = counter_uniform(seed, VI, VJ, 3)
    alpha = np.empty(VI.shape, dtype=float)
    for lab in (1, 2, 3, 4):
        lo, mid, hi = model.arc_bounds(lab)
        mask = labels == lab
        law = model.vertex_laws[lab]
        vals = np.array([law.draw(float(x), lo, mid, hi) for x in u[mask]])
        if vals.size and (np.any(vals <= lo) or np.any(vals >= hi)):
            raise ValueError("law mass outside the open arc for label %d" % lab)
        alpha[mask] = vals
    return SurfaceSample(vi0, vj0, alpha, int(seed), model)


# ---------------------------------------------------------------------------
# slopes and coefficients
# ---------------------------------------------------------------------------

def sector_slopes(model, alphas):
    """Eight tent slopes of one hemisphere from its four marked angles.

    alphas[i] is the angle of the vertex labeled i+1.  Returns slopes
    ordered (arc1 lo, arc1 hi, arc2 lo, ..., arc4 hi); all positive for
    admissible angles.
    """
    th = model.chart.th
    mid = model.chart.mid
    out = np.empty(8)
    for i in range(4):
        lo, m, hi = th[i], mid[i], th[i + 1]
        a = lo + np.mod(alphas[i] - lo, TAU)
        if not lo < a < hi:
            raise ValueError("alpha for label %d outside its arc" % (i + 1))
        out[2 * i] = (a - lo) / (m - lo)
        out[2 * i + 1] = (hi - a) / (hi - m)
    return out


def sector_beltrami(slope, u):
    """Coefficient of |u| e^{i k(arg u)} on a sector with tent slope s."""
    if np.any(np.asarray(slope) <= 0):
        raise ValueError("slope must be positive")
    u = np.asarray(u, dtype=complex)
    if np.any(u == 0):
        raise ValueError("sector coefficient undefined at the origin")
    return np.exp(2j * np.angle(u)) * (1.0 - slope) / (1.0 + slope)


def _slopes_at(model, sample, vi, vj, arc, branch, alpha=None):
    th = model.chart.th
    mid = model.chart.mid
    if alpha is None:
        alpha = sample.alpha_at(vi, vj)
    lo = th[arc]
    m = mid[arc]
    hi = th[arc + 1]
    s_lo = (alpha - lo) / (m - lo)
    s_hi = (hi - alpha) / (hi - m)
    return np.where(branch == 0, s_lo, s_hi)


def surface_beltrami(model, sample, L, n, partition=None):
    """Beltrami field of the deformed surface on an n x n grid over [-L, L]^2.

    |mu| is constant on each of the eight triangles around each vertex;
    the per-region sup is the larger of the two tent-slope distortions of
    the owning vertex.  Samples must cover every vertex whose sectors meet
    the grid.  Cell-corner samples sit at phase singularities of the
    pullback factor; their unimodular factor is fixed to 1 (a measure-zero
    convention).
    """
    from .beltrami import grid_points
    from .partition import RegionId

    pts = grid_points(L, n)
    chart = model.chart
    u, du = chart.disk_chart(pts, want_deriv=True)
    vi, vj, arc, branch, _psi = chart.sector_vertex(pts, u)
    if not sample.covers(vi, vj):
        raise ValueError("sample window does not cover the field grid")
    s = _slopes_at(model, sample, vi, vj, arc, branch)
    if np.any(s <= 0):
        raise ValueError("non-positive sector slope (alpha outside its arc)")
    mu0 = np.exp(2j * np.angle(u)) * (1.0 - s) / (1.0 + s)
    ok = np.isfinite(du) & (du != 0)
    phase = np.where(ok, np.conj(np.where(ok, du, 1.0)) / np.where(ok, du, 1.0), 1.0)
    values = mu0 * phase

    # per-point sector ids and per-region sup
    nvi = sample.alpha.shape[1]
    vid = (vj - sample.vj0) * nvi + (vi - sample.vi0)
    region_map = vid * 2 + branch

    alpha = sample.alpha
    th = chart.th
    mid = chart.mid
    labels = sample.labels()
    sup_grid = np.zeros_like(alpha)
    for lab in (1, 2, 3, 4):
        lo, m, hi = th[lab - 1], mid[lab - 1], th[lab]
        mask = labels == lab
        s1 = (alpha[mask] - lo) / (m - lo)
        s2 = (hi - alpha[mask]) / (hi - m)
        d1 = np.abs(1 - s1) / (1 + s1)
        d2 = np.abs(1 - s2) / (1 + s2)
        sup_grid[mask] = np.maximum(d1, d2)
    region_sup = {}
    used = np.unique(vid)
    for q in used:
        jj, ii = divmod(int(q), nvi)
        gvi = sample.vi0 + ii
        gvj = sample.vj0 + jj
        lab = int(vertex_label(gvi, gvj))
        rid = RegionId((gvi // 2, gvj // 2), lab - 1)
        region_sup[rid] = float(sup_grid[jj, ii])

    return BeltramiField(values, L, seed=sample.seed, partition=partition,
                         region_sup=region_sup, region_map=region_map,
                         meta={"model": model.config(), "kind": "surface"})


# ---------------------------------------------------------------------------
# composites for diagnostics
# ---------------------------------------------------------------------------

def deformed_boundary_angle(model, sample, cell, psi):
    """Deformed equator angle k_c(psi) of one cell's hemisphere."""
    ci, cj = cell
    th = model.chart.th
    mid = model.chart.mid
    psi = th[0] + np.mod(np.asarray(psi, dtype=float) - th[0], TAU)
    out = np.empty_like(psi)
    for arcidx in range(4):
        lab = arcidx + 1
        vi, vj = _cell_vertex_with_label(ci, cj, lab)
        a = sample.alpha_at(np.array([vi]), np.array([vj]))[0]
        lo, m, hi = th[arcidx], mid[arcidx], th[arcidx + 1]
        s_lo = (a - lo) / (m - lo)
        s_hi = (hi - a) / (hi - m)
        sel = (psi >= lo) & (psi < hi)
        low = sel & (psi < m)
        high = sel & (psi >= m)
        out[low] = lo + s_lo * (psi[low] - lo)
        out[high] = a + s_hi * (psi[high] - m)
    return out


def _cell_vertex_with_label(ci, cj, label):
    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
        if int(vertex_label(ci + di, cj + dj)) == label:
            return ci + di, cj + dj
    raise RuntimeError("unreachable")


def composite_disk_value(model, sample, z):
    """Disk-chart value of the deformed composite map at plane points.

    White cells give |u| e^{i k(psi)}, black cells the conjugate; used by
    finite-difference cross checks of the analytic coefficient field.
    """
    z = np.asarray(z, dtype=complex)
    chart = model.chart
    u = chart.disk_chart(z)
    i, j = chart.cell_of(z)
    white = chart.is_white(i, j)
    psi = chart.equator_angle(z, u)
    kval = np.empty(psi.shape if psi.shape else (1,), dtype=float)
    flat_cells = np.stack([np.atleast_1d(i).ravel(), np.atleast_1d(j).ravel()], axis=1)
    psi_flat = np.atleast_1d(psi).ravel()
    for q in range(len(psi_flat)):
        kval.ravel()[q] = deformed_boundary_angle(
            model, sample, (flat_cells[q, 0], flat_cells[q, 1]),
            np.array([psi_flat[q]]))[0]
    kval = kval.reshape(np.shape(psi))
    v = np.abs(u) * np.exp(1j * np.where(white, kval, -kval))
    return v


def area_weight_grid(model, sample, L, n):
    """Spherical-area density of the composite map on the field grid.

    weight = s |du/dz|^2 / (pi (1+|u|^2)^2) * cell_area; summing weights
    over any full cell gives exactly one hemisphere of normalized area
    1/2, deformed or not.
    """
    from .beltrami import grid_points

    pts = grid_points(L, n)
    chart = model.chart
    u, du = chart.disk_chart(pts, want_deriv=True)
    vi, vj, arc, branch, _ = chart.sector_vertex(pts, u)
    s = _slopes_at(model, sample, vi, vj, arc, branch)
    dens = 1.0 / (np.pi * (1.0 + np.abs(u) ** 2) ** 2)
    jac = np.where(np.isfinite(du), np.abs(du) ** 2, 0.0) * s
    cell_area = (2.0 * L / n) ** 2
    return dens * jac * cell_area
