"""Periodic partitions of the plane into Jordan regions.

Two concrete families: a rectangular cell grid, and the vertex-sector
partition whose regions are the eight curvilinear triangles adjacent to a
lattice vertex (triangle edges are ray preimages under the cell chart,
approximated by polylines).  Partitions are instantiated lazily over a
finite window and are immutable afterwards.
"""
from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np

from .elliptic import CellChart, vertex_label

_EDGE_TOL = 1e-12


class RegionId(NamedTuple):
    """(lattice_cell, local_index); orders lexicographically."""
    cell: tuple
    local: int


def _axis_range(lo, hi, step):
    """Indices of cells of width `step` whose interior meets (lo, hi)."""
    i0 = int(np.floor(lo / step))
    if (i0 + 1) * step <= lo + _EDGE_TOL * max(1.0, abs(lo)):
        i0 += 1
    i1 = int(np.ceil(hi / step))
    if (i1 - 1) * step >= hi - _EDGE_TOL * max(1.0, abs(hi)):
        i1 -= 1
    if i1 <= i0:
        raise ValueError("window too small to hold any cell")
    return i0, i1


def _clip_polygon(poly, window):
    """Sutherland-Hodgman clip of polygon (N,2) against an axis box."""
    x0, x1, y0, y1 = window
    edges = [(0, x0, +1), (0, x1, -1), (1, y0, +1), (1, y1, -1)]
    pts = [tuple(p) for p in np.asarray(poly, dtype=float)]
    for axis, level, sgn in edges:
        if not pts:
            break
        out = []
        n = len(pts)
        for q in range(n):
            cur, nxt = pts[q], pts[(q + 1) % n]
            cin = sgn * (cur[axis] - level) >= 0
            nin = sgn * (nxt[axis] - level) >= 0
            if cin:
                out.append(cur)
            if cin != nin:
                t = (level - cur[axis]) / (nxt[axis] - cur[axis])
                p = (cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1]))
                out.append(p)
        pts = out
    return np.asarray(pts, dtype=float)


def _polygon_diameter(poly):
    d = poly[:, None, :] - poly[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _point_segments_dist(p, a, b):
    """Distance from point p (2,) to segments a->b ((M,2) each)."""
    ab = b - a
    ap = p[None, :] - a
    denom = (ab**2).sum(1)
    t = np.clip(np.where(denom > 0, (ap * ab).sum(1) / np.where(denom > 0, denom, 1), 0.0), 0, 1)
    proj = a + t[:, None] * ab
    return float(np.sqrt(((p[None, :] - proj) ** 2).sum(1)).min())


def points_in_polygon(pts, poly):
    """Even-odd point-in-polygon test, vectorized over pts (N,2)."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for q in range(n):
        x0, y0 = poly[q]
        x1, y1 = poly[(q + 1) % n]
        cond = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xin = x0 + (y - y0) / (y1 - y0) * (x1 - x0)
        inside ^= cond & (x < np.where(cond, xin, np.inf))
    return inside


class Partition:
    """Base class; see build_square_grid and build_vertex_sector_partition."""

    family = "abstract"

    def __init__(self, window, period_vectors, mesh_size):
        self.window = tuple(float(v) for v in window)  # (x0, x1, y0, y1)
        self.period_vectors = tuple(complex(v) for v in period_vectors)
        self.mesh_size = float(mesh_size)
        self._density_table = {}

    # -- interface ----------------------------------------------------------

    def region_ids(self):
        raise NotImplementedError

    def region_of(self, z):
        raise NotImplementedError

    def region_polygon(self, rid):
        raise NotImplementedError

    def local_indices(self):
        raise NotImplementedError

    def n_regions(self):
        return len(list(self.region_ids()))

    def _check_in_window(self, z):
        x0, x1, y0, y1 = self.window
        z = np.asarray(z, dtype=complex)
        bad = (z.real < x0 - _EDGE_TOL) | (z.real > x1 + _EDGE_TOL) | \
              (z.imag < y0 - _EDGE_TOL) | (z.imag > y1 + _EDGE_TOL)
        if np.any(bad):
            raise ValueError("point outside instantiated window")

    def regions_containing(self, z, tol=0.0):
        """All regions whose polygon contains the point (with tolerance)."""
        z = complex(z)
        p = np.array([z.real, z.imag])
        hits = []
        for rid in self._candidate_regions(z):
            poly = self.region_polygon(rid)
            if len(poly) < 3:
                continue
            if points_in_polygon(p[None, :], poly)[0]:
                hits.append(rid)
            elif tol > 0:
                a = poly
                b = np.roll(poly, -1, axis=0)
                if _point_segments_dist(p, a, b) <= tol:
                    hits.append(rid)
        return hits

    def density_bound(self, radius, n_centers=64, seed=7):
        """Empirical k_R: max regions met by disks of the given radius.

        Sampled over n_centers disk centers inside the window; cached.
        Reported, not certified.
        """
        key = (float(radius), int(n_centers))
        if key not in self._density_table:
            from . import _rng
            x0, x1, y0, y1 = self.window
            u = _rng.counter_uniform(seed, np.arange(n_centers), 0)
            v = _rng.counter_uniform(seed, np.arange(n_centers), 1)
            cx = x0 + radius + u * max(x1 - x0 - 2 * radius, 0)
            cy = y0 + radius + v * max(y1 - y0 - 2 * radius, 0)
            best = 0
            for p, q in zip(cx, cy):
                best = max(best, count_regions_in_disk(self, complex(p, q), radius))
            self._density_table[key] = best
        return self._density_table[key]

    # -- serialization -------------------------------------------------------

    def to_json(self, path=None):
        doc = {
            "format": "qclab-partition-v1",
            "family": self.family,
            "window": list(self.window),
            "period_vectors": [[v.real, v.imag] for v in self.period_vectors],
            "mesh_size": self.mesh_size,
            "params": self._params(),
            "regions": [
                {"cell": list(rid.cell), "local": rid.local,
                 "polygon": np.round(self.region_polygon(rid), 12).tolist()}
                for rid in self.region_ids()
            ],
        }
        text = json.dumps(doc, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def load_partition(path_or_text):
    """Rebuild a partition from its serialized form (parameters win)."""
    text = str(path_or_text)
    if not text.lstrip().startswith("{"):
        with open(text) as fh:
            text = fh.read()
    doc = json.loads(text)
    params = doc["params"]
    window = tuple(doc["window"])
    if doc["family"] == "square_grid":
        return build_square_grid(params["cell_width"], params["cell_height"], window)
    if doc["family"] == "vertex_sector":
        return build_vertex_sector_partition(
            params["cell_width"], params["cell_height"], params["theta_anchors"],
            window, segments_per_edge=params["segments_per_edge"])
    raise ValueError("unknown partition family %r" % doc["family"])


# ---------------------------------------------------------------------------
# square grid
# ---------------------------------------------------------------------------

class SquareGridPartition(Partition):
    family = "square_grid"

    def __init__(self, cell_width, cell_height, window):
        if cell_width <= 0 or cell_height <= 0:
            raise ValueError("cell dimensions must be positive")
        x0, x1, y0, y1 = window
        if not (x1 > x0 and y1 > y0):
            raise ValueError("empty window")
        self.cw = float(cell_width)
        self.ch = float(cell_height)
        self.irange = _axis_range(x0, x1, self.cw)
        self.jrange = _axis_range(y0, y1, self.ch)
        super().__init__(window, (complex(self.cw, 0), complex(0, self.ch)),
                         float(np.hypot(self.cw, self.ch)))

    def _params(self):
        return {"cell_width": self.cw, "cell_height": self.ch}

    def local_indices(self):
        return (0,)

    def region_ids(self):
        for j in range(*self.jrange):
            for i in range(*self.irange):
                yield RegionId((i, j), 0)

    def n_regions(self):
        return (self.irange[1] - self.irange[0]) * (self.jrange[1] - self.jrange[0])

    def cell_indices(self, z):
        """Vectorized cell lookup with the shared-edge tie going low."""
        z = np.asarray(z, dtype=complex)
        tx = z.real / self.cw
        ty = z.imag / self.ch
        i = np.floor(tx).astype(np.int64)
        j = np.floor(ty).astype(np.int64)
        # exact edge hits belong to the lexicographically smaller cell
        i = np.where((np.abs(tx - i) <= _EDGE_TOL) & (i > self.irange[0]), i - 1, i)
        j = np.where((np.abs(ty - j) <= _EDGE_TOL) & (j > self.jrange[0]), j - 1, j)
        i = np.clip(i, self.irange[0], self.irange[1] - 1)
        j = np.clip(j, self.jrange[0], self.jrange[1] - 1)
        return i, j

    def region_of(self, z):
        self._check_in_window(z)
        i, j = self.cell_indices(z)
        if np.ndim(i) == 0:
            return RegionId((int(i), int(j)), 0)
        return [RegionId((int(a), int(b)), 0) for a, b in zip(np.ravel(i), np.ravel(j))]

    def region_polygon(self, rid):
        (i, j), _ = rid
        x0, y0 = i * self.cw, j * self.ch
        poly = np.array([[x0, y0], [x0 + self.cw, y0],
                         [x0 + self.cw, y0 + self.ch], [x0, y0 + self.ch]])
        return _clip_polygon(poly, self.window)

    def _candidate_regions(self, z):
        i, j = self.cell_indices(z)
        i, j = int(i), int(j)
        out = []
        for dj in (-1, 0, 1):
            for di in (-1, 0, 1):
                a, b = i + di, j + dj
                if self.irange[0] <= a < self.irange[1] and self.jrange[0] <= b < self.jrange[1]:
                    out.append(RegionId((a, b), 0))
        return out

    def gap_to_disk(self, center, radius):
        """Cells with box distance to center < radius (vectorized)."""
        i = np.arange(*self.irange)
        j = np.arange(*self.jrange)
        gx = np.maximum(np.maximum(i * self.cw - center.real,
                                   center.real - (i + 1) * self.cw), 0.0)
        gy = np.maximum(np.maximum(j * self.ch - center.imag,
                                   center.imag - (j + 1) * self.ch), 0.0)
        g2 = gx[None, :] ** 2 + gy[:, None] ** 2
        return g2 < radius * radius


# ---------------------------------------------------------------------------
# vertex-sector partition
# ---------------------------------------------------------------------------

_LABEL_PARITY = {1: (0, 0), 2: (1, 0), 3: (1, 1), 4: (0, 1)}


class VertexSectorPartition(Partition):
    family = "vertex_sector"

    def __init__(self, cell_width, cell_height, theta_anchors, window,
                 segments_per_edge=16):
        self.chart = CellChart(theta_anchors=theta_anchors, cell_width=cell_width,
                               cell_height=cell_height)
        self.cw = self.chart.a
        self.ch = self.chart.b
        self.theta_anchors = tuple(float(t) for t in np.asarray(theta_anchors, float))
        self.segments_per_edge = int(segments_per_edge)
        if self.segments_per_edge < 2:
            raise ValueError("segments_per_edge must be >= 2")
        x0, x1, y0, y1 = window
        self.irange = _axis_range(x0, x1, self.cw)
        self.jrange = _axis_range(y0, y1, self.ch)
        # vertices are the corners of instantiated cells
        self.virange = (self.irange[0], self.irange[1] + 1)
        self.vjrange = (self.jrange[0], self.jrange[1] + 1)

        # base-cell ray polylines, one per anchor ray, traced once
        self._rays = [self.chart.trace_ray("anchor", idx, self.segments_per_edge)
                      for idx in range(4)]
        self._octagons = {}   # parity class (pi, pj) -> centered polygon
        self._poly_cache = {}
        self._build_class_octagons()
        diam = max(_polygon_diameter(p) for p in self._octagons.values())
        super().__init__(window, (complex(2 * self.cw, 0), complex(0, 2 * self.ch)), diam)
        self._reach = max(
            float(np.abs(p[:, 0] + 1j * p[:, 1]).max()) for p in self._octagons.values())

    def _params(self):
        return {"cell_width": self.cw, "cell_height": self.ch,
                "theta_anchors": list(self.theta_anchors),
                "segments_per_edge": self.segments_per_edge}

    def local_indices(self):
        return (0, 1, 2, 3)

    # -- geometry ------------------------------------------------------------

    def _unfold(self, pts, ci, cj):
        """Base-cell polyline -> plane polyline in cell (ci, cj)."""
        x = np.real(pts)
        y = np.imag(pts)
        if ci & 1:
            x = self.cw - x
        if cj & 1:
            y = self.ch - y
        return (ci * self.cw + x) + 1j * (cj * self.ch + y)

    def _build_class_octagons(self):
        """Region outline around one vertex of each parity class."""
        for pi in (0, 1):
            for pj in (0, 1):
                vi, vj = 2 + pi, 2 + pj   # interior representative vertex
                poly = self._octagon_at(vi, vj)
                vx, vy = vi * self.cw, vj * self.ch
                self._octagons[(pi, pj)] = poly - np.array([[vx, vy]])

    def _octagon_at(self, vi, vj):
        """Closed outline of the eight sectors around vertex (vi, vj)."""
        arcs = []
        for ci in (vi - 1, vi):
            for cj in (vj - 1, vj):
                lab = int(vertex_label(vi, vj))
                for ray_idx in (lab - 1, lab % 4):
                    arc = self._unfold(self._rays[ray_idx], ci, cj)
                    arcs.append(arc)
        # chain arcs end-to-end; every junction matches exactly
        chain = [arcs.pop(0)]
        while arcs:
            tail = chain[-1][-1]
            for q, arc in enumerate(arcs):
                if abs(arc[-1] - tail) < 1e-9:
                    chain.append(arcs.pop(q)[::-1])
                    break
                if abs(arc[0] - tail) < 1e-9:
                    chain.append(arcs.pop(q))
                    break
            else:
                raise RuntimeError("region outline failed to close")
        pts = np.concatenate([c[:-1] for c in chain])
        poly = np.column_stack([pts.real, pts.imag])
        # orient counterclockwise
        x, y = poly[:, 0], poly[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if area < 0:
            poly = poly[::-1]
        return poly

    def vertex_of(self, rid):
        (ci, cj), local = rid
        pi, pj = _LABEL_PARITY[local + 1]
        return 2 * ci + pi, 2 * cj + pj

    def rid_of_vertex(self, vi, vj):
        label = int(vertex_label(vi, vj))
        return RegionId((int(vi) // 2, int(vj) // 2), label - 1)

    def region_ids(self):
        for vj in range(*self.vjrange):
            for vi in range(*self.virange):
                yield self.rid_of_vertex(vi, vj)

    def n_regions(self):
        return (self.virange[1] - self.virange[0]) * (self.vjrange[1] - self.vjrange[0])

    def region_of(self, z):
        self._check_in_window(z)
        z = np.asarray(z, dtype=complex)
        x0, x1, y0, y1 = self.window
        # window-boundary points are nudged inward so their cell is instantiated
        x = np.clip(z.real.ravel(), x0 + 2 * _EDGE_TOL, x1 - 2 * _EDGE_TOL)
        y = np.clip(z.imag.ravel(), y0 + 2 * _EDGE_TOL, y1 - 2 * _EDGE_TOL)
        vi, vj, _, _, _ = self.chart.sector_vertex(x + 1j * y)
        vi = np.clip(vi, self.virange[0], self.virange[1] - 1)
        vj = np.clip(vj, self.vjrange[0], self.vjrange[1] - 1)
        rids = [self.rid_of_vertex(a, b) for a, b in zip(np.atleast_1d(vi), np.atleast_1d(vj))]
        if z.ndim == 0:
            return rids[0]
        return rids

    def region_polygon(self, rid):
        if rid in self._poly_cache:
            return self._poly_cache[rid]
        vi, vj = self.vertex_of(rid)
        base = self._octagons[(vi & 1, vj & 1)]
        poly = base + np.array([[vi * self.cw, vj * self.ch]])
        poly = _clip_polygon(poly, self.window)
        self._poly_cache[rid] = poly
        return poly

    def _candidate_regions(self, z):
        vi0 = int(np.floor(z.real / self.cw))
        vj0 = int(np.floor(z.imag / self.ch))
        out = []
        for dj in (-1, 0, 1, 2):
            for di in (-1, 0, 1, 2):
                vi, vj = vi0 + di, vj0 + dj
                if (self.virange[0] <= vi < self.virange[1]
                        and self.vjrange[0] <= vj < self.vjrange[1]):
                    out.append(self.rid_of_vertex(vi, vj))
        return out


# ---------------------------------------------------------------------------
# public builders and operations
# ---------------------------------------------------------------------------

def build_square_grid(cell_width, cell_height, window):
    """Grid of cell_width x cell_height rectangles tiling the window."""
    return SquareGridPartition(cell_width, cell_height, window)


def build_vertex_sector_partition(cell_width, cell_height, theta_anchors, window,
                                  segments_per_edge=16):
    """Partition into unions of the eight chart sectors around each vertex.

    The cell grid is split into eight curvilinear triangles per cell by
    the preimages of the anchor and midpoint rays; the region of a vertex
    is the union of its eight adjacent triangles.  Period is two cells in
    each direction.
    """
    return VertexSectorPartition(cell_width, cell_height, theta_anchors, window,
                                 segments_per_edge=segments_per_edge)


def region_of(partition, z):
    """Region whose closed set contains the point; ties resolve low."""
    return partition.region_of(z)


def count_regions_in_disk(partition, center, radius):
    """Number of regions whose closed set meets the open disk B(center, R)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = complex(center)
    x0, x1, y0, y1 = partition.window
    if (center.real - radius < x0 - _EDGE_TOL or center.real + radius > x1 + _EDGE_TOL
            or center.imag - radius < y0 - _EDGE_TOL or center.imag + radius > y1 + _EDGE_TOL):
        raise ValueError("disk exceeds instantiated window")

    if isinstance(partition, SquareGridPartition):
        return int(partition.gap_to_disk(center, radius).sum())

    part = partition
    vi = np.arange(*part.virange)
    vj = np.arange(*part.vjrange)
    VI, VJ = np.meshgrid(vi, vj)
    d = np.abs(VI * part.cw + 1j * VJ * part.ch - center)
    count = int(np.sum(d + part._reach < radius))
    band = (d + part._reach >= radius) & (d - part._reach < radius)
    p = np.array([center.real, center.imag])
    for a, b in zip(VI[band].ravel(), VJ[band].ravel()):
        poly = part.region_polygon(part.rid_of_vertex(int(a), int(b)))
        if len(poly) < 3:
            continue
        if points_in_polygon(p[None, :], poly)[0]:
            count += 1
        elif _point_segments_dist(p, poly, np.roll(poly, -1, axis=0)) < radius:
            count += 1
    return count
