"""Region coloring, chemical distance, and comparability statistics.

Regions are colored blue/yellow independently with per-type yellow
probabilities bounded by the percolation parameter.  The chemical length
of a curve is the length of its intersection with the blue set; the
chemical distance is the infimum over connecting curves.  Two evaluators
are provided: a lattice Dijkstra (the reference definition, used at small
scale) and an exact continuum island-graph Dijkstra used by the large
ratio experiment, where per-pair lattice runs would be prohibitive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as cs_dijkstra
from scipy.spatial import cKDTree

from ._rng import counter_uniform
from .partition import SquareGridPartition

# move stencils and their worst-case metric distortion over directions
_STENCILS = {
    8: [(1, 0), (0, 1), (1, 1), (1, -1)],
    16: [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (2, -1), (1, 2), (-1, 2)],
    32: [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (2, -1), (1, 2), (-1, 2),
         (3, 1), (3, -1), (1, 3), (-1, 3), (3, 2), (3, -2), (2, 3), (-2, 3)],
}


def stencil_distortion(neighborhood):
    """Worst-case ratio of lattice path length to Euclidean distance.

    The set reachable per unit path length is the convex hull of the
    normalized moves, all of which lie on the unit circle, so the worst
    direction is the midpoint of the widest angular gap: the distortion
    is the reciprocal of the distance from the origin to the nearest
    hull chord.
    """
    moves = np.array(_STENCILS[neighborhood], dtype=float)
    moves = np.vstack([moves, -moves])
    utol = moves / np.hypot(moves[:, 0], moves[:, 1])[:, None]
    ang = np.sort(np.arctan2(utol[:, 1], utol[:, 0]))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    return float(1.0 / np.cos(gaps.max() / 2.0))


_DISTORTION_CACHE = {}


def _distortion(neighborhood):
    if neighborhood not in _DISTORTION_CACHE:
        _DISTORTION_CACHE[neighborhood] = stencil_distortion(neighborhood)
    return _DISTORTION_CACHE[neighborhood]


# ---------------------------------------------------------------------------
# colorings
# ---------------------------------------------------------------------------

@dataclass
class Coloring:
    """Blue/yellow assignment per region of a partition.

    Yellow draws are keyed by (seed, RegionId), so a coloring is
    deterministic and extends consistently if the window grows.
    """
    partition: object
    parameter: float
    seed: int
    yellow_prob: dict

    def is_yellow(self, rid):
        p = self.yellow_prob[rid.local]
        ci, cj = rid.cell
        return bool(counter_uniform(self.seed, ci, cj, rid.local) < p)

    def is_yellow_at(self, z):
        """Yellowness of the region containing each point."""
        z = np.asarray(z, dtype=complex)
        part = self.partition
        if isinstance(part, SquareGridPartition):
            i, j = part.cell_indices(z)
            p = self.yellow_prob[0]
            u = counter_uniform(self.seed, i, j, 0)
            return np.asarray(u) < p
        rids = part.region_of(z)
        if not isinstance(rids, list):
            rids = [rids]
        out = np.array([self.is_yellow(r) for r in rids])
        return out.reshape(np.shape(z)) if np.shape(z) else bool(out[0])

    def yellow_regions(self):
        """RegionIds of all yellow regions in the window."""
        out = []
        for rid in self.partition.region_ids():
            if self.is_yellow(rid):
                out.append(rid)
        return out

    def yellow_fraction(self):
        total = self.partition.n_regions()
        return len(self.yellow_regions()) / total if total else 0.0


def color_regions(partition, yellow_prob, parameter, seed):
    """Independent Bernoulli coloring with marginals bounded by parameter.

    yellow_prob: scalar or mapping local_index -> probability in
    [0, parameter].
    """
    if not 0 <= parameter <= 1:
        raise ValueError("parameter must lie in [0, 1]")
    if not isinstance(yellow_prob, dict):
        yellow_prob = {loc: float(yellow_prob) for loc in partition.local_indices()}
    for loc, p in yellow_prob.items():
        if not 0 <= p <= parameter + 1e-12:
            raise ValueError("yellow probability %g exceeds the parameter %g"
                             % (p, parameter))
    return Coloring(partition, float(parameter), int(seed), dict(yellow_prob))


class FunctionColoring:
    """Duck-typed coloring from an indicator function (testing aid)."""

    def __init__(self, yellow_at):
        self._fn = yellow_at

    def is_yellow_at(self, z):
        return self._fn(np.asarray(z, dtype=complex))


# ---------------------------------------------------------------------------
# lattice chemical distance
# ---------------------------------------------------------------------------

def chemical_distance(coloring, x, y, resolution=8, window=None, neighborhood=8,
                      return_info=False):
    """Shortest chemical length between two points on a move lattice.

    Edges weigh their Euclidean length when the edge midpoint is blue and
    zero when yellow.  resolution counts lattice nodes per partition mesh
    size and must be at least 8.  The default 8-connected stencil carries
    an 8.24% worst-case metric distortion; the 16- and 32-point stencils
    reduce it to 2.7% and 0.9% but their longer edges are more easily
    fooled by the midpoint color rule near thin blue gaps.  The reported
    slack combines the stencil distortion with endpoint snapping.
    """
    if resolution < 8:
        raise ValueError("resolution below 8 nodes per mesh size")
    if neighborhood not in _STENCILS:
        raise ValueError("neighborhood must be one of %s" % sorted(_STENCILS))
    x = complex(x)
    y = complex(y)
    part = getattr(coloring, "partition", None)
    mesh = part.mesh_size if part is not None else 1.0
    h = mesh / resolution
    if window is None:
        if part is not None:
            wx0, wx1, wy0, wy1 = part.window
        else:
            pad = 2.0 * abs(x - y) + 4 * mesh
            wx0 = min(x.real, y.real) - pad
            wx1 = max(x.real, y.real) + pad
            wy0 = min(x.imag, y.imag) - pad
            wy1 = max(x.imag, y.imag) + pad
    else:
        wx0, wx1, wy0, wy1 = window
    if part is not None:
        px0, px1, py0, py1 = part.window
        for p in (x, y):
            if not (px0 - 1e-9 <= p.real <= px1 + 1e-9
                    and py0 - 1e-9 <= p.imag <= py1 + 1e-9):
                raise ValueError("endpoint outside the partition window")
        wx0, wy0 = max(wx0, px0), max(wy0, py0)
        wx1, wy1 = min(wx1, px1), min(wy1, py1)

    nx = int(np.floor((wx1 - wx0) / h)) + 1
    ny = int(np.floor((wy1 - wy0) / h)) + 1
    if nx < 2 or ny < 2:
        raise ValueError("window too small for the lattice")
    xs = wx0 + h * np.arange(nx)
    ys = wy0 + h * np.arange(ny)

    def nid(i, j):
        return j * nx + i

    rows, cols, data = [], [], []
    for dx, dy in _STENCILS[neighborhood]:
        i0 = max(0, -dx)
        i1 = min(nx, nx - dx)
        j0 = max(0, -dy)
        j1 = min(ny, ny - dy)
        if i0 >= i1 or j0 >= j1:
            continue
        I, J = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1))
        a = nid(I, J).ravel()
        b = nid(I + dx, J + dy).ravel()
        mx = 0.5 * (xs[I] + xs[I + dx]).ravel()
        my = 0.5 * (ys[J] + ys[J + dy]).ravel()
        yellow = np.asarray(coloring.is_yellow_at(mx + 1j * my)).ravel()
        wgt = np.where(yellow, 0.0, np.hypot(dx, dy) * h)
        rows.append(a)
        cols.append(b)
        data.append(wgt)
    graph = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nx * ny, nx * ny))

    def snap(p):
        i = int(np.clip(round((p.real - wx0) / h), 0, nx - 1))
        j = int(np.clip(round((p.imag - wy0) / h), 0, ny - 1))
        return nid(i, j), abs(complex(wx0 + i * h, wy0 + j * h) - p)

    sid, sx = snap(x)
    tid, sy = snap(y)
    dist = cs_dijkstra(graph, directed=False, indices=[sid])[0]
    value = float(dist[tid])
    d_euc = abs(x - y)
    slack = d_euc * (_distortion(neighborhood) - 1.0) + (sx + sy)
    if return_info:
        return {"value": value, "slack": slack, "snap": (sx, sy),
                "distortion": _distortion(neighborhood)}
    return value


# ---------------------------------------------------------------------------
# exact island-graph chemical distance (grid partitions)
# ---------------------------------------------------------------------------

def _grid_yellow_cells(coloring):
    part = coloring.partition
    i = np.arange(*part.irange)
    j = np.arange(*part.jrange)
    I, J = np.meshgrid(i, j)
    p = coloring.yellow_prob[0]
    u = counter_uniform(coloring.seed, I, J, 0)
    mask = u < p
    return I[mask], J[mask]


def _box_gap(ax0, ax1, ay0, ay1, bx0, bx1, by0, by1):
    gx = np.maximum(np.maximum(bx0 - ax1, ax0 - bx1), 0.0)
    gy = np.maximum(np.maximum(by0 - ay1, ay0 - by1), 0.0)
    return np.hypot(gx, gy)


def chemical_distances_exact(coloring, sources, targets, cutoff=None):
    """Continuum chemical distances on a grid coloring, via yellow islands.

    Travel inside yellow cells is free, so the optimal curve is a chain of
    straight segments between yellow cells (or the direct segment).  The
    distances are computed exactly by Dijkstra on the graph whose nodes
    are yellow cells plus the given points, with gap distances as weights.
    Edges longer than `cutoff` are pruned (the direct source-target edges
    always stay, preserving the d_chem <= d guarantee).

    Returns the matrix dist[s, t] over sources x targets.
    """
    part = coloring.partition
    if not isinstance(part, SquareGridPartition):
        raise ValueError("exact island route requires a square-grid partition")
    cw, ch = part.cw, part.ch
    yi, yj = _grid_yellow_cells(coloring)
    ncell = len(yi)
    src = np.asarray(sources, dtype=complex)
    tgt = np.asarray(targets, dtype=complex)
    pts = np.concatenate([src, tgt])
    npts = len(pts)

    bx0 = yi * cw
    bx1 = bx0 + cw
    by0 = yj * ch
    by1 = by0 + ch
    if cutoff is None:
        # ~10x the mean nearest-island spacing: long hops are never optimal
        density = max(ncell, 1) / max((part.irange[1] - part.irange[0]) * cw
                                      * (part.jrange[1] - part.jrange[0]) * ch, 1e-12)
        cutoff = max(5.0 / np.sqrt(max(density, 1e-12)), 8.0 * max(cw, ch))

    rows, cols, data = [], [], []
    if ncell:
        centers = np.column_stack([0.5 * (bx0 + bx1), 0.5 * (by0 + by1)])
        tree = cKDTree(centers)
        pairs = tree.query_pairs(r=cutoff + np.hypot(cw, ch), output_type="ndarray")
        if len(pairs):
            a, b = pairs[:, 0], pairs[:, 1]
            g = _box_gap(bx0[a], bx1[a], by0[a], by1[a], bx0[b], bx1[b], by0[b], by1[b])
            keep = g <= cutoff
            rows.append(a[keep] + npts)
            cols.append(b[keep] + npts)
            data.append(g[keep])
        # point-to-cell edges
        ppos = np.column_stack([pts.real, pts.imag])
        near = tree.query_ball_point(ppos, r=cutoff + np.hypot(cw, ch))
        for q, lst in enumerate(near):
            if not lst:
                continue
            lst = np.asarray(lst, dtype=np.int64)
            gx = np.maximum(np.maximum(bx0[lst] - pts[q].real, pts[q].real - bx1[lst]), 0)
            gy = np.maximum(np.maximum(by0[lst] - pts[q].imag, pts[q].imag - by1[lst]), 0)
            g = np.hypot(gx, gy)
            keep = g <= cutoff
            rows.append(np.full(keep.sum(), q))
            cols.append(lst[keep] + npts)
            data.append(g[keep])
    # direct point-to-point edges (kept regardless of cutoff)
    si = np.arange(len(src))
    for q in range(len(src)):
        d = np.abs(pts[len(src):] - pts[q])
        rows.append(np.full(len(tgt), q))
        cols.append(len(src) + np.arange(len(tgt)))
        data.append(d)

    n_nodes = npts + ncell
    if rows:
        graph = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_nodes, n_nodes))
    else:
        graph = sp.csr_matrix((n_nodes, n_nodes))
    dist = cs_dijkstra(graph, directed=False, indices=si)
    return dist[:, len(src):len(src) + len(tgt)]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def ratio_experiment(partition, parameter, N, n_pairs, seed, n_colorings=1,
                     n_sources=None, cutoff=None):
    """Statistics of d_chem/d over random point pairs and colorings.

    Pairs are drawn in B(0, N) subject to d >= log N, grouped by shared
    sources so each coloring needs a handful of Dijkstra sweeps.  Returns
    per-coloring minima, pooled ratio quantiles, the fraction of colorings
    with min ratio >= 1/10, and the per-pair table of the first coloring.
    """
    if n_pairs < 1:
        raise ValueError("need at least one pair")
    if N < 16:
        raise ValueError("need N >= 16")
    dmin = np.log(N)
    if n_sources is None:
        n_sources = max(4, int(np.ceil(np.sqrt(n_pairs / 16.0))))
    per_src = int(np.ceil(n_pairs / n_sources))

    def draw_points(tag, count):
        out = []
        t = 0
        while len(out) < count:
            u1 = counter_uniform(seed, 101, tag, t, 0)
            u2 = counter_uniform(seed, 101, tag, t, 1)
            t += 1
            r = N * np.sqrt(u1)
            out.append(r * np.exp(2j * np.pi * u2))
            if t > 100 * count:
                raise RuntimeError("pair sampling stalled")
        return np.array(out)

    sources = draw_points(0, n_sources)
    pairs = []
    for sidx, s in enumerate(sources):
        t = 0
        cnt = 0
        while cnt < per_src and len(pairs) < n_pairs:
            u1 = counter_uniform(seed, 202, sidx, t, 0)
            u2 = counter_uniform(seed, 202, sidx, t, 1)
            t += 1
            cand = N * np.sqrt(u1) * np.exp(2j * np.pi * u2)
            if abs(cand - s) >= dmin:
                pairs.append((sidx, cand))
                cnt += 1
            if t > 1000 * per_src:
                raise RuntimeError("target sampling stalled")
    targets = np.array([c for _, c in pairs])
    src_of_pair = np.array([s for s, _ in pairs])

    minima = []
    pooled = []
    first_rows = []
    for col_idx in range(n_colorings):
        coloring = color_regions(partition, parameter, parameter,
                                 seed + 7919 * (col_idx + 1))
        dmat = chemical_distances_exact(coloring, sources, targets, cutoff=cutoff)
        ratios = np.empty(len(pairs))
        for pidx, (sidx, tpt) in enumerate(pairs):
            d = abs(tpt - sources[sidx])
            dc = dmat[sidx, pidx]
            ratios[pidx] = dc / d
            if col_idx == 0:
                first_rows.append({"N": N, "r": parameter, "pair_id": pidx,
                                   "d": d, "d_chem": float(dc),
                                   "ratio": float(dc / d)})
        minima.append(float(ratios.min()))
        pooled.append(ratios)
    pooled = np.concatenate(pooled)
    minima = np.array(minima)
    qs = np.quantile(pooled, [0.0, 0.05, 0.25, 0.5, 0.75, 1.0])
    return {
        "N": N, "parameter": parameter, "n_pairs": len(pairs),
        "n_colorings": n_colorings,
        "per_coloring_min": minima.tolist(),
        "quantiles": {"min": qs[0], "q05": qs[1], "q25": qs[2],
                      "median": qs[3], "q75": qs[4], "max": qs[5]},
        "fraction_min_ge_tenth": float(np.mean(minima >= 0.1)),
        "max_ratio": float(pooled.max()),
        "table": first_rows,
    }


def insularity_fraction(coloring, neighborhood_radius):
    """Fraction of regions whose radius-neighborhood meets only blue regions.

    A region counts as insular when every region intersecting its open
    neighborhood (itself included) is blue.  Regions whose neighborhood
    leaves the window are excluded to avoid censoring bias; all-blue
    colorings give 1, all-yellow give 0.
    """
    if neighborhood_radius <= 0:
        raise ValueError("radius must be positive")
    part = coloring.partition
    if isinstance(part, SquareGridPartition):
        cw, ch = part.cw, part.ch
        # stencil of cell offsets with box gap below the radius
        mx = int(np.ceil(neighborhood_radius / cw)) + 1
        my = int(np.ceil(neighborhood_radius / ch)) + 1
        offs = []
        for dj in range(-my, my + 1):
            for di in range(-mx, mx + 1):
                gx = max((abs(di) - 1), 0) * cw
                gy = max((abs(dj) - 1), 0) * ch
                if np.hypot(gx, gy) < neighborhood_radius:
                    offs.append((di, dj))
        i = np.arange(*part.irange)
        j = np.arange(*part.jrange)
        I, J = np.meshgrid(i, j)
        blue = ~(counter_uniform(coloring.seed, I, J, 0) < coloring.yellow_prob[0])
        ins = np.ones_like(blue)
        ny, nx = blue.shape
        maxdi = max(abs(d[0]) for d in offs)
        maxdj = max(abs(d[1]) for d in offs)
        core = np.zeros_like(blue)
        core[maxdj:ny - maxdj or None, maxdi:nx - maxdi or None] = True
        if not core.any():
            raise ValueError("window too small for the requested radius")
        for di, dj in offs:
            shifted = np.roll(np.roll(blue, -dj, axis=0), -di, axis=1)
            ins &= shifted
        return float(ins[core].mean())

    # generic partitions: pairwise polygon gaps among nearby regions
    rids = list(part.region_ids())
    polys = [part.region_polygon(r) for r in rids]
    centers = np.array([[p[:, 0].mean(), p[:, 1].mean()] for p in polys])
    radius_bound = max(part.mesh_size, neighborhood_radius)
    tree = cKDTree(centers)
    blue = np.array([not coloring.is_yellow(r) for r in rids])
    x0, x1, y0, y1 = part.window
    count = 0
    insular = 0
    for qi, rid in enumerate(rids):
        p = polys[qi]
        if (p[:, 0].min() - neighborhood_radius < x0 or
                p[:, 0].max() + neighborhood_radius > x1 or
                p[:, 1].min() - neighborhood_radius < y0 or
                p[:, 1].max() + neighborhood_radius > y1):
            continue
        count += 1
        ok = True
        for qj in tree.query_ball_point(centers[qi], r=2 * radius_bound + part.mesh_size):
            # only yellow neighbors need the exact gap computation
            if not blue[qj] and _poly_gap(polys[qi], polys[qj]) < neighborhood_radius:
                ok = False
                break
        insular += ok
    if count == 0:
        raise ValueError("window too small for the requested radius")
    return insular / count


def _poly_gap(pa, pb):
    """Minimum distance between two polygons (vertex-to-segment both ways)."""
    from .partition import points_in_polygon
    if points_in_polygon(pa[:1], pb)[0] or points_in_polygon(pb[:1], pa)[0]:
        return 0.0
    best = np.inf
    for p, q in ((pa, pb), (pb, pa)):
        a = q
        b = np.roll(q, -1, axis=0)
        for pt in p:
            ab = b - a
            ap = pt[None, :] - a
            dd = (ab ** 2).sum(1)
            t = np.clip(np.where(dd > 0, (ap * ab).sum(1) / np.where(dd > 0, dd, 1), 0), 0, 1)
            proj = a + t[:, None] * ab
            best = min(best, float(np.sqrt(((pt[None, :] - proj) ** 2).sum(1)).min()))
    return best
