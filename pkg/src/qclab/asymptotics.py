"""Scaling-limit and growth-order estimation.

Two estimators: a least-squares real-linear fit of a solved map over a
disk (with its normalized sup deviation), and the spherical growth
characteristic of the composed surface map, integrated into a Nevanlinna
style characteristic whose log-log slope proxies the order of growth.
Orders are limsup/liminf quantities; finite windows can only produce
slope proxies and they are reported as such.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np
import scipy.fft as sfft

from ._rng import counter_hash
from .beltrami import truncate
from .solver import DiscreteMap, map_from_function, solve_truncated, _disk_points
from .surface import area_weight_grid, sample_surface, surface_beltrami


@dataclass
class LinearMapEstimate:
    """Real-linear fit A of a map over B(0, R): w(z) ~ A z."""
    matrix: np.ndarray          # 2x2 real, positive determinant for sane maps
    deviation: float            # sup |w - A z| / R over the sample set
    radius: float

    def apply(self, z):
        z = np.asarray(z, dtype=complex)
        a, b = self.matrix[0]
        c, d = self.matrix[1]
        return (a * z.real + b * z.imag) + 1j * (c * z.real + d * z.imag)


def estimate_linear_map(dmap, R, n_samples=2048):
    """Least-squares linear approximation of a map on B(0, R).

    Sample points are a deterministic golden-angle set, so estimates on a
    fixed map are reproducible; the deviation is max |w - Az|/R.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    pts = _disk_points(R, n_samples)
    w = dmap.evaluate(pts) if isinstance(dmap, DiscreteMap) else np.asarray(dmap(pts))
    X = np.column_stack([pts.real, pts.imag])
    if np.linalg.matrix_rank(X) < 2:
        raise ValueError("degenerate sample set")
    # two independent least squares, one per real coordinate of w
    sol, _, _, _ = np.linalg.lstsq(X, np.column_stack([w.real, w.imag]), rcond=None)
    A = sol.T  # rows: (Re w, Im w) coefficients on (x, y)
    est = LinearMapEstimate(A, 0.0, float(R))
    dev = float(np.abs(w - est.apply(pts)).max() / R)
    est.deviation = dev
    return est


def nonlinear_radial_control(L=16.0, n=512):
    """The map z |z| as a grid map: a negative control for linearity fits."""
    return map_from_function(lambda z: z * np.abs(z), L, n,
                             meta={"synthetic": True, "kind": "radial_control"})


def _fft_len(x):
    return sfft.next_fast_len(int(np.ceil(x)), real=False)


def solve_surface_sample(model, trial_seed, L, n, truncation=None, solver_tol=1e-8,
                         max_iter=600):
    """Sample a surface field, truncate, and solve; returns (map, field, sample)."""
    pad = max(model.chart.a, model.chart.b)
    sample = sample_surface(model, (-L - pad, L + pad, -L - pad, L + pad), trial_seed)
    field = surface_beltrami(model, sample, L, n)
    R = truncation if truncation is not None else L / 2.0
    field_t = truncate(field, R)
    dmap = solve_truncated(field_t, tol=solver_tol, max_iter=max_iter)
    return dmap, field_t, sample


def deviation_curve(model, R_ladder, trials, seed, grid_factor=6, solver_tol=1e-8,
                    n_fit=2048):
    """Ensemble deviations from linearity across a radius ladder.

    For every radius R and trial, a fresh field is sampled and solved on a
    domain of half-width 3R (truncation 1.5R), then fit on B(0, R).
    Returns per-R deviations, their quantiles, and the ensemble-average
    fitted matrix (the scaling-limit linear map estimate).
    """
    if trials < 5:
        raise ValueError("need at least 5 trials")
    R_ladder = sorted(float(R) for R in R_ladder)
    if any(b <= a for a, b in zip(R_ladder, R_ladder[1:])):
        raise ValueError("ladder radii must strictly increase")
    out = {"R": R_ladder, "deviations": [], "median": [], "mean_matrix": [],
           "failures": []}
    for R in R_ladder:
        L = 3.0 * R
        n = _fft_len(grid_factor * 2 * L)
        devs = []
        mats = []
        fails = 0
        for t in range(trials):
            trial_seed = int(counter_hash(seed, int(R * 16), t) >> np.uint64(1))
            try:
                dmap, _, _ = solve_surface_sample(model, trial_seed, L, n,
                                                  truncation=1.5 * R,
                                                  solver_tol=solver_tol)
            except Exception as exc:   # report, keep going
                fails += 1
                out["failures"].append({"R": R, "trial": t, "error": str(exc)})
                continue
            est = estimate_linear_map(dmap, R, n_samples=n_fit)
            devs.append(est.deviation)
            mats.append(est.matrix)
        out["deviations"].append(devs)
        out["median"].append(float(np.median(devs)) if devs else float("nan"))
        out["mean_matrix"].append(np.mean(mats, axis=0).tolist() if mats else None)
    return out


# ---------------------------------------------------------------------------
# spherical growth
# ---------------------------------------------------------------------------

@dataclass
class CharacteristicCurve:
    """Spherical area A(t) and integrated characteristic T(r) tables."""
    t: np.ndarray
    A: np.ndarray
    r: np.ndarray
    T: np.ndarray
    quad_error: float
    coverage: float
    order_fit: dict = dfield(default_factory=dict)


def spherical_area(model, sample, dmap, t_values):
    """Normalized spherical area of the composite over sublevel sets of |w|.

    A(t) sums the pullback density of the round metric (total area 1)
    over grid nodes with |w| < t; the image must cover B(0, max t), which
    is checked through the winding radius of the grid boundary image.
    """
    t_values = np.asarray(sorted(float(t) for t in t_values))
    if np.any(t_values <= 0):
        raise ValueError("t values must be positive")
    coverage = dmap.coverage_radius()
    if coverage < t_values[-1]:
        raise ValueError("image covers only B(0, %.3g); largest t is %.3g"
                         % (coverage, t_values[-1]))
    weights = area_weight_grid(model, sample, dmap.L, dmap.n)
    mod_w = np.abs(dmap.values).ravel()
    order = np.argsort(mod_w)
    cum = np.cumsum(weights.ravel()[order])
    pos = np.searchsorted(mod_w[order], t_values, side="left")
    A = np.where(pos > 0, cum[np.clip(pos - 1, 0, len(cum) - 1)], 0.0)
    A[pos == 0] = 0.0
    return A, coverage


def characteristic(t_values, A_values):
    """Integrated characteristic T(r) = int_0^r A(t)/t dt on the t grid.

    Trapezoid quadrature plus the exact head term of a quadratic A near
    0; the refinement difference against a stride-2 grid is returned as a
    quadrature error estimate.
    """
    t = np.asarray(t_values, dtype=float)
    A = np.asarray(A_values, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("t grid must increase")
    if np.any(np.diff(A) < -1e-12 * max(A.max(), 1.0)):
        raise ValueError("A table must be nondecreasing")

    def integrate(tt, aa):
        out = np.empty_like(tt)
        head = aa[0] / 2.0  # A ~ c t^2 near 0 integrates to A(t0)/2
        vals = aa / tt
        out[0] = head
        if len(tt) > 1:
            inc = 0.5 * (vals[1:] + vals[:-1]) * np.diff(tt)
            out[1:] = head + np.cumsum(inc)
        return out

    T = integrate(t, A)
    if len(t) >= 5:
        Tc = integrate(t[::2], A[::2])
        err = float(np.abs(Tc - T[::2]).max())
    else:
        err = float("nan")
    return T, err


def order_fit(r_values, T_values, window):
    """Log-log slope of T over a window, with a lower-order proxy.

    The slope is the least-squares fit of log T against log r; the lower
    proxy is the smallest two-point slope among pairs separated by at
    least a factor 2.  Both are finite-window surrogates, not limits.
    """
    r = np.asarray(r_values, dtype=float)
    T = np.asarray(T_values, dtype=float)
    lo, hi = window
    sel = (r >= lo) & (r <= hi) & (T > 0)
    if sel.sum() < 6:
        raise ValueError("fit window holds fewer than 6 points")
    x = np.log(r[sel])
    y = np.log(T[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    lower = np.inf
    for i in range(len(x)):
        for j in range(i + 1, len(x)):
            if x[j] - x[i] >= np.log(2.0):
                lower = min(lower, (y[j] - y[i]) / (x[j] - x[i]))
    return {"slope": float(slope), "intercept": float(intercept),
            "residual": resid, "lower_order": float(lower),
            "window": (float(lo), float(hi)), "n_points": int(sel.sum())}


def surface_order_curve(model, sample_seed, L=128.0, n=1024, fit_window=(8.0, 64.0),
                        n_t=48, solver_tol=1e-8, base=False):
    """Full growth pipeline for one surface sample.

    Samples (or fixes, for base=True) the marked angles, solves the
    normalized map, accumulates A(t) on a log-spaced grid up to the
    coverage radius, integrates T, and fits the order proxy over the
    window (clipped to coverage when necessary).
    """
    from .surface import PointMassArcLaw, SurfaceModel

    if base:
        model = SurfaceModel(theta_anchors=model.theta_anchors,
                             vertex_laws={lab: PointMassArcLaw() for lab in (1, 2, 3, 4)},
                             cell_width=model.cell_width)
    dmap, field, sample = solve_surface_sample(model, sample_seed, L, n,
                                               solver_tol=solver_tol)
    coverage = dmap.coverage_radius()
    cell = max(model.chart.a, model.chart.b)
    t_hi = min(0.98 * coverage, 1.25 * fit_window[1] * cell)
    t_lo = 0.75 * cell
    if t_hi <= t_lo * 2:
        raise ValueError("coverage too small for a growth window")
    t = np.geomspace(t_lo, t_hi, n_t)
    A, cov = spherical_area(model, sample, dmap, t)
    T, qerr = characteristic(t, A)
    win_hi = min(fit_window[1] * cell, 0.9 * cov)
    fit = order_fit(t, T, (fit_window[0] * cell, win_hi))
    return CharacteristicCurve(t=t, A=A, r=t, T=T, quad_error=qerr,
                               coverage=cov, order_fit=fit)
