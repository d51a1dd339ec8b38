"""Experiment runner: every pipeline as a reproducible subcommand.

Each subcommand reads one flat JSON config, runs the pipeline, and writes
delimited tables, grid dumps, and a manifest into the output directory.
Identical config and version produce byte-identical tables.  Exit codes:
0 success, 2 precondition failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .beltrami import field_from_function, truncate
from .gridio import ensure_dir, save_grid, save_table
from .modulus import (Quadrilateral, annulus_chain_diagnostic,
                      conductivity_from_beltrami, modulus_annulus_discrete,
                      modulus_discrete, modulus_euclidean_rectangle,
                      random_rectangles, rough_qc_report)
from .partition import build_square_grid
from .percolation import ratio_experiment
from .solver import NonConvergenceError, solve_truncated
from .asymptotics import (deviation_curve, estimate_linear_map,
                          nonlinear_radial_control, surface_order_curve)
from .surface import default_model, model_from_config, sample_surface, surface_beltrami


def _load_config(path):
    with open(path) as fh:
        return json.load(fh)


def _write_manifest(outdir, config, extra=None):
    doc = {"version": __version__, "config": config}
    if extra:
        doc.update(extra)
    with open(outdir + "/manifest.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _model_from(config):
    m = config.get("model")
    if not m:
        return default_model()
    return model_from_config(m)


def _field_from_config(config):
    """Coefficient field described by config['field']."""
    spec = config.get("field", {"kind": "zero"})
    kind = spec.get("kind", "zero")
    L = float(config.get("L", 16.0))
    n = int(config.get("n", 512))
    seed = int(config.get("seed", 0))
    if kind == "zero":
        fld = field_from_function(lambda z: np.zeros_like(z), L, n)
    elif kind == "constant":
        mu0 = complex(spec.get("re", 0.0), spec.get("im", 0.0))
        fld = field_from_function(lambda z: np.full(z.shape, mu0, complex), L, n)
    elif kind == "radial":
        k = float(spec.get("k", 1.0 / 3.0))
        R0 = float(spec.get("radius", L / 2))

        def mu(z):
            safe = np.where(z == 0, 1.0, z)
            out = k * z / np.conj(safe)
            return np.where((np.abs(z) < R0) & (z != 0), out, 0.0)

        fld = field_from_function(mu, L, n)
        fld.meta["truncation_radius"] = R0
    elif kind == "surface":
        model = _model_from(config)
        pad = max(model.chart.a, model.chart.b)
        sample = sample_surface(model, (-L - pad, L + pad, -L - pad, L + pad), seed)
        fld = surface_beltrami(model, sample, L, n)
    else:
        raise ValueError("unknown field kind %r" % kind)
    R = spec.get("truncation")
    if R is not None:
        fld = truncate(fld, float(R))
    return fld


def _maybe_plot(outdir, flag, make):
    if not flag:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    make(plt)
    plt.close("all")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_solve(config, outdir, plot=False):
    fld = _field_from_config(config)
    dmap = solve_truncated(fld, tol=float(config.get("tol", 1e-8)),
                           max_iter=int(config.get("max_iter", 600)))
    save_grid(outdir + "/map", dmap.values, dmap.L, "map", seed=config.get("seed"),
              extra={k: v for k, v in dmap.meta.items() if k != "residual"})
    res = dmap.meta["residual"]
    save_table(outdir + "/solve_log.csv",
               ["iterations", "h_diff", "residual_sup", "residual_median",
                "sup_mu", "truncation_radius(plane_units)"],
               [[dmap.meta["iterations"], dmap.meta["h_diff"], res["sup"],
                 res["median"], dmap.meta["sup_mu"],
                 dmap.meta["truncation_radius"]]])
    _write_manifest(outdir, config, {"residual": res})

    def make(plt):
        pts = dmap.points()
        fig, ax = plt.subplots(1, 2, figsize=(10, 5))
        ax[0].imshow(np.abs(fld.values), origin="lower",
                     extent=[-fld.L, fld.L, -fld.L, fld.L])
        ax[0].set_title("|mu|")
        step = max(1, dmap.n // 48)
        grid = dmap.values[::step, ::step]
        ax[1].plot(grid.real, grid.imag, "b-", lw=0.3)
        ax[1].plot(grid.T.real, grid.T.imag, "b-", lw=0.3)
        ax[1].set_title("image grid")
        ax[1].set_aspect("equal")
        fig.savefig(outdir + "/solve.png", dpi=110)

    _maybe_plot(outdir, plot, make)
    return 0


def run_percolation(config, outdir, plot=False):
    N = float(config.get("N", 64))
    margin = float(config.get("window_margin", 1.1))
    half = N * margin + 2
    part = build_square_grid(config.get("cell", 1.0), config.get("cell", 1.0),
                             (-half, half, -half, half))
    res = ratio_experiment(part, float(config.get("r", 0.02)), N,
                           int(config.get("pairs", 100)),
                           int(config.get("seed", 0)),
                           n_colorings=int(config.get("colorings", 1)))
    rows = [[r["N"], r["r"], r["pair_id"], r["d"], r["d_chem"], r["ratio"]]
            for r in res["table"]]
    save_table(outdir + "/ratios.csv",
               ["N(plane_units)", "r(probability)", "pair_id",
                "d(plane_units)", "d_chem(plane_units)", "ratio"], rows)
    save_table(outdir + "/summary.csv",
               ["colorings", "min_ratio", "median_ratio", "max_ratio",
                "fraction_min_ge_tenth"],
               [[res["n_colorings"], res["quantiles"]["min"],
                 res["quantiles"]["median"], res["quantiles"]["max"],
                 res["fraction_min_ge_tenth"]]])
    _write_manifest(outdir, config, {"quantiles": {k: float(v) for k, v in
                                                   res["quantiles"].items()}})

    def make(plt):
        ratios = [r["ratio"] for r in res["table"]]
        fig, ax = plt.subplots()
        ax.hist(ratios, bins=40)
        ax.axvline(0.1, color="r")
        ax.set_xlabel("d_chem / d")
        fig.savefig(outdir + "/ratios.png", dpi=110)

    _maybe_plot(outdir, plot, make)
    return 0


def run_modulus(config, outdir, plot=False):
    fld = _field_from_config(config)
    cond = conductivity_from_beltrami(fld)
    side_floor = float(config.get("side_floor", np.log(64)))
    n_rect = int(config.get("rectangles", 12))
    half = float(config.get("half_window", fld.L * 0.7))
    rects = random_rectangles(n_rect, half, side_floor, int(config.get("seed", 0)))
    report = rough_qc_report(fld, rects, side_floor,
                             n_short=int(config.get("n_short", 48)))
    rows = [[r["rect"], r["marked"], r["euclidean"], r["intrinsic"], r["ratio"]]
            for r in report["rows"]]
    save_table(outdir + "/moduli.csv",
               ["rect_id", "marking", "euclidean(modulus)",
                "intrinsic(modulus)", "ratio"], rows)
    chain = None
    if config.get("chain_depth"):
        chain = annulus_chain_diagnostic(fld, float(config.get("chain_base", 4.0)),
                                         int(config["chain_depth"]),
                                         resolution=int(config.get("chain_resolution", 160)))
        save_table(outdir + "/annulus_chain.csv",
                   ["ring", "modulus(extremal_length)", "running_sum"],
                   [[k, m, s] for k, (m, s) in
                    enumerate(zip(chain["ring_moduli"], chain["running_sum"]))])
    _write_manifest(outdir, config, {"empirical_K": report["K"]})

    def make(plt):
        fig, ax = plt.subplots()
        ratios = [r["ratio"] for r in report["rows"]]
        ax.hist(ratios, bins=24)
        ax.set_xlabel("intrinsic / euclidean modulus")
        fig.savefig(outdir + "/moduli.png", dpi=110)

    _maybe_plot(outdir, plot, make)
    return 0


def run_linearity(config, outdir, plot=False):
    model = _model_from(config)
    ladder = config.get("ladder", [8, 16, 32])
    res = deviation_curve(model, ladder, int(config.get("trials", 5)),
                          int(config.get("seed", 0)),
                          grid_factor=int(config.get("grid_factor", 6)))
    rows = []
    for R, devs, med in zip(res["R"], res["deviations"], res["median"]):
        q = np.quantile(devs, [0.25, 0.75]) if devs else (np.nan, np.nan)
        rows.append([R, len(devs), med, q[0], q[1]])
    save_table(outdir + "/deviations.csv",
               ["R(plane_units)", "trials", "median_deviation",
                "q25_deviation", "q75_deviation"], rows)
    mats = [[R] + (m[0] + m[1] if m else [np.nan] * 4)
            for R, m in zip(res["R"], res["mean_matrix"])]
    save_table(outdir + "/ensemble_matrix.csv",
               ["R(plane_units)", "a11", "a12", "a21", "a22"], mats)
    ctrl = nonlinear_radial_control()
    crow = [[R, estimate_linear_map(ctrl, min(R, ctrl.L * 0.6)).deviation]
            for R in res["R"]]
    save_table(outdir + "/control.csv",
               ["R(plane_units)", "radial_control_deviation"], crow)
    _write_manifest(outdir, config, {"medians": res["median"],
                                     "failures": res["failures"]})

    def make(plt):
        fig, ax = plt.subplots()
        ax.loglog(res["R"], res["median"], "o-")
        ax.set_xlabel("R")
        ax.set_ylabel("median deviation")
        fig.savefig(outdir + "/deviations.png", dpi=110)

    _maybe_plot(outdir, plot, make)
    return 0


def run_surface_order(config, outdir, plot=False):
    model = _model_from(config)
    n_samp = int(config.get("samples", 3))
    L = float(config.get("L", 64.0))
    n = int(config.get("n", 512))
    win = tuple(config.get("fit_window", (8.0, 24.0)))
    seed = int(config.get("seed", 0))
    slopes = []
    curves = []
    base = surface_order_curve(model, seed, L=L, n=n, fit_window=win, base=True)
    curves.append(("base", base))
    for t in range(n_samp):
        cur = surface_order_curve(model, seed + 1000 + t, L=L, n=n, fit_window=win)
        slopes.append(cur.order_fit["slope"])
        curves.append(("sample%d" % t, cur))
    rows = []
    for name, cur in curves:
        for tv, av, Tv in zip(cur.t, cur.A, cur.T):
            rows.append([name, tv, av, Tv])
    save_table(outdir + "/characteristic.csv",
               ["curve", "t(plane_units)", "A(normalized_area)", "T"], rows)
    fit_rows = [[name, cur.order_fit["slope"], cur.order_fit["lower_order"],
                 cur.order_fit["residual"], cur.coverage]
                for name, cur in curves]
    save_table(outdir + "/fits.csv",
               ["curve", "slope", "lower_order_proxy", "residual",
                "coverage(plane_units)"], fit_rows)
    _write_manifest(outdir, config, {
        "base_slope": base.order_fit["slope"],
        "median_slope": float(np.median(slopes)) if slopes else None})

    def make(plt):
        fig, ax = plt.subplots()
        for name, cur in curves:
            ax.loglog(cur.t, np.maximum(cur.T, 1e-12), label=name)
        ax.set_xlabel("r")
        ax.set_ylabel("T(r)")
        ax.legend(fontsize=6)
        fig.savefig(outdir + "/characteristic.png", dpi=110)

    _maybe_plot(outdir, plot, make)
    return 0


_COMMANDS = {
    "solve": run_solve,
    "percolation": run_percolation,
    "modulus": run_modulus,
    "linearity": run_linearity,
    "surface-order": run_surface_order,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="qclab",
        description="random quasiconformal map experiments (seeded, reproducible)")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--plot", action="store_true", help="emit PNG plots")
    args = parser.parse_args(argv)

    try:
        config = _load_config(args.config)
        outdir = ensure_dir(args.out)
        return _COMMANDS[args.command](config, outdir, plot=args.plot)
    except (ValueError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print("precondition failure: %s" % exc, file=sys.stderr)
        return 2
    except (NonConvergenceError, ArithmeticError, RuntimeError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
