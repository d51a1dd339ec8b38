import numpy as np
import pytest

from qclab.beltrami import field_from_function, truncate
from qclab.solver import (NonConvergenceError, cauchy_transform, evaluate,
                          invert_at, map_from_function, residual_stats,
                          solve_limit, solve_truncated)


def radial_mu(z, k=1.0 / 3.0, R=8.0):
    safe = np.where(z == 0, 1.0, z)
    out = k * z / np.conj(safe)
    return np.where((np.abs(z) < R) & (z != 0), out, 0.0)


def radial_exact(z, R=8.0):
    return np.where(np.abs(z) <= R, z * np.abs(z), R * z)


@pytest.fixture(scope="module")
def radial_map():
    fld = field_from_function(radial_mu, 16.0, 512)
    fld.meta["truncation_radius"] = 8.0
    return solve_truncated(fld, tol=1e-10), fld


class TestCauchyConvention:
    def test_dbar_inverse(self):
        # C must be a right inverse of dbar on compactly supported data
        from qclab.beltrami import grid_points
        L, n = 8.0, 256
        pts = grid_points(L, n)
        h = np.exp(-np.abs(pts) ** 2) * pts
        C = cauchy_transform(h, L)
        step = 2 * L / n
        dbar = 0.5 * (np.gradient(C, step, axis=1) + 1j * np.gradient(C, step, axis=0))
        assert np.abs(dbar - h)[8:-8, 8:-8].max() < 5e-3


class TestIdentity:
    def test_zero_field_gives_identity(self):
        fld = field_from_function(lambda z: np.zeros_like(z), 8.0, 256)
        dmap = solve_truncated(fld)
        assert np.abs(dmap.values - dmap.points()).max() <= 1e-10
        assert dmap.meta["iterations"] == 0


class TestRadialOracle:
    def test_closed_form(self, radial_map):
        dmap, _ = radial_map
        pts = dmap.points()
        ball = np.abs(pts) <= 4.0
        wex = radial_exact(pts)
        rel = np.abs(dmap.values - wex)[ball] / (1.0 + np.abs(wex[ball]))
        assert rel.max() <= 2e-2

    def test_normalization_exact(self, radial_map):
        dmap, _ = radial_map
        assert abs(dmap.evaluate(0j)) <= 1e-12
        assert abs(dmap.evaluate(1.0 + 0j) - 1.0) <= 1e-12

    def test_residual_median(self, radial_map):
        dmap, fld = radial_map
        stats = residual_stats(dmap, fld)
        assert stats["median"] <= 5e-2

    def test_orientation(self, radial_map):
        dmap, _ = radial_map
        jac = dmap.jacobian()[4:-4, 4:-4]
        assert np.all(jac > 0)

    def test_conformal_outside_support(self, radial_map):
        # w_zbar ~ 0 beyond the truncation radius
        dmap, fld = radial_map
        _, wzb = dmap.wirtinger()
        pts = dmap.points()
        outside = (np.abs(pts) > 8.0 + 2 * (2 * 16.0 / 512)) & \
                  (np.abs(pts.real) < 15) & (np.abs(pts.imag) < 15)
        wz, _ = dmap.wirtinger()
        assert np.median(np.abs(wzb[outside]) / np.abs(wz[outside])) < 1e-3


class TestSolveErrors:
    def test_domain_too_small(self):
        fld = field_from_function(lambda z: radial_mu(z, R=8.0), 12.0, 128)
        fld.meta["truncation_radius"] = 8.0
        with pytest.raises(ValueError):
            solve_truncated(fld)

    def test_nonconvergence_reported(self):
        fld = field_from_function(lambda z: np.where(np.abs(z) < 2, 0.97, 0) + 0j,
                                  8.0, 128)
        with pytest.raises(NonConvergenceError):
            solve_truncated(fld, tol=1e-12, max_iter=3)


class TestEvaluate:
    def test_grid_nodes_exact(self, radial_map):
        dmap, _ = radial_map
        pts = dmap.points()
        sel = (slice(10, 500, 97), slice(7, 500, 101))
        assert np.allclose(dmap.evaluate(pts[sel]), dmap.values[sel])

    def test_identity_interpolation(self):
        dmap = map_from_function(lambda z: z, 4.0, 64)
        z = 0.25 + 0.5j
        assert evaluate(dmap, z) == pytest.approx(z)

    def test_interpolation_refines_quadratically(self):
        errs = []
        for n in (128, 256):
            dmap = map_from_function(lambda z: z * np.abs(z), 4.0, n)
            z = np.array([0.311 + 0.413j, -1.77 + 0.03j])
            errs.append(np.abs(dmap.evaluate(z) - z * np.abs(z)).max())
        assert errs[1] < errs[0] / 3.0

    def test_outside_domain(self):
        dmap = map_from_function(lambda z: z, 4.0, 64)
        with pytest.raises(ValueError):
            dmap.evaluate(5.0 + 0j)


class TestInvert:
    def test_identity(self):
        dmap = map_from_function(lambda z: z, 4.0, 128)
        assert invert_at(dmap, 1.0 + 1.0j) == pytest.approx(1.0 + 1.0j, abs=1e-8)

    def test_radial_target(self):
        dmap = map_from_function(lambda z: radial_exact(z), 16.0, 512)
        z = invert_at(dmap, 4.0 + 0j)
        assert z == pytest.approx(2.0 + 0j, abs=1e-6)

    def test_round_trip(self, radial_map):
        dmap, _ = radial_map
        for tgt in (0.5 + 0.25j, -2.0 + 1.0j, 3.0 - 3.0j):
            z = invert_at(dmap, tgt)
            assert dmap.evaluate(z) == pytest.approx(tgt, abs=1e-8)

    def test_target_outside_image(self):
        dmap = map_from_function(lambda z: z, 2.0, 64)
        with pytest.raises(ValueError):
            invert_at(dmap, 10.0 + 10.0j)


class TestSolveLimit:
    def test_zero_field_first_rung(self):
        fld = field_from_function(lambda z: np.zeros_like(z), 8.0, 128)
        dmap = solve_limit(fld, [1.0, 2.0, 3.0], eval_radius=1.0)
        assert dmap.meta["ladder_converged"]
        assert np.abs(dmap.values - dmap.points()).max() < 1e-10

    def test_compact_support_stabilizes(self):
        # once the ladder passes the support radius, rungs agree
        fld = field_from_function(lambda z: np.where(np.abs(z) < 1.5, 0.3, 0.0) + 0j,
                                  8.0, 256)
        dmap = solve_limit(fld, [2.0, 3.0, 4.0], eval_radius=1.0, tol=1e-8)
        assert dmap.meta["ladder_converged"]
        assert dmap.meta["ladder_diffs"][0] < 1e-8

    def test_radial_differences_shrink(self):
        fld = field_from_function(lambda z: radial_mu(z, R=6.0), 16.0, 256)
        dmap = solve_limit(fld, [2.0, 4.0, 6.0, 7.0], eval_radius=2.0, tol=1e-9)
        diffs = dmap.meta["ladder_diffs"]
        assert diffs[-1] <= diffs[0]

    def test_unconverged_flagged(self):
        fld = field_from_function(lambda z: 0.4 * z / (1 + np.abs(z)) + 0j, 8.0, 128)
        dmap = solve_limit(fld, [1.0, 2.0], eval_radius=0.5, tol=1e-14)
        assert dmap.meta["ladder_converged"] is False
