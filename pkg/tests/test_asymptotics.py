import numpy as np
import pytest

from qclab.asymptotics import (CharacteristicCurve, characteristic, deviation_curve,
                               estimate_linear_map, nonlinear_radial_control,
                               order_fit, spherical_area, surface_order_curve)
from qclab.solver import map_from_function
from qclab.surface import PointMassArcLaw, default_model


class TestLinearEstimate:
    def test_identity_map(self):
        dmap = map_from_function(lambda z: z, 8.0, 256)
        est = estimate_linear_map(dmap, 4.0)
        assert np.allclose(est.matrix, np.eye(2), atol=1e-12)
        assert est.deviation <= 1e-10

    def test_antilinear_part(self):
        k = 1.0 / 3.0
        dmap = map_from_function(lambda z: (z + k * np.conj(z)) / (1 + k), 8.0, 256)
        est = estimate_linear_map(dmap, 4.0)
        assert np.allclose(est.matrix, np.diag([1.0, 0.5]), atol=1e-9)
        assert est.deviation <= 1e-6

    def test_exact_on_general_linear(self):
        A = np.array([[1.2, 0.3], [-0.1, 0.8]])
        def lin(z):
            return (A[0, 0] * z.real + A[0, 1] * z.imag
                    + 1j * (A[1, 0] * z.real + A[1, 1] * z.imag))
        dmap = map_from_function(lin, 8.0, 256)
        est = estimate_linear_map(dmap, 5.0)
        assert np.allclose(est.matrix, A, atol=1e-9)
        assert est.deviation <= 1e-6

    def test_radial_control_grows(self):
        ctrl = nonlinear_radial_control()
        devs = [estimate_linear_map(ctrl, R).deviation for R in (2, 4, 8)]
        assert all(d >= 0.05 for d in devs)
        assert devs[0] < devs[1] < devs[2]

    def test_scale_covariance(self):
        # fitting w on B(0,R) = fitting the rescaled map on B(0,1)
        rng = np.random.default_rng(0)
        for _ in range(5):
            A = np.eye(2) + 0.2 * rng.standard_normal((2, 2))
            eps = 0.05

            def wmap(z, A=A):
                lin = (A[0, 0] * z.real + A[0, 1] * z.imag
                       + 1j * (A[1, 0] * z.real + A[1, 1] * z.imag))
                return lin + eps * np.sin(z.real) * np.exp(1j * z.imag)

            R = 4.0
            big = map_from_function(wmap, 8.0, 512)
            scaled = map_from_function(lambda z: wmap(R * z) / R, 2.0, 512)
            ea = estimate_linear_map(big, R, n_samples=1024)
            eb = estimate_linear_map(scaled, 1.0, n_samples=1024)
            assert np.allclose(ea.matrix, eb.matrix, atol=5e-3)
            assert ea.deviation == pytest.approx(eb.deviation, abs=5e-3)

    def test_degenerate_radius(self):
        dmap = map_from_function(lambda z: z, 4.0, 64)
        with pytest.raises(ValueError):
            estimate_linear_map(dmap, 0.0)


class TestCharacteristic:
    def test_quadratic_area(self):
        t = np.geomspace(0.25, 32, 50)
        T, err = characteristic(t, t**2)
        assert np.allclose(T, t**2 / 2, rtol=1e-12)
        assert err < 1e-9

    def test_zero_area(self):
        t = np.geomspace(1, 10, 12)
        T, _ = characteristic(t, np.zeros_like(t))
        assert np.all(T == 0)

    def test_linearity(self):
        t = np.geomspace(0.5, 16, 30)
        A = t ** 1.7
        T1, _ = characteristic(t, A)
        T2, _ = characteristic(t, 2 * A)
        assert np.allclose(T2, 2 * T1, rtol=1e-12)

    def test_monotone_required(self):
        t = np.array([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            characteristic(t, np.array([1.0, 0.5, 2.0]))

    def test_convex_in_log(self):
        # dT/d(log r) = A(r) is nondecreasing, so T is convex in log r
        t = np.geomspace(0.5, 40, 60)
        A = t**2 * (1 + 0.1 * np.sin(np.log(t)))
        A = np.maximum.accumulate(A)
        T, _ = characteristic(t, A)
        s = np.log(t)
        slopes = np.diff(T) / np.diff(s)
        assert np.all(np.diff(slopes) >= -1e-9 * slopes.max())


class TestOrderFit:
    def test_exact_powers(self):
        r = np.geomspace(1, 100, 40)
        for p in (2.0, 3.0):
            fit = order_fit(r, r**p, (2, 50))
            assert fit["slope"] == pytest.approx(p, abs=1e-3)
            assert fit["lower_order"] == pytest.approx(p, abs=1e-3)

    def test_window_too_small(self):
        r = np.geomspace(1, 100, 40)
        with pytest.raises(ValueError):
            order_fit(r, r**2, (98, 100))


class TestSurfaceOrder:
    def test_base_surface_slope_two(self):
        curve = surface_order_curve(default_model(), 0, L=48.0, n=512,
                                    fit_window=(6, 20), base=True)
        assert 1.9 <= curve.order_fit["slope"] <= 2.1
        assert np.all(np.diff(curve.A) >= 0)

    def test_base_area_matches_cell_count(self):
        curve = surface_order_curve(default_model(), 0, L=48.0, n=512,
                                    fit_window=(6, 20), base=True)
        sel = curve.t >= 8.0
        ratio = curve.A[sel] / (np.pi * curve.t[sel] ** 2 / 2.0)
        assert np.all(np.abs(ratio - 1.0) < 0.05)

    def test_random_sample_runs(self):
        curve = surface_order_curve(default_model(), 3, L=32.0, n=384,
                                    fit_window=(4, 12))
        assert np.isfinite(curve.order_fit["slope"])
        assert np.all(np.diff(curve.A) >= 0)
        assert curve.order_fit["lower_order"] <= curve.order_fit["slope"] + 1.0


class TestSphericalArea:
    def test_coverage_enforced(self):
        model = default_model(law=PointMassArcLaw())
        from qclab.surface import sample_surface
        sample = sample_surface(model, (-5, 5, -5, 5), seed=0)
        dmap = map_from_function(lambda z: z, 4.0, 128)
        with pytest.raises(ValueError):
            spherical_area(model, sample, dmap, [10.0])

    def test_monotone_exact(self):
        model = default_model(law=PointMassArcLaw())
        from qclab.surface import sample_surface
        sample = sample_surface(model, (-5, 5, -5, 5), seed=0)
        dmap = map_from_function(lambda z: z, 4.0, 128)
        t = np.geomspace(0.2, 3.0, 25)
        A, cov = spherical_area(model, sample, dmap, t)
        assert np.all(np.diff(A) >= 0)
        assert cov >= 3.0


class TestDeviationCurve:
    def test_base_model_near_zero(self):
        base = default_model(law=PointMassArcLaw())
        out = deviation_curve(base, [4.0, 8.0], trials=5, seed=1, grid_factor=5)
        assert max(out["median"]) <= 1e-3
        assert not out["failures"]

    def test_random_model_medians_finite(self):
        out = deviation_curve(default_model(), [4.0, 8.0], trials=5, seed=2,
                              grid_factor=4, solver_tol=1e-6)
        assert all(np.isfinite(out["median"]))
        assert all(len(d) == 5 for d in out["deviations"])
        for m in out["mean_matrix"]:
            M = np.array(m)
            assert M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] > 0

    def test_ladder_validation(self):
        with pytest.raises(ValueError):
            deviation_curve(default_model(), [4.0, 4.0], trials=5, seed=0)
        with pytest.raises(ValueError):
            deviation_curve(default_model(), [4.0, 8.0], trials=2, seed=0)
