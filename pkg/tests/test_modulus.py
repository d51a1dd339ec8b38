import numpy as np
import pytest

from qclab.beltrami import field_from_function
from qclab.modulus import (ConductivityField, Quadrilateral,
                           annulus_chain_diagnostic, beltrami_to_matrix,
                           conductivity_from_beltrami, modulus_annulus_discrete,
                           modulus_discrete, modulus_euclidean_rectangle,
                           random_rectangles, rough_qc_report)


def constant_field(mu0, L=4.0, n=64):
    return field_from_function(lambda z: np.full(z.shape, complex(mu0)), L, n)


class TestEuclideanRectangle:
    def test_unit_square(self):
        assert modulus_euclidean_rectangle(1, 1, "vertical") == 1.0

    def test_two_by_one(self):
        assert modulus_euclidean_rectangle(2, 1, "vertical") == pytest.approx(0.5)
        assert modulus_euclidean_rectangle(2, 1, "horizontal") == pytest.approx(2.0)

    def test_reciprocal_duality(self):
        for a, b in ((1.0, 1.0), (3.0, 1.7), (0.4, 2.5)):
            p = modulus_euclidean_rectangle(a, b, "vertical")
            q = modulus_euclidean_rectangle(a, b, "horizontal")
            assert p * q == pytest.approx(1.0)

    def test_positive_sides(self):
        with pytest.raises(ValueError):
            modulus_euclidean_rectangle(0, 1)


class TestDiscreteQuadrilateral:
    def test_unit_square_identity(self):
        v = modulus_discrete(Quadrilateral.rectangle(0, 1, 0, 1), n_short=64)
        assert v == pytest.approx(1.0, abs=1e-3)

    def test_euclidean_rectangles_random(self):
        # flat conductivity reproduces the closed form on random rectangles
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.uniform(0.5, 3.0)
            b = rng.uniform(0.5, 3.0)
            x0 = rng.uniform(-2, 2)
            y0 = rng.uniform(-2, 2)
            marked = "vertical" if rng.random() < 0.5 else "horizontal"
            quad = Quadrilateral.rectangle(x0, x0 + a, y0, y0 + b, marked)
            v = modulus_discrete(quad, n_short=24)
            assert v == pytest.approx(modulus_euclidean_rectangle(a, b, marked),
                                      rel=1e-3)

    def test_affine_oracle_grid(self):
        # constant coefficient k: image of the unit square is a
        # (1+k) x (1-k) rectangle with modulus (1-k)/(1+k)
        for k in np.arange(0.1, 0.95, 0.1):
            cond = conductivity_from_beltrami(constant_field(k))
            v = modulus_discrete(Quadrilateral.rectangle(0, 1, 0, 1, "vertical"),
                                 cond, n_short=32)
            expect = (1 - k) / (1 + k)
            assert abs(v - expect) <= 0.02 * expect

    def test_duality_smooth_field(self):
        fld = field_from_function(
            lambda z: 0.3 * np.sin(0.7 * z.real) * np.exp(1j * 0.5 * z.imag), 4.0, 512)
        cond = conductivity_from_beltrami(fld)
        mv = modulus_discrete(Quadrilateral.rectangle(0, 1.3, 0, 0.9, "vertical"),
                              cond, n_short=96)
        mh = modulus_discrete(Quadrilateral.rectangle(0, 1.3, 0, 0.9, "horizontal"),
                              cond, n_short=96)
        assert mv * mh == pytest.approx(1.0, abs=2e-3)

    def test_general_convex_quad_duality(self):
        quad_v = Quadrilateral((0j, 2.0 + 0.2j, 2.3 + 1.4j, -0.2 + 1.1j), "vertical")
        quad_h = Quadrilateral(quad_v.vertices, "horizontal")
        mv = modulus_discrete(quad_v, n_short=96)
        mh = modulus_discrete(quad_h, n_short=96)
        assert mv * mh == pytest.approx(1.0, abs=2e-3)

    def test_refinement_estimate(self):
        out = modulus_discrete(Quadrilateral.rectangle(0, 1, 0, 1), n_short=32,
                               full_output=True)
        assert abs(out["value"] - out["coarse"]) <= 3.0 * out["richardson_error"] + 1e-12

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            modulus_discrete(Quadrilateral.rectangle(0, 1, 0, 1), n_short=4)


class TestConductivity:
    def test_zero_is_identity(self):
        A = beltrami_to_matrix(np.array([0j]))
        assert np.allclose(A[0], np.eye(2))

    def test_half_real(self):
        A = beltrami_to_matrix(np.array([0.5 + 0j]))[0]
        assert np.allclose(A, np.diag([1.0 / 3.0, 3.0]))

    def test_unit_determinant(self):
        rng = np.random.default_rng(1)
        mu = 0.85 * rng.uniform(0, 1, 50) * np.exp(2j * np.pi * rng.uniform(0, 1, 50))
        A = beltrami_to_matrix(mu)
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        assert np.allclose(det, 1.0, atol=1e-9)

    def test_bad_modulus_rejected(self):
        with pytest.raises(ValueError):
            beltrami_to_matrix(np.array([1.0 + 0j]))


class TestAnnuli:
    def test_round_flat_values(self):
        v1 = modulus_annulus_discrete(("circle", 1.0), ("circle", float(np.e ** (2 * np.pi))))
        assert v1 == pytest.approx(1.0, rel=1e-2)
        v2 = modulus_annulus_discrete(("circle", 1.0), ("circle", float(np.e ** (4 * np.pi))))
        assert v2 == pytest.approx(2.0, rel=1e-2)

    def test_round_zero_field_matches_flat(self):
        fld = field_from_function(lambda z: np.zeros_like(z), 40.0, 128)
        cond = conductivity_from_beltrami(fld)
        v = modulus_annulus_discrete(("circle", 1.0), ("circle", 20.0), cond)
        assert v == pytest.approx(np.log(20.0) / (2 * np.pi), rel=1e-2)

    def test_square_ring_self_consistent(self):
        a = modulus_annulus_discrete(("square", 1.0), ("square", 2.0), resolution=96)
        b = modulus_annulus_discrete(("square", 1.0), ("square", 2.0), resolution=192)
        assert a == pytest.approx(b, rel=5e-3)
        # comparable to, and below, the round annulus of ratio 2
        assert 0.05 < b < np.log(2) / (2 * np.pi)

    def test_ring_scale_invariance(self):
        a = modulus_annulus_discrete(("square", 1.0), ("square", 2.0), resolution=128)
        b = modulus_annulus_discrete(("square", 3.0), ("square", 6.0), resolution=128)
        assert a == pytest.approx(b, rel=1e-9)

    def test_mixed_kinds_rejected(self):
        with pytest.raises(ValueError):
            modulus_annulus_discrete(("circle", 1.0), ("square", 2.0))

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            modulus_annulus_discrete(("circle", 2.0), ("circle", 1.0))


class TestRoughQC:
    @pytest.fixture(scope="class")
    def zero_field(self):
        return field_from_function(lambda z: np.zeros_like(z), 24.0, 256)

    def test_flat_field_distortion_one(self, zero_field):
        rects = random_rectangles(6, 12.0, 2.0, seed=0)
        rep = rough_qc_report(zero_field, rects, 2.0, n_short=32)
        assert rep["K"] == pytest.approx(1.0, abs=5e-3)

    def test_constant_field_bounded_by_dilatation(self):
        k = 0.4
        fld = constant_field(k, L=24.0, n=128)
        rects = random_rectangles(6, 12.0, 2.0, seed=1)
        rep = rough_qc_report(fld, rects, 2.0, n_short=32)
        bound = (1 + k) / (1 - k)
        assert rep["K"] <= bound * 1.01
        assert rep["K"] == pytest.approx(bound, rel=2e-2)

    def test_side_floor_enforced(self, zero_field):
        with pytest.raises(ValueError):
            rough_qc_report(zero_field, [(0, 1, 0, 5)], side_floor=2.0)


class TestAnnulusChain:
    def test_flat_chain_linear_sum(self):
        fld = field_from_function(lambda z: np.zeros_like(z), 40.0, 128)
        out = annulus_chain_diagnostic(fld, 4.0, 3, resolution=128)
        mods = out["ring_moduli"]
        assert np.allclose(mods, mods[0], rtol=1e-6)  # scale invariance
        sums = out["running_sum"]
        assert np.allclose(np.diff(sums), mods[0], rtol=1e-6)

    def test_constant_field_within_dilatation(self):
        k = 0.3
        fld = constant_field(k, L=40.0, n=128)
        flat = annulus_chain_diagnostic(
            field_from_function(lambda z: np.zeros_like(z), 40.0, 128), 4.0, 2,
            resolution=128)["ring_moduli"]
        out = annulus_chain_diagnostic(fld, 4.0, 2, resolution=128)
        Kd = (1 + k) / (1 - k)
        for m, f in zip(out["ring_moduli"], flat):
            assert f / Kd - 1e-9 <= m <= f * Kd + 1e-9

    def test_domain_too_small(self):
        fld = constant_field(0.1, L=10.0, n=64)
        with pytest.raises(ValueError):
            annulus_chain_diagnostic(fld, 4.0, 3)
