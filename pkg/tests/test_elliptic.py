import numpy as np
import pytest

from qclab.elliptic import (CellChart, Mobius, boundary_coordinate, cross_ratio,
                            jacobi_cpx, vertex_label)

DEFAULT_ANCHORS = (0.0, np.pi / 2, np.pi, 1.5 * np.pi)


class TestBoundaryCoordinate:
    def test_anchor_values(self):
        assert boundary_coordinate(0.0) == pytest.approx(1.0, abs=1e-12)
        assert np.isinf(boundary_coordinate(np.pi / 2))
        assert boundary_coordinate(np.pi) == pytest.approx(-1.0, abs=1e-12)
        assert boundary_coordinate(1.5 * np.pi) == pytest.approx(0.0, abs=1e-12)

    def test_monotone_on_arc(self):
        th = np.linspace(0.01, np.pi / 2 - 0.01, 50)
        t = boundary_coordinate(th)
        assert np.all(np.diff(t) > 0)

    def test_mobius_closed_form_agree(self):
        # tan form equals -i(e^{i th}+i)/(e^{i th}-i) away from the pole
        th = np.linspace(0, 2 * np.pi, 37)[:-1]
        th = th[np.abs(th - np.pi / 2) > 1e-3]
        w = np.exp(1j * th)
        ref = (-1j * (w + 1j) / (w - 1j)).real
        assert np.allclose(boundary_coordinate(th), ref, atol=1e-9)


class TestCrossRatio:
    def test_infinity_limits(self):
        assert cross_ratio(2, 1, 0, np.inf) == pytest.approx(2.0)
        for a in (1.5, 3.0, 17.0):
            assert cross_ratio(a, 1, 0, np.inf) == pytest.approx(a)

    def test_coincident_rejected(self):
        with pytest.raises(ValueError):
            cross_ratio(1, 1, 0, np.inf)

    def test_mobius_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            pts = np.sort(rng.uniform(-5, 5, 4))[::-1]  # cyclic on the line
            a, b, c, d = pts[0], pts[1], pts[2], pts[3]
            base = cross_ratio(a, b, c, d)
            m, t = rng.uniform(0.5, 2.0), rng.uniform(-3, 3)
            moved = cross_ratio(m * a + t, m * b + t, m * c + t, m * d + t)
            assert moved == pytest.approx(base, rel=1e-10)

    def test_cyclic_order_gives_value_above_one(self):
        # four points in cyclic order on the extended line
        assert cross_ratio(2.0, 1.0, 0.0, -1.0) > 1.0
        assert cross_ratio(5.0, 2.0, -1.0, np.inf) > 1.0


class TestJacobi:
    def test_against_mpmath(self):
        mp = pytest.importorskip("mpmath")
        m = 0.3
        sn_f = mp.ellipfun("sn")
        cn_f = mp.ellipfun("cn")
        dn_f = mp.ellipfun("dn")
        pts = [0.3 + 0.2j, -0.7 + 0.9j, 1.1 + 0.05j, 0.0 + 0.6j]
        sn, cn, dn, den = jacobi_cpx(np.array(pts), m)
        for q, z in enumerate(pts):
            assert complex(sn[q] / den[q]) == pytest.approx(
                complex(sn_f(z, m=m)), rel=1e-10)
            assert complex(cn[q] / den[q]) == pytest.approx(
                complex(cn_f(z, m=m)), rel=1e-10)
            assert complex(dn[q] / den[q]) == pytest.approx(
                complex(dn_f(z, m=m)), rel=1e-10)


class TestCellChart:
    def test_default_is_square_with_known_modulus(self):
        ch = CellChart()
        assert ch.b == pytest.approx(ch.a, rel=1e-9)
        assert ch.k == pytest.approx(3 - 2 * np.sqrt(2), rel=1e-9)

    def test_corner_images(self):
        ch = CellChart()
        for lab in (1, 2, 3, 4):
            z = ch.base_corner(lab)
            zin = z + (0.5 + 0.5j - z) * 1e-11
            u = ch.disk_chart(np.array([zin]))[0]
            assert abs(u - np.exp(1j * ch.mid[lab - 1])) < 1e-8

    def test_periodicity(self):
        ch = CellChart()
        rng = np.random.default_rng(1)
        z = rng.uniform(0.05, 0.95, 64) + 1j * rng.uniform(0.05, 0.95, 64)
        for shift in (2 * ch.a, 2j * ch.b, 2 * ch.a + 2j * ch.b):
            assert np.allclose(ch.sphere(z), ch.sphere(z + shift), atol=1e-10)

    def test_reflection_symmetry(self):
        ch = CellChart()
        rng = np.random.default_rng(2)
        z = rng.uniform(0.05, 0.95, 32) + 1j * rng.uniform(0.05, 0.95, 32)
        assert np.allclose(ch.sphere(np.conj(z)), np.conj(ch.sphere(z)), atol=1e-10)

    def test_chart_derivative_matches_fd(self):
        ch = CellChart()
        h = 1e-6
        for z0 in (0.31 + 0.42j, 1.31 + 0.42j, 0.31 + 1.42j, 1.31 + 1.42j):
            u0, d0 = ch.disk_chart(np.array([z0]), want_deriv=True)
            ux = ch.disk_chart(np.array([z0 + h]))[0]
            uy = ch.disk_chart(np.array([z0 + 1j * h]))[0]
            dz = ((ux - u0[0]) / h + (uy - u0[0]) / (1j * h)) / 2
            dzb = ((ux - u0[0]) / h - (uy - u0[0]) / (1j * h)) / 2
            assert abs(dz - d0[0]) < 1e-6
            assert abs(dzb) < 1e-6  # holomorphic chart

    def test_anisotropic_anchors(self):
        anchors = (0.2, 1.9, 3.3, 4.9)
        ch = CellChart(theta_anchors=anchors)
        assert ch.b != pytest.approx(ch.a)
        for lab in (1, 2, 3, 4):
            z = ch.base_corner(lab)
            zin = z + (0.5 * (ch.a + 1j * ch.b) - z) * 1e-11
            u = ch.disk_chart(np.array([zin]))[0]
            assert abs(u - np.exp(1j * ch.mid[lab - 1])) < 1e-8

    def test_inconsistent_cell_height_rejected(self):
        with pytest.raises(ValueError):
            CellChart(cell_height=0.5)

    def test_anchor_order_enforced(self):
        with pytest.raises(ValueError):
            CellChart(theta_anchors=(0.0, 3.0, 1.0, 4.0))

    def test_vertex_labels_cyclic_per_cell(self):
        for ci in range(-2, 3):
            for cj in range(-2, 3):
                labs = [int(vertex_label(ci + di, cj + dj))
                        for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1))]
                assert sorted(labs) == [1, 2, 3, 4]
                # ascending or descending cyclic order around the cell
                k = labs.index(1)
                rot = labs[k:] + labs[:k]
                assert rot in ([1, 2, 3, 4], [1, 4, 3, 2])

    def test_ray_traces_land_on_chart_rays(self):
        ch = CellChart()
        for idx in range(4):
            pts = ch.trace_ray("anchor", idx, npts=12)[1:-1]
            u = ch.disk_chart(pts)
            ang = np.mod(np.angle(u) - ch.th[idx], 2 * np.pi)
            ang = np.minimum(ang, 2 * np.pi - ang)
            assert ang.max() < 1e-8
        for idx in range(4):
            pts = ch.trace_ray("mid", idx, npts=12)
            assert abs(pts[-1] - ch.base_corner(idx + 1)) < 1e-12


class TestMobius:
    def test_through_points(self):
        m = Mobius.through((0, 1, 2), (1j, 2j, 5j))
        for s, t in ((0, 1j), (1, 2j), (2, 5j)):
            assert complex(m(s)) == pytest.approx(t, abs=1e-12)

    def test_inverse(self):
        m = Mobius([[2, 1j], [1, 3]])
        z = np.array([0.3 + 0.1j, 2.0 - 1j])
        assert np.allclose(m.inv()(m(z)), z)
