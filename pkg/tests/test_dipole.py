import numpy as np
import pytest

from cosserat_lab.degree import probe_degree, verify_dipole
from cosserat_lab.dipole import (
    BoundaryDataSpec,
    BubbleParams,
    CuboidDecomposition,
    FlippedCube,
    bubble_density,
    bubble_insert,
    bubble_orientation,
    check_separation,
    cube_flip,
    insert_dipole,
    sigma,
    thm1_boundary_data,
)
from cosserat_lab.errors import CosseratError
from cosserat_lab.grid import make_domain, rigid_base_field
from cosserat_lab.sources import directional_derivatives, rigid_source
from cosserat_lab.surface import bubble_disc_patch, surface_energy


def err_name(exc_info):
    return type(exc_info.value).__name__


def bubble_report(alpha):
    src = FlippedCube(rigid_source(), 1.0, alpha)
    patch = bubble_disc_patch(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), alpha)
    return dict((name, (d, c)) for name, d, c in surface_energy(src, patch).per_region)


class TestBubble:
    def test_sigma_is_unit_and_degree_one(self):
        z = np.random.default_rng(0).normal(size=(100, 2))
        np.testing.assert_allclose(np.linalg.norm(sigma(z), axis=1), 1.0)
        np.testing.assert_allclose(sigma(np.zeros((1, 2))), [[0, 0, 1.0]])

    @pytest.mark.parametrize("alpha", [0.05, 0.1, 0.2])
    def test_inner_disc_energy(self, alpha):
        # |DR|^2 = 8 |Dn|^2, so the R-level value is 8 times the n-level law
        curvature = bubble_report(alpha)["inner"][1]
        assert curvature / 8 == pytest.approx(8 * np.pi / (1 + 4 * alpha**2), rel=0.01)

    @pytest.mark.parametrize("alpha", [0.05, 0.1, 0.2])
    def test_pointwise_density(self, alpha):
        src = FlippedCube(rigid_source(), 1.0, alpha)
        r = np.linspace(0, 0.49 * alpha, 40)
        ang = np.linspace(0, 2 * np.pi, 40)
        pts = np.stack([r * np.cos(ang), r * np.sin(ang), np.zeros_like(r)], axis=1)
        tang = np.tile(np.array([[1.0, 0, 0], [0, 1.0, 0]]), (len(r), 1, 1))
        _, dn, _ = directional_derivatives(src, pts, tang, np.full(len(r), 1e-3 * alpha**2))
        measured = np.sum(dn**2, axis=(-2, -1))
        np.testing.assert_allclose(measured, bubble_density(r, alpha), rtol=0.02)

    def test_annulus_bounded(self):
        peaks = []
        for alpha in (0.05, 0.1, 0.2):
            src = FlippedCube(rigid_source(), 1.0, alpha)
            r = np.linspace(0.51 * alpha, 0.99 * alpha, 30)
            pts = np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=1)
            tang = np.tile(np.array([[1.0, 0, 0], [0, 1.0, 0]]), (len(r), 1, 1))
            _, dn, _ = directional_derivatives(src, pts, tang, np.full(len(r), 1e-4 * alpha))
            peaks.append(np.sqrt(np.sum(dn**2, axis=(-2, -1))).max())
        assert max(peaks) < 20
        assert max(peaks) / min(peaks) < 1.2

    def test_unchanged_outside(self):
        rng = np.random.default_rng(1)
        y = rng.uniform(-1, 1, size=(500, 2))
        n_face = np.tile([0.0, 0.0, 1.0], (500, 1))
        params = BubbleParams(0.3, np.array([0.1, 0.0]), bubble_orientation([0.0, 0.0, 1.0]))
        out = bubble_insert(n_face, y, params)
        far = np.linalg.norm(y - params.center, axis=1) >= 0.3
        np.testing.assert_array_equal(out[far], n_face[far])
        assert not np.allclose(out[~far], n_face[~far])

    def test_far_field_matches_face_value(self):
        n0 = np.array([0.6, 0.0, 0.8])
        params = BubbleParams(0.02, np.zeros(2), bubble_orientation(n0))
        out = bubble_insert(np.tile(n0, (3, 1)), np.array([[0.0, 0.0099], [0.0, 0.0199], [0.0, 0.0]]), params)
        assert out[0] @ n0 > 0.99
        assert out[1] @ n0 > 1 - 1e-6
        assert out[2] @ n0 == pytest.approx(-1.0)


class TestCubeFlip:
    def test_budget_and_degree(self):
        res = cube_flip(rigid_source(), nu=1.0, eps_budget=1.0)
        assert 0 < res.alpha0 < 1.0
        assert res.measured.total < 64 * np.pi + 1
        assert res.degree_before == 0
        assert abs(res.degree_after) == 1

    def test_requested_alpha_too_large(self):
        with pytest.raises(CosseratError) as exc:
            cube_flip(rigid_source(), nu=1.0, alpha=0.5, eps_budget=1.0)
        assert err_name(exc) == "AlphaTooLarge"
        assert exc.value.to_dict()["measured"] > 64 * np.pi + 1

    def test_unchanged_off_disc(self):
        res = cube_flip(rigid_source(), nu=1.0, alpha=0.03)
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1, 1, size=(400, 3))
        pts[:, 2] = np.where(np.arange(400) % 2 == 0, 0.0, -2.0)
        off = np.linalg.norm(pts[:, :2], axis=1) >= 0.03
        np.testing.assert_array_equal(res.source.axes(pts[off]), rigid_source().axes(pts[off]))


class TestCuboid:
    def test_geometry(self):
        dec = CuboidDecomposition([0, 0, 0], [0, 0, 1], 5)
        assert dec.a == pytest.approx(0.125)
        np.testing.assert_allclose(dec.centers[0], [0, 0, 0], atol=1e-15)
        np.testing.assert_allclose(dec.centers[-1], [0, 0, 1], atol=1e-15)
        assert len(dec.centers) == 5

    @pytest.mark.parametrize("m", [2, 4, 9])
    def test_hausdorff(self, m):
        P, N = np.array([0.1, -0.2, 0.3]), np.array([0.5, 0.4, -0.1])
        dec = CuboidDecomposition(P, N, m)
        assert dec.hausdorff_to_segment() == pytest.approx(np.sqrt(3) * dec.a, rel=1e-12)
        corners = dec.corners()
        t = np.clip((corners - P) @ (N - P) / np.sum((N - P) ** 2), 0, 1)
        oracle = np.max(np.linalg.norm(corners - (P + t[:, None] * (N - P)), axis=1))
        assert dec.hausdorff_to_segment() == pytest.approx(oracle, rel=1e-12)


@pytest.fixture(scope="module")
def dipoles():
    return {m: insert_dipole(rigid_source(), [0, 0, 0], [0, 0, 0.5], m=m) for m in (2, 4, 8, 16)}


class TestInsertDipole:
    def test_energy_bound_and_monotone(self, dipoles):
        bound = 64 * np.pi * 0.5
        energies = [dipoles[m].energy.total.total for m in (4, 8, 16)]
        assert all(e <= bound * 1.15 for e in energies)
        assert energies[0] > energies[1] > energies[2] > bound * 0.99
        assert dipoles[16].energy.total.total <= bound * (1 + 1 / 64) ** 2

    @pytest.mark.parametrize("m", [2, 4, 8, 16])
    def test_degree_ledger(self, dipoles, m):
        ledger = dipoles[m].degree_ledger
        assert [p.mod2_degree for p in ledger] == [1] + [0] * (m - 2) + [1]
        assert sum(p.lift_degree for p in ledger) == 0
        np.testing.assert_allclose([p.location for p in ledger], dipoles[m].decomposition.centers, atol=1e-12)

    def test_phi_degree_zero_at_centres(self, dipoles):
        from cosserat_lab.degree import map_degree_phi

        ins = dipoles[4]
        dec = ins.decomposition
        offset = np.array([1.3, 0.9, 0.4]) * dec.a
        for cj in dec.centers:
            # values off the image of the cube: no degree
            value = ins.construction.phi(cj[None])[0] + 2 * offset
            assert map_degree_phi(ins.construction, cj, 0.4 * dec.a, value) == 0
        # phi composed with the retraction wraps the probe sphere once around
        # values inside the cube image
        cj = dec.centers[1]
        value = ins.construction.phi(cj[None])[0] + 0.3 * offset
        assert map_degree_phi(ins.construction, cj, 0.4 * dec.a, value) == 1

    def test_verified(self, dipoles):
        ins = dipoles[4]
        rec = verify_dipole(ins.construction, [0, 0, 0], [0, 0, 0.5], 1.5 * ins.decomposition.a)
        assert rec.verified and abs(rec.degree) == 1

    def test_unchanged_outside_cuboid(self, dipoles):
        ins = dipoles[4]
        rng = np.random.default_rng(3)
        x = rng.uniform(-0.5, 1.0, size=(2000, 3))
        out = ~ins.decomposition.contains(x)
        base = rigid_source()
        np.testing.assert_array_equal(ins.construction.axes(x[out]), base.axes(x[out]))
        np.testing.assert_array_equal(ins.construction.phi(x[out]), base.phi(x[out]))

    def test_grid_locality(self):
        dom = make_domain("box", 1 / 32, lo=(-0.5, -0.5, -0.5), hi=(0.5, 0.5, 1.0))
        f = rigid_base_field(dom)
        ins = insert_dipole(f, [0, 0, 0], [0, 0, 0.5], m=4)
        out = ~ins.decomposition.contains(dom.positions) & dom.inside
        np.testing.assert_array_equal(ins.field.phi[out], f.phi[out])
        np.testing.assert_array_equal(ins.field.n[out], f.n[out])
        assert not np.array_equal(ins.field.n, f.n)

    def test_alpha_too_large(self):
        with pytest.raises(CosseratError) as exc:
            insert_dipole(rigid_source(), [0, 0, 0], [0, 0, 0.5], m=4, alpha=0.1)
        assert err_name(exc) == "AlphaTooLarge"

    def test_segment_too_close(self):
        dom = make_domain("ball", 1 / 16, radius=1.0)
        with pytest.raises(CosseratError) as exc:
            insert_dipole(rigid_base_field(dom), [0, 0, 0.5], [0, 0, 0.95], m=4)
        assert err_name(exc) == "SegmentTooClose"

    def test_manifest(self, dipoles):
        man = dipoles[4].manifest()
        for key in ("P", "N", "m", "alpha", "a_m", "measured_energy_breakdown", "degree_ledger"):
            assert key in man
        assert set(man["measured_energy_breakdown"]) >= {"A", "D", "E", "F", "G"}


@pytest.fixture(scope="module")
def bd1():
    return thm1_boundary_data(1, 1e-3)


class TestBoundaryData:

    def test_spec_geometry(self):
        spec = BoundaryDataSpec(2, 0.01)
        np.testing.assert_allclose(spec.lambdas, [0.25, 0.5])
        np.testing.assert_allclose(spec.xi[0], [0, np.sqrt(1 - 0.25**2), 0.25])
        np.testing.assert_allclose(spec.eta[1], [0, -np.sqrt(1 - 0.25), -0.5])
        assert check_separation(spec)["min_z_gap"] >= 1 / 8

    def test_energy_below_pi(self, bd1):
        e = bd1.energy_ball.total.total
        assert e < np.pi
        assert e == pytest.approx(128 * np.pi * 1e-3, rel=0.02)

    def test_boundary_degree_zero(self, bd1):
        assert bd1.boundary_degree == 0

    def test_agrees_with_base_outside_tubes(self, bd1):
        rng = np.random.default_rng(4)
        x = rng.uniform(-1.5, 1.5, size=(3000, 3))
        x = x[np.linalg.norm(x, axis=1) < 1.9]
        out = ~bd1.spec.tube_contains(x)
        base = rigid_source()
        np.testing.assert_array_equal(bd1.construction.axes(x[out]), base.axes(x[out]))

    def test_separation_violated(self):
        with pytest.raises(CosseratError) as exc:
            thm1_boundary_data(3, 0.05)
        assert err_name(exc) == "SeparationViolated"

    def test_epsilon_too_large(self):
        with pytest.raises(CosseratError) as exc:
            thm1_boundary_data(1, 0.01)
        assert err_name(exc) == "EpsilonTooLarge"
        info = exc.value.to_dict()
        assert info["energy"] >= np.pi
        assert 1e-3 < info["epsilon_max"] < 0.01

    def test_slab_degree_of_construction(self, bd1):
        # the only singularity inside the upper half ball is P+ with degree +-1
        P = (1 - 1e-3) * bd1.spec.xi[0]
        assert abs(probe_degree(bd1.construction, P, 5e-4).degree) == 1
