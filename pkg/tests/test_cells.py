from __future__ import annotations

import numpy as np
import pytest

from starjunction import cells, model
from starjunction.linalg import ConvergenceFailure


def spec_for(geom, radius=8.0, hv=1.0 / 16.0, axes=cells.DEFAULT_OUTLET_AXES):
    return cells.InnerDomainSpec(geometry=geom, radius=radius, hv=hv,
                                 outlet_axes=axes)


def pipe_spec(radius=12.0, hv=0.125):
    geom = model.JunctionGeometry(
        ell0=0.25, lengths=(1.0, 1.0, 1.0),
        profiles=tuple(model.constant_profile("square", 0.5) for _ in range(3)))
    return spec_for(geom, radius=radius, hv=hv, axes=((0, 1), (0, -1)))


class TestInnerCutoff:
    def test_plateaus_and_midpoint(self):
        ell0 = 0.25
        assert cells.inner_cutoff(ell0, 1.0 + ell0) == 0.0
        assert cells.inner_cutoff(ell0, 2.0 + ell0) == 1.0
        assert cells.inner_cutoff(ell0, 1.5 + ell0) == pytest.approx(0.5, abs=1e-15)

    def test_monotone_with_two_derivatives(self):
        ell0 = 0.3
        xi = np.linspace(0.0, 4.0, 800)
        vals = cells.inner_cutoff(ell0, xi)
        assert np.all(np.diff(vals) >= -1e-15)
        d1 = cells.inner_cutoff_d1(ell0, xi)
        d2 = cells.inner_cutoff_d2(ell0, xi)
        h = xi[1] - xi[0]
        assert np.max(np.abs((vals[2:] - vals[:-2]) / (2 * h) - d1[1:-1])) < 1e-3
        # avoid the ramp endpoints where the third derivative jumps
        inner = (xi[1:-1] > 1.0 + ell0 + 2 * h) & (xi[1:-1] < 2.0 + ell0 - 2 * h)
        err2 = np.abs((d1[2:] - d1[:-2]) / (2 * h) - d2[1:-1])
        assert np.max(err2[inner]) < 1e-2

    def test_ramp_derivative_integrates_to_one(self):
        ell0 = 0.25
        xi = np.linspace(ell0, ell0 + 3.0, 20001)
        total = np.trapezoid(cells.inner_cutoff_d1(ell0, xi), xi)
        assert total == pytest.approx(1.0, abs=1e-9)


class TestInnerMesh:
    def test_truncation_radius_floor(self, square_geom):
        with pytest.raises(ValueError, match="ell0"):
            cells.InnerDomainSpec(geometry=square_geom, radius=2.0, hv=0.25)

    def test_boundary_measures_closed_form(self):
        geom = model.JunctionGeometry(
            ell0=0.25, lengths=(1.0, 1.0, 1.0),
            profiles=tuple(model.constant_profile("square", 0.4) for _ in range(3)))
        gamma0, vol = cells.boundary_measures(spec_for(geom, hv=0.05))
        assert vol == pytest.approx(0.125, abs=1e-15)
        assert gamma0 == pytest.approx(1.5 - 0.48, abs=1e-13)

    def test_voxel_sum_equals_closed_form(self, asym_geom):
        mesh = cells.build_inner_mesh(spec_for(asym_geom, hv=0.125))
        gamma0, _ = cells.boundary_measures(mesh)
        assert mesh.facet_area(("node",)) == pytest.approx(gamma0, rel=1e-13)

    def test_degenerate_pipe_is_prism(self):
        mesh = cells.build_inner_mesh(pipe_spec())
        xs = mesh.centers[:, 0]
        assert xs.min() == pytest.approx(-12.0 + mesh.hv / 2)
        assert xs.max() == pytest.approx(12.0 - mesh.hv / 2)
        # uniform cross-section everywhere: voxel count = slices * 16
        assert mesh.n_voxels == 16 * round(24.0 / mesh.hv)

    def test_misaligned_square_port_rejected(self):
        geom = model.JunctionGeometry(
            ell0=0.25, lengths=(1.0, 1.0, 1.0),
            profiles=tuple(model.constant_profile("square", 0.3) for _ in range(3)))
        with pytest.raises(ValueError, match="align"):
            cells.build_inner_mesh(spec_for(geom, hv=0.125))

    def test_circular_profile_snaps_to_equal_area_square(self, square_geom):
        geom = model.JunctionGeometry(
            ell0=0.25, lengths=(1.0, 1.0, 1.0),
            profiles=tuple(model.constant_profile("circular", 0.14) for _ in range(3)))
        mesh = cells.build_inner_mesh(spec_for(geom, hv=1.0 / 16.0))
        target = np.sqrt(np.pi) * 0.14
        for outlet in mesh.outlets:
            assert abs(outlet.side - target) <= mesh.hv


class TestSpecialNeumann:
    def test_compatibility_exact(self, asym_geom):
        mesh = cells.build_inner_mesh(spec_for(asym_geom, hv=0.125))
        fld, _ = cells.solve_special_neumann(mesh, 1)
        assert abs(fld.compatibility_residual) <= 1e-12

    def test_pipe_exact_linear_solution(self):
        mesh = cells.build_inner_mesh(pipe_spec())
        fld, rep = cells.solve_special_neumann(mesh, 1)
        assert np.max(np.abs(rep.constant)) <= 1e-6
        area = mesh.outlets[0].side ** 2
        exact = -mesh.centers[:, 0] / area
        assert np.ptp(fld.values - exact) < 1e-9
        assert np.allclose(rep.fitted_slope, rep.prescribed_slope, atol=1e-9)

    def test_swap_symmetry_of_cross_constants(self, square_geom):
        # geometry symmetric under exchanging outlets 2 and 3
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        _, rep2 = cells.solve_special_neumann(mesh, 1)
        _, rep3 = cells.solve_special_neumann(mesh, 2)
        assert rep2.constant[2] == pytest.approx(rep3.constant[1], abs=1e-10)

    def test_reference_outlet_rejected(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        with pytest.raises(ValueError):
            cells.solve_special_neumann(mesh, 0)

    def test_decay_rates_positive(self, asym_geom):
        mesh = cells.build_inner_mesh(spec_for(asym_geom, hv=0.125))
        for j in (1, 2):
            _, rep = cells.solve_special_neumann(mesh, j)
            assert np.all(rep.decay_rate > 0.0)


class TestSpecialRobin:
    def test_absorption_suppresses_node_trace(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        mags = []
        vox = mesh.facets[("node",)]["voxel"]
        for coef in (1.0, 10.0, 100.0):
            fld, _ = cells.solve_special_robin(mesh, coef, 0)
            mags.append(float(np.max(np.abs(fld.values[vox]))))
        assert mags[0] > mags[1] > mags[2]

    def test_flux_balance(self, asym_geom):
        mesh = cells.build_inner_mesh(spec_for(asym_geom, hv=0.125))
        fld, _ = cells.solve_special_robin(mesh, 2.0, 1)
        assert abs(fld.flux_balance_residual()) <= 1e-10

    def test_swap_symmetry(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        _, rep2 = cells.solve_special_robin(mesh, 3.0, 1)
        _, rep3 = cells.solve_special_robin(mesh, 3.0, 2)
        assert rep2.constant[1] == pytest.approx(rep3.constant[2], abs=1e-10)

    def test_nonpositive_coefficient_rejected(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        with pytest.raises(ValueError):
            cells.solve_special_robin(mesh, 0.0, 0)


class TestInnerCorrection:
    def test_zero_drive(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        fld, rep = cells.solve_inner_correction(mesh, cells.InnerDrive(slopes=(0, 0, 0)))
        assert np.max(np.abs(fld.values)) == 0.0
        assert np.max(np.abs(rep.constant)) == 0.0

    def test_unbalanced_slopes_rejected(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        with pytest.raises(ConvergenceFailure, match="not solvable"):
            cells.solve_inner_correction(mesh, cells.InnerDrive(slopes=(1.0, 0.0, 0.0)))

    def test_balanced_slopes_accepted(self, asym_geom):
        mesh = cells.build_inner_mesh(spec_for(asym_geom, hv=0.125))
        areas = np.array([o.side ** 2 for o in mesh.outlets])
        g = np.array([1.0, -0.2, 0.0])
        g[2] = -(areas[:2] @ g[:2]) / areas[2]
        fld, rep = cells.solve_inner_correction(mesh, cells.InnerDrive(slopes=tuple(g)))
        assert abs(fld.compatibility_residual) <= 1e-12
        assert rep.constant[0] == 0.0
        assert rep.constant[1] != 0.0

    def test_pipe_with_opposite_slopes_is_exactly_matched(self):
        # ramps with equal-and-opposite slopes reproduce a globally linear field
        mesh = cells.build_inner_mesh(pipe_spec())
        g = 0.8
        fld, rep = cells.solve_inner_correction(mesh, cells.InnerDrive(slopes=(g, -g)))
        assert np.max(np.abs(rep.constant)) < 1e-9
        assert abs(fld.gamma0_integral) < 1e-9
        # reconstructed field (ramps + decaying part) is g * x1 at the centers
        xi1 = np.abs(mesh.centers[:, 0])
        ramp = g * np.sign(mesh.centers[:, 0]) * xi1 * cells.inner_cutoff(0.25, xi1)
        total = ramp + fld.values
        exact = g * mesh.centers[:, 0]
        assert np.ptp(total - exact) < 1e-9

    def test_linearity_in_drive(self, asym_geom):
        mesh = cells.build_inner_mesh(spec_for(asym_geom, hv=0.125))
        areas = np.array([o.side ** 2 for o in mesh.outlets])
        g = np.array([1.0, 1.0, 0.0])
        g[2] = -(areas[:2] @ g[:2]) / areas[2]
        f1, _ = cells.solve_inner_correction(mesh, cells.InnerDrive(slopes=tuple(g)))
        f2, _ = cells.solve_inner_correction(mesh, cells.InnerDrive(slopes=tuple(2 * g)))
        assert np.max(np.abs(f2.values - 2 * f1.values)) < 1e-9

    def test_robin_variant_unique_without_balance(self, square_geom):
        # the Robin absorption removes the compatibility requirement
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        fld, rep = cells.solve_inner_correction(
            mesh, cells.InnerDrive(slopes=(1.0, 0.0, 0.0)), robin_coef=1.5)
        assert abs(fld.flux_balance_residual()) < 1e-10
        assert np.all(rep.decay_rate > 0.0)


class TestGreenRoute:
    def test_zero_sources(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        n2, _ = cells.solve_special_neumann(mesh, 1)
        src = np.zeros(mesh.n_voxels)
        bdata = np.zeros(mesh.facets[("node",)]["voxel"].size)
        out = cells.compute_jumps_green(mesh, [n2.values], src, bdata)
        assert out[0] == 0.0

    def test_unit_node_datum_reduces_to_surface_sum(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        n2, _ = cells.solve_special_neumann(mesh, 1)
        src = np.zeros(mesh.n_voxels)
        rec = mesh.facets[("node",)]
        bdata = np.ones(rec["voxel"].size)
        out = cells.compute_jumps_green(mesh, [n2.values], src, bdata)
        direct = float(np.sum(n2.values[rec["voxel"]])) * mesh.hv ** 2
        assert out[0] == pytest.approx(direct, rel=1e-14)

    def test_agrees_with_far_field_extraction(self, asym_geom):
        mesh = cells.build_inner_mesh(spec_for(asym_geom, hv=0.125))
        areas = np.array([o.side ** 2 for o in mesh.outlets])
        g = np.array([1.0, -0.2, 0.0])
        g[2] = -(areas[:2] @ g[:2]) / areas[2]
        drive = cells.InnerDrive(slopes=tuple(g))
        _, rep = cells.solve_inner_correction(mesh, drive)
        n2, _ = cells.solve_special_neumann(mesh, 1)
        n3, _ = cells.solve_special_neumann(mesh, 2)
        src, bdata = cells.inner_rhs_arrays(mesh, drive)
        green = cells.compute_jumps_green(mesh, [n2.values, n3.values], src, bdata)
        assert green[0] == pytest.approx(rep.constant[1], rel=1e-8)
        assert green[1] == pytest.approx(rep.constant[2], rel=1e-8)

    def test_mesh_mismatch_rejected(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        with pytest.raises(ValueError, match="different mesh"):
            cells.compute_jumps_green(mesh, [np.zeros(3)], np.zeros(mesh.n_voxels),
                                      np.zeros(4))


class TestInterpolator:
    def test_reproduces_linear_fields(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        interp = cells.CellInterpolator(mesh)
        coeffs = np.array([0.7, -1.3, 0.4])
        values = mesh.centers @ coeffs + 2.0
        rng = np.random.default_rng(2)
        node = mesh.centers[mesh.region_of == -1]
        inner = node[np.all(np.abs(node) < 0.25 - mesh.hv, axis=1)]
        pts = inner + rng.uniform(-0.45, 0.45, inner.shape) * mesh.hv
        got = interp(values, pts)
        assert np.max(np.abs(got - (pts @ coeffs + 2.0))) < 1e-12

    def test_outside_rejected(self, square_geom):
        mesh = cells.build_inner_mesh(spec_for(square_geom, hv=0.125))
        interp = cells.CellInterpolator(mesh)
        with pytest.raises(ValueError, match="outside"):
            interp(np.zeros(mesh.n_voxels), np.array([[50.0, 50.0, 50.0]]))
