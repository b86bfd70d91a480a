from __future__ import annotations

import numpy as np
import pytest

from starjunction import model, reference

from conftest import make_data


def build_problem(geom, data, nl, regime, eps=0.1, res=4):
    mesh = reference.build_junction_mesh(geom, eps, res)
    return reference.ReferenceProblem(mesh, geom, data, nl, regime, eps), mesh


class TestJunctionMesh:
    def test_cross_section_resolution(self, square_geom):
        mesh = reference.build_junction_mesh(square_geom, 0.1, 4)
        na, m = mesh.outlet_cell_count(0)
        assert m == 4
        assert mesh.hv == pytest.approx(0.1 * 0.25 / 4)

    def test_surface_and_volume_scaling(self, asym_geom):
        eps = 0.1
        mesh = reference.build_junction_mesh(asym_geom, eps, 4)
        gamma0, vol = model.node_measures(asym_geom)
        assert mesh.facet_area(("node",)) == pytest.approx(eps ** 2 * gamma0, rel=1e-12)
        node_vol = float(np.sum(mesh.region_of == -1)) * mesh.voxel_volume
        assert node_vol == pytest.approx(eps ** 3 * vol, rel=1e-12)

    def test_guards(self, square_geom):
        with pytest.raises(ValueError, match="resolution"):
            reference.build_junction_mesh(square_geom, 0.1, 3)
        with pytest.raises(ValueError, match="epsilon"):
            reference.build_junction_mesh(square_geom, 0.3, 4)
        with pytest.raises(ValueError, match="guard"):
            reference.build_junction_mesh(square_geom, 0.25, 64)

    def test_variable_profile_rejected(self):
        geom = model.JunctionGeometry(
            ell0=0.25, lengths=(1.0, 1.0, 1.0),
            profiles=tuple(model.bump_profile("square", 0.25, 0.1, 0.5, 0.2)
                           for _ in range(3)))
        with pytest.raises(ValueError, match="constant profiles"):
            reference.build_junction_mesh(geom, 0.1, 4)


class TestStepImplicit:
    def test_zero_data_stays_zero(self, square_geom):
        nl = model.nonlinearity_from_scalars(
            model.k_michaelis_menten(1.0, 1.0), model.k_michaelis_menten(1.0, 0.5),
            model.k_michaelis_menten(0.5, 1.0), k_plus=1.0)
        regime = model.classify_regime([0.5, 1, 1, 1], [1, 1, 1, 1])
        prob, mesh = build_problem(square_geom, make_data(), nl, regime)
        u = prob.step_implicit(np.zeros(mesh.n_voxels), 0.1, 0.05)
        assert np.max(np.abs(u)) == 0.0

    def test_invalid_dt(self, square_geom, cosine_nl):
        regime = model.classify_regime([0.5, 1, 1, 1], [1, 1, 1, 1])
        prob, mesh = build_problem(square_geom, make_data(), cosine_nl, regime)
        with pytest.raises(ValueError):
            prob.step_implicit(np.zeros(mesh.n_voxels), 0.1, 0.0)

    def test_energy_decay_with_vanishing_nonlinearities(self, square_geom):
        nl = model.nonlinearity_from_scalars(
            model.k_michaelis_menten(1.0, 1.0), model.k_michaelis_menten(1.0, 0.5),
            model.k_michaelis_menten(0.5, 1.0), k_plus=1.0)
        regime = model.classify_regime([0.5, 1, 1, 1], [1, 1, 1, 1])
        prob, mesh = build_problem(square_geom, make_data(), nl, regime)
        u = np.exp(-200.0 * np.sum(mesh.centers ** 2, axis=1))
        norms = [np.linalg.norm(u)]
        for m in range(5):
            u = prob.step_implicit(u, 0.05 * (m + 1), 0.02)
            norms.append(np.linalg.norm(u))
        assert all(a >= b for a, b in zip(norms, norms[1:]))

    def test_contraction_between_trajectories(self, square_geom, cosine_nl):
        regime = model.classify_regime([0.5, 1, 1, 1], [1, 1, 1, 1])
        data = make_data(f=lambda p, t: np.full(np.shape(p)[:-1], 1.0 + t))
        prob, mesh = build_problem(square_geom, data, cosine_nl, regime)
        rng = np.random.default_rng(0)
        u = rng.uniform(-0.3, 0.3, mesh.n_voxels)
        w = rng.uniform(-0.3, 0.3, mesh.n_voxels)
        gap = [np.linalg.norm(u - w)]
        for m in range(4):
            u = prob.step_implicit(u, 0.05 * (m + 1), 0.02)
            w = prob.step_implicit(w, 0.05 * (m + 1), 0.02)
            gap.append(np.linalg.norm(u - w))
        assert all(a >= b for a, b in zip(gap, gap[1:]))


class TestManufacturedConvergence:
    """Manufactured solution linear in time with curvature along one axis.

    All lateral Neumann data are back-substituted exactly at the facet
    centroids and implicit Euler is exact on the linear time profile, so the
    measured error isolates the spatial discretization.
    """

    C = 0.8

    def u_star(self, p, t, lengths):
        prod = np.prod([lengths[i] - p[..., i] for i in range(3)], axis=0)
        return self.C * t * (1.0 + 4.0 * p[..., 0] ** 2) * prod

    def grad_u_star(self, p, t, lengths):
        factors = [lengths[i] - p[..., i] for i in range(3)]
        g = 1.0 + 4.0 * p[..., 0] ** 2
        out = np.empty(p.shape)
        out[..., 0] = self.C * t * factors[1] * factors[2] * \
            (8.0 * p[..., 0] * factors[0] - g)
        out[..., 1] = -self.C * t * g * factors[0] * factors[2]
        out[..., 2] = -self.C * t * g * factors[0] * factors[1]
        return out

    def lap_u_star(self, p, t, lengths):
        factors = [lengths[i] - p[..., i] for i in range(3)]
        return self.C * t * factors[1] * factors[2] * \
            (8.0 * factors[0] - 16.0 * p[..., 0])

    def _wall_datum(self, pts, wall_coord, wall_value, t, lengths):
        """Outward normal derivative where one coordinate sits on a +-wall."""
        grad = self.grad_u_star(pts, t, lengths)
        out = np.zeros(pts.shape[0])
        for j in range(3):
            on_wall = np.isclose(wall_coord[:, j], wall_value) | \
                np.isclose(wall_coord[:, j], -wall_value)
            sign = np.sign(wall_coord[:, j])
            out = np.where(on_wall, sign * grad[:, j], out)
        return out

    def make_setup(self, square_geom, eps):
        lengths = square_geom.lengths
        kv, kp, kpp, kplus = model.k_cosine(1.0)
        nl = model.nonlinearity_from_scalars((kv, kp, kpp), model.k_linear(0.0),
                                             model.k_linear(0.0), k_plus=kplus)
        regime = model.classify_regime([1.0, 1, 1, 1], [1, 1, 1, 1])

        def f(p, t):
            u = self.u_star(p, t, lengths)
            return u / max(t, 1e-300) - self.lap_u_star(p, t, lengths) + kv(u)

        def phi0(xi, t):
            xi = np.asarray(xi)
            return self._wall_datum(xi * eps, xi, 0.25, t, lengths) / eps

        def phi_edge(k):
            t_axes = [a for a in range(3) if a != k]

            def fn(xb, x, t, k=k, t_axes=t_axes):
                xb = np.asarray(xb)
                pts = np.zeros((xb.shape[0], 3))
                pts[:, k] = np.asarray(x)
                pts[:, t_axes[0]] = xb[:, 0] * eps
                pts[:, t_axes[1]] = xb[:, 1] * eps
                wall = np.zeros((xb.shape[0], 3))
                wall[:, t_axes[0]] = xb[:, 0]
                wall[:, t_axes[1]] = xb[:, 1]
                return self._wall_datum(pts, wall, 0.125, t, lengths) / eps

            return fn

        data = model.DataFunctions(f=f, phi0=phi0,
                                   phi=tuple(phi_edge(k) for k in range(3)), T=0.2)
        return nl, regime, data

    def test_spatial_order_two(self, square_geom):
        eps = 0.1
        errs = []
        for res in (4, 8):
            nl, regime, data = self.make_setup(square_geom, eps)
            mesh = reference.build_junction_mesh(square_geom, eps, res)
            prob = reference.ReferenceProblem(mesh, square_geom, data, nl, regime, eps)
            series = prob.solve(np.linspace(0.0, 0.2, 5))
            exact = self.u_star(mesh.centers, 0.2, square_geom.lengths)
            err = np.sqrt(np.sum((series.values[-1] - exact) ** 2)
                          * mesh.voxel_volume)
            errs.append(err)
        order = np.log2(errs[0] / errs[1])
        assert order >= 1.8, (errs, order)

    def test_temporal_order_one(self, square_geom, cosine_nl):
        eps = 0.1
        regime = model.classify_regime([0.5, 1, 1, 1], [1, 1, 1, 1])
        data = make_data(f=lambda p, t: np.sin(3 * t) * (1 + p[..., 0]), T=0.4)
        mesh = reference.build_junction_mesh(square_geom, eps, 4)
        prob = reference.ReferenceProblem(mesh, square_geom, data, cosine_nl,
                                          regime, eps)
        ref = prob.solve(np.linspace(0, 0.4, 257)).values[-1]
        errs = []
        for steps in (16, 32):
            got = prob.solve(np.linspace(0, 0.4, steps + 1)).values[-1]
            errs.append(np.sqrt(np.sum((got - ref) ** 2) * mesh.voxel_volume))
        order = np.log2(errs[0] / errs[1])
        assert order >= 0.8, (errs, order)


class TestOperatorPairing:
    def test_identical_states(self, square_geom, cosine_nl):
        regime = model.classify_regime([0.0, 1, 1, 1], [0, 1, 1, 1])
        prob, mesh = build_problem(square_geom, make_data(), cosine_nl, regime)
        u = np.sin(mesh.centers[:, 0] * 5.0)
        diff, grad = reference.operator_pairing(prob, u, u, 0.1)
        assert diff == 0.0 and grad == 0.0

    def test_linear_reaction_gives_l2_norm(self, square_geom):
        nl = model.nonlinearity_from_scalars(
            model.k_linear(1.0), model.k_linear(0.0), model.k_linear(0.0), k_plus=1.0)
        regime = model.classify_regime([2.0, 2, 2, 2], [1, 1, 1, 1])
        prob, mesh = build_problem(square_geom, make_data(), nl, regime)
        rng = np.random.default_rng(1)
        u1 = rng.standard_normal(mesh.n_voxels)
        u2 = rng.standard_normal(mesh.n_voxels)
        diff, _ = reference.operator_pairing(prob, u1, u2, 0.1)
        d = u1 - u2
        expected = float(d @ d) * mesh.voxel_volume
        # the kappa terms carry eps^2 scalings; they only add nonnegative mass
        assert diff >= expected - 1e-12
        assert diff == pytest.approx(expected, rel=1e-3)

    def test_random_pairs_nonnegative(self, square_geom):
        nl = model.nonlinearity_from_scalars(
            model.k_michaelis_menten(1.0, 1.0), model.k_michaelis_menten(1.0, 0.5),
            model.k_michaelis_menten(0.5, 1.0), k_plus=1.0)
        regime = model.classify_regime([0.0, 1, 1, 1], [0, 1, 1, 1])
        prob, mesh = build_problem(square_geom, make_data(), nl, regime)
        rng = np.random.default_rng(42)
        for _ in range(25):
            u1 = rng.standard_normal(mesh.n_voxels)
            u2 = rng.standard_normal(mesh.n_voxels)
            diff, grad = reference.operator_pairing(prob, u1, u2, 0.1)
            assert diff >= -1e-10 * max(1.0, grad)


class TestNorms:
    def test_indicator_of_one_outlet(self, square_geom):
        eps = 0.1
        mesh = reference.build_junction_mesh(square_geom, eps, 4)
        u = np.where(mesh.region_of == 0, 1.0, 0.0)
        series = reference.TimeSeriesField(mesh, np.array([0.0, 1.0]),
                                           np.vstack([u, u]))
        got = reference.space_time_norm(series, "L2_in_space_max_in_time")
        length = 1.0 - eps * 0.25
        expected = np.sqrt(eps ** 2 * 0.25 ** 2 * length)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_zero_field(self, square_geom):
        mesh = reference.build_junction_mesh(square_geom, 0.1, 4)
        series = reference.TimeSeriesField(mesh, np.array([0.0, 1.0]),
                                           np.zeros((2, mesh.n_voxels)))
        for kind in ("L2_in_space_max_in_time", "L2_time_H1_space",
                     "L2_time_gradient"):
            assert reference.space_time_norm(series, kind) == 0.0

    def test_gradient_of_linear_profile(self, square_geom):
        mesh = reference.build_junction_mesh(square_geom, 0.1, 4)
        a = 1.7
        u = a * mesh.centers[:, 0]
        got = reference.gradient_norm_sq(mesh, u)
        # face-count quadrature of a^2 over the domain (faces only interior)
        ip = mesh.interior_pairs
        along_x = np.abs(mesh.centers[ip[:, 0], 0] - mesh.centers[ip[:, 1], 0]) > 1e-12
        expected = a ** 2 * np.count_nonzero(along_x) * mesh.voxel_volume
        assert got == pytest.approx(expected, rel=1e-12)

    def test_empty_edge_region_rejected(self, square_geom):
        # a blending distance beyond the edge length leaves nothing to measure
        mesh = reference.build_junction_mesh(square_geom, 0.1, 4)
        with pytest.raises(ValueError, match="empty"):
            reference.region_mask(mesh, ("edge", 0), square_geom, 0.1, -5.0)

    def test_node_smallness_zero_solution(self, square_geom):
        mesh = reference.build_junction_mesh(square_geom, 0.1, 4)
        series = reference.TimeSeriesField(mesh, np.linspace(0, 1, 3),
                                           np.zeros((3, mesh.n_voxels)))
        assert reference.node_smallness(series, 0.1) == 0.0
