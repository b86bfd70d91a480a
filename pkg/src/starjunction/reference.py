"""Full-dimensional implicit solver on the epsilon-scaled voxel junction.

Ground truth for the justification studies: implicit Euler in time, the
7-point voxel Laplacian in space, nonlinear Robin data on the lateral
surfaces scaled by the intensity exponents, homogeneous Dirichlet end caps,
and a Newton/conjugate-gradient solve per step.  The variational structure of
the discrete operator preserves monotonicity and the energy estimates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import ConvergenceFailure, pcg
from .mesh import OutletSpec, VoxelJunctionMesh, build_voxel_mesh
from .model import (
    DataFunctions,
    JunctionGeometry,
    NonlinearitySet,
    RegimeParams,
)

__all__ = [
    "ReferenceProblem",
    "TimeSeriesField",
    "build_junction_mesh",
    "operator_pairing",
    "space_time_norm",
    "gradient_norm_sq",
    "region_mask",
    "node_smallness",
]

NEWTON_MAXITER = 50
VOXEL_GUARD = 5_000_000


def build_junction_mesh(geom: JunctionGeometry, epsilon: float,
                        resolution: int) -> VoxelJunctionMesh:
    """Voxelize the epsilon-scaled junction with ``resolution`` cells across
    the thinnest outlet.  All profiles must be constant (straight prisms)."""
    if resolution < 4:
        raise ValueError("resolution must be at least 4 cells across the thin direction")
    if epsilon > 0.25:
        raise ValueError("epsilon must be at most 0.25")
    sides = []
    for i, prof in enumerate(geom.profiles):
        if not prof.is_constant:
            raise ValueError("the 3D reference solver supports constant profiles only")
        sides.append(prof.port_side())
    hv = epsilon * min(sides) / resolution
    outlets = [OutletSpec(axis=i, sign=1, side=epsilon * sides[i],
                          length=geom.lengths[i] - epsilon * geom.ell0)
               for i in range(3)]
    est = sum(round(o.side / hv) ** 2 * round(o.length / hv) for o in outlets)
    est += round(2 * epsilon * geom.ell0 / hv) ** 3
    if est > VOXEL_GUARD:
        raise ValueError(f"mesh of ~{est} voxels exceeds the desk-scale guard")
    return build_voxel_mesh(epsilon * geom.ell0, outlets, hv)


@dataclass
class TimeSeriesField:
    mesh: VoxelJunctionMesh
    times: np.ndarray
    values: np.ndarray  # (levels, n_voxels); level 0 is identically zero

    def level_of(self, t: float) -> int:
        m = int(round((t - self.times[0]) / (self.times[1] - self.times[0])))
        if not (0 <= m < len(self.times)) or abs(self.times[m] - t) > 1e-10 * max(1.0, abs(t)):
            raise ValueError(f"time {t} not on the stored grid")
        return m


class ReferenceProblem:
    """Implicit-Euler evolution of the semilinear problem on a voxel junction."""

    def __init__(self, mesh: VoxelJunctionMesh, geom: JunctionGeometry,
                 data: DataFunctions, nl: NonlinearitySet, regime: RegimeParams,
                 epsilon: float):
        self.mesh = mesh
        self.geom = geom
        self.data = data
        self.nl = nl
        self.regime = regime
        self.epsilon = epsilon
        n_out = len(mesh.outlets)
        self.cap_labels = tuple(("cap", k) for k in range(n_out))
        self.lap = mesh.laplacian(dirichlet_labels=self.cap_labels)
        self.diag_lap = self.lap.diagonal()
        # lateral facets: per label, voxel indices, fast/slow centroid splits
        self._surfaces = []
        eps = epsilon
        g0 = mesh.facets[("node",)]
        self._surfaces.append({
            "voxel": g0["voxel"],
            "scale": eps ** regime.alpha0,
            "data_scale": eps ** regime.beta0,
            "kappa": lambda u, t: nl.kappa0(u),
            "kappa_prime": lambda u, t: nl.kappa0_prime(u),
            "datum": lambda t, c=g0["centroid"]: data.phi0(c / eps, t),
        })
        for k in range(n_out):
            rec = mesh.facets[("lateral", k)]
            axis = mesh.outlets[k].axis
            t_axes = [a for a in range(3) if a != axis]
            xk = rec["centroid"][:, axis]
            xbar = rec["centroid"][:, t_axes]
            self._surfaces.append({
                "voxel": rec["voxel"],
                "scale": eps ** regime.alpha[1 + k],
                "data_scale": eps ** regime.beta[1 + k],
                "kappa": lambda u, t, k=k, xk=xk: nl.kappa[k](u, xk, t),
                "kappa_prime": lambda u, t, k=k, xk=xk: nl.kappa_prime[k](u, xk, t),
                "datum": lambda t, k=k, xb=xbar, xk=xk: data.phi[k](xb / eps, xk, t),
            })

    # -- spatial operator ---------------------------------------------------

    def spatial_residual(self, u: np.ndarray, t: float,
                         with_data: bool = True) -> np.ndarray:
        """PDE-form spatial operator (and data) applied to a state."""
        h = self.mesh.hv
        r = self.lap @ u + self.nl.k(u)
        if with_data:
            r -= self.data.f(self.mesh.centers, t)
        for surf in self._surfaces:
            vox = surf["voxel"]
            term = surf["scale"] * surf["kappa"](u[vox], t)
            if with_data:
                term = term - surf["data_scale"] * np.asarray(surf["datum"](t), dtype=float)
            np.add.at(r, vox, term / h)
        return r

    def _reaction_diag(self, u: np.ndarray, t: float) -> np.ndarray:
        h = self.mesh.hv
        d = self.nl.k_prime(u)
        for surf in self._surfaces:
            vox = surf["voxel"]
            np.add.at(d, vox, surf["scale"] * surf["kappa_prime"](u[vox], t) / h)
        return d

    # -- stepping -----------------------------------------------------------

    def step_implicit(self, state: np.ndarray, t_next: float, dt: float,
                      cg_rtol: float = 1e-12) -> np.ndarray:
        """One implicit Euler step; Newton on the dt-scaled residual."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        n = self.mesh.n_voxels
        tol = 1e-11 * np.sqrt(n)
        u = state.copy()
        for it in range(NEWTON_MAXITER):
            res = u - state + dt * self.spatial_residual(u, t_next)
            if np.linalg.norm(res) <= tol:
                return u
            diag_r = self._reaction_diag(u, t_next)
            diag_full = 1.0 + dt * (self.diag_lap + diag_r)

            def matvec(x, diag_r=diag_r):
                return x + dt * (self.lap @ x + diag_r * x)

            du = pcg(matvec, res, diag_full, rtol=cg_rtol)
            u -= du
        res_norm = float(np.linalg.norm(res))
        raise ConvergenceFailure(
            f"Newton stalled in the reference step at t={t_next:.6g}: "
            f"residual {res_norm:.3e} after {NEWTON_MAXITER} iterations")

    def solve(self, times: np.ndarray) -> TimeSeriesField:
        times = np.asarray(times, dtype=float)
        values = np.zeros((len(times), self.mesh.n_voxels))
        for m in range(1, len(times)):
            values[m] = self.step_implicit(values[m - 1], float(times[m]),
                                           float(times[m] - times[m - 1]))
        return TimeSeriesField(mesh=self.mesh, times=times, values=values)


# ---------------------------------------------------------------------------
# operator diagnostics and norms
# ---------------------------------------------------------------------------


def operator_pairing(problem: ReferenceProblem, u1: np.ndarray, u2: np.ndarray,
                     t: float) -> tuple[float, float]:
    """Pairing of the spatial operator difference against the state difference,
    minus the squared gradient seminorm of the difference.

    Under the monotonicity bounds the first return value is nonnegative up to
    roundoff; the second is the seminorm itself (for scaling).
    """
    if u1.shape != u2.shape or u1.shape[0] != problem.mesh.n_voxels:
        raise ValueError("states must live on the problem mesh")
    d = u1 - u2
    vol = problem.mesh.voxel_volume
    a1 = problem.spatial_residual(u1, t, with_data=False)
    a2 = problem.spatial_residual(u2, t, with_data=False)
    pairing = float((a1 - a2) @ d) * vol
    grad = problem.mesh.gradient_sq(d, dirichlet_labels=problem.cap_labels)
    return pairing - grad, grad


def region_mask(mesh: VoxelJunctionMesh, region, geom: JunctionGeometry | None = None,
                epsilon: float | None = None, cutoff_exponent: float | None = None
                ) -> np.ndarray:
    """Boolean voxel mask: "all", "node" (the box), ("edge", i) for the voxels
    of outlet i beyond the blending distance, or "node_nbhd" (all coordinates
    below twice the node radius)."""
    if region == "all":
        return np.ones(mesh.n_voxels, dtype=bool)
    if region == "node":
        return mesh.region_of == -1
    if region == "node_nbhd":
        lim = 2.0 * mesh.box_half
        return np.all(mesh.centers < lim, axis=1)
    if isinstance(region, tuple) and region[0] == "edge":
        k = region[1]
        if geom is None or epsilon is None or cutoff_exponent is None:
            raise ValueError("edge regions need geometry, epsilon and the cutoff exponent")
        xmin = 3.0 * geom.ell0 * epsilon ** cutoff_exponent
        mask = mesh.region_of == k
        mask &= np.where(np.isnan(mesh.axial), -np.inf, mesh.axial) > xmin
        if not np.any(mask):
            raise ValueError(f"edge region {k} empty at this epsilon")
        return mask
    raise ValueError(f"unknown region {region!r}")


def gradient_norm_sq(mesh: VoxelJunctionMesh, u: np.ndarray,
                     mask: np.ndarray | None = None) -> float:
    """Squared L2 norm of the interior-face gradient, optionally restricted."""
    ip = mesh.interior_pairs
    d = u[ip[:, 0]] - u[ip[:, 1]]
    if mask is not None:
        keep = mask[ip[:, 0]] & mask[ip[:, 1]]
        d = d[keep]
    return float(d @ d) * mesh.hv


def space_time_norm(series: TimeSeriesField, kind: str, region="all",
                    geom: JunctionGeometry | None = None,
                    epsilon: float | None = None,
                    cutoff_exponent: float | None = None) -> float:
    """Space-time norms used by the error estimates.

    ``kind``: "L2_in_space_max_in_time", "L2_time_H1_space" or
    "L2_time_gradient".  Midpoint quadrature in space, trapezoid in time.
    """
    mesh = series.mesh
    mask = region_mask(mesh, region, geom, epsilon, cutoff_exponent)
    vol = mesh.voxel_volume
    times = series.times
    if kind == "L2_in_space_max_in_time":
        best = 0.0
        for level in series.values:
            v = level[mask]
            best = max(best, float(v @ v) * vol)
        return float(np.sqrt(best))
    if kind not in ("L2_time_H1_space", "L2_time_gradient"):
        raise ValueError(f"unknown norm kind {kind!r}")
    sq = np.empty(len(times))
    for m, level in enumerate(series.values):
        g = gradient_norm_sq(mesh, level, mask)
        if kind == "L2_time_H1_space":
            v = level[mask]
            g += float(v @ v) * vol
        sq[m] = g
    return float(np.sqrt(np.trapezoid(sq, times)))


def node_smallness(series: TimeSeriesField, epsilon: float) -> float:
    """Scaled space-time mass of the solution inside the node box:
    eps^-3 * integral over (0,T) x node of u^2."""
    mesh = series.mesh
    mask = mesh.region_of == -1
    vol = mesh.voxel_volume
    sq = np.array([float(level[mask] @ level[mask]) * vol for level in series.values])
    return float(np.trapezoid(sq, series.times)) / epsilon ** 3
