"""Finite-volume solvers for the limit and corrector problems on the star graph.

All solvers share one implicit-Euler engine: cell-centered finite volumes with
harmonic-mean face coefficients for the area weight, second-order three-point
fluxes at faces carrying a boundary or vertex value, and a full-step Newton
iteration per time level.  In regime A the three edges couple through a shared
vertex unknown plus a flux-balance row, which makes the Kirchhoff condition an
algebraic constraint satisfied to the Newton tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .linalg import ConvergenceFailure
from .model import (
    DataFunctions,
    EdgeGrid,
    JunctionGeometry,
    NonlinearitySet,
    RegimeParams,
    REGIME_A,
    REGIME_B,
    REGIME_C,
    exponents_equal,
    node_measures,
)

__all__ = [
    "EdgeField",
    "GraphSolution",
    "CouplingConstants",
    "ORDER_0",
    "ORDER_1",
    "ORDER_MA0",
    "ORDER_M2A0",
    "ORDER_1PA0",
    "ORDER_1MA0",
    "order_exponent",
    "order_set_b",
    "expansion_interaction_term",
    "assemble_edge_source",
    "perimeter_integral",
    "node_flux_series",
    "solve_limit_problem",
    "solve_corrector_kirchhoff",
    "solve_corrector_dirichlet",
    "solve_expansion_term",
    "vertex_flux_residual",
    "corrector_flux_constant",
    "vertex_layer_values",
    "graph_operator_pairing",
    "graph_h1_seminorm_sq",
    "vertex_slope",
    "edge_profile_at",
]

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50

# expansion order tags
ORDER_0 = "0"
ORDER_1 = "1"
ORDER_MA0 = "-alpha0"
ORDER_M2A0 = "-2alpha0"
ORDER_1PA0 = "1+alpha0"
ORDER_1MA0 = "1-alpha0"

_B_ORDERS = (ORDER_0, ORDER_MA0, ORDER_M2A0, ORDER_1PA0, ORDER_1, ORDER_1MA0)


def order_exponent(order: str, alpha0: float) -> float:
    table = {
        ORDER_0: 0.0,
        ORDER_1: 1.0,
        ORDER_MA0: -alpha0,
        ORDER_M2A0: -2.0 * alpha0,
        ORDER_1PA0: 1.0 + alpha0,
        ORDER_1MA0: 1.0 - alpha0,
    }
    try:
        return table[order]
    except KeyError:
        raise ValueError(f"unknown expansion order {order!r}") from None


def order_set_b() -> tuple[str, ...]:
    """Order tags of the regular expansion in the fractional regime."""
    return _B_ORDERS


def _order_name_for(value: float, alpha0: float) -> str | None:
    for name in _B_ORDERS:
        if exponents_equal(order_exponent(name, alpha0), value):
            return name
    return None


def expansion_interaction_term(order: str, z: dict, alpha0: float = -0.5):
    """Quadratic interaction of lower-order terms feeding order ``order``.

    Missing entries of ``z`` count as zero (terms whose index falls outside
    the expansion vanish).  Values may be scalars or arrays.
    """
    if order not in _B_ORDERS:
        raise ValueError(f"order {order!r} is not in the expansion set")

    def get(name):
        return z.get(name, 0.0)

    if order in (ORDER_0, ORDER_MA0, ORDER_1PA0):
        ref = get(ORDER_MA0)
        return np.zeros_like(np.asarray(ref, dtype=float)) if np.ndim(ref) else 0.0
    if order == ORDER_1:
        return get(ORDER_1PA0) * get(ORDER_MA0)
    if order == ORDER_M2A0:
        return 0.5 * get(ORDER_MA0) ** 2
    # order == ORDER_1MA0
    return get(ORDER_1) * get(ORDER_MA0) + get(ORDER_1PA0) * get(ORDER_M2A0)


# ---------------------------------------------------------------------------
# solution containers
# ---------------------------------------------------------------------------


@dataclass
class EdgeField:
    edge_index: int
    grid: EdgeGrid
    values: np.ndarray  # (levels, n_cells)


@dataclass
class GraphSolution:
    """One expansion term on the graph: three edge fields plus vertex traces."""

    order: str
    fields: list[EdgeField]
    times: np.ndarray
    vertex_values: np.ndarray     # (levels, 3) trace at x=0 per edge
    vertex_fluxes: np.ndarray     # (levels, 3) A_i(0) * d/dx at x=0, three-point
    vertex_residuals: np.ndarray | None = None  # (levels,) flux-balance residual

    def vertex_slopes(self, areas0: Sequence[float]) -> np.ndarray:
        return self.vertex_fluxes / np.asarray(areas0)[None, :]

    def level_of(self, t: float) -> int:
        m = int(round((t - self.times[0]) / (self.times[1] - self.times[0])))
        if not (0 <= m < len(self.times)) or abs(self.times[m] - t) > 1e-10 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the solution grid")
        return m


@dataclass
class CouplingConstants:
    """Vertex coupling data shared by the corrector problems.

    ``jumps[(order, i)]`` and ``layer_values[order]`` are time series on the
    same grid as the graph solutions; ``node_flux`` is the order-zero data
    integral and ``corrector_flux`` the printed flux constant of the first
    corrector (without its implicit vertex contribution).
    """

    gamma0_measure: float
    node_volume: float
    times: np.ndarray
    jumps: dict = field(default_factory=dict)
    layer_values: dict = field(default_factory=dict)
    node_flux: np.ndarray | None = None
    corrector_flux: np.ndarray | None = None

    _ZERO_JUMP_ORDERS = (ORDER_1PA0, ORDER_MA0, ORDER_M2A0)

    def jump_series(self, order: str, i: int) -> np.ndarray:
        series = self.jumps.get((order, i))
        if series is None:
            return np.zeros(len(self.times))
        return series

    def validate(self) -> None:
        for (order, i), series in self.jumps.items():
            if order in self._ZERO_JUMP_ORDERS and np.any(series != 0.0):
                raise ValueError(f"transmission jump of order {order} must vanish (edge {i})")


# ---------------------------------------------------------------------------
# sources and quadratures
# ---------------------------------------------------------------------------


def perimeter_contour(geom: JunctionGeometry, i: int, x: float, n: int = 64):
    """Sample points (n, 2) and weights on the cross-section contour at x."""
    prof = geom.profiles[i]
    if prof.kind == "circular":
        h = prof.size(x)
        theta = 2.0 * math.pi * (np.arange(n) + 0.5) / n
        pts = h * np.column_stack([np.cos(theta), np.sin(theta)])
        w = np.full(n, 2.0 * math.pi * h / n)
        return pts, w
    s = prof.size(x)
    per_side = max(1, n // 4)
    u = s * ((np.arange(per_side) + 0.5) / per_side - 0.5)
    half = 0.5 * s
    pts = np.vstack([
        np.column_stack([u, np.full(per_side, -half)]),
        np.column_stack([np.full(per_side, half), u]),
        np.column_stack([u[::-1], np.full(per_side, half)]),
        np.column_stack([np.full(per_side, -half), u[::-1]]),
    ])
    w = np.full(4 * per_side, s / per_side)
    return pts, w


def perimeter_integral(geom: JunctionGeometry, data_fn, i: int, x: float, t: float,
                       n: int = 64) -> float:
    """Contour integral of an edge datum over the cross-section boundary at x."""
    pts, w = perimeter_contour(geom, i, x, n)
    return float(np.asarray(data_fn(pts, x, t), dtype=float) @ w)


def _axis_points(i: int, x: np.ndarray) -> np.ndarray:
    pts = np.zeros(x.shape + (3,))
    pts[..., i] = x
    return pts


def assemble_edge_source(geom: JunctionGeometry, data: DataFunctions,
                         regime: RegimeParams, i: int, x, t: float):
    """Order-zero edge source: area-weighted bulk term plus the perimeter
    contribution of the lateral data when its intensity exponent is 1."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    area = np.array([geom.area(i, xi) for xi in x_arr])
    out = area * np.asarray(data.f(_axis_points(i, x_arr), t), dtype=float)
    if exponents_equal(regime.beta[1 + i], 1.0):
        out = out + np.array([perimeter_integral(geom, data.phi[i], i, xi, t)
                              for xi in x_arr])
    return out if np.ndim(x) else float(out[0])


def node_flux_series(geom: JunctionGeometry, data: DataFunctions,
                     regime: RegimeParams, quadrature=None) -> Callable[[float], float]:
    """Data flux entering the vertex balance: [beta0=0] * node-surface integral.

    Non-constant node data needs an explicit surface ``quadrature`` (an object
    with ``integrate(fn, t)``); for constant data the closed-form measure is
    used directly.
    """
    if not exponents_equal(regime.beta0, 0.0):
        return lambda t: 0.0
    if quadrature is not None:
        return lambda t: float(quadrature.integrate(data.phi0, t))
    gamma0, _ = node_measures(geom)
    b = geom.ell0
    probes = np.array([
        [b, 0.3 * b, -0.2 * b], [-b, 0.1 * b, 0.7 * b], [0.2 * b, -b, 0.5 * b],
        [0.4 * b, b, -0.6 * b], [-0.3 * b, 0.2 * b, -b], [0.6 * b, -0.5 * b, b],
    ])

    def integral(t: float) -> float:
        vals = np.asarray(data.phi0(probes, t), dtype=float)
        if np.ptp(vals) > 1e-12 * max(1.0, float(np.max(np.abs(vals)))):
            raise ValueError(
                "non-constant node data requires a node-surface quadrature")
        return float(vals[0]) * gamma0

    return integral


# ---------------------------------------------------------------------------
# implicit finite-volume engine
# ---------------------------------------------------------------------------


@dataclass
class _EdgeOperator:
    grid: EdgeGrid
    centers: np.ndarray
    dx: float
    area_c: np.ndarray     # areas at cell centers (also the mass coefficient)
    af: np.ndarray         # harmonic-mean face coefficients, interior faces
    a_start: float
    a_end: float
    reaction: Callable     # (u, t) -> volume reaction density
    reaction_prime: Callable
    source: Callable       # t -> array over centers

    @classmethod
    def build(cls, grid: EdgeGrid, area_fn, reaction, reaction_prime, source):
        xc = grid.centers
        area_c = np.array([area_fn(x) for x in xc], dtype=float)
        left, right = area_c[:-1], area_c[1:]
        af = 2.0 * left * right / (left + right)
        return cls(grid=grid, centers=xc, dx=grid.spacing, area_c=area_c, af=af,
                   a_start=float(area_fn(grid.x_start)), a_end=float(area_fn(grid.x_end)),
                   reaction=reaction, reaction_prime=reaction_prime, source=source)

    def fluxes(self, u: np.ndarray, face0: float) -> np.ndarray:
        dx = self.dx
        f = np.empty(u.size + 1)
        f[0] = self.a_start * (-8.0 * face0 + 9.0 * u[0] - u[1]) / (3.0 * dx)
        f[1:-1] = self.af * np.diff(u) / dx
        f[-1] = self.a_end * (-9.0 * u[-1] + u[-2]) / (3.0 * dx)
        return f

    def residual(self, u, prev, dt, t, face0):
        f = self.fluxes(u, face0)
        return (self.area_c * (u - prev) / dt - np.diff(f) / self.dx
                + self.reaction(u, t) - self.source(t))

    def jacobian_banded(self, u, dt, t):
        """Tridiagonal Jacobian in solve_banded layout (3, n)."""
        n = u.size
        dx2 = self.dx * self.dx
        diag = self.area_c / dt + self.reaction_prime(u, t)
        ab = np.zeros((3, n))
        ab[1, :] = diag
        ab[1, 1:-1] += (self.af[:-1] + self.af[1:]) / dx2
        ab[1, 0] += (self.af[0] + 3.0 * self.a_start) / dx2
        ab[1, -1] += (self.af[-1] + 3.0 * self.a_end) / dx2
        # upper diagonal J[k, k+1]
        ab[0, 1:] = -self.af / dx2
        ab[0, 1] -= self.a_start / (3.0 * dx2)
        # lower diagonal J[k+1, k]
        ab[2, :-1] = -self.af / dx2
        ab[2, -2] -= self.a_end / (3.0 * dx2)
        return ab

    def dres_dface0(self) -> float:
        return -8.0 * self.a_start / (3.0 * self.dx * self.dx)


def vertex_slope(u: np.ndarray, face_value: float, dx: float) -> float:
    """Second-order one-sided derivative at the vertex face."""
    return (-8.0 * face_value + 9.0 * u[0] - u[1]) / (3.0 * dx)


@dataclass
class _SharedVertex:
    """Continuity through a shared unknown v with per-edge trace offsets and a
    flux-balance row sum_i A_i(0) d_x u_i(0) - absorb(v,t) + data(t) = 0."""

    offsets: Callable[[float], np.ndarray]
    absorb: Callable[[float, float], float]
    absorb_prime: Callable[[float, float], float]
    data: Callable[[float], float]


@dataclass
class _DirichletVertex:
    values: Callable[[float], np.ndarray]  # per-edge trace at x=0


def _solve_star(ops: list[_EdgeOperator], times: np.ndarray, vertex,
                initial: list[np.ndarray] | None = None,
                v_initial: float = 0.0, label: str = ""):
    levels = len(times)
    n_edges = len(ops)
    values = [np.zeros((levels, op.centers.size)) for op in ops]
    if initial is not None:
        for i in range(n_edges):
            values[i][0] = initial[i]
    vertex_values = np.zeros((levels, n_edges))
    fluxes = np.zeros((levels, n_edges))
    residuals = np.zeros(levels)
    shared = isinstance(vertex, _SharedVertex)
    v = v_initial
    if shared:
        vertex_values[0] = v + vertex.offsets(times[0])
    else:
        vertex_values[0] = vertex.values(times[0])
    for i, op in enumerate(ops):
        fluxes[0, i] = op.a_start * vertex_slope(values[i][0], vertex_values[0, i], op.dx)

    for m in range(1, levels):
        t = float(times[m])
        dt = float(times[m] - times[m - 1])
        u = [values[i][m - 1].copy() for i in range(n_edges)]
        prev = [values[i][m - 1] for i in range(n_edges)]

        if shared:
            offs = np.asarray(vertex.offsets(t), dtype=float)
        else:
            faces = np.asarray(vertex.values(t), dtype=float)

        converged = False
        for it in range(NEWTON_MAXITER):
            if shared:
                faces = v + offs
            res = [ops[i].residual(u[i], prev[i], dt, t, faces[i]) for i in range(n_edges)]
            bands = [ops[i].jacobian_banded(u[i], dt, t) for i in range(n_edges)]
            # the attainable residual scales with the stiffest balanced term,
            # so acceptance is relative to the Jacobian diagonal
            res_norm = 0.0
            for i in range(n_edges):
                scale = 1.0 + np.abs(bands[i][1]) * max(1.0, float(np.max(np.abs(u[i]))))
                res_norm = max(res_norm, float(np.max(np.abs(res[i]) / scale)))
            if shared:
                rv = sum(ops[i].a_start * vertex_slope(u[i], faces[i], ops[i].dx)
                         for i in range(n_edges))
                rv += -vertex.absorb(v, t) + vertex.data(t)
                d_row = -sum(8.0 * ops[i].a_start / (3.0 * ops[i].dx) for i in range(n_edges))
                v_scale = 1.0 + abs(d_row) * max(1.0, abs(v))
                res_norm = max(res_norm, abs(rv) / v_scale)
            if res_norm <= NEWTON_TOL:
                converged = True
                break

            if shared:
                # bordered system: eliminate the edges, close on the vertex row
                ty = [solve_banded((1, 1), bands[i], res[i]) for i in range(n_edges)]
                tc = []
                for i in range(n_edges):
                    c = np.zeros(u[i].size)
                    c[0] = ops[i].dres_dface0()
                    tc.append(solve_banded((1, 1), bands[i], c))
                d = -sum(8.0 * ops[i].a_start / (3.0 * ops[i].dx) for i in range(n_edges))
                d -= vertex.absorb_prime(v, t)
                bty = 0.0
                btc = 0.0
                for i in range(n_edges):
                    b0 = 3.0 * ops[i].a_start / ops[i].dx
                    b1 = -ops[i].a_start / (3.0 * ops[i].dx)
                    bty += b0 * ty[i][0] + b1 * ty[i][1]
                    btc += b0 * tc[i][0] + b1 * tc[i][1]
                dv = (bty - rv) / (d - btc)
                v += dv
                for i in range(n_edges):
                    u[i] -= ty[i] + tc[i] * dv
            else:
                for i in range(n_edges):
                    u[i] -= solve_banded((1, 1), bands[i], res[i])
        if not converged:
            raise ConvergenceFailure(
                f"Newton stalled in {label or 'graph solve'} at t={t:.6g}: "
                f"residual {res_norm:.3e} after {NEWTON_MAXITER} iterations")

        for i in range(n_edges):
            values[i][m] = u[i]
            vertex_values[m, i] = faces[i]
            fluxes[m, i] = ops[i].a_start * vertex_slope(u[i], faces[i], ops[i].dx)
        if shared:
            residuals[m] = (fluxes[m].sum() - vertex.absorb(v, t) + vertex.data(t))
    return values, vertex_values, fluxes, residuals if shared else None


def _graph_solution(order, grids, values, times, vertex_values, fluxes, residuals):
    fields = [EdgeField(edge_index=i, grid=grids[i], values=values[i]) for i in range(3)]
    return GraphSolution(order=order, fields=fields, times=np.asarray(times, dtype=float),
                         vertex_values=vertex_values, vertex_fluxes=fluxes,
                         vertex_residuals=residuals)


# ---------------------------------------------------------------------------
# concrete solvers
# ---------------------------------------------------------------------------


def solve_limit_problem(geom: JunctionGeometry, data: DataFunctions,
                        nl: NonlinearitySet, regime: RegimeParams,
                        grids: Sequence[EdgeGrid], times: np.ndarray,
                        node_quadrature=None) -> GraphSolution:
    """Leading-order graph solution.

    Regime A couples the edges by continuity at the vertex and an
    area-weighted flux balance (with the node absorption term when
    alpha0 = 0); in the splitting regimes each edge solves independently
    with homogeneous Dirichlet conditions at both ends.
    """
    if regime.regime not in (REGIME_A, REGIME_B, REGIME_C):
        raise ValueError("unsupported regime")
    times = np.asarray(times, dtype=float)

    ops = []
    for i in range(3):
        grid = grids[i]
        xc = grid.centers
        area_c = np.array([geom.area(i, x) for x in xc])
        perim_c = np.array([geom.perimeter(i, x) for x in xc])
        blow_up = exponents_equal(regime.alpha[1 + i], 1.0)

        def reaction(u, t, area_c=area_c, perim_c=perim_c, xc=xc, i=i, blow_up=blow_up):
            out = area_c * nl.k(u)
            if blow_up:
                out = out + perim_c * nl.kappa[i](u, xc, t)
            return out

        def reaction_prime(u, t, area_c=area_c, perim_c=perim_c, xc=xc, i=i, blow_up=blow_up):
            out = area_c * nl.k_prime(u)
            if blow_up:
                out = out + perim_c * nl.kappa_prime[i](u, xc, t)
            return out

        def source(t, i=i, xc=xc):
            return assemble_edge_source(geom, data, regime, i, xc, t)

        ops.append(_EdgeOperator.build(grid, lambda x, i=i: geom.area(i, x),
                                       reaction, reaction_prime, source))

    if regime.regime == REGIME_A:
        gamma0, _ = node_measures(geom)
        d0 = node_flux_series(geom, data, regime, node_quadrature)
        absorbing = exponents_equal(regime.alpha0, 0.0)

        def absorb(v, t):
            return gamma0 * float(nl.kappa0(np.array(v))) if absorbing else 0.0

        def absorb_prime(v, t):
            return gamma0 * float(nl.kappa0_prime(np.array(v))) if absorbing else 0.0

        vertex = _SharedVertex(offsets=lambda t: np.zeros(3), absorb=absorb,
                               absorb_prime=absorb_prime, data=d0)
    else:
        vertex = _DirichletVertex(values=lambda t: np.zeros(3))

    values, vv, fluxes, res = _solve_star(ops, times, vertex, label="limit problem")
    return _graph_solution(ORDER_0, list(grids), values, times, vv, fluxes, res)


def _linearized_ops(geom, data, nl, regime, omega0: GraphSolution, grids, sources):
    """Edge operators with reaction linearized around the leading order."""
    ops = []
    for i in range(3):
        grid = grids[i]
        if grid.n_cells != omega0.fields[i].grid.n_cells or \
                abs(grid.x_end - omega0.fields[i].grid.x_end) > 1e-12:
            raise ValueError("corrector grids must match the leading-order grids")
        xc = grid.centers
        area_c = np.array([geom.area(i, x) for x in xc])
        perim_c = np.array([geom.perimeter(i, x) for x in xc])
        blow_up = exponents_equal(regime.alpha[1 + i], 1.0)
        w0 = omega0.fields[i].values
        times = omega0.times

        def coeff(t, w0=w0, times=times, area_c=area_c, perim_c=perim_c, xc=xc,
                  i=i, blow_up=blow_up):
            m = int(round((t - times[0]) / (times[1] - times[0])))
            base = w0[m]
            c = area_c * nl.k_prime(base)
            if blow_up:
                c = c + perim_c * nl.kappa_prime[i](base, xc, t)
            return c

        def reaction(u, t, coeff=coeff):
            return coeff(t) * u

        def reaction_prime(u, t, coeff=coeff):
            return coeff(t)

        ops.append(_EdgeOperator.build(grid, lambda x, i=i: geom.area(i, x),
                                       reaction, reaction_prime, sources[i]))
    return ops


def _corrector_sources(geom, data, nl, regime, omega0: GraphSolution, grids):
    """Printed first-corrector source: the lateral-data terms at exponent 2.

    The transverse moment of the bulk-data gradient vanishes on centered
    cross-sections, so only the kappa and data perimeter terms survive.
    """
    sources = []
    for i in range(3):
        xc = grids[i].centers
        perim_c = np.array([geom.perimeter(i, x) for x in xc])
        w0 = omega0.fields[i].values
        times = omega0.times
        kappa_gate = exponents_equal(regime.alpha[1 + i], 2.0)
        phi_gate = exponents_equal(regime.beta[1 + i], 2.0)

        def source(t, xc=xc, perim_c=perim_c, w0=w0, times=times, i=i,
                   kappa_gate=kappa_gate, phi_gate=phi_gate):
            m = int(round((t - times[0]) / (times[1] - times[0])))
            out = np.zeros_like(xc)
            if kappa_gate:
                out = out - perim_c * nl.kappa[i](w0[m], xc, t)
            if phi_gate:
                out = out + np.array([perimeter_integral(geom, data.phi[i], i, x, t)
                                      for x in xc])
            return out

        sources.append(source)
    return sources


def solve_corrector_kirchhoff(geom: JunctionGeometry, data: DataFunctions,
                              nl: NonlinearitySet, regime: RegimeParams,
                              omega0: GraphSolution, constants: CouplingConstants,
                              grids: Sequence[EdgeGrid]) -> GraphSolution:
    """First corrector in regime A: linear parabolic solve whose vertex traces
    differ by the transmission jumps while the area-weighted fluxes balance the
    corrector flux constant (plus the linearized node absorption when
    alpha0 = 0)."""
    if regime.regime != REGIME_A:
        raise ValueError("Kirchhoff corrector requires regime A")
    constants.validate()
    if constants.corrector_flux is None:
        raise ValueError("corrector flux constant not populated")
    times = omega0.times
    gamma0 = constants.gamma0_measure
    sources = _corrector_sources(geom, data, nl, regime, omega0, grids)
    ops = _linearized_ops(geom, data, nl, regime, omega0, grids, sources)

    jump2 = constants.jump_series(ORDER_1, 1)
    jump3 = constants.jump_series(ORDER_1, 2)
    d1 = constants.corrector_flux
    absorbing = exponents_equal(regime.alpha0, 0.0)

    def level(t):
        return int(round((t - times[0]) / (times[1] - times[0])))

    def offsets(t):
        m = level(t)
        return np.array([0.0, jump2[m], jump3[m]])

    def absorb(v, t):
        if not absorbing:
            return 0.0
        w = omega0.vertex_values[level(t), 0]
        return gamma0 * float(nl.kappa0_prime(np.array(w))) * v

    def absorb_prime(v, t):
        if not absorbing:
            return 0.0
        w = omega0.vertex_values[level(t), 0]
        return gamma0 * float(nl.kappa0_prime(np.array(w)))

    # the balance row is sum(fluxes) - absorb + data = 0 while the corrector
    # condition reads sum(fluxes) - absorb = flux constant, hence the sign flip
    vertex = _SharedVertex(offsets=offsets, absorb=absorb, absorb_prime=absorb_prime,
                           data=lambda t: -float(d1[level(t)]))
    values, vv, fluxes, res = _solve_star(ops, times, vertex, label="first corrector")
    return _graph_solution(ORDER_1, list(grids), values, times, vv, fluxes, res)


def solve_corrector_dirichlet(geom: JunctionGeometry, data: DataFunctions,
                              nl: NonlinearitySet, regime: RegimeParams,
                              omega0: GraphSolution,
                              trace_series: Sequence[np.ndarray],
                              grids: Sequence[EdgeGrid]) -> GraphSolution:
    """First corrector in regime C: three decoupled linear solves whose vertex
    traces are the inner-layer far-field constants."""
    if regime.regime != REGIME_C:
        raise ValueError("Dirichlet corrector requires regime C")
    times = omega0.times
    sources = _corrector_sources(geom, data, nl, regime, omega0, grids)
    ops = _linearized_ops(geom, data, nl, regime, omega0, grids, sources)
    traces = np.column_stack(list(trace_series))

    def bc(t):
        m = int(round((t - times[0]) / (times[1] - times[0])))
        return traces[m]

    vertex = _DirichletVertex(values=bc)
    values, vv, fluxes, _ = _solve_star(ops, times, vertex, label="split corrector")
    return _graph_solution(ORDER_1, list(grids), values, times, vv, fluxes, None)


def solve_expansion_term(geom: JunctionGeometry, data: DataFunctions,
                         nl: NonlinearitySet, regime: RegimeParams,
                         omega_terms: dict, constants: CouplingConstants,
                         order: str, grids: Sequence[EdgeGrid]) -> GraphSolution:
    """One higher-order term of the fractional-regime chain.

    Dirichlet value at the vertex is the inner-layer value plus the
    transmission jump of this order; the source collects the quadratic
    interactions of all previously solved terms.
    """
    if regime.regime != REGIME_B:
        raise ValueError("expansion terms beyond the corrector exist in regime B only")
    if order not in _B_ORDERS or order == ORDER_0:
        raise ValueError(f"cannot solve order {order!r}")
    constants.validate()
    omega0 = omega_terms.get(ORDER_0)
    if omega0 is None:
        raise ValueError("scheduler out of order: leading term missing")
    if order not in constants.layer_values:
        raise ValueError(f"scheduler out of order: layer value for {order} missing")
    a0 = regime.alpha0
    expo = order_exponent(order, a0)
    times = omega0.times

    sources = []
    for i in range(3):
        xc = grids[i].centers
        area_c = np.array([geom.area(i, x) for x in xc])
        perim_c = np.array([geom.perimeter(i, x) for x in xc])
        alpha_i = regime.alpha[1 + i]
        beta_i = regime.beta[1 + i]

        def source(t, i=i, xc=xc, area_c=area_c, perim_c=perim_c,
                   alpha_i=alpha_i, beta_i=beta_i):
            m = int(round((t - times[0]) / (times[1] - times[0])))
            w0 = omega_terms[ORDER_0].fields[i].values[m]
            z = {name: sol.fields[i].values[m] for name, sol in omega_terms.items()
                 if name != ORDER_0}
            out = -area_c * nl.k_second(w0) * expansion_interaction_term(order, z, a0)
            kap = np.zeros_like(xc)
            if exponents_equal(alpha_i, 1.0):
                kap = kap + nl.kappa_second[i](w0, xc, t) * \
                    expansion_interaction_term(order, z, a0)
            for m_name in _B_ORDERS:
                if m_name == ORDER_0:
                    continue
                m_exp = order_exponent(m_name, a0)
                if not exponents_equal(alpha_i, m_exp + 1.0):
                    continue
                if exponents_equal(m_exp, expo):
                    kap = kap + nl.kappa[i](w0, xc, t)
                else:
                    rem = _order_name_for(expo - m_exp, a0)
                    if rem is not None:
                        z_rem = z.get(rem)
                        if z_rem is not None:
                            kap = kap + nl.kappa_prime[i](w0, xc, t) * z_rem
                        kap = kap + nl.kappa_second[i](w0, xc, t) * \
                            expansion_interaction_term(rem, z, a0)
            out = out - perim_c * kap
            if exponents_equal(beta_i, expo + 1.0):
                out = out + np.array([perimeter_integral(geom, data.phi[i], i, x, t)
                                      for x in xc])
            return out

        sources.append(source)

    ops = _linearized_ops(geom, data, nl, regime, omega0, grids, sources)
    layer = constants.layer_values[order]
    jumps = np.column_stack([constants.jump_series(order, i) for i in range(3)])

    def bc(t):
        m = int(round((t - times[0]) / (times[1] - times[0])))
        return layer[m] + jumps[m]

    values, vv, fluxes, _ = _solve_star(ops, times, _DirichletVertex(values=bc),
                                        label=f"expansion term {order}")
    return _graph_solution(order, list(grids), values, times, vv, fluxes, None)


# ---------------------------------------------------------------------------
# vertex diagnostics and coupling formulas
# ---------------------------------------------------------------------------


def vertex_flux_residual(sol: GraphSolution, geom: JunctionGeometry,
                         nl: NonlinearitySet, regime: RegimeParams, t: float,
                         node_flux: float = 0.0) -> float:
    """Regime-A Kirchhoff balance evaluated from the stored solution:
    sum of area-weighted one-sided vertex derivatives, minus the node
    absorption when alpha0 = 0, plus the node data flux."""
    m = sol.level_of(t)
    total = 0.0
    for i in range(3):
        field = sol.fields[i]
        u = field.values[m]
        total += geom.area(i, 0.0) * vertex_slope(u, sol.vertex_values[m, i],
                                                  field.grid.spacing)
    if exponents_equal(regime.alpha0, 0.0):
        gamma0, _ = node_measures(geom)
        total -= gamma0 * float(nl.kappa0(np.array(sol.vertex_values[m, 0])))
    return total + node_flux


def _series_backward_dt(series: np.ndarray, times: np.ndarray, m: int) -> float:
    if m == 0:
        return 0.0
    return float((series[m] - series[m - 1]) / (times[m] - times[m - 1]))


def corrector_flux_constant(omega0: GraphSolution, data: DataFunctions,
                            nl: NonlinearitySet, geom: JunctionGeometry,
                            regime: RegimeParams, t: float, *,
                            inner_gamma0_integral: float = 0.0,
                            phi0_gamma0_integral: float = 0.0,
                            omega1_vertex: float = 0.0) -> float:
    """Flux constant of the first corrector, term by term as printed.

    ``inner_gamma0_integral`` is the node-surface integral of the normalized
    inner correction (its vertex offset enters through ``omega1_vertex``,
    which the coupled solver keeps implicit).
    """
    m = omega0.level_of(t)
    w = float(omega0.vertex_values[m, 0])
    dw_dt = _series_backward_dt(omega0.vertex_values[:, 0], omega0.times, m)
    gamma0, node_vol = node_measures(geom)
    f0 = float(data.f(np.zeros(3), t))
    kw = float(nl.k(np.array(w)))

    total = 0.0
    for i in range(3):
        part = geom.area(i, 0.0) * (dw_dt + kw - f0)
        if exponents_equal(regime.alpha[1 + i], 1.0):
            part += geom.perimeter(i, 0.0) * float(nl.kappa[i](np.array(w), 0.0, t))
        if exponents_equal(regime.beta[1 + i], 1.0):
            part -= perimeter_integral(geom, data.phi[i], i, 0.0, t)
        total -= geom.ell0 * part
    if exponents_equal(regime.alpha0, 0.0):
        total += float(nl.kappa0_prime(np.array(w))) * \
            (inner_gamma0_integral + gamma0 * omega1_vertex)
    if exponents_equal(regime.alpha0, 1.0):
        total += gamma0 * float(nl.kappa0(np.array(w)))
    if exponents_equal(regime.beta0, 1.0):
        total -= phi0_gamma0_integral
    total += node_vol * (dw_dt + kw - f0)
    return total


def vertex_layer_values(omega_terms: dict, geom: JunctionGeometry,
                        data: DataFunctions, nl: NonlinearitySet,
                        regime: RegimeParams, t: float, *,
                        inner_gamma0_integral: float = 0.0,
                        inner_gamma0_integral_high: float = 0.0,
                        phi0_gamma0_integral: float = 0.0,
                        area_weights: bool = False) -> dict:
    """Inner-layer vertex values of the fractional regime, as printed.

    The printed formulas sum plain vertex slopes; ``area_weights`` switches to
    area-weighted sums (which is what the inner solvability requires when the
    cross-sections do not have unit area).
    """
    if regime.regime != REGIME_B:
        raise ValueError("layer values exist in regime B only")
    k0p = float(nl.kappa0_prime(np.array(0.0)))
    if k0p <= 0.0:
        raise ZeroDivisionError("zero-absorption slope kappa0'(0) must be positive")
    k0pp = float(nl.kappa0_second(np.array(0.0)))
    gamma0, node_vol = node_measures(geom)
    denom = k0p * gamma0
    b0 = regime.beta0

    def slope_sum(order: str) -> float:
        sol = omega_terms.get(order)
        if sol is None:
            if order == ORDER_1PA0:
                return 0.0
            raise ValueError(f"scheduler out of order: term {order} missing")
        m = sol.level_of(t)
        slopes = np.array([sol.vertex_fluxes[m, i] / geom.area(i, 0.0) for i in range(3)])
        if area_weights:
            slopes = slopes * np.array([geom.area(i, 0.0) for i in range(3)])
        return float(slopes.sum())

    out: dict = {ORDER_1PA0: 0.0}
    out[ORDER_MA0] = (slope_sum(ORDER_0)
                      + (phi0_gamma0_integral if exponents_equal(b0, 0.0) else 0.0)) / denom
    if ORDER_MA0 in omega_terms:
        out[ORDER_M2A0] = (slope_sum(ORDER_MA0)
                           - 0.5 * k0pp * gamma0 * out[ORDER_MA0] ** 2
                           + (phi0_gamma0_integral
                              if exponents_equal(b0, -regime.alpha0) else 0.0)) / denom
        out[ORDER_1] = (0.0  # the order 1+alpha0 term vanishes off the resonant case
                        - 0.5 * k0pp * inner_gamma0_integral
                        + (phi0_gamma0_integral
                           if exponents_equal(b0, 1.0 + regime.alpha0) else 0.0)) / denom
    if ORDER_1 in omega_terms and ORDER_1 in out:
        f0 = float(data.f(np.zeros(3), t))
        k0 = float(nl.k(np.array(0.0)))
        edge_sum = 0.0
        for i in range(3):
            part = geom.area(i, 0.0) * (k0 - f0)
            if exponents_equal(regime.alpha[1 + i], 1.0):
                part += geom.perimeter(i, 0.0) * float(nl.kappa[i](np.array(0.0), 0.0, t))
            if exponents_equal(regime.beta[1 + i], 1.0):
                part -= perimeter_integral(geom, data.phi[i], i, 0.0, t)
            edge_sum += part
        out[ORDER_1MA0] = (slope_sum(ORDER_1)
                           - k0p * inner_gamma0_integral_high
                           - k0pp * out[ORDER_MA0] *
                           (out[ORDER_1] * gamma0 + inner_gamma0_integral)
                           + geom.ell0 * edge_sum
                           - node_vol * (k0 - f0)
                           + (phi0_gamma0_integral
                              if exponents_equal(b0, 1.0) else 0.0)) / denom
    return out


# ---------------------------------------------------------------------------
# weak-form pairing (monotonicity diagnostics)
# ---------------------------------------------------------------------------


def _state_arrays(state):
    fields, v = state
    return [np.asarray(f, dtype=float) for f in fields], float(v)


def graph_h1_seminorm_sq(geom: JunctionGeometry, grids: Sequence[EdgeGrid],
                         state) -> float:
    """Area-weighted discrete H^1 seminorm squared of a graph state, using the
    variational half-cell fluxes at the vertex and the clamped far ends."""
    fields, v = _state_arrays(state)
    total = 0.0
    for i in range(3):
        grid = grids[i]
        u = fields[i]
        xc = grid.centers
        dx = grid.spacing
        area_c = np.array([geom.area(i, x) for x in xc])
        af = 2.0 * area_c[:-1] * area_c[1:] / (area_c[:-1] + area_c[1:])
        du = np.diff(u)
        total += float(np.sum(af * du * du)) / dx
        total += geom.area(i, 0.0) * (u[0] - v) ** 2 * 2.0 / dx
        total += geom.area(i, grid.x_end) * u[-1] ** 2 * 2.0 / dx
    return total


def graph_operator_pairing(geom: JunctionGeometry, nl: NonlinearitySet,
                           regime: RegimeParams, grids: Sequence[EdgeGrid],
                           state1, state2, t: float) -> tuple[float, float]:
    """Weak-form pairing of the graph operator difference against the state
    difference, compared with the weighted H^1 seminorm of the difference.

    Returns ``(pairing, seminorm_sq)``; strong monotonicity of the continuous
    operator transcribes to ``pairing >= seminorm_sq`` up to roundoff.
    """
    f1, v1 = _state_arrays(state1)
    f2, v2 = _state_arrays(state2)
    dv = v1 - v2
    gamma0, _ = node_measures(geom)
    seminorm = graph_h1_seminorm_sq(geom, grids, ([a - b for a, b in zip(f1, f2)], dv))
    pairing = seminorm
    for i in range(3):
        grid = grids[i]
        xc = grid.centers
        dx = grid.spacing
        area_c = np.array([geom.area(i, x) for x in xc])
        perim_c = np.array([geom.perimeter(i, x) for x in xc])
        d = f1[i] - f2[i]
        pairing += float(((area_c * (nl.k(f1[i]) - nl.k(f2[i]))) @ d)) * dx
        if exponents_equal(regime.alpha[1 + i], 1.0):
            dk = nl.kappa[i](f1[i], xc, t) - nl.kappa[i](f2[i], xc, t)
            pairing += float((perim_c * dk) @ d) * dx
    if regime.regime == REGIME_A and exponents_equal(regime.alpha0, 0.0):
        pairing += gamma0 * float(nl.kappa0(np.array(v1)) - nl.kappa0(np.array(v2))) * dv
    return pairing, seminorm


# ---------------------------------------------------------------------------
# evaluation helpers for the assembly stage
# ---------------------------------------------------------------------------


def edge_profile_at(sol: GraphSolution, i: int, x: np.ndarray, level: int) -> np.ndarray:
    """Edge value at arbitrary axial positions (linear, with the exact traces
    at both ends of the edge)."""
    field = sol.fields[i]
    grid = field.grid
    xp = np.concatenate([[grid.x_start], grid.centers, [grid.x_end]])
    fp = np.concatenate([[sol.vertex_values[level, i]], field.values[level], [0.0]])
    return np.interp(np.asarray(x, dtype=float), xp, fp)
