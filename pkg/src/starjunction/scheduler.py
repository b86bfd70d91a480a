"""End-to-end studies: term pipeline, convergence sweeps, validation suite.

The term scheduler walks the dependency chain of the expansion for the
configured regime and persists every produced term with provenance.  The
convergence study reuses the (epsilon-free) terms across the sweep, solving
only the reference problem per epsilon.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cells, io, model
from .assembly import (
    ApproximationField,
    AsymptoticConfig,
    ExpansionTerms,
    InnerSeries,
    assemble_approximation,
    error_norms,
    fit_eoc,
    predicted_error_scale,
)
from .config import ConfigError, ProblemSetup
from .graph import (
    CouplingConstants,
    ORDER_0,
    ORDER_1,
    ORDER_MA0,
    ORDER_M2A0,
    ORDER_1MA0,
    corrector_flux_constant,
    graph_operator_pairing,
    node_flux_series,
    solve_corrector_dirichlet,
    solve_corrector_kirchhoff,
    solve_expansion_term,
    solve_limit_problem,
    vertex_flux_residual,
    vertex_layer_values,
)
from .linalg import ConvergenceFailure
from .model import EdgeGrid, REGIME_A, REGIME_B, REGIME_C, exponents_equal
from .reference import (
    ReferenceProblem,
    build_junction_mesh,
    node_smallness,
    operator_pairing,
    space_time_norm,
)

__all__ = ["StudyPlan", "SchedulerError", "run_term_scheduler",
           "run_convergence_study", "run_validate"]


class SchedulerError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


@dataclass
class StudyPlan:
    kind: str
    epsilons: tuple = ()
    out_dir: str | Path | None = None
    seed: int = 0
    order: str = "first"
    synthetic: tuple | None = None   # (amplitude, power): test hook for the fits

    def __post_init__(self) -> None:
        if self.kind not in ("limit-only", "cells-only", "full-convergence", "validate"):
            raise ValueError(f"unknown study kind {self.kind!r}")
        eps = tuple(float(e) for e in self.epsilons)
        for left, right in zip(eps, eps[1:]):
            if right >= left:
                raise ValueError("epsilon list must be strictly decreasing")
        self.epsilons = eps


def _graph_grids(setup: ProblemSetup) -> list[EdgeGrid]:
    n = int(setup.numerics["graph_cells"])
    return [EdgeGrid(n, 0.0, setup.geom.lengths[i]) for i in range(3)]


def _edge_areas(setup: ProblemSetup) -> np.ndarray:
    return np.array([setup.geom.area(i, 0.0) for i in range(3)])


def _stage(terms: ExpansionTerms, name: str, **meta) -> None:
    terms.provenance.setdefault("stages", []).append({"stage": name, **meta})


def _cell_setup(setup: ProblemSetup):
    spec = cells.InnerDomainSpec(geometry=setup.geom,
                                 radius=float(setup.numerics["cell_radius"]),
                                 hv=float(setup.numerics["cell_hv"]))
    mesh = cells.build_inner_mesh(spec)
    quad = cells.NodeSurfaceQuadrature(mesh)
    measures = cells.boundary_measures(mesh)
    return mesh, quad, measures


def _phi0_series(setup: ProblemSetup, quad, gate_exponent: float | None = None
                 ) -> np.ndarray:
    """Node-surface integral of the node datum, optionally gated on beta0.

    The layer-value and flux-constant formulas gate internally, so they take
    the raw series; the order-zero node flux wants the gated one.
    """
    times = setup.times
    if gate_exponent is not None and not exponents_equal(setup.regime.beta0,
                                                         gate_exponent):
        return np.zeros(len(times))
    return np.array([quad.integrate(setup.data.phi0, t) for t in times])


def _inner_series(setup: ProblemSetup, mesh, slopes_series: np.ndarray,
                  gamma0_values: np.ndarray, gamma0_gate: float | None,
                  robin_coef: float = 0.0, stage: str = "inner") -> InnerSeries:
    """Solve the decaying inner correction on every time level (warm-started)."""
    times = setup.times
    levels = len(times)
    n_out = len(mesh.outlets)
    values = np.zeros((levels, mesh.n_voxels))
    consts = np.zeros((levels, n_out))
    integrals = np.zeros(levels)
    use_phi0 = gamma0_gate is not None and exponents_equal(setup.regime.beta0, gamma0_gate)
    x0 = None
    for m in range(levels):
        drive = cells.InnerDrive(
            slopes=tuple(slopes_series[m]),
            gamma0_value=float(gamma0_values[m]),
            gamma0_fn=setup.data.phi0 if use_phi0 else None,
            t=float(times[m]))
        try:
            fld, rep = cells.solve_inner_correction(mesh, drive, robin_coef=robin_coef,
                                                    x0=x0)
        except ConvergenceFailure as exc:
            raise SchedulerError(f"stage {stage!r} failed at t={times[m]:.6g}: {exc}") from exc
        values[m] = fld.values
        consts[m] = rep.constant
        integrals[m] = fld.gamma0_integral
        x0 = fld.values
    return InnerSeries(mesh=mesh, values=values, constants=consts,
                       gamma0_integrals=integrals)


def run_term_scheduler(setup: ProblemSetup, out_dir: str | Path | None = None
                       ) -> ExpansionTerms:
    """Compute the expansion terms in dependency order for the configured regime."""
    regime = setup.regime
    if regime.regime not in (REGIME_A, REGIME_B, REGIME_C):
        raise ConfigError("the configured exponents fall outside the supported regimes")
    times = setup.times
    grids = _graph_grids(setup)
    areas = _edge_areas(setup)
    terms = ExpansionTerms(geom=setup.geom, regime=regime, times=times)
    terms.provenance["config_digest"] = setup.digest
    mesh_c, quad, (gamma0, node_vol) = _cell_setup(setup)
    constants = CouplingConstants(gamma0_measure=gamma0, node_volume=node_vol,
                                  times=times)
    terms.constants = constants

    try:
        omega0 = solve_limit_problem(setup.geom, setup.data, setup.nl, regime, grids,
                                     times, node_quadrature=quad)
    except ConvergenceFailure as exc:
        raise SchedulerError(f"stage 'limit problem' failed: {exc}") from exc
    terms.graph[ORDER_0] = omega0
    _stage(terms, "limit-problem", order=ORDER_0)
    slopes0 = omega0.vertex_fluxes / areas[None, :]

    if regime.regime == REGIME_A:
        absorbing = exponents_equal(regime.alpha0, 0.0)
        g0_vals = np.array([
            -float(setup.nl.kappa0(np.array(omega0.vertex_values[m, 0])))
            if absorbing else 0.0 for m in range(len(times))])
        inner1 = _inner_series(setup, mesh_c, slopes0, g0_vals, gamma0_gate=0.0,
                               stage="inner correction")
        terms.inner[ORDER_1] = inner1
        for i in (1, 2):
            constants.jumps[(ORDER_1, i)] = inner1.constants[:, i].copy()
        _stage(terms, "inner-correction", order=ORDER_1)

        phi0_raw = _phi0_series(setup, quad)
        constants.node_flux = _phi0_series(setup, quad, 0.0)
        constants.corrector_flux = np.array([
            corrector_flux_constant(omega0, setup.data, setup.nl, setup.geom, regime,
                                    t, inner_gamma0_integral=inner1.gamma0_integrals[m],
                                    phi0_gamma0_integral=phi0_raw[m])
            for m, t in enumerate(times)])
        _stage(terms, "corrector-constants")
        try:
            terms.graph[ORDER_1] = solve_corrector_kirchhoff(
                setup.geom, setup.data, setup.nl, regime, omega0, constants, grids)
        except ConvergenceFailure as exc:
            raise SchedulerError(f"stage 'first corrector' failed: {exc}") from exc
        _stage(terms, "first-corrector", order=ORDER_1)

    elif regime.regime == REGIME_C:
        k0p = float(setup.nl.kappa0_prime(np.array(0.0)))
        specials = []
        for i in range(3):
            try:
                fld, _ = cells.solve_special_robin(mesh_c, k0p, i)
            except ConvergenceFailure as exc:
                raise SchedulerError(f"stage 'robin special {i}' failed: {exc}") from exc
            specials.append(fld.values)
        _stage(terms, "robin-specials")
        inner1 = _inner_series(setup, mesh_c, slopes0, np.zeros(len(times)),
                               gamma0_gate=0.0, robin_coef=k0p,
                               stage="inner correction")
        terms.inner[ORDER_1] = inner1
        _stage(terms, "inner-correction", order=ORDER_1)
        use_phi0 = exponents_equal(regime.beta0, 0.0)
        traces = np.zeros((len(times), 3))
        for m, t in enumerate(times):
            drive = cells.InnerDrive(slopes=tuple(slopes0[m]),
                                     gamma0_fn=setup.data.phi0 if use_phi0 else None,
                                     t=float(t))
            src, bdata = cells.inner_rhs_arrays(mesh_c, drive)
            traces[m] = cells.compute_jumps_green(mesh_c, specials, src, bdata)
        for i in range(3):
            constants.jumps[(ORDER_1, i)] = traces[:, i].copy()
        _stage(terms, "green-traces", order=ORDER_1)
        try:
            terms.graph[ORDER_1] = solve_corrector_dirichlet(
                setup.geom, setup.data, setup.nl, regime, omega0,
                [traces[:, i] for i in range(3)], grids)
        except ConvergenceFailure as exc:
            raise SchedulerError(f"stage 'split corrector' failed: {exc}") from exc
        _stage(terms, "split-corrector", order=ORDER_1)

    else:  # regime B chain
        use_weights = bool(setup.numerics.get("v_formula_area_weights", False))
        k0p = float(setup.nl.kappa0_prime(np.array(0.0)))
        k0pp = float(setup.nl.kappa0_second(np.array(0.0)))
        phi0_raw = _phi0_series(setup, quad)

        def layer(order: str, m: int, **kw) -> float:
            t = float(times[m])
            vals = vertex_layer_values(terms.graph, setup.geom, setup.data, setup.nl,
                                       regime, t, area_weights=use_weights,
                                       phi0_gamma0_integral=phi0_raw[m], **kw)
            return vals[order]

        levels = len(times)
        v_ma0 = np.array([layer(ORDER_MA0, m) for m in range(levels)])
        constants.layer_values[ORDER_MA0] = v_ma0
        terms.layer_values[ORDER_MA0] = v_ma0
        _stage(terms, "layer-value", order=ORDER_MA0)
        try:
            terms.graph[ORDER_MA0] = solve_expansion_term(
                setup.geom, setup.data, setup.nl, regime, terms.graph, constants,
                ORDER_MA0, grids)
        except ConvergenceFailure as exc:
            raise SchedulerError(f"stage 'expansion {ORDER_MA0}' failed: {exc}") from exc
        _stage(terms, "expansion-term", order=ORDER_MA0)

        v_m2a0 = np.array([layer(ORDER_M2A0, m) for m in range(levels)])
        constants.layer_values[ORDER_M2A0] = v_m2a0
        terms.layer_values[ORDER_M2A0] = v_m2a0

        g0_vals = -k0p * v_ma0
        inner1 = _inner_series(setup, mesh_c, slopes0, g0_vals, gamma0_gate=0.0,
                               stage="inner correction")
        terms.inner[ORDER_1] = inner1
        for i in (1, 2):
            constants.jumps[(ORDER_1, i)] = inner1.constants[:, i].copy()
        _stage(terms, "inner-correction", order=ORDER_1)

        v_1 = np.array([layer(ORDER_1, m,
                              inner_gamma0_integral=inner1.gamma0_integrals[m])
                        for m in range(levels)])
        constants.layer_values[ORDER_1] = v_1
        terms.layer_values[ORDER_1] = v_1
        _stage(terms, "layer-value", order=ORDER_1)
        try:
            terms.graph[ORDER_1] = solve_expansion_term(
                setup.geom, setup.data, setup.nl, regime, terms.graph, constants,
                ORDER_1, grids)
        except ConvergenceFailure as exc:
            raise SchedulerError(f"stage 'expansion {ORDER_1}' failed: {exc}") from exc
        _stage(terms, "expansion-term", order=ORDER_1)

        slopes_ma0 = terms.graph[ORDER_MA0].vertex_fluxes / areas[None, :]
        g0_high = -k0p * v_m2a0 - 0.5 * k0pp * v_ma0 ** 2
        inner_high = _inner_series(setup, mesh_c, slopes_ma0, g0_high,
                                   gamma0_gate=-regime.alpha0,
                                   stage="inner correction (fractional)")
        terms.inner[ORDER_1MA0] = inner_high
        for i in (1, 2):
            constants.jumps[(ORDER_1MA0, i)] = inner_high.constants[:, i].copy()
        _stage(terms, "inner-correction", order=ORDER_1MA0)

        v_1ma0 = np.array([layer(ORDER_1MA0, m,
                                 inner_gamma0_integral=inner1.gamma0_integrals[m],
                                 inner_gamma0_integral_high=inner_high.gamma0_integrals[m])
                           for m in range(levels)])
        constants.layer_values[ORDER_1MA0] = v_1ma0
        terms.layer_values[ORDER_1MA0] = v_1ma0
        _stage(terms, "layer-value", order=ORDER_1MA0)
        try:
            terms.graph[ORDER_1MA0] = solve_expansion_term(
                setup.geom, setup.data, setup.nl, regime, terms.graph, constants,
                ORDER_1MA0, grids)
        except ConvergenceFailure as exc:
            raise SchedulerError(f"stage 'expansion {ORDER_1MA0}' failed: {exc}") from exc
        _stage(terms, "expansion-term", order=ORDER_1MA0)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, sol in sorted(terms.graph.items()):
            safe = name.replace("+", "p").replace("-", "m")
            io.write_graph_csv(out / f"graph_{safe}.csv", sol)
            io.write_vertex_trace_csv(out / f"vertex_{safe}.csv", sol)
        io.write_json(out / "manifest.json", {
            "config_digest": setup.digest,
            "regime": regime.regime,
            "stages": terms.provenance.get("stages", []),
            "orders": sorted(terms.graph),
        })
    return terms


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------


def _synthetic_reference(approx: ApproximationField, epsilon: float,
                         amplitude: float, power: float):
    """Reference stand-in: the approximation plus a mismatch of norm
    amplitude * eps^power (spatially uniform, normalized by the domain size)."""
    mesh = approx.mesh
    scale = amplitude * epsilon ** power / np.sqrt(mesh.n_voxels * mesh.voxel_volume)
    ramp = np.minimum(approx.times / max(approx.times[-1], 1e-30), 1.0)
    values = approx.values + scale * ramp[:, None]
    from .reference import TimeSeriesField
    return TimeSeriesField(mesh=mesh, times=approx.times, values=values)


def run_convergence_study(setup: ProblemSetup, plan: StudyPlan) -> dict:
    """Sweep epsilon: reference solve, both approximation orders, norms, fits."""
    if plan.kind != "full-convergence":
        raise ValueError("plan kind must be 'full-convergence'")
    if len(plan.epsilons) < 3:
        raise ValueError("a convergence study needs at least three epsilons")
    acfg = AsymptoticConfig(a=float(setup.numerics["cutoff_a"]),
                            epsilons=plan.epsilons, order=plan.order)
    terms = run_term_scheduler(setup, out_dir=None)
    times = setup.times
    rows: list[dict] = []
    failures: list[dict] = []
    report: dict = {"config_digest": setup.digest, "regime": setup.regime.regime,
                    "order": plan.order, "a": acfg.a}

    for eps in plan.epsilons:
        t0 = time.time()
        try:
            mesh3 = build_junction_mesh(setup.geom, eps,
                                        int(setup.numerics["resolution"]))
            approx1 = assemble_approximation(terms, mesh3, eps, acfg, order="first")
            approx0 = assemble_approximation(terms, mesh3, eps, acfg, order="zeroth")
            if plan.synthetic is not None:
                u = _synthetic_reference(approx1, eps, *plan.synthetic)
            else:
                prob = ReferenceProblem(mesh3, setup.geom, setup.data, setup.nl,
                                        setup.regime, eps)
                u = prob.solve(times)
            errs = error_norms(u, approx1, terms, eps)
            errs0 = error_norms(u, approx0)
            a_priori = (space_time_norm(u, "L2_in_space_max_in_time")
                        + space_time_norm(u, "L2_time_H1_space")) / eps
            omega = np.sqrt(mesh3.n_voxels * mesh3.voxel_volume)
            row = {
                "epsilon": eps,
                "maxL2": errs["maxL2"],
                "L2H1": errs["L2H1"],
                "nodeGrad": errs.get("nodeGrad", float("nan")),
                "maxL2_zeroth": errs0["maxL2"],
                "L2H1_zeroth": errs0["L2H1"],
                "mu": predicted_error_scale(setup.regime, acfg.a, eps),
                "sqrt_volume": omega,
                "a_priori_scaled": a_priori,
                "node_smallness": node_smallness(u, eps),
                "voxels": mesh3.n_voxels,
                "wall_time": time.time() - t0,
            }
            rows.append(row)
        except (ConvergenceFailure, SchedulerError, ValueError) as exc:
            failures.append({"epsilon": eps, "error": str(exc)})

    report["rows"] = rows
    report["failures"] = failures
    if len(rows) >= 2:
        for key in ("maxL2", "L2H1"):
            pairs = [(r["epsilon"], r[key]) for r in rows if r[key] > 0.0]
            if len(pairs) >= 2:
                report[f"eoc_{key}"] = fit_eoc(pairs)
    # running order column for the CSV
    for idx, row in enumerate(rows):
        if idx == 0:
            row["order_running"] = float("nan")
        else:
            e0, e1 = rows[idx - 1], row
            row["order_running"] = float(
                np.log(e0["L2H1"] / e1["L2H1"]) / np.log(e0["epsilon"] / e1["epsilon"]))

    if plan.out_dir is not None:
        out = Path(plan.out_dir)
        (out / "plots").mkdir(parents=True, exist_ok=True)
        io.write_convergence_csv(out / "convergence.csv", rows)
        io.write_json(out / "report.json", report)
        if rows:
            eps_list = [r["epsilon"] for r in rows]
            io.write_loglog_svg(out / "plots" / "convergence.svg", eps_list, {
                "maxL2": [r["maxL2"] for r in rows],
                "L2H1": [r["L2H1"] for r in rows],
                "mu": [r["mu"] for r in rows],
            }, title="approximation error vs epsilon")
    return report


# ---------------------------------------------------------------------------
# validation suite
# ---------------------------------------------------------------------------


def _check(name: str, measured: float, tolerance: float, larger_ok: bool = False) -> dict:
    passed = measured >= -tolerance if larger_ok else abs(measured) <= tolerance
    return {"name": name, "measured": float(measured), "tolerance": float(tolerance),
            "passed": bool(passed)}


def run_validate(setup: ProblemSetup, plan: StudyPlan) -> dict:
    """Execute the cross-module invariant suite and report measured values."""
    if plan.kind != "validate":
        raise ValueError("plan kind must be 'validate'")
    if not plan.epsilons:
        raise ValueError("validation needs at least one epsilon")
    rng = np.random.default_rng(plan.seed)
    checks: list[dict] = []
    eps = plan.epsilons[0]
    grids = _graph_grids(setup)
    times = setup.times

    # nonlinearity probes
    probes = [(float(s), float(x), float(t)) for s, x, t in
              zip(rng.uniform(-3, 3, 24), rng.uniform(0, 1, 24),
                  rng.uniform(0, setup.data.T, 24))]
    rep = model.validate_nonlinearities(setup.nl, probes, setup.regime)
    checks.append({"name": "nonlinearity-bounds", "measured": float(len(rep.bound_violations)
                   + len(rep.derivative_mismatches)), "tolerance": 0.0,
                   "passed": rep.passed})

    # graph monotonicity (weak-form pairing)
    margin = np.inf
    for _ in range(40):
        s1 = ([rng.standard_normal(g.n_cells) for g in grids], rng.standard_normal())
        s2 = ([rng.standard_normal(g.n_cells) for g in grids], rng.standard_normal())
        pairing, semi = graph_operator_pairing(setup.geom, setup.nl, setup.regime,
                                               grids, s1, s2, 0.5 * setup.data.T)
        margin = min(margin, (pairing - semi) / max(1.0, semi))
    checks.append(_check("graph-monotonicity-margin", margin, 1e-10, larger_ok=True))

    # junction monotonicity and energy decay
    mesh3 = build_junction_mesh(setup.geom, eps, int(setup.numerics["resolution"]))
    prob = ReferenceProblem(mesh3, setup.geom, setup.data, setup.nl, setup.regime, eps)
    margin3 = np.inf
    for _ in range(40):
        u1 = rng.standard_normal(mesh3.n_voxels)
        u2 = rng.standard_normal(mesh3.n_voxels)
        diff, grad = operator_pairing(prob, u1, u2, 0.5 * setup.data.T)
        margin3 = min(margin3, diff / max(1.0, grad))
    checks.append(_check("junction-monotonicity-margin", margin3, 1e-10, larger_ok=True))

    zero = model.zero_data(setup.data.T)
    prob0 = ReferenceProblem(mesh3, setup.geom, zero, setup.nl, setup.regime, eps)
    state = np.exp(-np.sum((mesh3.centers / (2.0 * eps)) ** 2, axis=1))
    decay_margin = np.inf
    prev = float(np.linalg.norm(state))
    for m in range(4):
        state = prob0.step_implicit(state, 0.1 * (m + 1) * setup.data.T, 0.02 * setup.data.T)
        cur = float(np.linalg.norm(state))
        decay_margin = min(decay_margin, prev - cur)
        prev = cur
    checks.append(_check("junction-energy-decay", decay_margin, 1e-12, larger_ok=True))

    # mesh scaling laws (exact voxelization)
    gamma0, node_vol = model.node_measures(setup.geom)
    checks.append(_check("gamma0-area-scaling",
                         mesh3.facet_area(("node",)) - eps ** 2 * gamma0, 1e-12))
    node_meas = float(np.sum(mesh3.region_of == -1)) * mesh3.voxel_volume
    checks.append(_check("node-volume-scaling", node_meas - eps ** 3 * node_vol, 1e-15))

    # cell-problem identities on the configured geometry
    quad = None
    try:
        mesh_c, quad, _ = _cell_setup(setup)
        fld, _ = cells.solve_special_neumann(mesh_c, 1)
        checks.append(_check("cell-neumann-compatibility", fld.compatibility_residual, 1e-12))
        k0p = max(float(setup.nl.kappa0_prime(np.array(0.0))), 0.5)
        fld_r, _ = cells.solve_special_robin(mesh_c, k0p, 0)
        checks.append(_check("cell-robin-flux-balance", fld_r.flux_balance_residual(), 1e-10))
    except (ValueError, ConvergenceFailure) as exc:
        checks.append({"name": "cell-identities", "measured": float("nan"),
                       "tolerance": 0.0, "passed": False, "error": str(exc)})

    # degenerate pipe exactness (standard fixture)
    pipe_geom = model.JunctionGeometry(
        ell0=0.25, lengths=(1.0, 1.0, 1.0),
        profiles=tuple(model.constant_profile("square", 0.5) for _ in range(3)))
    pipe_spec = cells.InnerDomainSpec(geometry=pipe_geom, radius=12.0, hv=0.125,
                                      outlet_axes=((0, 1), (0, -1)))
    pipe_mesh = cells.build_inner_mesh(pipe_spec)
    _, pipe_rep = cells.solve_special_neumann(pipe_mesh, 1)
    checks.append(_check("pipe-farfield-constants",
                         float(np.max(np.abs(pipe_rep.constant))), 1e-6))

    # error-scale decay: mu(eps)/eps decreasing along eps = 2^-k
    a = float(setup.numerics["cutoff_a"])
    ratios = [predicted_error_scale(setup.regime, a, 2.0 ** -k) / 2.0 ** -k
              for k in range(2, 7)]
    mono = min(r0 - r1 for r0, r1 in zip(ratios, ratios[1:]))
    checks.append(_check("error-scale-super-eps", mono, 0.0, larger_ok=True))

    # regime-A Kirchhoff residual on a short solve
    if setup.regime.regime == REGIME_A:
        sol = solve_limit_problem(setup.geom, setup.data, setup.nl, setup.regime,
                                  grids, times, node_quadrature=quad)
        d0 = node_flux_series(setup.geom, setup.data, setup.regime, quad)
        worst = max(abs(vertex_flux_residual(sol, setup.geom, setup.nl, setup.regime,
                                             float(t), d0(float(t))))
                    for t in times[1:])
        checks.append(_check("kirchhoff-residual", worst, 1e-8))

    passed = all(c["passed"] for c in checks)
    result = {"config_digest": setup.digest, "seed": plan.seed,
              "checks": checks, "passed": passed}
    if plan.out_dir is not None:
        out = Path(plan.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "validation.json", result)
    return result
