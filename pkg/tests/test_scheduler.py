from __future__ import annotations

import copy
import json

import numpy as np
import pytest

from starjunction import cli, model, scheduler
from starjunction.config import ConfigError, setup_from_dict
from starjunction.graph import ORDER_0, ORDER_1, ORDER_MA0, ORDER_1MA0


def fast_config(alpha=(0.0, 1.0, 1.0, 1.0), beta=(0.0, 1.0, 1.0, 1.0), **kw):
    cfg = {
        "geometry": {"ell0": 0.25, "lengths": [1.0, 1.0, 1.0],
                     "profile": {"kind": "square", "value": 0.25}},
        "regime": {"alpha": list(alpha), "beta": list(beta)},
        "nonlinearity": {"k": {"preset": "cosine", "lam": 1.0},
                         "kappa0": {"preset": "linear-saturating", "rate": 1.0,
                                    "lam": 0.5, "nu": 1.0, "symmetric": True},
                         "kappa": {"preset": "michaelis-menten"}},
        "data": {"f": {"preset": "separable", "coefficient": 2.0,
                       "time": {"poly": [0.0, 1.0]},
                       "space": [{"poly": [1.0, 0.3]}, {"poly": [1.0, -0.2]},
                                 {"poly": [1.0, 0.1]}]},
                 "phi0": {"preset": "separable", "coefficient": 1.0,
                          "time": {"poly": [0.0, 1.0]}},
                 "phi": {"preset": "zero"}},
        "time": {"T": 0.3, "steps": 15},
        "numerics": {"graph_cells": 32, "cell_radius": 8.0, "cell_hv": 1.0 / 16.0,
                     "resolution": 4},
    }
    cfg["numerics"].update(kw)
    return cfg


class TestStudyPlan:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown study kind"):
            scheduler.StudyPlan(kind="explore")

    def test_epsilons_decreasing(self):
        with pytest.raises(ValueError):
            scheduler.StudyPlan(kind="validate", epsilons=(0.05, 0.1))


class TestTermScheduler:
    def test_zero_data_all_terms_vanish(self):
        cfg = fast_config()
        cfg["nonlinearity"]["k"] = {"preset": "michaelis-menten"}  # k(0) = 0
        cfg["data"] = {"f": {"preset": "zero"}, "phi0": {"preset": "zero"},
                       "phi": {"preset": "zero"}}
        terms = scheduler.run_term_scheduler(setup_from_dict(cfg))
        for sol in terms.graph.values():
            for f in sol.fields:
                assert np.max(np.abs(f.values)) == 0.0
        for series in terms.inner.values():
            assert np.max(np.abs(series.values)) == 0.0

    def test_resonant_fractional_config_rejected_at_classification(self):
        cfg = fast_config(alpha=(-0.4, 1.6, 1.0, 1.0))
        with pytest.raises(ConfigError, match="outside the supported regimes"):
            scheduler.run_term_scheduler(setup_from_dict(cfg))

    def test_regime_a_stage_order(self):
        terms = scheduler.run_term_scheduler(setup_from_dict(fast_config()))
        stages = [s["stage"] for s in terms.provenance["stages"]]
        assert stages == ["limit-problem", "inner-correction",
                          "corrector-constants", "first-corrector"]
        assert sorted(terms.graph) == [ORDER_0, ORDER_1]
        terms.constants.validate()

    def test_regime_c_stage_order(self):
        cfg = fast_config(alpha=(-1.0, 1.0, 1.0, 1.0))
        terms = scheduler.run_term_scheduler(setup_from_dict(cfg))
        stages = [s["stage"] for s in terms.provenance["stages"]]
        assert stages == ["limit-problem", "robin-specials", "inner-correction",
                          "green-traces", "split-corrector"]

    def test_regime_b_chain_order(self):
        cfg = fast_config(alpha=(-0.4, 1.0, 1.0, 1.0),
                          v_formula_area_weights=True)
        terms = scheduler.run_term_scheduler(setup_from_dict(cfg))
        stages = [(s["stage"], s.get("order")) for s in terms.provenance["stages"]]
        assert stages == [
            ("limit-problem", ORDER_0),
            ("layer-value", ORDER_MA0),
            ("expansion-term", ORDER_MA0),
            ("inner-correction", ORDER_1),
            ("layer-value", ORDER_1),
            ("expansion-term", ORDER_1),
            ("inner-correction", ORDER_1MA0),
            ("layer-value", ORDER_1MA0),
            ("expansion-term", ORDER_1MA0),
        ]
        # green-route traces of the split corrector agree with the far field
        assert sorted(terms.inner) == [ORDER_1, ORDER_1MA0]

    def test_printed_layer_formula_rejected_for_non_unit_areas(self):
        cfg = fast_config(alpha=(-0.4, 1.0, 1.0, 1.0),
                          v_formula_area_weights=False)
        with pytest.raises(scheduler.SchedulerError, match="not solvable"):
            scheduler.run_term_scheduler(setup_from_dict(cfg))

    def test_rerun_is_bitwise_reproducible(self, tmp_path):
        cfg = fast_config()
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        scheduler.run_term_scheduler(setup_from_dict(cfg), out_dir=out1)
        scheduler.run_term_scheduler(setup_from_dict(cfg), out_dir=out2)
        for name in sorted(p.name for p in out1.iterdir()):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


class TestConvergenceStudy:
    def test_requires_enough_epsilons(self):
        setup = setup_from_dict(fast_config())
        plan = scheduler.StudyPlan(kind="full-convergence", epsilons=(0.2, 0.1))
        with pytest.raises(ValueError, match="three"):
            scheduler.run_convergence_study(setup, plan)

    def test_synthetic_power_law_recovers_order(self, tmp_path):
        # reference replaced by the approximation plus a known c * eps^p field
        setup = setup_from_dict(fast_config())
        p = 1.6
        plan = scheduler.StudyPlan(kind="full-convergence",
                                   epsilons=(0.2, 0.1, 0.05),
                                   out_dir=tmp_path, synthetic=(0.05, p))
        report = scheduler.run_convergence_study(setup, plan)
        assert not report["failures"]
        assert report["eoc_maxL2"]["order"] == pytest.approx(p, abs=0.01)
        assert report["eoc_L2H1"]["order"] == pytest.approx(p, abs=0.01)
        rows = report["rows"]
        for row in rows:
            assert row["maxL2"] >= 0.0 and np.isfinite(row["maxL2"])
            assert row["mu"] == pytest.approx(
                scheduler.predicted_error_scale(setup.regime, 0.75, row["epsilon"]),
                rel=1e-15)
        assert (tmp_path / "convergence.csv").exists()
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "plots" / "convergence.svg").exists()

    def test_report_json_is_loadable(self, tmp_path):
        setup = setup_from_dict(fast_config())
        plan = scheduler.StudyPlan(kind="full-convergence",
                                   epsilons=(0.2, 0.1, 0.05),
                                   out_dir=tmp_path, synthetic=(0.1, 1.0))
        scheduler.run_convergence_study(setup, plan)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["regime"] == "A"
        assert len(payload["rows"]) == 3


class TestValidate:
    def test_wrong_kind(self):
        setup = setup_from_dict(fast_config())
        with pytest.raises(ValueError, match="kind"):
            scheduler.run_validate(setup, scheduler.StudyPlan(kind="limit-only"))

    def test_empty_epsilons_usage_error(self):
        setup = setup_from_dict(fast_config())
        plan = scheduler.StudyPlan(kind="validate")
        with pytest.raises(ValueError, match="epsilon"):
            scheduler.run_validate(setup, plan)

    def test_default_config_passes(self, tmp_path):
        setup = setup_from_dict(fast_config())
        plan = scheduler.StudyPlan(kind="validate", epsilons=(0.2,),
                                   out_dir=tmp_path, seed=3)
        result = scheduler.run_validate(setup, plan)
        assert result["passed"], [c for c in result["checks"] if not c["passed"]]
        assert (tmp_path / "validation.json").exists()

    def test_bad_nonlinearity_reported_not_crashed(self):
        setup = setup_from_dict(fast_config())
        bad = (lambda s: -np.asarray(s, float),
               lambda s: np.full_like(np.asarray(s, float), -1.0),
               lambda s: np.zeros_like(np.asarray(s, float)))
        nl = model.nonlinearity_from_scalars(bad, model.k_linear(1.0),
                                             model.k_linear(0.0), k_plus=1.0)
        broken = scheduler.ProblemSetup(
            geom=setup.geom, regime=setup.regime, nl=nl, data=setup.data,
            steps=setup.steps, numerics=setup.numerics, digest="broken")
        plan = scheduler.StudyPlan(kind="validate", epsilons=(0.2,), seed=3)
        result = scheduler.run_validate(broken, plan)
        assert not result["passed"]
        failed = {c["name"] for c in result["checks"] if not c["passed"]}
        assert "nonlinearity-bounds" in failed
        assert "graph-monotonicity-margin" in failed


class TestCli:
    def test_config_error_exit_code(self, tmp_path):
        assert cli.main(["solve-graph", "--config", str(tmp_path / "x.json")]) == 2

    def test_solve_graph_end_to_end(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(fast_config()))
        out = tmp_path / "out"
        assert cli.main(["solve-graph", "--config", str(path),
                         "--out", str(out)]) == 0
        assert (out / "graph_0.csv").exists()
        assert (out / "manifest.json").exists()

    def test_unsupported_regime_is_config_error(self, tmp_path):
        cfg = fast_config(alpha=(0.0, 0.5, 1.0, 1.0))
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert cli.main(["solve-graph", "--config", str(path),
                         "--out", str(tmp_path / "o")]) == 2
