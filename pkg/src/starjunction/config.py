"""JSON problem configurations: geometry, exponents, preset nonlinearities and data.

Config mode only accepts the named presets; arbitrary callables are a
code-level API and are rejected here so that study runs stay reproducible
from the file alone.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model

__all__ = ["ConfigError", "ProblemSetup", "load_config", "setup_from_dict"]


class ConfigError(ValueError):
    """Invalid or unsupported problem configuration."""


@dataclass
class ProblemSetup:
    geom: model.JunctionGeometry
    regime: model.RegimeParams
    nl: model.NonlinearitySet
    data: model.DataFunctions
    steps: int
    numerics: dict
    digest: str

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.data.T, self.steps + 1)


_NUMERICS_DEFAULTS = {
    "graph_cells": 96,
    "cell_radius": 8.0,
    "cell_hv": 1.0 / 16.0,
    "resolution": 4,
    "cutoff_a": 0.75,
    "v_formula_area_weights": False,
}


def _require(mapping: dict, key: str, where: str):
    try:
        return mapping[key]
    except (KeyError, TypeError):
        raise ConfigError(f"missing {key!r} in the {where} block") from None


# -- geometry ---------------------------------------------------------------


def _build_profile(spec: dict) -> model.CrossSectionProfile:
    kind = _require(spec, "kind", "profile")
    if kind not in ("circular", "square"):
        raise ConfigError(f"unknown profile kind {kind!r}")
    if "value" in spec:
        return model.constant_profile(kind, float(spec["value"]))
    if "bump" in spec:
        b = spec["bump"]
        return model.bump_profile(kind, float(_require(b, "base", "bump")),
                                  float(_require(b, "amplitude", "bump")),
                                  float(_require(b, "center", "bump")),
                                  float(_require(b, "width", "bump")))
    raise ConfigError("profile needs a 'value' or a 'bump' block")


def _build_geometry(block: dict) -> model.JunctionGeometry:
    ell0 = float(_require(block, "ell0", "geometry"))
    lengths = tuple(float(v) for v in _require(block, "lengths", "geometry"))
    if "profiles" in block:
        profs = [_build_profile(p) for p in block["profiles"]]
    else:
        profs = [_build_profile(_require(block, "profile", "geometry"))] * 3
    if len(profs) != 3 or len(lengths) != 3:
        raise ConfigError("geometry needs exactly three edges")
    try:
        return model.JunctionGeometry(ell0=ell0, lengths=lengths, profiles=tuple(profs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- nonlinearities ----------------------------------------------------------


def _build_scalar_triplet(spec: dict):
    preset = _require(spec, "preset", "nonlinearity")
    if preset == "linear":
        trip = model.k_linear(float(spec.get("rate", 1.0)))
    elif preset == "cosine":
        trip = model.k_cosine(float(spec.get("lam", 1.0)))
    elif preset == "michaelis-menten":
        trip = model.k_michaelis_menten(float(spec.get("lam", 1.0)),
                                        float(spec.get("nu", 1.0)),
                                        bool(spec.get("symmetric", True)))
    elif preset == "linear-saturating":
        trip = model.k_linear_saturating(float(spec.get("rate", 1.0)),
                                         float(spec.get("lam", 1.0)),
                                         float(spec.get("nu", 1.0)),
                                         bool(spec.get("symmetric", True)))
    elif preset == "custom":
        raise ConfigError("custom nonlinearities are rejected in config mode")
    else:
        raise ConfigError(f"unknown nonlinearity preset {preset!r}")
    return trip


def _k_minus_of(spec: dict) -> float | None:
    preset = spec["preset"]
    if preset == "linear":
        rate = float(spec.get("rate", 1.0))
        return rate if rate > 0.0 else None
    if preset == "linear-saturating":
        return float(spec.get("rate", 1.0))
    return None


def _build_nonlinearity(block: dict, regime: model.RegimeParams) -> model.NonlinearitySet:
    k_spec = _require(block, "k", "nonlinearity")
    k0_spec = _require(block, "kappa0", "nonlinearity")
    kap = block.get("kappa", {"preset": "linear", "rate": 0.0})
    kap_specs = kap if isinstance(kap, list) else [kap] * 3
    if len(kap_specs) != 3:
        raise ConfigError("kappa needs one preset or a list of three")

    kt = _build_scalar_triplet(k_spec)
    k0t = _build_scalar_triplet(k0_spec)
    kap_t = [_build_scalar_triplet(s) for s in kap_specs]
    k_plus = float(block.get("k_plus", max(kt[3], k0t[3], *(t[3] for t in kap_t))))
    k_minus = block.get("k_minus", _k_minus_of(k0_spec))
    nl = model.NonlinearitySet(
        k=kt[0], k_prime=kt[1], k_second=kt[2],
        kappa0=k0t[0], kappa0_prime=k0t[1], kappa0_second=k0t[2],
        kappa=tuple(lambda s, x, t, f=t0[0]: f(s) for t0 in kap_t),
        kappa_prime=tuple(lambda s, x, t, f=t0[1]: f(s) for t0 in kap_t),
        kappa_second=tuple(lambda s, x, t, f=t0[2]: f(s) for t0 in kap_t),
        k_plus=k_plus, k_minus=None if k_minus is None else float(k_minus),
    )
    if regime.regime in (model.REGIME_B, model.REGIME_C):
        if abs(float(nl.kappa0(np.array(0.0)))) > 1e-12:
            raise ConfigError("regimes B and C require zero absorption at the origin")
        if nl.k_minus is None or nl.k_minus <= 0.0:
            raise ConfigError("regimes B and C require a positive lower slope bound"
                              " on the node absorption (use 'linear' or"
                              " 'linear-saturating' for kappa0)")
    return nl


# -- data -------------------------------------------------------------------


def _factor_1d(spec) -> callable:
    if spec in (None, "one") or spec == {}:
        return lambda s: np.ones_like(np.asarray(s, dtype=float))
    if "poly" in spec:
        coeffs = [float(c) for c in spec["poly"]]
        return lambda s, c=coeffs: np.polynomial.polynomial.polyval(
            np.asarray(s, dtype=float), c)
    if "cos" in spec:
        a, b = (list(spec["cos"]) + [0.0])[:2]
        return lambda s, a=float(a), b=float(b): np.cos(a * np.asarray(s, dtype=float) + b)
    if "sin" in spec:
        a, b = (list(spec["sin"]) + [0.0])[:2]
        return lambda s, a=float(a), b=float(b): np.sin(a * np.asarray(s, dtype=float) + b)
    raise ConfigError(f"unknown factor specification {spec!r}")


def _build_volume_data(spec: dict):
    preset = _require(spec, "preset", "data")
    if preset == "zero":
        return lambda p, t: np.zeros(np.shape(p)[:-1])
    if preset == "constant":
        c = float(_require(spec, "value", "data"))
        return lambda p, t: np.full(np.shape(p)[:-1], c)
    if preset == "separable":
        c = float(spec.get("coefficient", 1.0))
        ft = _factor_1d(spec.get("time"))
        fx = [_factor_1d(s) for s in spec.get("space", [None, None, None])]
        if len(fx) != 3:
            raise ConfigError("separable volume data needs three space factors")

        def fn(p, t, c=c, ft=ft, fx=fx):
            p = np.asarray(p, dtype=float)
            out = np.full(p.shape[:-1], c * float(ft(t)))
            for i in range(3):
                out = out * fx[i](p[..., i])
            return out

        return fn
    if preset == "custom":
        raise ConfigError("custom data functions are rejected in config mode")
    raise ConfigError(f"unknown data preset {preset!r}")


def _build_edge_data(spec: dict):
    preset = _require(spec, "preset", "data")
    if preset == "zero":
        return lambda xb, x, t: np.zeros(np.shape(xb)[:-1])
    if preset == "constant":
        c = float(_require(spec, "value", "data"))
        return lambda xb, x, t: np.full(np.shape(xb)[:-1], c)
    if preset == "separable":
        c = float(spec.get("coefficient", 1.0))
        ft = _factor_1d(spec.get("time"))
        fa = _factor_1d(spec.get("axial"))
        tr = [_factor_1d(s) for s in spec.get("transverse", [None, None])]
        if len(tr) != 2:
            raise ConfigError("separable edge data needs two transverse factors")

        def fn(xb, x, t, c=c, ft=ft, fa=fa, tr=tr):
            xb = np.asarray(xb, dtype=float)
            out = np.full(xb.shape[:-1], c * float(ft(t)))
            out = out * tr[0](xb[..., 0]) * tr[1](xb[..., 1])
            return out * fa(np.asarray(x, dtype=float))

        return fn
    if preset == "custom":
        raise ConfigError("custom data functions are rejected in config mode")
    raise ConfigError(f"unknown data preset {preset!r}")


def _build_data(block: dict) -> tuple:
    f = _build_volume_data(_require(block, "f", "data"))
    phi0 = _build_volume_data(_require(block, "phi0", "data"))
    phi_spec = _require(block, "phi", "data")
    phi_specs = phi_spec if isinstance(phi_spec, list) else [phi_spec] * 3
    if len(phi_specs) != 3:
        raise ConfigError("phi needs one preset or a list of three")
    phi = tuple(_build_edge_data(s) for s in phi_specs)
    return f, phi0, phi


# -- top level ----------------------------------------------------------------


def setup_from_dict(cfg: dict) -> ProblemSetup:
    for key in ("geometry", "regime", "nonlinearity", "data", "time"):
        _require(cfg, key, "top-level")
    geom = _build_geometry(cfg["geometry"])
    reg_block = cfg["regime"]
    try:
        regime = model.classify_regime(_require(reg_block, "alpha", "regime"),
                                       _require(reg_block, "beta", "regime"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    nl = _build_nonlinearity(cfg["nonlinearity"], regime)
    f, phi0, phi = _build_data(cfg["data"])
    t_block = cfg["time"]
    T = float(_require(t_block, "T", "time"))
    steps = int(_require(t_block, "steps", "time"))
    if T <= 0.0 or steps < 1:
        raise ConfigError("time block needs T > 0 and steps >= 1")
    data = model.DataFunctions(f=f, phi0=phi0, phi=phi, T=T)
    numerics = dict(_NUMERICS_DEFAULTS)
    numerics.update(cfg.get("numerics", {}))
    digest = hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]
    return ProblemSetup(geom=geom, regime=regime, nl=nl, data=data,
                        steps=steps, numerics=numerics, digest=digest)


def load_config(path: str | Path) -> ProblemSetup:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return setup_from_dict(cfg)
