"""Problem statement data: geometry, exponent regimes, nonlinearities, data functions.

Everything in this module is dimensionless and immutable after construction.
The junction consists of an axis-aligned box node of half-side ``ell0`` with
three thin outlets, one per positive coordinate axis; outlet cross-sections
are circular (radius profile) or square (side profile).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "CrossSectionProfile",
    "JunctionGeometry",
    "RegimeParams",
    "NonlinearitySet",
    "DataFunctions",
    "EdgeGrid",
    "ValidationReport",
    "classify_regime",
    "cross_section_data",
    "node_measures",
    "validate_nonlinearities",
    "constant_profile",
    "bump_profile",
    "k_linear",
    "k_cosine",
    "k_michaelis_menten",
    "k_linear_saturating",
    "nonlinearity_from_scalars",
    "zero_data",
]

REGIME_A = "A"
REGIME_B = "B"
REGIME_C = "C"
REGIME_UNSUPPORTED = "Unsupported"

#: tolerance for exponent equality (Kronecker gates on real exponents)
EXPONENT_TOL = 1e-12


def exponents_equal(a: float, b: float) -> bool:
    return abs(a - b) <= EXPONENT_TOL * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossSectionProfile:
    """Cross-section of one thin outlet.

    ``kind`` is ``"circular"`` (``size(x)`` is the radius) or ``"square"``
    (``size(x)`` is the side).  The size function must be C^1, positive, and
    constant near both ends of the edge.
    """

    kind: str
    size: Callable[[float], float]
    is_constant: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("circular", "square"):
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def area(self, x):
        s = self.size(x)
        return math.pi * s * s if self.kind == "circular" else s * s

    def perimeter(self, x):
        s = self.size(x)
        return 2.0 * math.pi * s if self.kind == "circular" else 4.0 * s

    def port_side(self) -> float:
        """Side of the (equal-area) square port this profile opens at x=0."""
        s = self.size(0.0)
        return math.sqrt(math.pi) * s if self.kind == "circular" else s


def constant_profile(kind: str, value: float) -> CrossSectionProfile:
    if value <= 0.0:
        raise ValueError("profile size must be positive")
    return CrossSectionProfile(kind, lambda x, v=value: v, is_constant=True)


def bump_profile(kind: str, base: float, amplitude: float, center: float,
                 width: float) -> CrossSectionProfile:
    """Profile equal to ``base`` near the ends with a smooth C^2 bump inside."""

    def size(x: float) -> float:
        u = (x - center) / width
        if abs(u) >= 1.0:
            return base
        return base + amplitude * math.cos(0.5 * math.pi * u) ** 4

    if base <= 0.0 or base + min(0.0, amplitude) <= 0.0:
        raise ValueError("bump profile must stay positive")
    return CrossSectionProfile(kind, size, is_constant=(amplitude == 0.0))


@dataclass(frozen=True)
class JunctionGeometry:
    """Dimensionless blueprint of the thin star-shaped junction.

    ``ell0`` is the node half-side in the fast variables; edge ``i`` occupies
    ``(0, lengths[i])`` in the slow axial variable and carries ``profiles[i]``.
    """

    ell0: float
    lengths: tuple[float, float, float]
    profiles: tuple[CrossSectionProfile, CrossSectionProfile, CrossSectionProfile]

    def __post_init__(self) -> None:
        if not (0.0 < self.ell0 < 1.0 / 3.0):
            raise ValueError("ell0 must lie in (0, 1/3)")
        if len(self.lengths) != 3 or len(self.profiles) != 3:
            raise ValueError("exactly three edges are supported")
        for i, ell in enumerate(self.lengths):
            if ell < 1.0:
                raise ValueError(f"edge length {ell} < 1 on edge {i}")

    def area(self, i: int, x: float) -> float:
        return self.profiles[i].area(x)

    def perimeter(self, i: int, x: float) -> float:
        return self.profiles[i].perimeter(x)

    def port_sides(self) -> tuple[float, float, float]:
        return tuple(p.port_side() for p in self.profiles)


def cross_section_data(profile: CrossSectionProfile, x: float,
                       x_max: float | None = None) -> tuple[float, float]:
    """Area and perimeter of the cross-section at axial position ``x``."""
    if x < 0.0 or (x_max is not None and x > x_max):
        raise ValueError(f"x={x} outside the edge")
    return profile.area(x), profile.perimeter(x)


def node_measures(geom: JunctionGeometry) -> tuple[float, float]:
    """(lateral node-surface area, node volume) of the box node.

    The node is the box of half-side ``ell0``; its lateral surface excludes
    the three port openings, whose areas equal the outlet cross-sections.
    """
    side = 2.0 * geom.ell0
    for i, prof in enumerate(geom.profiles):
        if prof.port_side() > side + 1e-12:
            raise ValueError(f"port of edge {i} larger than the node face")
    volume = side ** 3
    gamma0 = 6.0 * side * side - sum(p.port_side() ** 2 for p in geom.profiles)
    return gamma0, volume


# ---------------------------------------------------------------------------
# exponent regimes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeParams:
    """Boundary-intensity exponents and the regime they select."""

    alpha: tuple[float, float, float, float]
    beta: tuple[float, float, float, float]
    regime: str

    @property
    def alpha0(self) -> float:
        return self.alpha[0]

    @property
    def beta0(self) -> float:
        return self.beta[0]


def classify_regime(alpha: Sequence[float], beta: Sequence[float]) -> RegimeParams:
    """Classify the exponent set into regime A, B, C or Unsupported.

    A: alpha0 >= 0; B: alpha0 in (-1, 0) with alpha_i != 2+alpha0;
    C: alpha0 = -1.  In all regimes alpha_i >= 1 on the edges.  Invalid
    beta values are rejected outright (they violate the standing
    assumptions rather than selecting a different limit).
    """
    alpha = tuple(float(a) for a in alpha)
    beta = tuple(float(b) for b in beta)
    if len(alpha) != 4 or len(beta) != 4:
        raise ValueError("alpha and beta must have four entries")
    if not all(np.isfinite(alpha)) or not all(np.isfinite(beta)):
        raise ValueError("exponents must be finite")
    if beta[0] < 0.0:
        raise ValueError("beta0 must be >= 0")
    for b in beta[1:]:
        if b < 1.0:
            raise ValueError("edge beta exponents must be >= 1")

    edges_ok = all(a >= 1.0 for a in alpha[1:])
    a0 = alpha[0]
    if not edges_ok:
        regime = REGIME_UNSUPPORTED
    elif a0 >= 0.0:
        regime = REGIME_A
    elif exponents_equal(a0, -1.0):
        regime = REGIME_C
    elif -1.0 < a0 < 0.0:
        if any(exponents_equal(a, 2.0 + a0) for a in alpha[1:]):
            regime = REGIME_UNSUPPORTED
        else:
            regime = REGIME_B
    else:
        regime = REGIME_UNSUPPORTED
    return RegimeParams(alpha=alpha, beta=beta, regime=regime)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

ScalarFn = Callable[[np.ndarray], np.ndarray]
EdgeFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class NonlinearitySet:
    """Reaction term, node absorption and the three lateral absorptions.

    Derivatives are supplied by the caller and audited by finite differences
    in :func:`validate_nonlinearities` instead of being derived symbolically.
    """

    k: ScalarFn
    k_prime: ScalarFn
    k_second: ScalarFn
    kappa0: ScalarFn
    kappa0_prime: ScalarFn
    kappa0_second: ScalarFn
    kappa: tuple[EdgeFn, EdgeFn, EdgeFn]
    kappa_prime: tuple[EdgeFn, EdgeFn, EdgeFn]
    kappa_second: tuple[EdgeFn, EdgeFn, EdgeFn]
    k_plus: float
    k_minus: float | None = None


def _vectorized(fn):
    return lambda s: fn(np.asarray(s, dtype=float))


def k_linear(rate: float = 1.0) -> tuple[ScalarFn, ScalarFn, ScalarFn, float]:
    if rate < 0.0:
        raise ValueError("rate must be >= 0")
    return (
        _vectorized(lambda s: rate * s),
        _vectorized(lambda s: np.full_like(s, rate)),
        _vectorized(lambda s: np.zeros_like(s)),
        rate,
    )


def k_cosine(lam: float = 1.0) -> tuple[ScalarFn, ScalarFn, ScalarFn, float]:
    """k(s) = lam*s + cos(s); monotone for lam >= 1 with k' in [lam-1, lam+1]."""
    if lam < 1.0:
        raise ValueError("cosine preset requires lam >= 1")
    return (
        _vectorized(lambda s: lam * s + np.cos(s)),
        _vectorized(lambda s: lam - np.sin(s)),
        _vectorized(lambda s: -np.cos(s)),
        lam + 1.0,
    )


def k_michaelis_menten(lam: float = 1.0, nu: float = 1.0,
                       symmetric: bool = True) -> tuple[ScalarFn, ScalarFn, ScalarFn, float]:
    """Saturating uptake k(s) = lam*s/(1 + nu*s).

    With ``symmetric`` the denominator uses ``|s|`` so the monotonicity bounds
    hold on all of R (the two forms agree for s >= 0).  The symmetric form has
    a jump in the second derivative at 0; its declared second derivative is the
    odd extension with value 0 at the origin, matching central differences.
    """
    if lam <= 0.0 or nu <= 0.0:
        raise ValueError("lam and nu must be positive")
    if symmetric:
        def val(s):
            return lam * s / (1.0 + nu * np.abs(s))

        def der(s):
            return lam / (1.0 + nu * np.abs(s)) ** 2

        def der2(s):
            return -2.0 * lam * nu * np.sign(s) / (1.0 + nu * np.abs(s)) ** 3
    else:
        def val(s):
            return lam * s / (1.0 + nu * s)

        def der(s):
            return lam / (1.0 + nu * s) ** 2

        def der2(s):
            return -2.0 * lam * nu / (1.0 + nu * s) ** 3

    return _vectorized(val), _vectorized(der), _vectorized(der2), lam


def k_linear_saturating(rate: float = 1.0, lam: float = 1.0, nu: float = 1.0,
                        symmetric: bool = True
                        ) -> tuple[ScalarFn, ScalarFn, ScalarFn, float]:
    """Linear uptake plus a saturating part: rate*s + lam*s/(1 + nu*s).

    The derivative stays within [rate, rate + lam], providing the positive
    lower slope bound the zero-absorption regimes require, while keeping a
    nontrivial curvature at the origin in the asymmetric variant.
    """
    if rate <= 0.0:
        raise ValueError("rate must be positive")
    lv, lp, lpp, _ = k_linear(rate)
    mv, mp, mpp, _ = k_michaelis_menten(lam, nu, symmetric)
    return (
        lambda s: lv(s) + mv(s),
        lambda s: lp(s) + mp(s),
        lambda s: lpp(s) + mpp(s),
        rate + lam,
    )


def _lift_scalar_to_edge(fn: ScalarFn) -> EdgeFn:
    return lambda s, x, t: fn(s)


def nonlinearity_from_scalars(k_triplet, kappa0_triplet, kappa_triplet,
                              k_plus: float, k_minus: float | None = None
                              ) -> NonlinearitySet:
    """Assemble a :class:`NonlinearitySet` from (value, d/ds, d2/ds2) triplets.

    ``kappa_triplet`` is used for all three edges; edge nonlinearities ignore
    (x, t) unless the caller builds the set directly.
    """
    kv, kp, kpp = k_triplet[:3]
    k0v, k0p, k0pp = kappa0_triplet[:3]
    cv, cp, cpp = kappa_triplet[:3]
    edge_v = tuple(_lift_scalar_to_edge(cv) for _ in range(3))
    edge_p = tuple(_lift_scalar_to_edge(cp) for _ in range(3))
    edge_pp = tuple(_lift_scalar_to_edge(cpp) for _ in range(3))
    return NonlinearitySet(
        k=kv, k_prime=kp, k_second=kpp,
        kappa0=k0v, kappa0_prime=k0p, kappa0_second=k0pp,
        kappa=edge_v, kappa_prime=edge_p, kappa_second=edge_pp,
        k_plus=k_plus, k_minus=k_minus,
    )


@dataclass
class ValidationReport:
    """Outcome of probing a nonlinearity set; report-only, never raises."""

    bound_violations: list[str] = field(default_factory=list)
    derivative_mismatches: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.bound_violations and not self.derivative_mismatches


def _fd_check(report, name, fn, dfn, s, x=None, t=None, rel_tol=1e-5):
    h = 1e-6 * max(1.0, abs(s))
    if x is None:
        num = (fn(np.array(s + h)) - fn(np.array(s - h))) / (2.0 * h)
        dec = dfn(np.array(s))
    else:
        num = (fn(np.array(s + h), x, t) - fn(np.array(s - h), x, t)) / (2.0 * h)
        dec = dfn(np.array(s), x, t)
    num = float(num)
    dec = float(dec)
    if abs(num - dec) > rel_tol * max(1.0, abs(num), abs(dec)):
        report.derivative_mismatches.append(
            f"{name}'({s:.6g}) declared {dec:.8g} vs finite-difference {num:.8g}")


def validate_nonlinearities(nl: NonlinearitySet,
                            probes: Sequence[tuple[float, float, float]],
                            regime: RegimeParams | None = None) -> ValidationReport:
    """Probe monotonicity bounds and audit the supplied derivatives.

    Every probe is a ``(s, x, t)`` triple.  Bounds checked: 0 <= k' <= k_plus,
    0 <= kappa0' <= k_plus, 0 <= d_s kappa_i <= k_plus; in regimes B/C also
    kappa0(0) = 0 and k_minus <= kappa0'.  Derivatives are cross-checked by
    central differences at relative tolerance 1e-5.  Report-only.
    """
    if len(probes) == 0:
        raise ValueError("probe set must be nonempty")
    report = ValidationReport()
    zero_absorption = regime is not None and regime.regime in (REGIME_B, REGIME_C)
    tol = 1e-10

    if zero_absorption:
        v0 = float(nl.kappa0(np.array(0.0)))
        if abs(v0) > tol:
            report.bound_violations.append(f"kappa0(0) = {v0:.3g} != 0")

    for (s, x, t) in probes:
        kp = float(nl.k_prime(np.array(s)))
        if kp < -tol or kp > nl.k_plus + tol:
            report.bound_violations.append(f"k'({s:.6g}) = {kp:.6g} outside [0, {nl.k_plus}]")
        k0p = float(nl.kappa0_prime(np.array(s)))
        if k0p < -tol or k0p > nl.k_plus + tol:
            report.bound_violations.append(f"kappa0'({s:.6g}) = {k0p:.6g} outside [0, {nl.k_plus}]")
        if zero_absorption and nl.k_minus is not None and k0p < nl.k_minus - tol:
            report.bound_violations.append(
                f"kappa0'({s:.6g}) = {k0p:.6g} below k_minus = {nl.k_minus}")
        for i in range(3):
            cp = float(nl.kappa_prime[i](np.array(s), x, t))
            if cp < -tol or cp > nl.k_plus + tol:
                report.bound_violations.append(
                    f"d_s kappa_{i + 1}({s:.6g}) = {cp:.6g} outside [0, {nl.k_plus}]")
        _fd_check(report, "k", nl.k, nl.k_prime, s)
        _fd_check(report, "kappa0", nl.kappa0, nl.kappa0_prime, s)
        for i in range(3):
            _fd_check(report, f"kappa_{i + 1}", nl.kappa[i], nl.kappa_prime[i], s, x, t)
    return report


# ---------------------------------------------------------------------------
# data functions and grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DataFunctions:
    """Right-hand sides of the problem.

    ``f(points, t)`` takes (..., 3) slow coordinates; ``phi0(xi, t)`` takes
    (..., 3) fast coordinates on the node surface; ``phi[i](xi_bar, x, t)``
    takes (..., 2) fast transverse coordinates plus the axial position.
    """

    f: Callable[[np.ndarray, float], np.ndarray]
    phi0: Callable[[np.ndarray, float], np.ndarray]
    phi: tuple[Callable, Callable, Callable]
    T: float

    def __post_init__(self) -> None:
        if self.T <= 0.0:
            raise ValueError("time horizon must be positive")


def zero_data(T: float = 1.0) -> DataFunctions:
    zero3 = lambda p, t: np.zeros(np.shape(p)[:-1])
    zero_edge = lambda xb, x, t: np.zeros(np.shape(xb)[:-1])
    return DataFunctions(f=zero3, phi0=zero3, phi=(zero_edge,) * 3, T=T)


@dataclass(frozen=True)
class EdgeGrid:
    """Uniform cell-centered grid on one edge; ``nodes`` are the cell faces."""

    n_cells: int
    x_start: float
    x_end: float

    def __post_init__(self) -> None:
        if self.n_cells < 2:
            raise ValueError("need at least 2 cells")
        if self.x_end <= self.x_start:
            raise ValueError("empty edge interval")

    @property
    def spacing(self) -> float:
        return (self.x_end - self.x_start) / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_start, self.x_end, self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        h = self.spacing
        return self.x_start + h * (np.arange(self.n_cells) + 0.5)
