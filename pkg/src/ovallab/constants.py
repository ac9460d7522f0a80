"""Closed-form Lieb-Thirring constants and numerical certificates of the
inequalities linking them.

Scalar formulas use ``math.lgamma``; every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
from scipy.interpolate import CubicSpline

from .errors import DomainError, SplittingViolation
from .numerics import GridFunction

SQRT_PI = math.sqrt(math.pi)


def _check_gamma(gamma: float):
    if not gamma > 0.5:
        raise DomainError(f"gamma must exceed 1/2, got {gamma}")


def keller_constant(gamma: float) -> float:
    """One-bound-state constant ``L^1_{gamma,1}``."""
    _check_gamma(gamma)
    gm, gp = gamma - 0.5, gamma + 0.5
    # (gamma-1/2)^(gamma+1/2) / (gamma-1/2) combined so the gamma -> 1/2 limit is stable
    log_val = (
        -0.5 * math.log(math.pi)
        + gm * math.log(gm)
        - gp * math.log(gp)
        + math.lgamma(gamma + 1.0)
        - math.lgamma(gamma + 0.5)
    )
    return math.exp(log_val)


def semiclassical_constant(gamma: float, n: int = 1) -> float:
    """``L^c_{gamma,n} = 2^-n pi^-n/2 Gamma(gamma+1)/Gamma(gamma+1+n/2)``."""
    if gamma < 0 or n < 1:
        raise DomainError(f"need gamma >= 0 and n >= 1, got gamma={gamma}, n={n}")
    log_val = (
        -n * math.log(2.0)
        - 0.5 * n * math.log(math.pi)
        + math.lgamma(gamma + 1.0)
        - math.lgamma(gamma + 1.0 + 0.5 * n)
    )
    return math.exp(log_val)


def sobolev_constant(gamma: float) -> float:
    """``c(gamma)`` in ``int u'^2 >= c(gamma) (int u^(2(2g+1)/(2g-1)))^(2g-1)``."""
    _check_gamma(gamma)
    gm = gamma - 0.5
    log_root = (
        0.5 * math.log(math.pi / 2.0)
        + gamma * math.log(gamma)
        + math.lgamma(gamma + 0.5)
        - math.lgamma(gamma + 1.0)
        - gm * math.log(gm)
    )
    return math.exp(2.0 * log_root)


def appendix_constants(gamma: float) -> tuple[float, float]:
    """``(c(gamma), c_tilde(gamma))``; ``c_tilde`` is the optimum of ``A Y^(1/(2g+1)) - c Y`` over Y."""
    c = sobolev_constant(gamma)
    c_tilde = 2.0 * gamma / (c ** (1.0 / (2.0 * gamma)) * (2.0 * gamma + 1.0) ** ((2.0 * gamma + 1.0) / (2.0 * gamma)))
    return c, c_tilde


@dataclass(frozen=True)
class ConstantsRow:
    gamma: float
    L1: float
    Lc: float
    c_gamma: float
    c_tilde: float
    identity_residual: float
    ratio_R: float

    FIELDS = ("gamma", "L1", "Lc", "c", "c_tilde", "identity_residual", "ratio_R")

    def as_tuple(self) -> tuple:
        return (self.gamma, self.L1, self.Lc, self.c_gamma, self.c_tilde, self.identity_residual, self.ratio_R)


def constants_row(gamma: float) -> ConstantsRow:
    l1 = keller_constant(gamma)
    lc = semiclassical_constant(gamma, 1)
    c, ct = appendix_constants(gamma)
    return ConstantsRow(gamma, l1, lc, c, ct, abs(ct**gamma - l1), l1 / lc)


def keller_split_constant(poincare: float) -> float:
    """Smallest K making the sextic term of the split bound non-positive.

    With ``int u'^2 >= D int u^6`` the bound ``K int V^3/2 + (4/(27K^2) - D) int u^6``
    is optimal at ``K = 2/(3 sqrt(3 D))``; ``D = pi^2/4`` gives ``L^1_{1,1}``.
    """
    return 2.0 / (3.0 * math.sqrt(3.0 * poincare))


def known_bounds_table() -> dict:
    return {
        "eden_foias": 2.0 * math.sqrt(3.0) / 9.0,
        "two_state_halfbound": 4.0 * math.sqrt(6.0) / (9.0 * math.pi),
        "conjectured_L11": 4.0 * math.sqrt(3.0) / (9.0 * math.pi),
        "proven_L_half": 0.5,
    }


def split_residual(v_values: np.ndarray, density: np.ndarray, K: float) -> np.ndarray:
    """``K V^3/2 + 4/(27 K^2) rho^3 - V rho`` at each node; nonnegative by AM-GM."""
    return K * v_values**1.5 + 4.0 / (27.0 * K**2) * density**3 - v_values * density


def _check_split(v_values, density, K):
    if K <= 0:
        raise DomainError("K must be positive")
    resid = split_residual(v_values, density, K)
    scale = np.maximum(v_values * density, 1.0)
    bad = np.flatnonzero(resid < -1e-12 * scale)
    if bad.size:
        raise SplittingViolation(f"pointwise split bound fails at {bad.size} node(s), first index {bad[0]}")


def _rayleigh_discrete(v, u: GridFunction) -> tuple[float, float]:
    from .line import integrate, kinetic_energy

    return integrate(v(u.nodes) * u.values**2, u.grid), kinetic_energy(u)


@dataclass(frozen=True)
class KellerCertificate:
    split_ok: bool
    bound_value: float
    lambda_sum: float
    keller_bound: float
    bound_holds: bool
    keller_holds: bool
    K: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def keller_certificate(v, u1: GridFunction, K: float) -> KellerCertificate:
    """Check the split bound on the ground state ``u1`` of ``-d^2/dx^2 - V``.

    ``lambda_sum`` is ``int V u^2 - int u'^2`` in the discrete form matching
    the finite-difference operator; ``bound_value`` is the right side of the
    split inequality; ``keller_bound`` is ``L^1_{1,1} int V^3/2``.
    """
    return _keller(v, [u1], K)


def keller_certificate_pair(v, u1: GridFunction, u2: GridFunction, K: float) -> KellerCertificate:
    """Two-state version with density ``u1^2 + u2^2``."""
    return _keller(v, [u1, u2], K)


def _keller(v, states, K) -> KellerCertificate:
    grid = states[0].grid
    from .line import integrate

    vv = v(grid.nodes)
    density = sum(u.values**2 for u in states)
    _check_split(vv, density, K)
    lam, kinetic = 0.0, 0.0
    for u in states:
        p, t = _rayleigh_discrete(v, u)
        lam += p - t
        kinetic += t
    v32 = integrate(vv**1.5, grid)
    sextic = integrate(density**3, grid)
    bound = K * v32 + 4.0 / (27.0 * K**2) * sextic - kinetic
    keller = keller_constant(1.0) * v32
    slack = 1e-10 * max(1.0, abs(bound))
    return KellerCertificate(
        split_ok=True,
        bound_value=bound,
        lambda_sum=lam,
        keller_bound=keller,
        bound_holds=lam <= bound + slack,
        keller_holds=lam <= keller + slack,
        K=K,
    )


@dataclass(frozen=True)
class SobolevReport:
    lhs: float
    rhs: float
    holds: bool


def sobolev_check(w: GridFunction, gamma: float) -> SobolevReport:
    """``(1/4) int w'^2`` against ``c(gamma) (int w^(2/(2g-1)))^(2g-1)`` on ``[0, 1]``."""
    _check_gamma(gamma)
    vals = w.values
    scale = float(np.max(np.abs(vals))) or 1.0
    if np.any(vals < -1e-14 * scale):
        raise DomainError("sobolev_check needs w >= 0")
    if max(abs(vals[0]), abs(vals[-1])) > 1e-8 * scale:
        raise DomainError("sobolev_check needs w(0) = w(1) = 0")
    vals = np.clip(vals, 0.0, None)
    h = w.grid.spacing
    # spline slopes are fourth-order accurate at the nodes; plain differences bias the
    # Dirichlet integral low, which matters in the equality case
    dw = CubicSpline(w.nodes, vals)(w.nodes, 1)
    lhs = 0.25 * scipy.integrate.simpson(dw**2, dx=h)
    p = 2.0 / (2.0 * gamma - 1.0)
    rhs = sobolev_constant(gamma) * scipy.integrate.simpson(vals**p, dx=h) ** (2.0 * gamma - 1.0)
    return SobolevReport(float(lhs), float(rhs), bool(lhs >= rhs - 1e-9))


@dataclass(frozen=True)
class AppendixChainReport:
    gamma: float
    lambda1: float
    kinetic: float
    A: float
    Y: float
    holder_bound: float
    sobolev_bound: float
    optimized_bound: float
    lt_moment: float
    lt_bound: float
    steps: dict

    @property
    def holds(self) -> bool:
        return all(self.steps.values())

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"holds": self.holds}


def appendix_chain_check(v, gamma: float, half_width: float = 20.0, points: int = 40001) -> AppendixChainReport:
    """Evaluate each link of the Hoelder / Sobolev / optimization chain on the ground state of ``V``.

    All integrals use the trapezoid weights of the finite-difference grid so the
    Hoelder step is exact in discrete form.
    """
    from .line import _require_bound, bound_states, integrate

    _check_gamma(gamma)
    spectrum = bound_states(v, 1, half_width, points)
    _require_bound(spectrum, 1, v)
    (u,) = spectrum.functions()
    grid = u.grid
    potential, kinetic = _rayleigh_discrete(v, u)
    lam = potential - kinetic
    vv = v(grid.nodes)
    v_int = integrate(vv ** (gamma + 0.5), grid)
    q = 2.0 * (2.0 * gamma + 1.0) / (2.0 * gamma - 1.0)
    u_int = integrate(np.abs(u.values) ** q, grid)
    A = v_int ** (2.0 / (2.0 * gamma + 1.0))
    Y = u_int ** (2.0 * gamma - 1.0)
    c, c_tilde = appendix_constants(gamma)
    holder = A * Y ** (1.0 / (2.0 * gamma + 1.0)) - kinetic
    sob = A * Y ** (1.0 / (2.0 * gamma + 1.0)) - c * Y
    opt = c_tilde * v_int ** (1.0 / gamma)
    moment = lam**gamma if lam > 0 else 0.0
    lt = keller_constant(gamma) * v_int

    def le(a, b):
        return bool(a <= b + 1e-8 * max(1.0, abs(b)))

    steps = {
        "rayleigh": bool(abs(lam - (potential - kinetic)) <= 1e-12 * max(1.0, abs(lam))),
        "holder": le(potential, A * Y ** (1.0 / (2.0 * gamma + 1.0))),
        "sobolev_claim": le(c * Y, kinetic),
        "lambda_le_holder": le(lam, holder),
        "lambda_le_sobolev": le(lam, sob),
        "sobolev_le_optimized": le(sob, opt),
        "lieb_thirring": le(moment, lt),
    }
    return AppendixChainReport(gamma, lam, kinetic, A, Y, holder, sob, opt, moment, lt, steps)
