"""Changes of variables from line eigenfunctions to curve data.

``single_bridge`` maps one normalized function to ``w(s) = u^2`` on
``s = int u^2 in [0, 1]``. ``pair_bridge`` maps an orthonormal pair to polar
data ``R = u1^2 + u2^2``, ``phi = 2 atan2(u2, u1)`` on
``s = pi int (u1^2 + u2^2) in [0, 2 pi]`` and evaluates both sides of the
equivalent two-function inequalities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.integrate
from scipy.interpolate import CubicSpline, PchipInterpolator

from .curves import ClosureResidual
from .errors import ContractViolation, FlatMapError, NodeError, ResolutionError, ResolutionWarning
from .line import integrate, kinetic_energy
from .numerics import TWO_PI, GridFunction, UniformGrid

SINGLE_S_POINTS = 1024
PAIR_S_POINTS = 8192
NODE_THRESHOLD = 1e-7
# bulk region and per-step angle limit used to judge whether the s-grid resolves phi
BULK_THRESHOLD = 1e-3
MAX_PHI_STEP = 0.5
POINCARE_PAIR = math.pi**2 / 4.0


def _cumulative(values: np.ndarray, grid: UniformGrid) -> np.ndarray:
    return scipy.integrate.cumulative_trapezoid(values, dx=grid.spacing, initial=0.0)


def _strictly_increasing(s: np.ndarray) -> np.ndarray:
    """Indices keeping the first node of every run of equal ``s`` values."""
    keep = np.concatenate([[True], np.diff(s) > 0])
    return np.flatnonzero(keep)


@dataclass(frozen=True, eq=False)
class SingleBridgeReport:
    s_of_x: GridFunction
    w: GridFunction
    dirichlet_lhs: float
    dirichlet_rhs: float
    kinetic_x: float
    sextic_x: float
    w_boundary: Tuple[float, float]

    @property
    def holds(self) -> bool:
        return self.dirichlet_lhs >= self.dirichlet_rhs - 1e-9 * abs(self.dirichlet_rhs)

    def to_dict(self) -> dict:
        return {
            "dirichlet_lhs": self.dirichlet_lhs,
            "dirichlet_rhs": self.dirichlet_rhs,
            "kinetic_x": self.kinetic_x,
            "sextic_x": self.sextic_x,
            "w_boundary": list(self.w_boundary),
            "holds": self.holds,
        }


def single_bridge(u1: GridFunction, s_points: int = SINGLE_S_POINTS) -> SingleBridgeReport:
    """Map ``u1`` to ``w = u1^2`` over ``s(x) = int_{-inf}^x u1^2`` and compare Dirichlet forms.

    ``dirichlet_lhs = int w'(s)^2 ds`` should equal ``4 int u1'^2 dx`` and
    ``int w^2 ds`` should equal ``int u1^6 dx``; ``dirichlet_lhs >= pi^2 int w^2``
    is the first Dirichlet eigenvalue of ``(0, 1)``.
    """
    u = u1.values
    norm_sq = u1.norm() ** 2
    if abs(norm_sq - 1.0) > 1e-6:
        raise ContractViolation(f"u1 must be normalized, |u1|^2 = {norm_sq:.10g}")
    if max(abs(u[0]), abs(u[-1])) >= 1e-6:
        raise ContractViolation("u1 must decay at both ends of its grid")
    dens = u * u
    support = np.flatnonzero(dens > 1e-30 * dens.max())
    inner = dens[support[0] : support[-1] + 1]
    gaps = np.flatnonzero((inner[:-1] <= 1e-30 * dens.max()) & (inner[1:] <= 1e-30 * dens.max()))
    if gaps.size:
        x_bad = u1.nodes[support[0] + gaps[0]]
        raise FlatMapError(f"u1 vanishes on an interval near x = {x_bad:.6g}; s(x) is not invertible")
    s = _cumulative(dens, u1.grid)
    s = s / s[-1]
    keep = _strictly_increasing(s)
    w_of_s = PchipInterpolator(s[keep], dens[keep])
    sgrid = UniformGrid(0.0, 1.0, s_points)
    w = w_of_s(sgrid.nodes)
    w[0], w[-1] = dens[0], dens[-1]
    hs = sgrid.spacing
    # spline slopes keep int w'^2 accurate where w bends sharply between s-nodes
    dw = CubicSpline(sgrid.nodes, w)(sgrid.nodes, 1)
    lhs = float(scipy.integrate.simpson(dw**2, dx=hs))
    w_sq = float(scipy.integrate.simpson(w**2, dx=hs))
    return SingleBridgeReport(
        s_of_x=GridFunction(u1.grid, s),
        w=GridFunction(sgrid, w),
        dirichlet_lhs=lhs,
        dirichlet_rhs=math.pi**2 * w_sq,
        kinetic_x=kinetic_energy(u1),
        sextic_x=integrate(u**6, u1.grid),
        w_boundary=(float(w[0]), float(w[-1])),
    )


def _pair_functionals(u1: GridFunction, u2: GridFunction) -> Tuple[float, float]:
    kinetic = kinetic_energy(u1) + kinetic_energy(u2)
    sextic = integrate((u1.values**2 + u2.values**2) ** 3, u1.grid)
    return kinetic, POINCARE_PAIR * sextic


def functional_ratio_pair(u1: GridFunction, u2: GridFunction) -> float:
    """``int (u1'^2 + u2'^2) / ((pi^2/4) int (u1^2 + u2^2)^3)`` by direct quadrature on the line."""
    _check_orthonormal(u1, u2)
    lhs, rhs = _pair_functionals(u1, u2)
    return lhs / rhs


def _check_orthonormal(u1: GridFunction, u2: GridFunction, tol: float = 1e-8):
    if u1.grid != u2.grid:
        raise ContractViolation("u1 and u2 must share a grid")
    n1, n2, c = u1.inner(u1), u2.inner(u2), u1.inner(u2)
    if max(abs(n1 - 1), abs(n2 - 1), abs(c)) > tol:
        raise ContractViolation(
            f"pair is not orthonormal to {tol:g}: |u1|^2-1={n1 - 1:.3g}, |u2|^2-1={n2 - 1:.3g}, <u1,u2>={c:.3g}"
        )


def _closed_derivative(values: np.ndarray, end_value: float, h: float) -> np.ndarray:
    """Second-order differences on the closed grid ``[0, 2 pi]`` built from periodic samples
    plus the value at ``2 pi``; returns the derivative at all ``points + 1`` nodes."""
    closed = np.append(values, end_value)
    return np.gradient(closed, h, edge_order=2)


def polar_derivatives(R: GridFunction, phi: GridFunction, winding: int):
    """``(R, phi, R', phi')`` on the closed grid, treating ``R`` as continuous across the seam
    and ``phi(2 pi) = phi(0) + 2 pi * winding``."""
    h = R.grid.spacing
    r_closed = np.append(R.values, R.values[0])
    phi_closed = np.append(phi.values, phi.values[0] + TWO_PI * winding)
    dr = _closed_derivative(R.values, R.values[0], h)
    dphi = _closed_derivative(phi.values, phi.values[0] + TWO_PI * winding, h)
    return r_closed, phi_closed, dr, dphi


def _closed_integral(values: np.ndarray, h: float) -> float:
    return float(np.trapezoid(values, dx=h))


@dataclass(frozen=True, eq=False)
class BridgeReport:
    s_of_x: GridFunction
    R: GridFunction
    phi: GridFunction
    kappa: GridFunction
    lhs_34: float
    rhs_34: float
    lhs_311: float
    rhs_311: float
    closure: ClosureResidual
    ratio_34: float
    ratio_311: float
    R_boundary: Tuple[float, float]
    winding: int
    inner_product: float
    norm_difference: float
    max_phi_step: float

    @property
    def kinetic_from_s(self) -> float:
        """``int (u1'^2 + u2'^2) dx`` recovered from the s-side integral."""
        return math.pi / 4.0 * self.lhs_311

    @property
    def sextic_from_s(self) -> float:
        """``int (u1^2 + u2^2)^3 dx`` recovered from ``int R^2 ds``."""
        return self.rhs_311 / math.pi

    def to_dict(self) -> dict:
        return {
            "lhs_34": self.lhs_34,
            "rhs_34": self.rhs_34,
            "lhs_311": self.lhs_311,
            "rhs_311": self.rhs_311,
            "closure": {
                "cos_residual": self.closure.cos_residual,
                "sin_residual": self.closure.sin_residual,
            },
            "ratio_34": self.ratio_34,
            "ratio_311": self.ratio_311,
            "R_boundary": list(self.R_boundary),
            "winding": self.winding,
            "inner_product": self.inner_product,
            "norm_difference": self.norm_difference,
            "max_phi_step": self.max_phi_step,
            "s_points": self.R.grid.points,
        }

    def curve_rows(self):
        """Rows ``(s, R, phi, kappa)`` of the induced curve data."""
        return zip(self.R.nodes, self.R.values, self.phi.values, self.kappa.values)


def pair_bridge(u1: GridFunction, u2: GridFunction, s_points: int = PAIR_S_POINTS) -> BridgeReport:
    """Transform an orthonormal pair to ``(R, phi)`` on a uniform periodic s-grid.

    The angle is taken where ``u1^2 + u2^2 >= 1e-7 max`` and held constant in
    the tails beyond; a sub-threshold node between supported nodes means the
    pair has a common zero and raises :class:`NodeError`.
    """
    _check_orthonormal(u1, u2)
    grid = u1.grid
    a, b = u1.values, u2.values
    dens = a * a + b * b
    thr = NODE_THRESHOLD * dens.max()
    support = np.flatnonzero(dens >= thr)
    i0, i1 = support[0], support[-1]
    holes = np.flatnonzero(dens[i0 : i1 + 1] < thr)
    if holes.size:
        j = i0 + holes[0]
        raise NodeError(f"u1 and u2 vanish together near x = {grid.nodes[j]:.6g}", location=float(grid.nodes[j]))

    s = math.pi * _cumulative(dens, grid)
    s = s * (TWO_PI / s[-1])
    theta = np.unwrap(np.arctan2(b[i0 : i1 + 1], a[i0 : i1 + 1]))
    jumps = np.abs(np.diff(theta))
    if jumps.size and jumps.max() > math.pi / 2:
        k = int(np.argmax(jumps))
        raise ResolutionError(f"angle jumps by {jumps[k]:.3g} near x = {grid.nodes[i0 + k]:.6g}; refine the grid")

    sgrid = UniformGrid.circle(s_points)
    h = sgrid.spacing
    # phi' = 2 theta'(x) / (pi rho^2); judged where rho^2 carries the bulk of the mass
    mid = 0.5 * (dens[i0:i1] + dens[i0 + 1 : i1 + 1])
    bulk = mid >= BULK_THRESHOLD * dens.max()
    rate = 2.0 * np.abs(np.diff(theta)) / (math.pi * np.where(bulk, mid, 1.0) * grid.spacing)
    max_step = float(rate[bulk].max() * h) if bulk.any() else 0.0
    if max_step > MAX_PHI_STEP:
        warnings.warn(
            f"phi turns by up to {max_step:.3g} rad per s-step; raise s_points for an accurate bridge",
            ResolutionWarning,
            stacklevel=2,
        )

    s_data, th_data, r_data = s[i0 : i1 + 1], theta, dens[i0 : i1 + 1]
    if s_data[0] > 0.0:
        s_data = np.concatenate([[0.0], s_data])
        th_data = np.concatenate([[theta[0]], th_data])
        r_data = np.concatenate([[dens[0]], r_data])
    if s_data[-1] < TWO_PI:
        s_data = np.concatenate([s_data, [TWO_PI]])
        th_data = np.concatenate([th_data, [theta[-1]]])
        r_data = np.concatenate([r_data, [dens[-1]]])
    keep = _strictly_increasing(s_data)
    s_data, th_data, r_data = s_data[keep], th_data[keep], r_data[keep]

    s_closed = np.append(sgrid.nodes, TWO_PI)
    r_closed = PchipInterpolator(s_data, r_data)(s_closed)
    phi_closed = 2.0 * PchipInterpolator(s_data, th_data)(s_closed)
    winding = int(round((phi_closed[-1] - phi_closed[0]) / TWO_PI))
    # R vanishes at the seam so phi is free there; pin it to close up exactly
    phi_closed[-1] = phi_closed[0] + TWO_PI * winding
    r_closed[0] = r_closed[-1] = 0.5 * (dens[0] + dens[-1])

    dr = np.gradient(r_closed, h, edge_order=2)
    dphi = np.gradient(phi_closed, h, edge_order=2)
    lhs_311 = _closed_integral(dr**2 + r_closed**2 * dphi**2, h)
    rhs_311 = _closed_integral(r_closed**2, h)
    closure = ClosureResidual(
        _closed_integral(np.cos(phi_closed), h), _closed_integral(np.sin(phi_closed), h)
    )
    lhs_34, rhs_34 = _pair_functionals(u1, u2)
    return BridgeReport(
        s_of_x=GridFunction(grid, s),
        R=GridFunction(sgrid, r_closed[:-1]),
        phi=GridFunction(sgrid, phi_closed[:-1]),
        kappa=GridFunction(sgrid, dphi[:-1]),
        lhs_34=lhs_34,
        rhs_34=rhs_34,
        lhs_311=lhs_311,
        rhs_311=rhs_311,
        closure=closure,
        ratio_34=lhs_34 / rhs_34,
        ratio_311=lhs_311 / rhs_311,
        R_boundary=(float(r_closed[0]), float(r_closed[-1])),
        winding=winding,
        inner_product=u1.inner(u2),
        norm_difference=integrate(a * a - b * b, grid),
        max_phi_step=max_step,
    )


@dataclass(frozen=True)
class XYReport:
    ratio_316: float
    constraint_residuals: Tuple[float, float]
    ratio_polar: float
    ratio_316_direct: float
    winding: int

    def to_dict(self) -> dict:
        return {
            "ratio_316": self.ratio_316,
            "constraint_residuals": list(self.constraint_residuals),
            "ratio_polar": self.ratio_polar,
            "ratio_316_direct": self.ratio_316_direct,
            "winding": self.winding,
        }


def infer_winding(phi: GridFunction) -> int:
    v = phi.values
    end = 2.0 * v[-1] - v[-2]
    return int(round((end - v[0]) / TWO_PI))


def xy_interpretation(R: GridFunction, phi: GridFunction, winding: Optional[int] = None) -> XYReport:
    """Recast polar data as the planar path ``x = R cos phi``, ``y = R sin phi``.

    Velocities come from the chain rule on the same differences of ``R`` and
    ``phi`` used for the polar ratio, so ``ratio_316`` matches it to rounding;
    ``ratio_316_direct`` differentiates ``x`` and ``y`` themselves and agrees
    to discretization accuracy. The constraint integrands ``x/r``, ``y/r`` use
    the angular limit at the seam ``s = 0``; a zero of ``R`` elsewhere raises
    :class:`NodeError`.
    """
    if R.grid != phi.grid or not R.grid.periodic:
        raise ContractViolation("R and phi must share a periodic grid")
    if np.any(R.values < 0):
        raise ContractViolation("R must be nonnegative")
    if winding is None:
        winding = infer_winding(phi)
    h = R.grid.spacing
    r, ph, dr, dph = polar_derivatives(R, phi, winding)
    x, y = r * np.cos(ph), r * np.sin(ph)
    dx = dr * np.cos(ph) - r * dph * np.sin(ph)
    dy = dr * np.sin(ph) + r * dph * np.cos(ph)
    denom = _closed_integral(x * x + y * y, h)
    ratio = _closed_integral(dx * dx + dy * dy, h) / denom
    ratio_polar = _closed_integral(dr * dr + r * r * dph * dph, h) / _closed_integral(r * r, h)
    ratio_direct = (
        _closed_integral(np.gradient(x, h, edge_order=2) ** 2 + np.gradient(y, h, edge_order=2) ** 2, h) / denom
    )

    rad = np.hypot(x[:-1], y[:-1])
    zero = np.flatnonzero(rad <= 1e-300)
    if np.any(zero > 0):
        j = int(zero[zero > 0][0])
        raise NodeError(f"R vanishes at s = {R.nodes[j]:.6g}", location=float(R.nodes[j]))
    with np.errstate(invalid="ignore", divide="ignore"):
        cx = np.where(rad > 0, x[:-1] / rad, np.cos(ph[:-1]))
        cy = np.where(rad > 0, y[:-1] / rad, np.sin(ph[:-1]))
    residuals = (float(h * cx.sum()), float(h * cy.sum()))
    return XYReport(ratio, residuals, ratio_polar, ratio_direct, winding)


def xy_ratio(x: GridFunction, y: GridFunction) -> float:
    """``int (x'^2 + y'^2) / int (x^2 + y^2)`` for smooth periodic paths (spectral derivative)."""
    from .numerics import periodic_derivative, trapezoid_periodic

    dx, dy = periodic_derivative(x), periodic_derivative(y)
    num = trapezoid_periodic(GridFunction(x.grid, dx.values**2 + dy.values**2))
    den = trapezoid_periodic(GridFunction(x.grid, x.values**2 + y.values**2))
    return num / den


def hermite_functions(x: np.ndarray, count: int) -> np.ndarray:
    """Orthonormal Hermite functions ``psi_0..psi_{count-1}`` via the stable three-term recurrence."""
    out = np.zeros((count, x.size))
    out[0] = math.pi**-0.25 * np.exp(-0.5 * x * x)
    if count > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(2, count):
        out[n] = math.sqrt(2.0 / n) * x * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out


def random_pair(seed: int, grid: UniformGrid, modes: int = 6) -> Tuple[GridFunction, GridFunction]:
    """Seeded orthonormal pair of smooth decaying functions.

    Random combinations of Hermite functions with a random width and centre,
    orthonormalized by Gram-Schmidt in the discrete inner product.
    """
    rng = np.random.default_rng(seed)
    width = rng.uniform(0.6, 1.8)
    centre = rng.uniform(-1.0, 1.0)
    basis = hermite_functions((grid.nodes - centre) / width, modes)
    weights = rng.standard_normal((2, modes)) / (1.0 + np.arange(modes))
    v1, v2 = weights @ basis
    h = grid.spacing
    v1 = v1 / math.sqrt(h * v1 @ v1)
    v2 = v2 - h * (v1 @ v2) * v1
    v2 = v2 / math.sqrt(h * v2 @ v2)
    v2 = v2 - h * (v1 @ v2) * v1
    v2 = v2 / math.sqrt(h * v2 @ v2)
    return GridFunction(grid, v1), GridFunction(grid, v2)
