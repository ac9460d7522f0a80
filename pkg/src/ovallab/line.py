"""Bound states of ``-u'' - V u = -lambda u`` on the line and Lieb-Thirring ratios.

Potentials are wells, ``V >= 0``; the Hamiltonian is ``-d^2/dx^2 - V``.
The line is truncated to ``[-L, L]`` with Dirichlet walls and discretized by
the 3-point stencil, whose tridiagonal matrix is diagonalized directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import scipy.integrate

from . import constants
from .errors import (
    ContractViolation,
    DomainError,
    InsufficientBoundStates,
)
from .numerics import GridFunction, Spectrum, UniformGrid, tridiagonal_eigs

DEFAULT_HALF_WIDTH = 20.0
DEFAULT_POINTS = 40001
TRUNCATION_RATIO = 1e-10

FAMILIES = {
    "poschl_teller": ("a",),
    "gaussian": ("depth", "width"),
    "square_well": ("depth", "half_width"),
    "tabulated": (),
}


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A nonnegative well ``V(x)``.

    ``poschl_teller``: ``a sech^2 x``; ``gaussian``: ``depth exp(-(x/width)^2)``;
    ``square_well``: ``depth`` on ``|x| <= half_width``; ``tabulated``:
    linear interpolation of samples, zero outside them.
    """

    family: str
    params: dict = field(default_factory=dict)
    table: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractViolation(f"unknown potential family {self.family!r}")
        expected = set(FAMILIES[self.family])
        if set(self.params) != expected:
            raise ContractViolation(
                f"{self.family} needs parameters {sorted(expected)}, got {sorted(self.params)}"
            )
        params = {k: float(v) for k, v in self.params.items()}
        object.__setattr__(self, "params", params)
        if self.family == "tabulated":
            if self.table is None:
                raise ContractViolation("tabulated potential needs samples")
            x, v = (np.asarray(t, dtype=float) for t in self.table)
            if x.shape != v.shape or x.size < 2 or np.any(np.diff(x) <= 0):
                raise ContractViolation("tabulated potential needs increasing x and matching V")
            if np.any(v < 0):
                raise DomainError("tabulated potential must be nonnegative")
            object.__setattr__(self, "table", (x, v))
        elif any(val < 0 for val in params.values()):
            raise DomainError(f"{self.family} parameters must be nonnegative: {params}")
        if self.family in ("gaussian",) and params["width"] == 0:
            raise DomainError("gaussian width must be positive")

    @classmethod
    def poschl_teller(cls, a: float) -> "PotentialSpec":
        return cls("poschl_teller", {"a": a})

    @classmethod
    def gaussian(cls, depth: float, width: float) -> "PotentialSpec":
        return cls("gaussian", {"depth": depth, "width": width})

    @classmethod
    def square_well(cls, depth: float, half_width: float) -> "PotentialSpec":
        return cls("square_well", {"depth": depth, "half_width": half_width})

    @classmethod
    def tabulated(cls, x, v) -> "PotentialSpec":
        return cls("tabulated", {}, (x, v))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.family == "poschl_teller":
            return p["a"] / np.cosh(x) ** 2
        if self.family == "gaussian":
            return p["depth"] * np.exp(-((x / p["width"]) ** 2))
        if self.family == "square_well":
            return np.where(np.abs(x) <= p["half_width"], p["depth"], 0.0)
        tx, tv = self.table
        return np.interp(x, tx, tv, left=0.0, right=0.0)

    @property
    def peak(self) -> float:
        if self.family == "poschl_teller":
            return self.params["a"]
        if self.family in ("gaussian", "square_well"):
            return self.params["depth"]
        return float(self.table[1].max())

    def describe(self) -> str:
        if self.family == "tabulated":
            return f"tabulated({self.table[0].size} samples)"
        return self.family + ":" + ",".join(f"{k}={v:g}" for k, v in self.params.items())

    def integral_power(self, power: float, half_width: float = DEFAULT_HALF_WIDTH) -> float:
        """Adaptive quadrature of ``V^power`` over ``[-L, L]``."""
        if self.family == "tabulated":
            tx, tv = self.table
            return float(np.trapezoid(tv**power, tx))
        if self.peak == 0.0:
            return 0.0
        if self.family == "square_well":
            w = min(self.params["half_width"], half_width)
            return 2.0 * w * self.params["depth"] ** power
        val, _ = scipy.integrate.quad(
            lambda x: float(self(x)) ** power, -half_width, half_width,
            points=[0.0], limit=400, epsabs=1e-14, epsrel=1e-13,
        )
        return float(val)

    def check_truncation(self, half_width: float):
        if self.family == "tabulated" or self.peak == 0.0:
            return
        edge = float(max(self(-half_width), self(half_width)))
        if edge >= TRUNCATION_RATIO * self.peak:
            raise DomainError(
                f"V(+-{half_width:g}) = {edge:.3g} is not below {TRUNCATION_RATIO:g} * max V; enlarge the domain"
            )


def parse_potential(text: str) -> PotentialSpec:
    """Parse ``family:key=value,...`` such as ``poschl_teller:a=6``."""
    family, _, rest = text.strip().partition(":")
    if family not in FAMILIES:
        raise ContractViolation(f"unknown potential family {family!r}")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ContractViolation(f"bad potential parameter {item!r}")
        params[key.strip()] = value.strip()
    if family == "tabulated":
        if set(params) != {"path"}:
            raise ContractViolation("tabulated potential takes a single path=... parameter")
        return load_tabulated(params["path"])
    try:
        values = {k: float(v) for k, v in params.items()}
    except ValueError:
        raise ContractViolation(f"non-numeric potential parameter in {text!r}") from None
    return PotentialSpec(family, values)


def load_tabulated(path) -> PotentialSpec:
    """Two-column CSV ``x,V``; a non-numeric first row is treated as a header."""
    rows = []
    with Path(path).open(newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ContractViolation(f"{path}: cannot parse row {i + 1}: {row}") from None
    data = np.array(rows)
    return PotentialSpec.tabulated(data[:, 0], data[:, 1])


def line_grid(half_width: float = DEFAULT_HALF_WIDTH, points: int = DEFAULT_POINTS) -> UniformGrid:
    return UniformGrid(-half_width, half_width, points)


def bound_states(
    v: PotentialSpec,
    k: int = 1,
    half_width: float = DEFAULT_HALF_WIDTH,
    points: int = DEFAULT_POINTS,
) -> Spectrum:
    """Lowest ``k`` Dirichlet eigenpairs of ``-d^2/dx^2 - V`` on ``[-L, L]``.

    Eigenfunctions are sampled on all ``points`` nodes (zero at the walls)
    with unit discrete L2 norm; the ground state is nonnegative.
    ``metadata['negative_count']`` says how many of the ``k`` are bound.
    """
    if points < 501 or points % 2 == 0:
        raise ContractViolation(f"points must be odd and >= 501, got {points}")
    v.check_truncation(half_width)
    grid = line_grid(half_width, points)
    h = grid.spacing
    x = grid.nodes[1:-1]
    diag = 2.0 / h**2 - v(x)
    off = np.full(x.size - 1, -1.0 / h**2)
    raw = tridiagonal_eigs(diag, off, k)
    vectors = np.zeros((k, points))
    vectors[:, 1:-1] = raw.eigenvectors / math.sqrt(h)
    if vectors[0].sum() < 0:
        vectors[0] *= -1.0
    negative = int(np.sum(raw.eigenvalues < 0))
    return Spectrum(
        raw.eigenvalues,
        vectors,
        resolution=points,
        method="finite_difference",
        grid=grid,
        metadata={
            "negative_count": negative,
            "requested": k,
            "complete": negative >= k,
            "half_width": half_width,
            "potential": v.describe(),
        },
    )


def kinetic_energy(u: GridFunction) -> float:
    """``sum h ((u_{j+1} - u_j)/h)^2``; exact discrete form of ``int u'^2`` for the FD operator."""
    d = np.diff(u.values)
    return float(np.dot(d, d) / u.grid.spacing)


def integrate(values: np.ndarray, grid: UniformGrid) -> float:
    return float(np.trapezoid(values, dx=grid.spacing))


def rayleigh_identity_check(u: GridFunction, v: PotentialSpec, lam: float) -> float:
    """``|lam - (int V u^2 - int u'^2)|`` with centered differences for ``u'``."""
    du = np.gradient(u.values, u.grid.spacing)
    potential = integrate(v(u.nodes) * u.values**2, u.grid)
    kinetic = integrate(du**2, u.grid)
    return abs(lam - (potential - kinetic))


@dataclass(frozen=True)
class LTReport:
    gamma: float
    eigenvalues: tuple
    moment_sum: float
    potential_integral: float
    ratio: float
    reference_constant: float
    margin: float
    potential: str = ""

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {
            "eigenvalues": list(self.eigenvalues)
        }


def _require_bound(spectrum: Spectrum, states: int, v: PotentialSpec):
    found = spectrum.metadata["negative_count"]
    if found < states:
        raise InsufficientBoundStates(
            f"{v.describe()} binds {found} state(s), {states} requested", found=found, requested=states
        )


def lt_ratio(
    v: PotentialSpec,
    gamma: float,
    states: int = 1,
    half_width: float = DEFAULT_HALF_WIDTH,
    points: int = DEFAULT_POINTS,
) -> LTReport:
    """Ratio of ``sum lambda_j^gamma`` (lowest ``states`` levels) to ``int V^(gamma+1/2)``."""
    if gamma <= 0.5:
        raise DomainError(f"gamma must exceed 1/2, got {gamma}")
    if states not in (1, 2):
        raise ContractViolation("states must be 1 or 2")
    spectrum = bound_states(v, states, half_width, points)
    _require_bound(spectrum, states, v)
    lams = tuple(float(-e) for e in spectrum.eigenvalues[:states])
    moment = float(sum(lam**gamma for lam in lams))
    integral = v.integral_power(gamma + 0.5, half_width)
    ratio = moment / integral
    ref = constants.keller_constant(gamma)
    return LTReport(gamma, lams, moment, integral, ratio, ref, ref - ratio, v.describe())


def eigenfunction_pair(
    v: PotentialSpec, half_width: float = DEFAULT_HALF_WIDTH, points: int = DEFAULT_POINTS
) -> Tuple[GridFunction, GridFunction]:
    """Normalized eigenfunctions of the two lowest bound states."""
    spectrum = bound_states(v, 2, half_width, points)
    _require_bound(spectrum, 2, v)
    u1, u2 = spectrum.functions()
    return u1, u2
