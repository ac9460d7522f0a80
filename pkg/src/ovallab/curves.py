"""Closed convex plane curves of length 2*pi, encoded by the turning angle.

A curve is ``phi(s) = s + psi(s)`` with ``psi`` a finite trigonometric
series; curvature is ``kappa = 1 + psi'``. Only even harmonics keep the curve
closed automatically; other harmonics need :func:`project_closure`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Tuple

import numpy as np

from .errors import (
    ContractViolation,
    PositivityViolation,
    ProjectionFailure,
    SamplingFailure,
)
from .numerics import TWO_PI, GridFunction, UniformGrid, trapezoid_periodic

CLOSURE_TOL = 1e-10
SAMPLING_MARGIN = 0.05

Harmonic = Tuple[int, float, float]


@dataclass(frozen=True)
class CurveSpec:
    """Harmonics ``(n, a_n, b_n)`` of ``psi(s) = sum a_n cos(ns) + b_n sin(ns)``.

    Duplicate orders are summed, exact zeros dropped, and the terms sorted,
    so two specs describing the same curve compare equal. No harmonics means
    the circle.
    """

    harmonics: Tuple[Harmonic, ...] = ()

    def __post_init__(self):
        merged: dict = {}
        for term in self.harmonics:
            n, a, b = term
            if int(n) != n or n < 1:
                raise ContractViolation(f"harmonic order must be a positive integer, got {n}")
            a0, b0 = merged.get(int(n), (0.0, 0.0))
            merged[int(n)] = (a0 + float(a), b0 + float(b))
        terms = tuple((n, a, b) for n, (a, b) in sorted(merged.items()) if a != 0.0 or b != 0.0)
        object.__setattr__(self, "harmonics", terms)

    @classmethod
    def circle(cls) -> "CurveSpec":
        return cls(())

    @property
    def is_circle(self) -> bool:
        return not self.harmonics

    @property
    def max_harmonic(self) -> int:
        return max((n for n, _, _ in self.harmonics), default=0)

    @property
    def is_even(self) -> bool:
        return all(n % 2 == 0 for n, _, _ in self.harmonics)

    def coefficient(self, n: int) -> Tuple[float, float]:
        for m, a, b in self.harmonics:
            if m == n:
                return a, b
        return 0.0, 0.0

    def with_coefficient(self, n: int, a: float, b: float) -> "CurveSpec":
        rest = [t for t in self.harmonics if t[0] != n]
        return CurveSpec(tuple(rest) + ((n, a, b),))

    def psi(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for n, a, b in self.harmonics:
            out += a * np.cos(n * s) + b * np.sin(n * s)
        return out

    def phi(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float) + self.psi(s)

    def kappa(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.ones_like(s)
        for n, a, b in self.harmonics:
            out += n * (-a * np.sin(n * s) + b * np.cos(n * s))
        return out

    def scaled(self, factor: float) -> "CurveSpec":
        return CurveSpec(tuple((n, factor * a, factor * b) for n, a, b in self.harmonics))

    def plus(self, other: "CurveSpec", factor: float = 1.0) -> "CurveSpec":
        return CurveSpec(self.harmonics + other.scaled(factor).harmonics)

    def to_dict(self) -> dict:
        return {"harmonics": [[n, a, b] for n, a, b in self.harmonics]}

    @classmethod
    def from_dict(cls, data: dict) -> "CurveSpec":
        return cls(tuple((int(n), float(a), float(b)) for n, a, b in data.get("harmonics", [])))


@dataclass(frozen=True)
class ClosureResidual:
    cos_residual: float
    sin_residual: float

    @property
    def norm(self) -> float:
        return math.hypot(self.cos_residual, self.sin_residual)

    def admissible(self, tol: float = CLOSURE_TOL) -> bool:
        return abs(self.cos_residual) <= tol and abs(self.sin_residual) <= tol


def reference_grid(c: CurveSpec, minimum: int = 256) -> UniformGrid:
    points = max(minimum, 16 * c.max_harmonic)
    return UniformGrid.circle(points + points % 2)


def _require_circle_grid(g: UniformGrid):
    if not g.periodic or abs(g.start) > 1e-15 or not math.isclose(g.end, TWO_PI, rel_tol=1e-14):
        raise ContractViolation("curve sampling needs a periodic grid on [0, 2*pi]")


def turning_angle(c: CurveSpec, g: UniformGrid) -> GridFunction:
    _require_circle_grid(g)
    return GridFunction(g, c.phi(g.nodes))


def curvature(c: CurveSpec, g: UniformGrid, require_positive: bool = True) -> GridFunction:
    """Curvature ``1 + psi'(s)`` from the analytic derivative.

    Raises :class:`PositivityViolation` at the first non-positive sample
    unless ``require_positive`` is off (sign-changing curvature is allowed
    for exploratory runs).
    """
    _require_circle_grid(g)
    kappa = c.kappa(g.nodes)
    if require_positive:
        j = int(np.argmin(kappa))
        if kappa[j] <= 0.0:
            raise PositivityViolation(
                f"curvature {kappa[j]:.6g} <= 0 at s={g.nodes[j]:.6g}",
                s_min=float(g.nodes[j]),
                kappa_min=float(kappa[j]),
            )
    return GridFunction(g, kappa)


def min_curvature(c: CurveSpec, g: UniformGrid | None = None) -> Tuple[float, float]:
    """Smallest sampled curvature and where it occurs."""
    g = g or reference_grid(c)
    kappa = c.kappa(g.nodes)
    j = int(np.argmin(kappa))
    return float(kappa[j]), float(g.nodes[j])


def is_admissible(c: CurveSpec, tol: float = CLOSURE_TOL) -> bool:
    g = reference_grid(c)
    return min_curvature(c, g)[0] > 0.0 and closure_residual(c, g).admissible(tol)


def closure_residual(c: CurveSpec, g: UniformGrid) -> ClosureResidual:
    phi = turning_angle(c, g).values
    return ClosureResidual(
        trapezoid_periodic(GridFunction(g, np.cos(phi))),
        trapezoid_periodic(GridFunction(g, np.sin(phi))),
    )


def project_closure(c: CurveSpec, max_iter: int = 50, tol: float = CLOSURE_TOL) -> CurveSpec:
    """Restore closure by damped Newton on the first harmonic ``(a_1, b_1)``.

    All other harmonics are left untouched.
    """
    g = reference_grid(c, minimum=512)
    s = g.nodes
    h = g.spacing

    def residual(spec):
        phi = spec.phi(s)
        return np.array([h * np.cos(phi).sum(), h * np.sin(phi).sum()]), phi

    f, phi = residual(c)
    if np.max(np.abs(f)) <= tol:
        return c
    a1, b1 = c.coefficient(1)
    current = c
    for it in range(max_iter):
        cs, sn = np.cos(phi), np.sin(phi)
        jac = h * np.array(
            [
                [-(sn * np.cos(s)).sum(), -(sn * np.sin(s)).sum()],
                [(cs * np.cos(s)).sum(), (cs * np.sin(s)).sum()],
            ]
        )
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            raise ProjectionFailure(f"singular closure Jacobian at iteration {it}") from None
        norm0 = np.linalg.norm(f)
        damping = 1.0
        while True:
            trial = current.with_coefficient(1, a1 + damping * step[0], b1 + damping * step[1])
            f_new, phi_new = residual(trial)
            if np.linalg.norm(f_new) < norm0 or damping < 1e-4:
                break
            damping *= 0.5
        a1, b1 = a1 + damping * step[0], b1 + damping * step[1]
        current, f, phi = trial, f_new, phi_new
        if np.max(np.abs(f)) <= 1e-2 * tol:
            break
    if np.max(np.abs(f)) > tol:
        raise ProjectionFailure(
            f"closure Newton did not converge in {max_iter} iterations, residual {np.max(np.abs(f)):.3g}"
        )
    curvature(current, g)
    return current


def reconstruct_xy(c: CurveSpec, g: UniformGrid) -> np.ndarray:
    """Planar points at the grid nodes, integrating the unit tangent from the origin.

    Uses the cumulative trapezoid rule; returns an array of shape ``(points, 2)``.
    """
    phi = turning_angle(c, g).values
    tangent = np.column_stack([np.cos(phi), np.sin(phi)])
    steps = 0.5 * g.spacing * (tangent[1:] + tangent[:-1])
    return np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])


def endpoint_gap(c: CurveSpec, g: UniformGrid) -> float:
    """Distance between the start and the point reached after one full period."""
    pts = reconstruct_xy(c, g)
    phi_last = c.phi(g.nodes[-1])
    # phi(2*pi) = 2*pi + psi(0), so the tangent there equals the tangent at s = 0
    phi0 = c.phi(0.0)
    last_step = 0.5 * g.spacing * (
        np.array([math.cos(phi_last), math.sin(phi_last)]) + np.array([math.cos(phi0), math.sin(phi0)])
    )
    return float(np.linalg.norm(pts[-1] + last_step - pts[0]))


def random_oval(seed: int, max_harmonic: int, amplitude: float, max_tries: int = 1000) -> CurveSpec:
    """Seeded even-harmonic oval with ``min kappa > 0.05``.

    Coefficients of harmonic ``n`` are uniform on ``[-amplitude/n^2, amplitude/n^2]``.
    """
    if not 0.0 <= amplitude < 1.0:
        raise ContractViolation(f"amplitude must lie in [0, 1), got {amplitude}")
    orders = list(range(2, 2 * (max_harmonic // 2) + 1, 2))
    if amplitude == 0.0 or not orders:
        return CurveSpec.circle()
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        terms = []
        for n in orders:
            a, b = rng.uniform(-amplitude / n**2, amplitude / n**2, size=2)
            terms.append((n, float(a), float(b)))
        spec = CurveSpec(tuple(terms))
        if min_curvature(spec)[0] > SAMPLING_MARGIN:
            return spec
    raise SamplingFailure(
        f"{max_tries} consecutive draws violated min curvature {SAMPLING_MARGIN}; amplitude too large"
    )


def parse_harmonics(lines: Iterable[str]) -> CurveSpec:
    """Parse ``n a_n b_n`` lines; ``#`` starts a comment, blank lines are skipped."""
    terms = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ContractViolation(f"curve line {lineno}: expected 'n a_n b_n', got {raw.strip()!r}")
        try:
            terms.append((int(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError:
            raise ContractViolation(f"curve line {lineno}: cannot parse {raw.strip()!r}") from None
    return CurveSpec(tuple(terms))


def load_curve_file(path) -> CurveSpec:
    return parse_harmonics(Path(path).read_text().splitlines())


def parse_curve(text: str) -> CurveSpec:
    """Parse ``circle``, ``harm:n=2,a=0,b=0.25;n=4,a=0.1,b=0`` or ``file:path``."""
    text = text.strip()
    if text == "circle":
        return CurveSpec.circle()
    if text.startswith("file:"):
        return load_curve_file(text[5:])
    if text.startswith("harm:"):
        terms = []
        for chunk in filter(None, (p.strip() for p in text[5:].split(";"))):
            fields = {}
            for item in chunk.split(","):
                key, sep, value = item.partition("=")
                if not sep or key.strip() not in ("n", "a", "b"):
                    raise ContractViolation(f"bad harmonic field {item!r} in {text!r}")
                fields[key.strip()] = value.strip()
            if "n" not in fields:
                raise ContractViolation(f"harmonic without order in {text!r}")
            try:
                terms.append((int(fields["n"]), float(fields.get("a", 0)), float(fields.get("b", 0))))
            except ValueError:
                raise ContractViolation(f"cannot parse harmonic {chunk!r}") from None
        return CurveSpec(tuple(terms))
    raise ContractViolation(f"unknown curve {text!r}; use circle, harm:... or file:path")
