"""Search over ovals for extremal ``lambda_1`` of ``-d^2/ds^2 + g kappa^2``.

Nelder-Mead runs over harmonic coefficients of the turning angle, with a
logarithmic barrier keeping the curvature away from zero. Restarts are
independent and merged in restart order, so results do not depend on how
they were scheduled.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .curves import CurveSpec, min_curvature, project_closure, random_oval, reference_grid
from .errors import (
    ContractViolation,
    DegeneracyError,
    ProjectionFailure,
    RegimeWarning,
)
from .numerics import GridFunction, trapezoid_periodic
from .periodic import (
    FINITE_DIFFERENCE,
    FOURIER_GALERKIN,
    CurveOperatorSpec,
    _diagonalize,
    _quadrature_grid,
    eigenvalues,
    halfbound_certificate,
)

MINIMIZE = "minimize"
MAXIMIZE = "maximize"
EVEN_HARMONIC = "even_harmonic"
GENERAL = "general"

BARRIER_THRESHOLD = 0.1
SENTINEL = 1e6
CONJECTURE_TOL = 1e-6
HALFBOUND_TOL = 1e-8
DEGENERACY_GAP = 1e-8

CONVERGED = "converged"
EVAL_BUDGET = "eval_budget"
BARRIER_HIT = "barrier_hit"


@dataclass(frozen=True)
class OptimizationProblem:
    g: float
    sense: str = MINIMIZE
    family: str = EVEN_HARMONIC
    max_harmonic: int = 6
    resolution: int = 32
    barrier_strength: float = 1e-3
    seed: int = 0
    restarts: int = 10
    max_evals: int = 5000
    amplitude: float = 0.5

    def __post_init__(self):
        if self.sense not in (MINIMIZE, MAXIMIZE):
            raise ContractViolation(f"sense must be minimize or maximize, got {self.sense!r}")
        if self.family not in (EVEN_HARMONIC, GENERAL):
            raise ContractViolation(f"family must be even_harmonic or general, got {self.family!r}")
        if self.max_harmonic < 2:
            raise ContractViolation("max_harmonic must be at least 2")
        if self.restarts < 1 or self.max_evals < 1:
            raise ContractViolation("restarts and max_evals must be positive")
        if self.barrier_strength < 0:
            raise ContractViolation("barrier_strength must be nonnegative")

    @property
    def orders(self) -> Tuple[int, ...]:
        """Harmonic orders carried by the search vector."""
        if self.family == EVEN_HARMONIC:
            return tuple(range(2, self.max_harmonic + 1, 2))
        return tuple(range(2, self.max_harmonic + 1))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def curve_from_vector(x: np.ndarray, orders: Sequence[int], family: str = EVEN_HARMONIC) -> CurveSpec:
    """``x = (a_n, b_n)`` pairs for each order; the general family is closed by projection."""
    spec = CurveSpec(tuple((n, float(x[2 * i]), float(x[2 * i + 1])) for i, n in enumerate(orders)))
    if family == GENERAL:
        spec = project_closure(spec)
    return spec


def vector_from_curve(c: CurveSpec, orders: Sequence[int]) -> np.ndarray:
    return np.array([v for n in orders for v in c.coefficient(n)], dtype=float)


@dataclass(frozen=True)
class Evaluation:
    value: float
    lambda1: float
    lambda2: float
    min_kappa: float
    barrier: float
    flag: str = ""

    @property
    def admissible(self) -> bool:
        return not self.flag


def _kappa_samples(c: CurveSpec, resolution: int) -> np.ndarray:
    # the nodes where the Galerkin matrix samples kappa^2
    grid = _quadrature_grid(CurveOperatorSpec(c, 1.0, resolution))
    return c.kappa(grid.nodes)


def evaluate(c: CurveSpec, g: float, resolution: int = 32, barrier_strength: float = 1e-3,
             sense: str = MINIMIZE) -> Evaluation:
    """``lambda_1`` plus barrier, with the bookkeeping the optimizer needs."""
    worst = SENTINEL if sense == MINIMIZE else -SENTINEL
    kappa = _kappa_samples(c, resolution)
    kmin = float(kappa.min())
    if kmin <= 0.0:
        return Evaluation(worst, math.nan, math.nan, kmin, math.inf, "nonpositive_curvature")
    low = kappa[kappa < BARRIER_THRESHOLD]
    barrier = float(-barrier_strength * np.log(low / BARRIER_THRESHOLD).sum()) if low.size else 0.0
    lam = eigenvalues(CurveOperatorSpec(c, g, resolution), 2)
    value = lam[0] + barrier if sense == MINIMIZE else lam[0] - barrier
    return Evaluation(float(value), float(lam[0]), float(lam[1]), kmin, barrier)


def objective(c: CurveSpec, g: float, resolution: int = 32, barrier_strength: float = 1e-3,
              sense: str = MINIMIZE) -> float:
    """``lambda_1`` with the barrier ``-mu sum log(kappa_j / 0.1)`` over nodes where ``kappa < 0.1``.

    The barrier always pushes toward the worse value for ``sense``; curves with
    ``kappa <= 0`` somewhere get the sentinel ``+-1e6``.
    """
    return evaluate(c, g, resolution, barrier_strength, sense).value


@dataclass
class NelderMeadResult:
    x: np.ndarray
    value: float
    evals: int
    termination: str
    history: List[Tuple[int, float]]


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0: np.ndarray,
    steps: np.ndarray,
    max_evals: int,
    xtol: float = 1e-7,
    ftol: float = 1e-10,
) -> NelderMeadResult:
    """Minimize ``f`` from the axis-aligned simplex ``x0 + steps_i e_i``.

    Stops once the simplex diameter falls below ``xtol`` or the spread of
    vertex values below ``ftol`` (either suffices), or when the evaluation
    budget is spent. ``history`` lists ``(evals, best value)`` each time the
    best vertex improves.
    """
    n = x0.size
    simplex = np.vstack([x0] + [x0 + steps[i] * np.eye(n)[i] for i in range(n)])
    values = np.array([f(x) for x in simplex])
    evals = n + 1
    history = [(evals, float(values.min()))]

    def record():
        best = float(values.min())
        if best < history[-1][1]:
            history.append((evals, best))

    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        diameter = float(np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1)))
        if diameter < xtol or values[-1] - values[0] < ftol:
            termination = CONVERGED
            break
        if evals >= max_evals:
            termination = EVAL_BUDGET
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        evals += 1
        if fr < values[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            evals += 1
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = centroid + 0.5 * (xr - centroid)
                fc = f(xc)
                evals += 1
                accept = fc <= fr
            else:
                xc = centroid + 0.5 * (worst - centroid)
                fc = f(xc)
                evals += 1
                accept = fc < values[-1]
            if accept:
                simplex[-1], values[-1] = xc, fc
            else:
                simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
                values[1:] = [f(x) for x in simplex[1:]]
                evals += n
        record()
    return NelderMeadResult(simplex[0].copy(), float(values[0]), evals, termination, history)


@dataclass
class RestartResult:
    index: int
    seed: int
    best_vector: np.ndarray
    best_value: float
    evals: int
    termination: str
    history: List[Tuple[int, float]]
    min_lambda1: float
    halfbound_violations: int
    candidates: List[dict]

    def summary(self) -> dict:
        return {
            "index": self.index,
            "seed": self.seed,
            "best_value": self.best_value,
            "evals": self.evals,
            "termination": self.termination,
        }


def _run_restart(problem: OptimizationProblem, index: int) -> RestartResult:
    orders = problem.orders
    seed = problem.seed + index
    start = random_oval(seed, problem.max_harmonic, problem.amplitude)
    x0 = vector_from_curve(start, orders)
    steps = np.array([0.1 / n**2 for n in orders for _ in (0, 1)])
    sign = 1.0 if problem.sense == MINIMIZE else -1.0
    monitor = {"min_lambda1": math.inf, "violations": 0, "candidates": []}
    seen = set()

    def f(x):
        try:
            c = curve_from_vector(x, orders, problem.family)
        except ProjectionFailure:
            return SENTINEL
        ev = evaluate(c, problem.g, problem.resolution, problem.barrier_strength, problem.sense)
        if ev.admissible and problem.g == 1.0:
            monitor["min_lambda1"] = min(monitor["min_lambda1"], ev.lambda1)
            if ev.lambda1 < 0.5 - HALFBOUND_TOL:
                monitor["violations"] += 1
            if ev.lambda1 < 1.0 - CONJECTURE_TOL:
                key = tuple(np.round(x, 15))
                if key not in seen:
                    seen.add(key)
                    monitor["candidates"].append({"curve": c.to_dict(), "lambda1": ev.lambda1})
        return sign * ev.value

    result = nelder_mead(f, x0, steps, problem.max_evals)
    return RestartResult(
        index=index,
        seed=seed,
        best_vector=result.x,
        best_value=sign * result.value,
        evals=result.evals,
        termination=result.termination,
        history=[(e, sign * v) for e, v in result.history],
        min_lambda1=monitor["min_lambda1"],
        halfbound_violations=monitor["violations"],
        candidates=monitor["candidates"],
    )


@dataclass
class OptimizationTrace:
    best_curve: CurveSpec
    best_value: float
    history: List[Tuple[int, float]]
    termination: str
    certificate: Optional[object] = None
    problem: Optional[OptimizationProblem] = None
    best_lambda1: float = math.nan
    restarts: List[dict] = field(default_factory=list)
    min_lambda1_seen: float = math.nan
    halfbound_violations: int = 0
    counterexamples: List[str] = field(default_factory=list)

    @property
    def counterexample_found(self) -> bool:
        return bool(self.counterexamples)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict() if self.problem else None,
            "best_curve": self.best_curve.to_dict(),
            "best_value": self.best_value,
            "best_lambda1": self.best_lambda1,
            "history": [list(h) for h in self.history],
            "termination": self.termination,
            "certificate": self.certificate.to_dict() if self.certificate is not None else None,
            "restarts": self.restarts,
            "min_lambda1_seen": None if math.isinf(self.min_lambda1_seen) else self.min_lambda1_seen,
            "halfbound_violations": self.halfbound_violations,
            "counterexamples": self.counterexamples,
        }

    def history_rows(self):
        """Rows ``(eval, value)`` for CSV output."""
        return list(self.history)


def _merge(problem: OptimizationProblem, results: List[RestartResult]) -> Tuple[RestartResult, list]:
    better = (lambda a, b: a < b) if problem.sense == MINIMIZE else (lambda a, b: a > b)
    best = results[0]
    for r in results[1:]:
        if better(r.best_value, best.best_value):
            best = r
    history, offset = [], 0
    for r in results:
        for e, v in r.history:
            if not history or better(v, history[-1][1]):
                history.append((offset + e, v))
        offset += r.evals
    return best, history


def _optimize(problem: OptimizationProblem, parallelism: int, dump_dir) -> OptimizationTrace:
    indices = range(problem.restarts)
    if parallelism > 1 and problem.restarts > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_restart, [problem] * problem.restarts, indices))
    else:
        results = [_run_restart(problem, i) for i in indices]
    best, history = _merge(problem, results)
    curve = curve_from_vector(best.best_vector, problem.orders, problem.family)
    final = evaluate(curve, problem.g, problem.resolution, problem.barrier_strength, problem.sense)
    if final.barrier > 0.0:
        termination = BARRIER_HIT
    elif any(r.termination == CONVERGED for r in results):
        termination = CONVERGED
    else:
        termination = EVAL_BUDGET
    certificate = None
    if problem.g == 1.0 and final.admissible:
        certificate = halfbound_certificate(CurveOperatorSpec(curve, 1.0, max(problem.resolution, 48)))
    dumps = []
    for r in results:
        for cand in r.candidates:
            dumps.append(write_counterexample(CurveSpec.from_dict(cand["curve"]), problem.resolution, dump_dir))
    return OptimizationTrace(
        best_curve=curve,
        best_value=best.best_value,
        history=history,
        termination=termination,
        certificate=certificate,
        problem=problem,
        best_lambda1=final.lambda1,
        restarts=[r.summary() for r in results],
        min_lambda1_seen=min(r.min_lambda1 for r in results),
        halfbound_violations=sum(r.halfbound_violations for r in results),
        counterexamples=[str(p) for p in dumps],
    )


def minimize_lambda1(problem: OptimizationProblem, parallelism: int = 1, dump_dir=None) -> OptimizationTrace:
    """Best (lowest) ``lambda_1`` over seeded Nelder-Mead restarts.

    At ``g = 1`` every admissible curve evaluated is checked against
    ``lambda_1 >= 1 - 1e-6``; each distinct violator is written to a
    counterexample file in ``dump_dir`` (listed in ``trace.counterexamples``).
    """
    if problem.sense != MINIMIZE:
        problem = _replace(problem, sense=MINIMIZE)
    return _optimize(problem, parallelism, dump_dir)


def maximize_lambda1(problem: OptimizationProblem, parallelism: int = 1, dump_dir=None) -> OptimizationTrace:
    """Highest ``lambda_1``; warns for ``g >= 0`` where no maximizer is expected."""
    if problem.g >= 0:
        warnings.warn(
            f"maximizing lambda_1 at g = {problem.g} >= 0; values grow until the budget or barrier stops them",
            RegimeWarning,
            stacklevel=2,
        )
    if problem.sense != MAXIMIZE:
        problem = _replace(problem, sense=MAXIMIZE)
    return _optimize(problem, parallelism, dump_dir)


def _replace(problem, **changes):
    from dataclasses import replace

    return replace(problem, **changes)


def write_counterexample(c: CurveSpec, resolution: int, dump_dir=None) -> Path:
    """Write a reproducibility record for a curve with ``lambda_1 < 1 - 1e-6`` at ``g = 1``.

    Contains the curve, Galerkin and finite-difference spectra at doubled
    resolution (the difference grid has 32 points per Fourier mode) and the
    half-bound certificate.
    """
    doubled = 2 * resolution
    spectra = {}
    for method, res in ((FOURIER_GALERKIN, doubled), (FINITE_DIFFERENCE, 32 * resolution)):
        spec = CurveOperatorSpec(c, 1.0, res, method)
        spectra[method] = {"resolution": res, "eigenvalues": [float(v) for v in eigenvalues(spec, 3)]}
    try:
        cert = halfbound_certificate(CurveOperatorSpec(c, 1.0, doubled)).to_dict()
    except Exception as exc:  # recorded rather than lost; the dump must still be written
        cert = {"error": f"{type(exc).__name__}: {exc}"}
    lam = spectra[FOURIER_GALERKIN]["eigenvalues"][0]
    record = {
        "kind": "curve",
        "curve": c.to_dict(),
        "g": 1.0,
        "spectra": spectra,
        "halfbound_certificate": cert,
        "lambda1": lam,
        "confirmed": lam < 1.0 - CONJECTURE_TOL,
    }
    return write_dump(record, dump_dir)


def write_dump(record: dict, dump_dir=None) -> Path:
    """Write ``record`` as ``counterexample-<UTC timestamp>-<hash>.json`` in ``dump_dir`` (default: cwd)."""
    directory = Path(dump_dir) if dump_dir is not None else Path.cwd()
    directory.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256(json.dumps(record, sort_keys=True, default=str).encode()).hexdigest()[:12]
    now = datetime.now(timezone.utc)
    path = directory / f"counterexample-{now.strftime('%Y%m%dT%H%M%S%fZ')}-{digest}.json"
    payload = dict(record, written_at=now.isoformat())
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))
    return path


@dataclass
class ScanResult:
    g: float
    rows: List[Tuple[float, float, float]]
    truncated: bool = False
    truncated_at: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "g": self.g,
            "rows": [list(r) for r in self.rows],
            "truncated": self.truncated,
            "truncated_at": self.truncated_at,
        }


def curvature_mode(n: int, kind: str = "cos") -> CurveSpec:
    """Direction whose curvature perturbation is ``cos(ns)`` (or ``sin(ns)``)."""
    if kind == "cos":
        return CurveSpec(((n, 0.0, 1.0 / n),))
    if kind == "sin":
        return CurveSpec(((n, -1.0 / n, 0.0),))
    raise ContractViolation(f"kind must be cos or sin, got {kind!r}")


def perturbation_scan(g: float, direction: CurveSpec, eps_grid: Sequence[float],
                      resolution: int = 64) -> ScanResult:
    """``(eps, lambda_1, lambda_2)`` along ``circle + eps * direction``.

    Stops at the first ``eps`` where the curvature is no longer positive and
    flags the result as truncated.
    """
    if not direction.is_even:
        raise ContractViolation("scan directions must use even harmonics only")
    rows, truncated, where = [], False, None
    for eps in eps_grid:
        c = CurveSpec.circle().plus(direction, float(eps))
        if min_curvature(c, reference_grid(c, minimum=1024))[0] <= 0.0:
            truncated, where = True, float(eps)
            break
        lam = eigenvalues(CurveOperatorSpec(c, g, resolution), 2)
        rows.append((float(eps), float(lam[0]), float(lam[1])))
    return ScanResult(g, rows, truncated, where)


@dataclass(frozen=True)
class Gradient:
    orders: Tuple[int, ...]
    d_a: np.ndarray
    d_b: np.ndarray
    lambda1: float
    gap: float

    @property
    def vector(self) -> np.ndarray:
        """Interleaved ``(d/da_n, d/db_n)`` in order."""
        return np.column_stack([self.d_a, self.d_b]).ravel()

    def to_dict(self) -> dict:
        return {
            "orders": list(self.orders),
            "d_a": self.d_a.tolist(),
            "d_b": self.d_b.tolist(),
            "lambda1": self.lambda1,
            "gap": self.gap,
        }


def _default_orders(c: CurveSpec) -> Tuple[int, ...]:
    return tuple(range(1, max(c.max_harmonic, 2) + 1))


def hf_gradient(c: CurveSpec, g: float, resolution: int = 64,
                orders: Optional[Sequence[int]] = None) -> Gradient:
    """Derivative of ``lambda_1`` in each harmonic coefficient from the ground state.

    ``d lambda_1 / dp = g int 2 kappa (d kappa/dp) f^2 ds`` with
    ``d kappa/da_n = -n sin(ns)`` and ``d kappa/db_n = n cos(ns)``.
    """
    orders = tuple(orders) if orders is not None else _default_orders(c)
    spec = CurveOperatorSpec(c, g, resolution)
    spectrum, _ = _diagonalize(spec, 2)
    lam1, lam2 = spectrum.eigenvalues[:2]
    gap = float(lam2 - lam1)
    if gap <= DEGENERACY_GAP:
        raise DegeneracyError(f"lambda_1 is degenerate (gap {gap:.3g}); the gradient is undefined")
    grid = spectrum.grid
    s = grid.nodes
    weight = 2.0 * g * c.kappa(s) * spectrum.eigenvectors[0] ** 2
    d_a = np.array([trapezoid_periodic(GridFunction(grid, -n * np.sin(n * s) * weight)) for n in orders])
    d_b = np.array([trapezoid_periodic(GridFunction(grid, n * np.cos(n * s) * weight)) for n in orders])
    return Gradient(orders, d_a, d_b, float(lam1), gap)


def fd_gradient(c: CurveSpec, g: float, resolution: int = 64,
                orders: Optional[Sequence[int]] = None, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``lambda_1``, interleaved like :attr:`Gradient.vector`."""
    orders = tuple(orders) if orders is not None else _default_orders(c)
    out = []
    for n in orders:
        a, b = c.coefficient(n)
        for da, db in ((step, 0.0), (0.0, step)):
            plus = CurveOperatorSpec(c.with_coefficient(n, a + da, b + db), g, resolution, require_positive=False)
            minus = CurveOperatorSpec(c.with_coefficient(n, a - da, b - db), g, resolution, require_positive=False)
            out.append((eigenvalues(plus, 1)[0] - eigenvalues(minus, 1)[0]) / (2.0 * step))
    return np.array(out)
