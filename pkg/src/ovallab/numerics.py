"""Shared numerical kernels: uniform grids, periodic quadrature, discrete
Fourier coefficients and dense symmetric eigensolvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ContractViolation, NumericalFailure, ResolutionError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class UniformGrid:
    """Uniform grid on ``[start, end]``.

    A periodic grid holds ``points`` samples ``start + j*h`` with
    ``h = (end - start)/points`` and omits the right endpoint; a closed grid
    includes both endpoints.
    """

    start: float
    end: float
    points: int
    periodic: bool = False

    def __post_init__(self):
        if int(self.points) != self.points or self.points < 8:
            raise ContractViolation(f"grid needs at least 8 points, got {self.points}")
        if not self.end > self.start:
            raise ContractViolation("grid end must exceed start")

    @classmethod
    def circle(cls, points: int) -> "UniformGrid":
        return cls(0.0, TWO_PI, points, periodic=True)

    @property
    def spacing(self) -> float:
        if self.periodic:
            return (self.end - self.start) / self.points
        return (self.end - self.start) / (self.points - 1)

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def nodes(self) -> np.ndarray:
        return self.start + self.spacing * np.arange(self.points)

    def sample(self, func) -> "GridFunction":
        return GridFunction(self, func(self.nodes))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a function at the nodes of a :class:`UniformGrid`.

    Values may be complex; the array is copied and frozen.
    """

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, copy=True)
        if not np.iscomplexobj(vals):
            vals = vals.astype(float)
        if vals.shape != (self.grid.points,):
            raise ContractViolation(
                f"{vals.shape[0] if vals.ndim else 0} values for a grid of {self.grid.points} nodes"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def __len__(self):
        return self.grid.points

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def inner(self, other: "GridFunction") -> float:
        """Discrete L2 inner product ``h * sum(f*g)``."""
        return float(self.grid.spacing * np.dot(self.values, other.values))

    def norm(self) -> float:
        return math.sqrt(self.grid.spacing * float(np.dot(self.values, self.values)))


class SymmetricMatrix:
    """Dense real symmetric matrix, symmetrized as ``(A + A.T)/2`` on construction."""

    def __init__(self, entries):
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ContractViolation(f"expected a square matrix, got shape {a.shape}")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._entries = a

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dimension(self) -> int:
        return self._entries.shape[0]

    def norm(self) -> float:
        """Max row-sum norm."""
        return float(np.abs(self._entries).sum(axis=1).max())

    def __matmul__(self, other):
        return self._entries @ other


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues with optional eigenvectors.

    ``eigenvectors`` has one row per eigenvalue. When ``grid`` is set the
    rows are samples on that grid with unit discrete L2 norm; otherwise they
    are Euclidean-orthonormal coefficient vectors.
    """

    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None
    resolution: int = 0
    method: str = "dense"
    grid: Optional[UniformGrid] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if np.any(np.diff(ev) < 0):
            raise ContractViolation("eigenvalues must be ascending")
        object.__setattr__(self, "eigenvalues", ev)

    def __len__(self):
        return len(self.eigenvalues)

    def functions(self) -> list:
        if self.eigenvectors is None or self.grid is None:
            raise ContractViolation("spectrum carries no grid eigenfunctions")
        return [GridFunction(self.grid, row) for row in self.eigenvectors]

    def to_dict(self, include_vectors: bool = False) -> dict:
        out = {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "resolution": int(self.resolution),
            "method": self.method,
            "metadata": dict(self.metadata),
        }
        if include_vectors and self.eigenvectors is not None:
            out["eigenvectors"] = self.eigenvectors.tolist()
        return out


def _require_periodic(grid: UniformGrid):
    if not grid.periodic:
        raise ContractViolation("operation requires a periodic grid")


def trapezoid_periodic(f: GridFunction):
    """Periodic trapezoid rule ``h * sum(values)``.

    Exact for trigonometric polynomials of degree below ``points/2``.
    """
    _require_periodic(f.grid)
    total = f.grid.spacing * np.sum(f.values)
    return complex(total) if np.iscomplexobj(total) else float(total)


def fourier_coefficients(f, max_mode: int) -> np.ndarray:
    """Coefficients ``c_n = (2 pi)^-1/2 * trapz(f(s) exp(-i n s))``, n = -max_mode..max_mode.

    ``f`` is a :class:`GridFunction` on a periodic grid of length 2*pi, or a
    ``(real, imag)`` pair of them.
    """
    if isinstance(f, tuple):
        re, im = f
        if re.grid != im.grid:
            raise ContractViolation("real and imaginary parts on different grids")
        grid, values = re.grid, re.values + 1j * im.values
    else:
        grid, values = f.grid, f.values
    _require_periodic(grid)
    if not math.isclose(grid.length, TWO_PI, rel_tol=1e-12):
        raise ContractViolation("Fourier coefficients need a grid of period 2*pi")
    if 2 * max_mode + 1 > grid.points:
        raise ResolutionError(
            f"max_mode={max_mode} needs at least {2 * max_mode + 1} points, grid has {grid.points}"
        )
    n = grid.points
    # the DFT is exactly the trapezoid sum; shift accounts for a nonzero start
    raw = np.fft.fft(values) / n
    modes = np.arange(-max_mode, max_mode + 1)
    coeffs = raw[modes % n] * np.exp(-1j * modes * grid.start)
    return math.sqrt(TWO_PI) * coeffs


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so that its first non-negligible component is positive."""
    out = vectors.copy()
    for row in out:
        scale = np.max(np.abs(row))
        idx = np.flatnonzero(np.abs(row) > 1e-12 * scale)
        if idx.size and row[idx[0]] < 0:
            row *= -1.0
    return out


def symmetric_eigs(m: SymmetricMatrix, k: int) -> Spectrum:
    """The ``k`` smallest eigenpairs of a dense symmetric matrix."""
    if not 1 <= k <= m.dimension:
        raise ContractViolation(f"k={k} outside 1..{m.dimension}")
    try:
        w, v = scipy.linalg.eigh(m.entries, subset_by_index=(0, k - 1), driver="evr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(
            f"dense eigensolver failed: {exc}", {"dimension": m.dimension, "k": k}
        ) from exc
    return Spectrum(w, _fix_signs(v.T), resolution=m.dimension, method="dense")


def tridiagonal_eigs(diagonal, off_diagonal, k: int) -> Spectrum:
    """The ``k`` smallest eigenpairs of a symmetric tridiagonal matrix."""
    d = np.asarray(diagonal, dtype=float)
    e = np.asarray(off_diagonal, dtype=float)
    if e.shape[0] != d.shape[0] - 1:
        raise ContractViolation("off-diagonal must be one shorter than the diagonal")
    if not 1 <= k <= d.shape[0]:
        raise ContractViolation(f"k={k} outside 1..{d.shape[0]}")
    try:
        w, v = scipy.linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(
            f"tridiagonal eigensolver failed: {exc}", {"dimension": d.shape[0], "k": k}
        ) from exc
    return Spectrum(w, _fix_signs(v.T), resolution=d.shape[0], method="dense")


def jacobi_eigs(m: SymmetricMatrix, k: int, tol: float = 1e-12, max_sweeps: int = 60) -> Spectrum:
    """Cyclic Jacobi rotations; a slow, independent reference for small matrices.

    Converged when the off-diagonal Frobenius norm falls below ``tol`` times
    the full Frobenius norm.
    """
    if not 1 <= k <= m.dimension:
        raise ContractViolation(f"k={k} outside 1..{m.dimension}")
    a = np.array(m.entries, dtype=float)
    n = a.shape[0]
    vecs = np.eye(n)
    total = np.linalg.norm(a)
    off = 0.0
    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * max(total, np.finfo(float).tiny):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = vecs[:, p].copy(), vecs[:, q].copy()
                vecs[:, p] = c * vp - s * vq
                vecs[:, q] = s * vp + c * vq
    else:
        raise NumericalFailure(
            "Jacobi iteration did not converge",
            {"sweeps": max_sweeps, "off_norm": off, "matrix_norm": total},
        )
    w = np.diag(a)
    order = np.argsort(w, kind="stable")[:k]
    return Spectrum(w[order], _fix_signs(vecs[:, order].T), resolution=n, method="jacobi")


def periodic_derivative(f: GridFunction, max_mode: Optional[int] = None) -> GridFunction:
    """Spectral derivative of a smooth periodic grid function of period 2*pi."""
    _require_periodic(f.grid)
    n = f.grid.points
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    if max_mode is not None:
        k[np.abs(k) > max_mode] = 0.0
    d = np.fft.ifft(1j * k * np.fft.fft(f.values))
    if not np.iscomplexobj(f.values):
        d = d.real
    return GridFunction(f.grid, d)


def parse_grid_spec(text: str) -> np.ndarray:
    """Parse ``start:end:step``; the end is included when (end-start)/step is integral to 1e-9."""
    try:
        start, end, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ContractViolation(f"grid must be start:end:step, got {text!r}") from None
    if step <= 0 or end < start:
        raise ContractViolation(f"invalid grid {text!r}")
    ratio = (end - start) / step
    count = int(math.floor(ratio + 1e-9))
    if abs(ratio - round(ratio)) <= 1e-9:
        count = int(round(ratio))
    # rounding keeps 0.6 + 3*0.1 from printing as 0.9000000000000001
    return np.array([round(start + i * step, 12) for i in range(count + 1)])
