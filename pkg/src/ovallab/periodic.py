"""Spectra of ``H_g(C) = -d^2/ds^2 + g*kappa(s)^2`` with periodic boundary conditions.

Two discretizations are provided: Fourier-Galerkin in the orthonormal basis
``{1/sqrt(2pi), cos(ns)/sqrt(pi), sin(ns)/sqrt(pi)}`` (spectrally accurate
for band-limited curvature) and a 3-point finite-difference cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .curves import CurveSpec, curvature
from .errors import (
    ContractViolation,
    DegeneracyWarning,
    NumericalFailure,
    ResolutionError,
    UnsupportedCoupling,
)
from .numerics import (
    TWO_PI,
    GridFunction,
    Spectrum,
    SymmetricMatrix,
    UniformGrid,
    fourier_coefficients,
    symmetric_eigs,
    trapezoid_periodic,
)

FOURIER_GALERKIN = "fourier_galerkin"
FINITE_DIFFERENCE = "finite_difference"
METHODS = (FOURIER_GALERKIN, FINITE_DIFFERENCE)

AGREEMENT_TOL = 1e-8


@dataclass(frozen=True)
class CurveOperatorSpec:
    curve: CurveSpec
    g: float = 1.0
    resolution: int = 64
    method: str = FOURIER_GALERKIN
    require_positive: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractViolation(f"unknown method {self.method!r}")
        if self.resolution < 8:
            raise ContractViolation(f"resolution must be >= 8, got {self.resolution}")

    @property
    def dimension(self) -> int:
        if self.method == FOURIER_GALERKIN:
            return 2 * self.resolution + 1
        return self.resolution


@dataclass(frozen=True)
class HalfBoundCertificate:
    """Fourier bookkeeping behind ``lambda_1(C) >= 1/2`` for one ground state."""

    c0_sq: float
    parseval_residual: float
    quadratic_form: float
    fourier_sum: float
    certified_lower_bound: float
    mean_term: float
    lambda1: float
    max_mode: int

    @property
    def holds(self) -> bool:
        return self.c0_sq <= 0.5 + 1e-8 and self.certified_lower_bound >= 0.5 - 1e-8

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"holds": self.holds}


def _even(n: int) -> int:
    return n + n % 2


def _quadrature_grid(spec: CurveOperatorSpec) -> UniformGrid:
    # kappa^2 carries modes up to 2*max_harmonic; matrix entries need modes up to 2N
    n = spec.resolution
    return UniformGrid.circle(_even(max(4 * (2 * n + 1), 16 * spec.curve.max_harmonic)))


def sample_grid(resolution: int) -> UniformGrid:
    """Grid on which Galerkin eigenfunctions are returned."""
    return UniformGrid.circle(_even(max(1024, 8 * resolution)))


def real_basis(resolution: int, s: np.ndarray) -> np.ndarray:
    """Orthonormal real Fourier basis sampled at ``s``; shape ``(len(s), 2N+1)``."""
    cols = [np.full_like(s, 1.0 / math.sqrt(TWO_PI))]
    inv = 1.0 / math.sqrt(math.pi)
    for n in range(1, resolution + 1):
        cols.append(inv * np.cos(n * s))
        cols.append(inv * np.sin(n * s))
    return np.column_stack(cols)


def _complex_to_real(resolution: int) -> np.ndarray:
    """Columns express the real basis in the complex basis ``e^{ins}/sqrt(2pi)``, n=-N..N."""
    n_modes = 2 * resolution + 1
    u = np.zeros((n_modes, n_modes), dtype=complex)
    centre = resolution
    u[centre, 0] = 1.0
    r = 1.0 / math.sqrt(2.0)
    for n in range(1, resolution + 1):
        u[centre + n, 2 * n - 1] = r
        u[centre - n, 2 * n - 1] = r
        u[centre + n, 2 * n] = -1j * r
        u[centre - n, 2 * n] = 1j * r
    return u


def _potential_samples(spec: CurveOperatorSpec, grid: UniformGrid) -> np.ndarray:
    kappa = curvature(spec.curve, grid, require_positive=spec.require_positive).values
    return spec.g * kappa**2


def _galerkin_entries(spec: CurveOperatorSpec) -> np.ndarray:
    n = spec.resolution
    qgrid = _quadrature_grid(spec)
    w = _potential_samples(spec, qgrid)
    # w_m = (1/2pi) * integral of W e^{-ims}
    coeffs = fourier_coefficients(GridFunction(qgrid, w), 2 * n) / math.sqrt(TWO_PI)
    idx = np.arange(-n, n + 1)
    toeplitz = coeffs[(idx[:, None] - idx[None, :]) + 2 * n]
    u = _complex_to_real(n)
    pot = (u.conj().T @ toeplitz @ u).real
    kinetic = np.zeros(2 * n + 1)
    kinetic[1::2] = np.arange(1, n + 1) ** 2
    kinetic[2::2] = np.arange(1, n + 1) ** 2
    return pot + np.diag(kinetic)


def _fd_entries(spec: CurveOperatorSpec) -> np.ndarray:
    grid = UniformGrid.circle(spec.resolution)
    h = grid.spacing
    w = _potential_samples(spec, grid)
    n = spec.resolution
    a = np.diag(2.0 / h**2 + w)
    off = -np.ones(n - 1) / h**2
    a += np.diag(off, 1) + np.diag(off, -1)
    a[0, -1] = a[-1, 0] = -1.0 / h**2
    return a


def build_operator(spec: CurveOperatorSpec) -> SymmetricMatrix:
    if spec.method == FOURIER_GALERKIN:
        return SymmetricMatrix(_galerkin_entries(spec))
    return SymmetricMatrix(_fd_entries(spec))


def eigenvalues(spec: CurveOperatorSpec, k: int) -> np.ndarray:
    """Lowest ``k`` eigenvalues only; the fast path used by optimizers and sweeps."""
    m = build_operator(spec)
    try:
        return scipy.linalg.eigh(
            m.entries, subset_by_index=(0, k - 1), eigvals_only=True, driver="evr"
        )
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"eigensolver failed: {exc}", {"dimension": m.dimension}) from exc


def _orient_ground_state(vectors: np.ndarray) -> np.ndarray:
    if vectors.shape[0] and vectors[0].sum() < 0:
        vectors[0] *= -1.0
    return vectors


def _diagonalize(spec: CurveOperatorSpec, k: int) -> tuple[Spectrum, np.ndarray]:
    """Spectrum with grid eigenfunctions, plus the raw coefficient vectors."""
    m = build_operator(spec)
    raw = symmetric_eigs(m, k)
    if spec.method == FOURIER_GALERKIN:
        grid = sample_grid(spec.resolution)
        coeffs = raw.eigenvectors
        samples = coeffs @ real_basis(spec.resolution, grid.nodes).T
    else:
        grid = UniformGrid.circle(spec.resolution)
        coeffs = raw.eigenvectors
        samples = coeffs / math.sqrt(grid.spacing)
    flip = np.where(samples.sum(axis=1)[:1] < 0, -1.0, 1.0)
    samples[:1] *= flip
    coeffs = coeffs.copy()
    coeffs[:1] *= flip
    spectrum = Spectrum(
        raw.eigenvalues,
        samples,
        resolution=spec.resolution,
        method=spec.method,
        grid=grid,
        metadata={"g": spec.g, "dimension": m.dimension},
    )
    return spectrum, coeffs


def lowest_eigs(spec: CurveOperatorSpec, k: int, check: bool = True) -> Spectrum:
    """The ``k`` lowest eigenpairs, eigenfunctions sampled on a periodic grid.

    With ``check`` the lowest eigenvalue is recomputed at 1.5x resolution;
    a disagreement above 1e-8 sets ``metadata['resolution_warning']``.
    """
    spectrum, _ = _diagonalize(spec, k)
    if check:
        finer = replace(spec, resolution=int(math.ceil(1.5 * spec.resolution)))
        lam_fine = eigenvalues(finer, 1)[0]
        delta = float(abs(lam_fine - spectrum.eigenvalues[0]))
        spectrum.metadata.update(
            {
                "check_resolution": finer.resolution,
                "delta_lambda1": delta,
                "resolution_warning": delta > AGREEMENT_TOL,
            }
        )
    return spectrum


def circle_spectrum(g: float, k: int) -> Spectrum:
    """Exact eigenvalues ``n^2 + g`` of the circle of length 2*pi."""
    if k < 1:
        raise ContractViolation("k must be positive")
    values = [g]
    n = 1
    while len(values) < k:
        values += [n * n + g, n * n + g]
        n += 1
    return Spectrum(np.array(values[:k]), resolution=0, method="analytic", metadata={"g": g})


def halfbound_certificate(spec: CurveOperatorSpec) -> HalfBoundCertificate:
    """Evaluate the Fourier argument giving ``lambda_1 >= 1/2`` on the computed ground state.

    The ground state ``f`` is always taken from the Galerkin discretization.
    ``c_n`` are the Fourier coefficients of ``exp(i*phi) f``; the quadratic
    form must equal ``sum n^2 |c_n|^2`` to 1e-6 relative, otherwise the
    sampling is too coarse and :class:`ResolutionError` is raised.
    """
    if spec.g != 1.0:
        raise UnsupportedCoupling(f"the half-bound argument needs g = 1, got {spec.g}")
    spec = replace(spec, method=FOURIER_GALERKIN)
    spectrum, coeffs = _diagonalize(spec, 1)
    m = build_operator(spec)
    f = spectrum.eigenvectors[0]
    grid = spectrum.grid
    fmax = np.max(np.abs(f))
    if f.min() < -1e-8 * fmax:
        warnings.warn(
            f"ground state changes sign (min {f.min():.3g}); lambda_1 may be degenerate",
            DegeneracyWarning,
            stacklevel=2,
        )
    phi = spec.curve.phi(grid.nodes)
    max_mode = grid.points // 2 - 1
    c = fourier_coefficients(GridFunction(grid, np.exp(1j * phi) * f), max_mode)
    modes = np.arange(-max_mode, max_mode + 1)
    power = np.abs(c) ** 2
    norm_sq = trapezoid_periodic(GridFunction(grid, f * f))
    mean_term = trapezoid_periodic(GridFunction(grid, f)) ** 2 / TWO_PI
    quad = float(coeffs[0] @ m.entries @ coeffs[0])
    fourier_sum = float(np.sum(modes**2 * power))
    cert = HalfBoundCertificate(
        c0_sq=float(power[max_mode]),
        parseval_residual=float(abs(power.sum() - norm_sq)),
        quadratic_form=quad,
        fourier_sum=fourier_sum,
        certified_lower_bound=float(power.sum() - power[max_mode]),
        mean_term=float(mean_term),
        lambda1=float(spectrum.eigenvalues[0]),
        max_mode=max_mode,
    )
    if abs(fourier_sum - quad) > 1e-6 * abs(quad):
        raise ResolutionError(
            f"sum n^2|c_n|^2 = {fourier_sum:.12g} disagrees with (f, Hf) = {quad:.12g}"
        )
    return cert
