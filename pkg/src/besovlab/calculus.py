"""Functional calculus for spectral operators: g(A) along two routes.

Dense route: with cached eigendata, g(A) f = U g(L) U^T f, exact up to
rounding.  Matrix-free route: adaptive Chebyshev approximation of the
symbol on an interval enclosing the spectrum, evaluated by the three-term
recurrence with sparse matvecs only.  The Chebyshev degree doubles until
the sampled sup error of the symbol meets the tolerance, so the operator
error in L2 is bounded by the same number.

Heat semigroups are computed spectrally (no time stepping); kernels are
matrix entries divided by h^n, so they converge to the continuum kernels
under refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import numpy.polynomial.chebyshev as npcheb

from .dyadic import DyadicSystem
from .errors import (
    ChebyshevToleranceUnmet,
    GridMismatch,
    InvalidExponent,
    InvalidSpectrumBounds,
    NegativeSpectrumComponent,
)
from .geometry import GridFunction
from .operators import SpectralOperator

__all__ = [
    "OperatorFunction",
    "KernelMatrix",
    "apply_symbol",
    "chebyshev_coefficients",
    "dyadic_block",
    "fat_block",
    "psi_block",
    "suite_symbols",
    "heat",
    "heat_kernel",
    "power",
    "kernel",
    "opnorm",
    "mixed_opnorm",
]

DEFAULT_CHEB_TOL = 1e-9
DEFAULT_CHEB_MAX_DEGREE = 16384
_CHEB_ERROR_GRID = 10_000
_CHEB_START_DEGREE = 32


def _as_array(op: SpectralOperator, f) -> tuple[np.ndarray, bool]:
    if isinstance(f, GridFunction):
        if not f.grid.same_geometry(op.grid):
            raise GridMismatch("function lives on a different grid than the operator")
        return f.values, True
    arr = np.asarray(f)
    if arr.shape[0] != op.num_nodes:
        raise GridMismatch(
            f"vector length {arr.shape[0]} does not match operator size {op.num_nodes}"
        )
    return arr, False


def _wrap(op: SpectralOperator, values: np.ndarray, was_gridfunction: bool):
    if was_gridfunction:
        return GridFunction(op.grid, values)
    return values


# ---------------------------------------------------------------------------
# dense route
# ---------------------------------------------------------------------------


def _dense_apply(op: SpectralOperator, symbol: Callable, vals: np.ndarray) -> np.ndarray:
    op.require_eigendata()
    g = np.asarray(symbol(op.eigvals), float)
    coeff = op.eigvecs.T @ vals
    if coeff.ndim == 1:
        return op.eigvecs @ (g * coeff)
    return op.eigvecs @ (g[:, None] * coeff)


# ---------------------------------------------------------------------------
# Chebyshev route
# ---------------------------------------------------------------------------


def chebyshev_coefficients(
    symbol: Callable,
    lo: float,
    hi: float,
    tol: float = DEFAULT_CHEB_TOL,
    max_degree: int = DEFAULT_CHEB_MAX_DEGREE,
) -> tuple[np.ndarray, float]:
    """Adaptive Chebyshev fit of the symbol on [lo, hi].

    The degree doubles from a small start until the sup error sampled on a
    dense grid (10^4 points) drops below ``tol``; returns (coefficients,
    achieved sup error).  Raises ChebyshevToleranceUnmet at the cap.
    """
    if not (hi > lo):
        raise InvalidSpectrumBounds(f"empty spectral interval [{lo}, {hi}]")
    center = 0.5 * (hi + lo)
    halfwidth = 0.5 * (hi - lo)

    def mapped(x):
        return np.asarray(symbol(center + halfwidth * x), float)

    grid = np.linspace(-1.0, 1.0, _CHEB_ERROR_GRID)
    target = mapped(grid)
    degree = _CHEB_START_DEGREE
    while True:
        coeffs = npcheb.chebinterpolate(mapped, degree)
        err = float(np.max(np.abs(npcheb.chebval(grid, coeffs) - target)))
        if err <= tol:
            return coeffs, err
        if degree >= max_degree:
            raise ChebyshevToleranceUnmet(
                f"sup error {err:.3e} > {tol:.3e} at the degree cap {max_degree}"
            )
        degree *= 2


def _cheb_apply(
    op: SpectralOperator,
    symbol: Callable,
    vals: np.ndarray,
    tol: float,
    max_degree: int,
) -> np.ndarray:
    lo, hi = (op.eigvals[0], op.eigvals[-1]) if op.has_eigendata else op.gershgorin_bounds()
    pad = 1e-12 * max(abs(lo), abs(hi), 1.0)
    coeffs, _ = chebyshev_coefficients(symbol, lo - pad, hi + pad, tol, max_degree)
    center = 0.5 * (hi + lo)
    halfwidth = 0.5 * (hi - lo) + pad

    mat = op.matrix

    def shifted(x):
        return (mat @ x - center * x) / halfwidth

    t_prev = vals
    t_cur = shifted(vals)
    acc = coeffs[0] * t_prev
    if len(coeffs) > 1:
        acc = acc + coeffs[1] * t_cur
    for ck in coeffs[2:]:
        t_next = 2.0 * shifted(t_cur) - t_prev
        t_prev, t_cur = t_cur, t_next
        acc = acc + ck * t_cur
    return acc


# ---------------------------------------------------------------------------
# public apply and symbol wrappers
# ---------------------------------------------------------------------------


def apply_symbol(
    op: SpectralOperator,
    symbol: Callable,
    f,
    path: str = "dense",
    cheb_tol: float = DEFAULT_CHEB_TOL,
    max_degree: int = DEFAULT_CHEB_MAX_DEGREE,
):
    """Apply g(A) to f (GridFunction or (N,) / (N, m) array).

    path='dense' uses cached eigendata; path='cheb' is matrix-free.
    """
    vals, wrap = _as_array(op, f)
    if path == "dense":
        out = _dense_apply(op, symbol, vals)
    elif path == "cheb":
        out = _cheb_apply(op, symbol, vals, cheb_tol, max_degree)
    else:
        raise ValueError(f"unknown calculus path {path!r}")
    return _wrap(op, out, wrap)


@dataclass
class OperatorFunction:
    """A named symbol bound to an operator; callable on grid functions."""

    op: SpectralOperator
    symbol: Callable
    name: str
    path: str = "dense"
    cheb_tol: float = DEFAULT_CHEB_TOL
    max_degree: int = DEFAULT_CHEB_MAX_DEGREE

    def apply(self, f):
        return apply_symbol(
            self.op, self.symbol, f, path=self.path,
            cheb_tol=self.cheb_tol, max_degree=self.max_degree,
        )

    def kernel(self) -> "KernelMatrix":
        return kernel(self)

    def opnorm(self, p: float, seed: int = 0):
        return opnorm(self, p, seed=seed)


def dyadic_block(op: SpectralOperator, sys: DyadicSystem, j: int, path: str = "dense") -> OperatorFunction:
    """Spectral shell selector phi_j(sqrt(A)); vanishes on the nonpositive spectrum."""
    return OperatorFunction(op, lambda lam: sys.phi_sqrt(j, lam), f"phi[{j}]", path=path)


def fat_block(op: SpectralOperator, sys: DyadicSystem, j: int, path: str = "dense") -> OperatorFunction:
    """Fattened shell Phi_j(sqrt(A)) = (phi_(j-1)+phi_j+phi_(j+1))(sqrt(A))."""
    return OperatorFunction(op, lambda lam: sys.fat_phi_sqrt(j, lam), f"Phi[{j}]", path=path)


def psi_block(op: SpectralOperator, sys: DyadicSystem, path: str = "dense") -> OperatorFunction:
    """Low-spectrum cap psi(A); equals the identity on the spectrum below 1."""
    return OperatorFunction(op, sys.psi, "psi", path=path)


def suite_symbols(
    op: SpectralOperator, sys: DyadicSystem
) -> list[tuple[str, Callable[[np.ndarray], np.ndarray]]]:
    """Standard battery of (name, symbol) pairs for benches and sweeps.

    Covers the qualitatively distinct shapes the toolbox applies: the low
    cap, one mid-window shell, a spectrum-scaled heat symbol, and the
    shifted square root in both directions.  Every symbol is smooth on a
    neighborhood of the spectral interval, so the Chebyshev route
    converges for each of them.
    """
    op.require_eigendata()
    # keep the shell inside the inhomogeneous window so the sqrt kink at
    # lambda = 0 stays outside its support even for shifted spectra
    mid = max((sys.j_min + sys.j_max) // 2, sys.inhom_window.start)
    shift = sys.lam0**2 + 1.0
    t_heat = 4.0 / max(float(op.lam_max), 1.0)
    return [
        ("psi", sys.psi),
        (f"phi[{mid}]", lambda lam: sys.phi_sqrt(mid, lam)),
        ("heat", lambda lam: np.exp(-t_heat * np.asarray(lam, float))),
        ("root", lambda lam: np.sqrt(shift + np.asarray(lam, float))),
        ("invroot", lambda lam: (shift + np.asarray(lam, float)) ** -0.5),
    ]


def heat(op: SpectralOperator, t: float, f, path: str = "dense"):
    """Heat semigroup e^(-tA) f, computed spectrally."""
    if not (t >= 0.0):
        raise ValueError(f"heat time must be nonnegative, got {t}")
    return apply_symbol(op, lambda lam: np.exp(-t * lam), f, path=path)


def power(
    op: SpectralOperator,
    alpha: float,
    f,
    positive_part_only: bool = False,
    tol: float = 1e-12,
):
    """A^alpha f.  Nonnegative integer alpha acts on the whole spectrum;
    fractional or negative alpha is defined only on the positive part.

    With positive_part_only=True the nonpositive spectral components are
    projected away silently; otherwise any such component above a relative
    tolerance raises NegativeSpectrumComponent.
    """
    vals, wrap = _as_array(op, f)
    if float(alpha).is_integer() and alpha >= 0:
        out = _dense_apply(op, lambda lam: lam ** float(alpha), vals)
        return _wrap(op, out, wrap)
    op.require_eigendata()
    lam = op.eigvals
    pos = lam > 0.0
    coeff = op.eigvecs.T @ vals
    if not positive_part_only:
        bad = np.linalg.norm(coeff[~pos], axis=0) if coeff.ndim > 1 else np.linalg.norm(coeff[~pos])
        scale = np.linalg.norm(coeff, axis=0) if coeff.ndim > 1 else np.linalg.norm(coeff)
        if np.any(bad > tol * np.maximum(scale, 1e-300)):
            raise NegativeSpectrumComponent(
                f"input has relative mass {float(np.max(bad / np.maximum(scale, 1e-300))):.2e} "
                "on the nonpositive spectrum; pass positive_part_only=True to project it away"
            )
    g = lam[pos] ** float(alpha)
    sub = coeff[pos]
    out = op.eigvecs[:, pos] @ (g[:, None] * sub if sub.ndim > 1 else g * sub)
    return _wrap(op, out, wrap)


# ---------------------------------------------------------------------------
# kernels and operator norms
# ---------------------------------------------------------------------------


@dataclass
class KernelMatrix:
    """Integral kernel of g(A): values K(x, y) = matrix entries / h^n."""

    op: SpectralOperator = field(repr=False)
    name: str
    values: np.ndarray = field(repr=False)

    @property
    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T)))

    @property
    def min_entry(self) -> float:
        return float(self.values.min())


def kernel(opfun: OperatorFunction) -> KernelMatrix:
    op = opfun.op
    op.require_eigendata()
    g = np.asarray(opfun.symbol(op.eigvals), float)
    mat = (op.eigvecs * g) @ op.eigvecs.T
    return KernelMatrix(op=op, name=opfun.name, values=mat / op.grid.cell_measure)


def heat_kernel(op: SpectralOperator, t: float) -> KernelMatrix:
    if not (t >= 0.0):
        raise ValueError(f"heat time must be nonnegative, got {t}")
    return kernel(OperatorFunction(op, lambda lam: np.exp(-t * lam), f"heat[{t}]"))


@dataclass(frozen=True)
class OpNorm:
    value: float
    exact: bool
    r: float
    p: float


def mixed_opnorm(opfun: OperatorFunction, r: float, p: float,
                 probes: int = 16, seed: int = 0) -> OpNorm:
    """Operator norm L^r -> L^p of g(A).

    Exact branches: r = 1 (kernel column L^p norms), p = inf (kernel row
    L^r' norms), r = p = 2 (max |g| over the spectrum).  Anything else is a
    randomized lower bound and is flagged exact=False.
    """
    if not (r >= 1.0) or not (p >= 1.0):
        raise InvalidExponent(f"operator norm needs exponents >= 1, got ({r}, {p})")
    op = opfun.op
    meas = op.grid.cell_measure
    if r == 2.0 and p == 2.0:
        op.require_eigendata()
        return OpNorm(float(np.max(np.abs(opfun.symbol(op.eigvals)))), True, r, p)
    if r == 1.0:
        K = kernel(opfun).values
        if math.isinf(p):
            return OpNorm(float(np.max(np.abs(K))), True, r, p)
        col = (meas * np.sum(np.abs(K) ** p, axis=0)) ** (1.0 / p)
        return OpNorm(float(col.max()), True, r, p)
    if math.isinf(p):
        # dual of the r=1 case: rows in L^r'
        K = kernel(opfun).values
        if r == math.inf:
            row = meas * np.sum(np.abs(K), axis=1)
        else:
            rr = r / (r - 1.0)
            row = (meas * np.sum(np.abs(K) ** rr, axis=1)) ** (1.0 / rr)
        return OpNorm(float(row.max()), True, r, p)

    rng = np.random.default_rng(seed)
    N = op.num_nodes
    best = 0.0
    from .geometry import lp_norm  # local import to avoid cycle at module load

    for _ in range(probes):
        v = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        fv = GridFunction(op.grid, v)
        denom = lp_norm(fv, r)
        out = opfun.apply(fv)
        best = max(best, lp_norm(out, p) / denom)
    return OpNorm(best, False, r, p)


def opnorm(opfun: OperatorFunction, p: float, probes: int = 16, seed: int = 0) -> OpNorm:
    """Operator norm L^p -> L^p; exact for p in {1, 2, inf} via kernel sums
    (column, spectral radius, row), a randomized lower bound otherwise."""
    if not (p >= 1.0):
        raise InvalidExponent(f"operator norm needs p >= 1, got {p}")
    if p == 1.0:
        K = kernel(opfun).values
        meas = opfun.op.grid.cell_measure
        return OpNorm(float(np.max(meas * np.sum(np.abs(K), axis=0))), True, p, p)
    if math.isinf(p):
        K = kernel(opfun).values
        meas = opfun.op.grid.cell_measure
        return OpNorm(float(np.max(meas * np.sum(np.abs(K), axis=1))), True, p, p)
    if p == 2.0:
        return mixed_opnorm(opfun, 2.0, 2.0)
    return mixed_opnorm(opfun, p, p, probes=probes, seed=seed)
