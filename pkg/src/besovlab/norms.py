"""Spectral Besov / Sobolev norms and rearrangement-based Lorentz norms.

Besov norms aggregate dyadic block sizes 2^(s j) ||phi_j(sqrt(A)) f||_p in
little-l^q.  The inhomogeneous scale adds the low cap ||psi(A) f||_p and
sums j >= 1; the homogeneous scale sums the whole active window and
refuses operators whose spectrum touches or crosses zero (the whole-line
dyadic decomposition does not see such spectrum).

Lorentz norms go through the decreasing rearrangement f* of |f| (a right
continuous step function with steps of width h^n) and its running average
f**(t) = t^-1 int_0^t f*.  On each step f** is of the form a + b/t, so
every piece of the norm integral

    ||f||_(p,q)^q = int_0^inf (t^(1/p) f**(t))^q dt/t

has an analytic antiderivative: elementary powers (plus a log when an
exponent vanishes) for integer q, a Gauss hypergeometric antiderivative
for fractional q.  No quadrature is involved anywhere, so Lorentz values
carry no tolerance knob.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import hyp2f1

from .calculus import apply_symbol
from .dyadic import DyadicSystem
from .errors import (
    InvalidExponent,
    InvalidSpectrumBounds,
    NegativeShiftedEigenvalue,
    ZeroEigenvaluePresent,
)
from .geometry import GridFunction, lp_norm
from .operators import SpectralOperator

__all__ = [
    "RearrangementProfile",
    "rearrangement_profile",
    "lorentz_norm",
    "besov_norm",
    "block_lp_norms",
    "psi_lp_norms",
    "sobolev_norm",
    "test_seminorms",
]

_ZERO_EIG_RTOL = 1e-12


# ---------------------------------------------------------------------------
# block norms and Besov scales
# ---------------------------------------------------------------------------


def _columns(f, op: SpectralOperator) -> np.ndarray:
    vals = f.values if isinstance(f, GridFunction) else np.asarray(f)
    if vals.ndim == 1:
        vals = vals[:, None]
    return vals


def _lp_cols(arr: np.ndarray, meas: float, p: float) -> np.ndarray:
    a = np.abs(arr)
    if math.isinf(p):
        return a.max(axis=0, initial=0.0)
    return (meas * np.sum(a**p, axis=0)) ** (1.0 / p)


def block_lp_norms(
    op: SpectralOperator, sys: DyadicSystem, f, p: float, js=None
) -> np.ndarray:
    """||phi_j(sqrt(A)) f||_p for j in js (default: the window), batched.

    Returns an array of shape (len(js), m) for m input columns.
    """
    if not (p >= 1.0):
        raise InvalidExponent(f"block norms need p >= 1, got {p}")
    op.require_eigendata()
    js = list(sys.window if js is None else js)
    cols = _columns(f, op)
    coeff = op.eigvecs.T @ cols
    meas = op.grid.cell_measure
    out = np.empty((len(js), cols.shape[1]))
    for i, j in enumerate(js):
        g = sys.phi_sqrt(j, op.eigvals)
        out[i] = _lp_cols(op.eigvecs @ (g[:, None] * coeff), meas, p)
    return out


def psi_lp_norms(op: SpectralOperator, sys: DyadicSystem, f, p: float) -> np.ndarray:
    """||psi(A) f||_p per input column."""
    op.require_eigendata()
    cols = _columns(f, op)
    out = apply_symbol(op, sys.psi, cols)
    return _lp_cols(out, op.grid.cell_measure, p)


def _check_homogeneous_spectrum(op: SpectralOperator) -> None:
    scale = max(abs(op.lam_max), 1.0)
    if op.lam_min <= _ZERO_EIG_RTOL * scale:
        raise ZeroEigenvaluePresent(
            f"spectrum touches zero (lam_min = {op.lam_min:.3e}); "
            "the homogeneous scale is undefined here"
        )


def _lq(terms: np.ndarray, q: float, axis: int = 0) -> np.ndarray:
    if math.isinf(q):
        return terms.max(axis=axis, initial=0.0)
    return np.sum(terms**q, axis=axis) ** (1.0 / q)


def besov_norm(
    op: SpectralOperator,
    sys: DyadicSystem,
    f,
    s: float,
    p: float,
    q: float,
    homogeneous: bool = False,
):
    """Besov norm of f with smoothness s and exponents (p, q).

    Inhomogeneous:  ||psi(A) f||_p + l^q over j >= 1 of 2^(s j) ||phi_j f||_p.
    Homogeneous:    l^q over the whole window; requires lam_min > 0.

    Scalar output for a single function, array for batched columns.
    """
    if not (p >= 1.0) or not (q >= 1.0):
        raise InvalidExponent(f"Besov exponents need p, q >= 1, got ({p}, {q})")
    op.require_eigendata()
    if not sys.covers(op.lam_max):
        raise InvalidSpectrumBounds(
            "dyadic window does not cover the spectrum of this operator"
        )
    single = not (isinstance(f, np.ndarray) and f.ndim == 2)
    if homogeneous:
        _check_homogeneous_spectrum(op)
        js = list(sys.window)
        norms = block_lp_norms(op, sys, f, p, js)
        weights = 2.0 ** (s * np.asarray(js, float))
        out = _lq(weights[:, None] * norms, q)
    else:
        js = list(sys.inhom_window)
        norms = block_lp_norms(op, sys, f, p, js)
        weights = 2.0 ** (s * np.asarray(js, float))
        out = psi_lp_norms(op, sys, f, p) + _lq(weights[:, None] * norms, q)
    return float(out[0]) if single else out


def sobolev_norm(op: SpectralOperator, f, s: float, variant: str = "plain"):
    """||(shift + A)^(s/2) f||_2 with shift 1 ('plain') or 1 + lam0^2 ('shifted').

    The plain variant requires 1 + lam_min > 0; the shifted one is always
    admissible because lam0^2 >= -lam_min by construction.
    """
    op.require_eigendata()
    if variant == "plain":
        shift = 1.0
    elif variant == "shifted":
        shift = 1.0 + op.lam0**2
    else:
        raise InvalidExponent(f"unknown Sobolev variant {variant!r}")
    moved = shift + op.eigvals
    if moved[0] <= 0.0:
        raise NegativeShiftedEigenvalue(
            f"shifted spectrum reaches {moved[0]:.3e} <= 0; use variant='shifted'"
        )
    cols = _columns(f, op)
    out = apply_symbol(op, lambda lam: (shift + lam) ** (s / 2.0), cols)
    res = _lp_cols(out, op.grid.cell_measure, 2.0)
    single = not (isinstance(f, np.ndarray) and f.ndim == 2)
    return float(res[0]) if single else res


def test_seminorms(
    op: SpectralOperator, sys: DyadicSystem, f, M: float
) -> tuple[float, float]:
    """Test-space seminorm pair (p_M, q_M) for a single function:

    p_M = ||f||_1 + sup_(j>=1) 2^(M j)   ||phi_j f||_1
    q_M = ||f||_1 + sup_(window) 2^(M|j|) ||phi_j f||_1
    """
    if isinstance(f, np.ndarray) and f.ndim == 2:
        raise InvalidExponent("test_seminorms expects a single function")
    base = lp_norm(f if isinstance(f, GridFunction) else GridFunction(op.grid, f), 1.0)
    js = list(sys.window)
    norms = block_lp_norms(op, sys, f, 1.0, js)[:, 0]
    j_arr = np.asarray(js, float)
    inh = j_arr >= 1.0
    p_val = base
    if inh.any():
        p_val = base + float(np.max(2.0 ** (M * j_arr[inh]) * norms[inh]))
    q_val = base + float(np.max(2.0 ** (M * np.abs(j_arr)) * norms))
    return p_val, q_val


# ---------------------------------------------------------------------------
# rearrangement and Lorentz norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RearrangementProfile:
    """Decreasing rearrangement of |f| as a step function.

    values : positive step heights, sorted descending (zeros trimmed)
    cell   : width of each step (the cell measure h^n)
    """

    values: np.ndarray
    cell: float

    @property
    def knots(self) -> np.ndarray:
        return self.cell * np.arange(len(self.values) + 1)

    @property
    def cumulative(self) -> np.ndarray:
        """S_i = int_0^(i*cell) f*, i = 0..len."""
        return np.concatenate([[0.0], np.cumsum(self.values) * self.cell])

    def f_star(self, t) -> np.ndarray:
        """Right-continuous step evaluation of f*."""
        t = np.asarray(t, float)
        idx = np.floor_divide(t, self.cell).astype(int)
        out = np.zeros_like(t)
        ok = (idx >= 0) & (idx < len(self.values))
        out[ok] = self.values[idx[ok]]
        return out

    def f_star_star(self, t) -> np.ndarray:
        """Running average t^-1 int_0^t f*."""
        t = np.asarray(t, float)
        S = self.cumulative
        idx = np.clip(np.floor_divide(t, self.cell).astype(int), 0, len(self.values))
        partial = np.where(
            idx < len(self.values),
            S[idx] + self.f_star(t) * (t - idx * self.cell),
            S[-1],
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t > 0.0, partial / t, self.values[0] if len(self.values) else 0.0)
        return out


def rearrangement_profile(f: GridFunction) -> RearrangementProfile:
    vals = np.sort(np.abs(f.values))[::-1]
    vals = vals[vals > 0.0]
    return RearrangementProfile(values=np.ascontiguousarray(vals), cell=f.grid.cell_measure)


def _pure_piece(t0, t1, a, c, q):
    """Integral of t^(c-1) a^q over [t0, t1]; the b = 0 pieces for any real q."""
    return a**q * (t1**c - t0**c) / c


def _binomial_piece(t0, t1, a, b, c, q_int):
    """Integral of t^(c-1) (a + b/t)^q over [t0, t1] for integer q and b > 0.

    Plain binomial expansion; the k-th term integrates a power of t, with a
    logarithm when the exponent c - k lands on zero.
    """
    total = np.zeros_like(a)
    for k in range(q_int + 1):
        coef = math.comb(q_int, k) * a ** (q_int - k) * b**k
        e = c - k
        if e == 0.0:
            total = total + coef * np.log(t1 / t0)
        else:
            total = total + coef * (t1**e - t0**e) / e
    return total


def _near_integer(x: float) -> bool:
    return abs(x - round(x)) < 1e-9


def _fractional_piece(t0, t1, a, b, c, q):
    """Integral of t^(c-1) (a + b/t)^q over [t0, t1] for fractional q, b > 0.

    Two equivalent Gauss hypergeometric antiderivatives exist,

        A(t) = b^q t^(c-q)/(c-q) 2F1(-q, c-q; c-q+1; -a t / b)
        B(t) = a^q t^c / c       2F1(-q, -c;  1-c;  -b / (a t))

    degenerate respectively when c - q or c is an integer (both cannot
    happen for fractional q).  Mixed pieces always have t1 <= 2 t0, so the
    selected form keeps its argument in [-2, 0] where 2F1 is well behaved.
    """
    gam = c - q
    a_ok = not _near_integer(gam)
    b_ok = not (_near_integer(c) and round(c) >= 1)

    def form_a(t):
        return b**q * t**gam / gam * hyp2f1(-q, gam, gam + 1.0, -(a * t) / b)

    def form_b(t):
        return a**q * t**c / c * hyp2f1(-q, -c, 1.0 - c, -b / (a * t))

    with np.errstate(over="ignore", invalid="ignore"):
        if a_ok and b_ok:
            z_mid = a * 0.5 * (t0 + t1) / b
            out = np.where(z_mid <= 1.0, form_a(t1) - form_a(t0), form_b(t1) - form_b(t0))
        elif a_ok:
            out = form_a(t1) - form_a(t0)
        else:
            out = form_b(t1) - form_b(t0)
    if not np.all(np.isfinite(out)):
        import mpmath

        out = np.asarray(out, float).copy()
        for i in np.nonzero(~np.isfinite(out))[0]:
            with mpmath.workdps(40):
                if a_ok:
                    lo, hi = (
                        mpmath.mpf(b[i]) ** q * mpmath.mpf(t) ** gam / gam
                        * mpmath.hyp2f1(-q, gam, gam + 1.0, -a[i] * t / b[i])
                        for t in (t0[i], t1[i])
                    )
                else:
                    lo, hi = (
                        mpmath.mpf(a[i]) ** q * mpmath.mpf(t) ** c / c
                        * mpmath.hyp2f1(-q, -c, 1.0 - c, -b[i] / (a[i] * t))
                        for t in (t0[i], t1[i])
                    )
            out[i] = float(hi - lo)
    return out


def lorentz_norm(f: GridFunction, p: float, q: float) -> float:
    """Lorentz norm ||f||_(p,q) through the averaged rearrangement f**.

    q = inf takes sup_t t^(1/p) f**(t) (exact piecewise maximization);
    finite q needs 1 < p < inf and integrates (t^(1/p) f**)^q dt/t piece
    by piece with analytic antiderivatives.

    Special cases: (p, q) = (1, inf) returns the L1 norm and
    (inf, inf) the sup norm, matching the classical identifications.
    """
    if not (p >= 1.0) or not (q >= 1.0):
        raise InvalidExponent(f"Lorentz exponents need p, q >= 1, got ({p}, {q})")
    prof = rearrangement_profile(f)
    v = prof.values
    if v.size == 0:
        return 0.0
    m = prof.cell
    S = prof.cumulative
    t_knots = prof.knots
    t0 = t_knots[:-1].copy()
    t1 = t_knots[1:]
    a = v
    b = S[:-1] - t0 * v  # b >= 0, b[0] = 0
    total_mass = float(S[-1])

    if math.isinf(q):
        if math.isinf(p):
            return float(v[0])
        if p == 1.0:
            return total_mass  # t * f**(t) increases to the total integral
        best = 0.0
        # per piece maximize a t^(1/p) + b t^(1/p - 1): endpoints plus the
        # critical point t = b (p - 1) / a when it lands inside
        t_crit = np.clip(b * (p - 1.0) / a, t0, t1)
        for tt in (t1.astype(float), np.maximum(t0, np.finfo(float).tiny), t_crit):
            tt = np.maximum(tt, np.finfo(float).tiny)
            best = max(best, float(np.max(tt ** (1.0 / p) * (a + b / tt))))
        # tail: t^(1/p - 1) * total decreasing for p > 1, sup at the last knot
        best = max(best, float(t_knots[-1] ** (1.0 / p - 1.0) * total_mass))
        return best

    if math.isinf(p) or p == 1.0:
        raise InvalidExponent(
            f"finite q needs 1 < p < inf (the (p, q) = ({p}, {q}) integral diverges)"
        )

    c = q / p
    mixed = b > 0.0  # mixed pieces always start at t0 > 0
    pieces = np.zeros_like(a)
    if (~mixed).any():
        pieces[~mixed] = _pure_piece(t0[~mixed], t1[~mixed], a[~mixed], c, q)
    if mixed.any():
        args = (t0[mixed], t1[mixed], a[mixed], b[mixed], c)
        if _near_integer(q):
            pieces[mixed] = _binomial_piece(*args, int(round(q)))
        else:
            pieces[mixed] = _fractional_piece(*args, q)
    tail = total_mass**q * t_knots[-1] ** (c - q) / (q - c)
    return float((np.sum(pieces) + tail) ** (1.0 / q))
