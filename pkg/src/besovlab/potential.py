"""Potentials: sign decomposition, Kato-class norms, smallness reports.

The Kato norm of the negative part is the sup over probe nodes x of the
kernel-weighted mass near x,

    n = 3:  sum_{|x-y| < r} |x-y|^(2-n) V_-(y) h^n      (kernel 1/d)
    n = 2:  sum_{|x-y| < r} log(1/|x-y|) V_-(y) h^2
    n = 1:  sum_{|x-y| < r} V_-(y) h                    (kernel 1)

with the singular self cell (y = x) integrated analytically over the cell:
the cell is replaced by the equal-measure ball around the node, for which
the kernel integral is elementary.  Dimensions 1 and 2 have no smallness
threshold here; their flags simply require V_- = 0.

The smallness report carries both thresholds for n >= 3,

    theta_strict = pi^(n/2) / Gamma(n/2 - 1),     theta_weak = 4 * theta_strict,

(pi and 4*pi in dimension 3) and the zero-eigenvalue certificate

    certificate = 1 - Gamma(n/2 - 1) ||V_-||_K / (4 pi^(n/2)),

which is positive exactly when the weak threshold holds; a positive
certificate rules out lam_min(A_V) <= 0 for bounded domains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    ComplexPotential,
    ConfigInvalid,
    GridMismatch,
    UnsupportedDimension,
)
from .geometry import Grid, GridFunction

__all__ = [
    "KatoReport",
    "decompose",
    "kato_norm",
    "check_smallness",
    "hardy_certificate",
    "form_bound",
    "potential_from_expression",
]

_PROBE_CHUNK = 512


def _samples(grid: Grid, V) -> np.ndarray:
    if isinstance(V, GridFunction):
        if not V.grid.same_geometry(grid):
            raise GridMismatch("potential lives on a different grid")
        vals = V.values
    else:
        vals = np.asarray(V)
        if vals.shape != (grid.num_nodes,):
            raise GridMismatch("potential sample count does not match the grid")
    if np.iscomplexobj(vals):
        if np.abs(vals.imag).max(initial=0.0) != 0.0:
            raise ComplexPotential("potential samples must be real")
        vals = vals.real
    return np.asarray(vals, float)


def decompose(grid: Grid, V) -> tuple[np.ndarray, np.ndarray]:
    """Split V = V_+ - V_- into nonnegative parts (node samples)."""
    vals = _samples(grid, V)
    return np.maximum(vals, 0.0), np.maximum(-vals, 0.0)


def _self_cell_weight(n: int, h: float) -> float:
    """Integral of the kernel over the equal-measure ball replacing the node cell."""
    if n == 1:
        return h
    if n == 2:
        rho = h / math.sqrt(math.pi)
        return h * h * (0.5 - math.log(rho))
    if n == 3:
        rho = h * (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0)
        return 2.0 * math.pi * rho * rho
    raise UnsupportedDimension(f"Kato kernel defined for n in {{1,2,3}}, got {n}")


def _kernel(n: int, d: np.ndarray) -> np.ndarray:
    if n == 1:
        return np.ones_like(d)
    if n == 2:
        return -np.log(d)
    return 1.0 / d


def kato_norm(grid: Grid, vminus, radius: float = math.inf) -> float:
    """Discrete Kato norm of a nonnegative potential part at probe radius ``radius``.

    Parameters
    ----------
    grid : Grid
    vminus : array or GridFunction
        Nonnegative node samples of V_-.
    radius : float
        Probe ball radius; pairs with |x - y| >= radius are excluded.
        The default covers the whole (bounded) domain.

    Notes
    -----
    The self cell is always included (its distance is 0 < radius) and uses
    the analytic equal-measure-ball weight, so refining h keeps the norm
    finite for integrable singularities.
    """
    vals = _samples(grid, vminus)
    if (vals < 0.0).any():
        raise ValueError("kato_norm expects the nonnegative part V_-")
    if not (radius > 0.0):
        raise ValueError(f"probe radius must be positive, got {radius}")
    n, h = grid.n, grid.h
    meas = grid.cell_measure
    coords = grid.coordinates
    N = grid.num_nodes
    self_w = _self_cell_weight(n, h)

    best = 0.0
    for start in range(0, N, _PROBE_CHUNK):
        probe = coords[start : start + _PROBE_CHUNK]
        d = np.sqrt(
            np.maximum(
                np.sum((probe[:, None, :] - coords[None, :, :]) ** 2, axis=-1), 0.0
            )
        )
        w = np.zeros_like(d)
        off = (d > 0.0) & (d < radius)
        w[off] = _kernel(n, d[off]) * meas
        # self cell: exact index match, analytic weight
        rows = np.arange(probe.shape[0])
        w[rows, start + rows] = self_w
        best = max(best, float((w @ vals).max(initial=0.0)))
    return best


def hardy_certificate(n: int, kato_value: float) -> float:
    """1 - Gamma(n/2-1) * ||V_-||_K / (4 pi^(n/2)) for n >= 3; positive means
    the quadratic form controls the negative part with room to spare."""
    if n < 3:
        raise UnsupportedDimension("the certificate formula needs n >= 3")
    return 1.0 - math.gamma(n / 2.0 - 1.0) * kato_value / (4.0 * math.pi ** (n / 2.0))


@dataclass(frozen=True)
class KatoReport:
    """Smallness report for the negative part of a potential."""

    n: int
    kato_value: float
    radius: float
    theta_strict: float
    theta_weak: float
    satisfies_strict: bool
    satisfies_weak: bool
    vminus_is_zero: bool
    certificate: float


def check_smallness(grid: Grid, V, radius: float = math.inf) -> KatoReport:
    """Evaluate the Kato norm of V_- and compare against both thresholds.

    For n in {1, 2} there is no finite threshold in this normalization:
    both flags require V_- = 0 and the thresholds are reported as 0.
    """
    _, vminus = decompose(grid, V)
    zero = bool(vminus.max(initial=0.0) == 0.0)
    n = grid.n
    value = 0.0 if zero else kato_norm(grid, vminus, radius)
    if n >= 3:
        theta_strict = math.pi ** (n / 2.0) / math.gamma(n / 2.0 - 1.0)
        theta_weak = 4.0 * theta_strict
        cert = hardy_certificate(n, value)
        return KatoReport(
            n=n,
            kato_value=value,
            radius=radius,
            theta_strict=theta_strict,
            theta_weak=theta_weak,
            satisfies_strict=value < theta_strict,
            satisfies_weak=value < theta_weak,
            vminus_is_zero=zero,
            certificate=cert,
        )
    return KatoReport(
        n=n,
        kato_value=value,
        radius=radius,
        theta_strict=0.0,
        theta_weak=0.0,
        satisfies_strict=zero,
        satisfies_weak=zero,
        vminus_is_zero=zero,
        certificate=1.0 if zero else math.nan,
    )


def form_bound(op0, vminus, eps: float) -> float:
    """Smallest lam0 >= 0 with sum V_- |f|^2 <= eps (f, A_0 f) + lam0^2 ||f||^2.

    Discretely this is sqrt(clip(lam_max(diag(V_-) - eps A_0), 0)).  When
    eps >= max(V_-) / lam_min(A_0) the bound needs no shift and lam0 = 0.
    """
    if not (eps > 0.0):
        raise ValueError(f"form bound needs eps > 0, got {eps}")
    vals = _samples(op0.grid, vminus)
    if (vals < 0.0).any():
        raise ValueError("form_bound expects the nonnegative part V_-")
    mat = (sp.diags(vals) - eps * op0.matrix).toarray()
    top = float(np.linalg.eigvalsh(mat)[-1])
    return math.sqrt(max(top, 0.0))


# ---------------------------------------------------------------------------
# expression sampling (tiny arithmetic grammar for config-driven potentials)
# ---------------------------------------------------------------------------


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[tuple[str, str]] = []
        self._scan()
        self.idx = 0

    def _scan(self):
        text = self.text
        i = 0
        while i < len(text):
            c = text[i]
            if c.isspace():
                i += 1
                continue
            if c.isdigit() or (c == "." and i + 1 < len(text) and text[i + 1].isdigit()):
                j = i
                while j < len(text) and (text[j].isdigit() or text[j] in ".eE" or
                                         (text[j] in "+-" and j > i and text[j - 1] in "eE")):
                    j += 1
                self.tokens.append(("num", text[i:j]))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append(("ident", text[i:j]))
                i = j
                continue
            if text.startswith("**", i):
                self.tokens.append(("op", "**"))
                i += 2
                continue
            if c in "+-*/^()":
                self.tokens.append(("op", c))
                i += 1
                continue
            raise ConfigInvalid(f"unexpected character {c!r} in potential expression")

    def peek(self):
        return self.tokens[self.idx] if self.idx < len(self.tokens) else ("end", "")

    def next(self):
        tok = self.peek()
        self.idx += 1
        return tok


def _parse(tokens: _Tokenizer, env: dict[str, np.ndarray]) -> np.ndarray:
    def expr():
        out = term()
        while tokens.peek() == ("op", "+") or tokens.peek() == ("op", "-"):
            _, op = tokens.next()
            rhs = term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def term():
        out = factor()
        while tokens.peek() == ("op", "*") or tokens.peek() == ("op", "/"):
            _, op = tokens.next()
            rhs = factor()
            out = out * rhs if op == "*" else out / rhs
        return out

    def factor():
        base = unary()
        if tokens.peek() in (("op", "^"), ("op", "**")):
            tokens.next()
            return base ** factor()  # right associative
        return base

    def unary():
        if tokens.peek() == ("op", "-"):
            tokens.next()
            return -unary()
        return atom()

    def atom():
        kind, text = tokens.next()
        if kind == "num":
            try:
                return float(text)
            except ValueError:
                raise ConfigInvalid(f"malformed number {text!r} in potential expression") from None
        if kind == "ident":
            if text not in env:
                raise ConfigInvalid(f"unknown name {text!r} in potential expression")
            return env[text]
        if (kind, text) == ("op", "("):
            out = expr()
            if tokens.next() != ("op", ")"):
                raise ConfigInvalid("unbalanced parentheses in potential expression")
            return out
        raise ConfigInvalid(f"unexpected token {text!r} in potential expression")

    out = expr()
    if tokens.peek()[0] != "end":
        raise ConfigInvalid("trailing input in potential expression")
    return out


def potential_from_expression(
    grid: Grid, expr: str, trunc_radius: float | None = None
) -> tuple[GridFunction, int]:
    """Sample an arithmetic expression of the coordinates on the grid nodes.

    Allowed names: coordinates x, y, z (aliases x1, x2, x3), the distance
    r to the origin, and pi; operators + - * / ^ (or **) and parentheses.
    The variable r is floored at ``trunc_radius`` (default: one spacing h),
    which truncates |x|^-a singularities at the cell scale; the number of
    nodes where the floor engaged is returned alongside the samples.
    """
    coords = grid.coordinates
    trunc = grid.h if trunc_radius is None else float(trunc_radius)
    r_raw = np.sqrt(np.sum(coords**2, axis=1))
    n_trunc = int(np.count_nonzero(r_raw < trunc))
    env: dict[str, np.ndarray] = {"pi": np.full(grid.num_nodes, math.pi)}
    names = ["x", "y", "z"]
    for d in range(grid.n):
        env[names[d]] = coords[:, d]
        env[f"x{d + 1}"] = coords[:, d]
    env["r"] = np.maximum(r_raw, trunc)
    with np.errstate(all="ignore"):  # nonfinite samples are rejected below
        values = _parse(_Tokenizer(expr), env)
    values = np.broadcast_to(np.asarray(values, float), (grid.num_nodes,)).copy()
    if not np.all(np.isfinite(values)):
        raise ConfigInvalid("potential expression produced nonfinite samples")
    return GridFunction(grid, values), n_trunc
