"""Measured pass/fail experiments for the spectral toolbox.

Each check turns one inequality of the theory into a finite experiment on
one or more grids.  Identities get absolute tolerances; inequalities whose
constants are merely asserted to exist get the "measured and stable under
refinement" treatment: the constant computed at spacing h and at h/2 must
agree within a configurable factor (default 2).

Reports carry neutral formula anchors, the measured constants per stage,
the sweep metadata, and the hash of the configuration that produced them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import dijkstra
from scipy.spatial.distance import cdist

from .calculus import (
    OperatorFunction,
    apply_symbol,
    dyadic_block,
    fat_block,
    heat_kernel,
    mixed_opnorm,
    power,
)
from .dyadic import DyadicSystem, build_system, second_system
from .errors import (
    AssumptionViolated,
    IndexConstraintViolated,
    InvalidExponent,
    ZeroEigenvaluePresent,
)
from .geometry import DomainSpec, Grid, GridFunction, build_grid
from .norms import besov_norm, block_lp_norms, lorentz_norm, test_seminorms
from .operators import (
    SpectralOperator,
    assemble_laplacian,
    assemble_schrodinger,
    eigendecompose,
)
from .potential import check_smallness, decompose, potential_from_expression

__all__ = [
    "Stage",
    "FunctionFamily",
    "VerifyReport",
    "build_stage",
    "build_stages",
    "check_resolution_identity",
    "check_bernstein",
    "check_duality",
    "check_embeddings",
    "check_lifting",
    "check_equivalence_AV_A0",
    "check_heat_gaussian",
    "check_partition_independence",
    "check_subspace_characterization",
    "check_lorentz_bernstein",
    "CHECKS",
]

DEFAULT_STABILITY = 2.0

FAMILY_TAGS = (
    "random-eigenmix",
    "bump",
    "single-eigenvector",
    "indicator",
    "boundary-layer",
)


# ---------------------------------------------------------------------------
# stages: one (grid, operator, dyadic system) bundle per spacing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stage:
    """Everything a check needs at one lattice spacing.

    ``op`` is the operator under test (with potential when one was given)
    and ``op0`` the potential-free operator on the same grid; they coincide
    when the stage was built without a potential.  The dyadic window covers
    the union of both spectra so either operator can be decomposed.
    """

    grid: Grid
    op: SpectralOperator
    op0: SpectralOperator
    sys: DyadicSystem

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def has_potential(self) -> bool:
        return self.op.potential is not None and bool(np.any(self.op.potential != 0.0))


def build_stage(
    spec: DomainSpec,
    h: float,
    potential=None,
    profile: str = "smooth",
    dense_cap: int = 4096,
    node_budget: int | None = None,
    trunc_radius: float | None = None,
) -> Stage:
    """Assemble and eigendecompose the operator(s) at one spacing.

    ``potential`` may be None, a GridFunction, a sample array, a callable of
    the (N, n) coordinate array, or an expression string (parsed with the
    truncation radius applied to r).
    """
    if node_budget is None:
        grid = build_grid(spec, h)
    else:
        grid = build_grid(spec, h, node_budget)
    if potential is None:
        op = eigendecompose(assemble_laplacian(grid), dense_cap)
        op0 = op
    else:
        if isinstance(potential, str):
            vfield, _ = potential_from_expression(grid, potential, trunc_radius)
        elif callable(potential) and not isinstance(potential, (GridFunction, np.ndarray)):
            vfield = GridFunction.from_callable(grid, potential)
        else:
            vfield = potential
        op = eigendecompose(assemble_schrodinger(grid, vfield), dense_cap)
        op0 = eigendecompose(assemble_laplacian(grid), dense_cap)
    sys = build_system(
        min(op.lam_pos_min, op0.lam_pos_min),
        max(op.lam_max, op0.lam_max),
        lam0=op.lam0,
        profile=profile,
    )
    return Stage(grid=grid, op=op, op0=op0, sys=sys)


def build_stages(spec: DomainSpec, hs: Sequence[float], **kwargs) -> list[Stage]:
    """One stage per spacing, coarse to fine."""
    return [build_stage(spec, h, **kwargs) for h in sorted(hs, reverse=True)]


def _as_stages(stages) -> list[Stage]:
    if isinstance(stages, Stage):
        return [stages]
    out = list(stages)
    if not out:
        raise ValueError("need at least one stage")
    return out


# ---------------------------------------------------------------------------
# function families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionFamily:
    """Reproducible test-vector generator, identified by (tag, seed, count).

    The random parameters are drawn from a stream that depends only on the
    tag and seed, so the same family realized on two grids of the same
    domain produces matched functions (bump centers, layer widths and
    low-mode coefficients agree across refinement).
    """

    tag: str = "random-eigenmix"
    seed: int = 0
    count: int = 8

    def __post_init__(self):
        if self.tag not in FAMILY_TAGS:
            raise ValueError(f"unknown family tag {self.tag!r}; expected one of {FAMILY_TAGS}")
        if self.count < 1:
            raise ValueError(f"family count must be positive, got {self.count}")

    def sample(self, stage: Stage) -> list[GridFunction]:
        return _sample_family(self, stage)


def _bbox(grid: Grid) -> tuple[np.ndarray, np.ndarray, float]:
    coords = grid.coordinates
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    diam = float(np.linalg.norm(hi - lo)) + grid.h
    return lo, hi, diam


def _mollifier_stack(grid: Grid, count: int) -> np.ndarray:
    """Deterministic interior mollifiers representing the smooth test class.

    Centers sweep the middle of the bounding box and widths are fixed
    fractions of its diameter, so the same physical functions appear at
    every refinement level (no dependence on h or on any seed).  Widths are
    capped so the Gaussian reaches the boundary below machine epsilon
    (distance > 8.5 sigma): visible boundary values would leak slowly
    decaying high shells into the weighted seminorms."""
    lo, hi, diam = _bbox(grid)
    coords = grid.coordinates
    fracs = np.linspace(0.42, 0.58, count)
    widths = np.geomspace(0.042, 0.049, count) * diam
    cols = []
    for f, sg in zip(fracs, widths):
        center = lo + f * (hi - lo)
        d2 = np.sum((coords - center) ** 2, axis=1)
        cols.append(np.exp(-d2 / (2.0 * sg * sg)))
    return np.column_stack(cols)


def _boundary_distance(op: SpectralOperator) -> np.ndarray:
    """Distance to the domain boundary, via lattice hops to the outermost
    interior layer (nodes missing at least one stencil neighbor)."""
    offdiag = op.matrix.copy().tolil()
    offdiag.setdiag(0.0)
    adj = offdiag.tocsr()
    adj.eliminate_zeros()
    adj.data = np.abs(adj.data)
    degree = np.diff(adj.indptr)
    seeds = np.flatnonzero(degree < 2 * op.grid.n)
    if seeds.size == 0:
        seeds = np.arange(op.num_nodes)
    hops = dijkstra(adj, directed=False, indices=seeds, min_only=True, unweighted=True)
    return (hops + 1.0) * op.grid.h


def _sample_family(family: FunctionFamily, stage: Stage) -> list[GridFunction]:
    grid, op = stage.grid, stage.op
    rng = np.random.default_rng(family.seed)
    coords = grid.coordinates
    lo, hi, diam = _bbox(grid)
    out: list[GridFunction] = []

    if family.tag == "random-eigenmix":
        op.require_eigendata()
        num = op.num_nodes
        for i in range(family.count):
            # per-function substream: the first k coefficients agree across
            # grids, so refinement only adds high modes
            sub = np.random.default_rng([family.seed, i])
            c = sub.standard_normal(num)
            out.append(GridFunction(grid, op.eigvecs @ c))
        return out

    if family.tag == "bump":
        u = rng.uniform(size=(family.count, grid.n))
        widths = np.exp(rng.uniform(math.log(0.03), math.log(0.25), size=family.count))
        for i in range(family.count):
            center = lo + u[i] * (hi - lo)
            sigma = max(widths[i] * diam, 2.0 * grid.h)
            d2 = np.sum((coords - center) ** 2, axis=1)
            out.append(GridFunction(grid, np.exp(-d2 / (2.0 * sigma * sigma))))
        return out

    if family.tag == "single-eigenvector":
        op.require_eigendata()
        num = op.num_nodes
        ks = np.unique(np.round(np.geomspace(1, num, family.count)).astype(int) - 1)
        scale = grid.cell_measure ** -0.5
        for k in ks:
            out.append(GridFunction(grid, op.eigvecs[:, int(k)] * scale))
        return out

    if family.tag == "indicator":
        u = rng.uniform(size=(family.count, grid.n))
        radii = rng.uniform(0.05, 0.25, size=family.count)
        for i in range(family.count):
            center = lo + u[i] * (hi - lo)
            rho = max(radii[i] * diam, 3.0 * grid.h)
            inside = np.sum((coords - center) ** 2, axis=1) <= rho * rho
            out.append(GridFunction(grid, inside.astype(float)))
        return out

    # boundary-layer
    dist = _boundary_distance(op)
    widths = np.exp(rng.uniform(math.log(1.0), math.log(10.0), size=family.count))
    for i in range(family.count):
        ell = max(widths[i] * grid.h, grid.h)
        out.append(GridFunction(grid, np.exp(-dist / ell)))
    return out


def _stack(funcs: Sequence[GridFunction]) -> np.ndarray:
    return np.column_stack([f.values for f in funcs])


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of one check: named constants per stage plus sweep metadata."""

    check: str
    anchor: str
    constants: dict[str, tuple[float, ...]]
    passed: bool
    h_values: tuple[float, ...]
    num_nodes: tuple[int, ...]
    seed: int
    family: str
    window: tuple[int, int]
    wall_ms: float
    config_hash: str
    details: dict = field(default_factory=dict)

    @property
    def constant(self) -> float:
        """Headline value: the first constant at the finest stage."""
        first = next(iter(self.constants.values()))
        return first[-1]

    def iter_rows(self):
        """Flatten to verify.csv rows (check, anchor, constant, pass, h, N, seed, wall_ms)."""
        multi = len(self.constants) > 1
        for key, per_stage in self.constants.items():
            label = f"{self.check}[{key}]" if multi else self.check
            for h, nn, c in zip(self.h_values, self.num_nodes, per_stage):
                yield {
                    "check": label,
                    "anchor": self.anchor,
                    "constant": c,
                    "pass": self.passed,
                    "h": h,
                    "N": nn,
                    "seed": self.seed,
                    "wall_ms": self.wall_ms,
                }


def _stable(values: Sequence[float], factor: float) -> bool:
    vals = [float(v) for v in values]
    if any(not math.isfinite(v) or v < 0.0 for v in vals):
        return False
    for a, b in zip(vals, vals[1:]):
        if a == 0.0 and b == 0.0:
            continue
        if a == 0.0 or b == 0.0:
            return False
        if not (1.0 / factor <= b / a <= factor):
            return False
    return True


def _report(
    check: str,
    anchor: str,
    constants: dict[str, tuple[float, ...]],
    passed: bool,
    stages: Sequence[Stage],
    seed: int,
    family_tag: str,
    t0: float,
    config_hash: str,
    details: dict | None = None,
) -> VerifyReport:
    sys0 = stages[0].sys
    return VerifyReport(
        check=check,
        anchor=anchor,
        constants=constants,
        passed=bool(passed),
        h_values=tuple(st.h for st in stages),
        num_nodes=tuple(st.grid.num_nodes for st in stages),
        seed=seed,
        family=family_tag,
        window=(sys0.j_min, sys0.j_max),
        wall_ms=(time.perf_counter() - t0) * 1e3,
        config_hash=config_hash,
        details=details or {},
    )


def _lp_columns(arr: np.ndarray, meas: float, p: float) -> np.ndarray:
    a = np.abs(arr)
    if math.isinf(p):
        return a.max(axis=0, initial=0.0)
    return (meas * np.sum(a**p, axis=0)) ** (1.0 / p)


def _conjugate(p: float) -> float:
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _default_family(family) -> FunctionFamily:
    return FunctionFamily() if family is None else family


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def check_resolution_identity(
    stages,
    family: FunctionFamily | None = None,
    tol: float = 1e-10,
    homogeneous: bool = False,
    config_hash: str = "",
) -> VerifyReport:
    """Relative L2 residual of f minus its dyadic resolution.

    Inhomogeneous: f = psi(A) f + sum_{j>=1} phi_j(sqrt A) f.
    Homogeneous:   f = sum_{j in window} phi_j(sqrt A) f, defined only for
    operators with strictly positive spectrum (zero eigenvalues raise).
    """
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    family = _default_family(family)
    residuals = []
    for stage in stages:
        op, dsys = stage.op, stage.sys
        op.require_eigendata()
        lam = op.eigvals
        if homogeneous:
            scale = max(abs(op.lam_max), 1.0)
            if op.lam_min <= 1e-12 * scale:
                raise ZeroEigenvaluePresent(
                    f"spectrum touches zero (lam_min = {op.lam_min:.3e}); "
                    "the homogeneous resolution is undefined here"
                )
            total = np.zeros_like(lam)
            for j in dsys.window:
                total = total + dsys.phi_sqrt(j, lam)
        else:
            total = np.asarray(dsys.psi(lam), float)
            for j in dsys.inhom_window:
                total = total + dsys.phi_sqrt(j, lam)
        cols = _stack(family.sample(stage))
        coeff = op.eigvecs.T @ cols
        defect = op.eigvecs @ ((1.0 - total)[:, None] * coeff)
        num = np.linalg.norm(defect, axis=0)
        den = np.linalg.norm(cols, axis=0)
        good = den > 0.0
        residuals.append(float((num[good] / den[good]).max(initial=0.0)))
    passed = all(r <= tol for r in residuals)
    variant = "hom" if homogeneous else "inhom"
    anchor = (
        "f = sum_j phi_j(sqrt A) f"
        if homogeneous
        else "f = psi(A) f + sum_{j>=1} phi_j(sqrt A) f"
    )
    return _report(
        "resolution_identity",
        anchor,
        {"residual": tuple(residuals)},
        passed,
        stages,
        family.seed,
        family.tag,
        t0,
        config_hash,
        {"tol": tol, "variant": variant},
    )


def _fmt_exp(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:g}"


def check_bernstein(
    stages,
    family: FunctionFamily | None = None,
    pairs: Sequence[tuple[float, float]] = ((1.0, math.inf), (1.0, 2.0), (2.0, 2.0)),
    alphas: Sequence[float] = (0, 1),
    stability: float = DEFAULT_STABILITY,
    config_hash: str = "",
) -> VerifyReport:
    """Block smoothing bounds ||A^a phi_j(sqrt A) f||_p <= C 2^{(n(1/r-1/p)+2a)j} ||f||_r.

    With family=None the L^r -> L^p norms are taken from the kernel (exact
    for r=1, p=inf and r=p=2); otherwise the constant is measured over the
    family.  Pass requires each measured constant stable across stages.
    """
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    for r, p in pairs:
        if not (1.0 <= r <= p):
            raise InvalidExponent(f"need 1 <= r <= p, got (r, p) = ({r}, {p})")
    tag = "opnorm" if family is None else family.tag
    seed = 0 if family is None else family.seed
    constants: dict[str, list[float]] = {}
    profiles: dict[str, dict[int, float]] = {}
    for stage in stages:
        op, dsys = stage.op, stage.sys
        n = stage.grid.n
        cols = None if family is None else _stack(family.sample(stage))
        for r, p in pairs:
            gain = n * (1.0 / r - (0.0 if math.isinf(p) else 1.0 / p))
            for a in alphas:
                key = f"r={_fmt_exp(r)},p={_fmt_exp(p)},a={_fmt_exp(a)}"
                best = 0.0
                prof: dict[int, float] = {}
                for j in dsys.window:
                    def sym(lam, j=j, a=a, dsys=dsys):
                        g = dsys.phi_sqrt(j, lam)
                        if a == 0:
                            return g
                        out = np.zeros_like(g)
                        pos = g != 0.0
                        out[pos] = (lam[pos] ** float(a)) * g[pos]
                        return out

                    opfun = OperatorFunction(op, sym, f"bern[j={j},a={a:g}]")
                    if cols is None:
                        raw = mixed_opnorm(opfun, r, p).value
                    else:
                        num = _lp_columns(opfun.apply(cols), stage.grid.cell_measure, p)
                        den = _lp_columns(cols, stage.grid.cell_measure, r)
                        good = den > 0.0
                        raw = float((num[good] / den[good]).max(initial=0.0))
                    c = raw / 2.0 ** ((gain + 2.0 * a) * j)
                    prof[j] = c
                    best = max(best, c)
                constants.setdefault(key, []).append(best)
                profiles[key] = prof
    passed = all(_stable(v, stability) for v in constants.values())
    return _report(
        "bernstein",
        "||A^a phi_j(sqrt A) f||_p <= C 2^{(n(1/r-1/p)+2a)j} ||f||_r",
        {k: tuple(v) for k, v in constants.items()},
        passed,
        stages,
        seed,
        tag,
        t0,
        config_hash,
        {"per_j": {k: {str(j): c for j, c in prof.items()} for k, prof in profiles.items()}},
    )


def _adversarial_pair(
    op: SpectralOperator,
    dsys: DyadicSystem,
    fvals: np.ndarray,
    s: float,
    p: float,
    q: float,
) -> np.ndarray | None:
    """Near-extremal dual function: fattened blocks of the pointwise L^p
    duals of the blocks of f, with the l^q-extremal weights 2^{sj} a_j^{q-1}."""
    meas = op.grid.cell_measure
    js = list(dsys.inhom_window)
    blocks = [dyadic_block(op, dsys, j).apply(fvals) for j in js]
    bnorms = np.array([_lp_columns(b[:, None], meas, p)[0] for b in blocks])
    top = bnorms.max(initial=0.0)
    if top == 0.0:
        return None
    G = np.zeros_like(fvals)
    for j, bj, nj in zip(js, blocks, bnorms):
        if nj <= 1e-14 * top:
            continue
        dual = np.sign(bj) if p == 1.0 else np.sign(bj) * np.abs(bj) ** (p - 1.0)
        a_j = 2.0 ** (s * j) * nj
        w = 2.0 ** (s * j) * a_j ** (q - 1.0) / nj ** (p - 1.0)
        G = G + w * fat_block(op, dsys, j).apply(dual)
    return G


def check_duality(
    stages,
    family: FunctionFamily | None = None,
    s: float = 0.0,
    p: float = 2.0,
    q: float = 2.0,
    stability: float = DEFAULT_STABILITY,
    attain_frac: float = 0.1,
    config_hash: str = "",
) -> VerifyReport:
    """Pairing bound |<f,g>| <= C ||f||_{B^s_{p,q}} ||g||_{B^{-s}_{p',q'}}.

    C is measured over all family pairs plus constructed near-extremal
    pairs; pass needs C stable across stages and the constructed pairs to
    reach at least attain_frac of the measured constant at every stage.
    """
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    if not (1.0 <= p < math.inf) or not (1.0 <= q < math.inf):
        raise InvalidExponent(f"duality needs 1 <= p, q < inf, got ({p}, {q})")
    family = _default_family(family)
    pc, qc = _conjugate(p), _conjugate(q)
    cs, attained_list = [], []
    for stage in stages:
        op, dsys, grid = stage.op, stage.sys, stage.grid
        funcs = family.sample(stage)
        cols = _stack(funcs)
        nf = np.asarray(besov_norm(op, dsys, cols, s, p, q))
        ng = np.asarray(besov_norm(op, dsys, cols, -s, pc, qc))
        gram = grid.cell_measure * np.abs(cols.T @ cols)
        denom = np.outer(nf, ng)
        good = denom > 0.0
        c_meas = float((gram[good] / denom[good]).max(initial=0.0))
        attained = 0.0
        for i in range(cols.shape[1]):
            if nf[i] == 0.0:
                continue
            G = _adversarial_pair(op, dsys, cols[:, i], s, p, q)
            if G is None:
                continue
            nG = float(besov_norm(op, dsys, G, -s, pc, qc))
            if nG == 0.0:
                continue
            ratio = abs(grid.cell_measure * float(cols[:, i] @ G)) / (nf[i] * nG)
            attained = max(attained, ratio)
        c_meas = max(c_meas, attained)
        cs.append(c_meas)
        attained_list.append(attained)
    passed = _stable(cs, stability) and all(
        a >= attain_frac * c for a, c in zip(attained_list, cs)
    )
    return _report(
        "duality",
        "|<f,g>| <= C ||f||_{B^s_{p,q}} ||g||_{B^{-s}_{p',q'}}",
        {"C": tuple(cs), "attained": tuple(attained_list)},
        passed,
        stages,
        family.seed,
        family.tag,
        t0,
        config_hash,
        {"s": s, "p": p, "q": q, "attain_frac": attain_frac},
    )


def check_embeddings(
    stages,
    family: FunctionFamily | None = None,
    gain: tuple[float, float, float, float, float] = (0.5, 0.5, 2.0, math.inf, 1.0),
    hom_gain: tuple[float, float, float, float, float] = (0.0, 1.0, 2.0, 1.0, 2.0),
    square_p: tuple[float, float] = (1.5, 3.0),
    chain: tuple[float, float, float, int] = (1.0, 2.0, 2.0, 3),
    stability: float = DEFAULT_STABILITY,
    config_hash: str = "",
) -> VerifyReport:
    """Inclusion constants for the standard embedding battery.

    gain     = (s, eps, p, q, q0):   B^{s+eps}_{p,q} -> B^s_{p,q0}
    hom_gain = (s, r, p, q, q0):     hom B^{s+n(1/r-1/p)}_{r,q} -> hom B^s_{p,q0}
    square_p = (p_i, p_ii):          L^p -> B^0_{p,2} for 1 < p <= 2, and
                                     B^0_{p,2} -> L^p for 2 <= p < inf
    chain    = (s, p, q, M):         seminorm chain p_M-control of B^s_{p,q}
                                     and the dual pairing bound against p_M

    The chain rows quantify over the smooth test class, so their vectors are
    a deterministic set of dilated mollifiers: rough eigenmixes are not
    uniformly in that class, and randomly drawn widths near the grid scale
    leave top-shell content that fakes a refinement drift.
    """
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    family = _default_family(family)
    s_g, eps, p_g, q_g, q0_g = gain
    if eps < 0.0 or (eps == 0.0 and q_g > q0_g):
        raise IndexConstraintViolated(
            "smoothness-gain embedding needs eps > 0, or eps = 0 with q <= q0"
        )
    s_h, r_h, p_h, q_h, q0_h = hom_gain
    if r_h > p_h or q_h > q0_h:
        raise IndexConstraintViolated(
            "exponent-gain embedding needs r <= p and q <= q0"
        )
    p_i, p_ii = square_p
    if not (1.0 < p_i <= 2.0):
        raise IndexConstraintViolated(f"L^p -> B^0_(p,2) needs 1 < p <= 2, got p = {p_i}")
    if not (2.0 <= p_ii < math.inf):
        raise IndexConstraintViolated(f"B^0_(p,2) -> L^p needs 2 <= p < inf, got p = {p_ii}")
    s_c, p_c, q_c, M = chain
    if M < 1:
        raise IndexConstraintViolated(f"seminorm order M must be >= 1, got {M}")

    keys = [
        f"B^{{{s_g + eps:g}}}_{{{p_g:g},{_fmt_exp(q_g)}}}->B^{{{s_g:g}}}_{{{p_g:g},{q0_g:g}}}",
        f"hom:r={r_h:g}->p={p_h:g}",
        f"L^{p_i:g}->B^0_{{{p_i:g},2}}",
        f"B^0_{{{p_ii:g},2}}->L^{p_ii:g}",
        "X->B",
        "B->X'",
    ]
    constants = {k: [] for k in keys}
    for stage in stages:
        op, dsys, grid = stage.op, stage.sys, stage.grid
        funcs = family.sample(stage)
        cols = _stack(funcs)
        meas = grid.cell_measure

        def ratio_max(num: np.ndarray, den: np.ndarray) -> float:
            num, den = np.asarray(num, float), np.asarray(den, float)
            good = den > 0.0
            return float((num[good] / den[good]).max(initial=0.0))

        src = besov_norm(op, dsys, cols, s_g + eps, p_g, q_g)
        tgt = besov_norm(op, dsys, cols, s_g, p_g, q0_g)
        constants[keys[0]].append(ratio_max(tgt, src))

        s_src = s_h + grid.n * (1.0 / r_h - 1.0 / p_h)
        src = besov_norm(op, dsys, cols, s_src, r_h, q_h, homogeneous=True)
        tgt = besov_norm(op, dsys, cols, s_h, p_h, q0_h, homogeneous=True)
        constants[keys[1]].append(ratio_max(tgt, src))

        constants[keys[2]].append(
            ratio_max(besov_norm(op, dsys, cols, 0.0, p_i, 2.0), _lp_columns(cols, meas, p_i))
        )
        constants[keys[3]].append(
            ratio_max(_lp_columns(cols, meas, p_ii), besov_norm(op, dsys, cols, 0.0, p_ii, 2.0))
        )

        scols = _mollifier_stack(grid, family.count)
        sb = np.asarray(besov_norm(op, dsys, scols, s_c, p_c, q_c))
        pM = np.array(
            [
                test_seminorms(op, dsys, GridFunction(grid, scols[:, i]), M)[0]
                for i in range(scols.shape[1])
            ]
        )
        constants[keys[4]].append(ratio_max(sb, pM))
        # f ranges over the requested family plus the smooth one; the smooth
        # side keeps the max from drifting when the family norms grow
        fside = np.column_stack([cols, scols])
        bnorms = np.asarray(besov_norm(op, dsys, fside, s_c, p_c, q_c))
        gram = meas * np.abs(fside.T @ scols)
        denom = np.outer(bnorms, pM)
        good = denom > 0.0
        constants[keys[5]].append(float((gram[good] / denom[good]).max(initial=0.0)))

    passed = all(_stable(v, stability) for v in constants.values())
    return _report(
        "embeddings",
        "||f||_target <= C ||f||_source",
        {k: tuple(v) for k, v in constants.items()},
        passed,
        stages,
        family.seed,
        family.tag,
        t0,
        config_hash,
        {"gain": gain, "hom_gain": hom_gain, "square_p": square_p, "chain": chain},
    )


def check_lifting(
    stages,
    family: FunctionFamily | None = None,
    s: float = 1.0,
    s0: float = 2.0,
    p: float = 2.0,
    q: float = 2.0,
    homogeneous: bool = True,
    stability: float = DEFAULT_STABILITY,
    config_hash: str = "",
) -> VerifyReport:
    """Lifting: A^{s0/2} maps hom B^s_{p,q} to hom B^{s-s0}_{p,q} with
    comparable norms; inhomogeneous variant uses (lam0^2 + 1 + A)^{s0/2}.

    Both directions (+s0 and -s0) are measured; single eigenvectors land in
    the bracket [2^{-|s0|}, 2^{|s0|}] around 1.
    """
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    family = _default_family(family)
    directions = [s0] if s0 == 0.0 else [s0, -s0]
    constants: dict[str, list[float]] = {}
    ranges: dict[str, tuple[float, float]] = {}
    for stage in stages:
        op, dsys = stage.op, stage.sys
        funcs = family.sample(stage)
        cols = _stack(funcs)
        for d in directions:
            key = f"s0={d:g}"
            if homogeneous:
                lifted = power(op, d / 2.0, cols)
                num = besov_norm(op, dsys, lifted, s - d, p, q, homogeneous=True)
                den = besov_norm(op, dsys, cols, s, p, q, homogeneous=True)
            else:
                shift = op.lam0**2 + 1.0
                lifted = apply_symbol(op, lambda lam, d=d: (shift + lam) ** (d / 2.0), cols)
                num = besov_norm(op, dsys, lifted, s - d, p, q)
                den = besov_norm(op, dsys, cols, s, p, q)
            num, den = np.asarray(num, float), np.asarray(den, float)
            good = den > 0.0
            ratios = num[good] / den[good]
            constants.setdefault(key, []).append(float(ratios.max(initial=0.0)))
            if ratios.size:
                ranges[key] = (float(ratios.min()), float(ratios.max()))
    passed = all(_stable(v, stability) for v in constants.values())
    anchor = (
        "||A^{s0/2} f||_{hom B^{s-s0}_{p,q}} ~ ||f||_{hom B^s_{p,q}}"
        if homogeneous
        else "||(lam0^2+1+A)^{s0/2} f||_{B^{s-s0}_{p,q}} ~ ||f||_{B^s_{p,q}}"
    )
    return _report(
        "lifting",
        anchor,
        {k: tuple(v) for k, v in constants.items()},
        passed,
        stages,
        family.seed,
        family.tag,
        t0,
        config_hash,
        {"s": s, "s0": s0, "p": p, "q": q,
         "ratio_range": {k: list(v) for k, v in ranges.items()}},
    )


def _sigma_max(mat: np.ndarray, iters: int = 80) -> float:
    """Largest singular value by power iteration on M^T M (deterministic
    symmetry-breaking start; a tight lower bound, ample for slope fits)."""
    if mat.size == 0:
        return 0.0
    m = mat.shape[1]
    v = np.cos(0.7 * np.arange(m) + 0.3)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = mat @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = mat.T @ (w / nw)
        sigma = float(np.linalg.norm(v))
        if sigma == 0.0:
            return 0.0
        v /= sigma
    return sigma


def _cross_block_tails(stage: Stage) -> dict[int, list[tuple[int, float, float]]]:
    """Cross-block coupling between the two eigenbases at separated scales.

    phi_j(sqrt A_V) lives on sqrt-lambda in (2^{j-1}, 2^{j+1}) and the
    fattened Phi_k(sqrt A_0) on (2^{k-2}, 2^{k+2}), so the supports are
    disjoint exactly when j - k >= 3; only those offsets isolate the
    potential-driven coupling (for V = 0 every such block is identically
    zero).  Returns, per row j, the list of (m, L1 -> L1 norm, L2 -> L2
    norm) over m = j - k >= 3.  The L1 norm is the exact max column sum of
    the kernel; the reference decay rate 2^{-2m} is attached to this norm,
    while the L2 norm decays at a strictly smaller interpolated rate."""
    opv, op0, dsys = stage.op, stage.op0, stage.sys
    W = opv.eigvecs.T @ op0.eigvecs
    out: dict[int, list[tuple[int, float, float]]] = {}
    for j in dsys.window:
        gv = dsys.phi_sqrt(j, opv.eigvals)
        rows = np.flatnonzero(gv)
        if rows.size == 0:
            continue
        left = opv.eigvecs[:, rows] * gv[rows]
        pts: list[tuple[int, float, float]] = []
        for k in dsys.window:
            if k > j - 3:
                continue
            g0 = dsys.fat_phi_sqrt(k, op0.eigvals)
            cols = np.flatnonzero(g0)
            if cols.size == 0:
                continue
            mid = W[np.ix_(rows, cols)] * g0[cols]
            kernel = (left @ mid) @ op0.eigvecs[:, cols].T
            one_norm = float(np.abs(kernel).sum(axis=0).max())
            two_norm = _sigma_max(gv[rows, None] * mid)
            pts.append((j - k, one_norm, two_norm))
        if pts:
            out[j] = pts
    return out


def _tail_slope(
    tails: dict[int, list[tuple[int, float, float]]],
    index: int,
    floor: float = 1e-13,
) -> float:
    """Median over rows of the least-squares log2 slope of the row tail.

    Per-row fits keep the row-to-row offsets (which vary with the shell)
    out of the decay exponent; rows need at least two points above floor."""
    slopes = []
    for pts in tails.values():
        ms = np.array([p[0] for p in pts if p[index] > floor], float)
        if ms.size < 2:
            continue
        ys = np.array([math.log2(p[index]) for p in pts if p[index] > floor])
        slopes.append(float(np.polyfit(ms, ys, 1)[0]))
    if not slopes:
        return math.nan
    return float(np.median(slopes))


def check_equivalence_AV_A0(
    stages,
    family: FunctionFamily | None = None,
    s: float = 0.5,
    p: float = 2.0,
    q: float = 2.0,
    radius: float = math.inf,
    stability: float = DEFAULT_STABILITY,
    assert_window: bool = True,
    control_tol: float = 1e-12,
    slope_tol: float = 0.5,
    config_hash: str = "",
) -> VerifyReport:
    """Norm equivalence between the potential and free operators.

    Measures R = ||f||_{B^s_{p,q}(A_V)} / ||f||_{B^s_{p,q}(A_0)} over the
    family; pass needs the spread R_max/R_min stable across stages and the
    cross-block decay ||phi_j(sqrt A_V) Phi_k(sqrt A_0)||_{1->1} to fit
    2^{-2(j-k)} within slope_tol on the log2 scale (per-row fits over the
    separated offsets j - k >= 3, median across rows; the L2 -> L2 tail
    exponent is reported in details without a gate since only a strictly
    smaller interpolated rate holds for it).  V = 0 stages are the control:
    every ratio must equal 1 to control_tol.

    Needs n >= 2 and passing smallness flags for the negative part; s
    outside (-min(2, n(1-1/p)), min(n/p, 2)) either raises (assert mode)
    or is reported without a pass assertion.
    """
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    family = _default_family(family)
    n = stages[0].grid.n
    if n < 2:
        raise AssumptionViolated(f"operator-norm equivalence needs n >= 2, got n = {n}")
    lo = -min(2.0, n * (1.0 - 1.0 / p))
    hi = min(n / p, 2.0)
    in_window = lo < s < hi
    if not in_window and assert_window:
        raise AssumptionViolated(
            f"smoothness s = {s} outside the admissible window ({lo:g}, {hi:g})"
        )
    has_v = any(st.has_potential for st in stages)
    kato_info: dict[str, float | bool] = {}
    for stage in stages:
        if stage.has_potential:
            rep = check_smallness(stage.grid, stage.op.potential, radius)
            kato_info = {
                "kato_value": rep.kato_value,
                "satisfies_strict": rep.satisfies_strict,
                "satisfies_weak": rep.satisfies_weak,
                "certificate": rep.certificate,
            }
            if not rep.satisfies_weak:
                raise AssumptionViolated(
                    f"negative part fails the smallness flags "
                    f"(kato_value = {rep.kato_value:.6g} at h = {stage.h:g})"
                )
            if n == 2:
                kato_info["potential_l1"] = float(
                    stage.grid.cell_measure * np.abs(stage.op.potential).sum()
                )

    r_max, r_min, spreads, control_defects = [], [], [], []
    slopes_l1, slopes_l2 = [], []
    for stage in stages:
        opv, op0, dsys = stage.op, stage.op0, stage.sys
        cols = _stack(family.sample(stage))
        nv = np.asarray(besov_norm(opv, dsys, cols, s, p, q), float)
        n0 = np.asarray(besov_norm(op0, dsys, cols, s, p, q), float)
        good = n0 > 0.0
        ratios = nv[good] / n0[good]
        if ratios.size == 0:
            raise AssumptionViolated("family produced no usable functions")
        r_max.append(float(ratios.max()))
        r_min.append(float(ratios.min()))
        spreads.append(r_max[-1] / r_min[-1] if r_min[-1] > 0 else math.inf)
        control_defects.append(float(np.abs(ratios - 1.0).max()))
        if stage.has_potential:
            tails = _cross_block_tails(stage)
            slopes_l1.append(_tail_slope(tails, 1))
            slopes_l2.append(_tail_slope(tails, 2))
        else:
            slopes_l1.append(math.nan)
            slopes_l2.append(math.nan)

    ok = _stable(spreads, stability)
    if has_v:
        slope = slopes_l1[-1]
        ok = ok and math.isfinite(slope) and abs(slope - (-2.0)) <= slope_tol
    else:
        ok = ok and all(d <= control_tol for d in control_defects)
    passed = ok if in_window else True
    details = {
        "s": s, "p": p, "q": q,
        "window": [lo, hi], "in_window": in_window, "asserted": in_window,
        "control_defect": control_defects,
        "slope_l1": slopes_l1, "slope_interp_l2": slopes_l2,
        **kato_info,
    }
    return _report(
        "equivalence_AV_A0",
        "||f||_{B^s_{p,q}(A_V)} ~ ||f||_{B^s_{p,q}(A_0)}; "
        "||phi_j(sqrt A_V) Phi_k(sqrt A_0)||_{1->1} <= C 2^{-2(j-k)}",
        {
            "spread": tuple(spreads),
            "R_max": tuple(r_max),
            "R_min": tuple(r_min),
            "slope": tuple(slopes_l1),
        },
        passed,
        stages,
        family.seed,
        family.tag,
        t0,
        config_hash,
        details,
    )


def check_heat_gaussian(
    stages,
    t_grid: Sequence[float] | None = None,
    cstar: float = 8.0,
    stability: float = DEFAULT_STABILITY,
    dom_slack: float = 1e-12,
    config_hash: str = "",
) -> VerifyReport:
    """Gaussian kernel envelope sup_{t, x, y} |K_t(x,y)| t^{n/2} e^{|x-y|^2/(C* t)}
    with the exponent constant C* frozen at 8.

    Pass needs the sup finite and stable across stages; when the potential
    carries a negative part that fails the smallness flags the sweep is
    restricted to t <= 1 and the e^{omega t} growth rate is fitted and
    reported.  Potentials also get the entrywise domination sub-check
    |e^{-tA_V}| <= e^{-tA_{-V_-}} (slack relative to the kernel scale).
    """
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    ts = np.asarray(
        2.0 ** np.arange(-10, 1) if t_grid is None else sorted(t_grid), float
    )
    if ts.size == 0 or np.any(ts <= 0.0):
        raise ValueError("heat check needs a nonempty positive t grid")
    sups, defects, omegas = [], [], []
    for stage in stages:
        op, grid = stage.op, stage.grid
        n = grid.n
        kato_ok = True
        if stage.has_potential:
            _, vminus = decompose(grid, op.potential)
            if vminus.max() > 0.0:
                kato_ok = check_smallness(grid, op.potential).satisfies_weak
        t_used = ts if kato_ok else ts[ts <= 1.0]
        if t_used.size == 0:
            raise ValueError("flagged potential restricts the sweep to t <= 1; none given")
        d2 = cdist(grid.coordinates, grid.coordinates, "sqeuclidean")

        op_star = None
        if stage.has_potential:
            vplus, vminus = decompose(grid, op.potential)
            if vplus.max() == 0.0:
                op_star = op
            else:
                op_star = eigendecompose(
                    assemble_schrodinger(grid, GridFunction(grid, -vminus)),
                    dense_cap=max(op.num_nodes, 1),
                )

        log_scores = []
        defect = 0.0
        for t in t_used:
            K = heat_kernel(op, t).values
            absK = np.abs(K)
            # entries at eigen-roundoff scale are numerically zero; scoring
            # them would amplify noise by e^(d^2/(C* t)) at small t, where
            # the true kernel tail is far below machine precision
            floor = op.num_nodes * np.finfo(float).eps * float(absK.max())
            nz = absK > floor
            if not nz.any():
                log_scores.append(-math.inf)
            else:
                with np.errstate(divide="ignore"):
                    logs = np.log(absK[nz]) + 0.5 * n * math.log(t) + d2[nz] / (cstar * t)
                log_scores.append(float(logs.max()))
            if op_star is not None:
                if op_star is op:
                    pass  # identical operators, domination is exact
                else:
                    K_star = heat_kernel(op_star, t).values
                    scale = max(1.0, float(K_star.max()))
                    defect = min(defect, float((K_star - absK).min()) / scale)
        with np.errstate(over="ignore"):
            sups.append(float(np.exp(max(log_scores))))
        defects.append(defect)
        if not kato_ok and len(t_used) >= 2 and all(map(math.isfinite, log_scores)):
            omegas.append(float(np.polyfit(t_used, np.asarray(log_scores), 1)[0]))
        else:
            omegas.append(math.nan)

    passed = _stable(sups, stability) and all(d >= -dom_slack for d in defects)
    constants: dict[str, tuple[float, ...]] = {"C": tuple(sups)}
    if any(st.has_potential for st in stages):
        constants["domination_defect"] = tuple(defects)
    return _report(
        "heat_gaussian",
        "|K_t(x,y)| <= C t^{-n/2} exp(-|x-y|^2/(8t)); |e^{-tA_V}| <= e^{-tA_{-V_-}}",
        constants,
        passed,
        stages,
        0,
        "kernel",
        t0,
        config_hash,
        {"t_grid": [float(t) for t in ts], "cstar": cstar, "omega": omegas},
    )


def check_partition_independence(
    stages,
    family: FunctionFamily | None = None,
    s: float = 1.0,
    p: float = 2.0,
    q: float = 2.0,
    stability: float = DEFAULT_STABILITY,
    pointwise_tol: float = 1e-12,
    config_hash: str = "",
) -> VerifyReport:
    """Besov norms under the two built-in transition profiles agree up to a
    stable constant; the overlap identity phi_j = phi_j (phi'_{j-1} +
    phi'_j + phi'_{j+1}) holds pointwise on a log-spaced frequency grid."""
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    family = _default_family(family)
    cs = []
    for stage in stages:
        op, sys1 = stage.op, stage.sys
        sys2 = second_system(sys1)
        cols = _stack(family.sample(stage))
        n1 = np.asarray(besov_norm(op, sys1, cols, s, p, q), float)
        n2 = np.asarray(besov_norm(op, sys2, cols, s, p, q), float)
        good = (n1 > 0.0) & (n2 > 0.0)
        ratios = n1[good] / n2[good]
        cs.append(float(max(ratios.max(initial=1.0), (1.0 / ratios).max(initial=1.0))))

    sys1 = stages[-1].sys
    sys2 = second_system(sys1)
    xs = np.geomspace(2.0 ** (sys1.j_min - 2), 2.0 ** (sys1.j_max + 2), 4001)
    defect = 0.0
    for j in sys1.window:
        lhs = sys1.phi(j, xs)
        overlap = sys2.phi(j - 1, xs) + sys2.phi(j, xs) + sys2.phi(j + 1, xs)
        defect = max(defect, float(np.abs(lhs - lhs * overlap).max()))

    passed = _stable(cs, stability) and defect <= pointwise_tol
    return _report(
        "partition_independence",
        "||f||_{B(sys1)} ~ ||f||_{B(sys2)}; phi_j = phi_j (phi'_{j-1}+phi'_j+phi'_{j+1})",
        {"C": tuple(cs)},
        passed,
        stages,
        family.seed,
        family.tag,
        t0,
        config_hash,
        {"s": s, "p": p, "q": q, "pointwise_defect": defect},
    )


def check_subspace_characterization(
    stages,
    family: FunctionFamily | None = None,
    s: float = 0.25,
    p: float = 2.0,
    q: float = 2.0,
    stability: float = DEFAULT_STABILITY,
    config_hash: str = "",
) -> VerifyReport:
    """Low-frequency summability behind the subspace characterization:
    sum_{j<=0} 2^{(n/p)j} ||phi_j(sqrt A) f||_p <= C ||f||_{hom B^s_{p,q}},
    admissible for s < n/p or (s, q) = (n/p, 1)."""
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    family = _default_family(family)
    n = stages[0].grid.n
    boundary = abs(s - n / p) <= 1e-12 and q == 1.0
    if not (s < n / p - 1e-12 or boundary):
        raise IndexConstraintViolated(
            f"need s < n/p or (s, q) = (n/p, 1); got s = {s}, n/p = {n / p:g}, q = {q}"
        )
    cs = []
    for stage in stages:
        op, dsys = stage.op, stage.sys
        cols = _stack(family.sample(stage))
        js_low = [j for j in dsys.window if j <= 0]
        den = np.asarray(besov_norm(op, dsys, cols, s, p, q, homogeneous=True), float)
        if js_low:
            norms = block_lp_norms(op, dsys, cols, p, js_low)
            weights = 2.0 ** ((n / p) * np.asarray(js_low, float))
            tails = weights @ norms
        else:
            tails = np.zeros(cols.shape[1])
        good = den > 0.0
        cs.append(float((tails[good] / den[good]).max(initial=0.0)))
    passed = _stable(cs, stability)
    return _report(
        "subspace_characterization",
        "sum_{j<=0} 2^{(n/p)j} ||phi_j(sqrt A) f||_p <= C ||f||_{hom B^s_{p,q}}",
        {"C": tuple(cs)},
        passed,
        stages,
        family.seed,
        family.tag,
        t0,
        config_hash,
        {"s": s, "p": p, "q": q},
    )


def check_lorentz_bernstein(
    stages,
    family: FunctionFamily | None = None,
    p0: float = 1.0,
    p: float = 2.0,
    q: float = 2.0,
    stability: float = DEFAULT_STABILITY,
    config_hash: str = "",
) -> VerifyReport:
    """Lorentz-refined block bounds for the operator pair:
    ||phi_j(sqrt A_V) f||_{L^{p,q}} + ||phi_j(sqrt A_0) f||_{L^{p,q}}
    <= C 2^{n(1/p0-1/p)j} ||f||_{L^{p0}}, for 1 <= p0 < p < inf."""
    t0 = time.perf_counter()
    stages = _as_stages(stages)
    family = _default_family(family)
    if not (1.0 <= p0 < p < math.inf):
        raise IndexConstraintViolated(f"need 1 <= p0 < p < inf, got p0 = {p0}, p = {p}")
    cs = []
    for stage in stages:
        opv, op0, dsys, grid = stage.op, stage.op0, stage.sys, stage.grid
        n = grid.n
        cols = _stack(family.sample(stage))
        den = _lp_columns(cols, grid.cell_measure, p0)
        best = 0.0
        for j in dsys.window:
            bv = dyadic_block(opv, dsys, j).apply(cols)
            b0 = bv if op0 is opv else dyadic_block(op0, dsys, j).apply(cols)
            gain = 2.0 ** (n * (1.0 / p0 - 1.0 / p) * j)
            for i in range(cols.shape[1]):
                if den[i] == 0.0:
                    continue
                lhs = lorentz_norm(GridFunction(grid, bv[:, i]), p, q)
                if b0 is not bv:
                    lhs += lorentz_norm(GridFunction(grid, b0[:, i]), p, q)
                else:
                    lhs *= 2.0
                best = max(best, lhs / (gain * den[i]))
        cs.append(float(best))
    passed = _stable(cs, stability)
    return _report(
        "lorentz_bernstein",
        "||phi_j(sqrt A_V) f||_{L^{p,q}} + ||phi_j(sqrt A_0) f||_{L^{p,q}} "
        "<= C 2^{n(1/p0-1/p)j} ||f||_{L^{p0}}",
        {"C": tuple(cs)},
        passed,
        stages,
        family.seed,
        family.tag,
        t0,
        config_hash,
        {"p0": p0, "p": p, "q": q},
    )


CHECKS: dict[str, Callable] = {
    "resolution_identity": check_resolution_identity,
    "bernstein": check_bernstein,
    "duality": check_duality,
    "embeddings": check_embeddings,
    "lifting": check_lifting,
    "equivalence_AV_A0": check_equivalence_AV_A0,
    "heat_gaussian": check_heat_gaussian,
    "partition_independence": check_partition_independence,
    "subspace_characterization": check_subspace_characterization,
    "lorentz_bernstein": check_lorentz_bernstein,
}
