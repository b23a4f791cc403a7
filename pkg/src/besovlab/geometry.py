"""Masked uniform lattices on open subsets of R^n, n in {1, 2, 3}.

A domain is described by a small shape tree (boxes, balls, half-spaces and
boolean combinations).  A grid at spacing h collects the lattice nodes k*h
(k integer) that fall strictly inside the domain; Dirichlet boundary
conditions later act by plain mask truncation, so the boundary itself never
has to be meshed.  Each node owns a cell of measure h^n, which fixes the
quadrature weight behind every discrete integral in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    EmptyDomain,
    GridMismatch,
    IncompatibleSpacing,
    InvalidExponent,
    UnsupportedDimension,
)

__all__ = [
    "Box",
    "Ball",
    "HalfSpace",
    "Union",
    "Intersection",
    "Complement",
    "Predicate",
    "DomainSpec",
    "Grid",
    "GridFunction",
    "build_grid",
    "lp_norm",
    "pairing",
    "zero_extend",
    "interval",
    "box",
    "ball",
]

_DEFAULT_NODE_BUDGET = 2_000_000


# ---------------------------------------------------------------------------
# shape tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Open axis-aligned box (lo_i, hi_i)."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts > lo) & (pts < hi), axis=-1)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lo, float), np.asarray(self.hi, float)


@dataclass(frozen=True)
class Ball:
    """Open ball of given center and radius."""

    center: tuple[float, ...]
    radius: float

    def contains(self, pts: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center)
        return np.sum((pts - c) ** 2, axis=-1) < self.radius**2

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class HalfSpace:
    """Open half-space {x : <normal, x> < offset}.  Unbounded: needs an explicit bounding box."""

    normal: tuple[float, ...]
    offset: float

    def contains(self, pts: np.ndarray) -> np.ndarray:
        nrm = np.asarray(self.normal)
        return pts @ nrm < self.offset

    def bbox(self) -> None:
        return None


@dataclass(frozen=True)
class Union:
    parts: tuple

    def contains(self, pts: np.ndarray) -> np.ndarray:
        out = self.parts[0].contains(pts)
        for part in self.parts[1:]:
            out = out | part.contains(pts)
        return out

    def bbox(self):
        boxes = [p.bbox() for p in self.parts]
        if any(b is None for b in boxes):
            return None
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        return lo, hi


@dataclass(frozen=True)
class Intersection:
    parts: tuple

    def contains(self, pts: np.ndarray) -> np.ndarray:
        out = self.parts[0].contains(pts)
        for part in self.parts[1:]:
            out = out & part.contains(pts)
        return out

    def bbox(self):
        boxes = [b for b in (p.bbox() for p in self.parts) if b is not None]
        if not boxes:
            return None
        lo = np.max([b[0] for b in boxes], axis=0)
        hi = np.min([b[1] for b in boxes], axis=0)
        return lo, hi


@dataclass(frozen=True)
class Complement:
    """Complement of a shape.  Unbounded: needs an explicit bounding box."""

    part: object

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return ~self.part.contains(pts)

    def bbox(self) -> None:
        return None


@dataclass(frozen=True)
class Predicate:
    """Arbitrary vectorized membership test with a caller-supplied bounding box."""

    func: Callable[[np.ndarray], np.ndarray]
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(pts), bool)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lo, float), np.asarray(self.hi, float)


@dataclass(frozen=True)
class DomainSpec:
    """Open domain in R^n given by a shape tree plus a bounding box.

    The bounding box is derived from the shapes when possible; unbounded
    shapes (half-spaces, complements) require an explicit ``bounding_box``,
    which then acts as a truncation box.

    Examples
    --------
    >>> spec = DomainSpec(1, Box((0.0,), (1.0,)))
    >>> spec.dimension
    1
    """

    dimension: int
    shape: object
    bounding_box: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise UnsupportedDimension(f"dimension must be 1, 2 or 3, got {self.dimension}")
        lo, hi = self.bbox()
        if lo.shape != (self.dimension,) or hi.shape != (self.dimension,):
            raise GridMismatch("bounding box dimension does not match domain dimension")
        if not np.all(hi > lo):
            raise EmptyDomain("bounding box has nonpositive volume")

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.bounding_box is not None:
            return (
                np.asarray(self.bounding_box[0], float),
                np.asarray(self.bounding_box[1], float),
            )
        derived = self.shape.bbox()
        if derived is None:
            raise EmptyDomain(
                "shape has no intrinsic bounding box; pass bounding_box= as a truncation box"
            )
        return derived

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        return self.shape.contains(pts)


def interval(a: float, b: float) -> DomainSpec:
    """Open interval (a, b) as a 1-d domain."""
    return DomainSpec(1, Box((a,), (b,)))


def box(lo: Sequence[float], hi: Sequence[float]) -> DomainSpec:
    lo = tuple(float(v) for v in lo)
    hi = tuple(float(v) for v in hi)
    return DomainSpec(len(lo), Box(lo, hi))


def ball(center: Sequence[float], radius: float) -> DomainSpec:
    center = tuple(float(v) for v in center)
    return DomainSpec(len(center), Ball(center, float(radius)))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass
class Grid:
    """Masked uniform lattice.

    Attributes
    ----------
    n : int
        Spatial dimension.
    h : float
        Lattice spacing; every node sits at integer multiples of h.
    k_lo : ndarray of int64, shape (n,)
        Smallest lattice index per axis over the bounding box.
    shape : tuple of int
        Extent of the index box per axis.
    flat_of_cell : ndarray of int64, shape ``shape``
        Interior numbering, -1 on exterior cells.
    multi_indices : ndarray of int64, shape (N, n)
        Index-box offsets of the interior nodes, in numbering order.
    """

    n: int
    h: float
    k_lo: np.ndarray
    shape: tuple[int, ...]
    flat_of_cell: np.ndarray
    multi_indices: np.ndarray
    _coords: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_nodes(self) -> int:
        return self.multi_indices.shape[0]

    @property
    def cell_measure(self) -> float:
        return self.h**self.n

    @property
    def coordinates(self) -> np.ndarray:
        """(N, n) array of node coordinates k*h."""
        if self._coords is None:
            self._coords = (self.multi_indices + self.k_lo) * self.h
        return self._coords

    def lattice_keys(self) -> np.ndarray:
        """Absolute integer lattice indices (N, n); grid-independent node identity."""
        return self.multi_indices + self.k_lo

    def same_geometry(self, other: "Grid") -> bool:
        return (
            self.n == other.n
            and self.h == other.h
            and self.shape == other.shape
            and np.array_equal(self.k_lo, other.k_lo)
            and np.array_equal(self.multi_indices, other.multi_indices)
        )


def build_grid(spec: DomainSpec, h: float, node_budget: int = _DEFAULT_NODE_BUDGET) -> Grid:
    """Collect the lattice nodes k*h strictly inside the domain.

    Parameters
    ----------
    spec : DomainSpec
    h : float
        Spacing, must be positive.
    node_budget : int
        Hard cap on the number of candidate cells in the bounding box;
        exceeding it raises BudgetExceeded before any allocation.

    Examples
    --------
    >>> g = build_grid(interval(0.0, 1.0), 1.0 / 8.0)
    >>> g.num_nodes
    7
    """
    if not (h > 0) or not math.isfinite(h):
        raise ValueError(f"spacing must be a positive finite number, got {h}")
    lo, hi = spec.bbox()
    n = spec.dimension

    k_lo = np.floor(lo / h).astype(np.int64) - 1
    k_hi = np.ceil(hi / h).astype(np.int64) + 1
    shape = tuple(int(b - a + 1) for a, b in zip(k_lo, k_hi))
    total = int(np.prod([max(s, 0) for s in shape]))
    if total <= 0:
        raise EmptyDomain("bounding box contains no lattice cells at this spacing")
    if total > node_budget:
        raise BudgetExceeded(
            f"bounding box holds {total} candidate cells, budget is {node_budget}"
        )

    axes = [np.arange(a, a + s, dtype=np.int64) for a, s in zip(k_lo, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1) * h

    inside = spec.contains(pts)
    # nodes must also sit inside the bounding box: the box doubles as a
    # truncation box for unbounded shape trees
    inside &= np.all((pts > lo) & (pts < hi), axis=-1)
    inside = inside.reshape(shape)

    if not inside.any():
        raise EmptyDomain(f"no lattice node falls strictly inside the domain at h={h}")

    flat_of_cell = np.full(shape, -1, dtype=np.int64)
    order = np.argwhere(inside)  # lexicographic, deterministic
    flat_of_cell[tuple(order.T)] = np.arange(order.shape[0])
    return Grid(n=n, h=float(h), k_lo=k_lo, shape=shape, flat_of_cell=flat_of_cell,
                multi_indices=order)


# ---------------------------------------------------------------------------
# grid functions
# ---------------------------------------------------------------------------


@dataclass
class GridFunction:
    """One scalar (real or complex) value per interior node."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != (self.grid.num_nodes,):
            raise GridMismatch(
                f"value count {vals.shape} does not match grid size {self.grid.num_nodes}"
            )
        if vals.dtype.kind not in "fc":
            vals = vals.astype(np.float64)
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        self.values = vals

    @classmethod
    def from_callable(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Sample a vectorized callable of the (N, n) coordinate array."""
        return cls(grid, np.asarray(func(grid.coordinates)))


def lp_norm(f: GridFunction, p: float) -> float:
    """Discrete L^p norm, (h^n sum |f_i|^p)^(1/p); p = inf gives max |f_i|.

    Raises InvalidExponent for p < 1 or NaN.
    """
    if not (p >= 1):  # also rejects NaN
        raise InvalidExponent(f"L^p norm needs p >= 1, got {p}")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max(initial=0.0))
    if p == 1:
        return float(f.grid.cell_measure * a.sum())
    if p == 2:
        return float(math.sqrt(f.grid.cell_measure * float((a * a).sum())))
    return float((f.grid.cell_measure * (a**p).sum()) ** (1.0 / p))


def pairing(f: GridFunction, g: GridFunction) -> complex:
    """Sesquilinear pairing h^n sum f_i conj(g_i); conjugation on the right slot."""
    if not f.grid.same_geometry(g.grid):
        raise GridMismatch("pairing requires both functions on the same grid")
    return complex(f.grid.cell_measure * np.sum(f.values * np.conj(g.values)))


def zero_extend(f: GridFunction, ambient: Grid) -> GridFunction:
    """Extend by zero onto an ambient grid with the same spacing.

    Every node of the source must be present in the ambient grid; since both
    lattices are anchored at the origin, node identity is the integer index.
    """
    g = f.grid
    if ambient.n != g.n:
        raise GridMismatch("ambient grid has different dimension")
    if not math.isclose(ambient.h, g.h, rel_tol=1e-12, abs_tol=0.0):
        raise IncompatibleSpacing(
            f"ambient spacing {ambient.h} does not match source spacing {g.h}"
        )

    offsets = g.lattice_keys() - ambient.k_lo
    inside_box = np.all((offsets >= 0) & (offsets < np.asarray(ambient.shape)), axis=1)
    if not inside_box.all():
        raise GridMismatch("ambient grid bounding box does not cover the source grid")
    target = ambient.flat_of_cell[tuple(offsets.T)]
    if (target < 0).any():
        raise GridMismatch("ambient grid does not contain every source node")

    out = np.zeros(ambient.num_nodes, dtype=f.values.dtype)
    out[target] = f.values
    return GridFunction(ambient, out)
