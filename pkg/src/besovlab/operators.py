"""Dirichlet Schrodinger operators -Delta + V on masked lattices.

The Laplacian is the standard (2n+1)-point stencil divided by h^2; the
Dirichlet condition enters by mask truncation, i.e. stencil legs that leave
the interior are simply dropped (their no-flux partner value is zero).
Potentials act as diagonal multiplication by their node samples.

Eigendecompositions are dense and cached on the operator; a configurable
cap guards against accidentally decomposing a matrix that is too large.
Operators (with grid, CSR matrix, potential and eigendata) can be saved to
and loaded from a little-endian binary cache file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    ComplexPotential,
    DenseCapExceeded,
    GridMismatch,
    MissingEigendata,
    SolverFailure,
)
from .geometry import Grid, GridFunction

__all__ = [
    "SpectralOperator",
    "assemble_laplacian",
    "assemble_schrodinger",
    "eigendecompose",
    "quadratic_form",
    "dirichlet_energy",
    "single_eigenvector",
    "save_operator",
    "load_operator",
]

DEFAULT_DENSE_CAP = 4096

_MAGIC = b"BESOVOP1"
_FORMAT_VERSION = 1
_FLAG_POTENTIAL = 1
_FLAG_EIGEN = 2


@dataclass
class SpectralOperator:
    """Sparse symmetric operator with optional cached eigendata.

    Eigenvectors are orthonormal in the plain dot product; the L2-normalized
    eigenfunction is column k divided by h^(n/2).  Functional calculus only
    uses the projector form U g(L) U^T, which is normalization free.
    """

    grid: Grid
    matrix: sp.csr_matrix
    potential: np.ndarray | None = None
    eigvals: np.ndarray | None = field(default=None, repr=False)
    eigvecs: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_nodes(self) -> int:
        return self.grid.num_nodes

    @property
    def has_eigendata(self) -> bool:
        return self.eigvals is not None

    def require_eigendata(self) -> None:
        if not self.has_eigendata:
            raise MissingEigendata(
                "operation needs the dense eigendecomposition; call eigendecompose first"
            )

    def gershgorin_bounds(self) -> tuple[float, float]:
        """Cheap enclosure of the spectrum from row sums."""
        m = self.matrix
        diag = m.diagonal()
        radius = np.asarray(np.abs(m).sum(axis=1)).ravel() - np.abs(diag)
        return float((diag - radius).min()), float((diag + radius).max())

    @property
    def lam_min(self) -> float:
        if self.has_eigendata:
            return float(self.eigvals[0])
        return self.gershgorin_bounds()[0]

    @property
    def lam_max(self) -> float:
        if self.has_eigendata:
            return float(self.eigvals[-1])
        return self.gershgorin_bounds()[1]

    @property
    def lam_pos_min(self) -> float:
        """Smallest strictly positive eigenvalue (eigendata required)."""
        self.require_eigendata()
        pos = self.eigvals[self.eigvals > 0.0]
        if pos.size == 0:
            raise SolverFailure("operator has no positive spectrum")
        return float(pos[0])

    @property
    def lam0(self) -> float:
        """Semi-boundedness shift sqrt(max(0, -lam_min)); 0 for V >= 0."""
        return float(np.sqrt(max(0.0, -self.lam_min)))


def _neighbor_entries(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """(row, col) pairs of interior-interior lattice edges, each direction once."""
    rows = []
    cols = []
    shape = np.asarray(grid.shape)
    for d in range(grid.n):
        step = np.zeros(grid.n, dtype=np.int64)
        step[d] = 1
        nb = grid.multi_indices + step
        ok = nb[:, d] < shape[d]
        target = np.full(grid.num_nodes, -1, dtype=np.int64)
        target[ok] = grid.flat_of_cell[tuple(nb[ok].T)]
        ok &= target >= 0
        src = np.nonzero(ok)[0]
        rows.append(src)
        cols.append(target[src])
    return np.concatenate(rows), np.concatenate(cols)


def assemble_laplacian(grid: Grid) -> SpectralOperator:
    """Dirichlet Laplacian: (2n I - adjacency) / h^2 on the interior nodes.

    Examples
    --------
    A single interior node on (0, 1) at h = 1/2 gives the 1x1 matrix [8]:

    >>> from .geometry import interval, build_grid
    >>> op = assemble_laplacian(build_grid(interval(0.0, 1.0), 0.5))
    >>> op.matrix.toarray()
    array([[8.]])
    """
    N = grid.num_nodes
    inv_h2 = 1.0 / grid.h**2
    rows, cols = _neighbor_entries(grid)
    all_rows = np.concatenate([np.arange(N), rows, cols])
    all_cols = np.concatenate([np.arange(N), cols, rows])
    all_vals = np.concatenate(
        [
            np.full(N, 2.0 * grid.n * inv_h2),
            np.full(rows.size, -inv_h2),
            np.full(cols.size, -inv_h2),
        ]
    )
    mat = sp.coo_matrix((all_vals, (all_rows, all_cols)), shape=(N, N)).tocsr()
    return SpectralOperator(grid=grid, matrix=mat, potential=None)


def _potential_samples(grid: Grid, V) -> np.ndarray:
    if isinstance(V, GridFunction):
        if not V.grid.same_geometry(grid):
            raise GridMismatch("potential lives on a different grid")
        vals = V.values
    else:
        vals = np.asarray(V)
        if vals.shape != (grid.num_nodes,):
            raise GridMismatch(
                f"potential sample count {vals.shape} does not match grid size {grid.num_nodes}"
            )
    if np.iscomplexobj(vals):
        if np.abs(vals.imag).max(initial=0.0) != 0.0:
            raise ComplexPotential("potential samples must be real")
        vals = vals.real
    return np.asarray(vals, float)


def assemble_schrodinger(grid: Grid, V) -> SpectralOperator:
    """-Delta + V with V given as node samples (GridFunction or array)."""
    vals = _potential_samples(grid, V)
    base = assemble_laplacian(grid)
    mat = (base.matrix + sp.diags(vals)).tocsr()
    return SpectralOperator(grid=grid, matrix=mat, potential=vals)


def eigendecompose(op: SpectralOperator, dense_cap: int = DEFAULT_DENSE_CAP) -> SpectralOperator:
    """Dense symmetric eigendecomposition, cached on the operator in place.

    Eigenvalues come out ascending.  Each eigenvector gets a canonical sign
    (largest-magnitude entry positive) so repeated runs emit identical data.
    """
    if op.has_eigendata:
        return op
    N = op.num_nodes
    if N > dense_cap:
        raise DenseCapExceeded(f"matrix order {N} exceeds dense cap {dense_cap}")
    dense = op.matrix.toarray()
    try:
        vals, vecs = np.linalg.eigh(dense)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails here
        raise SolverFailure(f"dense eigendecomposition failed: {exc}") from exc
    anchor = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[anchor, np.arange(N)])
    signs[signs == 0.0] = 1.0
    op.eigvals = vals
    op.eigvecs = vecs * signs
    return op


def quadratic_form(op: SpectralOperator, f: GridFunction) -> float:
    """(f, A f) in the h^n-weighted inner product; real for symmetric A."""
    if not f.grid.same_geometry(op.grid):
        raise GridMismatch("function lives on a different grid than the operator")
    v = f.values
    return float(np.real(np.vdot(v, op.matrix @ v)) * op.grid.cell_measure)


def dirichlet_energy(grid: Grid, f: GridFunction) -> float:
    """h^n sum over lattice edges of |df|^2 / h^2, with zero exterior values.

    Every lattice edge with at least one interior endpoint counts once; for
    truncated edges the exterior value is 0.  By summation by parts this
    equals (f, A_0 f) for the stencil Laplacian, which is the identity the
    tests pin down.
    """
    if not f.grid.same_geometry(grid):
        raise GridMismatch("function lives on a different grid")
    v = f.values
    shape = np.asarray(grid.shape)
    total = 0.0
    for d in range(grid.n):
        step = np.zeros(grid.n, dtype=np.int64)
        step[d] = 1
        for sgn in (+1, -1):
            nb = grid.multi_indices + sgn * step
            ok = (nb[:, d] >= 0) & (nb[:, d] < shape[d])
            target = np.full(grid.num_nodes, -1, dtype=np.int64)
            target[ok] = grid.flat_of_cell[tuple(nb[ok].T)]
            interior_nb = target >= 0
            if sgn == +1:
                # interior-interior edges counted on the +1 sweep only
                diff = v[interior_nb] - v[target[interior_nb]]
                total += float(np.sum(np.abs(diff) ** 2))
            # truncated edges: neighbor cell is exterior (or off the box)
            cut = ~interior_nb
            total += float(np.sum(np.abs(v[cut]) ** 2))
    return total * grid.cell_measure / grid.h**2


def single_eigenvector(op: SpectralOperator, k: int) -> GridFunction:
    """k-th eigenfunction, L2-normalized (unit h^n-weighted norm)."""
    op.require_eigendata()
    vec = op.eigvecs[:, k] / op.grid.h ** (op.grid.n / 2.0)
    return GridFunction(op.grid, vec)


# ---------------------------------------------------------------------------
# binary persistence
# ---------------------------------------------------------------------------


def save_operator(op: SpectralOperator, path) -> None:
    """Write grid, CSR matrix, potential and eigendata as little-endian binary."""
    grid = op.grid
    mat = op.matrix.tocsr()
    mat.sort_indices()
    flags = 0
    if op.potential is not None:
        flags |= _FLAG_POTENTIAL
    if op.has_eigendata:
        flags |= _FLAG_EIGEN
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIQd", _FORMAT_VERSION, grid.n, grid.num_nodes, grid.h))
        fh.write(np.asarray(grid.k_lo, "<i8").tobytes())
        fh.write(np.asarray(grid.shape, "<u8").tobytes())
        fh.write(struct.pack("<IQ", flags, mat.nnz))
        fh.write(np.ascontiguousarray(grid.multi_indices, "<i8").tobytes())
        fh.write(np.asarray(mat.indptr, "<i8").tobytes())
        fh.write(np.asarray(mat.indices, "<i8").tobytes())
        fh.write(np.asarray(mat.data, "<f8").tobytes())
        if flags & _FLAG_POTENTIAL:
            fh.write(np.asarray(op.potential, "<f8").tobytes())
        if flags & _FLAG_EIGEN:
            fh.write(np.asarray(op.eigvals, "<f8").tobytes())
            fh.write(np.ascontiguousarray(op.eigvecs, "<f8").tobytes())


def _read(fh, dtype, count) -> np.ndarray:
    dtype = np.dtype(dtype)
    buf = fh.read(dtype.itemsize * count)
    if len(buf) != dtype.itemsize * count:
        raise SolverFailure("operator cache file is truncated")
    return np.frombuffer(buf, dtype=dtype).copy()


def load_operator(path) -> SpectralOperator:
    """Read an operator cache written by save_operator."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise SolverFailure("not an operator cache file (bad magic)")
        version, n, N, h = struct.unpack("<IIQd", fh.read(struct.calcsize("<IIQd")))
        if version != _FORMAT_VERSION:
            raise SolverFailure(f"unsupported operator cache version {version}")
        k_lo = _read(fh, "<i8", n)
        shape = tuple(int(s) for s in _read(fh, "<u8", n))
        flags, nnz = struct.unpack("<IQ", fh.read(struct.calcsize("<IQ")))
        multi = _read(fh, "<i8", N * n).reshape(int(N), n)
        indptr = _read(fh, "<i8", N + 1)
        indices = _read(fh, "<i8", nnz)
        data = _read(fh, "<f8", nnz)
        potential = _read(fh, "<f8", N) if flags & _FLAG_POTENTIAL else None
        eigvals = eigvecs = None
        if flags & _FLAG_EIGEN:
            eigvals = _read(fh, "<f8", N)
            eigvecs = _read(fh, "<f8", N * N).reshape(int(N), int(N))

    flat_of_cell = np.full(shape, -1, dtype=np.int64)
    flat_of_cell[tuple(multi.T)] = np.arange(int(N))
    grid = Grid(n=int(n), h=float(h), k_lo=k_lo, shape=shape,
                flat_of_cell=flat_of_cell, multi_indices=multi)
    mat = sp.csr_matrix(
        (data, indices.astype(np.int64), indptr.astype(np.int64)), shape=(int(N), int(N))
    )
    return SpectralOperator(grid=grid, matrix=mat, potential=potential,
                            eigvals=eigvals, eigvecs=eigvecs)
