"""Shared fixtures: cached grids and operators reused across test modules.

Eigendecompositions dominate the suite runtime, so stages (grid, operator,
dyadic system) are memoized per (domain, spacing) here and shared freely;
tests must not mutate them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pytest

import besovlab as bl


@dataclass(frozen=True)
class Stage:
    grid: "bl.Grid"
    op: "bl.SpectralOperator"
    sys: "bl.DyadicSystem"


@lru_cache(maxsize=None)
def interval_stage(denom: int, length: float = 1.0) -> Stage:
    grid = bl.build_grid(bl.interval(0.0, length), 1.0 / denom)
    op = bl.eigendecompose(bl.assemble_laplacian(grid))
    sys = bl.build_system(op.lam_pos_min, op.lam_max, op.lam0)
    return Stage(grid, op, sys)


@lru_cache(maxsize=None)
def disk_stage(denom: int, radius: float = 1.0) -> Stage:
    grid = bl.build_grid(bl.ball([0.0, 0.0], radius), 1.0 / denom)
    op = bl.eigendecompose(bl.assemble_laplacian(grid), dense_cap=8192)
    sys = bl.build_system(op.lam_pos_min, op.lam_max, op.lam0)
    return Stage(grid, op, sys)


def diagonal_operator(lams) -> "bl.SpectralOperator":
    """Operator with prescribed spectrum and coordinate eigenvectors.

    Useful for tests that need eigenvalues placed exactly at dyadic centers.
    Lives on an interval grid with matching node count.
    """
    import scipy.sparse as sp

    lams = np.asarray(sorted(lams), float)
    m = len(lams)
    grid = bl.build_grid(bl.interval(0.0, 1.0), 1.0 / (m + 1))
    assert grid.num_nodes == m
    op = bl.SpectralOperator(grid=grid, matrix=sp.csr_matrix(np.diag(lams)))
    op.eigvals = lams
    op.eigvecs = np.eye(m)
    return op


def random_function(grid, seed=0, complex_values=False) -> "bl.GridFunction":
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(grid.num_nodes)
    if complex_values:
        vals = vals + 1j * rng.standard_normal(grid.num_nodes)
    return bl.GridFunction(grid, vals)


@pytest.fixture(scope="session")
def stage_64() -> Stage:
    return interval_stage(64)


@pytest.fixture(scope="session")
def stage_128() -> Stage:
    return interval_stage(128)
