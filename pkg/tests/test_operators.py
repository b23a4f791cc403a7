"""Discrete Laplacian assembly, eigendata, quadratic forms, and the cache format."""

import struct

import numpy as np
import pytest

import besovlab as bl

from conftest import interval_stage, random_function


def interval_eigenvalues(length: float, h: float) -> np.ndarray:
    """Closed form for the Dirichlet chain on (0, length) with spacing h."""
    m = int(round(length / h)) - 1
    k = np.arange(1, m + 1)
    return (4.0 / h**2) * np.sin(k * np.pi * h / (2.0 * length)) ** 2


class TestAssembly:
    def test_single_node_matrix(self):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.5)
        op = bl.assemble_laplacian(g)
        np.testing.assert_array_equal(op.matrix.toarray(), [[8.0]])

    def test_interval_matrix_structure(self):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.25)
        a = bl.assemble_laplacian(g).matrix.toarray()
        expected = 16.0 * np.array([
            [2.0, -1.0, 0.0],
            [-1.0, 2.0, -1.0],
            [0.0, -1.0, 2.0],
        ])
        np.testing.assert_array_equal(a, expected)

    def test_symmetry(self):
        g = bl.build_grid(bl.ball([0.0, 0.0], 1.0), 0.25)
        a = bl.assemble_laplacian(g).matrix
        assert (a != a.T).nnz == 0

    def test_row_structure_interior_vs_boundary(self):
        # Every diagonal entry is 2n/h^2 regardless of truncation; off-diagonal
        # count equals the number of interior neighbors.
        g = bl.build_grid(bl.ball([0.0, 0.0], 1.0), 0.25)
        a = bl.assemble_laplacian(g).matrix.toarray()
        np.testing.assert_allclose(np.diag(a), 4.0 / 0.0625)
        offdiag = a - np.diag(np.diag(a))
        assert set(np.unique(offdiag)) == {-16.0, 0.0}

    def test_schrodinger_adds_diagonal(self):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.25)
        v = bl.GridFunction(g, np.array([1.0, -2.0, 3.0]))
        a0 = bl.assemble_laplacian(g).matrix.toarray()
        av = bl.assemble_schrodinger(g, v).matrix.toarray()
        np.testing.assert_array_equal(av, a0 + np.diag(v.values))

    def test_schrodinger_from_sampled_callable(self):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.25)
        v = bl.GridFunction.from_callable(g, lambda x: x[:, 0])
        op = bl.assemble_schrodinger(g, v)
        np.testing.assert_allclose(op.potential, [0.25, 0.5, 0.75])

    def test_constant_potential_shifts_spectrum_exactly(self):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.125)
        op0 = bl.eigendecompose(bl.assemble_laplacian(g))
        opc = bl.eigendecompose(bl.assemble_schrodinger(g, np.full(g.num_nodes, 5.5)))
        # Same matrix plus an exact diagonal shift; two eigh calls agree to
        # machine precision relative to the matrix scale.
        np.testing.assert_allclose(opc.eigvals, op0.eigvals + 5.5, atol=1e-11)

    def test_complex_potential_rejected(self):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.25)
        with pytest.raises(bl.ComplexPotential):
            bl.assemble_schrodinger(g, bl.GridFunction(g, np.array([1j, 0, 0])))

    def test_potential_grid_mismatch(self):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.25)
        g2 = bl.build_grid(bl.interval(0.0, 1.0), 0.125)
        with pytest.raises(bl.GridMismatch):
            bl.assemble_schrodinger(g, bl.GridFunction(g2, np.ones(7)))


class TestEigendata:
    def test_interval_closed_form(self):
        for denom in (8, 32):
            st = interval_stage(denom)
            np.testing.assert_allclose(
                st.op.eigvals, interval_eigenvalues(1.0, 1.0 / denom), rtol=1e-10
            )

    def test_rectangle_closed_form(self):
        # Separable: 2D eigenvalues are sums of the per-axis chain eigenvalues.
        g = bl.build_grid(bl.box([0.0, 0.0], [1.0, 2.0]), 0.25)
        op = bl.eigendecompose(bl.assemble_laplacian(g))
        lx = interval_eigenvalues(1.0, 0.25)
        ly = interval_eigenvalues(2.0, 0.25)
        expected = np.sort((lx[:, None] + ly[None, :]).ravel())
        np.testing.assert_allclose(op.eigvals, expected, rtol=1e-10)

    def test_eigenvectors_orthonormal(self):
        st = interval_stage(16)
        gram = st.op.eigvecs.T @ st.op.eigvecs
        np.testing.assert_allclose(gram, np.eye(st.grid.num_nodes), atol=1e-12)

    def test_gershgorin_encloses_spectrum(self):
        st = interval_stage(32)
        lo, hi = st.op.gershgorin_bounds()
        assert lo <= st.op.eigvals[0]
        assert hi >= st.op.eigvals[-1]

    def test_sign_gauge_deterministic(self):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.125)
        op1 = bl.eigendecompose(bl.assemble_laplacian(g))
        op2 = bl.eigendecompose(bl.assemble_laplacian(g))
        np.testing.assert_array_equal(op1.eigvecs, op2.eigvecs)

    def test_dense_cap(self):
        st = interval_stage(8)
        with pytest.raises(bl.DenseCapExceeded):
            bl.eigendecompose(bl.assemble_laplacian(st.grid), dense_cap=3)

    def test_missing_eigendata(self):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.125)
        op = bl.assemble_laplacian(g)
        with pytest.raises(bl.MissingEigendata):
            op.require_eigendata()
        with pytest.raises(bl.MissingEigendata):
            _ = op.lam_pos_min

    def test_lam0_nonnegative_spectrum(self):
        st = interval_stage(16)
        assert st.op.lam0 == 0.0

    def test_lam0_negative_spectrum(self):
        # A strongly negative well pushes the bottom eigenvalue below zero.
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.125)
        op = bl.eigendecompose(bl.assemble_schrodinger(g, np.full(g.num_nodes, -500.0)))
        assert op.lam_min < 0.0
        np.testing.assert_allclose(op.lam0, np.sqrt(-op.lam_min), rtol=1e-14)


class TestForms:
    def test_quadratic_form_equals_dirichlet_energy(self):
        for denom in (8, 16):
            st = interval_stage(denom)
            f = random_function(st.grid, seed=denom)
            np.testing.assert_allclose(
                bl.quadratic_form(st.op, f),
                bl.dirichlet_energy(st.grid, f),
                rtol=1e-12,
            )

    def test_quadratic_form_with_potential(self):
        g = bl.build_grid(bl.ball([0.0, 0.0], 1.0), 0.25)
        vvals = np.linspace(-1.0, 2.0, g.num_nodes)
        op = bl.assemble_schrodinger(g, bl.GridFunction(g, vvals))
        f = random_function(g, seed=3)
        expected = bl.dirichlet_energy(g, f) + g.cell_measure * np.sum(vvals * f.values**2)
        np.testing.assert_allclose(bl.quadratic_form(op, f), expected, rtol=1e-12)

    def test_dirichlet_energy_linear_ramp(self):
        # f(x) = x on the 1D grid: every lattice edge sees slope 1, and the two
        # boundary edges contribute through the zero extension.
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.125)
        f = bl.GridFunction(g, g.coordinates[:, 0])
        # Interior edges: 6 of slope 1; left edge slope 1; right edge slope 7.
        h = 0.125
        expected = h * (6 * 1.0 + 1.0 + (0.875 / h) ** 2)
        np.testing.assert_allclose(bl.dirichlet_energy(g, f), expected, rtol=1e-12)

    def test_energy_positive_definite(self):
        st = interval_stage(16)
        f = random_function(st.grid, seed=9)
        assert bl.dirichlet_energy(st.grid, f) > 0.0


class TestSingleEigenvector:
    def test_normalized_in_l2(self):
        st = interval_stage(16)
        for k in (0, 3, 7):
            u = bl.single_eigenvector(st.op, k)
            np.testing.assert_allclose(bl.lp_norm(u, 2.0), 1.0, rtol=1e-13)

    def test_is_eigenvector(self):
        st = interval_stage(16)
        u = bl.single_eigenvector(st.op, 2)
        av = st.op.matrix @ u.values
        np.testing.assert_allclose(av, st.op.eigvals[2] * u.values, atol=1e-9)


class TestSaveLoad:
    def test_roundtrip_bitwise(self, tmp_path):
        g = bl.build_grid(bl.ball([0.0, 0.0], 1.0), 0.25)
        vvals = np.linspace(0.0, 1.0, g.num_nodes)
        op = bl.eigendecompose(bl.assemble_schrodinger(g, bl.GridFunction(g, vvals)))
        path = tmp_path / "op.bin"
        bl.save_operator(op, path)
        back = bl.load_operator(path)
        assert back.grid.same_geometry(op.grid)
        np.testing.assert_array_equal(back.matrix.toarray(), op.matrix.toarray())
        np.testing.assert_array_equal(back.potential, op.potential)
        np.testing.assert_array_equal(back.eigvals, op.eigvals)
        np.testing.assert_array_equal(back.eigvecs, op.eigvecs)

    def test_roundtrip_without_optional_blocks(self, tmp_path):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.125)
        op = bl.assemble_laplacian(g)
        path = tmp_path / "op.bin"
        bl.save_operator(op, path)
        back = bl.load_operator(path)
        assert back.potential is None
        assert not back.has_eigendata
        np.testing.assert_array_equal(back.matrix.toarray(), op.matrix.toarray())

    def test_header_layout(self, tmp_path):
        # Magic, version, dimension, and node count sit at fixed little-endian
        # offsets so other tooling can sniff the file.
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.125)
        op = bl.assemble_laplacian(g)
        path = tmp_path / "op.bin"
        bl.save_operator(op, path)
        raw = path.read_bytes()
        assert raw[:8] == b"BESOVOP1"
        version, n, num, h = struct.unpack_from("<IIQd", raw, 8)
        assert (version, n, num) == (1, 1, 7)
        assert h == 0.125

    def test_truncated_file_rejected(self, tmp_path):
        g = bl.build_grid(bl.interval(0.0, 1.0), 0.125)
        op = bl.assemble_laplacian(g)
        path = tmp_path / "op.bin"
        bl.save_operator(op, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(bl.SolverFailure):
            bl.load_operator(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "op.bin"
        path.write_bytes(b"NOTANOP!" + b"\x00" * 64)
        with pytest.raises(bl.SolverFailure):
            bl.load_operator(path)
