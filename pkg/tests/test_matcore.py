import numpy as np
import pytest

from ddrmpc.matcore import (
    AsymmetryError,
    BlockLayout,
    IllConditionedError,
    MatrixShapeError,
    SymMatrix,
    assemble_blocks,
    eig_report,
    is_psd,
    min_eig,
    schur_complement,
    spectral_radius,
)

from conftest import A1, A2, B_ANG, K_REF_ANG


def quad_eigs(M):
    """2x2 characteristic-polynomial oracle: roots of l^2 - tr l + det."""
    t = M[0, 0] + M[1, 1]
    d = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    disc = t * t / 4.0 - d
    if disc >= 0:
        return np.array([t / 2.0 - np.sqrt(disc), t / 2.0 + np.sqrt(disc)])
    return None  # complex pair, modulus sqrt(det)


class TestSymMatrix:
    def test_symmetrizes(self):
        s = SymMatrix(np.array([[1.0, 2.0 + 1e-14], [2.0, 3.0]]))
        assert np.array_equal(s.entries, s.entries.T)
        assert s.side == 2

    def test_asymmetry_alarm(self):
        with pytest.raises(AsymmetryError):
            SymMatrix(np.array([[1.0, 2.0], [2.1, 3.0]]))

    def test_rejects_nonsquare(self):
        with pytest.raises(MatrixShapeError):
            SymMatrix(np.zeros((2, 3)))


class TestAssembleBlocks:
    def test_direct_placement(self):
        out = assemble_blocks(BlockLayout([1, 1]), [[[[2.0]], [[1.0]]], [[[1.0]], [[1.0]]]])
        assert np.array_equal(out.entries, [[2.0, 1.0], [1.0, 1.0]])

    def test_identity_single_block(self):
        out = assemble_blocks(BlockLayout([2]), [[np.eye(2)]])
        assert np.array_equal(out.entries, np.eye(2))

    def test_offdiagonal_symmetry(self):
        b = np.array([[3.0], [4.0]])
        out = assemble_blocks(BlockLayout([2, 1]), [[np.zeros((2, 2)), b], [b.T, np.zeros((1, 1))]])
        assert out.entries[0, 2] == 3.0
        assert out.entries[2, 0] == 3.0
        assert out.entries[1, 2] == 4.0

    def test_none_is_zero(self):
        out = assemble_blocks(BlockLayout([1, 1]), [[None, None], [None, [[5.0]]]])
        assert np.array_equal(out.entries, [[0.0, 0.0], [0.0, 5.0]])

    def test_shape_mismatch(self):
        with pytest.raises(MatrixShapeError):
            assemble_blocks(BlockLayout([2, 1]), [[np.eye(2), np.zeros((2, 2))],
                                                  [np.zeros((2, 2)).T, np.zeros((1, 1))]])

    def test_asymmetric_grid_rejected(self):
        b = np.array([[3.0], [4.0]])
        with pytest.raises(AsymmetryError):
            assemble_blocks(BlockLayout([2, 1]),
                            [[np.zeros((2, 2)), b], [2 * b.T, np.zeros((1, 1))]])

    def test_exact_symmetry_random_grids(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            sizes = rng.integers(1, 4, size=rng.integers(1, 4)).tolist()
            layout = BlockLayout(sizes)
            nb = len(sizes)
            grid = [[None] * nb for _ in range(nb)]
            for i in range(nb):
                for j in range(i, nb):
                    blk = rng.normal(size=(sizes[i], sizes[j]))
                    if i == j:
                        blk = blk + blk.T
                    grid[i][j] = blk
                    if i != j:
                        grid[j][i] = blk.T
            out = assemble_blocks(layout, grid)
            assert np.array_equal(out.entries, out.entries.T)


class TestIsPsd:
    def test_identity(self):
        assert is_psd(np.eye(3), 0.0)

    def test_signed_diagonal(self):
        assert not is_psd(np.diag([1.0, -1.0]), 0.0)

    def test_two_by_two_via_charpoly_oracle(self):
        M = np.array([[2.0, 1.0], [1.0, 1.0]])
        eigs = quad_eigs(M)  # (3 +- sqrt 5)/2
        assert eigs is not None and eigs[0] > 0
        assert is_psd(M, 0.0)
        assert np.allclose(sorted(eigs), [(3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2])

    def test_monotone_in_tol(self):
        M = np.diag([1.0, -1e-5])
        assert not is_psd(M, 0.0)
        assert not is_psd(M, 1e-6)
        assert is_psd(M, 1e-5)
        assert is_psd(M, 1e-3)

    def test_tol_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            is_psd(np.eye(2), -1.0)


class TestSchurComplement:
    def test_scalar_case(self):
        out = schur_complement(np.array([[2.0, 1.0], [1.0, 1.0]]), 1)
        assert np.allclose(out.entries, [[1.0]])

    def test_block_diagonal_unchanged(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        S = np.block([[A, np.zeros((2, 2))], [np.zeros((2, 2)), np.eye(2)]])
        out = schur_complement(S, 2)
        assert np.allclose(out.entries, A)

    def test_psd_agreement(self):
        S = np.array([[4.0, 2.0], [2.0, 2.0]])
        comp = schur_complement(S, 1)
        assert np.allclose(comp.entries, [[2.0]])
        assert is_psd(S, 0.0) == (is_psd(np.array([[2.0]]), 0.0) and is_psd(comp, 0.0))

    def test_ill_conditioned_rejected(self):
        S = np.array([
            [2.0, 0.5, 0.5],
            [0.5, 1.0, 1.0],
            [0.5, 1.0, 1.0 + 1e-14],
        ])
        with pytest.raises(IllConditionedError):
            schur_complement(S, 1)

    def test_split_bounds(self):
        with pytest.raises(MatrixShapeError):
            schur_complement(np.eye(2), 2)

    def test_schur_psd_equivalence_randoms(self):
        # random symmetric S with S22 strictly PD: full PSD verdict matches
        # (S22 psd) and (complement psd)
        rng = np.random.default_rng(11)
        for _ in range(100):
            side = int(rng.integers(2, 7))
            split = int(rng.integers(1, side))
            G = rng.normal(size=(side, side))
            S = G @ G.T - rng.uniform(0, 0.5) * np.eye(side)
            S[split:, split:] += (0.2 + 0.01) * np.eye(side - split) - S[split:, split:].min() * 0
            # force S22 strictly PD
            G2 = rng.normal(size=(side - split, side - split))
            S[split:, split:] = G2 @ G2.T + 0.1 * np.eye(side - split)
            S = 0.5 * (S + S.T)
            full = is_psd(S, 1e-9)
            comp = schur_complement(S, split)
            parts = is_psd(S[split:, split:], 1e-9) and is_psd(comp, 1e-9)
            assert full == parts


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(2)) == pytest.approx(1.0)

    def test_angular_vertex_one_complex_pair(self):
        Acl = A1 + B_ANG @ K_REF_ANG
        # complex pair: modulus is sqrt(det)
        det = Acl[0, 0] * Acl[1, 1] - Acl[0, 1] * Acl[1, 0]
        t = Acl[0, 0] + Acl[1, 1]
        assert t * t / 4.0 - det < 0
        oracle = np.sqrt(det)
        assert spectral_radius(Acl) == pytest.approx(oracle, abs=1e-12)
        assert oracle == pytest.approx(0.8610, abs=1e-3)

    def test_angular_vertex_two_real_pair(self):
        Acl = A2 + B_ANG @ K_REF_ANG
        eigs = quad_eigs(Acl)
        assert eigs is not None
        oracle = np.abs(eigs).max()
        assert spectral_radius(Acl) == pytest.approx(oracle, abs=1e-12)
        assert oracle == pytest.approx(0.9595, abs=1e-3)

    def test_scaling_homogeneity(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            A = rng.normal(size=(4, 4))
            c = rng.normal()
            assert spectral_radius(c * A) == pytest.approx(
                abs(c) * spectral_radius(A), abs=1e-10, rel=1e-10
            )


class TestEigReport:
    def test_symmetric_path(self):
        rep = eig_report(np.diag([3.0, -1.0]))
        assert rep.symmetric
        assert rep.min_eig == -1.0
        assert rep.spectral_radius == 3.0
        assert np.all(np.diff(rep.eigenvalues) >= 0)

    def test_general_path(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])  # rotation: eigs +-i
        rep = eig_report(A)
        assert not rep.symmetric
        assert rep.spectral_radius == pytest.approx(1.0)

    def test_min_eig_helper(self):
        assert min_eig(np.diag([2.0, -0.5])) == pytest.approx(-0.5)
