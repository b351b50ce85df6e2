import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taskgemm import linalg
from taskgemm.errors import PreconditionError
from taskgemm.linalg import ComplexMatrix, frobenius_norm, gemm, gemm_flops, gemm_tiled, hermitian_eigenvalues
from taskgemm.oracles import charpoly_eigenvalues, frobenius_by_summation, naive_gemm


def rel_err(got, want):
    return np.max(np.abs(got - want)) / np.max(np.abs(want))


def random_hermitian(n, rng):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return ComplexMatrix((z + z.conj().T) / 2)


class TestComplexMatrix:
    def test_column_major_data(self):
        m = ComplexMatrix([[1, 2, 3], [4, 5, 6]])
        assert m.rows == 2 and m.cols == 3
        assert list(m.data) == [1, 4, 2, 5, 3, 6]

    def test_from_data_roundtrip(self):
        m = ComplexMatrix.from_data(2, 3, [1, 4, 2, 5, 3, 6])
        assert m == ComplexMatrix([[1, 2, 3], [4, 5, 6]])

    def test_from_data_length_mismatch(self):
        with pytest.raises(PreconditionError):
            ComplexMatrix.from_data(2, 2, [1, 2, 3])

    def test_empty_rejected(self):
        with pytest.raises(PreconditionError):
            ComplexMatrix(np.zeros((0, 3)))

    def test_immutable(self):
        m = ComplexMatrix.identity(2)
        with pytest.raises(ValueError):
            m.array[0, 0] = 5


class TestGemm:
    def test_identity(self, rng):
        B = ComplexMatrix.random(3, 2, rng)
        out = gemm(1, ComplexMatrix.identity(3), B, 0, ComplexMatrix.zeros(3, 2))
        assert out == B

    def test_alpha_zero_keeps_c(self, rng):
        A, B, C = (ComplexMatrix.random(*s, rng) for s in [(4, 5), (5, 3), (4, 3)])
        assert gemm(0, A, B, 1, C) == C

    def test_matches_triple_loop(self, rng):
        A = ComplexMatrix.random(2, 3, rng)
        B = ComplexMatrix.random(3, 2, rng)
        got = gemm(1, A, B, 0, ComplexMatrix.zeros(2, 2))
        want = naive_gemm(1, A.array, B.array, 0, np.zeros((2, 2)))
        assert rel_err(got.array, want) <= 1e-13

    def test_alpha_beta_complex(self, rng):
        A, B, C = (ComplexMatrix.random(*s, rng) for s in [(7, 4), (4, 9), (7, 9)])
        got = gemm(0.3 - 2j, A, B, -1 + 0.5j, C)
        want = naive_gemm(0.3 - 2j, A.array, B.array, -1 + 0.5j, C.array)
        assert rel_err(got.array, want) <= 1e-13

    def test_inputs_not_mutated(self, rng):
        A, B, C = (ComplexMatrix.random(*s, rng) for s in [(3, 3), (3, 3), (3, 3)])
        before = [x.array.copy() for x in (A, B, C)]
        gemm(1, A, B, 1, C)
        for x, b in zip((A, B, C), before):
            assert np.array_equal(x.array, b)

    @pytest.mark.parametrize(
        "shapes, pair",
        [
            (((2, 3), (4, 2), (2, 2)), "(A, B)"),
            (((2, 3), (3, 2), (3, 2)), "(C, A)"),
            (((2, 3), (3, 2), (2, 3)), "(C, B)"),
        ],
    )
    def test_dimension_mismatch_names_pair(self, shapes, pair):
        A, B, C = (ComplexMatrix.zeros(*s) for s in shapes)
        with pytest.raises(PreconditionError, match=re.escape(pair)):
            gemm(1, A, B, 0, C)


class TestGemmTiled:
    def test_tile_1_vs_64_bitwise(self, rng):
        A, B, C = (ComplexMatrix.random(*s, rng) for s in [(50, 70), (70, 30), (50, 30)])
        assert gemm_tiled(1, A, B, 0, C, 1).identical(gemm_tiled(1, A, B, 0, C, 64))

    def test_large_tile_equals_untiled(self, rng):
        A, B, C = (ComplexMatrix.random(*s, rng) for s in [(9, 11), (11, 5), (9, 5)])
        assert gemm_tiled(2j, A, B, 1, C, 1000).identical(gemm(2j, A, B, 1, C))

    @pytest.mark.parametrize("tile", [1, 2, 3, 8, 17])
    def test_sweep_vs_oracle(self, rng, tile):
        for _ in range(5):
            m, n, k = rng.integers(1, 30, size=3)
            A, B, C = (ComplexMatrix.random(*s, rng) for s in [(m, k), (k, n), (m, n)])
            got = gemm_tiled(1 + 1j, A, B, 0.5, C, tile)
            want = naive_gemm(1 + 1j, A.array, B.array, 0.5, C.array)
            assert rel_err(got.array, want) <= 1e-13
            assert got.identical(gemm(1 + 1j, A, B, 0.5, C))

    def test_bad_tile(self):
        I = ComplexMatrix.identity(2)
        with pytest.raises(PreconditionError):
            gemm_tiled(1, I, I, 0, I, 0)

    def test_mismatch(self):
        with pytest.raises(PreconditionError):
            gemm_tiled(1, ComplexMatrix.zeros(2, 3), ComplexMatrix.zeros(2, 3), 0, ComplexMatrix.zeros(2, 3), 4)


def test_fault_injection_changes_result(rng):
    A, B, C = (ComplexMatrix.random(*s, rng) for s in [(3, 3), (3, 3), (3, 3)])
    clean = gemm(1, A, B, 0, C)
    with linalg.fault_injection():
        broken = gemm(1, A, B, 0, C)
    assert not broken.identical(clean)
    assert gemm(1, A, B, 0, C).identical(clean)


class TestEigenvalues:
    def test_diagonal(self):
        ev = hermitian_eigenvalues(ComplexMatrix(np.diag([3.0, 1.0, 2.0])))
        assert np.array_equal(ev, [1.0, 2.0, 3.0])

    def test_pauli_x(self):
        ev = hermitian_eigenvalues(ComplexMatrix([[0, 1], [1, 0]]))
        assert np.allclose(ev, [-1, 1], atol=1e-15)

    def test_random_5x5_vs_charpoly_bisection(self, rng):
        H = random_hermitian(5, rng)
        want = charpoly_eigenvalues(H.array)
        assert len(want) == 5
        assert np.max(np.abs(hermitian_eigenvalues(H) - want)) <= 1e-10

    def test_complex_phases(self):
        H = ComplexMatrix([[1, 1j], [-1j, 1]])
        assert np.allclose(hermitian_eigenvalues(H), [0, 2], atol=1e-14)

    def test_zero_matrix(self):
        assert np.array_equal(hermitian_eigenvalues(ComplexMatrix.zeros(3, 3)), np.zeros(3))

    def test_non_square(self):
        with pytest.raises(PreconditionError):
            hermitian_eigenvalues(ComplexMatrix.zeros(2, 3))

    def test_non_hermitian(self):
        with pytest.raises(PreconditionError, match="not Hermitian"):
            hermitian_eigenvalues(ComplexMatrix([[1, 2], [0, 1]]))

    def test_degenerate_spectrum(self):
        # identity rotated by a random unitary: all eigenvalues equal
        q, _ = np.linalg.qr(np.random.default_rng(5).standard_normal((6, 6)) + 0j)
        H = ComplexMatrix(q @ np.diag([2.0, 2, 2, -1, -1, 5]) @ q.conj().T)
        assert np.allclose(hermitian_eigenvalues(H), [-1, -1, 2, 2, 2, 5], atol=1e-12)


class TestNormsAndFlops:
    def test_frobenius_zeros(self):
        assert frobenius_norm(ComplexMatrix.zeros(4, 4)) == 0.0

    def test_frobenius_identity(self):
        assert frobenius_norm(ComplexMatrix.identity(4)) == 2.0

    def test_frobenius_vs_summation(self, rng):
        A = ComplexMatrix.random(3, 3, rng)
        want = frobenius_by_summation(A.array)
        assert abs(frobenius_norm(A) - want) <= 1e-14 * want

    @pytest.mark.parametrize(
        "dims, flops",
        [((1, 1, 1), 8), ((1024, 1024, 2048), 17_179_869_184), ((2, 3, 4), 192)],
    )
    def test_gemm_flops(self, dims, flops):
        assert gemm_flops(*dims) == flops

    def test_gemm_flops_rejects_zero(self):
        with pytest.raises(PreconditionError):
            gemm_flops(0, 1, 1)


dims = st.integers(1, 32)


@settings(max_examples=30, deadline=None)
@given(m=dims, k=dims, n=dims, p=dims, seed=st.integers(0, 2**32 - 1))
def test_associativity(m, k, n, p, seed):
    rng = np.random.default_rng(seed)
    A, B, C = (ComplexMatrix.random(*s, rng) for s in [(m, k), (k, n), (n, p)])
    left = gemm(1, gemm(1, A, B, 0, ComplexMatrix.zeros(m, n)), C, 0, ComplexMatrix.zeros(m, p))
    right = gemm(1, A, gemm(1, B, C, 0, ComplexMatrix.zeros(k, p)), 0, ComplexMatrix.zeros(m, p))
    scale = np.max(np.abs(left.array))
    ref = (A.array @ B.array) @ C.array
    assert np.max(np.abs(left.array - right.array)) <= 1e-12 * max(scale, np.max(np.abs(ref)))
    assert np.all(np.isfinite(left.array))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_eigenvalue_trace_and_frobenius_identities(n, seed):
    H = random_hermitian(n, np.random.default_rng(seed))
    ev = hermitian_eigenvalues(H)
    tr = float(np.trace(H.array).real)
    assert np.all(np.diff(ev) >= 0)
    assert abs(ev.sum() - tr) <= 1e-11 * max(abs(tr), frobenius_norm(H))
    fro2 = frobenius_norm(H) ** 2
    assert abs(np.sum(ev ** 2) - fro2) <= 1e-10 * fro2


@settings(max_examples=20, deadline=None)
@given(m=dims, n=dims, k=dims, tile=st.integers(1, 40), seed=st.integers(0, 2**32 - 1))
def test_tiling_is_bitwise_invariant(m, n, k, tile, seed):
    rng = np.random.default_rng(seed)
    A, B, C = (ComplexMatrix.random(*s, rng) for s in [(m, k), (k, n), (m, n)])
    alpha, beta = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    assert gemm_tiled(alpha, A, B, beta, C, tile).identical(gemm(alpha, A, B, beta, C))
