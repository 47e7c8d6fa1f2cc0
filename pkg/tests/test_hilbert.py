import numpy as np
import pytest

from spinexchange.hilbert import (HilbertSpace, annihilation, assert_density_matrix,
                                  embed, hermitian_eigenvalues, ketbra, number_operator,
                                  partial_trace_cavity, tensor_product)


def random_density(rng, dim):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


class TestAnnihilation:
    def test_single_excitation_ladder(self):
        assert np.array_equal(annihilation(1), np.array([[0, 1], [0, 0]], dtype=complex))

    def test_sqrt_n_rule(self):
        c = annihilation(2)
        expected = np.zeros((3, 3), dtype=complex)
        expected[0, 1] = 1.0
        expected[1, 2] = np.sqrt(2)
        assert np.allclose(c, expected)

    def test_number_operator_diagonal(self):
        for n_max in (1, 2, 4):
            n_op = number_operator(n_max)
            assert np.allclose(np.diag(n_op).real, np.arange(n_max + 1))
            assert np.allclose(n_op, np.diag(np.diag(n_op)))

    def test_rejects_bad_truncation(self):
        with pytest.raises(ValueError):
            annihilation(0)


class TestTensorProduct:
    def test_identity_case(self):
        eye = tensor_product([np.eye(3), np.eye(3), np.eye(2)])
        assert np.array_equal(eye, np.eye(18, dtype=complex))

    def test_flip_operator_nonzeros_by_hand(self):
        # (|0><1|)_A x I_3 x I_2 couples column (1, b, n) to row (0, b, n):
        # flat indices (0*3+b)*2+n <- (1*3+b)*2+n for b in 0..2, n in 0..1.
        op = tensor_product([ketbra(0, 1), np.eye(3), np.eye(2)])
        expected_positions = {((0 * 3 + b) * 2 + n, (1 * 3 + b) * 2 + n)
                              for b in range(3) for n in range(2)}
        nonzero = set(zip(*np.nonzero(op)))
        assert nonzero == expected_positions
        assert all(op[pos] == 1.0 for pos in expected_positions)
        assert len(expected_positions) == 6

    def test_trace_multiplicative(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
            b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
            full = tensor_product([a, b])
            assert np.isclose(np.trace(full), np.trace(a) * np.trace(b))

    def test_associative_in_fixed_layout(self):
        rng = np.random.default_rng(11)
        a, b, c = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
                   for d in (3, 3, 4))
        left = np.kron(np.kron(a, b), c)
        right = np.kron(a, np.kron(b, c))
        assert np.allclose(left, right)
        assert np.allclose(tensor_product([a, b, c]), left)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            tensor_product([np.zeros((2, 3))])


class TestEmbed:
    def setup_method(self):
        self.space = HilbertSpace(n_max=2)

    def test_identity_embeds_to_identity(self):
        assert np.array_equal(embed(np.eye(3), "A", self.space),
                              np.eye(self.space.dim, dtype=complex))

    def test_disjoint_slots_commute(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        y = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        xa = embed(x, "A", self.space)
        yb = embed(y, "B", self.space)
        assert np.allclose(xa @ yb, yb @ xa)

    def test_trace_scaling(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        embedded = embed(x, "A", self.space)
        assert np.isclose(np.trace(embedded), np.trace(x) * 3 * self.space.n_cav)

    def test_preserves_hermiticity_and_spectrum_bounds(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        x = x + x.conj().T
        full = embed(x, "B", self.space)
        assert np.allclose(full, full.conj().T)
        local = np.linalg.eigvalsh(x)
        lifted = np.linalg.eigvalsh(full)
        assert lifted.min() >= local.min() - 1e-12
        assert lifted.max() <= local.max() + 1e-12

    def test_slot_dimension_mismatch(self):
        with pytest.raises(ValueError):
            embed(np.eye(4), "A", self.space)
        with pytest.raises(ValueError):
            embed(np.eye(2), "cav", self.space)  # cav dim is n_max + 1 = 3 here


class TestPartialTraceCavity:
    def test_pure_cavity_factor(self):
        rng = np.random.default_rng(13)
        space = HilbertSpace(n_max=1)
        sigma = random_density(rng, 9)
        cav = np.zeros((2, 2), dtype=complex)
        cav[0, 0] = 1.0
        rho = np.kron(sigma, cav)
        assert np.allclose(partial_trace_cavity(rho, space), sigma)

    def test_mixed_cavity_block_sum(self):
        # tr_cav(sigma x diag(0.7, 0.3)) = 0.7 sigma + 0.3 sigma = sigma
        rng = np.random.default_rng(17)
        space = HilbertSpace(n_max=1)
        sigma = random_density(rng, 9)
        rho = np.kron(sigma, np.diag([0.7, 0.3]).astype(complex))
        assert np.allclose(partial_trace_cavity(rho, space), sigma)

    def test_linear_and_trace_preserving(self):
        rng = np.random.default_rng(19)
        space = HilbertSpace(n_max=2)
        d = space.dim
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        b = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        lhs = partial_trace_cavity(2.0 * a - 0.5j * b, space)
        rhs = 2.0 * partial_trace_cavity(a, space) - 0.5j * partial_trace_cavity(b, space)
        assert np.allclose(lhs, rhs)
        assert np.isclose(np.trace(partial_trace_cavity(a, space)), np.trace(a))

    def test_layout_mismatch(self):
        with pytest.raises(ValueError):
            partial_trace_cavity(np.eye(10), HilbertSpace(n_max=2))


class TestHermitianEigenvalues:
    def test_sorted_diagonal(self):
        assert np.allclose(hermitian_eigenvalues(np.diag([3.0, 1.0, 2.0])), [1, 2, 3])

    def test_pauli_x_spectrum(self):
        assert np.allclose(hermitian_eigenvalues(np.array([[0, 1], [1, 0]])), [-1, 1])

    def test_trace_identity_random(self):
        rng = np.random.default_rng(23)
        m = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        m = m + m.conj().T
        values = hermitian_eigenvalues(m)
        assert abs(values.sum() - np.trace(m).real) < 1e-8
        assert np.all(np.diff(values) >= 0)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            hermitian_eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestDensityChecks:
    def test_random_density_matrices_valid(self):
        rng = np.random.default_rng(29)
        space = HilbertSpace(n_max=2)
        for _ in range(5):
            rho = random_density(rng, space.dim)
            assert_density_matrix(rho)
            values = hermitian_eigenvalues(rho)
            assert values.min() >= -1e-8
            assert values.max() <= 1 + 1e-8
            assert abs(values.sum() - 1.0) < 1e-8

    def test_rejects_defective_states(self):
        with pytest.raises(ValueError):
            assert_density_matrix(np.diag([0.5, 0.6]).astype(complex))  # trace 1.1
        with pytest.raises(ValueError):
            assert_density_matrix(np.diag([1.5, -0.5]).astype(complex))  # negative eigenvalue
        bad = np.diag([0.5, 0.5]).astype(complex)
        bad[0, 1] = 1e-6  # asymmetric beyond tolerance
        with pytest.raises(ValueError):
            assert_density_matrix(bad)


class TestHilbertSpace:
    def test_index_arithmetic(self):
        space = HilbertSpace(n_max=2)
        assert space.dim == 27
        assert space.index(0, 0, 0) == 0
        assert space.index(0, 1, 0) == 3
        assert space.index(2, 2, 2) == 26
        with pytest.raises(ValueError):
            space.index(3, 0, 0)

    def test_basis_state(self):
        space = HilbertSpace(n_max=1)
        rho = space.basis_state(1, 0, 1)
        assert np.trace(rho) == 1.0
        assert rho[space.index(1, 0, 1), space.index(1, 0, 1)] == 1.0
        assert np.count_nonzero(rho) == 1
