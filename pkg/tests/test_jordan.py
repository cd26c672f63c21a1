"""Jordan-structured test matrices and the exact matrix-function oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chebmatfun.jordan import (DerivativeStack, DerivativeUnavailableError, JordanBlock, JordanSpec,
                               build_jordan_matrix, derivative_stack, f_of_jordan_block,
                               f_of_matrix_via_jordan, poly_on_jordan_block_check, random_orthogonal,
                               taylor_matrix_function)
from chebmatfun.matrix import clenshaw_matrix, direct_sum_matrix
from chebmatfun.scalar import ScalarFunction, cheb_coeffs, erf_filter_function, f1, f2, f3, f4


def _random_spec(rng, max_order=9, max_block=4, radius=0.9, seed_similarity=True):
    blocks, order = [], 0
    while True:
        size = int(rng.integers(1, max_block + 1))
        if order + size > max_order:
            break
        lam = float(rng.uniform(-radius, radius))
        blocks.append(JordanBlock(lam, size, float(rng.choice([0.5, 1.0]))))
        order += size
    if not blocks:
        blocks = [JordanBlock(0.3, 2)]
    sim = ("orthogonal", int(rng.integers(1 << 30))) if seed_similarity else None
    return JordanSpec(blocks, sim)


class TestBuild:

    def test_single_block(self):
        A = build_jordan_matrix(JordanSpec([JordanBlock(0.7, 3, 1.0)]))
        np.testing.assert_array_equal(A, [[0.7, 1, 0], [0, 0.7, 1], [0, 0, 0.7]])

    def test_half_offdiag_block(self):
        A = build_jordan_matrix(JordanSpec([JordanBlock(0.5, 10, 0.5)]))
        np.testing.assert_array_equal(A, 0.5 * np.eye(10) + 0.5 * np.eye(10, k=1))

    def test_replication(self):
        spec = JordanSpec([JordanBlock(0.5, 1)] * 5)
        twice = spec.replicated(2)
        assert twice.order == 10
        np.testing.assert_array_equal(build_jordan_matrix(twice), 0.5 * np.eye(10))
        with pytest.raises(ValueError):
            JordanSpec([JordanBlock(0.5, 2)], ("orthogonal", 1)).replicated()

    def test_similarity(self):
        spec = JordanSpec([JordanBlock(0.2, 2), JordanBlock(-0.4, 1)], ("orthogonal", 3))
        Z = spec.similarity_matrix()
        np.testing.assert_allclose(Z.T @ Z, np.eye(3), atol=1e-14)
        A = build_jordan_matrix(spec)
        np.testing.assert_allclose(Z @ A @ Z.T, build_jordan_matrix(JordanSpec(spec.blocks)), atol=1e-14)

    def test_singular_similarity(self):
        with pytest.raises(ValueError):
            build_jordan_matrix(JordanSpec([JordanBlock(0.1, 2)], np.ones((2, 2))))

    def test_similarity_shape(self):
        with pytest.raises(ValueError):
            build_jordan_matrix(JordanSpec([JordanBlock(0.1, 2)], np.eye(3)))

    def test_properties(self):
        spec = JordanSpec([JordanBlock(0.95, 1), JordanBlock(0.5, 3), JordanBlock(-0.99, 2)])
        assert spec.order == 6 and spec.largest_block == 3 and not spec.diagonalizable
        assert not spec.is_delta_condense(0.1)
        assert JordanSpec([JordanBlock(0.95, 1), JordanBlock(0.5, 3)]).is_delta_condense(0.1)
        assert JordanSpec([JordanBlock(0.2, 1)] * 3).diagonalizable

    def test_invalid(self):
        with pytest.raises(ValueError):
            JordanBlock(0.1, 0)
        with pytest.raises(ValueError):
            JordanSpec([])

    @pytest.mark.parametrize("sim", [None, ("orthogonal", 11), np.diag([1.0, 2.0, 3.0])])
    def test_json_round_trip(self, sim):
        spec = JordanSpec([JordanBlock(0.7, 2, 0.5), JordanBlock(-0.1, 1)], sim)
        back = JordanSpec.from_json(spec.to_json())
        np.testing.assert_array_equal(build_jordan_matrix(back), build_jordan_matrix(spec))

    def test_json_forms(self):
        assert '"orthogonal-random(4)"' in JordanSpec([(0.1, 1)], ("orthogonal", 4)).to_json()
        assert '"none"' in JordanSpec([(0.1, 1)]).to_json()
        with pytest.raises(ValueError):
            JordanSpec.from_json('{"blocks": [{"lambda": 0.1, "size": 1}], "similarity": "random"}')


class TestJordanBlockFunction:

    def test_square(self):
        lam = 0.3
        sq = ScalarFunction.from_polynomial([0, 0, 1])
        F = f_of_jordan_block(derivative_stack(sq, lam, 2), 2)
        np.testing.assert_allclose(F, [[lam ** 2, 2 * lam], [0, lam ** 2]], atol=1e-15)

    def test_f3_block(self):
        F = f_of_jordan_block(derivative_stack(f3, 0.7, 2), 2)
        v = 1 / (0.49 + 0.25)
        np.testing.assert_allclose(F, [[v, -1.4 / 0.74 ** 2], [0, v]], rtol=1e-14)

    def test_cube_with_half_offdiag(self):
        cube = ScalarFunction.from_polynomial([0, 0, 0, 1])
        spec = JordanSpec([JordanBlock(0.5, 3, 0.5)])
        A = build_jordan_matrix(spec)
        np.testing.assert_allclose(f_of_matrix_via_jordan(cube, spec), A @ A @ A, atol=1e-14)

    def test_too_few_derivatives(self):
        with pytest.raises(ValueError):
            f_of_jordan_block(DerivativeStack(0.1, (1.0,)), 2)

    def test_f4_top_right(self):
        F = f_of_matrix_via_jordan(f4, JordanSpec([JordanBlock(0.7, 3)]))
        assert F[0, 2] == pytest.approx(3.5 * 2.5 * 0.7 ** 1.5 / 2, rel=1e-14)

    def test_f3_order_ten_block(self):
        # compare against the truncated Taylor series around 0.5 via nilpotent powers
        spec = JordanSpec([JordanBlock(0.5, 10, 0.5)])
        F = f_of_matrix_via_jordan(f3, spec)
        Nil = 0.5 * np.eye(10, k=1)
        # 1/(x^2+1/4) = Im[1/(x - i/2)] / (1/2) and (lam I + N - i/2)^-1 is exact
        R = np.linalg.inv((0.5 - 0.5j) * np.eye(10) + Nil)
        np.testing.assert_allclose(F, R.imag / 0.5, atol=1e-12)


class TestOracle:

    def test_identity_lift(self, rng):
        spec = _random_spec(rng)
        x = ScalarFunction.from_polynomial([0, 1])
        np.testing.assert_allclose(f_of_matrix_via_jordan(x, spec), build_jordan_matrix(spec), atol=1e-14)

    def test_polynomials_match_horner(self, rng):
        for _ in range(10):
            spec = _random_spec(rng)
            a = rng.uniform(-1, 1, int(rng.integers(1, 14)))
            A = build_jordan_matrix(spec)
            H = np.zeros_like(A)
            for coef in a[::-1]:
                H = H @ A + coef * np.eye(A.shape[0])
            F = f_of_matrix_via_jordan(ScalarFunction.from_polynomial(a), spec)
            assert np.max(np.abs(F - H)) < 1e-10

    def test_diagonalizable_reduction(self, rng):
        for _ in range(10):
            lam = rng.uniform(-0.9, 0.9, 6)
            spec = JordanSpec([JordanBlock(v, 1) for v in lam], ("orthogonal", int(rng.integers(99))))
            Z = spec.similarity_matrix()
            expected = np.linalg.solve(Z, np.diag(f3(lam)) @ Z)
            np.testing.assert_allclose(f_of_matrix_via_jordan(f3, spec), expected, atol=1e-12)

    def test_convergence_target(self, rng):
        for _ in range(5):
            spec = _random_spec(rng)
            F = f_of_matrix_via_jordan(f3, spec)
            A = build_jordan_matrix(spec)
            c = cheb_coeffs(f3, 250)
            errs = [np.linalg.norm(clenshaw_matrix(c.truncate(N), A) - F, 2) for N in (25, 50, 100, 150, 250)]
            assert errs[0] > errs[1] > errs[2]
            # past the truncation regime rounding in alpha_n is amplified by ||T_n(J)||,
            # which grows like n^(2(m-1)), so the plateau creeps up slowly with N
            assert max(errs[2:]) < 1e-9

    def test_taylor_utility_agrees(self):
        # exp has all derivatives equal to one at zero
        spec = JordanSpec([JordanBlock(0.2, 3), JordanBlock(-0.3, 1)], ("orthogonal", 5))
        exp = ScalarFunction("exp", np.exp, lambda x, j: math.exp(x))
        A = build_jordan_matrix(spec)
        np.testing.assert_allclose(taylor_matrix_function([1.0] * 30, A), f_of_matrix_via_jordan(exp, spec),
                                   atol=1e-13)


class TestDerivativeProvisioning:

    @pytest.mark.parametrize("f", [f1, f2, f4])
    def test_refuses_kink(self, f):
        with pytest.raises(DerivativeUnavailableError, match="0.0"):
            f_of_matrix_via_jordan(f, JordanSpec([JordanBlock(0.0, 2)]))

    def test_refuses_filter_center(self):
        g = erf_filter_function(0.5, 0.2, 0.1)
        with pytest.raises(DerivativeUnavailableError):
            derivative_stack(g, 0.5, 3)

    def test_semisimple_kink_is_fine(self):
        F = f_of_matrix_via_jordan(f2, JordanSpec([JordanBlock(0.0, 1), JordanBlock(0.25, 1)]))
        np.testing.assert_allclose(np.diag(F), [0.0, 0.5])

    def test_finite_difference_fallback(self):
        d = derivative_stack(np.exp, 0.3, 4)
        assert d.source == "finite-difference"
        np.testing.assert_allclose(d.values, [math.exp(0.3)] * 4, rtol=1e-3)

    def test_finite_difference_refusal(self):
        with pytest.raises(DerivativeUnavailableError):
            derivative_stack(np.exp, 0.3, 2, allow_finite_difference=False)

    def test_closed_form_source(self):
        assert derivative_stack(f3, 0.2, 5).source == "closed-form"


class TestBinomialCheck:

    def test_t5(self):
        mono = np.polynomial.chebyshev.cheb2poly([0, 0, 0, 0, 0, 1])
        assert poly_on_jordan_block_check(mono, 0.7, 3)

    @pytest.mark.parametrize("lam,k", [(0.0, 1), (0.9, 4), (-0.5, 6)])
    def test_constant(self, lam, k):
        assert poly_on_jordan_block_check([1.0], lam, k)

    def test_identity_polynomial(self):
        assert poly_on_jordan_block_check([0.0, 1.0], -0.3, 2)

    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=10), st.floats(-1, 1), st.integers(1, 5))
    def test_random_polynomials(self, a, lam, k):
        assert poly_on_jordan_block_check(a, lam, k)


def test_random_orthogonal_deterministic():
    np.testing.assert_array_equal(random_orthogonal(5, 9), random_orthogonal(5, 9))
