import math
from fractions import Fraction

import numpy as np
import pytest

from sde_smallnoise import (
    MissingDerivative,
    MultiIndex,
    PolynomialScalarField,
    VectorField,
    MatrixField,
    FiniteDifferenceScalarField,
    constant_matrix_field,
    componentwise_linear_matrix_field,
    count_partitions,
    diffusion_order_term,
    drift_order_term,
    enumerate_partitions,
    multi_indices_of_order,
    taylor_polynomial,
    taylor_remainder_constant,
)
from sde_smallnoise.oracles import order_term_series_oracle


def frac_vec(*vals):
    return np.array([Fraction(v) for v in vals], dtype=object)


def rand_fraction(rng, num=4, den=3):
    return Fraction(int(rng.integers(-num, num + 1)), int(rng.integers(1, den + 1)))


def random_poly(rng, d, n_terms=3, max_exp=2):
    terms = {}
    for _ in range(n_terms):
        alpha = tuple(int(a) for a in rng.integers(0, max_exp + 1, size=d))
        terms[alpha] = rand_fraction(rng)
    return PolynomialScalarField(d, terms)


class TestMultiIndex:
    def test_semantics(self):
        a = MultiIndex((2, 0, 3))
        assert a.length() == 5
        assert a.factorial() == math.factorial(2) * math.factorial(3)
        x = np.array([2.0, 5.0, 1.0])
        assert a.power(x) == pytest.approx(4.0)

    def test_zero_index_power_is_one(self):
        a = MultiIndex((0, 0))
        assert a.power(np.array([3.0, 4.0])) == pytest.approx(1.0)
        assert a.factorial() == 1
        assert a.length() == 0


class TestEnumeration:
    def test_k0_single_empty_partition(self):
        parts = enumerate_partitions(0, 3, 2, 0)
        assert len(parts) == 1
        assert parts[0].weight() == 1
        assert parts[0].outer_index().entries == (0, 0)

    def test_k1_d2_two_partitions(self):
        parts = enumerate_partitions(1, 3, 2, 0)
        assert len(parts) == 2
        outers = sorted(p.outer_index().entries for p in parts)
        assert outers == [(0, 1), (1, 0)]

    def test_offset_count_vs_bruteforce(self):
        # independent enumeration: exponent tuples (j0, g1, g2, g3) with
        # j0 + 1*g1 + 2*g2 + 3*g3 == 3, j0 <= 2
        brute = 0
        for j0 in range(3):
            for g1 in range(4):
                for g2 in range(2):
                    for g3 in range(2):
                        if j0 + g1 + 2 * g2 + 3 * g3 == 3:
                            brute += 1
        parts = enumerate_partitions(3, 3, 1, 2)
        assert len(parts) == brute
        assert count_partitions(3, 3, 1, 2) == brute

    def test_deterministic_order(self):
        a = enumerate_partitions(4, 4, 2, 1)
        b = enumerate_partitions(4, 4, 2, 1)
        assert a == b
        keys = [(p.j_offset, tuple(x for row in p.gamma for x in row)) for p in a]
        assert keys == sorted(keys)

    def test_constraint_holds(self):
        for p in enumerate_partitions(5, 4, 2, 2):
            total = p.j_offset + sum(
                j * g for j, row in enumerate(p.gamma, start=1) for g in row
            )
            assert total == 5

    def test_counts_match_enumeration(self):
        for k in range(6):
            for d in (1, 2, 3):
                assert count_partitions(k, 5, d, 2) == len(
                    enumerate_partitions(k, 5, d, 2)
                )


class TestDriftOrderTerm:
    def test_order_zero_is_plain_evaluation(self):
        rng = np.random.default_rng(0)
        f = VectorField([random_poly(rng, 2), random_poly(rng, 2)])
        u0 = frac_vec(1, -2)
        got = drift_order_term(0, f, [u0])
        assert np.all(got == f.value(u0))

    def test_square_example(self):
        f = VectorField([PolynomialScalarField(1, {(2,): 1})])
        u = [frac_vec(1), frac_vec(2), frac_vec(3)]
        assert drift_order_term(2, f, u)[0] == 10

    def test_bilinear_k1(self):
        # f(x) = x1 x2 at u0=(1,1): order-1 term is u_{1,1} + u_{1,2}
        f = VectorField([PolynomialScalarField(2, {(1, 1): 1})])
        a, b = Fraction(5, 3), Fraction(-7, 2)
        got = drift_order_term(1, f, [frac_vec(1, 1), np.array([a, b], dtype=object)])
        assert got[0] == a + b

    def test_matches_series_oracle_exactly(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            d = int(rng.integers(1, 4))
            N = int(rng.integers(1, 6))
            k = int(rng.integers(0, 6))
            f = VectorField([random_poly(rng, d) for _ in range(d)])
            u = [
                np.array([rand_fraction(rng, 2, 2) for _ in range(d)], dtype=object)
                for _ in range(N + 1)
            ]
            got = drift_order_term(k, f, u)
            want = order_term_series_oracle(f, u, k)
            assert all(a == b for a, b in zip(np.ravel(got), np.ravel(want)))

    def test_partition_completeness_truncation(self):
        # summed through order K the series reproduces f(u(eps)) up to O(eps^{K+1})
        rng = np.random.default_rng(3)
        d, K = 2, 3
        f = VectorField([random_poly(rng, d) for _ in range(d)])
        u = [rng.normal(size=d) for _ in range(K + 1)]
        terms = [np.asarray(drift_order_term(k, f, u), dtype=float) for k in range(K + 1)]
        ref_eps = 0.5
        u_ref = sum(ref_eps**j * uj for j, uj in enumerate(u))
        tail_ref = np.linalg.norm(
            f.value(u_ref) - sum(ref_eps**k * t for k, t in enumerate(terms))
        )
        const = tail_ref / ref_eps ** (K + 1)
        for eps in (0.3, 0.2, 0.1, 0.05, 0.02):
            u_eps = sum(eps**j * uj for j, uj in enumerate(u))
            diff = np.linalg.norm(
                f.value(u_eps) - sum(eps**k * t for k, t in enumerate(terms))
            )
            assert diff <= 3.0 * const * eps ** (K + 1) + 1e-12

    def test_affine_in_top_coefficient(self):
        rng = np.random.default_rng(11)
        d, k = 2, 3
        f = VectorField([random_poly(rng, d) for _ in range(d)])
        u = [rng.normal(size=d) for _ in range(k)]
        u_k = rng.normal(size=d)
        without = np.asarray(drift_order_term(k, f, u), dtype=float)
        full = np.asarray(drift_order_term(k, f, u + [u_k]), dtype=float)
        jac = f.jacobian(np.asarray(u[0]))
        assert np.allclose(full - without, jac @ u_k, atol=1e-12)

    def test_drift_family_offsets(self):
        # with a drift family the order term picks up beta_j(u_0) contributions
        f0 = VectorField([PolynomialScalarField(1, {(1,): Fraction(2)})])
        f1 = VectorField([PolynomialScalarField(1, {(0,): Fraction(7)})])
        u = [frac_vec(3), frac_vec(5)]
        got = drift_order_term(1, [f0, f1], u)
        # 2*u_{1} + 7
        assert got[0] == Fraction(17)


class TestDiffusionOrderTerm:
    def test_order_zero(self):
        sig0 = componentwise_linear_matrix_field([[2.0]])
        got = diffusion_order_term(0, [sig0], [np.array([3.0])])
        assert got[0, 0] == pytest.approx(6.0)

    def test_order_one_linear(self):
        # sigma_0 = Pi x, sigma_1 = lam x: [sigma]_1 = Pi w + lam c
        Pi, lam, c, w = 2.0, 5.0, 3.0, 7.0
        fam = [
            componentwise_linear_matrix_field([[Pi]]),
            componentwise_linear_matrix_field([[lam]]),
        ]
        got = diffusion_order_term(1, fam, [np.array([c]), np.array([w])])
        assert got[0, 0] == pytest.approx(Pi * w + lam * c)

    def test_scalar_family_example(self):
        # sigma_0 = x^2, sigma_1 = x, sigma_2 = 1, u = 1 + 2e + 3e^2:
        # coefficient of e^2 in u(e)^2 + e u(e) + e^2 equals 10 + 2 + 1
        fam = [
            MatrixField([[PolynomialScalarField(1, {(2,): 1})]]),
            MatrixField([[PolynomialScalarField(1, {(1,): 1})]]),
            constant_matrix_field([[1.0]]),
        ]
        u = [frac_vec(1), frac_vec(2), frac_vec(3)]
        got = diffusion_order_term(2, fam, u)
        assert got[0, 0] == 13

    def test_matches_series_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            d = int(rng.integers(1, 3))
            fam = [
                MatrixField(
                    [[random_poly(rng, d, n_terms=2) for _ in range(d)] for _ in range(d)]
                )
                for _ in range(3)
            ]
            u = [
                np.array([rand_fraction(rng, 2, 2) for _ in range(d)], dtype=object)
                for _ in range(4)
            ]
            for k in range(5):
                got = diffusion_order_term(k, fam, u)
                want = order_term_series_oracle(fam, u, k)
                assert all(a == b for a, b in zip(np.ravel(got), np.ravel(want)))


class TestTaylorRemainder:
    def test_quadratic_p0(self):
        f = PolynomialScalarField(1, {(2,): 1})
        b = taylor_remainder_constant(f, np.array([0.0]), np.array([1.0]), 0)
        assert b.constant == pytest.approx(1.0, abs=1e-12)
        assert b.bound(np.array([1.0]), np.array([0.0])) == pytest.approx(1.0, abs=1e-12)
        # |f(1) - f(0)| = 1 <= bound
        assert 1.0 <= b.bound(np.array([1.0]), np.array([0.0])) + 1e-12

    def test_cubic_p1(self):
        # C_1 = (p+1)/alpha! * int_0^1 (1-s) |6 s| ds = 1, and the remainder
        # |f(1) - T_1(1)| = 1 meets the bound with equality
        f = PolynomialScalarField(1, {(3,): 1})
        b = taylor_remainder_constant(f, np.array([0.0]), np.array([1.0]), 1)
        assert b.constant == pytest.approx(1.0, abs=1e-10)
        rem = abs(1.0 - taylor_polynomial(f, np.array([0.0]), 1, np.array([1.0])))
        assert rem <= b.bound(np.array([1.0]), np.array([0.0])) * (1 + 1e-9) + 1e-12

    def test_linear_vanishes(self):
        f = PolynomialScalarField(2, {(1, 0): 2.0, (0, 1): -1.0, (0, 0): 4.0})
        for p in (1, 2, 3):
            b = taylor_remainder_constant(f, np.zeros(2), np.ones(2), p)
            assert b.constant == 0.0

    def test_bound_validity_random_points(self):
        rng = np.random.default_rng(5)
        fields = [
            PolynomialScalarField(1, {(4,): 0.5, (2,): -1.0, (0,): 2.0}),
            PolynomialScalarField(2, {(2, 1): 1.0, (1, 1): -0.5, (0, 2): 0.25}),
            FiniteDifferenceScalarField(lambda x: np.sin(x[..., 0]), 1),
        ]
        for f in fields:
            for _ in range(30):
                x0 = rng.normal(size=f.dim)
                x = x0 + 0.5 * rng.normal(size=f.dim)
                for p in (0, 1, 2):
                    b = taylor_remainder_constant(f, x0, x, p)
                    rem = abs(
                        float(np.asarray(f.value(x)))
                        - float(taylor_polynomial(f, x0, p, x))
                    )
                    # slack covers quadrature of |D^a f| kinks and FD noise
                    assert rem <= b.bound(x, x0) * (1 + 5e-4) + 1e-9

    def test_missing_derivative_raises(self):
        f = FiniteDifferenceScalarField(lambda x: np.sin(x[..., 0]), 1, max_order=1)
        with pytest.raises(MissingDerivative):
            f.derivative((2,), np.array([0.0]))


def test_multi_indices_of_order():
    idx = multi_indices_of_order(3, 2)
    assert len(idx) == 6
    assert all(sum(a) == 2 for a in idx)
    assert idx == sorted(idx)
