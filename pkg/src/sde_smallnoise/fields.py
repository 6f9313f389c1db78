"""Scalar, vector and matrix fields with derivative evaluators.

Two derivative suppliers are built in:

* :class:`PolynomialScalarField` stores a coefficient table keyed by exponent
  multi-index and differentiates symbolically.  Evaluation preserves the input
  number type, so feeding object arrays of ``fractions.Fraction`` gives exact
  rational arithmetic end to end (used by the brute-force oracles).
* :class:`FiniteDifferenceScalarField` wraps an arbitrary callable and falls
  back to nested central differences, with step
  ``machine_eps**(1/(order+2)) * (1 + ||x||)`` (the cube root of machine
  epsilon for first-order differences).

All evaluators broadcast: ``x`` has shape ``(..., d)`` and values come back
with shape ``(...)`` for scalars, ``(..., m)`` for vector fields and
``(..., d, d)`` for matrix fields.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .errors import MissingDerivative

_EPS = float(np.finfo(float).eps)


def _monomial(x, alpha):
    """prod_i x_i**alpha_i over the last axis; None encodes the constant 1."""
    out = None
    for i, e in enumerate(alpha):
        if e:
            p = x[..., i] ** e
            out = p if out is None else out * p
    return out


class ScalarField:
    """Interface: a map R^d -> R with partial derivatives of any requested order.

    Subclasses implement ``value`` and ``derivative``; ``derivative_is_zero``
    is an optional pruning hint and may conservatively return False.
    """

    dim: int
    codomain_shape: tuple = ()

    def value(self, x):
        raise NotImplementedError

    def derivative(self, alpha, x):
        raise NotImplementedError

    def derivative_is_zero(self, alpha) -> bool:
        return False

    @property
    def is_zero(self) -> bool:
        return False


class PolynomialScalarField(ScalarField):
    """Polynomial with coefficient table {exponent multi-index: coefficient}.

    Coefficients may be ints, floats or Fractions.  Differentiation is exact
    (falling factorials on the exponents) and results are cached per
    derivative multi-index.
    """

    def __init__(self, dim, terms):
        self.dim = int(dim)
        cleaned = {}
        for alpha, c in dict(terms).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.dim:
                raise ValueError(f"exponent {alpha} does not match dimension {self.dim}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            if c != 0:
                cleaned[alpha] = cleaned.get(alpha, 0) + c
        self._terms = tuple(sorted((a, c) for a, c in cleaned.items() if c != 0))
        self._diff_cache = {}

    @property
    def terms(self):
        return dict(self._terms)

    @property
    def is_zero(self):
        return not self._terms

    def value(self, x):
        x = np.asarray(x)
        exact = x.dtype == object
        shape = x.shape[:-1]
        if exact:
            total = np.full(shape, Fraction(0), dtype=object)
        else:
            total = np.zeros(shape)
        for alpha, c in self._terms:
            coeff = c if exact else float(c)
            mono = _monomial(x, alpha)
            total = total + (coeff if mono is None else coeff * mono)
        return total

    def differentiate(self, alpha):
        """Return the polynomial D^alpha applied to this field."""
        alpha = tuple(int(a) for a in alpha)
        if alpha in self._diff_cache:
            return self._diff_cache[alpha]
        terms = {}
        for beta, c in self._terms:
            if any(b < a for b, a in zip(beta, alpha)):
                continue
            factor = 1
            for b, a in zip(beta, alpha):
                for j in range(a):
                    factor *= b - j
            terms[tuple(b - a for b, a in zip(beta, alpha))] = c * factor
        out = PolynomialScalarField(self.dim, terms)
        self._diff_cache[alpha] = out
        return out

    def derivative(self, alpha, x):
        return self.differentiate(alpha).value(x)

    def derivative_is_zero(self, alpha):
        return self.differentiate(alpha).is_zero

    def __repr__(self):
        return f"PolynomialScalarField(dim={self.dim}, terms={dict(self._terms)!r})"


class FiniteDifferenceScalarField(ScalarField):
    """Derivative supplier for a black-box callable, via central differences.

    ``func`` must accept arrays of shape (..., d) and return shape (...).
    ``max_order`` bounds the total derivative order this field will serve;
    beyond it :class:`MissingDerivative` is raised.  Accuracy degrades with
    order; orders beyond 4 are rarely usable in double precision.
    """

    def __init__(self, func, dim, max_order=None):
        self.func = func
        self.dim = int(dim)
        self.max_order = max_order

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.func(x))

    def derivative(self, alpha, x):
        alpha = tuple(int(a) for a in alpha)
        p = sum(alpha)
        if self.max_order is not None and p > self.max_order:
            raise MissingDerivative(
                f"finite-difference field limited to order {self.max_order}, got {alpha}"
            )
        x = np.asarray(x, dtype=float)
        if p == 0:
            return self.value(x)
        scale = 1.0 + np.linalg.norm(x, axis=-1, keepdims=True)
        h = _EPS ** (1.0 / (p + 2)) * scale
        return self._central(alpha, x, h)

    def _central(self, alpha, x, h):
        for i, a in enumerate(alpha):
            if a > 0:
                lower = alpha[:i] + (a - 1,) + alpha[i + 1 :]
                shift = np.zeros(x.shape[-1])
                shift[i] = 1.0
                xp = x + h * shift
                xm = x - h * shift
                hi = h[..., 0]
                return (self._central(lower, xp, h) - self._central(lower, xm, h)) / (2.0 * hi)
        return self.value(x)


class VectorField:
    """A stack of scalar component fields, R^dim -> R^len(components)."""

    def __init__(self, components):
        self.components = tuple(components)
        if not self.components:
            raise ValueError("need at least one component")
        self.dim = self.components[0].dim
        self.codomain_shape = (len(self.components),)

    def value(self, x):
        return np.stack([c.value(x) for c in self.components], axis=-1)

    def derivative(self, alpha, x):
        return np.stack([c.derivative(alpha, x) for c in self.components], axis=-1)

    def derivative_is_zero(self, alpha):
        return all(c.derivative_is_zero(alpha) for c in self.components)

    @property
    def is_zero(self):
        return all(c.is_zero for c in self.components)

    def jacobian(self, x):
        """(..., m, d) array of first partials d f_l / d x_i."""
        cols = []
        for i in range(self.dim):
            alpha = tuple(1 if j == i else 0 for j in range(self.dim))
            cols.append(self.derivative(alpha, x))
        return np.stack(cols, axis=-1)


class MatrixField:
    """A d x d grid of scalar entry fields, R^dim -> R^{d x d}."""

    def __init__(self, entries):
        self.entries = tuple(tuple(row) for row in entries)
        self.dim = self.entries[0][0].dim
        n_rows = len(self.entries)
        if any(len(row) != n_rows for row in self.entries):
            raise ValueError("matrix field must be square")
        self.shape = (n_rows, n_rows)
        self.codomain_shape = self.shape

    def value(self, x):
        rows = [np.stack([e.value(x) for e in row], axis=-1) for row in self.entries]
        return np.stack(rows, axis=-2)

    def derivative(self, alpha, x):
        rows = [np.stack([e.derivative(alpha, x) for e in row], axis=-1) for row in self.entries]
        return np.stack(rows, axis=-2)

    def derivative_is_zero(self, alpha):
        return all(e.derivative_is_zero(alpha) for row in self.entries for e in row)

    @property
    def is_zero(self):
        return all(e.is_zero for row in self.entries for e in row)

    def gradient(self, x):
        """(..., l, j, i) array of first partials d sigma_{l,j} / d x_i."""
        slabs = []
        for i in range(self.dim):
            alpha = tuple(1 if m == i else 0 for m in range(self.dim))
            slabs.append(self.derivative(alpha, x))
        return np.stack(slabs, axis=-1)


# -- convenience constructors ------------------------------------------------

def constant_scalar_field(dim, value):
    return PolynomialScalarField(dim, {(0,) * dim: value})


def linear_scalar_field(dim, coeffs, const=0):
    terms = {(0,) * dim: const}
    for i, a in enumerate(coeffs):
        alpha = tuple(1 if j == i else 0 for j in range(dim))
        terms[alpha] = a
    return PolynomialScalarField(dim, terms)


def affine_vector_field(A, b=None):
    """beta(x) = A x + b as a polynomial vector field."""
    A = np.asarray(A)
    d = A.shape[1]
    if b is None:
        b = np.zeros(A.shape[0])
    comps = [linear_scalar_field(d, A[l], const=b[l]) for l in range(A.shape[0])]
    return VectorField(comps)


def zero_matrix_field(dim):
    z = PolynomialScalarField(dim, {})
    return MatrixField([[z for _ in range(dim)] for _ in range(dim)])


def constant_matrix_field(C):
    C = np.asarray(C)
    d = C.shape[0]
    return MatrixField(
        [[constant_scalar_field(d, C[l, j]) for j in range(d)] for l in range(d)]
    )


def componentwise_linear_matrix_field(coef):
    """sigma(x)_{l,j} = coef_{l,j} * x_j (the linear-model diffusion structure)."""
    coef = np.asarray(coef)
    d = coef.shape[0]
    rows = []
    for l in range(d):
        row = []
        for j in range(d):
            alpha = tuple(1 if m == j else 0 for m in range(d))
            row.append(PolynomialScalarField(d, {alpha: coef[l, j]}))
        rows.append(row)
    return MatrixField(rows)


def affine_matrix_field(const, coef):
    """sigma(x)_{l,j} = const_{l,j} + coef_{l,j} * x_j."""
    const = np.asarray(const)
    coef = np.asarray(coef)
    d = const.shape[0]
    rows = []
    for l in range(d):
        row = []
        for j in range(d):
            alpha = tuple(1 if m == j else 0 for m in range(d))
            row.append(
                PolynomialScalarField(d, {(0,) * d: const[l, j], alpha: coef[l, j]})
            )
        rows.append(row)
    return MatrixField(rows)
