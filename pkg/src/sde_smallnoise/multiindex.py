"""Multi-index combinatorics and order-k Taylor-composition coefficients.

Given a truncated power series u(e) = u_0 + e u_1 + ... + e^N u_N with vector
coefficients, the coefficient of e^k in f(u(e)) is a finite sum over
assignments gamma_{j,i} of nonnegative integers (how many factors of u_{j,i}
enter a monomial) constrained by sum_{i,j} j*gamma_{j,i} = k.  Each assignment
contributes

    D^alpha f(u_0) * (alpha! / prod gamma_{j,i}!) / alpha! * prod u_{j,i}^gamma_{j,i}

with alpha_i = sum_j gamma_{j,i} the outer derivative multi-index.  Families
f_0..f_M that themselves carry powers of e (diffusion matrices, or drifts
that depend on e) add a ``j_offset`` so that j_offset + sum j*gamma = k.

Weights are exact integers and the whole sum is carried out in the number
type of the inputs; object arrays of Fractions stay rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .fields import _monomial

__all__ = [
    "MultiIndex",
    "OrderPartition",
    "TaylorRemainderBound",
    "enumerate_partitions",
    "count_partitions",
    "drift_order_term",
    "diffusion_order_term",
    "multi_indices_of_order",
    "taylor_polynomial",
    "taylor_remainder_constant",
]


@dataclass(frozen=True)
class MultiIndex:
    """A d-tuple of nonnegative integers with length/factorial/power semantics."""

    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(int(a) for a in self.entries))
        if any(a < 0 for a in self.entries):
            raise ValueError(f"negative entry in multi-index {self.entries}")

    def length(self):
        return sum(self.entries)

    def factorial(self):
        out = 1
        for a in self.entries:
            out *= math.factorial(a)
        return out

    def power(self, x):
        """prod_i x_i**alpha_i; equals 1 when all entries vanish."""
        x = np.asarray(x)
        m = _monomial(x, self.entries)
        if m is None:
            return np.ones(x.shape[:-1]) if x.dtype != object else np.full(
                x.shape[:-1], Fraction(1), dtype=object
            )
        return m


@dataclass(frozen=True)
class OrderPartition:
    """One assignment gamma_{j,i} (rows j=1..depth) plus a family offset.

    Satisfies j_offset + sum_{j,i} j*gamma[j-1][i] == order.
    """

    order: int
    dim: int
    j_offset: int
    gamma: tuple  # tuple of rows, row j-1 has length dim

    def outer_index(self) -> MultiIndex:
        cols = [0] * self.dim
        for row in self.gamma:
            for i, g in enumerate(row):
                cols[i] += g
        return MultiIndex(tuple(cols))

    def weight(self) -> int:
        """alpha! / prod_{j,i} gamma_{j,i}!, an exact integer."""
        w = self.outer_index().factorial()
        for row in self.gamma:
            for g in row:
                w //= math.factorial(g)
        return w

    def monomial(self, u):
        """prod_{j,i} u[j][..., i]**gamma_{j,i}; scalar 1 when gamma == 0."""
        out = 1
        for j, row in enumerate(self.gamma, start=1):
            for i, g in enumerate(row):
                if g:
                    out = out * np.asarray(u[j])[..., i] ** g
        return out


def enumerate_partitions(k, depth, dim, max_j_offset=0):
    """All OrderPartitions of order k, in deterministic lexicographic order.

    ``depth`` is the truncation depth N (rows j=1..min(N,k) can be nonzero);
    ``max_j_offset`` allows family offsets 0..max_j_offset.  Ordering is by
    ascending j_offset, then lexicographically in the row-major flattened
    gamma table.
    """
    k, depth, dim = int(k), int(depth), int(dim)
    if k < 0 or dim < 1:
        return []
    rows = min(depth, k)
    cells = [(j, i) for j in range(1, rows + 1) for i in range(dim)]
    out = []

    def fill(idx, remaining, flat):
        if idx == len(cells):
            if remaining == 0:
                gamma = tuple(
                    tuple(flat[j * dim : (j + 1) * dim]) for j in range(rows)
                )
                out.append(OrderPartition(k, dim, j0, gamma))
            return
        j, _ = cells[idx]
        # cheapest completion uses weight-1 cells only if any remain
        for g in range(remaining // j + 1):
            flat.append(g)
            fill(idx + 1, remaining - j * g, flat)
            flat.pop()

    for j0 in range(min(int(max_j_offset), k) + 1):
        fill(0, k - j0, [])
    return out


@lru_cache(maxsize=None)
def count_partitions(k, depth, dim, max_j_offset=0):
    """Number of partitions enumerate_partitions would return (memoized)."""
    rows = min(int(depth), int(k))

    @lru_cache(maxsize=None)
    def cells_count(idx, remaining):
        if idx == rows * dim:
            return 1 if remaining == 0 else 0
        j = idx // dim + 1
        return sum(
            cells_count(idx + 1, remaining - j * g) for g in range(remaining // j + 1)
        )

    total = 0
    for j0 in range(min(int(max_j_offset), int(k)) + 1):
        total += cells_count(0, int(k) - j0)
    return total


def _scaled(deriv, coeff: Fraction):
    """Multiply an array by an exact rational, staying exact on object arrays."""
    if getattr(deriv, "dtype", None) == object:
        return deriv * coeff
    if coeff == 1:
        return deriv
    return deriv * (float(coeff.numerator) / float(coeff.denominator))


def _order_term(k, family, u):
    """Coefficient of e^k in sum_j e^j f_j(u(e)), u given up to order len(u)-1.

    Coefficients u_j beyond the supplied list are treated as zero; passing
    u[:k] therefore yields the order-k term with the top coefficient removed
    (everything except the linear-in-u_k part).
    """
    u = [np.asarray(ui) for ui in u]
    dim = u[0].shape[-1]
    base_shape = u[0].shape[:-1]
    total = None
    for part in enumerate_partitions(
        k, depth=len(u) - 1, dim=dim, max_j_offset=len(family) - 1
    ):
        fld = family[part.j_offset]
        if fld.is_zero:
            continue
        alpha = part.outer_index()
        if fld.derivative_is_zero(alpha.entries):
            continue
        deriv = fld.derivative(alpha.entries, u[0])
        coeff = Fraction(part.weight(), alpha.factorial())
        mono = part.monomial(u)
        extra = deriv.ndim - len(base_shape)
        if extra and not np.isscalar(mono):
            mono = np.reshape(mono, np.shape(mono) + (1,) * extra)
        term = _scaled(deriv, coeff) * mono
        total = term if total is None else total + term
    if total is None:
        total = np.zeros(base_shape + family[0].codomain_shape)
    return total


def drift_order_term(k, f, u):
    """[f(u(e))]_k for a drift field (or a family f_0..f_M carrying e-powers).

    ``f`` is a scalar/vector field, or a sequence of them when the drift
    itself depends on e.  ``u`` is the list of expansion coefficients
    starting at u_0; entries beyond the list are taken as zero, so the
    result is affine in the highest supplied coefficient.
    """
    family = list(f) if isinstance(f, (list, tuple)) else [f]
    return _order_term(k, family, u)


def diffusion_order_term(k, sigma_family, u):
    """[sigma_e(u(e))]_k elementwise for a family sigma_0..sigma_M."""
    return _order_term(k, list(sigma_family), u)


def multi_indices_of_order(dim, order):
    """All multi-indices alpha with |alpha| == order, lexicographic."""
    if dim == 1:
        return [(order,)]
    out = []
    for first in range(order, -1, -1):
        for rest in multi_indices_of_order(dim - 1, order - first):
            out.append((first,) + rest)
    return sorted(out)


def taylor_polynomial(field, x0, p, x):
    """Taylor approximation of total order p of a scalar field around x0."""
    x0 = np.asarray(x0, dtype=float)
    x = np.asarray(x, dtype=float)
    h = x - x0
    total = np.zeros(x.shape[:-1])
    for q in range(p + 1):
        for alpha in multi_indices_of_order(x0.shape[-1], q):
            mi = MultiIndex(alpha)
            d = field.derivative(alpha, x0)
            mono = mi.power(h)
            total = total + (float(d) / mi.factorial()) * mono
    return total


@dataclass(frozen=True)
class TaylorRemainderBound:
    """C_p and the order p+1 it certifies: |f - Taylor_p| <= C_p * ||x-x0||^(p+1)."""

    constant: float
    order: int

    def bound(self, x, x0):
        x = np.asarray(x, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        return self.constant * np.linalg.norm(x - x0, axis=-1) ** self.order


def taylor_remainder_constant(field, x0, x, p, panels=16, nodes_per_panel=16):
    """Remainder constant of the integral-form Taylor bound.

    C_p(x0, x) = sum_{|alpha|=p+1} (p+1)/alpha! *
                 int_0^1 (1-s)^p |D^alpha f(x0 + s (x-x0))| ds

    evaluated by composite Gauss-Legendre quadrature along the segment.  The
    integrand |D^alpha f| can have kinks where the derivative changes sign,
    hence the composite rule.
    """
    x0 = np.asarray(x0, dtype=float)
    x = np.asarray(x, dtype=float)
    d = x0.shape[-1]
    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    s = (mids[:, None] + half * gl_nodes[None, :]).ravel()
    w = np.tile(half * gl_weights, panels)
    pts = x0[None, :] + s[:, None] * (x - x0)[None, :]
    one_minus = (1.0 - s) ** p
    constant = 0.0
    for alpha in multi_indices_of_order(d, p + 1):
        mi = MultiIndex(alpha)
        vals = np.abs(np.asarray(field.derivative(alpha, pts), dtype=float))
        integral = float(np.sum(w * one_minus * vals))
        constant += (p + 1) / mi.factorial() * integral
    return TaylorRemainderBound(constant, p + 1)
