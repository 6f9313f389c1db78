"""Independent oracles used for cross-checking and CI.

The series oracle computes the coefficient of e^k in f(u_0 + e u_1 + ...)
by plain truncated power-series arithmetic (convolutions) straight off the
polynomial coefficient tables, with no derivative evaluation and no
partition enumeration, so it is an independent route from the order-term
machinery.  With Fraction inputs everything stays exact.

Closed forms for the small-volatility geometric Brownian motion preset
serve as continuum references: with drift r x and diffusion e s x,

    u_eps(t) = x0 exp((r - e^2 s^2 / 2) t + e s B_t)
    u_0(t)   = x0 e^{rt}
    u_1(t)   = s x0 e^{rt} B_t
    u_2(t)   = s^2 x0 e^{rt} (B_t^2 - t) / 2
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

__all__ = [
    "series_mul",
    "compose_polynomial_series",
    "order_term_series_oracle",
    "gbm_exact_path",
    "gbm_coefficient_paths",
]


def series_mul(a, b, order):
    """Product of two truncated power series (coefficient lists)."""
    out = [0] * (order + 1)
    for i, ai in enumerate(a):
        if i > order or ai == 0:
            continue
        for j, bj in enumerate(b):
            if i + j > order:
                break
            out[i + j] = out[i + j] + ai * bj
    return out


def compose_polynomial_series(terms, u_series, order):
    """Truncated series of f(u(e)) for a polynomial coefficient table.

    ``terms`` maps exponent multi-indices to coefficients; ``u_series[i]`` is
    the coefficient list of component i of u(e).
    """
    total = [0] * (order + 1)
    for alpha, c in terms.items():
        prod = [1]
        for i, e in enumerate(alpha):
            for _ in range(e):
                prod = series_mul(prod, u_series[i], order)
        prod += [0] * (order + 1 - len(prod))
        for j in range(order + 1):
            total[j] = total[j] + c * prod[j]
    return total


def _component_series(u_vectors, i):
    return [np.asarray(u, dtype=object).reshape(-1)[i] for u in u_vectors]


def _terms_of(scalar_field):
    return scalar_field.terms


def order_term_series_oracle(family, u_vectors, k):
    """Coefficient of e^k in sum_j e^j f_j(u(e)) via series arithmetic.

    ``family`` is a field or a list of fields (vector or matrix valued);
    ``u_vectors`` are the expansion coefficients u_0, u_1, ... as d-vectors.
    Returns an object ndarray shaped like one field value (exact with
    Fraction inputs).
    """
    fam = list(family) if isinstance(family, (list, tuple)) else [family]
    d = len(np.asarray(u_vectors[0], dtype=object).reshape(-1))
    u_series = [_component_series(u_vectors, i) for i in range(d)]

    def scalar_coeff(scalar_field, order):
        if order < 0:
            return 0
        series = compose_polynomial_series(_terms_of(scalar_field), u_series, order)
        return series[order]

    first = fam[0]
    if hasattr(first, "entries"):  # matrix field
        dd = len(first.entries)
        out = np.empty((dd, dd), dtype=object)
        for l in range(dd):
            for j in range(dd):
                acc = 0
                for off, f in enumerate(fam):
                    acc = acc + scalar_coeff(f.entries[l][j], k - off)
                out[l, j] = acc
        return out
    if hasattr(first, "components"):  # vector field
        m = len(first.components)
        out = np.empty(m, dtype=object)
        for l in range(m):
            acc = 0
            for off, f in enumerate(fam):
                acc = acc + scalar_coeff(f.components[l], k - off)
            out[l] = acc
        return out
    acc = 0
    for off, f in enumerate(fam):
        acc = acc + scalar_coeff(f, k - off)
    return np.asarray(acc, dtype=object)


# -- GBM closed forms -----------------------------------------------------------

def gbm_exact_path(eps, x0, r, sigma_tilde, grid, brownian):
    """Exact GBM solution along a realized Brownian path (grid values)."""
    t = np.asarray(grid, dtype=float)
    B = np.asarray(brownian, dtype=float)
    drift = (r - 0.5 * (eps * sigma_tilde) ** 2) * t
    return x0 * np.exp(drift + eps * sigma_tilde * B)


def gbm_coefficient_paths(x0, r, sigma_tilde, grid, brownian, K):
    """Closed-form u_0..u_K (K <= 2) along a realized Brownian path."""
    if K > 2:
        raise ValueError("closed forms available only up to order 2")
    t = np.asarray(grid, dtype=float)
    B = np.asarray(brownian, dtype=float)
    base = x0 * np.exp(r * t)
    out = [base * np.ones_like(B)]
    if K >= 1:
        out.append(sigma_tilde * base * B)
    if K >= 2:
        out.append(0.5 * sigma_tilde**2 * base * (B**2 - t))
    return out
