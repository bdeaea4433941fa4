"""A small dense two-phase simplex for equality-form linear programs.

This is a certification tool, not a production LP stack: tableaus are dense,
pivoting uses Bland's rule (no cycling), and sizes are expected to stay at
"desk scale" (hundreds of variables). Accuracy on such instances is limited
only by float64 pivoting, comfortably below 1e-9.
"""
from __future__ import annotations

import numpy as np

from .errors import InfeasiblePrimal, NumericalError

PIVOT_TOL = 1e-11


def solve_max_lp(objective, eq_lhs, eq_rhs, max_pivots: int = 100_000):
    """Maximize objective @ x subject to eq_lhs @ x = eq_rhs, x >= 0.

    Returns (optimal value, solution vector). Raises
    :class:`InfeasiblePrimal` when the constraints admit no solution and
    :class:`NumericalError` on an unbounded objective or pivot-limit hit.
    """
    c = np.asarray(objective, dtype=np.float64)
    a = np.asarray(eq_lhs, dtype=np.float64)
    b = np.asarray(eq_rhs, dtype=np.float64).copy()
    m, n = a.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")

    a = a.copy()
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: artificial basis, minimize the artificials' total
    n_art = m
    tab = np.zeros((m + 1, n + n_art + 1))
    tab[:m, :n] = a
    tab[:m, n : n + n_art] = np.eye(m)
    tab[:m, -1] = b
    basis = list(range(n, n + n_art))
    tab[m, n : n + n_art] = 1.0
    for r in range(m):  # price out the artificial basis
        tab[m] -= tab[r]
    _pivot_until_optimal(tab, basis, max_pivots)
    if tab[m, -1] < -1e-9:
        raise InfeasiblePrimal(f"constraints infeasible (phase-1 residual {-tab[m, -1]:g})")

    # drive leftover artificials out of the basis, then drop their columns
    for r in range(m):
        if basis[r] >= n:
            piv = np.flatnonzero(np.abs(tab[r, :n]) > PIVOT_TOL)
            if piv.size:
                _pivot(tab, basis, r, int(piv[0]))
    keep = [r for r in range(m) if basis[r] < n]
    if len(keep) < m:  # redundant constraints: drop degenerate artificial rows
        tab = tab[keep + [m]]
        basis = [basis[r] for r in keep]
        m = len(basis)
    tab = np.delete(tab, np.s_[n : n + n_art], axis=1)

    # phase 2: original objective (stored negated so "maximize" reads like phase 1)
    tab[m, :n] = -c
    tab[m, -1] = 0.0
    for r in range(m):
        col = basis[r]
        if abs(tab[m, col]) > 0:
            tab[m] -= tab[m, col] * tab[r]
    _pivot_until_optimal(tab, basis, max_pivots)

    x = np.zeros(n)
    for r, col in enumerate(basis):
        x[col] = tab[r, -1]
    return float(tab[m, -1]), x


def _pivot_until_optimal(tab, basis, max_pivots):
    m = len(basis)
    for _ in range(max_pivots):
        reduced = tab[m, :-1]
        entering = np.flatnonzero(reduced < -PIVOT_TOL)
        if entering.size == 0:
            return
        col = int(entering[0])  # Bland's rule: lowest eligible index
        ratios = np.full(m, np.inf)
        pos = tab[:m, col] > PIVOT_TOL
        ratios[pos] = tab[:m, -1][pos] / tab[:m, col][pos]
        if not np.any(pos):
            raise NumericalError("LP is unbounded")
        best = np.min(ratios)
        # Bland tie-break: smallest basis index among (near-)minimal ratios;
        # degenerate pivots can leave the RHS a few ulps negative, so the
        # tie window must sit above `best` even when `best` is negative
        candidates = np.flatnonzero(ratios <= best + 1e-9 * max(1.0, abs(best)))
        row = int(min(candidates, key=lambda r: basis[r]))
        _pivot(tab, basis, row, col)
    raise NumericalError("pivot limit exceeded")


def _pivot(tab, basis, row, col):
    tab[row] /= tab[row, col]
    factors = tab[:, col].copy()
    factors[row] = 0.0
    tab -= np.outer(factors, tab[row])
    basis[row] = col
