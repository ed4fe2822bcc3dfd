"""Dense two-phase revised simplex for small inequality-form linear programs.

Solves ``min c.x  s.t.  A x <= b, x >= 0``.  The basis is refactorized from
scratch every iteration (LU), which is wasteful asymptotically but rock solid
at the problem sizes this package produces (a few hundred columns).  Bland's
smallest-index rule is applied on entering and leaving ties, so the method
terminates on degenerate problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import MasekitError


class InfeasibleProblemError(MasekitError):
    """Phase 1 finished with artificial variables still positive."""


class UnboundedProblemError(MasekitError):
    """The objective decreases without bound along a feasible ray."""


class IterationLimitError(MasekitError):
    """The pivot budget was exhausted before reaching an optimum."""


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    iterations: int
    slack: np.ndarray
    max_constraint_violation: float
    min_reduced_cost: float


def _pivot_loop(columns, rhs, cost, basis, allowed, tol, max_iterations, start_iter):
    """Run simplex pivots until optimal; returns (basis, x_basic, iters, min_rc)."""
    n_rows = columns.shape[0]
    iters = start_iter
    while True:
        if iters >= max_iterations:
            raise IterationLimitError(f"no optimum after {iters} pivots")
        basis_mat = columns[:, basis]
        lu = lu_factor(basis_mat)
        x_basic = lu_solve(lu, rhs)
        y = lu_solve(lu, cost[basis], trans=1)
        reduced = cost - columns.T @ y
        entering = -1
        min_rc = 0.0
        for j in allowed:
            if j in basis:
                continue
            if reduced[j] < min_rc:
                min_rc = reduced[j]
            if reduced[j] < -tol:
                entering = j
                break  # Bland: first (smallest-index) improving column
        if entering < 0:
            return basis, x_basic, iters, float(np.min(reduced[allowed]))
        direction = lu_solve(lu, columns[:, entering])
        best_ratio = None
        leaving_row = -1
        for i in range(n_rows):
            if direction[i] > tol:
                ratio = x_basic[i] / direction[i]
                if (
                    best_ratio is None
                    or ratio < best_ratio - tol
                    or (abs(ratio - best_ratio) <= tol and basis[leaving_row] > basis[i])
                ):
                    best_ratio = ratio
                    leaving_row = i
        if leaving_row < 0:
            raise UnboundedProblemError("objective unbounded below")
        basis[leaving_row] = entering
        iters += 1


def solve_inequality_lp(c, A, b, *, tol: float = 1e-9, max_iterations: int = 10_000) -> SimplexResult:
    c = np.asarray(c, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n_rows, n_vars = A.shape
    if c.shape != (n_vars,) or b.shape != (n_rows,):
        raise ValueError("inconsistent LP dimensions")

    # Equality form [A | I] [x; s] = b with slack signs flipped on negative rhs.
    eq = np.hstack([A, np.eye(n_rows)])
    rhs = b.copy()
    negative = rhs < 0.0
    eq[negative] *= -1.0
    rhs[negative] *= -1.0

    # Artificial columns only where the slack no longer provides a basis column.
    artificial_rows = np.flatnonzero(negative)
    n_art = artificial_rows.size
    art_block = np.zeros((n_rows, n_art))
    for k, row in enumerate(artificial_rows):
        art_block[row, k] = 1.0
    columns = np.hstack([eq, art_block])
    n_total = n_vars + n_rows + n_art

    basis = [
        n_vars + n_rows + list(artificial_rows).index(i) if negative[i] else n_vars + i
        for i in range(n_rows)
    ]

    iterations = 0
    if n_art > 0:
        phase1_cost = np.zeros(n_total)
        phase1_cost[n_vars + n_rows :] = 1.0
        allowed = list(range(n_total))
        basis, x_basic, iterations, _ = _pivot_loop(
            columns, rhs, phase1_cost, basis, allowed, tol, max_iterations, 0
        )
        if float(phase1_cost[basis] @ x_basic) > np.sqrt(tol):
            raise InfeasibleProblemError("constraints admit no feasible point")
        # Pivot any degenerate artificial out of the basis; [A | I] has full
        # row rank, so a real replacement column always exists.
        for row in range(n_rows):
            if basis[row] >= n_vars + n_rows:
                lu = lu_factor(columns[:, basis])
                for j in range(n_vars + n_rows):
                    if j in basis:
                        continue
                    if abs(lu_solve(lu, columns[:, j])[row]) > tol:
                        basis[row] = j
                        break
                else:
                    raise InfeasibleProblemError("redundant row with artificial stuck in basis")

    real_cost = np.zeros(n_total)
    real_cost[:n_vars] = c
    allowed = list(range(n_vars + n_rows))
    basis, x_basic, iterations, min_rc = _pivot_loop(
        columns, rhs, real_cost, basis, allowed, tol, max_iterations, iterations
    )

    full = np.zeros(n_total)
    for i, col in enumerate(basis):
        full[col] = x_basic[i]
    x = full[:n_vars]
    slack = full[n_vars : n_vars + n_rows]
    violation = float(np.max(np.maximum(A @ x - b, 0.0), initial=0.0))
    return SimplexResult(
        x=x,
        objective=float(c @ x),
        iterations=iterations,
        slack=slack,
        max_constraint_violation=violation,
        min_reduced_cost=min_rc,
    )
