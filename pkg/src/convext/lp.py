"""Dense two-phase simplex with Bland's anti-cycling rule as a safeguard.

Solves ``min c.x  s.t.  A x = b,  x >= lb`` on desk-scale problems (a few
hundred rows/columns). Everything in the package that asks for a convex
combination with an optimal property (roof values, hull membership,
relative interior) goes through :func:`solve_lp`.

When phase one ends with a positive residual the problem is infeasible and
the phase-one duals give a Farkas certificate ``y`` with ``A^T y <= 0`` and
``b.y > 0`` (in the coordinates shifted by ``lb``); hull membership turns
that into a separating direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue, NumericBreakdown
from .tolerances import DEFAULT_TOLERANCES, ToleranceConfig

MAX_VARS = 512
MAX_ROWS = 512
DEGENERATE_STREAK = 20


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LpProblem:
    objective: np.ndarray
    equality_matrix: np.ndarray
    equality_rhs: np.ndarray
    lower_bounds: np.ndarray | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.objective, dtype=float))
        A = np.asarray(self.equality_matrix, dtype=float)
        if A.ndim == 1:
            A = A.reshape(1, -1) if A.size else A.reshape(0, c.size)
        b = np.atleast_1d(np.asarray(self.equality_rhs, dtype=float))
        lb = (np.zeros_like(c) if self.lower_bounds is None
              else np.atleast_1d(np.asarray(self.lower_bounds, dtype=float)))
        if A.shape[0] != b.size:
            raise DimensionMismatch(f"{A.shape[0]} constraint rows but rhs has length {b.size}")
        if A.shape[1] != c.size:
            raise DimensionMismatch(f"{A.shape[1]} columns but objective has length {c.size}")
        if lb.size != c.size:
            raise DimensionMismatch("lower_bounds length differs from objective length")
        for name, arr in (("objective", c), ("equality_matrix", A),
                          ("equality_rhs", b), ("lower_bounds", lb)):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteValue(f"{name} contains non-finite entries")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "equality_matrix", A)
        object.__setattr__(self, "equality_rhs", b)
        object.__setattr__(self, "lower_bounds", lb)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.equality_rhs.size


@dataclass
class LpSolution:
    status: LpStatus
    value: float
    primal: np.ndarray
    iterations: int
    basis: tuple = ()
    farkas: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    """Row-reduced tableau ``[A | b]`` with a reduced-cost row kept separately."""

    def __init__(self, A, b, tol: ToleranceConfig):
        self.T = np.hstack([A, b[:, None]])
        self.basis = []
        self.tol = tol
        self.iterations = 0

    def pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        others = np.nonzero(T[:, col])[0]
        others = others[others != row]
        if others.size:
            T[others] -= np.outer(T[others, col], T[row])
        self.basis[row] = col
        self.iterations += 1

    def reduced_costs(self, cost):
        cb = cost[self.basis]
        return cost - cb @ self.T[:, :-1]

    def run(self, cost, allowed, max_iter, pricing="hybrid"):
        """Minimize ``cost`` over the current basis; returns 'optimal' or 'unbounded'.

        ``pricing="bland"`` always enters the lowest-index improving column.
        ``"hybrid"`` enters the most negative reduced cost and switches to
        Bland's rule for good after a streak of degenerate pivots, which keeps
        the termination guarantee.
        """
        T = self.T
        scale = max(1.0, float(np.max(np.abs(cost))))
        rc_tol = 1e-11 * scale
        bland = pricing == "bland"
        degenerate = 0
        for _ in range(max_iter):
            rc = self.reduced_costs(cost)
            improving = (rc < -rc_tol) & allowed
            candidates = np.nonzero(improving)[0]
            if candidates.size == 0:
                return "optimal"
            if bland:
                col = int(candidates[0])
            else:
                col = int(candidates[np.argmin(rc[candidates])])
            column = T[:, col]
            floor = np.finfo(float).eps * max(1.0, float(np.max(np.abs(column))))
            positive = column > floor
            admissible = column > self.tol.pivot
            if not positive.any():
                return "unbounded"
            if not admissible.any():
                raise NumericBreakdown(
                    f"entering column {col} has only pivots below {self.tol.pivot:g}")
            rows = np.nonzero(admissible)[0]
            ratios = T[rows, -1] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            # Bland: among tied rows, the one whose basic variable has lowest index
            row = int(min(ties, key=lambda r: self.basis[r]))
            if best <= 1e-14:
                degenerate += 1
                if degenerate > DEGENERATE_STREAK:
                    bland = True
            else:
                degenerate = 0
            self.pivot(row, col)
        raise NumericBreakdown(f"simplex exceeded {max_iter} iterations")


def solve_lp(problem: LpProblem, tol: ToleranceConfig = DEFAULT_TOLERANCES,
             enforce_size: bool = True, pricing: str = "hybrid") -> LpSolution:
    """Solve ``min c.x s.t. A x = b, x >= lb`` by the two-phase simplex method.

    Parameters
    ----------
    problem : LpProblem
    tol : ToleranceConfig
        ``feasibility`` decides phase-one infeasibility, ``pivot`` the
        smallest usable pivot.
    enforce_size : bool
        Reject problems beyond the desk-scale limits (512 x 512).
    pricing : {"hybrid", "bland"}
        Entering-column rule; see :meth:`_Tableau.run`.

    Returns
    -------
    LpSolution
        ``primal`` is a basic (vertex) solution when optimal. For infeasible
        problems ``farkas`` holds ``y`` with ``A^T y <= 0`` and
        ``(b - A lb).y > 0``.
    """
    c, A, b, lb = (problem.objective, problem.equality_matrix,
                   problem.equality_rhs, problem.lower_bounds)
    m, n = A.shape
    if enforce_size and (n > MAX_VARS or m > MAX_ROWS):
        raise DimensionMismatch(f"problem {m}x{n} exceeds desk-scale limit {MAX_ROWS}x{MAX_VARS}")

    rhs = b - A @ lb
    sign = np.where(rhs < 0, -1.0, 1.0)
    As = A * sign[:, None]
    rhs = rhs * sign
    max_iter = 50 * (m + n + 10)

    if m == 0:
        if np.any(c < -1e-11 * max(1.0, np.max(np.abs(c), initial=0.0))):
            return LpSolution(LpStatus.UNBOUNDED, -np.inf, lb.copy(), 0)
        return LpSolution(LpStatus.OPTIMAL, float(c @ lb), lb.copy(), 0)

    # phase one: artificials n..n+m-1 form the starting basis
    tab = _Tableau(np.hstack([As, np.eye(m)]), rhs, tol)
    tab.basis = list(range(n, n + m))
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    tab.run(cost1, np.ones(n + m, dtype=bool), max_iter, pricing)
    residual = float(cost1[tab.basis] @ tab.T[:, -1])
    if residual > tol.feasibility * max(1.0, float(np.sum(rhs))):
        rc = tab.reduced_costs(cost1)
        y_flipped = 1.0 - rc[n:]
        return LpSolution(LpStatus.INFEASIBLE, np.nan, np.full(n, np.nan),
                          tab.iterations, farkas=y_flipped * sign)

    # drive zero-level artificials out of the basis; drop redundant rows
    keep = []
    for row in range(m):
        if tab.basis[row] < n:
            keep.append(row)
            continue
        entries = np.abs(tab.T[row, :n])
        j = int(np.argmax(entries)) if n else -1
        if n and entries[j] > tol.pivot:
            tab.pivot(row, j)
            keep.append(row)
    tab.T = np.hstack([tab.T[keep, :n], tab.T[keep, -1:]])
    tab.basis = [tab.basis[r] for r in keep]

    status = tab.run(c, np.ones(n, dtype=bool), max_iter, pricing)
    if status == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, -np.inf, np.full(n, np.nan), tab.iterations)

    basis = list(tab.basis)
    x = np.zeros(n)
    x[basis] = tab.T[:, -1]
    if basis:
        # polish the basic values against the original rows
        rows = np.array(keep)
        B = As[np.ix_(rows, basis)]
        try:
            xb = np.linalg.solve(B, rhs[rows])
            if np.all(np.isfinite(xb)) and np.max(np.abs(xb - x[basis]), initial=0.0) < 1e-6:
                x[basis] = xb
        except np.linalg.LinAlgError:
            pass
    x[np.abs(x) < 1e-15] = 0.0
    x = np.maximum(x, 0.0) + lb
    return LpSolution(LpStatus.OPTIMAL, float(c @ x), x, tab.iterations, tuple(basis))
