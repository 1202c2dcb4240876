"""Minimum-cost assignment and ranked k-best assignment over rectangular matrices.

Cost matrices are dense float arrays with ``rows <= cols``; ``+inf`` marks a
forbidden pairing.  The optimal solve is delegated to
``scipy.optimize.linear_sum_assignment``; on top of it ``hungarian`` adds a
deterministic tie-break and ``murty_k_best`` ranks assignments by
include/exclude partitioning of the solution space.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from itertools import count

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InfeasibleAssignmentError, ValidationError

__all__ = ["Assignment", "hungarian", "murty_k_best"]


@dataclass(frozen=True)
class Assignment:
    """A full row cover: one distinct column per row, plus its total cost."""

    pairs: tuple[tuple[int, int], ...]
    cost: float

    def column_of(self, row: int) -> int:
        for r, c in self.pairs:
            if r == row:
                return c
        raise KeyError(row)


def _validate(cost) -> np.ndarray:
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2:
        raise ValidationError(f"cost matrix must be 2-D, got shape {C.shape}")
    if np.isnan(C).any():
        raise ValidationError("cost matrix contains NaN")
    if np.isneginf(C).any():
        raise ValidationError("cost matrix contains -inf")
    if C.shape[0] > C.shape[1]:
        raise ValidationError(f"need rows <= cols, got shape {C.shape}")
    return C


def _row_order_cost(C: np.ndarray, pairs: tuple[tuple[int, int], ...]) -> float:
    total = 0.0
    for r, c in sorted(pairs):
        total += C[r, c]
    return total


def _solve(C: np.ndarray) -> tuple[tuple[int, int], ...] | None:
    """Optimal pairs covering every row, or None when infeasible."""
    if C.shape[0] == 0:
        return ()
    try:
        rows, cols = linear_sum_assignment(C)
    except ValueError:
        return None
    if np.isinf(C[rows, cols]).any():
        return None
    return tuple(zip(rows.tolist(), cols.tolist()))


def hungarian(cost) -> Assignment:
    """Minimum-total-cost assignment of every row to a distinct column.

    Among cost ties (within 1e-9 * (1 + |optimum|)) the lexicographically
    smallest column sequence is returned, which makes downstream consumers
    reproducible.  Raises InfeasibleAssignmentError when no finite full
    assignment exists.
    """
    C = _validate(cost)
    base = _solve(C)
    if base is None:
        raise InfeasibleAssignmentError(f"no finite assignment for shape {C.shape}")
    rows, cols = C.shape
    best = _row_order_cost(C, base)
    eps = 1e-9 * (1.0 + abs(best))

    # Fix rows top-down, always taking the smallest column that still admits
    # an optimal completion.
    chosen: list[int] = []
    free_cols = list(range(cols))
    fixed_cost = 0.0
    for i in range(rows):
        found = False
        for jj, j in enumerate(list(free_cols)):
            if not np.isfinite(C[i, j]):
                continue
            rest_cols = free_cols[:jj] + free_cols[jj + 1 :]
            sub = C[np.ix_(range(i + 1, rows), rest_cols)]
            sub_pairs = _solve(sub)
            if sub_pairs is None:
                continue
            total = fixed_cost + C[i, j] + sum(sub[r, c] for r, c in sub_pairs)
            if total <= best + eps:
                chosen.append(j)
                free_cols = rest_cols
                fixed_cost += C[i, j]
                found = True
                break
        if not found:  # pragma: no cover - guarded by the base feasibility check
            raise InfeasibleAssignmentError("tie-break refinement lost feasibility")
    pairs = tuple((i, j) for i, j in enumerate(chosen))
    return Assignment(pairs=pairs, cost=_row_order_cost(C, pairs))


def murty_k_best(cost, k: int) -> list[Assignment]:
    """The k cheapest assignments in non-decreasing cost order.

    Classic solution-space partitioning: emitting a solution splits its
    space into subproblems that each fix a prefix of the solution's pairs
    and forbid the next one, so no assignment is produced twice.  Returns
    fewer than k when fewer finite assignments exist, and an empty list
    when there is none.  A zero-row matrix has exactly one (empty)
    assignment.
    """
    C = _validate(cost)
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    rows, cols = C.shape
    if rows == 0:
        return [Assignment(pairs=(), cost=0.0)]

    def solve_node(fixed, banned, sub_rows, sub_cols):
        """Full solution extending `fixed` while avoiding `banned`, or None."""
        sub = C[sub_rows[:, None], sub_cols[None, :]]
        if banned:
            row_pos = {r: idx for idx, r in enumerate(sub_rows.tolist())}
            col_pos = {c: idx for idx, c in enumerate(sub_cols.tolist())}
            for r, c in banned:
                ri, ci = row_pos.get(r), col_pos.get(c)
                if ri is not None and ci is not None:
                    sub[ri, ci] = np.inf
        sub_pairs = _solve(sub)
        if sub_pairs is None:
            return None
        full = fixed + tuple((int(sub_rows[r]), int(sub_cols[c])) for r, c in sub_pairs)
        return tuple(sorted(full))

    all_rows = np.arange(rows)
    all_cols = np.arange(cols)
    tie = count()
    heap: list = []
    root = solve_node((), (), all_rows, all_cols)
    if root is None:
        return []
    heapq.heappush(heap, (_row_order_cost(C, root), next(tie), (), (), all_rows, all_cols, root))

    results: list[Assignment] = []
    while heap and len(results) < k:
        node_cost, _, fixed, banned, sub_rows, sub_cols, solution = heapq.heappop(heap)
        results.append(Assignment(pairs=solution, cost=node_cost))
        free = [p for p in solution if p not in fixed]
        prefix = tuple(fixed)
        rows_left, cols_left = sub_rows, sub_cols
        for pair in free:
            child_banned = banned + (pair,)
            child_solution = solve_node(prefix, child_banned, rows_left, cols_left)
            if child_solution is not None:
                heapq.heappush(
                    heap,
                    (
                        _row_order_cost(C, child_solution),
                        next(tie),
                        prefix,
                        child_banned,
                        rows_left,
                        cols_left,
                        child_solution,
                    ),
                )
            prefix = prefix + (pair,)
            rows_left = rows_left[rows_left != pair[0]]
            cols_left = cols_left[cols_left != pair[1]]
    return results
