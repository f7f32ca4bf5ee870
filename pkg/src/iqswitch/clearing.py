"""Minimum clearance time of a queue matrix and schedules that achieve it.

A queue matrix whose largest row/column sum is L can be drained in exactly
L slots. The construction pads the matrix up to an L-regular one and peels
off permutation matrices, each with a multiplicity, until nothing is left.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .switch import ContractViolation


class InternalInvariantError(RuntimeError):
    pass


def min_clearance_time(q: np.ndarray) -> int:
    q = np.asarray(q)
    if q.size == 0:
        return 0
    return int(max(q.sum(axis=1).max(), q.sum(axis=0).max()))


def pad_to_regular(q: np.ndarray, L: int) -> np.ndarray:
    """Smallest-effort M >= q with every row and column summing to L.

    Greedy: each deficient row is topped up from the first deficient
    columns, adding min(row deficit, column deficit) per step.
    """
    q = np.asarray(q, dtype=np.int64)
    if L < min_clearance_time(q):
        raise ContractViolation(f"L={L} is below the minimum clearance time {min_clearance_time(q)}")
    m = q.copy()
    row_def = L - m.sum(axis=1)
    col_def = L - m.sum(axis=0)
    j = 0
    n = m.shape[0]
    for i in range(n):
        while row_def[i] > 0:
            while col_def[j] == 0:
                j += 1
            add = min(row_def[i], col_def[j])
            m[i, j] += add
            row_def[i] -= add
            col_def[j] -= add
    return m


def extract_perfect_matching(m: np.ndarray) -> np.ndarray:
    """Permutation matrix supported on the positive entries of a sum-regular ``m``."""
    m = np.asarray(m)
    n = m.shape[0]
    # CSR arrays built directly; the dense-input constructor dominates the runtime otherwise
    rows, cols = np.nonzero(m > 0)
    indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int32)
    graph = csr_matrix((np.ones(cols.size, dtype=np.int8), cols.astype(np.int32), indptr), shape=(n, n))
    match = maximum_bipartite_matching(graph, perm_type="column")
    if (match < 0).any():
        raise InternalInvariantError("no perfect matching on the support of a regular matrix")
    p = np.zeros((n, n), dtype=np.int64)
    p[np.arange(n), match] = 1
    return p


@dataclass
class ClearancePlan:
    """Schedules draining a queue matrix, stored as (permutation, repeat count) blocks."""

    L: int
    blocks: list[tuple[np.ndarray, int]]

    @property
    def schedules(self) -> list[np.ndarray]:
        return list(self.iter_schedules())

    def iter_schedules(self, limit: int | None = None) -> Iterator[np.ndarray]:
        left = self.L if limit is None else min(self.L, limit)
        for p, c in self.blocks:
            if left <= 0:
                return
            take = min(c, left)
            for _ in range(take):
                yield p
            left -= take

    def truncated(self, budget: int) -> list[tuple[np.ndarray, int]]:
        """Blocks covering the first min(L, budget) slots."""
        out = []
        left = min(self.L, max(budget, 0))
        for p, c in self.blocks:
            if left <= 0:
                break
            take = min(c, left)
            out.append((p, take))
            left -= take
        return out


def decompose_regular(m: np.ndarray) -> list[tuple[np.ndarray, int]]:
    """Split a sum-regular nonnegative integer matrix into weighted permutations.

    The multiplicities sum to the common row sum and the weighted sum of the
    permutations reproduces ``m`` exactly.
    """
    m = np.array(m, dtype=np.int64)
    blocks = []
    while m.any():
        p = extract_perfect_matching(m)
        c = int(m[p == 1].min())
        m -= c * p
        blocks.append((p, c))
    return blocks


def clearing_plan(q: np.ndarray) -> ClearancePlan:
    q = np.asarray(q, dtype=np.int64)
    L = min_clearance_time(q)
    if L == 0:
        return ClearancePlan(L=0, blocks=[])
    return ClearancePlan(L=L, blocks=decompose_regular(pad_to_regular(q, L)))


def replay_blocks(q: np.ndarray, blocks: list[tuple[np.ndarray, int]]) -> np.ndarray:
    """Residual of ``q`` after playing each permutation ``c`` slots in a row.

    A cell offered service for c consecutive slots loses min(content, c).
    """
    r = np.array(q, dtype=np.int64)
    for p, c in blocks:
        r -= np.minimum(r, c * p)
    return r


def truncated_clear(q: np.ndarray, budget: int) -> tuple[list[np.ndarray], int]:
    """First min(L, budget) schedules of a clearing plan and the packets they leave."""
    if budget < 0:
        raise ContractViolation(f"budget must be >= 0, got {budget}")
    plan = clearing_plan(q)
    blocks = plan.truncated(budget)
    residual = int(replay_blocks(q, blocks).sum())
    return list(plan.iter_schedules(budget)), residual
