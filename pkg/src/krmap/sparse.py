"""Downward-closed multi-index sets, reduced margins, and unique-row projections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ContractError


class MultiIndexSet:
    """Ordered set of d-dimensional multi-indices with O(1) membership tests.

    The position map sigma is the insertion order; enrichment appends new
    indices after existing ones so coefficient vectors stay aligned across
    adaptive iterations.
    """

    __slots__ = ("dim", "array", "_pos")

    def __init__(self, dim: int, indices: np.ndarray):
        arr = np.asarray(indices, dtype=np.int64).reshape(-1, dim)
        self.dim = dim
        self.array = arr
        self._pos = {tuple(row): i for i, row in enumerate(arr)}
        if len(self._pos) != arr.shape[0]:
            raise ArgumentError("duplicate multi-indices")

    def __len__(self) -> int:
        return self.array.shape[0]

    def __contains__(self, k) -> bool:
        return tuple(k) in self._pos

    def position(self, k) -> int:
        return self._pos[tuple(k)]

    def max_degrees(self) -> np.ndarray:
        """Per-coordinate maximum degree."""
        return self.array.max(axis=0)

    def is_downward_closed(self) -> bool:
        for row in self.array:
            for i in range(self.dim):
                if row[i] > 0:
                    nb = row.copy()
                    nb[i] -= 1
                    if tuple(nb) not in self._pos:
                        return False
        return True

    def reduced_margin(self, max_degree: int | None = None) -> np.ndarray:
        """Indices k not in the set whose every backward neighbor is inside.

        Candidates with any component above ``max_degree`` are excluded.
        Returned in lexicographic order.
        """
        if not self.is_downward_closed():
            raise ContractError("reduced margin requires a downward-closed set")
        candidates = set()
        for row in self.array:
            for i in range(self.dim):
                fwd = row.copy()
                fwd[i] += 1
                candidates.add(tuple(fwd))
        out = []
        for cand in candidates:
            if cand in self._pos:
                continue
            if max_degree is not None and max(cand) > max_degree:
                continue
            ok = True
            for i in range(self.dim):
                if cand[i] > 0:
                    nb = list(cand)
                    nb[i] -= 1
                    if tuple(nb) not in self._pos:
                        ok = False
                        break
            if ok:
                out.append(cand)
        out.sort()
        return np.asarray(out, dtype=np.int64).reshape(-1, self.dim)

    def enrich(self, new_indices: np.ndarray) -> "MultiIndexSet":
        """New set with the given indices appended (lexicographic within the batch)."""
        new_indices = np.asarray(new_indices, dtype=np.int64).reshape(-1, self.dim)
        order = np.lexsort(new_indices.T[::-1])
        merged = np.vstack([self.array, new_indices[order]])
        out = MultiIndexSet(self.dim, merged)
        if not out.is_downward_closed():
            raise ContractError("enrichment breaks downward closedness")
        return out

    def to_json(self) -> list:
        return self.array.tolist()

    @staticmethod
    def from_json(obj: list, dim: int | None = None) -> "MultiIndexSet":
        arr = np.asarray(obj, dtype=np.int64)
        if dim is None:
            dim = arr.shape[1]
        return MultiIndexSet(dim, arr)


def total_degree_set(dim: int, degree: int) -> MultiIndexSet:
    """All k with |k|_1 <= degree, ordered by total degree then lexicographic."""
    if degree < 0:
        raise ArgumentError("degree must be >= 0")
    rows = [np.zeros(dim, dtype=np.int64)]
    frontier = {tuple(rows[0])}
    for _ in range(degree):
        nxt = set()
        for row in frontier:
            for i in range(dim):
                cand = list(row)
                cand[i] += 1
                nxt.add(tuple(cand))
        for cand in sorted(nxt):
            rows.append(np.asarray(cand, dtype=np.int64))
        frontier = nxt
    return MultiIndexSet(dim, np.asarray(rows))


def is_downward_closed(index_set: MultiIndexSet) -> bool:
    return index_set.is_downward_closed()


def reduced_margin(index_set: MultiIndexSet, max_degree: int | None = None) -> np.ndarray:
    return index_set.reduced_margin(max_degree)


@dataclass(frozen=True)
class UniqueRowProjection:
    """Grouping of the restricted rows K_{:q} by their distinct values.

    ``rows`` lists the representative row index (first occurrence) of each
    distinct restriction; ``col_index[j]`` gives the group of row j. The
    associated 0/1 matrix P has exactly one 1 per row, and P P^T recovers the
    restricted mass matrix of the orthonormal case.
    """

    rows: np.ndarray        # (m,) representative row indices u(q)
    col_index: np.ndarray   # (|K|,) group index per row
    n_rows: int

    @property
    def n_cols(self) -> int:
        return self.rows.size

    def matrix(self) -> np.ndarray:
        p = np.zeros((self.n_rows, self.n_cols))
        p[np.arange(self.n_rows), self.col_index] = 1.0
        return p


def unique_row_projection(index_set: MultiIndexSet, q) -> UniqueRowProjection:
    """Distinct restrictions of the index set to the coordinates in q."""
    q = np.asarray(q, dtype=np.int64).reshape(-1)
    if q.size and (q.min() < 0 or q.max() >= index_set.dim):
        raise ArgumentError(f"coordinate subset out of range for dim {index_set.dim}")
    n = len(index_set)
    if q.size == 0:
        return UniqueRowProjection(np.array([0]), np.zeros(n, dtype=np.int64), n)
    restricted = index_set.array[:, q]
    seen: dict[tuple, int] = {}
    reps = []
    col = np.empty(n, dtype=np.int64)
    for j in range(n):
        key = tuple(restricted[j])
        if key not in seen:
            seen[key] = len(reps)
            reps.append(j)
        col[j] = seen[key]
    return UniqueRowProjection(np.asarray(reps, dtype=np.int64), col, n)
