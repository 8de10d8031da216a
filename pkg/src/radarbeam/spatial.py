"""Uniform spatial hash grid for fixed-radius neighbour queries in the plane."""

from __future__ import annotations

import numpy as np

_OFFSETS = np.array([(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)], dtype=np.int64)
_SPAN = np.int64(1 << 31)


def _cell_keys(cells: np.ndarray) -> np.ndarray:
    return (cells[:, 0] + _SPAN) * (2 * _SPAN) + (cells[:, 1] + _SPAN)


class SpatialHashGrid:
    """Bucket points into square cells of side ``cell_size``.

    Points are stored sorted by cell key so that each occupied cell maps to a
    contiguous slice; lookups are vectorised with ``searchsorted``.
    """

    def __init__(self, points: np.ndarray, cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        self.cell_size = float(cell_size)
        keys = _cell_keys(self._cells(self.points))
        self._order = np.argsort(keys, kind="stable")
        sorted_keys = keys[self._order]
        self._keys, self._starts, self._counts = np.unique(
            sorted_keys, return_index=True, return_counts=True
        )

    def __len__(self) -> int:
        return len(self.points)

    def _cells(self, pts: np.ndarray) -> np.ndarray:
        return np.floor(pts / self.cell_size).astype(np.int64)

    def pairs_within(self, queries: np.ndarray, radius: float):
        """All (query, point) index pairs with distance <= ``radius``.

        Returns ``(qi, pj, dist)`` arrays sorted by query index, then point
        index. ``radius`` may not exceed the cell size.
        """
        if radius > self.cell_size * (1 + 1e-12):
            raise ValueError("radius larger than cell size")
        queries = np.asarray(queries, dtype=float).reshape(-1, 2)
        empty = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
        if len(queries) == 0 or len(self.points) == 0:
            return empty

        qcells = self._cells(queries)
        cand_q, cand_start, cand_count = [], [], []
        for off in _OFFSETS:
            k = _cell_keys(qcells + off)
            pos = np.searchsorted(self._keys, k)
            pos_c = np.minimum(pos, len(self._keys) - 1)
            hit = self._keys[pos_c] == k
            cand_q.append(np.nonzero(hit)[0])
            cand_start.append(self._starts[pos_c[hit]])
            cand_count.append(self._counts[pos_c[hit]])
        q = np.concatenate(cand_q)
        start = np.concatenate(cand_start)
        count = np.concatenate(cand_count)
        if count.sum() == 0:
            return empty

        qi = np.repeat(q, count)
        # position of each candidate within its cell's slice
        within = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
        pj = self._order[np.repeat(start, count) + within]

        d = np.hypot(*(queries[qi] - self.points[pj]).T)
        keep = d <= radius
        qi, pj, d = qi[keep], pj[keep], d[keep]
        order = np.lexsort((pj, qi))
        return qi[order], pj[order], d[order]
