"""Ordered p-nearest spatial neighbors of every voxel."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

# above this many voxels the all-pairs matrix is replaced by a KD-tree query
_BRUTE_FORCE_MAX = 2048


@dataclass(frozen=True, eq=False)
class NeighborhoodTable:
    """Row ``j`` lists the ``p`` voxels nearest to voxel ``j``, excluding ``j``.

    Rows are ordered by non-decreasing Euclidean distance; equal distances
    are ordered by voxel index.
    """

    p: int
    indices: np.ndarray  # (N, p) int
    distances: np.ndarray  # (N, p) float

    @property
    def n_voxels(self) -> int:
        return self.indices.shape[0]


def _distances(coords, center, candidates):
    diff = coords[candidates] - coords[center]
    return np.sqrt((diff * diff).sum(axis=-1))


def _order(dist, cand):
    # primary key distance, secondary key voxel index
    return np.lexsort((cand, dist))


def build_neighborhood_table(coords, p: int) -> NeighborhoodTable:
    """Exact p-nearest neighbors of every voxel with index tie-breaking.

    The result equals a brute-force all-pairs sort. Large inputs use a
    KD-tree to find the p-th distance, then re-rank every voxel within that
    radius exactly, so ties at the boundary are resolved the same way.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = len(coords)
    p = int(p)
    if not 1 <= p <= n - 1:
        raise ValueError(f"mesh order p must lie in [1, {n - 1}], got {p}")

    idx = np.empty((n, p), dtype=np.int64)
    dst = np.empty((n, p))
    everyone = np.arange(n)
    if n <= _BRUTE_FORCE_MAX:
        for j in range(n):
            cand = np.delete(everyone, j)
            d = _distances(coords, j, cand)
            o = _order(d, cand)[:p]
            idx[j], dst[j] = cand[o], d[o]
    else:
        tree = cKDTree(coords)
        kth, _ = tree.query(coords, k=p + 1)
        radius = kth[:, -1]
        for j in range(n):
            cand = np.asarray(tree.query_ball_point(coords[j], radius[j] * (1 + 1e-9) + 1e-12))
            cand = cand[cand != j]
            d = _distances(coords, j, cand)
            o = _order(d, cand)[:p]
            idx[j], dst[j] = cand[o], d[o]
    idx.setflags(write=False)
    dst.setflags(write=False)
    return NeighborhoodTable(p, idx, dst)


def write_neighbors_csv(table: NeighborhoodTable, path) -> Path:
    """Export as ``voxel_id,rank,neighbor_id,distance`` (rank is 0-based)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["voxel_id", "rank", "neighbor_id", "distance"])
        for j in range(table.n_voxels):
            for k in range(table.p):
                w.writerow([j, k, int(table.indices[j, k]), repr(float(table.distances[j, k]))])
    return path
