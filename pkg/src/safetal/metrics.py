"""Evaluation metrics: RMSE, safe-area rates, connected safe regions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def rmse(predictions, truth) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.shape != t.shape or p.size < 1:
        raise ValueError("predictions and truth must have equal length >= 1")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def tp_fp_area(safe_indices, true_safe_mask) -> tuple:
    """Fractions of the pool marked safe correctly / incorrectly.

    tp = |S ∩ true| / N_pool, fp = |S ∩ ¬true| / N_pool; the two always sum
    to |S| / N_pool.
    """
    mask = np.asarray(true_safe_mask, dtype=bool)
    n_pool = mask.shape[0]
    idx = np.asarray(list(safe_indices), dtype=int)
    if idx.size == 0:
        return 0.0, 0.0
    if idx.min() < 0 or idx.max() >= n_pool:
        raise ValueError("safe index outside pool")
    tp = int(np.count_nonzero(mask[idx]))
    return tp / n_pool, (idx.size - tp) / n_pool


@dataclass(frozen=True)
class RegionLabeling:
    """Integer region labels on a regular grid; 0 marks unsafe cells.

    Safe cells sharing a label are connected under the adjacency rule
    (chain neighbors for D=1, 4-neighbors for D=2); labels are assigned in
    row-major first-seen order starting from 1.
    """

    shape: tuple
    labels: np.ndarray
    n_regions: int


def ccl_label(safe_mask, D: int) -> RegionLabeling:
    """Two-pass union-find connected component labeling."""
    mask = np.asarray(safe_mask, dtype=bool)
    if D not in (1, 2):
        raise ValueError("connected labeling supported for D in {1, 2} only")
    if mask.ndim != D:
        raise ValueError("mask dimensionality must match D")
    if D == 1:
        mask2 = mask[None, :]  # a 1D chain is one row of the 2D case
    else:
        mask2 = mask

    parent: list = []

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    rows, cols = mask2.shape
    provisional = np.zeros((rows, cols), dtype=int)
    for r in range(rows):
        for c in range(cols):
            if not mask2[r, c]:
                continue
            up = provisional[r - 1, c] if r > 0 and mask2[r - 1, c] else 0
            left = provisional[r, c - 1] if c > 0 and mask2[r, c - 1] else 0
            if up == 0 and left == 0:
                parent.append(len(parent))
                provisional[r, c] = len(parent)  # ids are 1-based
            elif up and left:
                provisional[r, c] = min(up, left)
                union(up - 1, left - 1)
            else:
                provisional[r, c] = up or left

    # second pass: resolve unions, then relabel in row-major first-seen order
    labels = np.zeros_like(provisional)
    remap: dict = {}
    for r in range(rows):
        for c in range(cols):
            if provisional[r, c]:
                root = find(provisional[r, c] - 1)
                if root not in remap:
                    remap[root] = len(remap) + 1
                labels[r, c] = remap[root]
    if D == 1:
        labels = labels[0]
    return RegionLabeling(shape=mask.shape, labels=labels, n_regions=len(remap))


@dataclass(frozen=True)
class GridGeometry:
    """Regular lattice: per-dimension coordinate axes covering the domain."""

    axes: tuple  # one sorted 1D array per dimension

    @property
    def dim(self) -> int:
        return len(self.axes)

    def nearest_cell(self, x) -> tuple:
        """Index of the closest lattice cell; ties go to the lower index."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[0] != self.dim:
            raise ValueError("query dimensionality mismatch")
        idx = []
        for d, axis in enumerate(self.axes):
            if x[d] < axis[0] - 1e-9 or x[d] > axis[-1] + 1e-9:
                raise ValueError(f"query coordinate {x[d]} outside domain axis {d}")
            j = int(np.argmin(np.abs(axis - x[d])))
            # argmin already returns the first (lowest) index on exact ties
            idx.append(j)
        return tuple(idx)


def count_explored_regions(queries, labeling: RegionLabeling,
                           geometry: GridGeometry) -> int:
    """Distinct safe regions containing the nearest grid cell of any query."""
    seen = set()
    for x in queries:
        lab = labeling.labels[geometry.nearest_cell(x)]
        if lab > 0:
            seen.add(int(lab))
    return len(seen)


def region_of_query(x, labeling: RegionLabeling, geometry: GridGeometry) -> int:
    """Region label (0 = unsafe) of the grid cell nearest to x."""
    return int(labeling.labels[geometry.nearest_cell(x)])


def safe_query_ratio(was_safe_flags) -> float:
    flags = np.asarray(list(was_safe_flags), dtype=bool)
    if flags.size < 1:
        raise ValueError("need at least one query")
    return float(np.mean(flags))
