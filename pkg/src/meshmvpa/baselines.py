"""Comparison features: principal components and searchlight voxel selection."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import gnb
from .dataset import Dataset

AUTO_THRESHOLDS = tuple(round(0.1 + 0.05 * i, 2) for i in range(9))  # 0.10 .. 0.50
CORNER_BLOCK = tuple(itertools.product((0, 1), repeat=3))


class EmptySelectionError(ValueError):
    """No voxel reached the searchlight threshold."""


# ---------------------------------------------------------------------------
# PCA


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (K, F), orthonormal rows
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]


def pca_fit(X, k: int) -> PcaModel:
    """Top-``k`` principal axes of ``X`` by descending variance.

    Each component is signed so that its largest-magnitude entry is positive
    (the first such entry on exact ties).
    """
    X = np.asarray(X, dtype=np.float64)
    m, f = X.shape
    if not 1 <= k <= min(m, f):
        raise ValueError(f"k must lie in [1, {min(m, f)}], got {k}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = vt[:k].copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    comps *= np.sign(comps[np.arange(k), pivot])[:, None]
    var = s[:k] ** 2 / max(m - 1, 1)
    return PcaModel(mean, comps, var)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    return (np.asarray(X, dtype=np.float64) - model.mean) @ model.components.T


def pca_auto_grid(m_train: int, n_features: int) -> list[int]:
    """Doubling grid 1, 2, 4, ... capped by and ending at min(M_tr, F)."""
    top = min(m_train, n_features)
    grid = [1]
    while grid[-1] * 2 < top:
        grid.append(grid[-1] * 2)
    if grid[-1] != top:
        grid.append(top)
    return grid


# ---------------------------------------------------------------------------
# Searchlight


@dataclass(frozen=True)
class SearchlightConfig:
    """Block offsets around each voxel and the selection threshold.

    ``threshold`` is a number in [0, 1] or ``"auto"`` (chosen by nested
    cross-validation from :data:`AUTO_THRESHOLDS`). ``voxel_size`` converts
    coordinates to integer grid positions.
    """

    block: tuple = CORNER_BLOCK
    threshold: object = "auto"
    voxel_size: float = 1.0

    def __post_init__(self):
        block = tuple(tuple(int(v) for v in off) for off in self.block)
        if not block or (0, 0, 0) not in block or any(len(o) != 3 for o in block):
            raise ValueError("block must be non-empty 3-D offsets including (0, 0, 0)")
        object.__setattr__(self, "block", block)
        t = self.threshold
        if t != "auto" and not (isinstance(t, (int, float)) and np.isfinite(t)):
            raise ValueError("threshold must be a number or 'auto'")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")

    def to_dict(self) -> dict:
        return {"block": [list(o) for o in self.block], "threshold": self.threshold,
                "voxel_size": self.voxel_size}


def grid_positions(coords, voxel_size=1.0, atol=1e-6) -> np.ndarray:
    """Integer grid positions of the voxels; raises if any is off-grid."""
    scaled = np.asarray(coords, dtype=np.float64) / voxel_size
    snapped = np.rint(scaled)
    off = np.abs(scaled - snapped) > atol
    if off.any():
        j = int(np.flatnonzero(off.any(axis=1))[0])
        raise ValueError(f"voxel {j} at {coords[j].tolist()} is not on a grid of size {voxel_size}")
    return snapped.astype(np.int64)


def block_members(coords, cfg: SearchlightConfig) -> np.ndarray:
    """Voxel indices inside each voxel's block, shape (N, len(block)); -1 pads clipped slots."""
    pos = grid_positions(coords, cfg.voxel_size)
    lookup = {tuple(p): j for j, p in enumerate(pos)}
    out = np.full((len(pos), len(cfg.block)), -1, dtype=np.int64)
    for j, p in enumerate(pos):
        for b, off in enumerate(cfg.block):
            out[j, b] = lookup.get((p[0] + off[0], p[1] + off[1], p[2] + off[2]), -1)
    return out


def _voxel_loglik(X_tr, y_tr, X_te, n_classes):
    """Per-voxel Gaussian log-likelihood of each test sample, shape (n_te, C, N)."""
    means, variances = gnb.fit_gaussian(X_tr, y_tr, n_classes)
    z = (X_te[:, None, :] - means[None]) ** 2 / variances[None]
    return -0.5 * (z + np.log(2 * np.pi * variances)[None])


def searchlight_scores(train: Dataset, cfg: SearchlightConfig, cv_folds=None) -> np.ndarray:
    """Cross-validated GNB accuracy of every voxel's block, pooled over folds.

    ``cv_folds`` is a sequence of (train_idx, test_idx) pairs over the rows
    of ``train``; by default each run is held out once. Classes are the
    labels present in ``train``. Folds with an empty side are skipped; if
    none remain every score is 0.
    """
    members = block_members(train.coords, cfg)
    valid = members >= 0
    safe = np.where(valid, members, 0)
    classes, y = np.unique(train.labels, return_inverse=True)
    C = len(classes)
    if cv_folds is None:
        cv_folds = [(np.flatnonzero(train.run_ids != r), np.flatnonzero(train.run_ids == r))
                    for r in train.runs]
    correct = np.zeros(train.n_voxels)
    total = 0
    for tr, te in cv_folds:
        if len(tr) == 0 or len(te) == 0:
            continue
        ll = _voxel_loglik(train.intensities[tr], y[tr], train.intensities[te], C)
        prior = gnb.log_prior(y[tr], C)
        # sum member log-likelihoods: (n_te, C, N, B) -> (n_te, C, N)
        block_ll = np.where(valid[None, None], ll[:, :, safe], 0.0).sum(axis=3) + prior[None, :, None]
        pred = np.argmax(block_ll, axis=1)  # (n_te, N)
        correct += (pred == y[te][:, None]).sum(axis=0)
        total += len(te)
    return correct / total if total else correct


def searchlight_select(scores, threshold: float) -> np.ndarray:
    """Indices of voxels scoring at least ``threshold``."""
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.flatnonzero(scores >= threshold)
    if mask.size == 0:
        raise EmptySelectionError(f"no voxel scores >= {threshold}")
    return mask


def select_or_top1(scores, threshold: float) -> tuple[np.ndarray, bool]:
    """Like :func:`searchlight_select` but falls back to the single best voxel.

    Returns (mask, fell_back).
    """
    try:
        return searchlight_select(scores, threshold), False
    except EmptySelectionError:
        return np.array([int(np.argmax(scores))]), True


def write_scores_csv(scores, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["voxel_id", "score"])
        for j, s in enumerate(scores):
            w.writerow([j, repr(float(s))])
    return path


def write_mask_csv(mask, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["voxel_id"])
        for j in mask:
            w.writerow([int(j)])
    return path
