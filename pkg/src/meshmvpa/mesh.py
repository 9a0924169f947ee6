"""Mesh arc weights and Mesh Arc Descriptor (MAD) features.

Every voxel is modelled as a linear combination of its ``p`` nearest spatial
neighbors. The combination weights, one vector per (sample, voxel) pair, are
estimated by least squares and concatenated voxel by voxel into a feature
vector of length ``N * p``. Weight ``k`` of voxel ``j`` sits in column
``j * p + k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, run_slices
from .neighborhood import NeighborhoodTable, build_neighborhood_table

ESTIMATORS = ("min-norm", "ridge")

# samples per vectorized block in extract_mad
_CHUNK = 256


@dataclass(frozen=True)
class MeshConfig:
    """Mesh order and arc-weight estimator.

    ``p = 0`` selects the raw-intensity representation. ``window`` pools that
    many consecutive samples of the same run into one estimate.
    """

    p: int = 6
    estimator: str = "min-norm"
    ridge_lambda: float = 0.0
    window: int = 1

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 0:
            raise ValueError(f"p must be a non-negative integer, got {self.p}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.ridge_lambda < 0 or not np.isfinite(self.ridge_lambda):
            raise ValueError("ridge_lambda must be a finite non-negative number")
        if self.estimator == "ridge" and self.ridge_lambda <= 0:
            raise ValueError("ridge estimator needs ridge_lambda > 0")
        if int(self.window) != self.window or self.window < 1:
            raise ValueError(f"window must be a positive integer, got {self.window}")

    def to_dict(self) -> dict:
        return {"p": int(self.p), "estimator": self.estimator,
                "ridge_lambda": float(self.ridge_lambda), "window": int(self.window)}


@dataclass(frozen=True, eq=False)
class ArcWeightEstimate:
    weights: np.ndarray
    residual: float


@dataclass(frozen=True, eq=False)
class MadMatrix:
    """MAD features plus the sample each row was computed for.

    ``row_index[r]`` is the dataset sample whose (first) intensity row produced
    ``values[r]``; with ``window == 1`` it is simply ``arange(M)``.
    """

    values: np.ndarray
    p: int
    estimator: str
    window: int
    row_index: np.ndarray = field(default=None)

    @property
    def shape(self):
        return self.values.shape

    def header(self) -> dict:
        rows, cols = self.values.shape
        return {"rows": int(rows), "cols": int(cols), "p": int(self.p),
                "estimator": self.estimator, "window": int(self.window)}


def _solve_batch(centers, neighbors, cfg: MeshConfig):
    """Arc weights for a batch of problems.

    centers : (B, w); neighbors : (B, w, p). Returns weights (B, p) and
    residuals (B,), the residual being the RMS error over the ``w`` equations.
    """
    w = centers.shape[1]
    if cfg.estimator == "min-norm" and w == 1:
        x = neighbors[:, 0, :]
        c = centers[:, 0]
        sq = np.einsum("bk,bk->b", x, x)
        scale = np.divide(c, sq, out=np.zeros_like(c), where=sq > 0)
        weights = scale[:, None] * x
    elif cfg.estimator == "min-norm":
        weights = np.einsum("bpw,bw->bp", np.linalg.pinv(neighbors), centers)
    else:
        p = neighbors.shape[2]
        gram = np.einsum("bwp,bwq->bpq", neighbors, neighbors) + cfg.ridge_lambda * np.eye(p)
        rhs = np.einsum("bwp,bw->bp", neighbors, centers)
        weights = np.linalg.solve(gram, rhs[..., None])[..., 0]
    err = centers - np.einsum("bwp,bp->bw", neighbors, weights)
    residual = np.sqrt(np.einsum("bw,bw->b", err, err) / w)
    return weights, residual


def estimate_arc_weights(center, neighbors, cfg: MeshConfig) -> ArcWeightEstimate:
    """Least-squares weights expressing ``center`` through its ``neighbors``.

    Parameters
    ----------
    center : float or array_like, shape (w,)
        Center-voxel intensity at each pooled sample.
    neighbors : array_like, shape (p,) or (w, p)
        Neighbor intensities; row ``r`` belongs to ``center[r]``.
    cfg : MeshConfig

    With a single sample and the ``min-norm`` estimator the problem has one
    equation, and the minimum-norm solution is ``c * x / |x|**2``.
    """
    c = np.atleast_1d(np.asarray(center, dtype=np.float64))
    x = np.asarray(neighbors, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if c.ndim != 1 or x.ndim != 2 or x.shape[0] != c.shape[0]:
        raise ValueError(
            f"center has shape {c.shape} but neighbors has shape {x.shape}; expected (w,) and (w, p)")
    if x.shape[1] < 1:
        raise ValueError("need at least one neighbor")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(x))):
        raise ValueError("non-finite input")
    weights, residual = _solve_batch(c[None, :], x[None, :, :], cfg)
    return ArcWeightEstimate(weights[0], float(residual[0]))


def _window_rows(d: Dataset, w: int) -> np.ndarray:
    """Sample indices of every sliding window, shape (n_windows, w)."""
    windows = []
    slices = run_slices(d.run_ids)
    for r in sorted(slices):
        ix = slices[r]
        if len(ix) < w:
            raise ValueError(f"run {r} has {len(ix)} samples, fewer than window {w}")
        windows.append(np.lib.stride_tricks.sliding_window_view(ix, w))
    return np.concatenate(windows)


def extract_mad(d: Dataset, table: NeighborhoodTable, cfg: MeshConfig) -> MadMatrix:
    """MAD features for every sample of ``d``.

    With ``window > 1``, each run yields one row per sliding window of
    consecutive samples, stamped with the window's first sample, so every
    run loses ``window - 1`` rows. Windows never cross runs.
    """
    if cfg.p < 1:
        raise ValueError("extract_mad needs p >= 1; use features_for for p = 0")
    if table.n_voxels != d.n_voxels:
        raise ValueError(
            f"neighborhood table covers {table.n_voxels} voxels, dataset has {d.n_voxels}")
    if table.p != cfg.p:
        raise ValueError(f"neighborhood table has order {table.p}, config asks for p={cfg.p}")

    X = d.intensities
    n, p, w = d.n_voxels, cfg.p, cfg.window
    if w == 1:
        windows = np.arange(d.n_samples)[:, None]
    else:
        windows = _window_rows(d, w)
    starts = windows[:, 0].copy()

    out = np.empty((len(starts), n * p))
    for lo in range(0, len(starts), _CHUNK):
        rows = windows[lo:lo + _CHUNK]
        block = X[rows]  # (b, w, n)
        centers = block.transpose(0, 2, 1).reshape(-1, w)  # (b*n, w)
        nbrs = block[:, :, table.indices]  # (b, w, n, p)
        nbrs = nbrs.transpose(0, 2, 1, 3).reshape(-1, w, p)
        weights, _ = _solve_batch(centers, nbrs, cfg)
        out[lo:lo + len(rows)] = weights.reshape(len(rows), n * p)
    return MadMatrix(out, p, cfg.estimator, w, starts)


def features_for(mode: str, d: Dataset, cfg: MeshConfig, table: NeighborhoodTable | None = None):
    """Feature matrix for ``mode`` in {"raw", "mad"}; ``p = 0`` always gives raw."""
    if mode not in ("raw", "mad"):
        raise ValueError(f"unknown feature mode {mode!r}")
    if mode == "raw" or cfg.p == 0:
        return d.intensities
    if table is None:
        table = build_neighborhood_table(d.coords, cfg.p)
    return extract_mad(d, table, cfg).values


# ---------------------------------------------------------------------------
# mad.bin / mad.csv


def write_mad_bin(mad: MadMatrix, path, provenance: dict | None = None) -> Path:
    """JSON header line followed by little-endian float64 values, row-major."""
    header = mad.header()
    if provenance is not None:
        header["provenance"] = provenance
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(mad.values, dtype="<f8").tobytes())
    return path


def read_mad_bin(path) -> tuple[np.ndarray, dict]:
    """Return (values, header) from a file written by :func:`write_mad_bin`."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    rows, cols = header["rows"], header["cols"]
    if len(raw) != rows * cols * 8:
        raise ValueError(f"{path}: expected {rows * cols * 8} data bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(np.float64)
    return values, header


def write_mad_csv(mad: MadMatrix, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in mad.values:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
    return path


def read_mad_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
