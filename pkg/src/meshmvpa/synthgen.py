"""Synthetic voxel datasets whose classes differ only in local linear structure.

Each class owns a fixed pattern of neighbor weights. Within a sample, every
voxel equals a weighted sum of its ``p_gen`` nearest neighbors, scaled by
``coupling``, plus its own white innovation. The class operator is rescaled
so each voxel has unit variance under every class, and noise is added.

Trials come in antithetic pairs (a draw and its negation, same class and
run), so every class has per-voxel mean exactly 0. Each (run, class) group
is then rescaled to unit per-voxel RMS, which keeps held-out runs from
shifting the training statistics of their own class. Finally every sample
of a run is multiplied by that run's gain, the RMS of a few smooth log-normal fields,
shared by all classes and normalized so that each voxel has unit variance over the
dataset. The gain is nearly constant across a mesh, so arc weights barely
see it, while it reweights the voxels that dominate raw Euclidean distances.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataset import Dataset, write_dataset
from .neighborhood import build_neighborhood_table


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    Every run holds ``trials_per_run`` samples of each class, so a dataset
    has ``n_classes * n_runs * trials_per_run`` samples. With ``antithetic``
    and an odd ``trials_per_run``, the last trial of each class in a run has
    no twin and class means are only approximately zero.
    """

    grid: tuple = (6, 6, 6)
    n_classes: int = 10
    n_runs: int = 8
    trials_per_run: int = 30
    p_gen: int = 6
    noise_sigma: float = 0.1
    smoothness: float = 0.0
    coupling: float = 0.99
    gain_strength: float = 4.0
    gain_width: float = 3.0
    gain_fields: int = 30
    antithetic: bool = True
    seed: int = 0

    def __post_init__(self):
        grid = tuple(int(g) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        if len(grid) != 3 or min(grid) < 1:
            raise ValueError(f"grid must be three positive integers, got {self.grid}")
        n = int(np.prod(grid))
        if self.p_gen < 1 or n < self.p_gen + 1:
            raise ValueError(f"need 1 <= p_gen <= N - 1 (N={n}), got p_gen={self.p_gen}")
        if self.n_classes < 2 or self.n_runs < 2 or self.trials_per_run < 1:
            raise ValueError("need n_classes >= 2, n_runs >= 2, trials_per_run >= 1")
        for name in ("noise_sigma", "smoothness", "gain_strength", "gain_width"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.gain_fields < 1:
            raise ValueError("gain_fields must be positive")
        if not 0 <= self.coupling < 1:
            raise ValueError(f"coupling must lie in [0, 1), got {self.coupling}")

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.grid))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)


def grid_coords(grid) -> np.ndarray:
    """Integer coordinates of a ``gx * gy * gz`` grid in C order."""
    axes = [np.arange(g, dtype=np.float64) for g in grid]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)


def _smooth_field(rng, grid, sigma):
    field = rng.standard_normal(grid)
    if sigma > 0:
        field = gaussian_filter(field, sigma, mode="nearest")
    std = field.std()
    return (field - field.mean()) / std if std > 0 else field


def _class_operators(cfg: SynthConfig, table, weights):
    """Map white innovations to a class's field, one (N, N) matrix per class.

    Each voxel equals ``coupling`` times a weighted sum of its ``p_gen``
    neighbors plus its own innovation. Rows are rescaled so every voxel has
    unit variance under every class.
    """
    n = cfg.n_voxels
    ops = np.empty((cfg.n_classes, n, n))
    rows = np.repeat(np.arange(n), cfg.p_gen)
    for c, w in enumerate(weights):
        A = np.eye(n)
        coupling = cfg.coupling * w / np.abs(w).sum(axis=1, keepdims=True)
        np.subtract.at(A, (rows, table.indices.ravel()), coupling.ravel())
        op = np.linalg.inv(A)
        ops[c] = op / np.linalg.norm(op, axis=1, keepdims=True)
    return ops


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Deterministic in ``cfg.seed``; each sample draws from its own substream."""
    coords = grid_coords(cfg.grid)
    table = build_neighborhood_table(coords, cfg.p_gen)
    C, R, T = cfg.n_classes, cfg.n_runs, cfg.trials_per_run
    per_run = C * T
    M = R * per_run

    streams = np.random.SeedSequence(cfg.seed).spawn(M + 1 + R)
    wrng = np.random.default_rng(streams[0])
    weights = wrng.standard_normal((C, cfg.n_voxels, cfg.p_gen))
    weights /= np.linalg.norm(weights, axis=2, keepdims=True)
    ops = _class_operators(cfg, table, weights)

    labels = np.tile(np.arange(C), R * T)
    run_ids = np.repeat(np.arange(R), per_run)

    X = np.empty((M, cfg.n_voxels))
    for i in range(M):
        if cfg.antithetic and ((i % per_run) // C) % 2 == 1:
            # negated twin of the same class's previous trial in this run
            X[i] = -X[i - C]
            continue
        rng = np.random.default_rng(streams[i + 1])
        innov = _smooth_field(rng, cfg.grid, cfg.smoothness).reshape(-1)
        X[i] = ops[labels[i]] @ innov + cfg.noise_sigma * rng.standard_normal(cfg.n_voxels)

    # each run's gain is the RMS of several smooth log-normal bump fields
    gains = np.ones((R, cfg.n_voxels))
    if cfg.gain_strength > 0:
        for r in range(R):
            grng = np.random.default_rng(streams[M + 1 + r])
            fields = [_smooth_field(grng, cfg.grid, cfg.gain_width).reshape(-1)
                      for _ in range(cfg.gain_fields)]
            gains[r] = np.sqrt(np.mean(np.exp(2 * cfg.gain_strength * np.array(fields)), axis=0))
        gains /= np.sqrt((gains ** 2).mean(axis=0))

    for r, c in itertools.product(range(R), range(C)):
        rows = (run_ids == r) & (labels == c)
        mu = 0.0 if cfg.antithetic else X[rows].mean(axis=0)
        sd = np.sqrt(((X[rows] - mu) ** 2).mean(axis=0))
        X[rows] = (X[rows] - mu) / np.where(sd > 0, sd, 1.0) * gains[r]

    names = tuple(f"class_{c}" for c in range(C))
    return Dataset(coords, X, labels, run_ids, names)


def write_synthetic(cfg: SynthConfig, out, provenance: dict | None = None) -> Path:
    """Generate and write a bundle, echoing the config into ``synth_config.json``."""
    d = generate_synthetic(cfg)
    echo = cfg.to_dict()
    if provenance is not None:
        echo["provenance"] = provenance
    return write_dataset(d, out, extra={"synth_config.json": echo})


def load_synth_config(path) -> SynthConfig:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    d.pop("provenance", None)
    return SynthConfig.from_dict(d)
