"""Voxel time-series datasets: validation, bundle I/O, label lag and run splits.

A dataset bundle is a directory holding four files::

    manifest.json   {"n_voxels", "n_samples", "n_classes", "class_names", "n_runs"}
    coords.csv      voxel_id,x,y,z
    data.csv        one row of N intensities per sample, no header
    labels.csv      sample_id,run_id,class_id
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"
COORDS = "coords.csv"
DATA = "data.csv"
LABELS = "labels.csv"


class DatasetError(ValueError):
    """Raised for malformed datasets or bundles."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Intensities of N voxels over M samples, with class labels and run ids.

    Parameters
    ----------
    coords : ndarray, shape (N, 3)
        Spatial position of each voxel.
    intensities : ndarray, shape (M, N)
        Row ``i`` holds the voxel intensities of sample ``i``.
    labels : ndarray of int, shape (M,)
        Class id of each sample, in ``0..C-1``.
    run_ids : ndarray of int, shape (M,)
        Acquisition run of each sample.
    class_names : tuple of str
        Names of the ``C`` classes.
    """

    coords: np.ndarray
    intensities: np.ndarray
    labels: np.ndarray
    run_ids: np.ndarray
    class_names: tuple = field(default=())

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        X = np.array(self.intensities, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        runs = np.array(self.run_ids, dtype=np.int64)
        names = tuple(str(n) for n in self.class_names)
        if not names and labels.size:
            names = tuple(str(c) for c in range(int(labels.max()) + 1))

        if coords.ndim != 2 or coords.shape[1] != 3 or len(coords) < 1:
            raise DatasetError(f"coords must have shape (N, 3) with N >= 1, got {coords.shape}")
        if X.ndim != 2 or X.shape[0] < 1:
            raise DatasetError(f"intensities must have shape (M, N) with M >= 1, got {X.shape}")
        if X.shape[1] != len(coords):
            raise DatasetError(
                f"intensities have {X.shape[1]} columns but there are {len(coords)} voxels")
        if labels.shape != (X.shape[0],) or runs.shape != (X.shape[0],):
            raise DatasetError(
                f"labels {labels.shape} and run_ids {runs.shape} must both have length "
                f"{X.shape[0]}")
        if not np.all(np.isfinite(coords)):
            raise DatasetError("coordinates contain non-finite values")
        if not np.all(np.isfinite(X)):
            i, j = np.argwhere(~np.isfinite(X))[0]
            raise DatasetError(f"non-finite intensity at sample {i}, voxel {j}")
        if labels.size and (labels.min() < 0 or labels.max() >= len(names)):
            raise DatasetError(f"class ids must lie in 0..{len(names) - 1}")
        _check_distinct(coords)

        for arr in (coords, X, labels, runs):
            arr.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "intensities", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "run_ids", runs)
        object.__setattr__(self, "class_names", names)

    @property
    def n_voxels(self) -> int:
        return self.intensities.shape[1]

    @property
    def n_samples(self) -> int:
        return self.intensities.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def runs(self) -> np.ndarray:
        """Distinct run ids in ascending order."""
        return np.unique(self.run_ids)

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def subset(self, index) -> "Dataset":
        """Dataset restricted to the given sample indices (or boolean mask)."""
        index = np.asarray(index)
        return Dataset(self.coords, self.intensities[index], self.labels[index],
                       self.run_ids[index], self.class_names)

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.coords, self.intensities, labels, self.run_ids, self.class_names)

    def equals(self, other: "Dataset") -> bool:
        """Exact field-by-field equality."""
        return (
            self.class_names == other.class_names
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.intensities, other.intensities)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.run_ids, other.run_ids)
        )


def _check_distinct(coords):
    _, first, counts = np.unique(coords, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 1):
        dup = np.sort(np.flatnonzero(np.all(coords == coords[first[counts > 1][0]], axis=1)))
        raise DatasetError(f"duplicate coordinates for voxels {dup.tolist()}")


def run_slices(run_ids) -> dict:
    """Map each run id to the sample indices belonging to it, in sample order."""
    run_ids = np.asarray(run_ids)
    return {int(r): np.flatnonzero(run_ids == r) for r in np.unique(run_ids)}


def shift_labels(d: Dataset, lag: int) -> Dataset:
    """Pair each run's labels with intensities ``lag`` samples later.

    Within each run, the label of sample ``i`` moves to the intensity row at
    position ``i + lag``. The first ``lag`` intensity rows and the last ``lag``
    labels of each run lose their partner and are dropped, so every run shrinks
    by exactly ``lag`` samples. Shifting never crosses a run boundary.
    """
    lag = int(lag)
    if lag < 0:
        raise DatasetError(f"lag must be non-negative, got {lag}")
    if lag == 0:
        return d
    slices = run_slices(d.run_ids)
    shortest = min(len(ix) for ix in slices.values())
    if lag >= shortest:
        raise DatasetError(f"lag {lag} must be smaller than the shortest run ({shortest} samples)")
    rows, labs = [], []
    for r in sorted(slices):
        ix = slices[r]
        rows.append(ix[lag:])
        labs.append(d.labels[ix[:-lag]])
    rows = np.concatenate(rows)
    return Dataset(d.coords, d.intensities[rows], np.concatenate(labs), d.run_ids[rows],
                   d.class_names)


def split_by_run(d: Dataset, held_out_run) -> tuple[Dataset, Dataset]:
    """Split into (train, test) where test holds exactly the samples of one run."""
    test_mask = d.run_ids == held_out_run
    if not test_mask.any():
        raise DatasetError(f"unknown run id {held_out_run!r}")
    return d.subset(~test_mask), d.subset(test_mask)


# ---------------------------------------------------------------------------
# Bundle I/O


def _fmt(x: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(x))


def write_dataset(d: Dataset, path, extra: dict | None = None) -> Path:
    """Write ``d`` as a dataset bundle directory. ``extra`` files are JSON-dumped by name."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n_voxels": d.n_voxels,
        "n_samples": d.n_samples,
        "n_classes": d.n_classes,
        "class_names": list(d.class_names),
        "n_runs": d.n_runs,
    }
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    with open(path / COORDS, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["voxel_id", "x", "y", "z"])
        for j, (x, y, z) in enumerate(d.coords):
            w.writerow([j, _fmt(x), _fmt(y), _fmt(z)])

    with open(path / DATA, "w", encoding="utf-8") as fh:
        for row in d.intensities:
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")

    with open(path / LABELS, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "run_id", "class_id"])
        for i, (r, c) in enumerate(zip(d.run_ids, d.labels)):
            w.writerow([i, int(r), int(c)])

    for name, payload in (extra or {}).items():
        (path / name).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def _read_rows(file: Path):
    if not file.is_file():
        raise DatasetError(f"{file.name}: missing file")
    with open(file, newline="", encoding="utf-8") as fh:
        # csv handles both LF and CRLF
        return [row for row in csv.reader(fh) if row]


def _parse_float(tok: str, file: str, row: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise DatasetError(f"{file}: row {row}: cannot parse {tok!r} as a number") from None
    if not np.isfinite(v):
        raise DatasetError(f"{file}: row {row}: non-finite value {tok!r}")
    return v


def _check_header(rows, expected, file):
    if not rows or [h.strip() for h in rows[0]] != expected:
        raise DatasetError(f"{file}: header must be {','.join(expected)}")


def load_dataset(path) -> Dataset:
    """Read and validate a dataset bundle directory.

    Row numbers in error messages are 1-based data rows (header excluded).
    """
    path = Path(path)
    if not path.is_dir():
        raise DatasetError(f"{path}: not a dataset bundle directory")
    mfile = path / MANIFEST
    if not mfile.is_file():
        raise DatasetError(f"{MANIFEST}: missing file")
    try:
        manifest = json.loads(mfile.read_text(encoding="utf-8"))
        n_vox = int(manifest["n_voxels"])
        n_samp = int(manifest["n_samples"])
        n_cls = int(manifest["n_classes"])
        names = [str(s) for s in manifest["class_names"]]
        n_runs = int(manifest["n_runs"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{MANIFEST}: malformed manifest ({exc})") from None
    if len(names) != n_cls:
        raise DatasetError(f"{MANIFEST}: {len(names)} class names for n_classes={n_cls}")

    rows = _read_rows(path / COORDS)
    _check_header(rows, ["voxel_id", "x", "y", "z"], COORDS)
    rows = rows[1:]
    if len(rows) != n_vox:
        raise DatasetError(f"{COORDS}: {len(rows)} rows but manifest n_voxels={n_vox}")
    coords = np.empty((n_vox, 3))
    for r, row in enumerate(rows, start=1):
        if len(row) != 4:
            raise DatasetError(f"{COORDS}: row {r}: expected 4 fields, got {len(row)}")
        if row[0].strip() != str(r - 1):
            raise DatasetError(f"{COORDS}: row {r}: voxel_id {row[0]} out of sequence")
        coords[r - 1] = [_parse_float(t, COORDS, r) for t in row[1:]]
    _, first, counts = np.unique(coords, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 1):
        dup = np.flatnonzero(np.all(coords == coords[first[counts > 1][0]], axis=1))
        raise DatasetError(f"{COORDS}: row {dup[1] + 1}: duplicate coordinates of row {dup[0] + 1}")

    rows = _read_rows(path / DATA)
    if len(rows) != n_samp:
        raise DatasetError(f"{DATA}: {len(rows)} rows but manifest n_samples={n_samp}")
    X = np.empty((n_samp, n_vox))
    for r, row in enumerate(rows, start=1):
        if len(row) != n_vox:
            raise DatasetError(f"{DATA}: row {r}: expected {n_vox} values, got {len(row)}")
        X[r - 1] = [_parse_float(t, DATA, r) for t in row]

    rows = _read_rows(path / LABELS)
    _check_header(rows, ["sample_id", "run_id", "class_id"], LABELS)
    rows = rows[1:]
    if len(rows) != n_samp:
        raise DatasetError(f"{LABELS}: {len(rows)} rows but manifest n_samples={n_samp}")
    labels = np.empty(n_samp, dtype=np.int64)
    runs = np.empty(n_samp, dtype=np.int64)
    for r, row in enumerate(rows, start=1):
        if len(row) != 3:
            raise DatasetError(f"{LABELS}: row {r}: expected 3 fields, got {len(row)}")
        try:
            sid, run, cls = (int(t) for t in row)
        except ValueError:
            raise DatasetError(f"{LABELS}: row {r}: non-integer field") from None
        if sid != r - 1:
            raise DatasetError(f"{LABELS}: row {r}: sample_id {sid} out of sequence")
        if not 0 <= cls < n_cls:
            raise DatasetError(f"{LABELS}: row {r}: class_id {cls} outside 0..{n_cls - 1}")
        labels[r - 1], runs[r - 1] = cls, run
    if len(np.unique(runs)) != n_runs:
        raise DatasetError(
            f"{LABELS}: {len(np.unique(runs))} distinct runs but manifest n_runs={n_runs}")

    return Dataset(coords, X, labels, runs, tuple(names))
