"""Leave-one-run-out cross-validation with nested hyperparameter search.

Every fold fits its feature transform (principal components, searchlight
mask) and selects hyperparameters on the training runs only, using an inner
leave-one-run-out loop. Mesh features depend on each sample and the fixed
voxel coordinates alone, so they are computed once for the whole dataset.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .baselines import PcaModel, SearchlightConfig
from .classifiers import DEFAULTS, ClassifierSpec, knn, predict, svm, train_classifier
from .dataset import Dataset
from .mesh import MeshConfig, extract_mad
from .neighborhood import build_neighborhood_table

log = logging.getLogger(__name__)

FEATURE_MODES = ("raw", "mad", "pca", "searchlight")
LOG_GRID = tuple(range(-10, 6))  # natural-log exponents for sigma and c


class CrossValidationError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineSpec:
    """Feature extraction followed by a classifier.

    ``pca_k`` is an integer or ``"auto"``; the searchlight threshold lives in
    ``searchlight_cfg``. Classifier fields listed in ``classifier.search`` are
    tuned per fold.
    """

    feature_mode: str
    classifier: ClassifierSpec
    mesh_cfg: MeshConfig = field(default_factory=MeshConfig)
    pca_k: object = "auto"
    searchlight_cfg: SearchlightConfig = field(default_factory=SearchlightConfig)

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise CrossValidationError(
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}")
        if self.pca_k != "auto" and not (int(self.pca_k) == self.pca_k and self.pca_k >= 1):
            raise CrossValidationError("pca_k must be a positive integer or 'auto'")

    def to_dict(self) -> dict:
        d = {"feature_mode": self.feature_mode, "classifier": self.classifier.to_dict()}
        if self.classifier.family == "nn":
            # network settings left at stand-in values rather than chosen by the user
            d["stand_in_defaults"] = sorted(k for k, v in DEFAULTS["nn"].items()
                                            if self.classifier.params.get(k) == v)
        if self.feature_mode == "mad":
            d["mesh"] = self.mesh_cfg.to_dict()
        if self.feature_mode == "pca":
            d["pca_k"] = self.pca_k
        if self.feature_mode == "searchlight":
            d["searchlight"] = self.searchlight_cfg.to_dict()
        return d


@dataclass
class FoldReport:
    held_out_run: int
    accuracy: float
    chosen_hyperparams: dict
    confusion: np.ndarray
    grids: dict = field(default_factory=dict)
    predictions: np.ndarray = None
    truth: np.ndarray = None
    n_train: int = 0
    skipped: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "held_out_run": int(self.held_out_run),
            "accuracy": None if self.skipped else float(self.accuracy),
            "chosen_hyperparams": self.chosen_hyperparams,
            "confusion": np.asarray(self.confusion).tolist(),
            "grids": self.grids,
            "n_train": int(self.n_train),
            "n_test": int(np.asarray(self.confusion).sum()),
            "predictions": [] if self.predictions is None else np.asarray(self.predictions).tolist(),
            "skipped": self.skipped,
            "note": self.note,
        }


@dataclass
class CVResult:
    pipeline: PipelineSpec
    folds: list

    @property
    def fold_accuracies(self) -> list:
        return [f.accuracy for f in self.folds if not f.skipped]

    @property
    def mean_accuracy(self) -> float:
        accs = self.fold_accuracies
        return float(np.mean(accs)) if accs else float("nan")

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline.to_dict(),
            "folds": [f.to_dict() for f in self.folds],
            "fold_accuracies": self.fold_accuracies,
            "mean_accuracy": self.mean_accuracy,
        }


def accuracy(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if len(truth) == 0:
        raise ValueError("need at least one prediction")
    return float(np.mean(predicted == truth))


# ---------------------------------------------------------------------------
# grids


def knn_grid(m_train: int) -> list[int]:
    return list(range(1, math.isqrt(m_train) + 1))


def log_grid() -> list[float]:
    return [math.exp(g) for g in LOG_GRID]


def classifier_grids(spec: ClassifierSpec, m_train: int) -> dict:
    """Candidate values of every searched classifier field, ascending."""
    grids = {}
    for name in spec.search:
        if name == "k":
            grids[name] = knn_grid(m_train)
        elif name in ("sigma", "c"):
            grids[name] = log_grid()
        elif name == "bandwidth":
            grids[name] = ["auto"]
        else:
            raise CrossValidationError(f"no search grid defined for {spec.family}.{name}")
        if not grids[name]:
            raise CrossValidationError(f"empty grid for {name}")
    return grids


# ---------------------------------------------------------------------------
# feature stages: prepare() learns from training rows, apply() maps any rows


class _Identity:
    param_name = None

    def candidates(self, m_train, n_features):
        return [None]

    def prepare(self, d_train, Z_train):
        return None

    def apply(self, state, param, Z):
        return Z


class _Pca:
    param_name = "pca_k"

    def __init__(self, k):
        self.k = k

    def candidates(self, m_train, n_features):
        top = min(m_train, n_features)
        if self.k == "auto":
            return baselines.pca_auto_grid(m_train, n_features)
        if self.k > top:
            raise CrossValidationError(f"pca_k={self.k} exceeds min(M_tr, F)={top}")
        return [int(self.k)]

    def prepare(self, d_train, Z_train):
        return baselines.pca_fit(Z_train, min(Z_train.shape))

    def apply(self, state: PcaModel, k, Z):
        k = min(k, state.k)
        return (Z - state.mean) @ state.components[:k].T


class _Searchlight:
    param_name = "searchlight_threshold"

    def __init__(self, cfg: SearchlightConfig):
        self.cfg = cfg

    def candidates(self, m_train, n_features):
        if self.cfg.threshold == "auto":
            return list(baselines.AUTO_THRESHOLDS)
        return [float(self.cfg.threshold)]

    def prepare(self, d_train, Z_train):
        return baselines.searchlight_scores(d_train, self.cfg)

    def apply(self, scores, threshold, Z):
        mask, _ = baselines.select_or_top1(scores, threshold)
        return Z[:, mask]


def _stage(spec: PipelineSpec):
    if spec.feature_mode == "pca":
        return _Pca(spec.pca_k)
    if spec.feature_mode == "searchlight":
        return _Searchlight(spec.searchlight_cfg)
    return _Identity()


# ---------------------------------------------------------------------------
# tuning


def _combos(grids: dict):
    names = list(grids)
    return names, list(itertools.product(*(grids[n] for n in names)))


def _count_correct(spec, names, combos, F_tr, y_tr, F_val, y_val):
    """Correct validation predictions for every classifier combo."""
    if spec.family == "knn" and names == ["k"]:
        classes, y_idx = np.unique(y_tr, return_inverse=True)
        ks = [c[0] for c in combos]
        usable = [k for k in ks if k <= len(y_tr)]
        pred = knn.predict_indices(F_tr, y_idx, len(classes), F_val, usable)
        out = np.zeros(len(ks))
        out[: len(usable)] = (classes[pred] == y_val[None, :]).sum(axis=1)
        return out
    if spec.family == "svm" and "c" in names:
        return _count_correct_svm(spec, names, combos, F_tr, y_tr, F_val, y_val)
    out = np.zeros(len(combos))
    for n, combo in enumerate(combos):
        model = train_classifier(spec.with_params(**dict(zip(names, combo))), F_tr, y_tr)
        out[n] = np.sum(predict(model, F_val) == y_val)
    return out


def _count_correct_svm(spec, names, combos, F_tr, y_tr, F_val, y_val):
    """SVM grid with one kernel per sigma and warm starts along ascending cost."""
    classes, y_idx = np.unique(y_tr, return_inverse=True)
    if len(classes) < 2:
        raise CrossValidationError("training set contains a single class")
    out = np.zeros(len(combos))
    by_sigma = {}
    for n, combo in enumerate(combos):
        params = {**spec.params, **dict(zip(names, combo))}
        by_sigma.setdefault(params["sigma"], []).append((params["c"], n))
    for sigma, runs in by_sigma.items():
        K = svm.kernel_matrix(F_tr, F_tr, spec.params["kernel"], sigma)
        Kq = svm.kernel_matrix(F_val, F_tr, spec.params["kernel"], sigma)
        runs.sort()
        path = svm.fit_ovo_path(K, y_idx, len(classes), [c for c, _ in runs])
        for (_, n), machines in zip(runs, path):
            pred = classes[svm.predict_ovo(Kq, machines, len(classes))]
            out[n] = np.sum(pred == y_val)
    return out


def tune_hyperparams(d_train: Dataset, Z_train, y_train, runs_train, spec: PipelineSpec,
                     stage=None) -> tuple[dict, dict]:
    """Grid search with inner leave-one-run-out CV on training rows only.

    Returns ``(chosen, grids)``. Candidates are tried in ascending order of
    the feature parameter, then of each classifier field; the first best
    inner accuracy wins, so ties go to smaller values.
    """
    stage = stage or _stage(spec)
    m_train = len(y_train)
    grids = classifier_grids(spec.classifier, m_train)
    feats = stage.candidates(m_train, Z_train.shape[1])
    echo = dict(grids)
    for name in ("sigma", "c"):
        if name in grids:
            echo[f"log_{name}"] = list(LOG_GRID)
    if stage.param_name:
        echo[stage.param_name] = feats
    if not grids and len(feats) == 1:
        chosen = {stage.param_name: feats[0]} if stage.param_name else {}
        return chosen, echo

    inner_runs = np.unique(runs_train)
    if len(inner_runs) < 2:
        raise CrossValidationError("hyperparameter search needs at least two training runs")
    names, combos = _combos(grids)
    correct = np.zeros((len(feats), len(combos)))
    total = 0
    for r in inner_runs:
        tr = runs_train != r
        val = ~tr
        state = stage.prepare(d_train.subset(np.flatnonzero(tr)) if d_train is not None else None,
                              Z_train[tr])
        for f, param in enumerate(feats):
            F_tr = stage.apply(state, param, Z_train[tr])
            F_val = stage.apply(state, param, Z_train[val])
            if len(np.unique(y_train[tr])) < 2:
                continue
            correct[f] += _count_correct(spec.classifier, names, combos, F_tr, y_train[tr],
                                         F_val, y_train[val])
        total += int(val.sum())
    f_best, c_best = np.unravel_index(np.argmax(correct), correct.shape)
    chosen = dict(zip(names, combos[c_best]))
    if stage.param_name:
        chosen = {stage.param_name: feats[f_best], **chosen}
    chosen["inner_accuracy"] = float(correct[f_best, c_best] / total)
    return chosen, echo


# ---------------------------------------------------------------------------
# outer loop


def static_features(d: Dataset, spec: PipelineSpec):
    """Features that need no fitting, with the sample index of each row."""
    if spec.feature_mode == "mad" and spec.mesh_cfg.p > 0:
        table = build_neighborhood_table(d.coords, spec.mesh_cfg.p)
        mad = extract_mad(d, table, spec.mesh_cfg)
        return mad.values, mad.row_index
    return d.intensities, np.arange(d.n_samples)


def run_cv(d: Dataset, spec: PipelineSpec) -> CVResult:
    """One fold per run; folds are reported in ascending run-id order."""
    runs = d.runs
    if len(runs) < 2:
        raise CrossValidationError(f"need at least 2 runs, dataset has {len(runs)}")
    Z, rows = static_features(d, spec)
    y = d.labels[rows]
    run_of = d.run_ids[rows]
    stage = _stage(spec)
    all_classes = np.unique(d.labels)
    C = d.n_classes

    folds = []
    for r in runs:
        tr = np.flatnonzero(run_of != r)
        te = np.flatnonzero(run_of == r)
        missing = np.setdiff1d(all_classes, y[tr])
        if missing.size or len(te) == 0:
            note = (f"classes {missing.tolist()} absent from training runs" if missing.size
                    else "no test samples")
            log.warning("fold %s skipped: %s", r, note)
            folds.append(FoldReport(int(r), float("nan"), {}, np.zeros((C, C), dtype=int),
                                    n_train=len(tr), skipped=True, note=note))
            continue
        d_tr = d.subset(rows[tr])
        chosen, grids = tune_hyperparams(d_tr, Z[tr], y[tr], run_of[tr], spec, stage)
        state = stage.prepare(d_tr, Z[tr])
        param = chosen.get(stage.param_name) if stage.param_name else None
        F_tr = stage.apply(state, param, Z[tr])
        F_te = stage.apply(state, param, Z[te])
        note = ""
        if stage.param_name == "searchlight_threshold":
            mask, fell_back = baselines.select_or_top1(state, param)
            chosen["n_selected_voxels"] = int(len(mask))
            if fell_back:
                note = "empty searchlight mask; fell back to the top-scoring voxel"
        fixed = {k: v for k, v in chosen.items() if k in spec.classifier.params}
        model = train_classifier(spec.classifier.with_params(**fixed), F_tr, y[tr])
        pred = predict(model, F_te)
        conf = np.zeros((C, C), dtype=int)
        np.add.at(conf, (y[te], pred), 1)
        folds.append(FoldReport(
            held_out_run=int(r), accuracy=accuracy(pred, y[te]), chosen_hyperparams=chosen,
            confusion=conf, grids=grids, predictions=pred, truth=y[te], n_train=len(tr), note=note))
    return CVResult(spec, folds)


# ---------------------------------------------------------------------------
# reports


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_report(result: CVResult, path, provenance: dict | None = None) -> Path:
    payload = result.to_dict()
    if provenance is not None:
        payload["provenance"] = provenance
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n", encoding="utf-8")
    return path


def write_bench_table(cells: dict, features, classifiers, path) -> Path:
    """Rows are feature methods, columns classifiers; missing cells print ``n/a``."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["features", *classifiers])
        for feat in features:
            row = [feat]
            for clf in classifiers:
                v = cells.get((feat, clf))
                row.append("n/a" if v is None else repr(float(v)))
            w.writerow(row)
    return path
