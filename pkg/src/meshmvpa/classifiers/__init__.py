"""Four classifier families behind one train/predict contract.

>>> spec = spec_from_name("knn", k=3)
>>> model = train_classifier(spec, X_train, y_train)       # doctest: +SKIP
>>> predict(model, X_test)                                   # doctest: +SKIP
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gnb, knn, nn, svm

FAMILIES = ("knn", "gnb", "svm", "nn")

DEFAULTS = {
    "knn": {"k": 1},
    "gnb": {"density": "gaussian", "bandwidth": "auto"},
    "svm": {"kernel": "linear", "sigma": 1.0, "c": 1.0},
    # stand-ins for unspecified toolbox defaults
    "nn": {"hidden_units": 10, "learning_rate": 0.1, "epochs": 500, "seed": 0},
}

# command-line classifier names -> (family, fixed params, fields searched by default)
NAMED = {
    "knn": ("knn", {}, ("k",)),
    "gnb": ("gnb", {"density": "gaussian"}, ()),
    "gnb-kde": ("gnb", {"density": "kde", "bandwidth": "auto"}, ()),
    "svm-linear": ("svm", {"kernel": "linear"}, ("c",)),
    "svm-rbf": ("svm", {"kernel": "rbf"}, ("sigma", "c")),
    "nn": ("nn", {}, ()),
}


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    """Classifier family, its hyperparameters, and which of them to tune.

    ``params`` only admits the keys of the chosen family; missing keys take
    the family defaults. Names listed in ``search`` are picked by nested
    cross-validation and their values in ``params`` are ignored until then.
    """

    family: str
    params: dict = field(default_factory=dict)
    search: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ClassifierError(f"unknown classifier family {self.family!r}")
        allowed = DEFAULTS[self.family]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ClassifierError(f"{self.family} does not take {sorted(unknown)}")
        bad = set(self.search) - set(allowed)
        if bad:
            raise ClassifierError(f"cannot search {sorted(bad)} for {self.family}")
        full = {**allowed, **self.params}
        _validate(self.family, full)
        object.__setattr__(self, "params", full)
        object.__setattr__(self, "search", tuple(self.search))

    def with_params(self, **values) -> "ClassifierSpec":
        """Copy with ``values`` fixed and removed from the search list."""
        return ClassifierSpec(self.family, {**self.params, **values},
                              tuple(s for s in self.search if s not in values))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params), "search": list(self.search)}

    @classmethod
    def from_dict(cls, d) -> "ClassifierSpec":
        return cls(d["family"], dict(d.get("params", {})), tuple(d.get("search", ())))


def _validate(family, p):
    if family == "knn":
        if int(p["k"]) != p["k"] or p["k"] < 1:
            raise ClassifierError("knn.k must be a positive integer")
    elif family == "gnb":
        if p["density"] not in ("gaussian", "kde"):
            raise ClassifierError("gnb.density must be 'gaussian' or 'kde'")
        bw = p["bandwidth"]
        if bw != "auto" and not (isinstance(bw, (int, float)) and bw > 0):
            raise ClassifierError("gnb.bandwidth must be positive or 'auto'")
    elif family == "svm":
        if p["kernel"] not in ("linear", "rbf"):
            raise ClassifierError("svm.kernel must be 'linear' or 'rbf'")
        if not (p["sigma"] > 0 and p["c"] > 0):
            raise ClassifierError("svm.sigma and svm.c must be positive")
    elif family == "nn":
        if int(p["hidden_units"]) != p["hidden_units"] or p["hidden_units"] < 0:
            raise ClassifierError("nn.hidden_units must be a non-negative integer")
        if not p["learning_rate"] > 0 or int(p["epochs"]) != p["epochs"] or p["epochs"] < 1:
            raise ClassifierError("nn.learning_rate must be positive and nn.epochs a positive integer")


def spec_from_name(name: str, **params) -> ClassifierSpec:
    """Spec for a command-line name such as ``"svm-rbf"``.

    Explicitly given hyperparameters are fixed; the remaining default search
    fields stay searchable.
    """
    if name not in NAMED:
        raise ClassifierError(f"unknown classifier {name!r}; choose from {sorted(NAMED)}")
    family, fixed, search = NAMED[name]
    given = {k: v for k, v in params.items() if v is not None}
    return ClassifierSpec(family, {**fixed, **given}, tuple(s for s in search if s not in given))


@dataclass(frozen=True, eq=False)
class Model:
    """A trained classifier. ``state`` maps names to float/int arrays."""

    spec: ClassifierSpec
    classes: np.ndarray
    state: dict


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ClassifierError(f"X must be a 2-D array with at least one feature, got {X.shape}")
    if y.shape != (X.shape[0],):
        raise ClassifierError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if X.shape[0] < 2:
        raise ClassifierError("need at least two training samples")
    if not np.all(np.isfinite(X)):
        raise ClassifierError("training features contain non-finite values")
    return X, y


def train_classifier(spec: ClassifierSpec, X, y) -> Model:
    X, y = _check_xy(X, y)
    classes, y_index = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ClassifierError("training set contains a single class")
    C = len(classes)
    p = spec.params
    if spec.family == "knn":
        if p["k"] > len(X):
            raise ClassifierError(f"knn.k={p['k']} exceeds the {len(X)} training samples")
        state = {"X": X.copy(), "y_index": y_index}
    elif spec.family == "gnb":
        state = {"log_prior": gnb.log_prior(y_index, C)}
        if p["density"] == "gaussian":
            state["means"], state["variances"] = gnb.fit_gaussian(X, y_index, C)
        else:
            for c in range(C):
                Xc = X[y_index == c]
                h = (gnb.silverman_bandwidth(Xc) if p["bandwidth"] == "auto"
                     else np.full(X.shape[1], max(float(p["bandwidth"]), gnb.FLOOR)))
                state[f"store_{c}"] = Xc.copy()
                state[f"bandwidth_{c}"] = h
    elif spec.family == "svm":
        K = svm.kernel_matrix(X, X, p["kernel"], p["sigma"])
        machines = svm.fit_ovo(K, y_index, C, float(p["c"]))
        support = np.unique(np.concatenate([m[2] for m in machines]))
        state = {"X_support": X[support]}
        remap = np.full(len(X), -1)
        remap[support] = np.arange(len(support))
        for n, (a, b, sv, coef, rho) in enumerate(machines):
            state[f"pair_{n}"] = np.array([a, b], dtype=np.int64)
            state[f"sv_{n}"] = remap[sv]
            state[f"coef_{n}"] = coef
            state[f"rho_{n}"] = np.array(rho)
    else:
        state = nn.train(X, y_index, C, int(p["hidden_units"]), float(p["learning_rate"]),
                         int(p["epochs"]), int(p["seed"]))
    for name, arr in state.items():
        if not np.all(np.isfinite(arr)):
            raise ClassifierError(f"fitted parameter {name} is not finite")
    return Model(spec, classes, state)


def _n_features(model: Model) -> int:
    s = model.state
    for key in ("X", "means", "store_0", "X_support", "W1"):
        if key in s:
            return s[key].shape[0] if key == "W1" else s[key].shape[1]
    raise AssertionError("unrecognised model state")


def decision_scores(model: Model, X) -> np.ndarray:
    """Class scores whose row-wise argmax is the prediction (gnb and nn only)."""
    s = model.state
    if model.spec.family == "gnb":
        if model.spec.params["density"] == "gaussian":
            ll = gnb.gaussian_log_likelihood(X, s["means"], s["variances"])
        else:
            C = len(model.classes)
            ll = gnb.kde_log_likelihood(X, [s[f"store_{c}"] for c in range(C)],
                                        [s[f"bandwidth_{c}"] for c in range(C)])
        return ll + s["log_prior"]
    if model.spec.family == "nn":
        return nn.logits(s, X)
    raise ClassifierError(f"{model.spec.family} has no score function")


def predict_proba(model: Model, X) -> np.ndarray:
    """Class posteriors of a gnb model."""
    if model.spec.family != "gnb":
        raise ClassifierError("posteriors are only defined for gnb")
    return gnb.posteriors(decision_scores(model, np.asarray(X, dtype=np.float64)))


def predict(model: Model, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != _n_features(model):
        raise ClassifierError(
            f"model expects {_n_features(model)} features, got array of shape {X.shape}")
    s = model.state
    fam = model.spec.family
    if fam == "knn":
        idx = knn.predict_indices(s["X"], s["y_index"], len(model.classes), X,
                                  [int(model.spec.params["k"])])[0]
    elif fam == "svm":
        p = model.spec.params
        Kq = svm.kernel_matrix(X, s["X_support"], p["kernel"], p["sigma"])
        n_pairs = len(model.classes) * (len(model.classes) - 1) // 2
        machines = [(*s[f"pair_{n}"], s[f"sv_{n}"], s[f"coef_{n}"], float(s[f"rho_{n}"]))
                    for n in range(n_pairs)]
        idx = svm.predict_ovo(Kq, machines, len(model.classes))
    else:
        # argmax returns the first maximum -> smallest class on ties
        idx = np.argmax(decision_scores(model, X), axis=1)
    return model.classes[idx]


# ---------------------------------------------------------------------------
# JSON envelope with base64 little-endian blocks


def _encode(arr) -> dict:
    arr = np.asarray(arr)
    kind = "i8" if np.issubdtype(arr.dtype, np.integer) else "f8"
    data = np.ascontiguousarray(arr, dtype="<" + kind).tobytes()
    return {"dtype": kind, "shape": list(arr.shape), "data": base64.b64encode(data).decode("ascii")}


def _decode(block) -> np.ndarray:
    raw = base64.b64decode(block["data"])
    arr = np.frombuffer(raw, dtype="<" + block["dtype"]).reshape(block["shape"])
    return arr.astype(np.int64 if block["dtype"] == "i8" else np.float64)


def model_to_json(model: Model) -> dict:
    return {
        "family": model.spec.family,
        "spec": model.spec.to_dict(),
        "classes": _encode(model.classes),
        "params": {name: _encode(arr) for name, arr in model.state.items()},
    }


def model_from_json(payload: dict) -> Model:
    spec = ClassifierSpec.from_dict(payload["spec"])
    if spec.family != payload["family"]:
        raise ClassifierError("family field disagrees with spec")
    state = {name: _decode(b) for name, b in payload["params"].items()}
    return Model(spec, _decode(payload["classes"]), state)


def save_model(model: Model, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_json(model)), encoding="utf-8")
    return path


def load_model(path) -> Model:
    return model_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "ClassifierError", "ClassifierSpec", "Model", "NAMED", "DEFAULTS", "spec_from_name",
    "train_classifier", "predict", "predict_proba", "decision_scores", "save_model",
    "load_model", "model_to_json", "model_from_json",
]
