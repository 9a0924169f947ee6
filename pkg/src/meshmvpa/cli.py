"""Command-line entry point: ``meshmvpa {synth,extract,cv,bench}``.

Exit status is 0 on success, 2 on a usage error and 1 when the pipeline
fails. Failures print one ``meshmvpa: error: ...`` line and remove any
partially written output.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from . import __version__
from .baselines import SearchlightConfig
from .classifiers import ClassifierError, spec_from_name
from .crossval import PipelineSpec, run_cv, write_bench_table, write_report
from .dataset import DatasetError, load_dataset, shift_labels
from .mesh import MeshConfig, extract_mad, write_mad_bin, write_mad_csv
from .neighborhood import build_neighborhood_table
from .synthgen import SynthConfig, write_synthetic

log = logging.getLogger("meshmvpa")

BENCH_FEATURES = ("raw", "mad", "pca", "searchlight")
BENCH_CLASSIFIERS = ("knn", "gnb-kde", "svm-linear", "svm-rbf", "nn")
UNIMPLEMENTED_FEATURES = ("ica", "kernel-pca", "glm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _auto_or_float(text):
    return text if text == "auto" else float(text)


def _auto_or_int(text):
    return text if text == "auto" else int(text)


def _add_pipeline_flags(p, bench=False):
    p.add_argument("--data", required=True, type=Path, help="dataset bundle directory")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--lag", type=int, default=3, help="label shift in samples (default 3)")
    p.add_argument("--p", type=int, default=6, help="mesh order for mad features")
    p.add_argument("--estimator", choices=("min-norm", "ridge"), default="min-norm")
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=0.0)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--pca-k", type=_auto_or_int, default="auto")
    p.add_argument("--threshold", type=_auto_or_float, default="auto",
                   help="searchlight accuracy threshold or 'auto'")
    if bench:
        return
    p.add_argument("--features", required=True, choices=BENCH_FEATURES)
    p.add_argument("--classifier", required=True,
                   choices=("knn", "gnb", "gnb-kde", "svm-linear", "svm-rbf", "nn"))
    p.add_argument("--k", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--bandwidth", type=_auto_or_float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--nn-seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meshmvpa", description="Mesh arc descriptor MVPA toolkit")
    parser.add_argument("--version", action="version", version=f"meshmvpa {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset bundle")
    p.add_argument("--config", type=Path, help="JSON file with generator settings")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("extract", help="compute mesh arc descriptors")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--p", required=True, type=int)
    p.add_argument("--estimator", choices=("min-norm", "ridge"), required=True)
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=0.0)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--out", required=True, type=Path, help="mad.bin, or a .csv path")

    _add_pipeline_flags(sub.add_parser("cv", help="leave-one-run-out cross-validation"))
    _add_pipeline_flags(sub.add_parser("bench", help="full feature x classifier grid"), bench=True)
    return parser


def _provenance(argv, config: dict, seed=None) -> dict:
    return {"tool": "meshmvpa", "version": __version__, "argv": list(argv),
            "config": config, "seed": seed}


def _classifier_params(args) -> dict:
    names = {"k": "k", "sigma": "sigma", "c": "c", "bandwidth": "bandwidth",
             "hidden": "hidden_units", "lr": "learning_rate", "epochs": "epochs", "nn_seed": "seed"}
    return {dst: getattr(args, src) for src, dst in names.items() if getattr(args, src) is not None}


def _pipeline(args, features, classifier, params) -> PipelineSpec:
    p = 0 if features == "raw" else args.p
    mesh = MeshConfig(p=p if features == "mad" else 6, estimator=args.estimator,
                      ridge_lambda=args.ridge_lambda, window=args.window)
    return PipelineSpec(features, spec_from_name(classifier, **params), mesh_cfg=mesh,
                        pca_k=args.pca_k, searchlight_cfg=SearchlightConfig(threshold=args.threshold))


def _load_shifted(args):
    d = load_dataset(args.data)
    return shift_labels(d, args.lag) if args.lag else d


def _cmd_synth(args, argv):
    cfg = json.loads(args.config.read_text(encoding="utf-8")) if args.config else {}
    cfg.pop("provenance", None)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg = SynthConfig.from_dict(cfg)
    write_synthetic(cfg, args.out, _provenance(argv, cfg.to_dict(), cfg.seed))


def _cmd_extract(args, argv):
    cfg = MeshConfig(p=args.p, estimator=args.estimator, ridge_lambda=args.ridge_lambda,
                     window=args.window)
    d = load_dataset(args.data)
    mad = extract_mad(d, build_neighborhood_table(d.coords, cfg.p), cfg)
    if args.out.suffix.lower() == ".csv":
        write_mad_csv(mad, args.out)
    else:
        write_mad_bin(mad, args.out, _provenance(argv, cfg.to_dict()))


def _run_one(d, spec, lag, out, argv):
    result = run_cv(d, spec)
    config = {"pipeline": spec.to_dict(), "lag": lag}
    write_report(result, out, _provenance(argv, config))
    return result


def _cmd_cv(args, argv):
    spec = _pipeline(args, args.features, args.classifier, _classifier_params(args))
    result = _run_one(_load_shifted(args), spec, args.lag, args.out, argv)
    log.info("mean accuracy %.4f over %d folds", result.mean_accuracy, len(result.folds))


def _cmd_bench(args, argv):
    d = _load_shifted(args)
    args.out.mkdir(parents=True, exist_ok=False)
    cells = {}
    for feat in BENCH_FEATURES:
        for clf in BENCH_CLASSIFIERS:
            spec = _pipeline(args, feat, clf, {})
            cell_dir = args.out / f"{feat}__{clf}"
            cell_dir.mkdir()
            result = _run_one(d, spec, args.lag, cell_dir / "report.json", argv)
            cells[(feat, clf)] = result.mean_accuracy
            log.info("%s + %s: %.4f", feat, clf, result.mean_accuracy)
    write_bench_table(cells, BENCH_FEATURES + UNIMPLEMENTED_FEATURES, BENCH_CLASSIFIERS,
                      args.out / "bench_table.csv")


COMMANDS = {"synth": _cmd_synth, "extract": _cmd_extract, "cv": _cmd_cv, "bench": _cmd_bench}


def _remove(path: Path, existed: bool):
    if existed or not path.exists():
        return
    if path.is_dir():
        shutil.rmtree(path)
    else:
        path.unlink()


def run_command(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"meshmvpa: usage error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    out = args.out
    existed = out.exists()
    if existed and args.verb in ("synth", "bench"):
        print(f"meshmvpa: usage error: output directory {out} already exists", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.verb](args, argv)
    except (DatasetError, ClassifierError, ValueError, OSError) as exc:
        _remove(out, existed)
        kind = "bad bundle" if isinstance(exc, DatasetError) else "pipeline error"
        print(f"meshmvpa: error: {kind}: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        _remove(out, existed)
        raise
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
