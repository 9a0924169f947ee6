"""Mesh arc descriptors for multi-voxel pattern analysis.

Each voxel is tied to its ``p`` nearest spatial neighbors by a small linear
regression; the fitted arc weights of all voxels form the feature vector of
a sample. The package covers dataset bundles, neighbor tables, arc-weight
extraction, principal-component and searchlight baselines, four classifier
families, leave-one-run-out cross-validation and a synthetic data generator.
"""

__version__ = "0.1.0"

from .baselines import SearchlightConfig, pca_fit, pca_transform, searchlight_scores, searchlight_select
from .classifiers import ClassifierSpec, predict, spec_from_name, train_classifier
from .crossval import PipelineSpec, run_cv
from .dataset import Dataset, DatasetError, load_dataset, shift_labels, split_by_run, write_dataset
from .mesh import MeshConfig, estimate_arc_weights, extract_mad, features_for, read_mad_bin, write_mad_bin
from .neighborhood import build_neighborhood_table
from .synthgen import SynthConfig, generate_synthetic

__all__ = [
    "__version__", "Dataset", "DatasetError", "load_dataset", "write_dataset", "shift_labels",
    "split_by_run", "build_neighborhood_table", "MeshConfig", "estimate_arc_weights", "extract_mad",
    "features_for", "write_mad_bin", "read_mad_bin", "pca_fit", "pca_transform", "SearchlightConfig",
    "searchlight_scores", "searchlight_select", "ClassifierSpec", "spec_from_name",
    "train_classifier", "predict", "PipelineSpec", "run_cv", "SynthConfig", "generate_synthetic",
]
