import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshmvpa.dataset import Dataset
from meshmvpa.mesh import (MeshConfig, estimate_arc_weights, extract_mad, features_for,
                           read_mad_bin, read_mad_csv, write_mad_bin, write_mad_csv)
from meshmvpa.neighborhood import build_neighborhood_table

MIN_NORM = MeshConfig(p=1)


def svd_min_norm(A, b):
    """Minimum-norm least-squares solution from a thin SVD, independent of the module."""
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    keep = s > max(A.shape) * np.finfo(float).eps * (s.max() if s.size else 0)
    return vt[keep].T @ ((u[:, keep].T @ b) / s[keep])


@pytest.mark.parametrize("seed", range(100))
def test_single_sample_matches_svd_oracle(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 11))
    x = rng.standard_normal(p) * 10 ** rng.uniform(-3, 3)
    c = rng.standard_normal() * 10 ** rng.uniform(-3, 3)
    est = estimate_arc_weights(c, x, MIN_NORM)
    ref = svd_min_norm(x[None, :], np.array([c]))
    assert np.max(np.abs(est.weights - ref)) <= 1e-9
    assert est.residual <= 1e-9 * max(1.0, abs(c))


@pytest.mark.parametrize("seed", range(20))
def test_windowed_matches_svd_oracle(seed):
    rng = np.random.default_rng(1000 + seed)
    p, w = int(rng.integers(1, 7)), int(rng.integers(2, 9))
    x = rng.standard_normal((w, p))
    c = rng.standard_normal(w)
    est = estimate_arc_weights(c, x, MeshConfig(p=p, window=w))
    ref = svd_min_norm(x, c)
    np.testing.assert_allclose(est.weights, ref, atol=1e-9)
    assert est.residual == pytest.approx(np.sqrt(np.mean((c - x @ ref) ** 2)), abs=1e-9)


def test_ridge_matches_normal_equations():
    rng = np.random.default_rng(3)
    x, c = rng.standard_normal((5, 3)), rng.standard_normal(5)
    est = estimate_arc_weights(c, x, MeshConfig(p=3, estimator="ridge", ridge_lambda=0.5, window=5))
    ref = np.linalg.solve(x.T @ x + 0.5 * np.eye(3), x.T @ c)
    np.testing.assert_allclose(est.weights, ref, atol=1e-12)


def test_worked_examples():
    est = estimate_arc_weights(10.0, [3.0, 4.0], MIN_NORM)
    np.testing.assert_allclose(est.weights, [1.2, 1.6], atol=1e-15)
    assert est.residual == pytest.approx(0.0, abs=1e-12)

    est = estimate_arc_weights(5.0, [0.0, 0.0, 0.0], MIN_NORM)
    assert est.weights.tolist() == [0.0, 0.0, 0.0] and est.residual == 5.0

    est = estimate_arc_weights(6.0, [2.0], MIN_NORM)
    assert est.weights.tolist() == [3.0] and est.residual == 0.0

    est = estimate_arc_weights([1.0, 2.0, 3.0], [[1.0], [2.0], [3.0]], MeshConfig(p=1, window=3))
    assert est.weights[0] == pytest.approx(1.0, abs=1e-12)
    assert est.residual == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), s=st.floats(0.01, 100.0))
def test_joint_scaling_invariance(seed, s):
    # scaling center and neighbors together leaves the weights unchanged
    rng = np.random.default_rng(seed)
    x, c = rng.standard_normal(6), rng.standard_normal()
    a = estimate_arc_weights(c, x, MIN_NORM).weights
    b = estimate_arc_weights(s * c, s * x, MIN_NORM).weights
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_bad_shapes():
    with pytest.raises(ValueError):
        estimate_arc_weights([1.0, 2.0], [1.0, 2.0], MIN_NORM)
    with pytest.raises(ValueError):
        estimate_arc_weights(1.0, [np.nan], MIN_NORM)
    with pytest.raises(ValueError):
        MeshConfig(p=-1)
    with pytest.raises(ValueError):
        MeshConfig(estimator="ridge")


def small_dataset(rng, n=4, m=5):
    coords = np.array([[i, 0, 0] for i in range(n)], dtype=float)
    return Dataset(coords, rng.standard_normal((m, n)), np.arange(m) % 2, np.zeros(m, int))


def test_extract_shape_and_layout():
    rng = np.random.default_rng(0)
    d = small_dataset(rng)
    cfg = MeshConfig(p=2)
    table = build_neighborhood_table(d.coords, 2)
    mad = extract_mad(d, table, cfg)
    assert mad.shape == (5, 8)
    for i in range(5):
        for j in range(4):
            ref = estimate_arc_weights(d.intensities[i, j], d.intensities[i, table.indices[j]], cfg)
            np.testing.assert_array_equal(mad.values[i, 2 * j:2 * j + 2], ref.weights)


def test_half_valued_neighbor_gives_two():
    # nearest-neighbor relations always contain a mutual pair, so the halving
    # chain is expressed through a directed table 0 -> 1 -> 2 -> 3
    coords = np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0], [6, 0, 0]], dtype=float)
    X = np.array([[8.0, 4.0, 2.0, 1.0], [-2.0, -1.0, -0.5, -0.25], [3.0, 1.5, 0.75, 0.375]])
    d = Dataset(coords, X, [0, 1, 0], [0, 0, 0])
    table = build_neighborhood_table(coords, 1)
    chain = type(table)(1, np.array([[1], [2], [3], [2]]), table.distances)
    vals = extract_mad(d, chain, MeshConfig(p=1)).values
    np.testing.assert_array_equal(vals[:, :3], 2.0)


def test_features_for_reduction():
    d = small_dataset(np.random.default_rng(1))
    np.testing.assert_array_equal(features_for("mad", d, MeshConfig(p=0)), d.intensities)
    np.testing.assert_array_equal(features_for("raw", d, MeshConfig(p=3)), d.intensities)
    assert features_for("mad", d, MeshConfig(p=1)).shape == (5, 4)


def test_window_stays_inside_runs():
    rng = np.random.default_rng(2)
    coords = np.array([[i, 0, 0] for i in range(3)], dtype=float)
    runs = np.array([0] * 4 + [1] * 5)
    d = Dataset(coords, rng.standard_normal((9, 3)), np.zeros(9, int), runs)
    cfg = MeshConfig(p=1, window=3)
    mad = extract_mad(d, build_neighborhood_table(coords, 1), cfg)
    assert mad.row_index.tolist() == [0, 1, 4, 5, 6]
    X = d.intensities
    ref = estimate_arc_weights(X[4:7, 0], X[4:7, 1:2], cfg).weights
    np.testing.assert_allclose(mad.values[2, :1], ref, rtol=1e-12)


def test_extraction_is_deterministic():
    d = small_dataset(np.random.default_rng(3), m=300)
    table = build_neighborhood_table(d.coords, 2)
    a = extract_mad(d, table, MeshConfig(p=2)).values
    b = extract_mad(d, table, MeshConfig(p=2)).values
    assert a.tobytes() == b.tobytes()


def test_mad_files_round_trip(tmp_path):
    d = small_dataset(np.random.default_rng(4), m=7)
    mad = extract_mad(d, build_neighborhood_table(d.coords, 3), MeshConfig(p=3))
    write_mad_bin(mad, tmp_path / "mad.bin", {"seed": 1})
    values, header = read_mad_bin(tmp_path / "mad.bin")
    assert values.tobytes() == mad.values.tobytes()
    assert header["rows"] == 7 and header["cols"] == 12 and header["provenance"] == {"seed": 1}
    write_mad_csv(mad, tmp_path / "mad.csv")
    assert read_mad_csv(tmp_path / "mad.csv").tobytes() == mad.values.tobytes()
