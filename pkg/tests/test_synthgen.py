import numpy as np
import pytest

from meshmvpa.neighborhood import build_neighborhood_table
from meshmvpa.synthgen import (SynthConfig, _class_operators, generate_synthetic, grid_coords, load_synth_config,
                               write_synthetic)
from meshmvpa.classifiers import spec_from_name
from meshmvpa.crossval import PipelineSpec, run_cv
from meshmvpa.dataset import load_dataset

SMALL = dict(grid=(4, 4, 3), n_classes=4, n_runs=3, trials_per_run=4)


def test_same_seed_is_bit_identical():
    a = generate_synthetic(SynthConfig(seed=5, **SMALL))
    b = generate_synthetic(SynthConfig(seed=5, **SMALL))
    assert a.intensities.tobytes() == b.intensities.tobytes()
    assert a.equals(b)
    c = generate_synthetic(SynthConfig(seed=6, **SMALL))
    assert not np.array_equal(a.intensities, c.intensities)


def test_benchmark_sized_structure():
    d = generate_synthetic(SynthConfig())
    assert (d.n_voxels, d.n_samples, d.n_classes, d.n_runs) == (216, 2400, 10, 8)
    for r in range(8):
        counts = np.bincount(d.labels[d.run_ids == r], minlength=10)
        assert counts.tolist() == [30] * 10
    # round-robin within each run
    assert d.labels[:20].tolist() == list(range(10)) * 2


def test_marginal_audit():
    # 2000+ samples; per-class per-voxel moments agree across classes
    d = generate_synthetic(SynthConfig(grid=(4, 4, 4), n_classes=5, n_runs=4, trials_per_run=100,
                                       seed=1))
    assert d.n_samples >= 2000
    means = np.stack([d.intensities[d.labels == c].mean(axis=0) for c in range(5)])
    variances = np.stack([d.intensities[d.labels == c].var(axis=0) for c in range(5)])
    assert np.ptp(means, axis=0).max() < 0.05
    assert np.ptp(variances, axis=0).max() < 0.1


def test_population_variance_is_one_before_gain():
    cfg = SynthConfig(**SMALL)
    table = build_neighborhood_table(grid_coords(cfg.grid), cfg.p_gen)
    rng = np.random.default_rng(0)
    w = rng.standard_normal((cfg.n_classes, cfg.n_voxels, cfg.p_gen))
    ops = _class_operators(cfg, table, w)
    for op in ops:
        np.testing.assert_allclose(np.diag(op @ op.T), 1.0, atol=1e-12)


def test_each_voxel_depends_only_on_its_neighbors():
    # the inverse of a class operator couples a voxel to itself and its p_gen neighbors only
    cfg = SynthConfig(**SMALL)
    table = build_neighborhood_table(grid_coords(cfg.grid), cfg.p_gen)
    w = np.random.default_rng(1).standard_normal((cfg.n_classes, cfg.n_voxels, cfg.p_gen))
    allowed = np.eye(cfg.n_voxels, dtype=bool)
    allowed[np.repeat(np.arange(cfg.n_voxels), cfg.p_gen), table.indices.ravel()] = True
    for op in _class_operators(cfg, table, w):
        inv = np.linalg.inv(op)
        assert np.abs(inv[~allowed]).max() < 1e-10
        assert np.all(np.abs(inv[allowed]) > 1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(grid=(2, 1, 1), p_gen=6)
    with pytest.raises(ValueError):
        SynthConfig(n_classes=1)
    with pytest.raises(ValueError):
        SynthConfig(coupling=1.0)
    with pytest.raises(ValueError):
        SynthConfig(noise_sigma=-1)
    with pytest.raises(ValueError):
        SynthConfig(gain_fields=0)


def test_write_echoes_config(tmp_path):
    cfg = SynthConfig(seed=9, **SMALL)
    write_synthetic(cfg, tmp_path / "b", {"tool": "x"})
    assert load_synth_config(tmp_path / "b" / "synth_config.json") == cfg
    assert load_dataset(tmp_path / "b").equals(generate_synthetic(cfg))


def test_antithetic_twins_stay_in_their_run():
    d = generate_synthetic(SynthConfig(grid=(3, 3, 3), n_classes=3, n_runs=3, trials_per_run=3))
    X, C, per_run = d.intensities, 3, 9
    for i in range(d.n_samples):
        pos = i % per_run
        if pos % (2 * C) >= C:
            np.testing.assert_array_equal(X[i], -X[i - C])
            assert d.run_ids[i] == d.run_ids[i - C] and d.labels[i] == d.labels[i - C]


@pytest.mark.parametrize("seed", [0, 1])
def test_marginals_alone_score_near_chance(seed):
    # gnb on raw intensities sees only per-voxel means and variances
    d = generate_synthetic(SynthConfig(seed=seed))
    acc = run_cv(d, PipelineSpec("raw", spec_from_name("gnb"))).mean_accuracy
    assert abs(acc - 0.10) <= 0.08


def test_held_out_run_does_not_shift_class_statistics():
    # every (run, class) group is matched on its own, so dropping a run keeps classes equal
    d = generate_synthetic(SynthConfig(grid=(4, 4, 3), n_classes=4, n_runs=4, trials_per_run=6))
    keep = d.run_ids != 2
    variances = np.stack([(d.intensities[keep & (d.labels == c)] ** 2).mean(axis=0)
                          for c in range(4)])
    np.testing.assert_allclose(variances, np.broadcast_to(variances[0], variances.shape), rtol=1e-10)
