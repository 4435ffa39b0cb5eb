import numpy as np
import pytest

from cwinverse.stochastic import (
    BrownianPath,
    apply_noise,
    load_increments,
    sample_noise,
    sample_path,
    save_increments,
    split_seed,
)


def test_same_seed_identical_paths():
    a = sample_path(42, 100, 0.01)
    b = sample_path(42, 100, 0.01)
    assert np.array_equal(a.increments, b.increments)


def test_different_roles_and_indices_differ():
    a = sample_path(split_seed(7, "forward", 0), 50, 0.01)
    b = sample_path(split_seed(7, "forward", 1), 50, 0.01)
    c = sample_path(split_seed(7, "functional", 0), 50, 0.01)
    assert not np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)


def test_adding_paths_never_perturbs_existing_ones():
    first_alone = sample_path(split_seed(3, "forward", 0), 40, 0.02)
    first_again = sample_path(split_seed(3, "forward", 0), 40, 0.02)
    _ = sample_path(split_seed(3, "forward", 5), 40, 0.02)
    assert np.array_equal(first_alone.increments, first_again.increments)


def test_increment_moments():
    tau = 0.01
    n = 100_000
    path = sample_path(123, n, tau)
    mean = path.increments.mean()
    var = path.increments.var()
    assert abs(mean) < 4.0 * np.sqrt(tau / n)          # CLT bound
    assert abs(var - tau) < 0.05 * tau                 # chi-square concentration


def test_sample_path_validation():
    with pytest.raises(ValueError):
        sample_path(0, 0, 0.1)
    with pytest.raises(ValueError):
        sample_path(0, 10, -1.0)


def _toy_traces(rng, n_time=12, nx=6, ny=8):
    mask = np.zeros((nx + 1, ny + 1), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    f = np.zeros((n_time, nx + 1, ny + 1))
    f[:, mask] = rng.standard_normal((n_time, int(mask.sum()))) + 2.0
    gl = rng.standard_normal((n_time, ny + 1))
    gr = rng.standard_normal((n_time, ny + 1))
    gt = rng.standard_normal((n_time, nx + 1))
    return f, gl, gr, gt, mask


def test_zero_noise_is_identity():
    rng = np.random.default_rng(0)
    f, gl, gr, gt, mask = _toy_traces(rng)
    f2, gl2, gr2, gt2, _ = apply_noise(f, gl, gr, gt, mask, 0.0, 99)
    assert np.array_equal(f2, f) and np.array_equal(gl2, gl)
    assert np.array_equal(gr2, gr) and np.array_equal(gt2, gt)


def test_noise_envelope():
    rng = np.random.default_rng(1)
    f, gl, gr, gt, mask = _toy_traces(rng)
    delta = 0.1
    f2, gl2, gr2, gt2, _ = apply_noise(f, gl, gr, gt, mask, delta, 7)
    for clean, noisy in [(f[:, mask], f2[:, mask]), (gl, gl2), (gr, gr2), (gt, gt2)]:
        lo = np.minimum(clean * (1 - delta), clean * (1 + delta))
        hi = np.maximum(clean * (1 - delta), clean * (1 + delta))
        assert np.all(noisy >= lo - 1e-15) and np.all(noisy <= hi + 1e-15)


def test_mean_relative_deviation_is_half_delta():
    # E|xi| = 1/2 for xi uniform on [-1, 1]
    rng = np.random.default_rng(2)
    f, gl, gr, gt, mask = _toy_traces(rng, n_time=600, nx=10, ny=10)
    delta = 0.1
    f2, *_ = apply_noise(f, gl, gr, gt, mask, delta, 13)
    clean = f[:, mask]
    noisy = f2[:, mask]
    assert clean.size >= 10_000
    rel = np.abs(noisy - clean) / np.abs(clean)
    assert abs(rel.mean() - 0.05) < 0.005


def test_noise_determinism():
    rng = np.random.default_rng(3)
    f, gl, gr, gt, mask = _toy_traces(rng)
    out1 = apply_noise(f, gl, gr, gt, mask, 0.1, split_seed(5, "noise", 2))
    out2 = apply_noise(f, gl, gr, gt, mask, 0.1, split_seed(5, "noise", 2))
    for a, b in zip(out1[:4], out2[:4]):
        assert np.array_equal(a, b)


def test_noise_realization_entries_in_range():
    noise = sample_noise(11, 20, 30, 9, 9, 7)
    for xi in (noise.xi_f, noise.xi_g_left, noise.xi_g_right, noise.xi_g_top):
        assert np.all(xi >= -1.0) and np.all(xi <= 1.0)


def test_increment_persistence_roundtrip(tmp_path):
    path = sample_path(21, 65, 1.0 / 65)
    file = tmp_path / "w.field"
    save_increments(path, file)
    back = load_increments(file)
    assert isinstance(back, BrownianPath)
    assert back.tau == pytest.approx(path.tau)
    assert np.array_equal(back.increments, path.increments)
