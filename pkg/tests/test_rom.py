import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from advrom import rom
from advrom.errors import ArgumentError, NumericError, RomIOError
from advrom.snapshots import SnapshotMatrix


@pytest.fixture
def corpus():
    rng = np.random.default_rng(0)
    basis = rng.standard_normal((6, 40))
    coeff = rng.standard_normal((30, 6)) * np.array([5, 3, 2, 1, 0.5, 0.1])
    return coeff @ basis + rng.normal(0, 1e-3, (30, 40)) + 2.0


def test_two_by_two_hand_svd():
    model = rom.fit_pca(np.array([[1.0, 1.0], [-1.0, -1.0]]))
    assert model.r == 1
    np.testing.assert_allclose(model.mean, [0.0, 0.0])
    np.testing.assert_allclose(model.singular_values, [2.0])
    np.testing.assert_allclose(model.eofs, [[1 / np.sqrt(2), 1 / np.sqrt(2)]])
    np.testing.assert_allclose(model.scores[:, 0], [np.sqrt(2), -np.sqrt(2)])
    np.testing.assert_allclose(rom.reconstruct_array(model, model.scores, 1),
                               [[1.0, 1.0], [-1.0, -1.0]], atol=1e-15)


def test_identical_snapshots_have_zero_spectrum():
    v = np.array([1.0, -2.0, 3.0])
    model = rom.fit_pca(np.tile(v, (5, 1)))
    np.testing.assert_array_equal(model.mean, v)
    assert np.all(model.singular_values == 0)
    assert np.all(model.scores == 0)


def test_model_invariants(corpus):
    model = rom.fit_pca(corpus)
    assert model.r == min(corpus.shape[0] - 1, corpus.shape[1])
    np.testing.assert_allclose(model.eofs @ model.eofs.T, np.eye(model.r), atol=1e-8)
    assert np.all(np.diff(model.singular_values) <= 0)
    gram = model.scores.T @ model.scores
    off = gram - np.diag(np.diag(gram))
    assert np.max(np.abs(off)) <= 1e-6 * np.max(np.diag(gram))
    # sign convention: largest-magnitude entry of each EOF is positive
    idx = np.argmax(np.abs(model.eofs), axis=1)
    assert np.all(model.eofs[np.arange(model.r), idx] > 0)


def test_singular_values_match_gram_eigenvalues(corpus):
    model = rom.fit_pca(corpus)
    c = corpus - corpus.mean(axis=0)
    ev = np.sort(np.linalg.eigvalsh(c @ c.T))[::-1][:model.r]
    np.testing.assert_allclose(model.singular_values ** 2, np.clip(ev, 0, None),
                               rtol=1e-8, atol=1e-8 * ev[0])


def test_full_rank_reconstruction_and_mean_limit(corpus):
    model = rom.fit_pca(corpus)
    full = rom.reconstruct(model, model.scores, model.r)
    assert np.linalg.norm(full.data - corpus) <= 1e-8 * np.linalg.norm(corpus)
    mean_only = rom.reconstruct_array(model, np.zeros((4, 0)), 0)
    assert np.all(mean_only == model.mean)


def test_tau_out_of_range_and_width_mismatch(corpus):
    model = rom.fit_pca(corpus)
    with pytest.raises(ArgumentError):
        rom.reconstruct_array(model, model.scores, model.r + 1)
    with pytest.raises(ArgumentError):
        rom.reconstruct_array(model, model.scores[:, :3], 4)
    with pytest.raises(ArgumentError):
        rom.project(model, np.zeros((2, 39)), 3)


def test_non_finite_input_is_numeric_error():
    x = np.ones((3, 2))
    x[1, 1] = np.inf
    with pytest.raises(NumericError):
        rom.fit_pca(x)


def test_projection_consistency(corpus):
    model = rom.fit_pca(corpus)
    np.testing.assert_allclose(rom.project(model, corpus, model.r), model.scores, atol=1e-6)
    np.testing.assert_allclose(rom.project(model, model.mean[None], 5), 0.0, atol=1e-12)
    s = np.random.default_rng(1).standard_normal((7, 5))
    back = rom.project(model, rom.reconstruct_array(model, s, 5), 5)
    np.testing.assert_allclose(back, s, atol=1e-6)


def test_truncation_error_monotone_and_eckart_young(corpus):
    model = rom.fit_pca(corpus)
    maes = [rom.truncation_error(model, corpus, t) for t in range(model.r + 1)]
    assert np.all(np.diff(maes) <= 1e-12)
    s2 = model.singular_values ** 2
    for tau in (1, 2, 4, 6):
        approx = rom.reconstruct_array(model, model.scores[:, :tau], tau)
        resid = np.sum((corpus - approx) ** 2)
        assert abs(resid - s2[tau:].sum()) <= 1e-6 * s2[tau:].sum()


def test_scaling_hand_examples():
    s = np.array([[0.0, -1.0, 3.0], [5.0, 0.25, 3.0], [10.0, 1.0, 3.0]])
    params = rom.fit_scaling(s)
    out = rom.scale(s, params)
    np.testing.assert_allclose(out[:, 0], [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(out[:, 1], s[:, 1])
    np.testing.assert_array_equal(out[:, 2], 0.0)
    assert params.constant.tolist() == [False, False, True]


def test_scaling_does_not_clamp_out_of_range_values():
    params = rom.fit_scaling(np.array([[0.0], [10.0]]))
    np.testing.assert_allclose(rom.scale(np.array([[20.0], [-10.0]]), params), [[3.0], [-3.0]])


def test_unscale_width_mismatch():
    params = rom.fit_scaling(np.zeros((3, 2)) + np.arange(3)[:, None])
    with pytest.raises(ArgumentError):
        rom.unscale(np.zeros((1, 3)), params)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_scale_round_trip_property(s):
    params = rom.fit_scaling(s)
    scaled = rom.scale(s, params)
    assert np.all(scaled >= -1 - 1e-12) and np.all(scaled <= 1 + 1e-12)
    back = rom.unscale(scaled, params)
    span = np.max(np.abs(s), axis=0) + 1.0
    assert np.all(np.abs(back - s) <= 1e-12 * span * 16)


def test_pca_file_round_trip(tmp_path, corpus):
    model = rom.fit_pca(SnapshotMatrix(corpus))
    params = rom.fit_scaling(model.scores[:, :4])
    path = tmp_path / "m.rompca"
    rom.save_pca(model, path, params)
    back, back_params = rom.load_pca(path)
    for name in ("mean", "eofs", "scores", "singular_values"):
        np.testing.assert_array_equal(getattr(back, name), getattr(model, name))
    np.testing.assert_array_equal(back_params.col_min, params.col_min)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(RomIOError):
        rom.load_pca(path)


def test_scores_csv(tmp_path):
    p = tmp_path / "s.csv"
    rom.export_scores_csv(np.array([[1.0, 2.0]]), p, dt=0.5)
    assert p.read_text().splitlines() == ["t,pc0,pc1", "0.0,1.0,2.0"]
