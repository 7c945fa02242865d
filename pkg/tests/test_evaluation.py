from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from acoustic_kd.data import ArrayDataset
from acoustic_kd.evaluation import (ALL, K_CANDIDATES, LinearSVM, confusion, confusion_from_predictions,
                                    evaluate_cross_scenario, extract_features, format_transfer_table, knn_classify,
                                    pairwise_sq_distances, standardize, svm_classify, transfer_csv,
                                    transfer_evaluate, transfer_split, validate_k)
from acoustic_kd.features import make_splits
from acoustic_kd.models import ModelSpec, build_hearnet
from oracles import brute_knn


def _label_dataset(classes=6, scenarios=(1, 2, 3), takes=10, per_take=2, dim=4):
    """Inputs carry the label in column 0 so a callable can be a perfect classifier."""
    rows, labels, scen, take_ids = [], [], [], []
    tid = 0
    for s in scenarios:
        for c in range(classes):
            for _ in range(takes):
                for _ in range(per_take):
                    x = np.zeros(dim)
                    x[0] = c
                    rows.append(x)
                    labels.append(c)
                    scen.append(s)
                    take_ids.append(tid)
                tid += 1
    n = len(labels)
    return ArrayDataset(np.asarray(rows), np.asarray(labels), np.arange(n, dtype=np.uint64),
                        np.asarray(scen), np.asarray(take_ids))


def _perfect(x):
    return x[:, 0].astype(np.int64)


def _constant(x):
    return np.zeros(len(x), dtype=np.int64)


@pytest.fixture(scope="module")
def labelled():
    ds = _label_dataset()
    return ds, make_splits(ds.take_infos(), seed=3)


# ------------------------------------------------------------ scenario matrix


def test_constant_model_cells_are_class_prior(labelled):
    ds, split = labelled
    m = evaluate_cross_scenario({1: _constant, 2: _constant, 3: _constant, ALL: _constant}, ds, split)
    assert m.accuracy.shape == (4, 4)
    np.testing.assert_allclose(m.accuracy, 1 / 6, atol=1e-12)


def test_perfect_model_cells_are_one(labelled):
    ds, split = labelled
    m = evaluate_cross_scenario({r: _perfect for r in (1, 2, 3, ALL)}, ds, split)
    np.testing.assert_array_equal(m.accuracy, 1.0)


def test_cell_counts_match_split_tallies(labelled):
    ds, split = labelled
    m = evaluate_cross_scenario({r: _perfect for r in (1, 2, 3, ALL)}, ds, split)
    for i, r in enumerate(m.rows):
        for j, c in enumerate(m.cols[:-1]):
            scen = ds.by_scenario(c)
            want = len(scen.split(split, "test")) if r in (c, ALL) else len(scen)
            assert m.counts[i, j] == want
        assert m.counts[i, -1] == m.counts[i, :-1].sum()


def test_off_diagonal_uses_every_sample(labelled):
    ds, split = labelled
    m = evaluate_cross_scenario({1: _perfect}, ds, split, rows=[1])
    assert m.counts[0, m.cols.index(2)] == 120 and m.counts[0, m.cols.index(1)] < 120


def test_missing_model_is_an_error(labelled):
    ds, split = labelled
    with pytest.raises(KeyError, match="no model"):
        evaluate_cross_scenario({1: _perfect}, ds, split)


def test_matrix_csv_layout(labelled):
    ds, split = labelled
    m = evaluate_cross_scenario({1: _perfect}, ds, split, rows=[1])
    lines = m.to_csv().strip().splitlines()
    assert lines[0] == "train,test,accuracy,count"
    assert len(lines) == 1 + 4
    assert lines[1].startswith("1,1,1.000000,")
    assert "train\\test" in m.format()


# --------------------------------------------------------------- confusion


def test_perfect_confusion_is_diagonal(labelled):
    ds, _ = labelled
    cm = confusion(_perfect, ds, classes=6)
    assert np.count_nonzero(cm.counts - np.diag(np.diag(cm.counts))) == 0
    np.testing.assert_array_equal(np.diag(cm.counts), np.bincount(ds.labels))
    assert cm.accuracy == 1.0


def test_constant_confusion_is_single_column(labelled):
    ds, _ = labelled
    cm = confusion(_constant, ds, classes=6)
    assert np.all(cm.counts[:, 1:] == 0)
    np.testing.assert_array_equal(cm.counts[:, 0], np.bincount(ds.labels))


def test_confusion_trace_matches_matrix_accuracy(labelled):
    ds, split = labelled
    rng = np.random.default_rng(0)
    noisy = lambda x: np.where(rng.random(len(x)) < 0.6, x[:, 0], rng.integers(0, 6, len(x))).astype(np.int64)
    preds = {}

    def model(x):
        key = x.tobytes()
        if key not in preds:
            preds[key] = noisy(x)
        return preds[key]

    m = evaluate_cross_scenario({1: model}, ds, split, rows=[1])
    sub = ds.by_scenario(1).split(split, "test")
    cm = confusion(model, sub, classes=6)
    assert cm.counts.sum() == len(sub)
    assert cm.accuracy == pytest.approx(m.cell(1, 1), abs=1e-12)


def test_confusion_csv():
    cm = confusion_from_predictions(np.array([0, 1, 1]), np.array([0, 1, 0]), 2)
    assert cm.to_csv() == "true\\pred,0,1\n0,1,0\n1,1,1\n"


# ---------------------------------------------------------------- features


@pytest.fixture(scope="module")
def small_hearnet():
    return build_hearnet(ModelSpec("hearnet", classes=6, width=1 / 16, seed=2))


def _spec_dataset(n, seed=0, repeat_first=False):
    x = np.random.default_rng(seed).standard_normal((n, 500, 257)).astype(np.float32)
    if repeat_first:
        x[1] = x[0]
    return ArrayDataset(x, np.arange(n) % 2, np.arange(10, 10 + n, dtype=np.uint64), np.ones(n, int), np.arange(n),
                        kind="spectrogram")


def test_penultimate_width_is_1024w(small_hearnet):
    feats, ids = extract_features(small_hearnet, "penultimate", _spec_dataset(3))
    assert feats.shape == (3, 1024 // 16)
    np.testing.assert_array_equal(ids, np.arange(10, 13, dtype=np.uint64))


def test_conv3_width_matches_architecture(small_hearnet):
    feats, _ = extract_features(small_hearnet, "conv3", _spec_dataset(2))
    assert feats.shape == (2, small_hearnet.conv3.weight.shape[-1]) == (2, 256 // 16)


def test_identical_inputs_identical_rows(small_hearnet):
    feats, _ = extract_features(small_hearnet, "conv4", _spec_dataset(3, repeat_first=True))
    np.testing.assert_array_equal(feats[0], feats[1])
    assert not np.array_equal(feats[0], feats[2])


def test_extraction_is_eval_mode_and_repeatable(small_hearnet):
    ds = _spec_dataset(4, seed=5)
    small_hearnet.train()
    before = {k: v.copy() for k, v in small_hearnet.state_dict().items()}
    a, _ = extract_features(small_hearnet, "penultimate", ds)
    b, _ = extract_features(small_hearnet, "penultimate", ds)
    np.testing.assert_array_equal(a, b)
    assert small_hearnet.training
    # a single-sample batch needs eval-mode batch norm to run at all
    one, _ = extract_features(small_hearnet, "penultimate", ds.select(np.arange(4) == 2))
    np.testing.assert_allclose(one[0], a[2], rtol=1e-5, atol=1e-6)
    for k, v in small_hearnet.state_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_unknown_tag_lists_available(small_hearnet):
    with pytest.raises(KeyError, match="available: conv1"):
        extract_features(small_hearnet, "conv9", _spec_dataset(1))


def test_standardize_uses_train_statistics():
    rng = np.random.default_rng(0)
    tr = rng.normal(3.0, 2.0, (50, 3))
    tr[:, 2] = 7.0
    te = rng.normal(0.0, 1.0, (5, 3))
    a, b = standardize(tr, te)
    np.testing.assert_allclose(a[:, :2].mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(a[:, :2].std(0), 1, atol=1e-12)
    np.testing.assert_array_equal(a[:, 2], 0.0)
    np.testing.assert_allclose(b, (te - tr.mean(0)) / np.where(tr.std(0) > 0, tr.std(0), 1))


# --------------------------------------------------------------------- kNN


def test_pairwise_distances_exact():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((7, 5)), rng.standard_normal((9, 5))
    want = np.array([[np.sum((p - q) ** 2) for q in b] for p in a])
    np.testing.assert_allclose(pairwise_sq_distances(a, b), want, rtol=1e-14)


def test_knn_k1_coincident_point():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((20, 3))
    y = rng.integers(0, 4, 20)
    assert knn_classify(x, y, x[[13]], 1)[0] == y[13]
    np.testing.assert_array_equal(knn_classify(x, y, x, 1), y)


def test_knn_matches_bruteforce_50_points_k7():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((50, 4))
    y = rng.integers(0, 3, 50)
    q = rng.standard_normal((30, 4))
    np.testing.assert_array_equal(knn_classify(x, y, q, 7), brute_knn(x, y, q, 7))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 40), dim=st.integers(1, 5), classes=st.integers(2, 5), seed=st.integers(0, 10_000),
       k=st.sampled_from([1, 3, 5, 7, 9, 11, 13, 15]), grid=st.booleans())
def test_knn_matches_bruteforce_property(n, dim, classes, seed, k, grid):
    rng = np.random.default_rng(seed)
    # integer grids produce many exact distance ties, exercising both tie rules
    x = rng.integers(-2, 3, (n, dim)).astype(float) if grid else rng.standard_normal((n, dim))
    y = rng.integers(0, classes, n)
    q = rng.integers(-2, 3, (8, dim)).astype(float) if grid else rng.standard_normal((8, dim))
    k = min(k, n if n % 2 else n - 1)
    np.testing.assert_array_equal(knn_classify(x, y, q, k), brute_knn(x, y, q, k))


def test_knn_duplicate_point_across_classes_goes_low():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [5.0, 5.0]])
    y = np.array([0, 3, 2, 1])
    assert knn_classify(x, y, np.array([[1.0, 1.0]]), 1)[0] == 2
    assert brute_knn(x, y, np.array([[1.0, 1.0]]), 1)[0] == 2
    # a three-way vote tie resolves to the smallest class
    x3 = np.array([[1.0], [-1.0], [2.0], [-2.0], [3.0]])
    assert knn_classify(x3, np.array([4, 1, 1, 4, 0]), np.array([[0.0]]), 5)[0] == 1


def test_knn_argument_checks():
    x = np.zeros((5, 2))
    y = np.arange(5) % 2
    for k in (0, 2, -1):
        with pytest.raises(ValueError, match="odd"):
            knn_classify(x, y, x, k)
    with pytest.raises(ValueError, match="exceeds"):
        knn_classify(x, y, x, 7)


def test_validate_k_ties_return_seven():
    x = np.array([[0.0], [0.1], [0.2]] * 6)
    y = np.zeros(18, dtype=int)
    k, scores = validate_k(x, y, x[:4], y[:4])
    assert k == 7
    assert sorted(scores) == list(K_CANDIDATES) == [7, 9, 11, 13, 15]
    assert set(scores.values()) == {1.0}


def test_validate_k_replays_recorded_accuracy():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((80, 2))
    y = (x[:, 0] + 0.5 * rng.standard_normal(80) > 0).astype(int)
    v = rng.standard_normal((40, 2))
    vy = (v[:, 0] > 0).astype(int)
    k, scores = validate_k(x, y, v, vy)
    assert k in K_CANDIDATES and scores[k] == max(scores.values())
    assert np.mean(knn_classify(x, y, v, k) == vy) == scores[k]
    assert np.mean(brute_knn(x, y, v, k) == vy) == scores[k]


def test_validate_k_small_training_set():
    x = np.arange(10.0)[:, None]
    y = (np.arange(10) >= 5).astype(int)
    k, scores = validate_k(x, y, x, y)
    assert sorted(scores) == [7, 9]
    with pytest.raises(ValueError, match="fits 5 training points"):
        validate_k(x[:5], y[:5], x, y)


def test_validate_k_empty_validation():
    with pytest.raises(ValueError, match="empty"):
        validate_k(np.zeros((20, 1)), np.zeros(20, int), np.zeros((0, 1)), np.zeros(0, int))


# --------------------------------------------------------------------- SVM


def _separable(seed=0, n=60):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    y = (x @ np.array([1.0, -2.0]) + 0.3 > 0).astype(int)
    keep = np.abs(x @ np.array([1.0, -2.0]) + 0.3) > 0.4  # leave a clear margin
    return x[keep], y[keep]


def test_svm_separable_2d_is_perfect():
    x, y = _separable()
    xe, ye = _separable(seed=1)
    np.testing.assert_array_equal(svm_classify(x, y, x, regularization=100.0), y)
    assert np.mean(svm_classify(x, y, xe, regularization=100.0) == ye) == 1.0


@pytest.mark.parametrize("a", [0.01, 3.0, 250.0])
def test_svm_scaling_homogeneity(a):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((90, 3)) + np.repeat(np.eye(3) * 1.5, 30, axis=0)
    y = np.repeat(np.arange(3), 30)
    q = rng.standard_normal((40, 3))
    base = LinearSVM(1.0, 500).fit(x, y)
    scaled_ = LinearSVM(1.0 / a ** 2, 500).fit(a * x, y)
    np.testing.assert_array_equal(base.predict(q), scaled_.predict(a * q))
    np.testing.assert_allclose(scaled_.decision_function(a * q), base.decision_function(q), rtol=1e-8, atol=1e-10)


def test_svm_point_deep_inside_class():
    x, y = _separable()
    deep = x[np.argmax(x @ np.array([1.0, -2.0]))]
    assert svm_classify(x, y, deep[None], 1.0)[0] == 1
    deep0 = x[np.argmin(x @ np.array([1.0, -2.0]))]
    assert svm_classify(x, y, deep0[None], 1.0)[0] == 0


def test_svm_multiclass_and_labels_preserved():
    rng = np.random.default_rng(6)
    centers = np.array([[0, 6], [6, 0], [-6, -6]], float)
    y = np.repeat(np.array([2, 5, 9]), 20)
    x = centers[np.repeat(np.arange(3), 20)] + rng.standard_normal((60, 2))
    pred = svm_classify(x, y, x)
    assert set(np.unique(pred)) <= {2, 5, 9}
    assert np.mean(pred == y) == 1.0


def test_svm_is_deterministic():
    x, y = _separable()
    a = LinearSVM(0.5, 300).fit(x, y).weights_
    b = LinearSVM(0.5, 300).fit(x, y).weights_
    np.testing.assert_array_equal(a, b)


def test_svm_errors():
    with pytest.raises(ValueError, match="two classes"):
        svm_classify(np.zeros((4, 2)), np.ones(4, int), np.zeros((1, 2)))
    with pytest.raises(ValueError, match="positive"):
        svm_classify(np.eye(2), np.array([0, 1]), np.eye(2), regularization=0.0)


# ---------------------------------------------------------------- transfer


def _noise_transfer_set(classes=(6, 7, 8, 9), scenarios=(1, 2, 3), takes=10, seed=0):
    """Class-independent noise spectrograms: no layer can carry label information."""
    rng = np.random.default_rng(seed)
    labels, scen = [], []
    for s in scenarios:
        for c in classes:
            labels += [c] * takes
            scen += [s] * takes
    n = len(labels)
    x = rng.standard_normal((n, 500, 257)).astype(np.float32)
    return ArrayDataset(x, np.asarray(labels), np.arange(n, dtype=np.uint64), np.asarray(scen), np.arange(n),
                        kind="spectrogram")


def test_transfer_overlap_is_rejected(small_hearnet):
    ds = _noise_transfer_set(classes=(0, 7), takes=3)
    with pytest.raises(ValueError, match="seen during training"):
        transfer_evaluate(small_hearnet, ("conv4",), ds, training_classes=range(6))


def test_random_model_transfer_near_chance():
    ds = _noise_transfer_set()
    split = transfer_split(ds, seed=0)
    model = build_hearnet(ModelSpec("hearnet", classes=6, width=1 / 16, seed=11))
    tags = ("conv3", "penultimate")
    reports = transfer_evaluate(model, tags, ds, split, training_classes=range(6))
    assert [r.layer for r in reports] == list(tags)
    n_test = len(split.test)
    lo, hi = binom.ppf(0.025, n_test, 0.25) / n_test, binom.ppf(0.975, n_test, 0.25) / n_test
    for r in reports:
        assert lo <= r.knn_accuracy <= hi, (r.layer, r.knn_accuracy, lo, hi)
        assert lo <= r.svm_accuracy <= hi, (r.layer, r.svm_accuracy, lo, hi)
        assert r.k in K_CANDIDATES
    table = format_transfer_table(reports, "random")
    assert table.splitlines()[0] == "random" and len(table.splitlines()) == 2 + len(tags)
    csv_lines = transfer_csv(reports).strip().splitlines()
    assert csv_lines[0] == "layer,width,k,knn_accuracy,svm_accuracy" and len(csv_lines) == 1 + len(tags)


def test_transfer_split_is_disjoint_and_complete():
    ds = _noise_transfer_set(takes=6)
    split = transfer_split(ds, seed=2)
    parts = [set(split.train), set(split.val), set(split.test)]
    assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    assert set().union(*parts) == set(ds.takes.tolist())
    assert all(len(p) > 0 for p in parts)
