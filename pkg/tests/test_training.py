import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apple_picker.micrograph_io import Micrograph
from apple_picker.references import select_references
from apple_picker.response import ScoreField, build_queries, score_micrograph
from apple_picker.synth import generate
from apple_picker.training import (EmptyClassError, TrainingSet, extract_training, noise_regions,
                                   particle_regions, top_count)
from oracles import naive_window_stats


def test_top_counts():
    assert top_count(5, 20000) == 1000
    assert top_count(75, 20000) == 15000
    assert top_count(100, 37) == 37
    assert top_count(0.1, 37) == 1
    with pytest.raises(ValueError):
        top_count(0, 10)


def _queries(shape=(64, 64), n=16, seed=0):
    q = build_queries(shape, n)
    k = np.random.default_rng(seed).integers(0, 50, size=len(q))
    return q, ScoreField(k, 1.0)


def test_single_query_region():
    q, _ = _queries()
    k = np.zeros(len(q), dtype=int)
    k[10] = 5
    tau = 100.0 / len(q)  # exactly one query
    mask = particle_regions(q, ScoreField(k, 0.0), tau)
    r, c = q.positions[10]
    expected = np.zeros((64, 64), dtype=bool)
    expected[r : r + 16, c : c + 16] = True
    assert np.array_equal(mask, expected)


def test_ties_prefer_lower_query_index():
    q, _ = _queries()
    k = np.zeros(len(q), dtype=int)
    mask = particle_regions(q, ScoreField(k, 0.0), 100.0 / len(q))
    assert mask[:16, :16].all() and mask.sum() == 256


def test_full_and_empty_regions():
    q, s = _queries((70, 70), 16)
    assert particle_regions(q, s, 100).all()
    assert not noise_regions(q, s, 100).any()


def test_noise_mask_excludes_uncovered_pixels():
    q, s = _queries((40, 40), 16)
    # pretend the top edge strip was never visited by shrinking the query set to interior rows
    keep = q.positions[:, 0] >= 8
    from apple_picker.response import QuerySet

    q2 = QuerySet(q.positions[keep], 16, (0, 0), q.image_shape)
    s2 = ScoreField(s.k[keep], 0.0)
    noise = noise_regions(q2, s2, 1)
    assert not noise[:8].any()


def test_two_by_two_block_gives_four_windows():
    n = 8
    img = np.random.default_rng(1).normal(size=(64, 64))
    pm = np.zeros((64, 64), dtype=bool)
    pm[16:32, 24:40] = True
    nm = np.zeros((64, 64), dtype=bool)
    nm[40:, :] = True
    ts = extract_training(Micrograph(img), pm, nm, n)
    assert ts.n_particle == 4
    assert sorted(map(tuple, ts.positions[ts.labels == 1].tolist())) == [(16, 24), (16, 32), (24, 24), (24, 32)]
    assert ts.n_noise == 3 * 8


def test_empty_classes_named():
    img = np.zeros((32, 32))
    full = np.ones((32, 32), dtype=bool)
    empty = np.zeros((32, 32), dtype=bool)
    with pytest.raises(EmptyClassError, match="noise class empty") as exc:
        extract_training(img, full, empty, 8)
    assert exc.value.which == "noise"
    with pytest.raises(EmptyClassError, match="particle"):
        extract_training(img, empty, full, 8)
    with pytest.raises(ValueError):
        extract_training(img, full[:10], full, 8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_standardization_and_features(seed):
    rng = np.random.default_rng(seed)
    img = rng.normal(3.0, 2.0, size=(48, 48))
    pm = rng.random((48, 48)) < 0.9
    pm[:16, :16] = True
    nm = ~pm
    nm[32:, 32:] = True
    pm[32:, 32:] = False
    ts = extract_training(img, pm, nm, 8)
    z = ts.standardized()
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(z.var(axis=0), 1.0, atol=1e-9)
    for (r, c), (mean, std), label in zip(ts.positions, ts.features, ts.labels):
        m0, v0 = naive_window_stats(img, r, c, 8)
        assert mean == pytest.approx(m0, rel=1e-6)
        assert std == pytest.approx(np.sqrt(v0), rel=1e-6)
        inside = (pm if label == 1 else nm)[r : r + 8, c : c + 8]
        assert inside.all()


def test_constant_feature_column_is_left_unscaled():
    ts = TrainingSet.from_features([[1.0, 2.0], [1.0, 3.0]], [1, 0])
    assert ts.feature_std[0] == 1.0
    with pytest.raises(EmptyClassError):
        TrainingSet.from_features([[1.0, 2.0]], [1])


def test_synthetic_classes_separate_and_respect_top_windows():
    m, truth = generate(512, 512, 12, 40, 0.5, seed=1)
    n = 32
    refs = select_references(m, n, 128)
    q, s = score_micrograph(m, refs, n)
    pm = particle_regions(q, s, 5)
    nm = noise_regions(q, s, 50)
    ts = extract_training(m, pm, nm, n)
    p = ts.features[ts.labels == 1]
    z = ts.features[ts.labels == 0]
    assert p[:, 0].mean() < z[:, 0].mean()
    assert p[:, 1].mean() > z[:, 1].mean()

    # S1 windows are pairwise disjoint, and no S2 window touches a top-tau2 query window
    top2 = np.argsort(-s.k, kind="stable")[: top_count(50, len(q))]
    cover = np.zeros(m.shape, dtype=bool)
    for r, c in q.positions[top2]:
        cover[r : r + n, c : c + n] = True
    count = np.zeros(m.shape, dtype=int)
    for (r, c), lab in zip(ts.positions, ts.labels):
        count[r : r + n, c : c + n] += 1
        if lab == 0:
            assert not cover[r : r + n, c : c + n].any()
    assert count.max() == 1
