import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apple_picker import response
from apple_picker.micrograph_io import Micrograph
from apple_picker.references import select_references
from apple_picker.response import (ResponseSignal, build_queries, compute_threshold, cross_correlate,
                                   grid_positions, normalize_cc, response_signal, response_signals,
                                   save_score_grid, score, score_micrograph)
from apple_picker.synth import generate
from oracles import direct_circular_cc


def test_zero_query_gives_zero_map():
    f = np.random.default_rng(0).normal(size=(6, 6))
    assert np.array_equal(cross_correlate(f, np.zeros((6, 6))), np.zeros((6, 6)))


def test_delta_reference_reproduces_query():
    g = np.random.default_rng(1).normal(size=(8, 8))
    f = np.zeros((8, 8))
    f[0, 0] = 1.0
    np.testing.assert_allclose(cross_correlate(f, g), g, atol=1e-12)


@pytest.mark.parametrize("n", [4, 8, 16])
def test_matches_direct_sum(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        f, g = rng.normal(size=(2, n, n))
        assert np.max(np.abs(cross_correlate(f, g) - direct_circular_cc(f, g))) < 1e-9


def test_non_square_and_shape_mismatch():
    rng = np.random.default_rng(2)
    f, g = rng.normal(size=(2, 3, 5))
    np.testing.assert_allclose(cross_correlate(f, g), direct_circular_cc(f, g), atol=1e-12)
    with pytest.raises(ValueError):
        cross_correlate(np.zeros((4, 4)), np.zeros((4, 5)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 7), st.integers(0, 7))
def test_shift_covariance_is_exact_on_integers(seed, dy, dx):
    rng = np.random.default_rng(seed)
    f = rng.integers(-9, 10, size=(8, 8)).astype(float)
    g = rng.integers(-9, 10, size=(8, 8)).astype(float)
    shifted = np.roll(g, (dy, dx), axis=(0, 1))
    lhs = np.rint(cross_correlate(f, shifted))
    rhs = np.roll(np.rint(cross_correlate(f, g)), (dy, dx), axis=(0, 1))
    assert np.array_equal(lhs, rhs)


def test_normalize_examples():
    assert np.array_equal(normalize_cc(np.full((3, 3), 5.0)), np.zeros((3, 3)))
    np.testing.assert_allclose(normalize_cc(np.array([[1.0, 0.0], [0.0, 0.0]])),
                               [[0.75, -0.25], [-0.25, -0.25]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8, 16, 32]), st.floats(-1e3, 1e3))
def test_normalized_map_sums_to_zero(seed, n, shift):
    c = np.random.default_rng(seed).normal(scale=10.0, size=(n, n)) + shift
    assert abs(normalize_cc(c).sum()) <= 1e-9 * n * n


def test_self_response_peaks_at_zero_offset():
    rng = np.random.default_rng(5)
    for _ in range(10):
        g = rng.normal(size=(8, 8))
        direct = direct_circular_cc(g, g)
        direct -= direct.mean()
        assert np.unravel_index(np.argmax(direct), direct.shape) == (0, 0)
        s = response_signal(g, [g]).values
        assert s[0] == pytest.approx(direct[0, 0], abs=1e-9)


def test_constant_query_has_zero_response():
    refs = np.random.default_rng(6).normal(size=(3, 8, 8))
    assert np.allclose(response_signal(np.full((8, 8), 4.0), refs).values, 0.0, atol=1e-12)


def test_two_references():
    rng = np.random.default_rng(7)
    g = rng.normal(size=(8, 8))
    noise = rng.normal(size=(8, 8))
    s = response_signal(g, [g, noise]).values
    d1 = direct_circular_cc(g, g)
    d2 = direct_circular_cc(noise, g)
    assert s[0] > 0
    assert s[0] == pytest.approx((d1 - d1.mean()).max(), abs=1e-9)
    assert s[1] == pytest.approx((d2 - d2.mean()).max(), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-100, 100), st.floats(-100, 100))
def test_responses_ignore_constant_offsets(seed, dq, dr):
    # the mean-subtracted correlation map only depends on the zero-mean parts of both windows
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(8, 8))
    refs = rng.normal(size=(4, 8, 8))
    base = response_signal(g, refs).values
    moved = response_signal(g + dq, refs + dr).values
    np.testing.assert_allclose(moved, base, atol=1e-9 * (1 + abs(dq)) * (1 + abs(dr)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 6, 10]))
def test_response_entries_non_negative(seed, n):
    rng = np.random.default_rng(seed)
    s = response_signal(rng.normal(size=(n, n)), rng.normal(size=(5, n, n))).values
    assert np.all(s >= -1e-12)


def test_batched_matches_per_reference():
    rng = np.random.default_rng(8)
    queries = rng.normal(size=(37, 12, 12))
    refs = rng.normal(size=(9, 12, 12))
    batched = response_signals(queries, refs)
    single = np.array([response_signal(q, refs).values for q in queries])
    np.testing.assert_allclose(batched, single, atol=1e-9)


def test_fallback_without_fftw_matches(monkeypatch):
    rng = np.random.default_rng(9)
    queries = rng.normal(size=(20, 8, 8))
    refs = rng.normal(size=(5, 8, 8))
    fast = response_signals(queries, refs)
    monkeypatch.setattr(response, "pyfftw", None)
    np.testing.assert_allclose(response_signals(queries, refs), fast, atol=1e-10)


def test_thread_count_does_not_change_bits(monkeypatch):
    rng = np.random.default_rng(10)
    monkeypatch.setattr(response, "_BATCH_ELEMENTS", 600)  # force many batches
    queries = rng.normal(size=(50, 8, 8))
    refs = rng.normal(size=(4, 8, 8))
    one = response_signals(queries, refs, threads=1)
    for t in (2, 3, 8):
        assert np.array_equal(response_signals(queries, refs, threads=t), one)


def test_threshold_examples():
    assert compute_threshold([np.array([0.0, 20.0, 5.0])]) == 1.0
    assert compute_threshold([np.full(4, 3.5), np.full(2, 3.5)]) == 3.5
    assert compute_threshold(np.array([[-2.0, 18.0], [0.0, 1.0]])) == -1.0
    assert compute_threshold([ResponseSignal(np.array([2.0, 12.0]))], divisor=10) == 3.0
    with pytest.raises(ValueError):
        compute_threshold([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_threshold_between_extremes(values):
    t = compute_threshold([np.array(values)])
    assert min(values) <= t <= max(values)


def test_score_examples():
    t = 0.3
    assert score(np.array([t + 1, t - 1, t + 2]), t) == 2
    assert score(np.array([t, t - 1]), t) == 0
    assert score(ResponseSignal(np.array([1.0, 2.0, 3.0])), 0.5) == 3


def test_grid_positions_cover_with_edge_window():
    assert grid_positions(32, 8).tolist() == [0, 4, 8, 12, 16, 20, 24]
    assert grid_positions(30, 8).tolist() == [0, 4, 8, 12, 16, 20, 22]
    assert grid_positions(8, 8).tolist() == [0]
    with pytest.raises(ValueError):
        grid_positions(7, 8)


@settings(max_examples=60, deadline=None)
@given(st.integers(8, 200), st.integers(8, 200), st.sampled_from([2, 4, 8]))
def test_query_count_formula_and_coverage(h, w, n):
    q = build_queries((h, w), n)
    half = n // 2
    expected = (math.ceil((h - n) / half) + 1) * (math.ceil((w - n) / half) + 1)
    assert len(q) == expected
    covered = np.zeros((h, w), dtype=bool)
    for r, c in q.positions:
        covered[r : r + n, c : c + n] = True
    assert covered.all()


def test_constant_micrograph_scores_zero():
    m = Micrograph(np.full((64, 64), 7.0))
    refs = select_references(m, 8, 32)
    q, s = score_micrograph(m, refs, 8)
    assert s.t == 0.0
    assert np.all(s.k == 0)
    assert len(q) == 15 * 15


def test_score_bounds_and_windows():
    m = Micrograph(np.random.default_rng(11).normal(size=(70, 90)))
    refs = select_references(m, 8, 30)
    q, s = score_micrograph(m, refs, 8)
    assert np.all((0 <= s.k) & (s.k <= len(refs)))
    windows = q.windows(m)
    r, c = q.positions[17]
    assert np.array_equal(windows[17], m.data[r : r + 8, c : c + 8])
    with pytest.raises(ValueError):
        score_micrograph(m, refs, 10)


def test_top_queries_land_on_particles():
    m, truth = generate(512, 512, 12, 40, 0.5, seed=3)
    refs = select_references(m, 32, 128)
    q, s = score_micrograph(m, refs, 32)
    top = np.argsort(-s.k, kind="stable")[: math.ceil(0.05 * len(q))]
    hits = 0
    for idx in top:
        r, c = q.positions[idx]
        rr, cc = truth.centers[:, 0], truth.centers[:, 1]
        # window overlaps a planted disk
        dy = np.maximum(0, np.maximum(r - rr, rr - (r + 31)))
        dx = np.maximum(0, np.maximum(c - cc, cc - (c + 31)))
        hits += bool(np.any(np.hypot(dy, dx) < 20))
    assert hits / len(top) >= 0.9


def test_score_grid_dump(tmp_path):
    m = Micrograph(np.random.default_rng(12).normal(size=(40, 40)))
    refs = select_references(m, 8, 20)
    q, s = score_micrograph(m, refs, 8)
    save_score_grid(q, s, tmp_path / "k.csv")
    grid = np.loadtxt(tmp_path / "k.csv", delimiter=",", dtype=int)
    assert grid.shape == q.grid_shape
    assert np.array_equal(grid.ravel(), s.k)
