import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brickgram.brick_extract import (
    BrickRect,
    cluster_bricks,
    cluster_labels,
    compute_gaps,
    default_eps,
    extract_rects,
    fit_rectangle,
    group_rows,
    median_spacing,
)
from brickgram.errors import DegenerateCluster, InsufficientData, NoBricksFound
from brickgram.pc_ingest import Point2
from brickgram.wall_generate import WallSpec, generate, synthesize_arrays

from helpers import constant_parameters, reference_parameters, union_find_components


def rect(i, u, v, w, h, row=None):
    return BrickRect(i, Point2(u, v), w, h, row)


def square(u0, v0):
    return [(u0, v0), (u0 + 1, v0), (u0, v0 + 1), (u0 + 1, v0 + 1)]


# -- BrickRect ------------------------------------------------------------

def test_rect_edges():
    r = rect(0, 105, 22.5, 210, 45)
    assert (r.left, r.right, r.bottom, r.top) == (0, 210, 0, 45)
    assert BrickRect.from_edges(0, 0, 0, 210, 45) == r


@pytest.mark.parametrize("w,h", [(0, 1), (1, 0), (-1, 1), (math.nan, 1)])
def test_rect_rejects_bad_size(w, h):
    with pytest.raises(ValueError):
        rect(0, 0, 0, w, h)


# -- clustering -----------------------------------------------------------

def test_two_squares_far_apart():
    pts = square(0, 0) + square(100, 0)
    assert len(cluster_bricks(pts, eps=10, min_pts=3)) == 2


def test_two_squares_large_eps():
    pts = square(0, 0) + square(100, 0)
    assert len(cluster_bricks(pts, eps=200, min_pts=3)) == 1


def _grid_bricks(n_bricks=3, gap=15.0, pitch=5.0, w=40.0, h=20.0):
    pts = []
    for b in range(n_bricks):
        u0 = b * (w + gap)
        for i in range(int(w / pitch) + 1):
            for j in range(int(h / pitch) + 1):
                pts.append((u0 + i * pitch, j * pitch))
    return pts


def test_grid_three_bricks_union_find_oracle():
    pts = _grid_bricks()
    clusters = cluster_bricks(pts, eps=7, min_pts=1)
    assert len(clusters) == 3
    oracle = union_find_components(pts, 7, 1)
    labels = cluster_labels(pts, 7, 1)
    ours = sorted((frozenset(np.flatnonzero(labels == c).tolist()) for c in range(labels.max() + 1)), key=min)
    assert ours == oracle


def test_min_pts_discards_small_components_as_noise():
    pts = square(0, 0) + [(50, 50)]
    labels = cluster_labels(pts, eps=2, min_pts=2)
    assert labels.tolist() == [0, 0, 0, 0, -1]


def test_no_clusters_raises():
    with pytest.raises(NoBricksFound):
        cluster_bricks([(0, 0), (100, 100)], eps=1, min_pts=2)


def test_cluster_order_row_major_and_point_order_kept():
    pts = [(100, 0), (0, 50), (101, 0), (0, 51), (0, 0), (1, 0)]
    clusters = cluster_bricks(pts, eps=2, min_pts=2)
    assert [c.tolist() for c in clusters] == [[[0, 0], [1, 0]], [[100, 0], [101, 0]], [[0, 50], [0, 51]]]


@pytest.mark.parametrize("bad", [dict(eps=0, min_pts=1), dict(eps=1, min_pts=0)])
def test_cluster_argument_errors(bad):
    with pytest.raises(ValueError):
        cluster_labels([(0, 0)], **bad)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 400), st.floats(0.5, 8), st.integers(1, 5))
def test_partition_matches_union_find(seed, n, eps, min_pts):
    pts = np.random.default_rng(seed).uniform(0, 100, size=(n, 2)).tolist()
    labels = cluster_labels(pts, eps, min_pts)
    ours = sorted((frozenset(np.flatnonzero(labels == c).tolist()) for c in range(labels.max() + 1)), key=min)
    assert ours == union_find_components(pts, eps, min_pts)


def test_median_spacing_on_grid():
    uu, vv = np.meshgrid(np.arange(0, 500, 5.0), np.arange(0, 500, 5.0))
    uv = np.column_stack([uu.ravel(), vv.ravel()])
    assert median_spacing(uv, k=1) == pytest.approx(5.0)
    assert median_spacing(uv, k=4) == pytest.approx(5.0)
    assert default_eps(uv) == pytest.approx(15.0)


# -- rectangles -----------------------------------------------------------

def test_fit_exact_box():
    r = fit_rectangle([(0, 0), (2, 0), (0, 1), (2, 1)], trim_fraction=0)
    assert (r.center, r.width, r.height) == (Point2(1, 0.5), 2, 1)


def test_fit_collinear_is_degenerate():
    with pytest.raises(DegenerateCluster):
        fit_rectangle([(0, 0), (1, 0), (2, 0), (3, 0)])


def test_fit_too_few_points():
    with pytest.raises(DegenerateCluster):
        fit_rectangle([(0, 0), (1, 0), (2, 1)])


def test_fit_trim_range_checked():
    with pytest.raises(ValueError):
        fit_rectangle(square(0, 0), trim_fraction=0.2)


def _sorted_trim(values, trim):
    s = sorted(values)
    k = math.floor(trim * len(s))
    return s[k], s[len(s) - 1 - k]


def test_fit_trims_outlier_against_sort_oracle():
    rng = np.random.default_rng(8)
    pts = np.column_stack([rng.uniform(0, 210, 200), rng.uniform(0, 45, 200)]).tolist() + [[1000, 1000]]
    r = fit_rectangle(pts, trim_fraction=0.02)
    u0, u1 = _sorted_trim([p[0] for p in pts], 0.02)
    v0, v1 = _sorted_trim([p[1] for p in pts], 0.02)
    assert (r.left, r.right, r.bottom, r.top) == pytest.approx((u0, u1, v0, v1))
    assert 200 <= r.width <= 215


@pytest.mark.xfail(reason="E[trimmed height] = 45 * 192/201 = 42.99 sits on the band edge, so about half of all draws fall below 43",
                   strict=False)
def test_fit_trimmed_height_band_literal():
    rng = np.random.default_rng(8)
    pts = np.column_stack([rng.uniform(0, 210, 200), rng.uniform(0, 45, 200)]).tolist() + [[1000, 1000]]
    assert 43 <= fit_rectangle(pts, trim_fraction=0.02).height <= 46


def test_fit_trimmed_extent_matches_order_statistics():
    # n = 201 points, k = 4 dropped per side.  The outlier is the top value,
    # so the kept extremes are uniform order statistics 5 and 197 of 200,
    # with E[U_(i)] = i / 201: E[range] = L * (197 - 5) / 201
    rng = np.random.default_rng(0)
    widths, heights = [], []
    for _ in range(400):
        pts = np.column_stack([rng.uniform(0, 210, 200), rng.uniform(0, 45, 200)]).tolist() + [[1000, 1000]]
        r = fit_rectangle(pts, trim_fraction=0.02)
        widths.append(r.width)
        heights.append(r.height)
    frac = (197 - 5) / 201
    # per-draw sd ~ L * 0.016, se over 400 draws ~ L * 0.0008
    assert np.mean(widths) == pytest.approx(210 * frac, abs=210 * 0.004)
    assert np.mean(heights) == pytest.approx(45 * frac, abs=45 * 0.004)


@given(st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4)), min_size=4, max_size=60))
def test_fit_trim_zero_is_bounding_box(pts):
    us, vs = [p[0] for p in pts], [p[1] for p in pts]
    if max(us) == min(us) or max(vs) == min(vs):
        return
    r = fit_rectangle(pts, trim_fraction=0)
    assert r.left == pytest.approx(min(us), abs=1e-9) and r.right == pytest.approx(max(us), abs=1e-9)
    assert r.bottom == pytest.approx(min(vs), abs=1e-9) and r.top == pytest.approx(max(vs), abs=1e-9)


def test_pad_grows_every_side():
    r = fit_rectangle(square(0, 0), trim_fraction=0, pad=2.5)
    assert (r.left, r.right, r.bottom, r.top) == (-2.5, 3.5, -2.5, 3.5)


# -- rows -----------------------------------------------------------------

def test_group_rows_threshold():
    rs = group_rows([rect(0, 0, 25, 100, 45), rect(1, 200, 26, 100, 45), rect(2, 0, 82, 100, 45)])
    assert [(r.id, r.row_index) for r in rs] == [(0, 0), (1, 0), (2, 1)]


def test_group_rows_single():
    assert group_rows([rect(7, 0, 0, 1, 1)])[0].row_index == 0


def test_group_rows_synthetic_rows_with_jitter():
    rng = random.Random(1)
    truth, rects = {}, []
    for row in range(5):
        for k in range(8):
            i = len(rects)
            rects.append(rect(i, k * 220 + rng.uniform(-20, 20), 22.5 + 57 * row + rng.uniform(-3, 3), 210, 45))
            truth[i] = row
    assert {r.id: r.row_index for r in group_rows(rects)} == truth


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_group_rows_permutation_invariant(seed):
    rng = random.Random(seed)
    rects = [rect(i, rng.uniform(0, 2000), rng.choice([0, 57, 114]) + rng.uniform(-3, 3), 200, 45) for i in range(30)]
    shuffled = rects[:]
    rng.shuffle(shuffled)
    assert group_rows(rects) == group_rows(shuffled)


# -- gaps -----------------------------------------------------------------

def test_h_gap_single_pair():
    g = compute_gaps([rect(0, 1, 0.5, 2, 1, 0), rect(1, 4, 0.5, 2, 1, 0)])
    assert g.h_gaps == [1.0]


def test_v_gap_stacked():
    lower = BrickRect.from_edges(0, 0, 0, 210, 45, 0)
    upper = BrickRect.from_edges(1, 100, 57, 310, 102, 1)
    assert compute_gaps([lower, upper]).v_gaps == [12.0]


def test_insufficient_data():
    with pytest.raises(InsufficientData):
        compute_gaps([rect(0, 0, 0, 1, 1, 0)])


def test_gap_outlier_and_negative_exclusion_counted():
    row = [BrickRect.from_edges(i, l, 0, r, 45, 0) for i, (l, r) in enumerate(
        [(0, 100), (110, 200), (210, 300), (400, 500), (495, 600)])]
    g = compute_gaps(row)
    assert g.h_gaps == [10, 10]
    assert g.exclusions["h_gap_outlier"] == 1 and g.exclusions["h_gap_negative"] == 1


def test_jitter_relative_to_row_median_bottom():
    row = [BrickRect.from_edges(i, 100 * i, b, 100 * i + 90, b + 45, 0) for i, b in enumerate([0, 2, -1])]
    assert sorted(compute_gaps(row).level_jitter) == [-1, 0, 2]


def test_row_offsets_from_first_head_joints():
    lower = [BrickRect.from_edges(0, 0, 0, 90, 45, 0), BrickRect.from_edges(1, 100, 0, 190, 45, 0)]
    upper = [BrickRect.from_edges(2, 40, 57, 130, 102, 1), BrickRect.from_edges(3, 140, 57, 230, 102, 1)]
    g = compute_gaps(lower + upper, wrap_offsets=False)
    assert g.row_offsets == [40.0]
    # bond period = 90 + 10; 40 mod 100
    assert compute_gaps(lower + upper).row_offsets == [40.0]


def test_h_gaps_recover_the_derivation_exactly():
    wall = generate(WallSpec(4400, 600, 17), reference_parameters())
    drawn = sorted(s.sampled["h_gap"] for s in wall.derivation if s.brick is not None and "h_gap" in s.sampled)
    measured = sorted(compute_gaps(wall.rects()).h_gaps)
    assert len(measured) == len(drawn) and len(drawn) >= 150
    assert measured == pytest.approx(drawn, abs=1e-9)


def test_constant_wall_recovers_every_joint_exactly():
    wall = generate(WallSpec(4400, 600, 1), constant_parameters())
    g = compute_gaps(wall.rects(include_scaled=False))
    assert set(g.h_gaps) == {10.0}
    assert g.v_gaps and max(abs(v - 12.0) for v in g.v_gaps) < 1e-9
    assert max(abs(j) for j in g.level_jitter) < 1e-9


# -- end to end on synthetic clouds -------------------------------------

def test_noise_free_cloud_recovers_rects_exactly():
    # bricks on the 5 mm lattice: with pitch/2 padding the boxes come back exactly
    params = constant_parameters(w=210, h=45, g_h=10, g_v=10, offset=110)
    wall = generate(WallSpec(1000, 300, 0), params)
    xyz, labels = synthesize_arrays(wall, pitch=5.0, noise_std=0.0, seed=0)
    result = extract_rects(xyz[labels == 1, :2], eps=6, trim=0.0, pitch=5.0)
    got = sorted((r.left, r.bottom, r.right, r.top) for r in result.rects)
    want = sorted((r.left, r.bottom, r.right, r.top) for r in wall.rects())
    assert got == pytest.approx(want, abs=1e-9)
    assert result.report["clusters"] == len(wall.bricks)
