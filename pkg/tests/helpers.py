"""Shared test fixtures: reference parameters, hand-built walls, oracles."""

from __future__ import annotations

import math

from brickgram.brick_extract import BrickRect
from brickgram.grammar import Direction, RuleId, Step, labeled
from brickgram.pc_ingest import Point2
from brickgram.rng import SplitMix64
from brickgram.stats import ParamDistribution, WallParameters, fit_distribution
from brickgram.wall_generate import Wall, WallSpec

# (mean, std) per parameter for the round-trip fixture; desk values, not measured
REFERENCE = {
    "brick_width": (210.0, 8.0),
    "brick_height": (45.0, 3.0),
    "h_gap": (10.0, 2.0),
    "v_gap": (12.0, 2.0),
    "level_jitter": (0.0, 1.5),
    "row_offset": (110.0, 5.0),
}


def truncated_normal(mean: float, std: float, n: int, seed: int, k: float = 2.0) -> list[float]:
    """n draws of N(mean, std) restricted to mean +- k std, by rejection."""
    rng = SplitMix64(seed)
    out = []
    while len(out) < n:
        x = rng.normal(mean, std)
        if abs(x - mean) <= k * std:
            out.append(x)
    return out


def reference_parameters(n: int = 2000, seed: int = 2024) -> WallParameters:
    dists = {
        name: fit_distribution(name, truncated_normal(m, s, n, seed + i))
        for i, (name, (m, s)) in enumerate(REFERENCE.items())
    }
    return WallParameters(**dists)


def degenerate(name: str, value: float) -> ParamDistribution:
    return ParamDistribution(name, (value,), value, value, value, 0.0)


def constant_parameters(w=210.0, h=45.0, g_h=10.0, g_v=12.0, offset=110.0, jitter=0.0) -> WallParameters:
    return WallParameters(
        degenerate("brick_width", w),
        degenerate("brick_height", h),
        degenerate("h_gap", g_h),
        degenerate("v_gap", g_v),
        degenerate("level_jitter", jitter),
        degenerate("row_offset", offset),
    )


def hand_wall(boxes, width=1000.0, height=200.0) -> Wall:
    """Wall from (left, bottom, right, top) boxes, one step per brick."""
    bricks, steps = [], []
    for i, (l, b, r, t) in enumerate(boxes):
        rect = BrickRect(i, Point2((l + r) / 2, (b + t) / 2), r - l, t - b, 0)
        bricks.append(labeled(rect, Direction.RIGHT, i, False))
        steps.append(Step(i, RuleId.LABEL_ASSIGN if i == 0 else RuleId.PLACE_RIGHT, {}, i))
    return Wall(WallSpec(width, height, 0), "sha256:test", tuple(bricks), tuple(steps))


def union_find_components(points, eps: float, min_pts: int) -> list[frozenset[int]]:
    """All-pairs O(n^2) union-find; the clustering oracle."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        xi, yi = points[i]
        for j in range(i + 1, n):
            xj, yj = points[j]
            if math.hypot(xi - xj, yi - yj) <= eps:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted((frozenset(g) for g in groups.values() if len(g) >= min_pts), key=min)
