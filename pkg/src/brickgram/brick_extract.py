"""From brick-labeled 2D points to rectangles, rows and joint measurements."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateCluster, InsufficientData, NoBricksFound
from .pc_ingest import Point2

DEFAULT_TRIM = 0.02
DEFAULT_MIN_PTS = 10
EPS_FACTOR = 3.0
SPACING_SUBSAMPLE = 1000
SPACING_SEED = 0


@dataclass(frozen=True)
class BrickRect:
    id: int
    center: Point2
    width: float
    height: float
    row_index: int | None = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"brick {self.id}: width and height must be positive")

    @property
    def left(self) -> float:
        return self.center.u - self.width / 2

    @property
    def right(self) -> float:
        return self.center.u + self.width / 2

    @property
    def bottom(self) -> float:
        return self.center.v - self.height / 2

    @property
    def top(self) -> float:
        return self.center.v + self.height / 2

    @classmethod
    def from_edges(cls, id: int, left: float, bottom: float, right: float, top: float,
                   row_index: int | None = None) -> "BrickRect":
        return cls(id, Point2((left + right) / 2, (bottom + top) / 2), right - left, top - bottom, row_index)


@dataclass
class GapMeasurements:
    h_gaps: list[float] = field(default_factory=list)
    v_gaps: list[float] = field(default_factory=list)
    level_jitter: list[float] = field(default_factory=list)
    row_offsets: list[float] = field(default_factory=list)
    exclusions: dict[str, int] = field(default_factory=dict)


def _as_uv(points) -> np.ndarray:
    uv = np.asarray(points, dtype=float)
    if uv.ndim != 2 or (len(uv) and uv.shape[1] != 2):
        uv = uv.reshape(-1, 2)
    return uv


def median_spacing(uv: np.ndarray, k: int = 1, seed: int = SPACING_SEED) -> float:
    """Median distance to the k-th nearest neighbour over a fixed-seed subsample.

    ``k=1`` feeds the default clustering radius; ``k=4`` approximates the
    pitch of a grid-like survey (the four axial neighbours) and is less
    biased low by coordinate noise.
    """
    uv = _as_uv(uv)
    if len(uv) < k + 1:
        raise InsufficientData("too few points to estimate spacing")
    tree = cKDTree(uv)
    if len(uv) > SPACING_SUBSAMPLE:
        pick = np.random.default_rng(seed).choice(len(uv), SPACING_SUBSAMPLE, replace=False)
        query = uv[np.sort(pick)]
    else:
        query = uv
    dist, _ = tree.query(query, k=k + 1)
    return float(np.median(dist[:, 1:].ravel()))


def default_eps(uv) -> float:
    return EPS_FACTOR * median_spacing(uv, k=1)


def cluster_labels(points, eps: float, min_pts: int) -> np.ndarray:
    """Component label per point; -1 marks noise.

    Points are linked when their distance is <= eps; components smaller than
    ``min_pts`` are noise.  Labels number the surviving components in
    row-major order of (min v, min u).
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    uv = _as_uv(points)
    n = len(uv)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    pairs = cKDTree(uv).query_pairs(eps, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)

    sizes = np.bincount(comp)
    kept = np.flatnonzero(sizes >= min_pts)
    if len(kept) == 0:
        return labels
    min_v = np.full(len(sizes), np.inf)
    min_u = np.full(len(sizes), np.inf)
    np.minimum.at(min_v, comp, uv[:, 1])
    np.minimum.at(min_u, comp, uv[:, 0])
    order = kept[np.lexsort((min_u[kept], min_v[kept]))]
    remap = np.full(len(sizes), -1, dtype=np.int64)
    remap[order] = np.arange(len(order))
    return remap[comp]


def cluster_bricks(points, eps: float, min_pts: int = DEFAULT_MIN_PTS) -> list[np.ndarray]:
    """Split brick points into per-brick clusters, each an (k, 2) array."""
    uv = _as_uv(points)
    clusters = _split(uv, cluster_labels(uv, eps, min_pts))
    if not clusters:
        raise NoBricksFound(f"no cluster with >= {min_pts} points at eps={eps:g}")
    return clusters


def _split(uv: np.ndarray, labels: np.ndarray) -> list[np.ndarray]:
    n_clusters = int(labels.max()) + 1 if len(labels) else 0
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n_clusters + 1))
    return [uv[order[bounds[c]:bounds[c + 1]]] for c in range(n_clusters)]


def _trimmed_range(values: np.ndarray, trim: float) -> tuple[float, float]:
    n = len(values)
    k = int(math.floor(trim * n))
    lo = np.partition(values, k)[k]
    hi = np.partition(values, n - 1 - k)[n - 1 - k]
    return float(lo), float(hi)


def fit_rectangle(cluster, trim_fraction: float = DEFAULT_TRIM, pad: float = 0.0, id: int = 0) -> BrickRect:
    """Axis-aligned box around a cluster after per-axis quantile trimming.

    On each axis the ``floor(trim_fraction * n)`` lowest and highest
    coordinates are dropped.  ``pad`` grows every side; extraction uses half
    the survey pitch so the box reaches the brick edge rather than the
    outermost sample, which sits on average half a pitch inside it.
    """
    if not 0.0 <= trim_fraction <= 0.1:
        raise ValueError("trim_fraction must lie in [0, 0.1]")
    if pad < 0:
        raise ValueError("pad must be >= 0")
    uv = _as_uv(cluster)
    if len(uv) < 4:
        raise DegenerateCluster(f"cluster has {len(uv)} points, need at least 4")
    u0, u1 = _trimmed_range(uv[:, 0], trim_fraction)
    v0, v1 = _trimmed_range(uv[:, 1], trim_fraction)
    if not (u1 > u0 and v1 > v0):
        raise DegenerateCluster("cluster spans zero width or height")
    return BrickRect.from_edges(id, u0 - pad, v0 - pad, u1 + pad, v1 + pad)


def group_rows(rects: Sequence[BrickRect]) -> list[BrickRect]:
    """Assign row indices bottom-up; output ordered by (row, u)."""
    if not rects:
        return []
    threshold = 0.5 * statistics.median(r.height for r in rects)
    by_v = sorted(rects, key=lambda r: (r.center.v, r.center.u, r.id))
    row = 0
    out = [replace(by_v[0], row_index=0)]
    for prev, cur in zip(by_v, by_v[1:]):
        if cur.center.v - prev.center.v > threshold:
            row += 1
        out.append(replace(cur, row_index=row))
    out.sort(key=lambda r: (r.row_index, r.center.u, r.id))
    return out


def rows_of(rects: Sequence[BrickRect]) -> list[list[BrickRect]]:
    """Rows as lists ordered by u; rows are indexed 0..max, empty if absent."""
    if not rects:
        return []
    if any(r.row_index is None for r in rects):
        raise ValueError("rows must be assigned before measuring gaps")
    rows: list[list[BrickRect]] = [[] for _ in range(max(r.row_index for r in rects) + 1)]
    for r in rects:
        rows[r.row_index].append(r)
    for row in rows:
        row.sort(key=lambda r: (r.center.u, r.id))
    return rows


def _filter(candidates: list[float], prefix: str, exclusions: dict[str, int]) -> list[float]:
    exclusions[f"{prefix}_negative"] = sum(1 for g in candidates if g < 0)
    if not candidates:
        exclusions[f"{prefix}_outlier"] = 0
        return []
    limit = 3.0 * statistics.median(candidates)
    kept = [g for g in candidates if g >= 0 and g <= limit]
    exclusions[f"{prefix}_outlier"] = sum(1 for g in candidates if g >= 0 and g > limit)
    return kept


def head_joints(row: Sequence[BrickRect]) -> list[float]:
    return [(a.right + b.left) / 2 for a, b in zip(row, row[1:])]


def bond_period(rects: Sequence[BrickRect], h_gaps: Sequence[float]) -> float:
    """Repeat length of a course: median brick width plus median head joint."""
    return statistics.median(r.width for r in rects) + (statistics.median(h_gaps) if h_gaps else 0.0)


def compute_gaps(rects: Sequence[BrickRect], wrap_offsets: bool = True) -> GapMeasurements:
    """Measure head joints, bed joints, level jitter and course stagger.

    Row offsets are first-head-joint differences between consecutive rows.
    With ``wrap_offsets`` they are reduced modulo the bond period into
    [0, period), which is how the generator consumes them.
    """
    rows = rows_of(rects)
    has_pair = any(len(row) >= 2 for row in rows)
    adjacent = sum(1 for a, b in zip(rows, rows[1:]) if a and b)
    if not has_pair and adjacent == 0:
        raise InsufficientData("need a row with two bricks or two adjacent rows")

    out = GapMeasurements()
    h_candidates = [b.left - a.right for row in rows for a, b in zip(row, row[1:])]
    out.h_gaps = _filter(h_candidates, "h_gap", out.exclusions)

    v_candidates = []
    for lower, upper in zip(rows, rows[1:]):
        v_candidates.extend(_overlapping_gaps(lower, upper))
    out.v_gaps = _filter(v_candidates, "v_gap", out.exclusions)

    for row in rows:
        if not row:
            continue
        baseline = statistics.median(r.bottom for r in row)
        out.level_jitter.extend(r.bottom - baseline for r in row)

    period = bond_period(rects, out.h_gaps) if wrap_offsets else 0.0
    for lower, upper in zip(rows, rows[1:]):
        lj, uj = head_joints(lower), head_joints(upper)
        if lj and uj:
            diff = uj[0] - lj[0]
            out.row_offsets.append(diff % period if period > 0 else diff)
    return out


def _overlapping_gaps(lower: list[BrickRect], upper: list[BrickRect]) -> list[float]:
    gaps = []
    start = 0
    for up in upper:
        while start < len(lower) and lower[start].right <= up.left:
            start += 1
        j = start
        while j < len(lower) and lower[j].left < up.right:
            if min(up.right, lower[j].right) - max(up.left, lower[j].left) > 0:
                gaps.append(up.bottom - lower[j].top)
            j += 1
    return gaps


@dataclass
class ExtractionResult:
    rects: list[BrickRect]
    eps: float
    pad: float
    report: dict[str, int | float]


def extract_rects(
    uv,
    eps: float | None = None,
    min_pts: int = DEFAULT_MIN_PTS,
    trim: float = DEFAULT_TRIM,
    pitch: float | None = None,
) -> ExtractionResult:
    """Cluster brick points, fit one rectangle per cluster and group rows.

    ``pitch`` is the survey sampling pitch used for edge padding (half a
    pitch per side).  When omitted it is estimated as the median distance
    to the four nearest neighbours; pass 0 to disable padding.
    """
    uv = _as_uv(uv)
    if eps is None:
        eps = default_eps(uv)
    if pitch is None:
        pitch = median_spacing(uv, k=4)
    pad = pitch / 2
    labels = cluster_labels(uv, eps, min_pts)
    clusters = _split(uv, labels)
    if not clusters:
        raise NoBricksFound(f"no cluster with >= {min_pts} points at eps={eps:g}")
    rects = []
    degenerate = 0
    for cluster in clusters:
        try:
            rects.append(fit_rectangle(cluster, trim, pad=pad, id=len(rects)))
        except DegenerateCluster:
            degenerate += 1
    if not rects:
        raise NoBricksFound("every cluster was degenerate")
    report = {
        "points": int(len(uv)),
        "noise_points": int((labels < 0).sum()),
        "clusters": len(clusters),
        "degenerate_clusters": degenerate,
    }
    return ExtractionResult(group_rows(rects), eps, pad, report)
