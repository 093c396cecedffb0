"""Per-parameter distributions: fitting, sampling and the parameter file."""

from __future__ import annotations

import enum
import hashlib
import json
import math
import statistics
from dataclasses import dataclass, fields
from functools import cached_property
from typing import IO, Any, Sequence

from .brick_extract import BrickRect, compute_gaps
from .errors import InsufficientData, SchemaError
from .rng import ALGORITHM, SplitMix64

FORMAT_VERSION = 1
MAX_REJECTIONS = 100

PARAMETER_NAMES = ("brick_width", "brick_height", "h_gap", "v_gap", "level_jitter", "row_offset")


class SamplingMode(enum.Enum):
    GAUSSIAN_TRUNCATED = "gaussian"
    EMPIRICAL_INDEX = "empirical"


@dataclass(frozen=True)
class ParamDistribution:
    name: str
    samples: tuple[float, ...]
    min: float
    max: float
    mean: float
    std: float

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(float(s) for s in self.samples))
        if not self.samples:
            raise InsufficientData(f"{self.name}: no samples")
        if not all(math.isfinite(s) for s in self.samples):
            raise ValueError(f"{self.name}: samples must be finite")
        if not (self.min <= self.mean <= self.max) or not self.std >= 0:
            raise ValueError(f"{self.name}: need min <= mean <= max and std >= 0")


def fit_distribution(name: str, samples: Sequence[float]) -> ParamDistribution:
    samples = [float(s) for s in samples]
    if not samples:
        raise InsufficientData(f"{name}: no samples to fit")
    if not all(math.isfinite(s) for s in samples):
        raise ValueError(f"{name}: samples must be finite")
    lo, hi = min(samples), max(samples)
    std = statistics.stdev(samples) if len(samples) > 1 else 0.0
    mean = min(max(statistics.fmean(samples), lo), hi)  # guard last-ulp rounding
    return ParamDistribution(name, tuple(samples), lo, hi, mean, std)


def sample(dist: ParamDistribution, mode: SamplingMode, rng: SplitMix64) -> float:
    """Draw one value; advances ``rng`` in place."""
    if mode is SamplingMode.EMPIRICAL_INDEX:
        n = len(dist.samples)
        return dist.samples[min(int(rng.random() * n), n - 1)]
    if dist.std == 0:
        return dist.mean
    x = rng.normal(dist.mean, dist.std)
    for _ in range(MAX_REJECTIONS):
        if dist.min <= x <= dist.max:
            return x
        x = rng.normal(dist.mean, dist.std)
    return min(max(x, dist.min), dist.max)


@dataclass(frozen=True)
class WallParameters:
    brick_width: ParamDistribution
    brick_height: ParamDistribution
    h_gap: ParamDistribution
    v_gap: ParamDistribution
    level_jitter: ParamDistribution
    row_offset: ParamDistribution

    def __post_init__(self):
        if not self.brick_width.min > 0:
            raise ValueError("brick_width.min must be > 0")
        if not self.brick_height.min > 0:
            raise ValueError("brick_height.min must be > 0")
        if self.h_gap.min < 0:
            raise ValueError("h_gap.min must be >= 0")
        if self.v_gap.min < 0:
            raise ValueError("v_gap.min must be >= 0")

    def __getitem__(self, name: str) -> ParamDistribution:
        if name not in PARAMETER_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    @cached_property
    def median_height(self) -> float:
        return statistics.median(self.brick_height.samples)

    @cached_property
    def bond_period(self) -> float:
        return statistics.median(self.brick_width.samples) + statistics.median(self.h_gap.samples)

    def to_document(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "units": "mm",
            "rng": ALGORITHM,
            "parameters": [
                {
                    "name": d.name,
                    "samples": list(d.samples),
                    "min": d.min,
                    "max": d.max,
                    "mean": d.mean,
                    "std": d.std,
                }
                for d in (getattr(self, f.name) for f in fields(self))
            ],
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))
        return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()


def save_parameters(params: WallParameters, sink: IO[str]) -> None:
    json.dump(params.to_document(), sink, indent=1)
    sink.write("\n")


def load_parameters(source: IO[str] | str) -> WallParameters:
    try:
        doc = json.loads(source) if isinstance(source, str) else json.load(source)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return parameters_from_document(doc)


def parameters_from_document(doc: Any) -> WallParameters:
    if not isinstance(doc, dict):
        raise SchemaError("parameter document must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {doc.get('format_version')!r}", field="format_version")
    if doc.get("units") != "mm":
        raise SchemaError("units must be 'mm'", field="units")
    if doc.get("rng") != ALGORITHM:
        raise SchemaError(f"rng must be {ALGORITHM!r}", field="rng")
    entries = doc.get("parameters")
    if not isinstance(entries, list):
        raise SchemaError("'parameters' must be a list", field="parameters")
    by_name: dict[str, Any] = {}
    for entry in entries:
        if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
            raise SchemaError("each parameter needs a string 'name'", field="parameters")
        if entry["name"] not in PARAMETER_NAMES:
            raise SchemaError(f"unknown parameter {entry['name']!r}", field=entry["name"])
        if entry["name"] in by_name:
            raise SchemaError(f"duplicate parameter {entry['name']!r}", field=entry["name"])
        by_name[entry["name"]] = entry
    dists = {}
    for name in PARAMETER_NAMES:
        if name not in by_name:
            raise SchemaError(f"missing parameter {name!r}", field=name)
        dists[name] = _distribution_from_entry(name, by_name[name])
    try:
        return WallParameters(**dists)
    except ValueError as exc:
        field_name = str(exc).split(".")[0]
        raise SchemaError(str(exc), field=field_name) from None


def _distribution_from_entry(name: str, entry: dict[str, Any]) -> ParamDistribution:
    def number(key):
        value = entry.get(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise SchemaError(f"{name}.{key} must be a finite number", field=name)
        return float(value)

    samples = entry.get("samples")
    if not isinstance(samples, list) or not samples:
        raise SchemaError(f"{name}.samples must be a non-empty list", field=name)
    if any(isinstance(s, bool) or not isinstance(s, (int, float)) or not math.isfinite(s) for s in samples):
        raise SchemaError(f"{name}.samples must be finite numbers", field=name)
    lo, hi, mean, std = number("min"), number("max"), number("mean"), number("std")
    if lo != min(samples) or hi != max(samples):
        raise SchemaError(f"{name}: min/max disagree with samples", field=name)
    try:
        return ParamDistribution(name, tuple(samples), lo, hi, mean, std)
    except ValueError as exc:
        raise SchemaError(str(exc), field=name) from None


@dataclass
class StatsResult:
    params: WallParameters
    exclusions: dict[str, int]


def parameters_from_rects(rects: Sequence[BrickRect]) -> StatsResult:
    """Fit all six distributions from extracted rectangles (rows assigned).

    Bricks touching the left or right extent of the survey (within one
    median head joint) are left out of the width sample: they are usually
    cut by the wall edge or the crop.
    """
    gaps = compute_gaps(rects)
    exclusions = dict(gaps.exclusions)
    lo = min(r.left for r in rects)
    hi = max(r.right for r in rects)
    margin = statistics.median(gaps.h_gaps) if gaps.h_gaps else 0.0
    widths = [r.width for r in rects if r.left - lo > margin and hi - r.right > margin]
    exclusions["width_boundary"] = len(rects) - len(widths)
    params = WallParameters(
        brick_width=fit_distribution("brick_width", widths),
        brick_height=fit_distribution("brick_height", [r.height for r in rects]),
        h_gap=fit_distribution("h_gap", gaps.h_gaps),
        v_gap=fit_distribution("v_gap", gaps.v_gaps),
        level_jitter=fit_distribution("level_jitter", gaps.level_jitter),
        row_offset=fit_distribution("row_offset", gaps.row_offsets),
    )
    return StatsResult(params, exclusions)
