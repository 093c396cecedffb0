"""Whole-wall generation, replay, validation and synthetic survey clouds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .brick_extract import BrickRect
from .errors import ReplayMismatch, SchemaError, SpecTooSmall
from .grammar import (
    Bounds,
    Direction,
    GenState,
    GrowthDirection,
    LabeledBrick,
    RuleId,
    Step,
    apply_rule,
    choose_rule,
    initial_state,
    labeled,
    row_zero_fits,
)
from .pc_ingest import LabeledPoint, Point2, from_arrays
from .stats import SamplingMode, WallParameters

FORMAT_VERSION = 1
TOLERANCE = 1e-9  # mm; slack for edges rebuilt from center +- size/2


@dataclass(frozen=True)
class WallSpec:
    width: float
    height: float
    seed: int
    mode: SamplingMode = SamplingMode.EMPIRICAL_INDEX
    direction: GrowthDirection = GrowthDirection.RIGHTWARD

    def __post_init__(self):
        # floats and a plain int, so the serialized spec does not depend on
        # how the caller spelled the numbers
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "height", float(self.height))
        object.__setattr__(self, "seed", int(self.seed))
        if not (self.width > 0 and self.height > 0):
            raise ValueError("wall width and height must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def bounds(self) -> Bounds:
        return Bounds(0.0, 0.0, float(self.width), float(self.height))


@dataclass(frozen=True)
class Wall:
    spec: WallSpec
    params_digest: str
    bricks: tuple[LabeledBrick, ...]
    derivation: tuple[Step, ...]

    def rects(self, include_scaled: bool = True) -> list[BrickRect]:
        return [b.rect for b in self.bricks if include_scaled or not b.scaled]


def _check_spec(spec: WallSpec, params: WallParameters, state: GenState) -> None:
    if spec.width < 2 * params.brick_width.min:
        raise SpecTooSmall(f"wall width {spec.width:g} < 2 x minimum brick width {params.brick_width.min:g}")
    if spec.height < params.brick_height.min or not row_zero_fits(state):
        raise SpecTooSmall(f"wall height {spec.height:g} cannot hold one course")


def generate(spec: WallSpec, params: WallParameters) -> Wall:
    state = initial_state(spec.bounds, params, spec.seed, spec.mode, spec.direction)
    _check_spec(spec, params, state)
    while (rule := choose_rule(state)) is not None:
        state = apply_rule(state, rule)
    return Wall(spec, params.digest(), state.placed, state.derivation)


def replay(derivation: Sequence[Step], spec: WallSpec, params: WallParameters) -> tuple[LabeledBrick, ...]:
    """Rebuild the bricks from recorded rules and values, bypassing the rng."""
    state = initial_state(spec.bounds, params, spec.seed, spec.mode, spec.direction)
    for step in derivation:
        expected = choose_rule(state)
        if expected is not step.rule:
            raise ReplayMismatch(
                f"step {step.step}: recorded {step.rule.value}, scheduler expects "
                f"{expected.value if expected else 'halt'}")
        state = apply_rule(state, step.rule, draw=step.sampled)
    return state.placed


def iter_rows(bricks: Iterable[LabeledBrick]) -> list[list[LabeledBrick]]:
    rows: dict[int, list[LabeledBrick]] = {}
    for b in bricks:
        rows.setdefault(b.rect.row_index, []).append(b)
    return [sorted(rows[k], key=lambda b: b.rect.center.u) for k in sorted(rows)]


# -- validation -----------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str  # overlap | out_of_bounds | gap_range | jitter_range
    bricks: tuple[int, ...]
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    checked: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, kind: str) -> int:
        return sum(1 for v in self.violations if v.kind == kind)


def validate(wall: Wall, params: WallParameters | None = None) -> ValidationReport:
    """Report overlapping, out-of-bounds and out-of-range bricks.

    Gap and jitter ranges can only be judged against the parameters that
    drove the generation, so they are checked only when ``params`` is given.
    """
    report = ValidationReport(checked=("overlap", "out_of_bounds"))
    b = wall.spec.bounds
    for brick in wall.bricks:
        r = brick.rect
        if (r.left < b.u_min - TOLERANCE or r.right > b.u_max + TOLERANCE
                or r.bottom < b.v_min - TOLERANCE or r.top > b.v_max + TOLERANCE):
            report.violations.append(Violation(
                "out_of_bounds", (brick.id,),
                f"[{r.left:g},{r.right:g}]x[{r.bottom:g},{r.top:g}] outside the wall"))
    report.violations.extend(_overlaps(wall.bricks))

    if params is not None:
        report.checked += ("gap_range", "jitter_range")
        g = params.h_gap
        for row in iter_rows(wall.bricks):
            for a, c in zip(row, row[1:]):
                gap = c.rect.left - a.rect.right
                if gap < g.min - TOLERANCE or gap > g.max + TOLERANCE:
                    report.violations.append(Violation(
                        "gap_range", (a.id, c.id), f"head joint {gap:g} outside [{g.min:g},{g.max:g}]"))
        j = params.level_jitter
        for step in wall.derivation:
            value = step.sampled.get("level_jitter")
            if step.brick is not None and value is not None and not (j.min <= value <= j.max):
                report.violations.append(Violation(
                    "jitter_range", (step.brick,), f"jitter {value:g} outside [{j.min:g},{j.max:g}]"))
    return report


def _overlaps(bricks: Sequence[LabeledBrick]) -> list[Violation]:
    if len(bricks) < 2:
        return []
    box = np.array([(b.rect.left, b.rect.right, b.rect.bottom, b.rect.top) for b in bricks])
    ids = np.array([b.id for b in bricks])
    w = box[:, 1] - box[:, 0]
    h = box[:, 3] - box[:, 2]
    # two rects can only meet if their centers are closer than the largest
    # width along u and the largest height along v; scale v so one
    # Chebyshev radius covers both
    sx, sy = max(w.max(), TOLERANCE), max(h.max(), TOLERANCE)
    centers = np.column_stack([(box[:, 0] + box[:, 1]) / 2 / sx, (box[:, 2] + box[:, 3]) / 2 / sy])
    pairs = cKDTree(centers).query_pairs(1.0, p=np.inf, output_type="ndarray")
    if not len(pairs):
        return []
    a, c = box[pairs[:, 0]], box[pairs[:, 1]]
    du = np.minimum(a[:, 1], c[:, 1]) - np.maximum(a[:, 0], c[:, 0])
    dv = np.minimum(a[:, 3], c[:, 3]) - np.maximum(a[:, 2], c[:, 2])
    hit = pairs[(du > TOLERANCE) & (dv > TOLERANCE)]
    found = sorted(tuple(sorted((int(ids[i]), int(ids[j])))) for i, j in hit)
    return [Violation("overlap", pair, "brick interiors intersect") for pair in found]


# -- accounting -----------------------------------------------------------

@dataclass(frozen=True)
class RowLedger:
    row: int
    lead: float
    brick_widths: tuple[float, ...]
    joints: tuple[float, ...]
    open_tail: float

    @property
    def total(self) -> float:
        return self.lead + sum(self.brick_widths) + sum(self.joints) + self.open_tail


def row_accounting(wall: Wall) -> list[RowLedger]:
    """Split every course into lead, bricks, head joints and open tail.

    Head joints are the sampled values from the derivation, so the totals
    cross-check the derivation against the geometry: each equals the wall
    width.
    """
    by_id = {b.id: b for b in wall.bricks}
    b = wall.spec.bounds
    rightward = wall.spec.direction is GrowthDirection.RIGHTWARD
    ledgers = []
    current: dict[str, Any] | None = None

    def close(state):
        ledgers.append(RowLedger(state["row"], state["lead"], tuple(state["widths"]),
                                 tuple(state["joints"]), state["tail"]))

    for step in wall.derivation:
        brick = by_id.get(step.brick) if step.brick is not None else None
        if step.rule in (RuleId.LABEL_ASSIGN, RuleId.ROW_SWITCH):
            if current is not None:
                close(current)
            r = brick.rect
            lead = r.left - b.u_min if rightward else b.u_max - r.right
            current = {"row": r.row_index, "lead": lead, "widths": [r.width], "joints": [], "tail": 0.0, "front": r}
        else:
            if "h_gap" in step.sampled:
                if brick is not None:
                    current["joints"].append(step.sampled["h_gap"])
                    current["widths"].append(brick.rect.width)
                    current["front"] = brick.rect
        front = current["front"]
        current["tail"] = b.u_max - front.right if rightward else front.left - b.u_min
    if current is not None:
        close(current)
    return ledgers


# -- synthetic clouds -----------------------------------------------------

def synthesize_arrays(wall: Wall, pitch: float, noise_std: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred grid over the wall face, labelled by point-in-brick.

    Grid points sit at (i + 1/2) * pitch.  A point is brick when strictly
    inside a brick rectangle.  Gaussian noise of ``noise_std`` is then added
    to x, y and z (numpy PCG64 stream seeded with ``seed``).
    """
    if not pitch > 0:
        raise ValueError("pitch must be > 0")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    b = wall.spec.bounds
    us = np.arange(b.u_min + pitch / 2, b.u_max, pitch)
    vs = np.arange(b.v_min + pitch / 2, b.v_max, pitch)
    mask = np.zeros((len(vs), len(us)), dtype=bool)
    for brick in wall.bricks:
        r = brick.rect
        i0, i1 = np.searchsorted(us, r.left, side="right"), np.searchsorted(us, r.right, side="left")
        j0, j1 = np.searchsorted(vs, r.bottom, side="right"), np.searchsorted(vs, r.top, side="left")
        mask[j0:j1, i0:i1] = True
    uu, vv = np.meshgrid(us, vs)
    xyz = np.column_stack([uu.ravel(), vv.ravel(), np.zeros(uu.size)])
    if noise_std > 0:
        xyz = xyz + np.random.default_rng(seed).normal(0.0, noise_std, size=xyz.shape)
    return xyz, mask.ravel().astype(np.int8)


def synthesize_cloud(wall: Wall, pitch: float, noise_std: float = 0.0, seed: int = 0) -> list[LabeledPoint]:
    return from_arrays(*synthesize_arrays(wall, pitch, noise_std, seed))


# -- wall file ------------------------------------------------------------

def wall_to_document(wall: Wall) -> dict[str, Any]:
    s = wall.spec
    return {
        "format_version": FORMAT_VERSION,
        "units": "mm",
        "spec": {
            "width": s.width,
            "height": s.height,
            "seed": s.seed,
            "mode": s.mode.value,
            "direction": s.direction.value,
        },
        "params_digest": wall.params_digest,
        "bricks": [
            {
                "id": b.id,
                "cu": b.rect.center.u,
                "cv": b.rect.center.v,
                "width": b.rect.width,
                "height": b.rect.height,
                "row": b.rect.row_index,
                "direction": b.direction.value,
                "scaled": b.scaled,
            }
            for b in wall.bricks
        ],
        "derivation": [
            {"step": st.step, "rule": st.rule.value, "sampled": dict(st.sampled), "brick": st.brick}
            for st in wall.derivation
        ],
    }


def dumps_wall(wall: Wall) -> str:
    return json.dumps(wall_to_document(wall), indent=1) + "\n"


def save_wall(wall: Wall, sink: IO[str]) -> None:
    sink.write(dumps_wall(wall))


def load_wall(source: IO[str] | str) -> Wall:
    try:
        doc = json.loads(source) if isinstance(source, str) else json.load(source)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return wall_from_document(doc)


def _require(doc: Mapping[str, Any], key: str, kind, where: str = ""):
    if not isinstance(doc, Mapping) or key not in doc:
        raise SchemaError(f"missing field {where}{key!r}", field=key)
    value = doc[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaError(f"field {where}{key!r} has the wrong type", field=key)
    return value


def wall_from_document(doc: Any) -> Wall:
    if not isinstance(doc, dict):
        raise SchemaError("wall document must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaError("unsupported format_version", field="format_version")
    if doc.get("units") != "mm":
        raise SchemaError("units must be 'mm'", field="units")
    s = _require(doc, "spec", dict)
    try:
        spec = WallSpec(
            float(_require(s, "width", float, "spec.")),
            float(_require(s, "height", float, "spec.")),
            _require(s, "seed", int, "spec."),
            SamplingMode(_require(s, "mode", str, "spec.")),
            GrowthDirection(_require(s, "direction", str, "spec.")),
        )
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(str(exc), field="spec") from None
    digest = _require(doc, "params_digest", str)

    steps = []
    brick_step: dict[int, int] = {}
    for i, entry in enumerate(_require(doc, "derivation", list)):
        where = f"derivation[{i}]."
        try:
            rule = RuleId(_require(entry, "rule", str, where))
        except ValueError:
            raise SchemaError(f"{where}rule is not a known rule", field="rule") from None
        sampled = _require(entry, "sampled", dict, where)
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in sampled.values()):
            raise SchemaError(f"{where}sampled values must be numbers", field="sampled")
        brick = entry.get("brick")
        if brick is not None and (not isinstance(brick, int) or isinstance(brick, bool)):
            raise SchemaError(f"{where}brick must be an integer or null", field="brick")
        step_no = _require(entry, "step", int, where)
        if step_no != i:
            raise SchemaError(f"{where}step numbers must run 0..n-1", field="step")
        if brick is not None:
            if brick in brick_step:
                raise SchemaError(f"brick {brick} referenced by two steps", field="brick")
            brick_step[brick] = step_no
        steps.append(Step(step_no, rule, {k: float(v) for k, v in sampled.items()}, brick))

    bricks = []
    for i, entry in enumerate(_require(doc, "bricks", list)):
        where = f"bricks[{i}]."
        bid = _require(entry, "id", int, where)
        try:
            rect = BrickRect(
                bid,
                Point2(float(_require(entry, "cu", float, where)), float(_require(entry, "cv", float, where))),
                float(_require(entry, "width", float, where)),
                float(_require(entry, "height", float, where)),
                _require(entry, "row", int, where),
            )
            direction = Direction(_require(entry, "direction", str, where))
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"{where}{exc}", field="bricks") from None
        if bid not in brick_step:
            raise SchemaError(f"brick {bid} is not referenced by any derivation step", field="derivation")
        bricks.append(labeled(rect, direction, brick_step[bid], bool(_require(entry, "scaled", bool, where))))
    if len(bricks) != len(brick_step):
        raise SchemaError("derivation references bricks that are not listed", field="bricks")
    return Wall(spec, digest, tuple(bricks), tuple(steps))

