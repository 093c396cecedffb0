"""Parametric shape rules for laying bricks course by course.

Seven rules: two label rules (assign a direction, reflect it) and five
placement rules (place right/left, scale into the right/left wall edge,
switch to a new row).  Every placement rule is a pure transition
``GenState -> GenState``; the values it needs are pulled from a *sampler*,
which is the seeded generator during generation and the recorded values
during replay.  Both paths run the same arithmetic, so a replay rebuilds
the wall bit for bit.
"""

from __future__ import annotations

import enum
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Callable, Iterator, Mapping

from .brick_extract import BrickRect
from .errors import GuardFailed, ReplayMismatch
from .rng import SplitMix64
from .stats import SamplingMode, WallParameters, sample

SCALED_MIN_FRACTION = 0.25


class Direction(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class Side(enum.Enum):
    LEFT_EDGE = "left_edge"
    RIGHT_EDGE = "right_edge"
    TOP_EDGE = "top_edge"
    BOTTOM_EDGE = "bottom_edge"


TAG_VOCABULARY = ("ref_left", "ref_right", "ref_top", "ref_bottom")

_CANONICAL_TAGS = MappingProxyType({
    Side.LEFT_EDGE: "ref_left",
    Side.RIGHT_EDGE: "ref_right",
    Side.TOP_EDGE: "ref_top",
    Side.BOTTOM_EDGE: "ref_bottom",
})
_MIRRORED_TAGS = MappingProxyType({
    Side.LEFT_EDGE: "ref_right",
    Side.RIGHT_EDGE: "ref_left",
    Side.TOP_EDGE: "ref_top",
    Side.BOTTOM_EDGE: "ref_bottom",
})


class GrowthDirection(enum.Enum):
    RIGHTWARD = "right"
    LEFTWARD = "left"


class RuleId(enum.Enum):
    LABEL_ASSIGN = "LabelAssign"
    LABEL_REFLECT = "LabelReflect"
    PLACE_RIGHT = "PlaceRight"
    PLACE_LEFT = "PlaceLeft"
    EDGE_SCALE_RIGHT = "EdgeScaleRight"
    EDGE_SCALE_LEFT = "EdgeScaleLeft"
    ROW_SWITCH = "RowSwitch"


@dataclass(frozen=True)
class LabeledBrick:
    rect: BrickRect
    direction: Direction
    tags: Mapping[Side, str]
    derivation_step: int = 0
    scaled: bool = False

    def __post_init__(self):
        if self.tags is _CANONICAL_TAGS or self.tags is _MIRRORED_TAGS:
            return
        if set(self.tags) != set(Side) or sorted(self.tags.values()) != sorted(TAG_VOCABULARY):
            raise ValueError("a labeled brick carries exactly one tag of the vocabulary per side")

    def __eq__(self, other):
        if not isinstance(other, LabeledBrick):
            return NotImplemented
        return (self.rect, self.direction, dict(self.tags), self.derivation_step, self.scaled) == (
            other.rect, other.direction, dict(other.tags), other.derivation_step, other.scaled)

    __hash__ = None

    @property
    def id(self) -> int:
        return self.rect.id

    def tag_positions(self) -> dict[str, float]:
        """Tag name -> coordinate of the edge carrying it (u for sides, v for top/bottom)."""
        r = self.rect
        coord = {Side.LEFT_EDGE: r.left, Side.RIGHT_EDGE: r.right, Side.TOP_EDGE: r.top, Side.BOTTOM_EDGE: r.bottom}
        return {tag: coord[side] for side, tag in self.tags.items()}


def label_assign(rect: BrickRect, derivation_step: int = 0, scaled: bool = False) -> LabeledBrick:
    return LabeledBrick(rect, Direction.RIGHT, _CANONICAL_TAGS, derivation_step, scaled)


def label_reflect(brick: LabeledBrick) -> LabeledBrick:
    """Mirror the labelling about the vertical axis through the brick center.

    The rectangle maps onto itself, so only the direction and the left/right
    tags change.
    """
    if brick.direction is Direction.RIGHT:
        return replace(brick, direction=Direction.LEFT, tags=_MIRRORED_TAGS)
    return replace(brick, direction=Direction.RIGHT, tags=_CANONICAL_TAGS)


def labeled(rect: BrickRect, direction: Direction, derivation_step: int, scaled: bool) -> LabeledBrick:
    brick = label_assign(rect, derivation_step, scaled)
    return label_reflect(brick) if direction is Direction.LEFT else brick


@dataclass(frozen=True)
class Bounds:
    u_min: float
    v_min: float
    u_max: float
    v_max: float


@dataclass(frozen=True)
class Step:
    step: int
    rule: RuleId
    sampled: Mapping[str, float]
    brick: int | None

    def __eq__(self, other):
        if not isinstance(other, Step):
            return NotImplemented
        return (self.step, self.rule, dict(self.sampled), self.brick) == (
            other.step, other.rule, dict(other.sampled), other.brick)

    __hash__ = None


class Trail:
    """Persistent append-only sequence; ``push`` shares the existing items."""

    __slots__ = ("_head", "_len")

    def __init__(self, head=None, length: int = 0):
        self._head = head
        self._len = length

    def push(self, item) -> "Trail":
        return Trail((item, self._head), self._len + 1)

    def __len__(self):
        return self._len

    def last(self):
        return None if self._head is None else self._head[0]

    def to_tuple(self) -> tuple:
        items = []
        node = self._head
        while node is not None:
            items.append(node[0])
            node = node[1]
        items.reverse()
        return tuple(items)

    def __iter__(self) -> Iterator:
        return iter(self.to_tuple())

    def __eq__(self, other):
        return isinstance(other, Trail) and self.to_tuple() == other.to_tuple()

    __hash__ = None


@dataclass(frozen=True)
class _Course:
    """Finished course, sorted by u: brick edges and the lowest admissible
    bottom above each brick (its top plus the thinnest bed joint)."""

    lefts: tuple[float, ...] = ()
    rights: tuple[float, ...] = ()
    floors: tuple[float, ...] = ()

    @classmethod
    def of(cls, bricks: tuple[LabeledBrick, ...], bed: float) -> "_Course":
        rects = sorted((b.rect for b in bricks), key=lambda r: r.left)
        return cls(tuple(r.left for r in rects), tuple(r.right for r in rects), tuple(r.top + bed for r in rects))


@dataclass(frozen=True)
class GenState:
    bounds: Bounds
    params: WallParameters
    mode: SamplingMode
    direction: GrowthDirection
    rng: SplitMix64
    row_baseline: float
    row_index: int = 0
    trail: Trail = field(default_factory=Trail)
    steps: Trail = field(default_factory=Trail)
    active: LabeledBrick | None = None
    row_lead: float = 0.0
    row_position: int = 0
    row_open: bool = True
    prev_row: tuple[LabeledBrick, ...] = ()
    cur_row: tuple[LabeledBrick, ...] = ()
    below: _Course = field(default_factory=_Course)

    @property
    def placed(self) -> tuple[LabeledBrick, ...]:
        return self.trail.to_tuple()

    @property
    def derivation(self) -> tuple[Step, ...]:
        return self.steps.to_tuple()

    @property
    def active_id(self) -> int | None:
        return None if self.active is None else self.active.id

    @property
    def rightward(self) -> bool:
        return self.direction is GrowthDirection.RIGHTWARD

    def remaining(self) -> float:
        """Free row length between the active brick and the wall edge ahead."""
        if self.rightward:
            return self.bounds.u_max - self.active.rect.right
        return self.active.rect.left - self.bounds.u_min


def initial_state(
    bounds: Bounds,
    params: WallParameters,
    seed: int,
    mode: SamplingMode = SamplingMode.EMPIRICAL_INDEX,
    direction: GrowthDirection = GrowthDirection.RIGHTWARD,
) -> GenState:
    # lift row 0 so that the most negative jitter still lands on the wall
    baseline = bounds.v_min + max(0.0, -params.level_jitter.min)
    return GenState(bounds, params, mode, direction, SplitMix64(seed), baseline)


def row_zero_fits(state: GenState) -> bool:
    p = state.params
    return state.row_baseline + p.level_jitter.max + p.brick_height.max <= state.bounds.v_max


# -- samplers -------------------------------------------------------------

class RngSampler:
    """Draws from the state's distributions with a private copy of its rng."""

    def __init__(self, state: GenState):
        self.rng = state.rng.copy()
        self._params = state.params
        self._mode = state.mode
        self.drawn: dict[str, float] = {}

    def __call__(self, name: str) -> float:
        value = sample(self._params[name], self._mode, self.rng)
        self.drawn[name] = value
        return value


class ReplaySampler:
    """Feeds recorded values back; the state's rng is left untouched."""

    rng = None

    def __init__(self, values: Mapping[str, float]):
        self._values = dict(values)
        self.drawn: dict[str, float] = {}

    def __call__(self, name: str) -> float:
        try:
            value = self._values[name]
        except KeyError:
            raise ReplayMismatch(f"recorded step has no value for {name!r}") from None
        self.drawn[name] = value
        return value


Sampler = Callable[[str], float]


def _sampler(state: GenState, draw) -> RngSampler | ReplaySampler:
    if draw is None:
        return RngSampler(state)
    if isinstance(draw, (RngSampler, ReplaySampler)):
        return draw
    return ReplaySampler(draw)


# -- helpers --------------------------------------------------------------

def _settled_bottom(bottom: float, left: float, right: float, below: _Course) -> float:
    # a brick may not sink into the course below it; it sits on a bed joint
    # no thinner than the thinnest observed one instead
    for k in range(bisect_right(below.rights, left), bisect_left(below.lefts, right)):
        if min(right, below.rights[k]) - max(left, below.lefts[k]) > 0 and below.floors[k] > bottom:
            bottom = below.floors[k]
    return bottom


def _commit(state: GenState, rule: RuleId, sampler, brick: LabeledBrick | None, **changes) -> GenState:
    step = Step(len(state.steps), rule, MappingProxyType(dict(sampler.drawn)), None if brick is None else brick.id)
    trail = state.trail
    if brick is not None:
        trail = trail.push(brick)
        changes.setdefault("active", brick)
        changes["cur_row"] = changes.get("cur_row", state.cur_row) + (brick,)
    rng = sampler.rng if sampler.rng is not None else state.rng
    return replace(state, rng=rng, trail=trail, steps=state.steps.push(step), **changes)


def _new_brick(state: GenState, left: float, right: float, bottom: float, height: float,
               row_index: int, position: int, scaled: bool) -> LabeledBrick:
    rect = BrickRect.from_edges(len(state.trail), left, bottom, right, bottom + height, row_index)
    direction = Direction.LEFT if (row_index + position) % 2 else Direction.RIGHT
    return labeled(rect, direction, len(state.steps), scaled)


def _start_row(state: GenState, rule: RuleId, sampler, lead: float, width: float, height: float,
               jitter: float, baseline: float, row_index: int, below: tuple[LabeledBrick, ...]) -> GenState:
    b = state.bounds
    span = b.u_max - b.u_min
    scaled = False
    if width > span:
        width, scaled = span, True
    lead = min(lead, span - width)
    if state.rightward:
        left = b.u_min + lead
        right = left + width
    else:
        right = b.u_max - lead
        left = right - width
    course = _Course.of(below, state.params.v_gap.min)
    bottom = _settled_bottom(baseline + jitter, left, right, course)
    brick = _new_brick(state, left, right, bottom, height, row_index, 0, scaled)
    return _commit(
        state, rule, sampler, brick,
        row_index=row_index, row_baseline=baseline, row_lead=lead, row_position=0, row_open=True,
        prev_row=below, cur_row=(), below=course,
    )


# -- rules ----------------------------------------------------------------

def place_axiom(state: GenState, draw=None) -> GenState:
    """First brick of row 0, labelled by the assign rule.

    Recorded in the derivation under ``LabelAssign``.
    """
    if state.active is not None:
        raise GuardFailed(RuleId.LABEL_ASSIGN, "the wall already has bricks")
    s = _sampler(state, draw)
    o = s("row_offset")
    w = s("brick_width")
    h = s("brick_height")
    j = s("level_jitter")
    return _start_row(state, RuleId.LABEL_ASSIGN, s, max(0.0, o), w, h, j, state.row_baseline, 0, ())


def _place(state: GenState, rule: RuleId, rightward: bool, draw) -> GenState:
    if state.active is None or not state.row_open or state.rightward != rightward:
        raise GuardFailed(rule, "no open row growing in this direction")
    s = _sampler(state, draw)
    g = s("h_gap")
    w = s("brick_width")
    h = s("brick_height")
    j = s("level_jitter")
    space = state.remaining()
    if space < g + state.params.brick_width.min or g + w > space:
        raise GuardFailed(rule, f"{space:g} mm left, need {g + w:g}")
    a = state.active.rect
    if rightward:
        left = a.right + g
        right = left + w
    else:
        right = a.left - g
        left = right - w
    bottom = _settled_bottom(state.row_baseline + j, left, right, state.below)
    position = state.row_position + 1
    brick = _new_brick(state, left, right, bottom, h, state.row_index, position, False)
    return _commit(state, rule, s, brick, row_position=position)


def place_right(state: GenState, draw=None) -> GenState:
    return _place(state, RuleId.PLACE_RIGHT, True, draw)


def place_left(state: GenState, draw=None) -> GenState:
    return _place(state, RuleId.PLACE_LEFT, False, draw)


def _edge_scale(state: GenState, rule: RuleId, rightward: bool, draw) -> GenState:
    if state.active is None or not state.row_open or state.rightward != rightward:
        raise GuardFailed(rule, "no open row growing in this direction")
    s = _sampler(state, draw)
    g = s("h_gap")
    h = s("brick_height")
    j = s("level_jitter")
    remaining = state.remaining() - g
    if remaining < SCALED_MIN_FRACTION * state.params.brick_width.min:
        # skipped edge: the space stays open as a widened joint
        return _commit(state, rule, s, None, row_open=False)
    b = state.bounds
    a = state.active.rect
    if rightward:
        left, right = a.right + g, b.u_max
    else:
        left, right = b.u_min, a.left - g
    bottom = _settled_bottom(state.row_baseline + j, left, right, state.below)
    position = state.row_position + 1
    brick = _new_brick(state, left, right, bottom, h, state.row_index, position, True)
    return _commit(state, rule, s, brick, row_position=position, row_open=False)


def edge_scale_right(state: GenState, draw=None) -> GenState:
    return _edge_scale(state, RuleId.EDGE_SCALE_RIGHT, True, draw)


def edge_scale_left(state: GenState, draw=None) -> GenState:
    return _edge_scale(state, RuleId.EDGE_SCALE_LEFT, False, draw)


def next_row_fits(state: GenState) -> bool:
    """Whether any sampled next course is guaranteed to stay below the wall top."""
    p = state.params
    new_baseline = state.row_baseline + p.median_height + p.v_gap.max
    highest_bottom = max([new_baseline + p.level_jitter.max] + [b.rect.top + p.v_gap.min for b in state.cur_row])
    return highest_bottom + p.brick_height.max <= state.bounds.v_max


def row_switch(state: GenState, draw=None) -> GenState:
    """Close the course and start the next one above it.

    The baseline advances by the median brick height plus a sampled bed
    joint.  The sampled row offset shifts the new course against the one
    below, modulo the bond period, so a half-brick offset gives running bond.
    """
    if state.active is None or state.row_open or not next_row_fits(state):
        raise GuardFailed(RuleId.ROW_SWITCH, "row still open or no room for another course")
    s = _sampler(state, draw)
    v = s("v_gap")
    o = s("row_offset")
    w = s("brick_width")
    h = s("brick_height")
    j = s("level_jitter")
    period = state.params.bond_period
    lead = (state.row_lead + o) % period if period > 0 else max(0.0, o)
    baseline = state.row_baseline + state.params.median_height + v
    return _start_row(state, RuleId.ROW_SWITCH, s, lead, w, h, j, baseline, state.row_index + 1, state.cur_row)


def choose_rule(state: GenState) -> RuleId | None:
    """Greedy bottom-up scheduler; ``None`` means the wall is complete."""
    if state.active is None:
        return RuleId.LABEL_ASSIGN
    p = state.params
    if state.row_open:
        if state.remaining() >= p.h_gap.max + p.brick_width.max:
            return RuleId.PLACE_RIGHT if state.rightward else RuleId.PLACE_LEFT
        return RuleId.EDGE_SCALE_RIGHT if state.rightward else RuleId.EDGE_SCALE_LEFT
    if next_row_fits(state):
        return RuleId.ROW_SWITCH
    return None


_RULES = {
    RuleId.LABEL_ASSIGN: place_axiom,
    RuleId.PLACE_RIGHT: place_right,
    RuleId.PLACE_LEFT: place_left,
    RuleId.EDGE_SCALE_RIGHT: edge_scale_right,
    RuleId.EDGE_SCALE_LEFT: edge_scale_left,
    RuleId.ROW_SWITCH: row_switch,
}


def apply_rule(state: GenState, rule: RuleId, draw=None) -> GenState:
    """Apply a placement rule.  ``draw`` may be a mapping of recorded values."""
    try:
        fn = _RULES[rule]
    except KeyError:
        raise ValueError(f"{rule.value} is applied inside placement rules, not as a step") from None
    return fn(state, draw)
