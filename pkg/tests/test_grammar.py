import pytest
from hypothesis import given, settings, strategies as st

from brickgram.brick_extract import BrickRect
from brickgram.errors import GuardFailed, ReplayMismatch
from brickgram.grammar import (
    TAG_VOCABULARY,
    Bounds,
    Direction,
    GrowthDirection,
    LabeledBrick,
    RuleId,
    Side,
    Trail,
    apply_rule,
    choose_rule,
    edge_scale_left,
    edge_scale_right,
    initial_state,
    label_assign,
    label_reflect,
    place_left,
    place_right,
    row_switch,
)
from brickgram.pc_ingest import Point2
from brickgram.stats import SamplingMode

from helpers import constant_parameters, reference_parameters


def axiom(bounds=Bounds(0, 0, 5000, 500), params=None, width=100.0, offset=0.0, direction=GrowthDirection.RIGHTWARD):
    params = params or constant_parameters()
    state = initial_state(bounds, params, 0, SamplingMode.EMPIRICAL_INDEX, direction)
    draw = {"row_offset": offset, "brick_width": width, "brick_height": 45.0, "level_jitter": 0.0}
    return apply_rule(state, RuleId.LABEL_ASSIGN, draw=draw)


def draw(g=10.0, w=210.0, h=45.0, j=0.0):
    return {"h_gap": g, "brick_width": w, "brick_height": h, "level_jitter": j}


# -- labels ---------------------------------------------------------------

def test_rule_catalog_is_seven():
    assert len(RuleId) == 7


def test_label_assign_canonical():
    b = label_assign(BrickRect(0, Point2(105, 22.5), 210, 45))
    assert b.direction is Direction.RIGHT
    assert dict(b.tags) == {Side.LEFT_EDGE: "ref_left", Side.RIGHT_EDGE: "ref_right",
                            Side.TOP_EDGE: "ref_top", Side.BOTTOM_EDGE: "ref_bottom"}


def test_tag_positions_are_edges():
    b = label_assign(BrickRect(0, Point2(500, 100), 210, 45))
    assert b.tag_positions() == {"ref_left": 395, "ref_right": 605, "ref_top": 122.5, "ref_bottom": 77.5}


def test_label_reflect_mirrors_left_right():
    b = label_reflect(label_assign(BrickRect(0, Point2(105, 22.5), 210, 45)))
    assert b.direction is Direction.LEFT
    assert b.tags[Side.RIGHT_EDGE] == "ref_left" and b.tags[Side.LEFT_EDGE] == "ref_right"
    assert b.tags[Side.TOP_EDGE] == "ref_top"
    assert b.rect == BrickRect(0, Point2(105, 22.5), 210, 45)


rects = st.builds(
    BrickRect,
    st.integers(0, 10**6),
    st.builds(Point2, st.floats(-1e4, 1e4), st.floats(-1e4, 1e4)),
    st.floats(1, 500),
    st.floats(1, 200),
    st.one_of(st.none(), st.integers(0, 100)),
)


@given(rects, st.integers(0, 10**6), st.booleans(), st.booleans())
def test_reflect_is_an_involution(rect, step, scaled, start_left):
    b = label_assign(rect, step, scaled)
    if start_left:
        b = label_reflect(b)
    twice = label_reflect(label_reflect(b))
    assert twice == b
    assert (twice.rect, twice.direction, dict(twice.tags), twice.derivation_step, twice.scaled) == (
        b.rect, b.direction, dict(b.tags), b.derivation_step, b.scaled)


def test_tags_validated():
    rect = BrickRect(0, Point2(0, 0), 1, 1)
    with pytest.raises(ValueError):
        LabeledBrick(rect, Direction.RIGHT, {Side.LEFT_EDGE: "ref_left"})
    ok = LabeledBrick(rect, Direction.RIGHT, dict(zip(Side, TAG_VOCABULARY)))
    assert ok.tags[Side.LEFT_EDGE] == "ref_left"


# -- placement rules ------------------------------------------------------

def test_place_right_arithmetic():
    s = axiom()
    assert s.active.rect.right == 100 and s.row_baseline == 0
    s = place_right(s, draw(g=10, w=210, h=45, j=2))
    r = s.active.rect
    assert (r.left, r.right, r.bottom, r.top) == (110, 320, 2, 47)


def test_place_right_zero_jitter_on_baseline():
    s = place_right(axiom(), draw(j=0))
    assert s.active.rect.bottom == s.row_baseline == 0


def test_successive_constant_placements_have_exact_pitch():
    s = axiom()
    s1 = apply_rule(s, RuleId.PLACE_RIGHT)
    s2 = apply_rule(s1, RuleId.PLACE_RIGHT)
    a, b, c = s.active.rect, s1.active.rect, s2.active.rect
    assert b.left - a.left == 110  # first brick is 100 wide
    assert c.center.u - b.center.u == 220


def test_place_left_mirrors():
    s = axiom(direction=GrowthDirection.LEFTWARD)
    assert s.active.rect.right == 5000
    s = place_left(s, draw(g=10, w=210, j=2))
    r = s.active.rect
    assert (r.left, r.right, r.bottom) == (4680, 4890, 2)


def test_place_guard():
    s = axiom(bounds=Bounds(0, 0, 400, 500))
    with pytest.raises(GuardFailed) as err:
        place_right(s, draw(g=10, w=310))
    assert err.value.rule is RuleId.PLACE_RIGHT
    with pytest.raises(GuardFailed):
        place_left(s, draw())


def test_edge_scale_right_flush():
    s = axiom(bounds=Bounds(0, 0, 1000, 500), width=920)
    s = edge_scale_right(s, {"h_gap": 10.0, "brick_height": 45.0, "level_jitter": 0.0})
    r = s.active.rect
    assert (r.left, r.right, r.width) == (930, 1000, 70)
    assert s.active.scaled and not s.row_open
    assert s.derivation[-1].rule is RuleId.EDGE_SCALE_RIGHT


def test_edge_scale_left_flush():
    s = axiom(bounds=Bounds(0, 0, 1000, 500), width=920, direction=GrowthDirection.LEFTWARD)
    s = edge_scale_left(s, {"h_gap": 10.0, "brick_height": 45.0, "level_jitter": 0.0})
    assert (s.active.rect.left, s.active.rect.right) == (0, 70)


def test_skipped_edge_records_step_without_brick():
    s = axiom(bounds=Bounds(0, 0, 1000, 500), width=985)
    s = edge_scale_right(s, {"h_gap": 10.0, "brick_height": 45.0, "level_jitter": 0.0})
    assert len(s.placed) == 1 and not s.row_open
    step = s.derivation[-1]
    assert step.rule is RuleId.EDGE_SCALE_RIGHT and step.brick is None


def test_row_switch_baseline_and_stagger():
    s = axiom(bounds=Bounds(0, 0, 1000, 500), width=985)
    s = edge_scale_right(s, {"h_gap": 10.0, "brick_height": 45.0, "level_jitter": 0.0})
    s = row_switch(s, {"v_gap": 12.0, "row_offset": 110.0, "brick_width": 210.0, "brick_height": 45.0,
                       "level_jitter": 0.0})
    assert s.row_baseline == 57 and s.row_index == 1
    assert s.active.rect.left == 110 and s.active.rect.bottom == 57


def test_row_switch_needs_closed_row():
    with pytest.raises(GuardFailed) as err:
        row_switch(axiom())
    assert err.value.rule is RuleId.ROW_SWITCH


def test_axiom_clamps_negative_offset():
    s = axiom(offset=-20.0)
    assert s.active.rect.left == 0
    assert s.derivation[0].rule is RuleId.LABEL_ASSIGN


def test_axiom_only_once():
    with pytest.raises(GuardFailed):
        apply_rule(axiom(), RuleId.LABEL_ASSIGN)


def test_label_reflect_is_not_a_step():
    with pytest.raises(ValueError):
        apply_rule(axiom(), RuleId.LABEL_REFLECT)


def test_settling_rests_on_course_below():
    # a short brick in row 0 and a large negative jitter in row 1
    p = reference_parameters(n=300)
    s = initial_state(Bounds(0, 0, 3000, 1000), p, 0)
    base = s.row_baseline
    s = apply_rule(s, RuleId.LABEL_ASSIGN, {"row_offset": 0.0, "brick_width": 210.0, "brick_height": 51.0,
                                             "level_jitter": 2.9})
    top = s.active.rect.top
    s = replace_open(s)
    s = row_switch(s, {"v_gap": 8.0, "row_offset": 0.0, "brick_width": 210.0, "brick_height": 45.0,
                       "level_jitter": -2.9})
    assert s.row_baseline == base + p.median_height + 8.0
    assert s.active.rect.bottom == pytest.approx(top + p.v_gap.min)


def replace_open(state):
    from dataclasses import replace
    return replace(state, row_open=False)


# -- scheduler ------------------------------------------------------------

def test_choose_fresh_row_places():
    assert choose_rule(axiom()) is RuleId.PLACE_RIGHT
    assert choose_rule(axiom(direction=GrowthDirection.LEFTWARD)) is RuleId.PLACE_LEFT


def test_choose_edge_scale_with_70_left():
    s = axiom(bounds=Bounds(0, 0, 1000, 500), params=constant_parameters(w=180), width=930)
    assert s.remaining() == 70
    assert choose_rule(s) is RuleId.EDGE_SCALE_RIGHT


def test_choose_halts_at_top():
    s = axiom(bounds=Bounds(0, 0, 1000, 60), width=985)
    s = apply_rule(s, choose_rule(s))
    assert not s.row_open
    assert choose_rule(s) is None


def test_choose_empty_state_is_axiom():
    s = initial_state(Bounds(0, 0, 1000, 500), constant_parameters(), 0)
    assert choose_rule(s) is RuleId.LABEL_ASSIGN


# -- labels along a course ------------------------------------------------

def test_parity_alternation():
    s = axiom()
    for _ in range(4):
        s = apply_rule(s, choose_rule(s))
    dirs = [b.direction for b in s.placed]
    assert dirs == [Direction.RIGHT, Direction.LEFT, Direction.RIGHT, Direction.LEFT, Direction.RIGHT]


# -- replay ---------------------------------------------------------------

def test_replay_missing_value():
    s = axiom()
    with pytest.raises(ReplayMismatch, match="h_gap"):
        place_right(s, {"brick_width": 1.0})


def test_replay_leaves_rng_alone():
    s = axiom()
    assert place_right(s, draw()).rng == s.rng
    assert place_right(s).rng != s.rng


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**64 - 1), st.sampled_from(SamplingMode))
def test_rules_are_pure(seed, mode):
    p = reference_parameters(n=200)
    s0 = initial_state(Bounds(0, 0, 2000, 300), p, seed, mode)
    s1 = apply_rule(s0, RuleId.LABEL_ASSIGN)
    again = apply_rule(s0, RuleId.LABEL_ASSIGN)
    assert s1.placed == again.placed and s1.rng == again.rng
    assert s0.placed == () and len(s0.derivation) == 0


def test_trail_shares_and_iterates():
    t = Trail().push(1).push(2)
    u = t.push(3)
    assert list(t) == [1, 2] and list(u) == [1, 2, 3] and len(u) == 3 and u.last() == 3
    assert Trail().last() is None
