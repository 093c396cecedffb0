"""SVG output and source-vs-generated statistics."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from xml.sax.saxutils import quoteattr

from .brick_extract import compute_gaps
from .errors import InsufficientData
from .stats import PARAMETER_NAMES, WallParameters
from .wall_generate import Wall

MIN_BRICKS = 30


@dataclass(frozen=True)
class RenderStyle:
    brick_fill: str = "#9e5839"
    mortar_fill: str = "#d9cfc0"
    stroke_width: float = 0.0  # mm
    scale: float = 1.0  # px per mm

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if not self.stroke_width >= 0:
            raise ValueError("stroke_width must be >= 0")


def _num(x: float) -> str:
    # fixed six decimals, trailing zeros dropped, never "-0"
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def to_svg(wall: Wall, style: RenderStyle = RenderStyle()) -> str:
    """One mortar background rect, then one rect per brick in id order.

    Internal geometry is y-up; SVG is y-down, so y = (height - top) * scale.
    """
    k = style.scale
    W, H = wall.spec.width, wall.spec.height
    if style.stroke_width > 0:
        stroke = f' stroke={quoteattr(style.mortar_fill)} stroke-width="{_num(style.stroke_width * k)}"'
    else:
        stroke = ' stroke="none"'
    brick_fill = quoteattr(style.brick_fill)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_num(W * k)}" height="{_num(H * k)}" viewBox="0 0 {_num(W * k)} {_num(H * k)}">',
        f'<rect x="0" y="0" width="{_num(W * k)}" height="{_num(H * k)}" '
        f'fill={quoteattr(style.mortar_fill)} stroke="none"/>',
    ]
    for b in sorted(wall.bricks, key=lambda b: b.id):
        r = b.rect
        lines.append(
            f'<rect x="{_num(r.left * k)}" y="{_num((H - r.top) * k)}" '
            f'width="{_num(r.width * k)}" height="{_num(r.height * k)}" fill={brick_fill}{stroke}/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ParamComparison:
    name: str
    n: int
    mean_src: float
    mean_gen: float
    std_src: float
    std_gen: float

    @property
    def mean_error(self) -> float:
        return relative_error(self.mean_gen, self.mean_src, self.std_src)

    @property
    def std_error(self) -> float:
        return relative_error(self.std_gen, self.std_src)


def relative_error(value: float, reference: float, scale: float = 0.0) -> float:
    """|value - reference| over max(|reference|, scale).

    ``scale`` keeps zero-centred quantities (jitter) from dividing by ~0.
    With both at zero the absolute difference is returned.
    """
    denom = max(abs(reference), scale)
    diff = abs(value - reference)
    return diff / denom if denom > 0 else diff


def _moments(xs: list[float]) -> tuple[float, float]:
    if not xs:
        return math.nan, math.nan
    return statistics.fmean(xs), statistics.stdev(xs) if len(xs) > 1 else 0.0


def compare_stats(source: WallParameters, wall: Wall) -> list[ParamComparison]:
    """Re-measure the generated geometry and set it beside the source.

    Scaled edge bricks are dropped before measuring, so they count neither
    as widths nor as the end of a head joint.  Skipped edges place no brick
    and so never show up.
    """
    rects = wall.rects(include_scaled=False)
    if len(rects) < MIN_BRICKS:
        raise InsufficientData(f"need >= {MIN_BRICKS} unscaled bricks, wall has {len(rects)}")
    gaps = compute_gaps(rects)
    measured = {
        "brick_width": [r.width for r in rects],
        "brick_height": [r.height for r in rects],
        "h_gap": gaps.h_gaps,
        "v_gap": gaps.v_gaps,
        "level_jitter": gaps.level_jitter,
        "row_offset": gaps.row_offsets,
    }
    out = []
    for name in PARAMETER_NAMES:
        src = source[name]
        mean_gen, std_gen = _moments(measured[name])
        out.append(ParamComparison(name, len(measured[name]), src.mean, mean_gen, src.std, std_gen))
    return out


def comparison_document(rows: list[ParamComparison]) -> dict:
    return {
        "parameters": [
            {
                "name": r.name,
                "n": r.n,
                "mean_src": r.mean_src,
                "mean_gen": r.mean_gen,
                "std_src": r.std_src,
                "std_gen": r.std_gen,
                "mean_rel_error": r.mean_error,
                "std_rel_error": r.std_error,
            }
            for r in rows
        ]
    }


def format_comparison(rows: list[ParamComparison]) -> str:
    header = f"{'parameter':<13} {'n':>6} {'mean_src':>9} {'mean_gen':>9} {'err':>7} {'std_src':>8} {'std_gen':>8} {'err':>7}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.name:<13} {r.n:>6d} {r.mean_src:>9.3f} {r.mean_gen:>9.3f} {r.mean_error:>7.2%} "
            f"{r.std_src:>8.3f} {r.std_gen:>8.3f} {r.std_error:>7.2%}")
    return "\n".join(lines) + "\n"
