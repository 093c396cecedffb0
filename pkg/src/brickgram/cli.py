"""``brickgram`` command line: one subcommand per pipeline stage.

Stages hand off through files (cloud -> rects -> params -> wall -> svg), so
each can be rerun and inspected on its own.  Every command prints a single
``key=value`` summary line on stdout; diagnostics go to stderr.

Exit codes:
  0  success
  1  validate found violations
  2  parse, schema or usage error (including empty input)
  3  not enough data: no bricks found, degenerate cluster, too few gaps
  4  degenerate geometry (plane fit impossible)
  5  wall spec too small for a single course
  6  input file missing or unreadable, output not writable
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .brick_extract import (
    DEFAULT_MIN_PTS,
    DEFAULT_TRIM,
    BrickRect,
    extract_rects,
)
from .errors import (
    BrickgramError,
    DegenerateCluster,
    DegenerateGeometry,
    EmptyInput,
    InsufficientData,
    NoBricksFound,
    ParseError,
    SchemaError,
    SpecTooSmall,
)
from .grammar import GrowthDirection
from .pc_ingest import (
    CloudFormat,
    Label,
    Point2,
    downsample_indices,
    as_arrays,
    crop,
    fit_wall_plane,
    parse_point_cloud,
    project_array,
    write_csv,
    write_ply,
)
from .render import RenderStyle, compare_stats, comparison_document, to_svg
from .stats import SamplingMode, load_parameters, parameters_from_rects, save_parameters
from .wall_generate import WallSpec, dumps_wall, generate, load_wall, synthesize_cloud, validate

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_PARSE = 2
EXIT_DATA = 3
EXIT_GEOMETRY = 4
EXIT_SPEC = 5
EXIT_IO = 6

RECTS_FORMAT_VERSION = 1
SAMPLE_CONFIG = Path(__file__).parent / "data" / "sample_pipeline.json"
SEED_ENV = "BRICKGRAM_SEED"


class UsageError(BrickgramError):
    pass


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ParseError, EmptyInput, UsageError)):
        return EXIT_PARSE
    if isinstance(exc, (NoBricksFound, InsufficientData, DegenerateCluster)):
        return EXIT_DATA
    if isinstance(exc, DegenerateGeometry):
        return EXIT_GEOMETRY
    if isinstance(exc, SpecTooSmall):
        return EXIT_SPEC
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_PARSE


def summary(**items: Any) -> None:
    parts = []
    for key, value in items.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        parts.append(f"{key}={value}")
    print(" ".join(parts), flush=True)


# -- argument types -------------------------------------------------------

def _positive(text: str) -> float:
    value = float(text)
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def _non_negative(text: str) -> float:
    value = float(text)
    if not (value >= 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"expected a number >= 0, got {text!r}")
    return value


def _trim(text: str) -> float:
    value = float(text)
    if not 0 <= value <= 0.1:
        raise argparse.ArgumentTypeError("trim must lie in [0, 0.1]")
    return value


def _min_pts(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("min-pts must be >= 1")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _crop(text: str) -> tuple[float, float, float, float]:
    try:
        u0, v0, u1, v1 = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("crop must be u0,v0,u1,v1") from None
    if not (u0 < u1 and v0 < v1):
        raise argparse.ArgumentTypeError("crop must satisfy u0 < u1 and v0 < v1")
    return u0, v0, u1, v1


def _seed_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError("seeds must look like a..b")
    a, b = _seed(lo), _seed(hi)
    if b < a:
        raise argparse.ArgumentTypeError("seed range is empty")
    return range(a, b + 1)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return _seed(raw)
    except (ValueError, argparse.ArgumentTypeError):
        raise UsageError(f"{SEED_ENV}={raw!r} is not a valid seed") from None


# -- file helpers ---------------------------------------------------------

def cloud_format(path: str | Path, override: str | None = None) -> CloudFormat:
    if override:
        return CloudFormat(override)
    suffix = Path(path).suffix.lower().lstrip(".")
    try:
        return CloudFormat(suffix)
    except ValueError:
        raise UsageError(f"cannot tell cloud format from {str(path)!r}; pass --format") from None


def _write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _read_text(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def rects_document(result, plane, extra: dict[str, int]) -> dict[str, Any]:
    return {
        "format_version": RECTS_FORMAT_VERSION,
        "units": "mm",
        "eps": result.eps,
        "pad": result.pad,
        "plane": asdict(plane),
        "rects": [
            {"id": r.id, "cu": r.center.u, "cv": r.center.v, "width": r.width, "height": r.height, "row": r.row_index}
            for r in result.rects
        ],
        "exclusions": {**result.report, **extra},
    }


def load_rects(text: str) -> list[BrickRect]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or doc.get("format_version") != RECTS_FORMAT_VERSION:
        raise SchemaError("not a rects document (format_version 1)", field="format_version")
    entries = doc.get("rects")
    if not isinstance(entries, list):
        raise SchemaError("'rects' must be a list", field="rects")
    rects = []
    for i, e in enumerate(entries):
        try:
            row = e["row"]
            rects.append(BrickRect(int(e["id"]), Point2(float(e["cu"]), float(e["cv"])),
                                   float(e["width"]), float(e["height"]), None if row is None else int(row)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"rects[{i}]: {exc}", field="rects") from None
    return rects


# -- commands -------------------------------------------------------------

def run_extract(cloud: str, out: str, *, fmt=None, eps=None, min_pts=DEFAULT_MIN_PTS, trim=DEFAULT_TRIM,
                voxel=None, crop_box=None, pitch=None) -> dict[str, Any]:
    points = parse_point_cloud(Path(cloud).read_bytes(), cloud_format(cloud, fmt))
    xyz, labels = as_arrays(points)
    total = len(xyz)
    if voxel:
        keep = downsample_indices(xyz, voxel)
        xyz, labels = xyz[keep], labels[keep]
    plane = fit_wall_plane(xyz)
    uv = project_array(xyz, plane)
    mask = labels == Label.BRICK
    if crop_box is not None:
        mask &= crop(uv, crop_box)
    if not mask.any():
        raise NoBricksFound("no brick-labeled points to cluster")
    result = extract_rects(uv[mask], eps=eps, min_pts=min_pts, trim=trim, pitch=pitch)
    extra = {"input_points": total, "after_voxel": int(len(xyz))}
    _write_text(out, json.dumps(rects_document(result, plane, extra), indent=1) + "\n")
    return {"rects": len(result.rects), "rows": len({r.row_index for r in result.rects}),
            "noise_points": result.report["noise_points"], "eps": result.eps, "out": out}


def run_stats(rects_path: str, out: str) -> dict[str, Any]:
    rects = load_rects(_read_text(rects_path))
    if not rects:
        raise InsufficientData("rects file is empty")
    result = parameters_from_rects(rects)
    with open(out, "w", encoding="utf-8") as sink:
        save_parameters(result.params, sink)
    excluded = sum(result.exclusions.values())
    return {"rects": len(rects), "h_gaps": len(result.params.h_gap.samples),
            "v_gaps": len(result.params.v_gap.samples), "excluded": excluded, "out": out}


def _seed_path(out: str, seed: int) -> str:
    if "{seed}" in out:
        return out.replace("{seed}", str(seed))
    p = Path(out)
    return str(p.with_name(f"{p.stem}_{seed}{p.suffix}"))


def run_generate(params_path: str, out: str, *, width: float, height: float, seed: int,
                 mode: SamplingMode = SamplingMode.EMPIRICAL_INDEX,
                 direction: GrowthDirection = GrowthDirection.RIGHTWARD,
                 seeds: range | None = None, jobs: int | None = None) -> dict[str, Any]:
    params = load_parameters(_read_text(params_path))
    if seeds is None:
        wall = generate(WallSpec(width, height, seed, mode, direction), params)
        _write_text(out, dumps_wall(wall))
        return {"bricks": len(wall.bricks), "steps": len(wall.derivation), "seed": seed, "out": out}

    def one(s: int) -> tuple[int, str]:
        wall = generate(WallSpec(width, height, s, mode, direction), params)
        return len(wall.bricks), dumps_wall(wall)

    # derivations are independent; results are written back in seed order
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(one, seeds))
    for s, (_, text) in zip(seeds, results):
        _write_text(_seed_path(out, s), text)
    return {"walls": len(results), "bricks": sum(n for n, _ in results),
            "seeds": f"{seeds.start}..{seeds.stop - 1}", "out": _seed_path(out, seeds.start)}


def run_render(wall_path: str, out: str, style: RenderStyle = RenderStyle()) -> dict[str, Any]:
    wall = load_wall(_read_text(wall_path))
    _write_text(out, to_svg(wall, style))
    return {"rects": len(wall.bricks) + 1, "out": out}


def run_validate(wall_path: str, params_path: str | None = None) -> tuple[dict[str, Any], int]:
    wall = load_wall(_read_text(wall_path))
    params = load_parameters(_read_text(params_path)) if params_path else None
    report = validate(wall, params)
    for v in report.violations:
        print(f"{v.kind}: bricks {','.join(map(str, v.bricks))}: {v.detail}", file=sys.stderr)
    info = {"bricks": len(wall.bricks), "violations": len(report.violations)}
    for kind in report.checked:
        info[kind] = report.count(kind)
    return info, EXIT_OK if report.ok else EXIT_VIOLATIONS


def run_synth(wall_path: str, out: str, *, pitch: float, noise: float, seed: int, fmt=None) -> dict[str, Any]:
    wall = load_wall(_read_text(wall_path))
    points = synthesize_cloud(wall, pitch, noise, seed)
    with open(out, "w", encoding="utf-8", newline="\n") as sink:
        if cloud_format(out, fmt) is CloudFormat.ASCII_PLY:
            write_ply(points, sink)
        else:
            write_csv(points, sink)
    bricks = sum(1 for p in points if p.label == Label.BRICK)
    return {"points": len(points), "brick_points": bricks, "out": out}


# -- pipeline -------------------------------------------------------------

@dataclass
class PipelineConfig:
    cloud: str
    out_dir: str = "."
    eps: float | None = None
    min_pts: int = DEFAULT_MIN_PTS
    trim: float = DEFAULT_TRIM
    voxel: float | None = None
    pitch: float | None = None
    crop: tuple[float, float, float, float] | None = None
    width: float = 3000.0
    height: float = 1000.0
    seed: int = 0
    mode: str = SamplingMode.EMPIRICAL_INDEX.value
    direction: str = GrowthDirection.RIGHTWARD.value

    def __post_init__(self):
        if self.eps is not None and not self.eps > 0:
            raise UsageError("eps must be > 0")
        if self.min_pts < 1:
            raise UsageError("min_pts must be >= 1")
        if not 0 <= self.trim <= 0.1:
            raise UsageError("trim must lie in [0, 0.1]")
        for name in ("voxel", "pitch"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise UsageError(f"{name} must be > 0")
        if not (self.width > 0 and self.height > 0):
            raise UsageError("width and height must be > 0")
        if self.crop is not None:
            self.crop = tuple(float(c) for c in self.crop)
            if len(self.crop) != 4 or not (self.crop[0] < self.crop[2] and self.crop[1] < self.crop[3]):
                raise UsageError("crop must be [u0, v0, u1, v1] with u0 < u1 and v0 < v1")
        try:
            SamplingMode(self.mode)
            GrowthDirection(self.direction)
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def path(self, name: str) -> str:
        return str(Path(self.out_dir) / name)

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        try:
            doc = json.loads(_read_text(path))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        known = {f.name for f in fields(cls)}
        if not isinstance(doc, dict):
            raise SchemaError("config must be a JSON object")
        unknown = sorted(set(doc) - known)
        if unknown:
            raise SchemaError(f"unknown config keys: {', '.join(unknown)}", field=unknown[0])
        if "cloud" not in doc:
            raise SchemaError("config needs 'cloud'", field="cloud")
        # a relative cloud path is taken relative to the config file
        base = Path(path).parent
        doc["cloud"] = str(base / doc["cloud"])
        if "out_dir" in doc:
            doc["out_dir"] = str(base / doc["out_dir"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise SchemaError(str(exc)) from None


ARTIFACTS = ("rects.json", "params.json", "wall.json", "wall.svg", "report.json")


def run_pipeline(cfg: PipelineConfig) -> dict[str, Any]:
    if not Path(cfg.cloud).is_file():
        raise FileNotFoundError(f"cloud file not found: {cfg.cloud}")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    rects, params, wall_path, svg, report = (cfg.path(a) for a in ARTIFACTS)
    ex = run_extract(cfg.cloud, rects, eps=cfg.eps, min_pts=cfg.min_pts, trim=cfg.trim,
                     voxel=cfg.voxel, crop_box=cfg.crop, pitch=cfg.pitch)
    run_stats(rects, params)
    gen = run_generate(params, wall_path, width=cfg.width, height=cfg.height, seed=cfg.seed,
                       mode=SamplingMode(cfg.mode), direction=GrowthDirection(cfg.direction))
    run_render(wall_path, svg)
    wall = load_wall(_read_text(wall_path))
    source = load_parameters(_read_text(params))
    doc = {"validation_violations": len(validate(wall, source).violations),
           **comparison_document(compare_stats(source, wall))}
    _write_text(report, json.dumps(doc, indent=1) + "\n")
    return {"rects": ex["rects"], "bricks": gen["bricks"], "violations": doc["validation_violations"],
            "out_dir": cfg.out_dir}


# -- argparse -------------------------------------------------------------

def _add_extract_flags(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    d = (lambda value: value) if defaults else (lambda value: None)
    p.add_argument("--eps", type=_positive, help="clustering radius in mm (default: 3 x median NN distance)")
    p.add_argument("--min-pts", type=_min_pts, default=d(DEFAULT_MIN_PTS), help="smallest cluster kept")
    p.add_argument("--trim", type=_trim, default=d(DEFAULT_TRIM), help="quantile trimmed per rectangle edge")
    p.add_argument("--voxel", type=_positive, help="voxel edge for downsampling, mm")
    p.add_argument("--crop", type=_crop, metavar="U0,V0,U1,V1", help="keep points inside this wall-plane box")
    p.add_argument("--pitch", type=_non_negative, help="survey point pitch, mm (default: estimated)")


def _add_spec_flags(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    d = (lambda value: value) if defaults else (lambda value: None)
    p.add_argument("--width", type=_positive, default=d(3000.0), help="wall width, mm")
    p.add_argument("--height", type=_positive, default=d(1000.0), help="wall height, mm")
    p.add_argument("--seed", type=_seed, help=f"64-bit seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--mode", choices=[m.value for m in SamplingMode], default=d(SamplingMode.EMPIRICAL_INDEX.value))
    p.add_argument("--direction", choices=[g.value for g in GrowthDirection],
                   default=d(GrowthDirection.RIGHTWARD.value))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brickgram", description=__doc__.split("\n\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog=__doc__.split("\n\n", 2)[2])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="labeled cloud -> brick rectangles")
    p.add_argument("cloud")
    p.add_argument("-o", "--out", default="rects.json")
    p.add_argument("--format", choices=[f.value for f in CloudFormat])
    _add_extract_flags(p)

    p = sub.add_parser("stats", help="rectangles -> parameter distributions")
    p.add_argument("rects")
    p.add_argument("-o", "--out", default="params.json")

    p = sub.add_parser("generate", help="parameters -> wall")
    p.add_argument("params")
    p.add_argument("-o", "--out", default="wall.json")
    _add_spec_flags(p)
    p.add_argument("--seeds", type=_seed_range, metavar="A..B",
                   help="batch over seeds A..B inclusive; '{seed}' in --out is replaced")
    p.add_argument("--jobs", type=int, help="worker threads for --seeds")

    p = sub.add_parser("render", help="wall -> SVG")
    p.add_argument("wall")
    p.add_argument("-o", "--out", default="wall.svg")
    p.add_argument("--scale", type=_positive, default=1.0, help="px per mm")
    p.add_argument("--stroke-width", type=_non_negative, default=0.0, help="mm")
    p.add_argument("--brick-fill", default=RenderStyle.brick_fill)
    p.add_argument("--mortar-fill", default=RenderStyle.mortar_fill)

    p = sub.add_parser("validate", help="check a wall; exit 1 on violations")
    p.add_argument("wall")
    p.add_argument("--params", help="also check joint and jitter ranges against this parameter file")

    p = sub.add_parser("synth", help="wall -> labeled point cloud")
    p.add_argument("wall")
    p.add_argument("-o", "--out", default="cloud.ply")
    p.add_argument("--format", choices=[f.value for f in CloudFormat])
    p.add_argument("--pitch", type=_positive, default=5.0, help="grid pitch, mm")
    p.add_argument("--noise", type=_non_negative, default=0.0, help="coordinate noise std, mm")
    p.add_argument("--seed", type=_seed, help=f"noise seed (default: ${SEED_ENV} or 0)")

    p = sub.add_parser("pipeline", help="cloud -> rects, params, wall, svg and report")
    p.add_argument("cloud", nargs="?")
    p.add_argument("--config", help="JSON file with pipeline settings")
    p.add_argument("--sample", action="store_true", help="run on the bundled sample survey and its settings")
    p.add_argument("-d", "--out-dir", default=None)
    _add_extract_flags(p, defaults=False)
    _add_spec_flags(p, defaults=False)
    return parser


PIPELINE_FLAGS = ("eps", "min_pts", "trim", "voxel", "pitch", "crop", "width", "height", "seed", "mode", "direction")


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    """Flags beat the config file, which beats the built-in defaults."""
    if args.sample:
        if args.config:
            raise UsageError("--sample and --config are exclusive")
        args.config = str(SAMPLE_CONFIG)
    if args.config:
        if not Path(args.config).is_file():
            raise FileNotFoundError(f"config not found: {args.config}")
        cfg = PipelineConfig.from_file(args.config)
    elif args.cloud:
        cfg = PipelineConfig(args.cloud, seed=default_seed())
    else:
        raise UsageError("pipeline needs a cloud path or --config")
    merged = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for name in PIPELINE_FLAGS:
        value = getattr(args, name)
        if value is not None:
            merged[name] = value
    if args.cloud:
        merged["cloud"] = args.cloud
    if args.out_dir is not None:
        merged["out_dir"] = args.out_dir
    return PipelineConfig(**merged)


def dispatch(args: argparse.Namespace) -> int:
    cmd = args.command
    code = EXIT_OK
    if cmd == "extract":
        info = run_extract(args.cloud, args.out, fmt=args.format, eps=args.eps, min_pts=args.min_pts,
                           trim=args.trim, voxel=args.voxel, crop_box=args.crop, pitch=args.pitch)
    elif cmd == "stats":
        info = run_stats(args.rects, args.out)
    elif cmd == "generate":
        seed = args.seed if args.seed is not None else default_seed()
        info = run_generate(args.params, args.out, width=args.width, height=args.height, seed=seed,
                            mode=SamplingMode(args.mode), direction=GrowthDirection(args.direction),
                            seeds=args.seeds, jobs=args.jobs)
    elif cmd == "render":
        style = RenderStyle(args.brick_fill, args.mortar_fill, args.stroke_width, args.scale)
        info = run_render(args.wall, args.out, style)
    elif cmd == "validate":
        info, code = run_validate(args.wall, args.params)
    elif cmd == "synth":
        seed = args.seed if args.seed is not None else default_seed()
        info = run_synth(args.wall, args.out, pitch=args.pitch, noise=args.noise, seed=seed, fmt=args.format)
    elif cmd == "pipeline":
        info = run_pipeline(_pipeline_config(args))
    else:  # pragma: no cover - argparse rejects unknown commands
        raise UsageError(f"unknown command {cmd!r}")
    summary(command=cmd, status="ok" if code == EXIT_OK else "violations", **info)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except (BrickgramError, OSError, ValueError) as exc:
        code = exit_code(exc)
        print(f"brickgram {args.command}: error: {exc}", file=sys.stderr)
        summary(command=args.command, status="error", exit=code)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
