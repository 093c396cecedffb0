"""Reading labeled survey clouds and flattening them onto the wall plane.

All lengths are millimeters.  Clouds arrive as ASCII PLY or CSV with one
brick/mortar label per point; classification itself happens upstream.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import BinaryIO, Iterable, NamedTuple, Sequence, TextIO

import numpy as np

from .errors import DegenerateGeometry, EmptyInput, ParseError


class Label(enum.IntEnum):
    MORTAR = 0
    BRICK = 1


class CloudFormat(enum.Enum):
    ASCII_PLY = "ply"
    CSV = "csv"


class LabeledPoint(NamedTuple):
    x: float
    y: float
    z: float
    label: Label


class Point2(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class WallPlane:
    """Orthonormal frame on the wall surface; ``v_axis`` points up."""

    origin: tuple[float, float, float]
    u_axis: tuple[float, float, float]
    v_axis: tuple[float, float, float]
    normal: tuple[float, float, float]

    def __post_init__(self):
        for name in ("origin", "u_axis", "v_axis", "normal"):
            vec = getattr(self, name)
            if len(vec) != 3 or not all(math.isfinite(c) for c in vec):
                raise ValueError(f"{name} must be a finite 3-vector")
        axes = np.array([self.u_axis, self.v_axis, self.normal], dtype=float)
        if not np.allclose(axes @ axes.T, np.eye(3), atol=1e-9):
            raise ValueError("plane axes must be orthonormal")


_LABEL_WORDS = {"brick": Label.BRICK, "mortar": Label.MORTAR, "1": Label.BRICK, "0": Label.MORTAR}


def _parse_label(token: str, line: int) -> Label:
    label = _LABEL_WORDS.get(token.strip().lower())
    if label is None:
        raise ParseError(f"unknown label {token.strip()!r}", line=line, field="label")
    return label


def _parse_coord(token: str, line: int, name: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{name} is not a number: {token.strip()!r}", line=line, field=name) from None
    if not math.isfinite(value):
        raise ParseError(f"{name} is not finite", line=line, field=name)
    return value


def parse_point_cloud(source: bytes | BinaryIO | TextIO, fmt: CloudFormat | str) -> list[LabeledPoint]:
    """Parse an ASCII PLY or CSV stream into labeled points, in file order."""
    fmt = CloudFormat(fmt)
    if isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8")
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    if fmt is CloudFormat.CSV:
        points = _parse_csv(text)
    else:
        points = _parse_ply(text)
    if not points:
        raise EmptyInput("point cloud contains no points")
    return points


def _parse_csv(text: str) -> list[LabeledPoint]:
    points = []
    columns = (0, 1, 2, 3)
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if lineno == 1 and not _looks_numeric(row[0]):
            names = [cell.strip().lower() for cell in row]
            try:
                columns = tuple(names.index(key) for key in ("x", "y", "z", "label"))
            except ValueError:
                raise ParseError("header must name columns x, y, z, label", line=1) from None
            continue
        if len(row) <= max(columns):
            raise ParseError(f"expected at least {max(columns) + 1} fields, got {len(row)}", line=lineno)
        ix, iy, iz, il = columns
        points.append(
            LabeledPoint(
                _parse_coord(row[ix], lineno, "x"),
                _parse_coord(row[iy], lineno, "y"),
                _parse_coord(row[iz], lineno, "z"),
                _parse_label(row[il], lineno),
            )
        )
    return points


def _looks_numeric(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_ply(text: str) -> list[LabeledPoint]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", line=1)

    # elements: list of (name, count, [(prop_name, is_list)])
    elements: list[tuple[str, int, list[tuple[str, bool]]]] = []
    body_start = None
    for i, raw in enumerate(lines[1:], start=2):
        words = raw.split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        key = words[0]
        if key == "format":
            if len(words) < 2 or words[1] != "ascii":
                raise ParseError("only 'format ascii 1.0' is supported", line=i)
        elif key == "element":
            if len(words) != 3:
                raise ParseError("malformed element line", line=i)
            try:
                count = int(words[2])
            except ValueError:
                raise ParseError("element count is not an integer", line=i) from None
            elements.append((words[1], count, []))
        elif key == "property":
            if not elements:
                raise ParseError("property before any element", line=i)
            if len(words) >= 2 and words[1] == "list":
                if len(words) != 5:
                    raise ParseError("malformed list property", line=i)
                elements[-1][2].append((words[4], True))
            elif len(words) == 3:
                elements[-1][2].append((words[2], False))
            else:
                raise ParseError("malformed property line", line=i)
        elif key == "end_header":
            body_start = i + 1
            break
        else:
            raise ParseError(f"unexpected header keyword {key!r}", line=i)
    if body_start is None:
        raise ParseError("missing end_header", line=len(lines))

    points: list[LabeledPoint] = []
    lineno = body_start
    found_vertex = False
    for name, count, props in elements:
        if name != "vertex":
            lineno += count  # one line per element instance
            continue
        found_vertex = True
        names = [p for p, _ in props]
        missing = [key for key in ("x", "y", "z", "label") if key not in names]
        if missing:
            raise ParseError(f"vertex element lacks properties {missing}", field=missing[0])
        if any(is_list for _, is_list in props):
            raise ParseError("list properties on vertices are not supported")
        ix, iy, iz, il = (names.index(key) for key in ("x", "y", "z", "label"))
        for _ in range(count):
            if lineno - 1 >= len(lines):
                raise ParseError("unexpected end of vertex data", line=lineno)
            words = lines[lineno - 1].split()
            if len(words) != len(props):
                raise ParseError(f"expected {len(props)} values, got {len(words)}", line=lineno)
            label_token = words[il]
            try:
                label_value = float(label_token)
            except ValueError:
                raise ParseError(f"label is not an integer: {label_token!r}", line=lineno, field="label") from None
            if label_value not in (0.0, 1.0):
                raise ParseError(f"unknown label {label_token!r}", line=lineno, field="label")
            points.append(
                LabeledPoint(
                    _parse_coord(words[ix], lineno, "x"),
                    _parse_coord(words[iy], lineno, "y"),
                    _parse_coord(words[iz], lineno, "z"),
                    Label(int(label_value)),
                )
            )
            lineno += 1
    if not found_vertex:
        raise ParseError("no vertex element in header")
    return points


def write_ply(points: Iterable[LabeledPoint], sink: TextIO) -> None:
    points = list(points)
    sink.write("ply\nformat ascii 1.0\ncomment units mm\n")
    sink.write(f"element vertex {len(points)}\n")
    sink.write("property float x\nproperty float y\nproperty float z\nproperty uchar label\nend_header\n")
    for p in points:
        sink.write(f"{p.x:.6f} {p.y:.6f} {p.z:.6f} {int(p.label)}\n")


def write_csv(points: Iterable[LabeledPoint], sink: TextIO) -> None:
    sink.write("x,y,z,label\n")
    for p in points:
        sink.write(f"{p.x:.6f},{p.y:.6f},{p.z:.6f},{'brick' if p.label == Label.BRICK else 'mortar'}\n")


def as_arrays(points: Sequence[LabeledPoint]) -> tuple[np.ndarray, np.ndarray]:
    """(N, 3) coordinates and (N,) integer labels."""
    if len(points) == 0:
        return np.empty((0, 3)), np.empty(0, dtype=np.int8)
    arr = np.asarray(points, dtype=float)
    return arr[:, :3].copy(), arr[:, 3].astype(np.int8)


def from_arrays(xyz: np.ndarray, labels: np.ndarray) -> list[LabeledPoint]:
    lab = (Label.MORTAR, Label.BRICK)
    return [LabeledPoint(float(x), float(y), float(z), lab[int(l)]) for (x, y, z), l in zip(xyz.tolist(), labels)]


def downsample(points: Sequence[LabeledPoint], voxel: float) -> list[LabeledPoint]:
    """Keep at most one point per cubic voxel of edge ``voxel``.

    The survivor is the point nearest the voxel's geometric center, ties to
    the lowest input index.  Survivors keep their input order.
    """
    if not voxel > 0:
        raise ValueError("voxel must be > 0")
    if len(points) == 0:
        return []
    xyz, _ = as_arrays(points)
    keep = downsample_indices(xyz, voxel)
    return [points[i] for i in keep]


def downsample_indices(xyz: np.ndarray, voxel: float) -> np.ndarray:
    cells = np.floor(xyz / voxel).astype(np.int64)
    centers = (cells + 0.5) * voxel
    dist2 = ((xyz - centers) ** 2).sum(axis=1)
    index = np.arange(len(xyz))
    # last key is primary
    order = np.lexsort((index, dist2, cells[:, 2], cells[:, 1], cells[:, 0]))
    sc = cells[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = np.any(sc[1:] != sc[:-1], axis=1)
    return np.sort(order[first])


_UP = np.array([0.0, 0.0, 1.0])
_FALLBACK_UP = np.array([0.0, 1.0, 0.0])


def fit_wall_plane(points: Sequence[LabeledPoint] | np.ndarray) -> WallPlane:
    """Least-squares plane through the cloud, framed so that v points up.

    Global up is +z.  A cloud lying flat (normal within ~0.6 degrees of z)
    has no usable vertical direction, so +y stands in for up; synthetic
    clouds written by :func:`brickgram.wall_generate.synthesize_cloud` are
    in that case.  The normal sign is fixed by making its largest-magnitude
    component positive, and ``u = v x normal``.
    """
    xyz = points if isinstance(points, np.ndarray) else as_arrays(points)[0]
    if len(xyz) < 3:
        raise DegenerateGeometry(f"need at least 3 points to fit a plane, got {len(xyz)}")
    origin = xyz.mean(axis=0)
    centered = xyz - origin
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = s[0] if s[0] > 0 else 1.0
    if s[0] == 0 or s[1] <= 1e-12 * scale:
        raise DegenerateGeometry("points are collinear or coincident")
    normal = vt[2]
    normal = normal * (1.0 if normal[np.argmax(np.abs(normal))] > 0 else -1.0)

    up = _UP if abs(normal @ _UP) < 0.99995 else _FALLBACK_UP
    v_axis = up - (up @ normal) * normal
    v_axis /= np.linalg.norm(v_axis)
    u_axis = np.cross(v_axis, normal)
    u_axis /= np.linalg.norm(u_axis)
    return WallPlane(
        origin=tuple(origin.tolist()),
        u_axis=tuple(u_axis.tolist()),
        v_axis=tuple(v_axis.tolist()),
        normal=tuple(normal.tolist()),
    )


def project_array(xyz: np.ndarray, plane: WallPlane) -> np.ndarray:
    """(N, 3) -> (N, 2) wall coordinates."""
    basis = np.array([plane.u_axis, plane.v_axis], dtype=float).T
    return (xyz - np.asarray(plane.origin)) @ basis


def project(points: Sequence[LabeledPoint], plane: WallPlane) -> list[tuple[Point2, Label]]:
    xyz, _ = as_arrays(points)
    uv = project_array(xyz, plane)
    return [(Point2(u, v), p.label) for (u, v), p in zip(uv.tolist(), points)]


def crop(uv: np.ndarray, box: tuple[float, float, float, float]) -> np.ndarray:
    """Boolean mask of 2D points inside the closed box (u0, v0, u1, v1)."""
    u0, v0, u1, v1 = box
    if not (u0 < u1 and v0 < v1):
        raise ValueError("crop box must satisfy u0 < u1 and v0 < v1")
    return (uv[:, 0] >= u0) & (uv[:, 0] <= u1) & (uv[:, 1] >= v0) & (uv[:, 1] <= v1)
