"""Rebuild the bundled sample survey in src/brickgram/data.

A 1000 x 400 mm wall is generated from the reference test parameters and
sampled as a labeled cloud at 5 mm pitch with 0.5 mm noise.  The output is
deterministic; tests/test_sample_data.py checks the committed file against
a fresh rebuild.
"""

from __future__ import annotations

import io
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from helpers import reference_parameters  # noqa: E402

from brickgram.pc_ingest import write_ply  # noqa: E402
from brickgram.wall_generate import WallSpec, generate, synthesize_cloud  # noqa: E402

SPEC = WallSpec(1000, 400, 20240)
PITCH = 5.0
NOISE = 0.5
NOISE_SEED = 7


def build() -> str:
    wall = generate(SPEC, reference_parameters())
    sink = io.StringIO()
    write_ply(synthesize_cloud(wall, PITCH, NOISE, NOISE_SEED), sink)
    return sink.getvalue()


if __name__ == "__main__":
    out = ROOT / "src" / "brickgram" / "data" / "sample_wall.ply"
    out.write_text(build(), encoding="utf-8", newline="\n")
    print(f"wrote {out}")
