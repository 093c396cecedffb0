"""Bricklaying parameters from labeled wall surveys, and walls regrown from them.

Pipeline: ``pc_ingest`` (parse, plane fit, project) -> ``brick_extract``
(cluster, rectangles, joints) -> ``stats`` (distributions) -> ``grammar`` /
``wall_generate`` (seven-rule shape grammar) -> ``render`` (SVG, comparison).
"""

__version__ = "0.1.0"
