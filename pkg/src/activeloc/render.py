"""SVG rendering of an episode trajectory over its map."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET

import numpy as np

from .episode import EpisodeResult
from .worldmap import CellCode, OccupancyGrid

TRUE_COLOR = "red"
EST_COLOR = "green"
SCALE = 40.0  # pixels per meter


def _row_runs(mask: np.ndarray):
    """Yield (row, col_start, length) for horizontal runs of True."""
    for r in range(mask.shape[0]):
        row = mask[r]
        c = 0
        w = row.size
        while c < w:
            if row[c]:
                start = c
                while c < w and row[c]:
                    c += 1
                yield r, start, c - start
            else:
                c += 1


def render_trajectory(result: EpisodeResult, grid: OccupancyGrid) -> str:
    """Map cells, one red arrow per true pose, one green arrow per estimate,
    final poses circled. Returns the SVG document as a string."""
    res = grid.resolution
    wm, hm = grid.extent
    W, H = wm * SCALE, hm * SCALE
    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=f"{W:.1f}",
        height=f"{H:.1f}",
        viewBox=f"0 0 {W:.1f} {H:.1f}",
    )
    ET.SubElement(svg, "rect", x="0", y="0", width=f"{W:.1f}", height=f"{H:.1f}", fill="white")
    cells = ET.SubElement(svg, "g", {"class": "map"})
    for code, color in ((CellCode.UNEXPLORED, "#bbbbbb"), (CellCode.OCCUPIED, "black")):
        for r, c, n in _row_runs(grid.cells == code):
            # flip rows so +y points up in the image
            ET.SubElement(
                cells,
                "rect",
                x=f"{c * res * SCALE:.2f}",
                y=f"{(grid.height - r - 1) * res * SCALE:.2f}",
                width=f"{n * res * SCALE:.2f}",
                height=f"{res * SCALE:.2f}",
                fill=color,
            )

    def to_px(x, y):
        lx, ly = grid.to_local(x, y)
        return float(lx) * SCALE, H - float(ly) * SCALE

    def arrow(parent, pose, color, kind):
        x, y = to_px(pose[0], pose[1])
        phi = pose[2] + grid.origin.phi
        length = 0.3 * SCALE
        tx, ty = x + length * math.cos(phi), y - length * math.sin(phi)
        g = ET.SubElement(parent, "g", {"class": f"arrow {kind}"})
        ET.SubElement(g, "line", x1=f"{x:.2f}", y1=f"{y:.2f}", x2=f"{tx:.2f}", y2=f"{ty:.2f}", stroke=color)
        head = 0.1 * SCALE
        pts = []
        for da in (math.pi - 0.4, math.pi + 0.4):
            pts.append((tx + head * math.cos(phi + da), ty - head * math.sin(phi + da)))
        ET.SubElement(
            g,
            "polygon",
            points=" ".join(f"{px:.2f},{py:.2f}" for px, py in [(tx, ty)] + pts),
            fill=color,
        )

    traj = ET.SubElement(svg, "g", {"class": "trajectory"})
    for t in range(result.T):
        arrow(traj, result.true_poses[t], TRUE_COLOR, "true")
        arrow(traj, result.est_poses[t], EST_COLOR, "estimate")
    for poses, color in ((result.true_poses, TRUE_COLOR), (result.est_poses, EST_COLOR)):
        x, y = to_px(poses[-1, 0], poses[-1, 1])
        ET.SubElement(
            svg, "circle", {"class": "final"}, cx=f"{x:.2f}", cy=f"{y:.2f}", r=f"{0.25 * SCALE:.2f}", fill="none", stroke=color
        )
    ET.indent(svg)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(svg, encoding="unicode") + "\n"
