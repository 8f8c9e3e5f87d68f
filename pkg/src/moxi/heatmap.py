"""Plain-text PPM (P3) heatmaps of pick timing.

The earliest pick is pure red, the latest pure yellow, with the green
channel interpolated linearly over pick rank.  Unpicked patches are gray.
"""

from __future__ import annotations

from dataclasses import dataclass

from moxi.greedy import SelectionTrace

EARLY = (255, 0, 0)
LATE = (255, 255, 0)
UNPICKED = (128, 128, 128)


@dataclass(frozen=True)
class HeatmapSpec:
    grid: tuple[int, int]
    cell_size: int = 16

    def __post_init__(self):
        if self.grid[0] < 1 or self.grid[1] < 1:
            raise ValueError("grid dimensions must be positive")
        if self.cell_size < 1:
            raise ValueError("cell_size must be positive")


def _lerp(a: int, b: int, num: int, den: int) -> int:
    # round half up, integer-only so output is platform independent
    return a + ((b - a) * 2 * num + den) // (2 * den)


def rank_color(rank: int, picks: int) -> tuple[int, int, int]:
    """Color of the ``rank``-th pick (0-based) out of ``picks``."""
    if picks <= 1:
        return EARLY
    return tuple(_lerp(a, b, rank, picks - 1) for a, b in zip(EARLY, LATE))


def patch_colors(trace: SelectionTrace, spec: HeatmapSpec) -> list[tuple[int, int, int]]:
    rows, cols = spec.grid
    if rows * cols != trace.n:
        raise ValueError(f"grid {rows}x{cols} does not match a trace over {trace.n} players")
    if trace.grid is not None and tuple(trace.grid) != tuple(spec.grid):
        raise ValueError(f"trace grid {trace.grid[0]}x{trace.grid[1]} does not match {rows}x{cols}")
    colors = [UNPICKED] * trace.n
    for rank, p in enumerate(trace.order):
        colors[p] = rank_color(rank, len(trace.order))
    return colors


def render_ppm(trace: SelectionTrace, spec: HeatmapSpec, comment: str | None = None) -> str:
    """The heatmap as P3 text, one pixel per line."""
    rows, cols = spec.grid
    colors = patch_colors(trace, spec)
    cs = spec.cell_size
    width, height = cols * cs, rows * cs
    lines = ["P3"]
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"{width} {height}")
    lines.append("255")
    for r in range(rows):
        row_pixels = []
        for c in range(cols):
            pix = "%d %d %d" % colors[r * cols + c]
            row_pixels.extend([pix] * cs)
        lines.extend(row_pixels * cs)
    return "\n".join(lines) + "\n"


def parse_ppm(text: str) -> tuple[int, int, list[tuple[int, int, int]]]:
    """Width, height, and row-major pixels of a P3 document."""
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P3":
        raise ValueError("not a P3 pixmap")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    vals = [int(t) for t in tokens[4:]]
    if len(vals) != width * height * 3 or maxval != 255:
        raise ValueError("pixel data does not match the header")
    return width, height, [tuple(vals[i:i + 3]) for i in range(0, len(vals), 3)]
