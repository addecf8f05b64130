"""Deterministic SVG heatmaps of contribution matrices and word maps.

SVG keeps the output diffable and testable as text. Identical inputs
always produce byte-identical documents: cells are emitted row-major,
gold and hard markers in sorted point order, and every coordinate is
formatted through one helper.
"""

from __future__ import annotations

import numpy as np

from .core import GoldAlignment, HardAlignment, ValidationError

CELL = 24
MARGIN_LEFT = 56
MARGIN_TOP = 16
MARGIN_RIGHT = 16
MARGIN_BOTTOM = 56


def _num(x: float) -> str:
    return f"{x:g}"


def _tick_step(n: int) -> int:
    return 1 if n <= 40 else max(1, n // 20)


def _cell_fill(value: float, peak: float) -> str:
    t = 0.0 if peak <= 0 else min(max(value / peak, 0.0), 1.0)
    c = int(round(255 * (1 - t)))
    b = int(round(255 - 105 * t))
    return f"rgb({c},{c},{b})"


def render_heatmap(
    values: np.ndarray,
    gold: GoldAlignment | None = None,
    hard: HardAlignment | None = None,
    src_axis: str = "source word",
    tgt_axis: str = "target word",
) -> str:
    """Draw a matrix as a grid of shaded cells.

    Rows are target positions (top to bottom), columns source positions
    (left to right). Gold Sure points get a solid outline, Possible-only
    points a dashed one; hard-alignment points get a centered dot. Shade
    is linear in the value relative to the matrix maximum.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ValidationError(f"heatmap needs a non-empty 2D matrix, got shape {values.shape}")
    rows, cols = values.shape
    if gold is not None:
        for p in sorted(gold.possible):
            if p.src_word >= cols or p.tgt_word >= rows:
                raise ValidationError(
                    f"gold point ({p.src_word}, {p.tgt_word}) outside {rows}x{cols} map"
                )
    if hard is not None:
        for p in sorted(hard.points):
            if p.src_word >= cols or p.tgt_word >= rows:
                raise ValidationError(
                    f"hard point ({p.src_word}, {p.tgt_word}) outside {rows}x{cols} map"
                )

    width = MARGIN_LEFT + cols * CELL + MARGIN_RIGHT
    height = MARGIN_TOP + rows * CELL + MARGIN_BOTTOM
    peak = float(values.max())

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">',
        f'<rect class="bg" x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for i in range(rows):
        for j in range(cols):
            x = MARGIN_LEFT + j * CELL
            y = MARGIN_TOP + i * CELL
            parts.append(
                f'<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                f'fill="{_cell_fill(float(values[i, j]), peak)}" stroke="#ddd" stroke-width="0.5"/>'
            )
    if gold is not None:
        for p in sorted(gold.possible):
            x = MARGIN_LEFT + p.src_word * CELL + 1.5
            y = MARGIN_TOP + p.tgt_word * CELL + 1.5
            if p in gold.sure:
                cls, stroke, dash = "gold-sure", "#d62728", ""
            else:
                cls, stroke, dash = "gold-possible", "#ff7f0e", ' stroke-dasharray="4 3"'
            parts.append(
                f'<rect class="{cls}" x="{_num(x)}" y="{_num(y)}" '
                f'width="{CELL - 3}" height="{CELL - 3}" fill="none" '
                f'stroke="{stroke}" stroke-width="3"{dash}/>'
            )
    if hard is not None:
        for p in sorted(hard.points):
            cx = MARGIN_LEFT + p.src_word * CELL + CELL / 2
            cy = MARGIN_TOP + p.tgt_word * CELL + CELL / 2
            parts.append(
                f'<circle class="hard" cx="{_num(cx)}" cy="{_num(cy)}" r="4.5" '
                f'fill="#2ca02c" stroke="white" stroke-width="1"/>'
            )
    for j in range(0, cols, _tick_step(cols)):
        x = MARGIN_LEFT + j * CELL + CELL / 2
        y = MARGIN_TOP + rows * CELL + 14
        parts.append(
            f'<text class="tick-x" x="{_num(x)}" y="{y}" text-anchor="middle">{j}</text>'
        )
    for i in range(0, rows, _tick_step(rows)):
        x = MARGIN_LEFT - 6
        y = MARGIN_TOP + i * CELL + CELL / 2 + 4
        parts.append(
            f'<text class="tick-y" x="{x}" y="{_num(y)}" text-anchor="end">{i}</text>'
        )
    parts.append(
        f'<text class="axis-x" x="{MARGIN_LEFT + cols * CELL / 2:g}" '
        f'y="{MARGIN_TOP + rows * CELL + 36}" text-anchor="middle">{src_axis}</text>'
    )
    parts.append(
        f'<text class="axis-y" x="14" y="{MARGIN_TOP + rows * CELL / 2:g}" '
        f'text-anchor="middle" transform="rotate(-90 14 '
        f'{MARGIN_TOP + rows * CELL / 2:g})">{tgt_axis}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
