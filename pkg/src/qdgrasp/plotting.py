"""Static SVG emission for transfer reports: binned means, optional raw
scatter, the regression line, and an r/p annotation. Output is plain text
built with fixed float formatting, so identical reports give identical bytes."""

from __future__ import annotations

from .transfer import TransferReport

WIDTH = 640
HEIGHT = 480
MARGIN_L = 62
MARGIN_R = 18
MARGIN_T = 20
MARGIN_B = 48

PLOT_W = WIDTH - MARGIN_L - MARGIN_R
PLOT_H = HEIGHT - MARGIN_T - MARGIN_B


class PlotError(ValueError):
    pass


def data_to_px(x: float, y: float) -> tuple[float, float]:
    """Map (fitness, eta) in [0,1]^2 to SVG pixel coordinates."""
    return MARGIN_L + x * PLOT_W, MARGIN_T + (1.0 - y) * PLOT_H


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_scatter_svg(report: TransferReport, path: str, show_raw: bool = False) -> None:
    if report.n < 1 or (not report.bins and not report.rows):
        raise PlotError("cannot plot an empty report")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    # axes, ticks and grid at 0, 0.25, .., 1
    for i in range(5):
        v = i / 4.0
        px, py = data_to_px(v, 0.0)
        _, py2 = data_to_px(0.0, v)
        parts.append(
            f'<line x1="{_fmt(px)}" y1="{_fmt(MARGIN_T)}" x2="{_fmt(px)}" '
            f'y2="{_fmt(MARGIN_T + PLOT_H)}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<line x1="{_fmt(MARGIN_L)}" y1="{_fmt(py2)}" x2="{_fmt(MARGIN_L + PLOT_W)}" '
            f'y2="{_fmt(py2)}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(px)}" y="{HEIGHT - 28}" font-size="12" '
            f'text-anchor="middle" fill="#333333">{v:g}</text>'
        )
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{_fmt(py2 + 4)}" font-size="12" '
            f'text-anchor="end" fill="#333333">{v:g}</text>'
        )
    parts.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{PLOT_W}" height="{PLOT_H}" '
        f'fill="none" stroke="#333333" stroke-width="1"/>'
    )
    label = report.variant or "DR fitness"
    parts.append(
        f'<text x="{MARGIN_L + PLOT_W // 2}" y="{HEIGHT - 8}" font-size="14" '
        f'text-anchor="middle" fill="#000000">{label}</text>'
    )
    parts.append(
        f'<text x="16" y="{MARGIN_T + PLOT_H // 2}" font-size="14" text-anchor="middle" '
        f'fill="#000000" transform="rotate(-90 16 {MARGIN_T + PLOT_H // 2})">transfer ratio</text>'
    )
    if show_raw:
        for _, f, e in report.rows:
            px, py = data_to_px(f, e)
            parts.append(
                f'<circle class="raw" cx="{_fmt(px)}" cy="{_fmt(py)}" r="2" '
                f'fill="#88aadd" fill-opacity="0.45"/>'
            )
    for b in report.bins:
        px, py = data_to_px(b.mean_fitness, b.mean_eta)
        parts.append(
            f'<rect class="bin" x="{_fmt(px - 4)}" y="{_fmt(py - 4)}" width="8" height="8" '
            f'fill="#cc4444"/>'
        )
    x1, y1 = data_to_px(0.0, report.intercept)
    x2, y2 = data_to_px(1.0, report.slope + report.intercept)
    parts.append(
        f'<line class="fit" x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
        f'stroke="#222222" stroke-width="1.5"/>'
    )
    parts.append(
        f'<rect x="{MARGIN_L + 10}" y="{MARGIN_T + 10}" width="190" height="40" '
        f'fill="#ffffff" fill-opacity="0.85" stroke="#888888"/>'
    )
    parts.append(
        f'<text class="annot" x="{MARGIN_L + 18}" y="{MARGIN_T + 26}" font-size="13" '
        f'fill="#000000">r = {report.pearson:.4f}</text>'
    )
    parts.append(
        f'<text class="annot" x="{MARGIN_L + 18}" y="{MARGIN_T + 42}" font-size="13" '
        f'fill="#000000">p = {report.p_value:.3e} (n = {report.n})</text>'
    )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
