"""Minimal SVG line plots for ROC curves: axes, ticks, chance diagonal, one polyline per curve."""

from __future__ import annotations

from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def roc_svg(curves: dict, title: str = "ROC", config_hash: str = "", size: int = 360) -> str:
    """``curves`` maps a legend label to a :class:`~ucl.metrics.RocCurve`."""
    margin = 48
    plot = size - 2 * margin
    width = size + 170

    def px(fpr: float, tpr: float) -> tuple[float, float]:
        return margin + fpr * plot, margin + (1.0 - tpr) * plot

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{size}" viewBox="0 0 {width} {size}">',
        f"<!-- config_hash={escape(config_hash)} -->",
        f'<rect x="0" y="0" width="{width}" height="{size}" fill="white"/>',
        f'<text x="{size / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">'
        f"{escape(title)}</text>",
        f'<rect x="{margin}" y="{margin}" width="{plot}" height="{plot}" fill="none" stroke="black"/>',
    ]
    for k in range(6):
        v = k / 5
        x, y = px(v, v)
        parts.append(f'<line x1="{x:.1f}" y1="{margin + plot}" x2="{x:.1f}" y2="{margin + plot + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{margin + plot + 16}" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{v:.1f}</text>')
        parts.append(f'<line x1="{margin - 4}" y1="{y:.1f}" x2="{margin}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{margin - 7}" y="{y + 3:.1f}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{v:.1f}</text>')
    parts.append(f'<text x="{margin + plot / 2:.1f}" y="{size - 8}" text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">false positive rate</text>')
    parts.append(f'<text x="14" y="{margin + plot / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12" transform="rotate(-90 14 {margin + plot / 2:.1f})">true positive rate</text>')
    x0, y0 = px(0, 0)
    x1, y1 = px(1, 1)
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#999" stroke-dasharray="4 3"/>')

    for i, (label, roc) in enumerate(curves.items()):
        color = COLORS[i % len(COLORS)]
        pts = " ".join("{:.2f},{:.2f}".format(*px(f, t)) for f, t in zip(roc.fpr, roc.tpr))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        ly = margin + 14 + 18 * i
        parts.append(f'<line x1="{size - 10}" y1="{ly - 4}" x2="{size + 10}" y2="{ly - 4}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{size + 14}" y="{ly}" font-family="sans-serif" font-size="11">'
                     f"{escape(label)} ({roc.area():.3f})</text>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
