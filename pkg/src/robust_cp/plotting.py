"""Standalone SVG boxplots of FMS per (eta, gamma) cell and method."""

import math
from collections import defaultdict
from xml.sax.saxutils import quoteattr

import numpy as np

METHOD_COLORS = {"cpal1": "#4C72B0", "cpals": "#DD8452"}


def box_stats(values):
    """Quartiles, whiskers at the last points within 1.5 IQR, and outliers."""
    v = np.sort(np.asarray([x for x in values if not math.isnan(x)], dtype=float))
    if v.size == 0:
        return None
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    return {
        "q1": float(q1), "median": float(med), "q3": float(q3),
        "lo": float(inside.min()), "hi": float(inside.max()),
        "outliers": [float(x) for x in v if x < inside.min() or x > inside.max()],
    }


def group_fms(records):
    groups = defaultdict(list)
    for r in records:
        groups[(r.eta, r.gamma, r.method)].append(r.fms)
    return groups


def boxplot_svg(records, width=None, height=360) -> str:
    groups = group_fms(records)
    cells = sorted({(e, g) for e, g, _ in groups})
    methods = sorted({m for _, _, m in groups})
    left, right, top, bottom = 60, 20, 30, 60
    box_w, gap = 22, 30
    cell_w = len(methods) * (box_w + 6) + gap
    if width is None:
        width = left + right + max(1, len(cells)) * cell_w
    plot_h = height - top - bottom

    def ypos(v):
        return top + (1.0 - min(max(v, 0.0), 1.0)) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
    ]
    for tick in np.linspace(0, 1, 6):
        y = ypos(tick)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{tick:.1f}</text>')
    out.append(f'<text x="14" y="{top + plot_h / 2}" transform="rotate(-90 14 {top + plot_h / 2})" '
               f'text-anchor="middle">FMS</text>')

    for ci, (eta, gamma) in enumerate(cells):
        x0 = left + gap / 2 + ci * cell_w
        for mi, method in enumerate(methods):
            st = box_stats(groups.get((eta, gamma, method), []))
            if st is None:
                continue
            x = x0 + mi * (box_w + 6)
            cx = x + box_w / 2
            color = METHOD_COLORS.get(method, "#888888")
            attrs = (f'data-eta={quoteattr(repr(eta))} data-gamma={quoteattr(repr(gamma))} '
                     f'data-method={quoteattr(method)}')
            out.append(f'<g class="box" {attrs} data-median="{st["median"]!r}">')
            out.append(f'<line x1="{cx}" y1="{ypos(st["lo"]):.2f}" x2="{cx}" '
                       f'y2="{ypos(st["hi"]):.2f}" stroke="black"/>')
            for w in (st["lo"], st["hi"]):
                out.append(f'<line x1="{x + 5}" y1="{ypos(w):.2f}" x2="{x + box_w - 5}" '
                           f'y2="{ypos(w):.2f}" stroke="black"/>')
            out.append(f'<rect x="{x}" y="{ypos(st["q3"]):.2f}" width="{box_w}" '
                       f'height="{max(ypos(st["q1"]) - ypos(st["q3"]), 0.5):.2f}" '
                       f'fill="{color}" stroke="black"/>')
            out.append(f'<line class="median" x1="{x}" y1="{ypos(st["median"]):.2f}" '
                       f'x2="{x + box_w}" y2="{ypos(st["median"]):.2f}" stroke="black" stroke-width="2"/>')
            for o in st["outliers"]:
                out.append(f'<circle cx="{cx}" cy="{ypos(o):.2f}" r="2" fill="none" stroke="black"/>')
            out.append("</g>")
        label_x = x0 + (len(methods) * (box_w + 6) - 6) / 2
        out.append(f'<text x="{label_x}" y="{top + plot_h + 16}" text-anchor="middle">'
                   f'η={eta:g}</text>')
        out.append(f'<text x="{label_x}" y="{top + plot_h + 30}" text-anchor="middle">'
                   f'γ={gamma:g}</text>')

    for mi, method in enumerate(methods):
        lx = left + 10 + mi * 80
        out.append(f'<rect x="{lx}" y="8" width="10" height="10" '
                   f'fill="{METHOD_COLORS.get(method, "#888888")}"/>')
        out.append(f'<text x="{lx + 14}" y="17">{method.upper()}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
