"""Static SVG rendering of QQ plots and histograms.

Output is plain SVG 1.1 built from strings, so identical documents give
identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 20, 36, 52
DEFAULT_BINS = 20


@dataclass(frozen=True)
class PlotDocument:
    """Data and labels for one plot.

    For ``kind="qq"`` ``x`` holds theoretical and ``y`` empirical
    quantiles. For ``kind="histogram"`` ``x`` holds the raw values and
    ``bins`` the number of equal-width bins over ``value_range``.
    """

    kind: str
    x: np.ndarray
    y: np.ndarray | None = None
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    identity_line: bool = False
    bins: int = DEFAULT_BINS
    value_range: tuple[float, float] = (0.0, 1.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("qq", "histogram"):
            raise ValueError(f"unknown plot kind {self.kind!r}")
        x = np.asarray(self.x, dtype=float)
        if x.size == 0:
            raise ValueError("plot data must be nonempty")
        if not np.all(np.isfinite(x)):
            raise ValueError("plot coordinates must be finite")
        object.__setattr__(self, "x", x)
        if self.kind == "qq":
            y = np.asarray(self.y, dtype=float)
            if y.shape != x.shape:
                raise ValueError("qq plot needs x and y of equal length")
            if not np.all(np.isfinite(y)):
                raise ValueError("plot coordinates must be finite")
            object.__setattr__(self, "y", y)
        elif self.bins < 1:
            raise ValueError("histogram needs at least one bin")


def qq_document(pairs: np.ndarray, **kw) -> PlotDocument:
    pairs = np.asarray(pairs, dtype=float)
    return PlotDocument("qq", pairs[:, 0], pairs[:, 1], **kw)


def histogram_counts(values, bins: int = DEFAULT_BINS, value_range=(0.0, 1.0)) -> np.ndarray:
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=bins, range=value_range)
    return counts


def _n(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    return np.linspace(lo, hi, n)


def _padded(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        return lo - 0.5, hi + 0.5
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def render_svg(doc: PlotDocument) -> str:
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B
    parts = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if doc.kind == "qq":
        lo = float(min(doc.x.min(), doc.y.min()))
        hi = float(max(doc.x.max(), doc.y.max()))
        xlo, xhi = _padded(lo, hi)
        ylo, yhi = xlo, xhi
    else:
        counts = histogram_counts(doc.x, doc.bins, doc.value_range)
        xlo, xhi = doc.value_range
        ylo, yhi = 0.0, float(counts.max()) * 1.05 or 1.0

    def sx(v):
        return MARGIN_L + (v - xlo) / (xhi - xlo) * pw

    def sy(v):
        return MARGIN_T + ph - (v - ylo) / (yhi - ylo) * ph

    # axes and ticks
    x0, y0 = MARGIN_L, MARGIN_T + ph
    parts.append(
        f'<path d="M{_n(x0)},{_n(MARGIN_T)} L{_n(x0)},{_n(y0)} L{_n(x0 + pw)},{_n(y0)}" '
        'stroke="black" fill="none" stroke-width="1"/>'
    )
    for t in _ticks(xlo, xhi):
        parts.append(f'<line x1="{_n(sx(t))}" y1="{_n(y0)}" x2="{_n(sx(t))}" y2="{_n(y0 + 5)}" stroke="black"/>')
        parts.append(
            f'<text x="{_n(sx(t))}" y="{_n(y0 + 18)}" font-size="11" text-anchor="middle" '
            f'font-family="sans-serif">{t:.3g}</text>'
        )
    for t in _ticks(ylo, yhi):
        parts.append(f'<line x1="{_n(x0 - 5)}" y1="{_n(sy(t))}" x2="{_n(x0)}" y2="{_n(sy(t))}" stroke="black"/>')
        parts.append(
            f'<text x="{_n(x0 - 8)}" y="{_n(sy(t) + 4)}" font-size="11" text-anchor="end" '
            f'font-family="sans-serif">{t:.3g}</text>'
        )

    if doc.kind == "qq":
        if doc.identity_line:
            parts.append(
                f'<line x1="{_n(sx(xlo))}" y1="{_n(sy(xlo))}" x2="{_n(sx(xhi))}" y2="{_n(sy(xhi))}" '
                'stroke="grey" stroke-dasharray="4,3" stroke-width="1"/>'
            )
        r = 2.5 if doc.x.size <= 2000 else 1.0
        pts = "".join(
            f'<circle cx="{_n(sx(a))}" cy="{_n(sy(b))}" r="{r}"/>' for a, b in zip(doc.x, doc.y)
        )
        parts.append(f'<g fill="#1f4e79" stroke="none">{pts}</g>')
    else:
        edges = np.linspace(xlo, xhi, doc.bins + 1)
        bars = "".join(
            f'<rect x="{_n(sx(edges[i]))}" y="{_n(sy(c))}" width="{_n(sx(edges[i + 1]) - sx(edges[i]))}" '
            f'height="{_n(sy(0.0) - sy(c))}"/>'
            for i, c in enumerate(counts)
        )
        parts.append(f'<g fill="#9db9d5" stroke="#1f4e79" stroke-width="0.5">{bars}</g>')

    for text, x, y, extra in (
        (doc.title, WIDTH / 2, 22, 'font-size="14"'),
        (doc.xlabel, MARGIN_L + pw / 2, HEIGHT - 12, 'font-size="12"'),
    ):
        if text:
            parts.append(
                f'<text x="{_n(x)}" y="{_n(y)}" {extra} text-anchor="middle" '
                f'font-family="sans-serif">{escape(text)}</text>'
            )
    if doc.ylabel:
        parts.append(
            f'<text x="16" y="{_n(MARGIN_T + ph / 2)}" font-size="12" text-anchor="middle" '
            f'font-family="sans-serif" transform="rotate(-90 16 {_n(MARGIN_T + ph / 2)})">'
            f"{escape(doc.ylabel)}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_plot(doc: PlotDocument, path) -> Path:
    """Write ``doc`` as an SVG file and return the path."""
    path = Path(path)
    svg = render_svg(doc)
    try:
        path.write_text(svg, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc}") from exc
    return path
