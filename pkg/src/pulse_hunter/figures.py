"""Static SVG pictures written by hand; no plotting library involved."""
from __future__ import annotations

import warnings
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


class Plot:
    """Minimal linear-axes SVG canvas."""

    def __init__(self, xlim, ylim, width=640, height=420, title="", xlabel="", ylabel=""):
        self.x0, self.x1 = map(float, xlim)
        self.y0, self.y1 = map(float, ylim)
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError("empty axis range")
        self.w, self.h = width, height
        self.m = (60, 20, 30, 45)  # left, right, top, bottom
        self.items: list[str] = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel

    def _px(self, x, y):
        l, r, t, b = self.m
        X = l + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * (self.w - l - r)
        Y = self.h - b - (np.asarray(y, float) - self.y0) / (self.y1 - self.y0) * (self.h - t - b)
        return X, Y

    def polyline(self, x, y, color=COLORS[0], width=1.5, label=None, dash=None, cls="curve"):
        X, Y = self._px(x, y)
        ok = np.isfinite(X) & np.isfinite(Y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X[ok], Y[ok]))
        d = f' stroke-dasharray="{dash}"' if dash else ""
        lab = f' data-label="{escape(label)}"' if label else ""
        self.items.append(f'<polyline class="{cls}"{lab} points="{pts}" fill="none" '
                          f'stroke="{color}" stroke-width="{width}"{d}/>')

    def marker(self, x, y, label=None, color="#000", r=3.5):
        X, Y = self._px(x, y)
        lab = f' data-label="{escape(label)}"' if label else ""
        self.items.append(f'<circle class="marker"{lab} cx="{float(X):.2f}" cy="{float(Y):.2f}" '
                          f'r="{r}" fill="{color}"/>')
        if label:
            self.items.append(f'<text x="{float(X) + 5:.2f}" y="{float(Y) - 5:.2f}" '
                              f'font-size="11">{escape(label)}</text>')

    def hline(self, y, **kw):
        self.polyline([self.x0, self.x1], [y, y], **kw)

    def _ticks(self, a, b, n=5):
        return np.linspace(a, b, n + 1)

    def svg(self) -> str:
        l, r, t, b = self.m
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
               f'viewBox="0 0 {self.w} {self.h}">',
               f'<rect width="{self.w}" height="{self.h}" fill="white"/>',
               f'<rect x="{l}" y="{t}" width="{self.w - l - r}" height="{self.h - t - b}" '
               f'fill="none" stroke="#444"/>']
        for v in self._ticks(self.x0, self.x1):
            X, _ = self._px(v, self.y0)
            out.append(f'<text x="{float(X):.2f}" y="{self.h - b + 15}" font-size="10" '
                       f'text-anchor="middle">{v:.3g}</text>')
        for v in self._ticks(self.y0, self.y1):
            _, Y = self._px(self.x0, v)
            out.append(f'<text x="{l - 5}" y="{float(Y) + 3:.2f}" font-size="10" '
                       f'text-anchor="end">{v:.3g}</text>')
        out.append(f'<clipPath id="plotarea"><rect x="{l}" y="{t}" width="{self.w - l - r}" '
                   f'height="{self.h - t - b}"/></clipPath>')
        out.append('<g clip-path="url(#plotarea)">')
        out.extend(self.items)
        out.append("</g>")
        if self.title:
            out.append(f'<text x="{self.w / 2}" y="18" font-size="13" text-anchor="middle">'
                       f'{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{self.w / 2}" y="{self.h - 8}" font-size="12" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="14" y="{self.h / 2}" font-size="12" text-anchor="middle" '
                       f'transform="rotate(-90 14 {self.h / 2})">{escape(self.ylabel)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _pad(lo, hi, f=0.05):
    d = (hi - lo) or 1.0
    return lo - f * d, hi + f * d


def landscape_svg(landscape, S, beta: float) -> str:
    """h(u) = u/S(u), the recovery nullcline 1/(1 + beta S(u)) and q = q0,
    with the three roots of h(u) = q0 marked."""
    L = landscape
    u = np.linspace(max(L.u0 * 0.2, 1e-4), 1.1, 600)
    h = u / S.value(u)
    rec = 1.0 / (1.0 + beta * S.value(u))
    p = Plot((0, 1.1), (0, 1.4), title="nullclines", xlabel="u", ylabel="q")
    p.polyline(u, h, COLORS[0], label="h(u)")
    p.polyline(u, rec, COLORS[1], label="1/(1+beta S(u))")
    p.hline(L.q0, color=COLORS[2], label="q = q0", dash="4,3")
    for name, x in (("u0", L.u0), ("um", L.um), ("u+", L.uplus)):
        p.marker(x, L.q0, label=name)
    return p.svg()


def shot_uq_svg(u, q, markers: dict, title="shot in the (u, q) plane") -> str:
    """(u, q) projection of a shot with named event markers {name: (u, q)}."""
    u, q = np.asarray(u), np.asarray(q)
    p = Plot(_pad(u.min(), u.max()), _pad(q.min(), q.max()), title=title, xlabel="u", ylabel="q")
    p.polyline(u, q, COLORS[0], label="trajectory")
    for k, (a, b) in markers.items():
        p.marker(a, b, label=k, color=COLORS[1])
    return p.svg()


def singular_svg(pieces, landscape=None, S=None) -> str:
    """The four-piece skeleton in the (u, q) plane, over the nullcline."""
    allp = np.vstack(pieces)
    p = Plot(_pad(allp[:, 0].min(), allp[:, 0].max()), _pad(allp[:, 1].min(), allp[:, 1].max()),
             title="singular solution", xlabel="u", ylabel="q")
    if S is not None:
        uu = np.linspace(max(allp[:, 0].min(), 1e-4), allp[:, 0].max(), 400)
        p.polyline(uu, uu / S.value(uu), "#bbbbbb", width=1, label="q = h(u)", cls="nullcline")
    names = ("front", "right branch", "back", "left branch")
    for i, pc in enumerate(pieces):
        p.polyline(pc[:, 0], pc[:, 1], COLORS[i % len(COLORS)], width=2, label=names[i % 4],
                   cls="piece")
    return p.svg()


def speed_curve_svg(q, c, directions, c0_star=None) -> str:
    """c(q) with backs drawn as negative speeds so the Maxwell point is the zero."""
    q = np.asarray(q)
    c = np.asarray(c)
    sgn = np.array([-1.0 if d == "back" else 1.0 for d in directions])
    sc = sgn * c
    p = Plot(_pad(q.min(), q.max()), _pad(sc.min(), max(sc.max(), c0_star or sc.max())),
             title="signed speed of fast connections", xlabel="q", ylabel="c (backs < 0)")
    p.hline(0.0, color="#999", width=1)
    p.polyline(q, sc, COLORS[0], label="c(q)")
    if c0_star is not None:
        p.hline(c0_star, color=COLORS[1], dash="4,3", label="c0*")
        p.hline(-c0_star, color=COLORS[1], dash="4,3", label="-c0*")
    return p.svg()


def write_svg(path, text: str | None) -> Path | None:
    if text is None:
        warnings.warn(f"figure {path} skipped: missing artifact")
        return None
    path = Path(path)
    path.write_text(text)
    return path


_FIGURES = {
    "landscape": ("landscape.svg", lambda a: landscape_svg(a["landscape"], a["S"], a["beta"])),
    "shot": ("shot_uq.svg", lambda a: shot_uq_svg(a["u"], a["q"], a.get("markers", {}),
                                                  a.get("title", "shot in the (u, q) plane"))),
    "singular": ("singular.svg", lambda a: singular_svg(a["pieces"], None, a.get("S"))),
    "curve": ("speed_curve.svg", lambda a: speed_curve_svg(a["q"], a["c"], a["directions"],
                                                           a.get("c0_star"))),
}


def emit_figures(artifacts: dict, out_dir, wanted=tuple(_FIGURES)) -> list[Path]:
    """Render every figure in ``wanted`` whose artifact is present; missing
    artifacts are skipped with a warning."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for key in wanted:
        name, render = _FIGURES[key]
        a = artifacts.get(key)
        p = write_svg(out_dir / name, None if a is None else render(a))
        if p is not None:
            written.append(p)
    return written
