"""Static, self-contained SVG figures (no scripts, no external assets)."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from .cpd import ChangePointSet, StatSeries

__all__ = ["plot_null_svg", "plot_svg"]

WIDTH, HEIGHT, PAD = 800, 300, 40
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


class _Canvas:
    """Maps data coordinates to an SVG viewport with fixed padding."""

    def __init__(self, xlim, ylim, title: str = ""):
        self.x0, self.x1 = _span(*xlim)
        self.y0, self.y1 = _span(*ylim)
        self.root = ET.Element(
            "svg",
            xmlns="http://www.w3.org/2000/svg",
            width=str(WIDTH),
            height=str(HEIGHT),
            viewBox=f"0 0 {WIDTH} {HEIGHT}",
        )
        ET.SubElement(self.root, "rect", width="100%", height="100%", fill="white")
        ET.SubElement(
            self.root, "rect", x=str(PAD), y=str(PAD), width=str(WIDTH - 2 * PAD),
            height=str(HEIGHT - 2 * PAD), fill="none", stroke="#888",
        )
        if title:
            t = ET.SubElement(self.root, "text", x=str(PAD), y=str(PAD - 12), attrib={"font-size": "14"})
            t.text = title

    def px(self, x):
        return PAD + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * PAD)

    def py(self, y):
        return HEIGHT - PAD - (np.asarray(y, float) - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * PAD)

    def polyline(self, x, y, color, cls, **attrs):
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(self.px(x), self.py(y)))
        return ET.SubElement(
            self.root, "polyline", points=pts, fill="none", stroke=color,
            attrib={"class": cls, "stroke-width": "1.2", **attrs},
        )

    def label(self, x, y, text, color="black"):
        t = ET.SubElement(self.root, "text", x=f"{x:.1f}", y=f"{y:.1f}", fill=color, attrib={"font-size": "11"})
        t.text = text

    def save(self, path) -> None:
        ET.ElementTree(self.root).write(path, encoding="utf-8", xml_declaration=True)


def _span(lo, hi):
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        return lo - 0.5, lo + 0.5
    return lo, hi


def plot_svg(z, cps: ChangePointSet | None, truth, eta: float, path, title: str = "") -> None:
    """Statistic trace with threshold, detected change points, and true labels.

    Elements carry classes ``stat``, ``eta``, ``pred`` (one circle per
    detection) and ``truth`` (one dashed vertical line per label).
    """
    if isinstance(z, StatSeries):
        t, z = np.asarray(z.t), np.asarray(z.z, float)
    else:
        z = np.asarray(z, float)
        t = np.arange(len(z))
    truth = np.asarray(truth, dtype=int).ravel()
    preds = np.asarray([] if cps is None else cps.indices, dtype=int)
    xs = np.concatenate([t, truth]) if len(t) or len(truth) else np.array([0.0])
    finite_eta = [eta] if np.isfinite(eta) else []
    ys = np.concatenate([z, finite_eta, [0.0]])
    cv = _Canvas((xs.min(), xs.max()), (ys.min(), ys.max() * 1.05 if ys.max() > 0 else 1.0), title)

    for tau in truth:
        ET.SubElement(
            cv.root, "line", x1=f"{cv.px(tau):.2f}", x2=f"{cv.px(tau):.2f}", y1=str(PAD),
            y2=str(HEIGHT - PAD), stroke="#9467bd",
            attrib={"class": "truth", "stroke-dasharray": "4 3"},
        )
    if len(t):
        cv.polyline(t, z, "#1f77b4", "stat")
    if np.isfinite(eta):
        y = f"{cv.py(eta):.2f}"
        ET.SubElement(
            cv.root, "line", x1=str(PAD), x2=str(WIDTH - PAD), y1=y, y2=y, stroke="#2ca02c",
            attrib={"class": "eta", "stroke-dasharray": "6 4"},
        )
    z_at = dict(zip(t.tolist(), z.tolist()))
    for p in preds:
        ET.SubElement(
            cv.root, "circle", cx=f"{cv.px(p):.2f}", cy=f"{cv.py(z_at.get(int(p), 0.0)):.2f}",
            r="3.5", fill="red", attrib={"class": "pred"},
        )
    cv.save(path)


def plot_null_svg(samples: dict, path, bins: int = 40, title: str = "") -> None:
    """Overlaid normalized histograms and Gaussian KDE curves of null samples.

    ``samples`` maps a setting name to a 1-d array of statistic values.
    """
    from scipy.stats import gaussian_kde

    arrays = {k: np.asarray(v, float).ravel() for k, v in samples.items()}
    allv = np.concatenate(list(arrays.values())) if arrays else np.array([0.0])
    lo, hi = _span(allv.min(), allv.max())
    edges = np.linspace(lo, hi, bins + 1)
    grid = np.linspace(lo, hi, 200)
    curves = {}
    for name, v in arrays.items():
        hist, _ = np.histogram(v, edges, density=True)
        kde = None
        if len(v) > 1 and np.ptp(v) > 0:
            kde = gaussian_kde(v)(grid)
        curves[name] = (hist, kde)
    top = max([1e-12] + [max(h.max(), 0 if k is None else k.max()) for h, k in curves.values()])
    cv = _Canvas((lo, hi), (0.0, top * 1.05), title)

    for idx, (name, (hist, kde)) in enumerate(curves.items()):
        color = PALETTE[idx % len(PALETTE)]
        w = cv.px(edges[1:]) - cv.px(edges[:-1])
        for left, width, h in zip(cv.px(edges[:-1]), w, hist):
            ET.SubElement(
                cv.root, "rect", x=f"{left:.2f}", y=f"{cv.py(h):.2f}", width=f"{width:.2f}",
                height=f"{cv.py(0) - cv.py(h):.2f}", fill=color,
                attrib={"class": "hist", "fill-opacity": "0.25"},
            )
        if kde is not None:
            cv.polyline(grid, kde, color, "kde")
        cv.label(WIDTH - PAD - 150, PAD + 16 * (idx + 1), name, color)
    cv.save(path)
