"""
SVG Plot Module for the DSE Toolkit

Static figures of a comparison run, written as plain SVG: per state, the
truth against each filter's estimate over time, and the per-tick squared
error of each filter on a log axis.
"""

import logging
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from genmodel import STATE_NAMES
from harness import FilterRun, LengthMismatch
from scenario import PathLike, TruthTrajectory
from ukf import BeliefState

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
WIDTH, HEIGHT = 720, 360
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 20, 36, 48
AXIS_PAD = 0.05
LOG_FLOOR = 1e-20
N_TICKS = 5

STATE_LABELS = {
    "delta": "rotor angle δ (rad)",
    "domega": "speed deviation Δω (pu)",
    "eq_p": "q-axis transient emf e'q (pu)",
    "ed_p": "d-axis transient emf e'd (pu)",
}

COLORS = {
    "truth": "#000000",
    "ukf": "#1f77b4",
    "enkf": "#d62728",
}
FALLBACK_COLORS = ["#2ca02c", "#9467bd", "#8c564b", "#e377c2"]

Estimates = Union[FilterRun, Sequence[BeliefState]]


def axis_range(values: NDArray[np.float64], log: bool = False) -> Tuple[float, float]:
    """
    Data min/max widened by 5% of the span on each side.

    On a log axis the padding is applied to log10 of the data. A constant
    series gets a span of 5% of its magnitude (or 0.05 around zero).
    """
    finite = values[np.isfinite(values)]
    if log:
        finite = np.log10(np.maximum(finite, LOG_FLOOR))
    if finite.size == 0:
        return (0.0, 1.0)
    lo, hi = float(finite.min()), float(finite.max())
    span = hi - lo
    pad = AXIS_PAD * span if span > 0 else AXIS_PAD * max(abs(lo), 1.0)
    return lo - pad, hi + pad


class _Frame:
    """Maps data coordinates into the plotting rectangle."""

    def __init__(self, x_range: Tuple[float, float], y_range: Tuple[float, float], log_y: bool):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.log_y = log_y
        self.left = MARGIN_LEFT
        self.right = WIDTH - MARGIN_RIGHT
        self.top = MARGIN_TOP
        self.bottom = HEIGHT - MARGIN_BOTTOM

    def px(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        span = (self.x1 - self.x0) or 1.0
        return self.left + (x - self.x0) / span * (self.right - self.left)

    def py(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        if self.log_y:
            y = np.log10(np.maximum(y, LOG_FLOOR))
        span = (self.y1 - self.y0) or 1.0
        return self.bottom - (y - self.y0) / span * (self.bottom - self.top)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float, log: bool) -> str:
    if log:
        return f"1e{v:.1f}"
    return f"{v:.4g}"


def _new_svg(title: str) -> ET.Element:
    svg = ET.Element("svg", {
        "xmlns": SVG_NS,
        "width": str(WIDTH),
        "height": str(HEIGHT),
        "viewBox": f"0 0 {WIDTH} {HEIGHT}",
        "font-family": "sans-serif",
        "font-size": "11",
    })
    ET.SubElement(svg, "rect", {"width": str(WIDTH), "height": str(HEIGHT), "fill": "white"})
    heading = ET.SubElement(svg, "text", {"x": str(WIDTH / 2), "y": "20", "text-anchor": "middle", "font-size": "14"})
    heading.text = title
    return svg


def _draw_axes(svg: ET.Element, frame: _Frame, x_label: str, y_label: str) -> None:
    g = ET.SubElement(svg, "g", {"class": "axes", "stroke": "#444", "fill": "none"})
    ET.SubElement(g, "rect", {
        "x": _fmt(frame.left), "y": _fmt(frame.top),
        "width": _fmt(frame.right - frame.left), "height": _fmt(frame.bottom - frame.top),
    })
    labels = ET.SubElement(svg, "g", {"class": "ticks", "fill": "#222"})
    for i in range(N_TICKS + 1):
        fx = frame.x0 + (frame.x1 - frame.x0) * i / N_TICKS
        px = frame.left + (frame.right - frame.left) * i / N_TICKS
        t = ET.SubElement(labels, "text", {"x": _fmt(px), "y": _fmt(frame.bottom + 16), "text-anchor": "middle"})
        t.text = f"{fx:.3g}"
        fy = frame.y0 + (frame.y1 - frame.y0) * i / N_TICKS
        py = frame.bottom - (frame.bottom - frame.top) * i / N_TICKS
        t = ET.SubElement(labels, "text", {"x": _fmt(frame.left - 6), "y": _fmt(py + 4), "text-anchor": "end"})
        t.text = _tick_label(fy, frame.log_y)
    xl = ET.SubElement(svg, "text", {"x": _fmt((frame.left + frame.right) / 2), "y": str(HEIGHT - 10), "text-anchor": "middle"})
    xl.text = x_label
    cy = (frame.top + frame.bottom) / 2
    yl = ET.SubElement(svg, "text", {"x": "14", "y": _fmt(cy), "text-anchor": "middle",
                                     "transform": f"rotate(-90 14 {_fmt(cy)})"})
    yl.text = y_label


def _polyline(svg: ET.Element, frame: _Frame, x: NDArray[np.float64], y: NDArray[np.float64],
              name: str, color: str, dashed: bool = False) -> None:
    keep = np.isfinite(y)
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(frame.px(x[keep]), frame.py(y[keep])))
    attrs = {"points": pts, "fill": "none", "stroke": color, "stroke-width": "1.2", "data-series": name}
    if dashed:
        attrs["stroke-dasharray"] = "5,3"
    ET.SubElement(svg, "polyline", attrs)


def _legend(svg: ET.Element, names: Sequence[str], colors: Mapping[str, str]) -> None:
    g = ET.SubElement(svg, "g", {"class": "legend"})
    for i, name in enumerate(names):
        y = MARGIN_TOP + 14 + 14 * i
        x = WIDTH - MARGIN_RIGHT - 90
        ET.SubElement(g, "line", {"x1": str(x), "y1": str(y - 4), "x2": str(x + 18), "y2": str(y - 4),
                                  "stroke": colors[name], "stroke-width": "2"})
        t = ET.SubElement(g, "text", {"x": str(x + 24), "y": str(y)})
        t.text = name.upper() if name != "truth" else "truth"


def _write_svg(svg: ET.Element, path: Path) -> None:
    tree = ET.ElementTree(svg)
    ET.indent(tree)
    tree.write(path, encoding="utf-8", xml_declaration=True)
    logger.info(f"Wrote {path}")


def _series_colors(names: Sequence[str]) -> Dict[str, str]:
    colors = {}
    spare = iter(FALLBACK_COLORS)
    for name in names:
        colors[name] = COLORS.get(name) or next(spare, "#7f7f7f")
    return colors


def _means(est: Estimates) -> NDArray[np.float64]:
    if isinstance(est, FilterRun):
        return est.means()
    return np.array([b.mean for b in est]).reshape(-1, 4)


def track_svg(times: NDArray[np.float64], truth: NDArray[np.float64],
              estimates: Mapping[str, NDArray[np.float64]], state: str) -> ET.Element:
    """Truth and estimates of one state against time."""
    stacked = np.concatenate([truth] + list(estimates.values()))
    frame = _Frame(axis_range(times), axis_range(stacked), log_y=False)
    svg = _new_svg(f"Estimate of {STATE_LABELS.get(state, state)}")
    _draw_axes(svg, frame, "t (s)", STATE_LABELS.get(state, state))
    colors = _series_colors(["truth"] + list(estimates))
    _polyline(svg, frame, times, truth, "truth", colors["truth"])
    for name, values in estimates.items():
        _polyline(svg, frame, times, values, name, colors[name], dashed=True)
    _legend(svg, ["truth"] + list(estimates), colors)
    return svg


def error_svg(times: NDArray[np.float64], errors: Mapping[str, NDArray[np.float64]], state: str) -> ET.Element:
    """Per-tick squared error of one state, log-scaled."""
    stacked = np.concatenate(list(errors.values())) if errors else np.array([])
    frame = _Frame(axis_range(times), axis_range(stacked, log=True), log_y=True)
    svg = _new_svg(f"Squared error of {STATE_LABELS.get(state, state)}")
    _draw_axes(svg, frame, "t (s)", "squared error")
    colors = _series_colors(list(errors))
    for name, values in errors.items():
        _polyline(svg, frame, times, values, name, colors[name])
    _legend(svg, list(errors), colors)
    return svg


def emit_plots(
    truth: TruthTrajectory,
    estimates_per_filter: Mapping[str, Estimates],
    path: PathLike,
) -> List[Path]:
    """
    Write ``track_<state>.svg`` and ``sqerr_<state>.svg`` for each state.

    Raises:
        FileNotFoundError: if the directory is missing.
        LengthMismatch: if an estimate series is not aligned with the truth.
    """
    out = Path(path)
    if not out.is_dir():
        raise FileNotFoundError(f"Output directory does not exist: {out}")
    means = {name: _means(est) for name, est in estimates_per_filter.items()}
    for name, m in means.items():
        if len(m) != len(truth):
            raise LengthMismatch(f"{name}: {len(m)} estimates for {len(truth)} truth ticks")

    files = []
    for i, state in enumerate(STATE_NAMES):
        truth_i = truth.states[:, i]
        est_i = {name: m[:, i] for name, m in means.items()}
        err_i = {name: (values - truth_i) ** 2 for name, values in est_i.items()}

        track = out / f"track_{state}.svg"
        _write_svg(track_svg(truth.times, truth_i, est_i, state), track)
        sqerr = out / f"sqerr_{state}.svg"
        _write_svg(error_svg(truth.times, err_i, state), sqerr)
        files.extend([track, sqerr])
    return files
