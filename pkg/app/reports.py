"""
Artifact writers for the CLI: CSV tables, JSON documents, SVG charts and
the HTML bundle assembled by the report subcommand
"""

import html
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
SVG_WIDTH = 640
SVG_HEIGHT = 420
MARGIN = 60
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """CSV with a header row and a fixed float format so reruns are byte-identical"""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_json(document: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = document.model_dump(mode="json") if isinstance(document, BaseModel) else document
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, default=str)
    logger.info(f"Wrote {path}")
    return path


def _positive(xs: Sequence[float], ys: Sequence[float]) -> List[Tuple[float, float]]:
    return [(float(x), float(y)) for x, y in zip(xs, ys) if x is not None and y is not None and x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y)]


def _log_range(values: List[float]) -> Tuple[float, float]:
    low, high = math.log10(min(values)), math.log10(max(values))
    if high - low < 1e-9:
        low, high = low - 0.5, high + 0.5
    return low, high


def loglog_svg(series: Mapping[str, Tuple[Sequence[float], Sequence[float]]], title: str, xlabel: str, ylabel: str) -> str:
    """Line chart on log-log axes as SVG text; nonpositive points are dropped"""
    points = {name: _positive(xs, ys) for name, (xs, ys) in series.items()}
    points = {name: pts for name, pts in points.items() if pts}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<text x="{SVG_WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{html.escape(title)}</text>',
    ]
    if not points:
        parts.append(f'<text x="{SVG_WIDTH / 2}" y="{SVG_HEIGHT / 2}" text-anchor="middle">no positive data</text></svg>')
        return "\n".join(parts)

    x_lo, x_hi = _log_range([x for pts in points.values() for x, _ in pts])
    y_lo, y_hi = _log_range([y for pts in points.values() for _, y in pts])
    inner_w, inner_h = SVG_WIDTH - 2 * MARGIN, SVG_HEIGHT - 2 * MARGIN

    def px(x: float) -> float:
        return MARGIN + (math.log10(x) - x_lo) / (x_hi - x_lo) * inner_w

    def py(y: float) -> float:
        return SVG_HEIGHT - MARGIN - (math.log10(y) - y_lo) / (y_hi - y_lo) * inner_h

    parts.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{inner_w}" height="{inner_h}" fill="none" stroke="#444"/>')
    for decade in range(math.ceil(x_lo), math.floor(x_hi) + 1):
        x = MARGIN + (decade - x_lo) / (x_hi - x_lo) * inner_w
        parts.append(f'<line x1="{x:.1f}" y1="{SVG_HEIGHT - MARGIN}" x2="{x:.1f}" y2="{SVG_HEIGHT - MARGIN + 5}" stroke="#444"/>')
        parts.append(f'<text x="{x:.1f}" y="{SVG_HEIGHT - MARGIN + 18}" text-anchor="middle">1e{decade}</text>')
    for decade in range(math.ceil(y_lo), math.floor(y_hi) + 1):
        y = SVG_HEIGHT - MARGIN - (decade - y_lo) / (y_hi - y_lo) * inner_h
        parts.append(f'<line x1="{MARGIN - 5}" y1="{y:.1f}" x2="{MARGIN}" y2="{y:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{MARGIN - 8}" y="{y + 4:.1f}" text-anchor="end">1e{decade}</text>')
    parts.append(f'<text x="{SVG_WIDTH / 2}" y="{SVG_HEIGHT - 15}" text-anchor="middle">{html.escape(xlabel)}</text>')
    parts.append(f'<text x="15" y="{SVG_HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 15 {SVG_HEIGHT / 2})">{html.escape(ylabel)}</text>')

    for k, (name, pts) in enumerate(sorted(points.items())):
        colour = PALETTE[k % len(PALETTE)]
        path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in sorted(pts))
        parts.append(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        parts.append(f'<text x="{SVG_WIDTH - MARGIN - 5}" y="{MARGIN + 15 + 15 * k}" text-anchor="end" fill="{colour}">{html.escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def write_svg(series: Mapping[str, Tuple[Sequence[float], Sequence[float]]], path: Path, title: str, xlabel: str, ylabel: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(loglog_svg(series, title, xlabel, ylabel))
    logger.info(f"Wrote chart {path}")
    return path


def frame_series(frame: pd.DataFrame, x: str, columns: Sequence[str]) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    return {c: (frame[x].to_numpy(dtype=float), frame[c].to_numpy(dtype=float)) for c in columns if c in frame}


def collect_artifacts(directory: Path) -> Dict[str, Any]:
    """JSON documents, CSV tables and SVG charts found under a run directory"""
    bundle: Dict[str, Any] = {"json": {}, "csv": {}, "svg": {}}
    for path in sorted(directory.rglob("*")):
        if not path.is_file() or path.stem == "report":
            continue
        key = str(path.relative_to(directory))
        if path.suffix == ".json":
            with open(path) as f:
                bundle["json"][key] = json.load(f)
        elif path.suffix == ".csv":
            bundle["csv"][key] = pd.read_csv(path)
        elif path.suffix == ".svg":
            bundle["svg"][key] = path.read_text()
    return bundle


def render_html(bundle: Dict[str, Any], title: str = "speedchange report", max_rows: Optional[int] = 50) -> str:
    sections = [f"<!DOCTYPE html><html><head><meta charset='utf-8'><title>{html.escape(title)}</title></head><body>", f"<h1>{html.escape(title)}</h1>"]
    for name, document in bundle["json"].items():
        sections.append(f"<h2>{html.escape(name)}</h2><pre>{html.escape(json.dumps(document, indent=2, default=str))}</pre>")
    for name, frame in bundle["csv"].items():
        shown = frame if max_rows is None else frame.head(max_rows)
        sections.append(f"<h2>{html.escape(name)}</h2>")
        sections.append(shown.to_html(index=False, float_format=lambda v: f"{v:.6g}"))
        if max_rows is not None and len(frame) > max_rows:
            sections.append(f"<p>{len(frame) - max_rows} further rows in {html.escape(name)}</p>")
    for name, svg in bundle["svg"].items():
        sections.append(f"<h2>{html.escape(name)}</h2>{svg}")
    sections.append("</body></html>")
    return "\n".join(sections)


def write_bundle(directory: Path, output_dir: Path) -> List[Path]:
    """report.json and report.html combining every artifact under directory"""
    bundle = collect_artifacts(directory)
    combined = {
        "documents": bundle["json"],
        "tables": {name: frame.to_dict(orient="list") for name, frame in bundle["csv"].items()},
        "charts": sorted(bundle["svg"]),
    }
    json_path = write_json(combined, output_dir / "report.json")
    html_path = output_dir / "report.html"
    html_path.write_text(render_html(bundle))
    logger.info(f"Report bundle written to {html_path}")
    return [json_path, html_path]
