"""Deterministic artifacts: CSV tables, JSON manifests and plain SVG line plots."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import MissingData

CSV_FORMAT = "%.17g"


def write_csv(path, columns, data) -> Path:
    """Header row plus rows of 17-significant-digit numbers, LF line endings."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[1] != len(columns):
        raise ValueError(f"{len(columns)} column names for {data.shape[1]} columns")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        np.savetxt(fh, data, fmt=CSV_FORMAT, delimiter=",", header=",".join(columns), comments="")
    return path


def read_csv(path):
    """Returns (columns, 2D array)."""
    path = Path(path)
    if not path.exists():
        raise MissingData(f"missing table {path}")
    with open(path) as fh:
        header = fh.readline().strip()
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header.split(","), data


def write_json_atomic(path, obj) -> Path:
    """Write JSON through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)}")


# ---------------------------------------------------------------------------
# SVG

_W, _H, _PAD = 640, 480, 60


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi, n=5):
    step = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(step)) if step > 0 else 1.0
    for m in (1, 2, 5, 10):
        if step <= m * mag:
            step = m * mag
            break
    start = np.ceil(lo / step) * step
    return [start + i * step for i in range(int(np.floor((hi - start) / step + 1e-9)) + 1)]


def svg_lines(series, viewport, xlabel, ylabel, title="", highlight=()) -> str:
    """Render polylines in data coordinates inside a fixed viewport.

    ``series`` is a list of (x, y) arrays; indices in ``highlight`` are drawn
    thicker and in a contrasting colour. Points outside the viewport are
    clipped by the SVG clip path, so the picture depends only on the data.
    """
    if not series:
        raise MissingData("no trajectories to draw")
    x0, x1, y0, y1 = map(float, viewport)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("viewport must be [xmin, xmax, ymin, ymax] with positive extent")
    pw, ph = _W - 2 * _PAD, _H - 2 * _PAD

    def X(x):
        return _PAD + (np.asarray(x) - x0) / (x1 - x0) * pw

    def Y(y):
        return _H - _PAD - (np.asarray(y) - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
           '<defs><clipPath id="plot"><rect x="%d" y="%d" width="%d" height="%d"/></clipPath></defs>'
           % (_PAD, _PAD, pw, ph),
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{_PAD}" y="{_PAD}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(X(t))}" y1="{_H - _PAD}" x2="{_fmt(X(t))}" y2="{_H - _PAD + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(X(t))}" y="{_H - _PAD + 18}" font-size="11" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{_PAD - 5}" y1="{_fmt(Y(t))}" x2="{_PAD}" y2="{_fmt(Y(t))}" stroke="black"/>')
        out.append(f'<text x="{_PAD - 8}" y="{_fmt(Y(t) + 4)}" font-size="11" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{_W / 2:.0f}" y="{_H - 15}" font-size="14" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="18" y="{_H / 2:.0f}" font-size="14" text-anchor="middle" '
               f'transform="rotate(-90 18 {_H / 2:.0f})">{ylabel}</text>')
    if title:
        out.append(f'<text x="{_W / 2:.0f}" y="30" font-size="14" text-anchor="middle">{title}</text>')
    out.append('<g clip-path="url(#plot)" fill="none">')
    hl = set(highlight)
    order = [i for i in range(len(series)) if i not in hl] + [i for i in range(len(series)) if i in hl]
    for i in order:
        x, y = np.asarray(series[i][0], dtype=float), np.asarray(series[i][1], dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        x, y = x[ok], y[ok]
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(X(x), Y(y)))
        style = 'stroke="#c0392b" stroke-width="2.5"' if i in hl else 'stroke="#34495e" stroke-width="1"'
        out.append(f'<polyline id="traj{i}" {style} points="{pts}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def auto_viewport(series, margin=0.05):
    xs = np.concatenate([np.asarray(s[0], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
    if xs.size == 0:
        raise MissingData("no finite points to draw")
    lo = np.array([xs.min(), ys.min()])
    hi = np.array([xs.max(), ys.max()])
    pad = np.maximum(hi - lo, 1e-9) * margin
    return [lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1]]


def emit_figures(run_dir) -> list[Path]:
    """Draw every figure listed in the run manifest from its CSV tables.

    Each figure entry names the tables, the x and y columns (``series_y``
    gives one y column per table when they differ), axis labels, the
    highlighted series and optionally a fixed viewport.
    """
    run_dir = Path(run_dir)
    manifest = run_dir / "manifest.json"
    if not manifest.exists():
        raise MissingData(f"no manifest in {run_dir}")
    info = json.loads(manifest.read_text())
    figures = info.get("figures", [])
    if not figures:
        raise MissingData(f"{run_dir} lists no figures")
    written = []
    for fig in figures:
        series = []
        ys = fig.get("series_y") or [fig["y"]] * len(fig["tables"])
        for table, y in zip(fig["tables"], ys):
            cols, data = read_csv(run_dir / table)
            series.append((data[:, cols.index(fig["x"])], data[:, cols.index(y)]))
        if not series:
            raise MissingData(f"figure {fig['name']} has no trajectories")
        viewport = fig.get("viewport") or auto_viewport(series)
        svg = svg_lines(series, viewport, fig.get("xlabel", fig["x"]), fig.get("ylabel", fig["y"]),
                        fig.get("title", ""), fig.get("highlight", ()))
        path = run_dir / f"{fig['name']}.svg"
        with open(path, "w", newline="\n") as fh:
            fh.write(svg)
        written.append(path)
    return written
