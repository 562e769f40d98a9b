"""SVG line plots of the CSV outputs, byte-for-byte reproducible."""
from __future__ import annotations

import os

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from ..errors import MalformedCsv
from .io import read_csv

KINDS = {
    "re_curve": ["n", "t", "re"],
    "coverage": ["method", "n", "cp", "cp_se", "mean_length"],
    "tv_scaling": None,
}


def _floats(path, rows, cols):
    try:
        return [[float(r[c]) for c in cols] for r in rows]
    except ValueError:
        raise MalformedCsv(f"{path}: non-numeric value in columns {cols}") from None


def _series(path, kind, header, rows):
    """Map series label -> (xs, ys)."""
    col = {h: i for i, h in enumerate(header)}
    out = {}
    if kind == "re_curve":
        for n, t, re in _floats(path, rows, [col["n"], col["t"], col["re"]]):
            xs, ys = out.setdefault(f"n={int(n)}", ([], []))
            xs.append(n * t)
            ys.append(re)
    elif kind == "coverage":
        vb = [r for r in rows if r[col["method"]] != "mle"]
        pts = _floats(path, vb, [col["n"], col["mean_length"]])
        out["online"] = ([p[0] for p in pts], [p[1] for p in pts])
        mle = [r for r in rows if r[col["method"]] == "mle"]
        if mle and pts:
            level = float(mle[0][col["mean_length"]])
            lo, hi = min(p[0] for p in pts), max(p[0] for p in pts)
            out["mle"] = ([lo, hi], [level, level])
    else:
        need = ("model", "method", "baseline", "n", "median_tv_upper")
        if any(k not in col for k in need):
            raise MalformedCsv(f"{path}: missing columns for {kind}")
        for r in rows:
            label = f"{r[col['model']]}/{r[col['method']]}/{r[col['baseline']]}"
            x, y = _floats(path, [r], [col["n"], col["median_tv_upper"]])[0]
            xs, ys = out.setdefault(label, ([], []))
            xs.append(x)
            ys.append(y)
    return out


def emit_svg(csv_path, kind: str, svg_path=None) -> str:
    """Render ``csv_path`` as a standalone SVG next to it (or at ``svg_path``).

    Each series becomes one line whose group id is ``series-<k>``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    header, rows = read_csv(csv_path)
    expected = KINDS[kind]
    if expected is not None and header != expected:
        raise MalformedCsv(f"{csv_path}: header {','.join(header)} is not a {kind} table")
    if not rows:
        raise MalformedCsv(f"{csv_path}: no data rows")
    series = _series(csv_path, kind, header, rows)
    if svg_path is None:
        svg_path = os.path.splitext(str(csv_path))[0] + ".svg"

    with matplotlib.rc_context({"svg.hashsalt": "online-bvm", "svg.fonttype": "none",
                                "path.simplify": False}):
        fig = Figure(figsize=(6.4, 4.2))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot()
        for k, (label, (xs, ys)) in enumerate(series.items(), start=1):
            (line,) = ax.plot(xs, ys, marker="o" if len(xs) < 30 else None, markersize=3,
                              linewidth=1.2, label=label)
            line.set_gid(f"series-{k}")
        if kind == "re_curve":
            ax.set_xscale("log")
            ax.set_xlabel("observations seen (t n)")
            ax.set_ylabel("relative efficiency")
        elif kind == "coverage":
            ax.set_xscale("log")
            ax.set_xlabel("batch size n")
            ax.set_ylabel("mean interval length")
        else:
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel("batch size n")
            ax.set_ylabel("median TV upper bound")
        if len(series) <= 12:
            ax.legend(fontsize=7, frameon=False)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    return svg_path
