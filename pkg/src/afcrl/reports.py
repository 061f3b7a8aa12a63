"""Report rendering for benchmark results: CSV, Markdown, and SVG charts.

All output is byte-stable for identical inputs: floats are written with
fixed rules and the SVG is assembled by hand rather than through a
plotting library. Display values in Markdown are truncated (not
rounded) to one decimal, matching how the reference tables read.
"""

from __future__ import annotations

import math
from pathlib import Path

from .bench import ScalingTable, TimingRecord
from .errors import ConfigError

CSV_HEADER = "episodes,envs,ranks,cpus,hours,speedup,efficiency,strategy"

FORMATS = ("csv", "markdown", "svg")


def trunc1(x: float) -> str:
    """Truncate toward zero at one decimal, e.g. 78.652 -> '78.6'."""
    scaled = math.trunc(x * 10.0) / 10.0
    return f"{scaled:.1f}"


def render_csv(tables: list[tuple[str, ScalingTable]]) -> str:
    """Full-precision CSV of every derived row, pinned header."""
    lines = [CSV_HEADER]
    for _label, table in tables:
        for row in table.rows:
            rec = row.record
            lines.append(
                f"{rec.n_episodes},{rec.n_envs},{rec.n_ranks},{rec.n_total},"
                f"{rec.hours!r},{row.speedup!r},{row.efficiency_pct!r},{rec.strategy}"
            )
    return "\n".join(lines) + "\n"


def render_markdown(tables: list[tuple[str, ScalingTable]]) -> str:
    """Markdown sections mirroring the reference table's column order."""
    out = []
    for label, table in tables:
        out.append(f"### {label}")
        out.append("")
        out.append("| episodes | envs | ranks | cpus | hours | speedup | efficiency (%) | strategy |")
        out.append("| --- | --- | --- | --- | --- | --- | --- | --- |")
        for row in table.rows:
            rec = row.record
            out.append(
                f"| {rec.n_episodes} | {rec.n_envs} | {rec.n_ranks} | {rec.n_total} "
                f"| {trunc1(rec.hours)} | {trunc1(row.speedup)} "
                f"| {trunc1(row.efficiency_pct)} | {rec.strategy} |"
            )
        out.append("")
    return "\n".join(out) + "\n"


# --- minimal deterministic SVG ----------------------------------------------

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 30, 50
_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="20" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{title}</text>',
    ]


def _axes(parts: list[str], xlabel: str, ylabel: str) -> None:
    x0, y0 = _ML, _H - _MB
    x1, y1 = _W - _MR, _MT
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    parts.append(
        f'<text x="{(x0 + x1) / 2:.0f}" y="{_H - 12}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">'
        f"{ylabel}</text>"
    )


def _series_svg(
    title: str,
    xlabel: str,
    ylabel: str,
    series: list[tuple[str, list[tuple[float, float]]]],
    logx: bool,
    logy: bool,
) -> str:
    xs = [p[0] for _n, pts in series for p in pts]
    ys = [p[1] for _n, pts in series for p in pts]
    if not xs:
        raise ConfigError("no data points to chart")

    def tx(v: float) -> float:
        return math.log10(v) if logx else v

    def ty(v: float) -> float:
        return math.log10(v) if logy else v

    xmin, xmax = min(map(tx, xs)), max(map(tx, xs))
    ymin, ymax = min(map(ty, ys)), max(map(ty, ys))
    if xmax == xmin:
        xmax = xmin + 1.0
    if ymax == ymin:
        ymax = ymin + 1.0
    sx = (_W - _ML - _MR) / (xmax - xmin)
    sy = (_H - _MT - _MB) / (ymax - ymin)

    def px(v: float) -> str:
        return _fmt(_ML + (tx(v) - xmin) * sx)

    def py(v: float) -> str:
        return _fmt(_H - _MB - (ty(v) - ymin) * sy)

    parts = _svg_open(title)
    _axes(parts, xlabel, ylabel)
    for x in sorted(set(xs)):
        parts.append(
            f'<text x="{px(x)}" y="{_H - _MB + 16}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{x:g}</text>'
        )
    for i, (name, pts) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{px(x)},{py(y)}" for x, y in pts)
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>'
        )
        for x, y in pts:
            parts.append(f'<circle cx="{px(x)}" cy="{py(y)}" r="2.5" fill="{color}"/>')
        parts.append(
            f'<text x="{_W - _MR - 5}" y="{_MT + 14 + 14 * i}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_svg_speedup(tables: list[tuple[str, ScalingTable]]) -> str:
    """Log-log speedup against environment count, one line per table."""
    series = [
        (label, [(row.record.n_envs, row.speedup) for row in table.rows])
        for label, table in tables
    ]
    return _series_svg("Speedup", "environments", "speedup", series, logx=True, logy=True)


def render_svg_efficiency(tables: list[tuple[str, ScalingTable]]) -> str:
    """Semi-log parallel efficiency against environment count."""
    series = [
        (label, [(row.record.n_envs, row.efficiency_pct) for row in table.rows])
        for label, table in tables
    ]
    return _series_svg(
        "Parallel efficiency", "environments", "efficiency (%)", series,
        logx=True, logy=False,
    )


def render_svg_breakdown(records: list[TimingRecord]) -> str:
    """Stacked per-episode time breakdown bars across environment counts."""
    ok = [r for r in records if not r.failed]
    if not ok:
        raise ConfigError("no records to chart")
    ok = sorted(ok, key=lambda r: (r.n_ranks, r.n_envs))
    parts = _svg_open("Episode time breakdown")
    _axes(parts, "environments", "hours")
    total_max = max(r.hours for r in ok)
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB
    n = len(ok)
    bar_w = plot_w / max(n, 1) * 0.7
    colors = {"solver": "#1f77b4", "io": "#ff7f0e", "update": "#2ca02c", "idle": "#cccccc"}
    for i, rec in enumerate(ok):
        cx = _ML + plot_w * (i + 0.5) / n
        y = _H - _MB
        idle = max(0.0, rec.hours - rec.solver_hours - rec.io_hours - rec.update_hours)
        for key, val in (("solver", rec.solver_hours), ("io", rec.io_hours),
                         ("update", rec.update_hours), ("idle", idle)):
            h = plot_h * (val / total_max)
            y -= h
            parts.append(
                f'<rect x="{_fmt(cx - bar_w / 2)}" y="{_fmt(y)}" '
                f'width="{_fmt(bar_w)}" height="{_fmt(h)}" fill="{colors[key]}"/>'
            )
        parts.append(
            f'<text x="{_fmt(cx)}" y="{_H - _MB + 16}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{rec.n_envs}</text>'
        )
    for i, (key, color) in enumerate(colors.items()):
        parts.append(
            f'<text x="{_W - _MR - 5}" y="{_MT + 14 + 14 * i}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif" fill="{color}">{key}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(
    tables: list[tuple[str, ScalingTable]],
    fmt: str,
    out_dir,
    stem: str = "scaling",
    breakdown_records: list[TimingRecord] | None = None,
) -> list[Path]:
    """Write the requested format(s) under ``out_dir``; returns the paths."""
    if fmt not in FORMATS:
        raise ConfigError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv":
        path = out_dir / f"{stem}.csv"
        path.write_text(render_csv(tables))
        written.append(path)
    elif fmt == "markdown":
        path = out_dir / f"{stem}.md"
        path.write_text(render_markdown(tables))
        written.append(path)
    else:
        p1 = out_dir / f"{stem}_speedup.svg"
        p1.write_text(render_svg_speedup(tables))
        p2 = out_dir / f"{stem}_efficiency.svg"
        p2.write_text(render_svg_efficiency(tables))
        written.extend([p1, p2])
        if breakdown_records:
            p3 = out_dir / f"{stem}_breakdown.svg"
            p3.write_text(render_svg_breakdown(breakdown_records))
            written.append(p3)
    return written
