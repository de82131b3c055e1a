"""Experiment driver: the protocol x metric score matrix, CSV and SVG output.

Cells are independent jobs on a bounded thread pool (``NTC_BENCH_THREADS``
caps it); results are gathered into a deterministically sorted table, so
identical configurations produce byte-identical files regardless of
scheduling.  Lower-is-better metrics are stored raw in the CSV and negated
only at plot time.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

from .metrics import CLOSED_FORM_METRICS, ORIENTATIONS
from .protocols import FAMILIES, make_protocol
from .receiver import ReceiverConfig, run_once
from .tre import COMPOSITIONS, TreConfig, tre_fit

ALL_METRICS = (
    "topsim",
    "posdis",
    "bosdis",
    "context_independence",
    "conflict_count",
    "generalisation",
    "tre",
)

CSV_HEADER = "protocol,metric,composition,seed,value,orientation,defined"


@dataclass(frozen=True)
class RunConfig:
    protocols: tuple[str, ...] = tuple(FAMILIES)
    metrics: tuple[str, ...] = ALL_METRICS
    n_colours: int = 25
    n_shapes: int = 25
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    tre_compositions: tuple[str, ...] = ("linear",)
    out: str | None = None
    plot: str | None = None
    tre_curve_dir: str | None = None

    def __post_init__(self) -> None:
        unknown = [name for name in self.protocols if name not in FAMILIES]
        if unknown:
            raise ValueError(f"unknown protocols: {', '.join(unknown)}")
        unknown = [name for name in self.metrics if name not in ALL_METRICS]
        if unknown:
            raise ValueError(f"unknown metrics: {', '.join(unknown)}")
        unknown = [name for name in self.tre_compositions if name not in COMPOSITIONS]
        if unknown:
            raise ValueError(f"unknown compositions: {', '.join(unknown)}")
        if not self.protocols or not self.metrics or not self.seeds:
            raise ValueError("protocols, metrics and seeds must be non-empty")
        if self.n_colours < 1 or self.n_shapes < 1:
            raise ValueError("grid sizes must be positive")
        if any(not 0 <= s < 2**64 for s in self.seeds):
            raise ValueError("seeds must fit in 64 unsigned bits")
        if "tre" in self.metrics and not self.tre_compositions:
            raise ValueError("tre requested but no compositions given")

    @classmethod
    def from_json(cls, obj: dict, **overrides) -> "RunConfig":
        known = {
            "protocols", "metrics", "n_colours", "n_shapes", "seeds",
            "tre_compositions", "out", "plot", "tre_curve_dir",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged = {**obj, **{k: v for k, v in overrides.items() if v is not None}}
        for key in ("protocols", "metrics", "seeds", "tre_compositions"):
            if key in merged:
                merged[key] = tuple(merged[key])
        return cls(**merged)


@dataclass(frozen=True)
class ScoreRow:
    protocol: str
    metric: str
    composition: str  # empty except for tre rows
    seed: int
    value: float | None
    orientation: str
    defined: bool

    def sort_key(self):
        return (self.protocol, self.metric, self.composition, self.seed)


@dataclass(frozen=True)
class ScoreTable:
    rows: tuple[ScoreRow, ...]
    notes: tuple[str, ...] = ()


def _worker_count(n_jobs: int) -> int:
    env = os.environ.get("NTC_BENCH_THREADS", "").strip()
    if env:
        limit = int(env)
        if limit < 1:
            raise ValueError("NTC_BENCH_THREADS must be at least 1")
    else:
        limit = os.cpu_count() or 1
    return max(1, min(limit, n_jobs))


def _evaluate_cell(protocol, family, metric, composition, seed, config) -> tuple[ScoreRow, str | None]:
    try:
        if metric in CLOSED_FORM_METRICS:
            score = CLOSED_FORM_METRICS[metric](protocol)
            return (
                ScoreRow(family, metric, "", seed, score.value, score.orientation, score.defined),
                None,
            )
        if metric == "generalisation":
            run = run_once(protocol, ReceiverConfig(seed=seed))
            return ScoreRow(family, metric, "", seed, run.exact_match, "higher", True), None
        if metric == "tre":
            curve_path = None
            if config.tre_curve_dir:
                os.makedirs(config.tre_curve_dir, exist_ok=True)
                curve_path = os.path.join(config.tre_curve_dir, f"{family}_{composition}_{seed}.csv")
            result = tre_fit(protocol, TreConfig(composition=composition, seed=seed), curve_path=curve_path)
            return ScoreRow(family, metric, composition, seed, result.tre, "lower", True), None
        raise ValueError(f"unknown metric {metric!r}")
    except Exception as exc:  # per-cell failures become error rows, run continues
        note = f"error: {family}/{metric}/{composition or '-'}/seed {seed}: {exc}"
        orientation = ORIENTATIONS.get(metric, "higher")
        return ScoreRow(family, metric, composition if metric == "tre" else "", seed, None, orientation, False), note


def run_matrix(config: RunConfig) -> ScoreTable:
    """Evaluate every requested (protocol, metric, seed) cell.

    Per-cell failures are recorded as undefined rows plus a note; no requested
    cell is dropped.
    """
    notes: list[str] = []
    protocols = {}
    for family in config.protocols:
        for i, seed in enumerate(config.seeds):
            p, adj = make_protocol(family, config.n_colours, config.n_shapes, seed)
            protocols[(family, seed)] = p
            if i == 0:
                notes.extend(adj)

    cells = []
    for family in config.protocols:
        for metric in config.metrics:
            comps: Iterable[str] = config.tre_compositions if metric == "tre" else ("",)
            for composition in comps:
                for seed in config.seeds:
                    cells.append((family, metric, composition, seed))

    rows: list[ScoreRow] = []
    with ThreadPoolExecutor(max_workers=_worker_count(len(cells))) as pool:
        futures = [
            pool.submit(_evaluate_cell, protocols[(family, seed)], family, metric, composition, seed, config)
            for family, metric, composition, seed in cells
        ]
        for future in futures:
            row, note = future.result()
            rows.append(row)
            if note is not None:
                notes.append(note)

    rows.sort(key=ScoreRow.sort_key)
    return ScoreTable(rows=tuple(rows), notes=tuple(sorted(notes)))


def emit_csv(table: ScoreTable, path: str) -> None:
    """Sorted CSV with 9-significant-digit values; undefined cells are empty."""
    if not table.rows:
        raise ValueError("refusing to emit an empty table")
    lines = [CSV_HEADER]
    for row in sorted(table.rows, key=ScoreRow.sort_key):
        value = "" if row.value is None else f"{row.value:.9g}"
        defined = "true" if row.defined else "false"
        lines.append(f"{row.protocol},{row.metric},{row.composition},{row.seed},{value},{row.orientation},{defined}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_notes(table: ScoreTable, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for note in table.notes:
            fh.write(note + "\n")
        if not table.notes:
            fh.write("no adjustments\n")


# --- SVG ---------------------------------------------------------------------

_LABEL_W = 120
_PLOT_W = 230
_ROW_H = 16
_TITLE_H = 20
_AXIS_H = 22
_MARGIN = 12


def _panel_order(table: ScoreTable) -> list[tuple[str, str]]:
    keys = sorted(
        {(r.metric, r.composition) for r in table.rows},
        key=lambda mc: (
            ALL_METRICS.index(mc[0]) if mc[0] in ALL_METRICS else len(ALL_METRICS),
            mc[1],
        ),
    )
    return keys


def _protocol_order(table: ScoreTable) -> list[str]:
    present = {r.protocol for r in table.rows}
    canonical = [f for f in FAMILIES if f in present]
    return canonical + sorted(present - set(canonical))


def emit_plot(table: ScoreTable, path: str) -> None:
    """Self-contained SVG: one horizontal-bar panel per metric (and per
    composition for the reconstruction error), protocols on the Y axis.

    Lower-is-better metrics are plotted negated so that longer bars always
    mean more compositional; the per-seed spread is drawn as whiskers and
    undefined cells as an explicit n/a marker.
    """
    if not table.rows:
        raise ValueError("refusing to plot an empty table")
    panels = _panel_order(table)
    protocols = _protocol_order(table)
    by_cell: dict[tuple[str, str, str], list[ScoreRow]] = {}
    for row in table.rows:
        by_cell.setdefault((row.metric, row.composition, row.protocol), []).append(row)

    n_cols = min(4, len(panels))
    n_rows = math.ceil(len(panels) / n_cols)
    panel_w = _LABEL_W + _PLOT_W + 2 * _MARGIN
    panel_h = _TITLE_H + len(protocols) * _ROW_H + _AXIS_H
    width = n_cols * panel_w + 2 * _MARGIN
    height = n_rows * panel_h + 2 * _MARGIN

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">'
    )
    parts.append(f'<rect width="{width}" height="{height}" fill="white"/>')

    for index, (metric, composition) in enumerate(panels):
        px = _MARGIN + (index % n_cols) * panel_w
        py = _MARGIN + (index // n_cols) * panel_h
        title = metric if not composition else f"{metric} ({composition})"
        sign = -1.0 if ORIENTATIONS.get(metric, "higher") == "lower" else 1.0
        if sign < 0:
            title = f"-{title}"

        stats: dict[str, tuple[float, float, float] | None] = {}
        for name in protocols:
            rows = by_cell.get((metric, composition, name), [])
            if not rows or not all(r.defined for r in rows):
                stats[name] = None
                continue
            values = [sign * r.value for r in rows]
            stats[name] = (
                sum(values) / len(values),
                min(values),
                max(values),
            )
        spread = [x for s in stats.values() if s is not None for x in s]
        lo = min([0.0] + spread)
        hi = max([0.0] + spread)
        if hi == lo:
            hi = lo + 1.0
        pad = 0.06 * (hi - lo)
        lo -= pad
        hi += pad

        def x_of(v: float) -> float:
            return px + _LABEL_W + (v - lo) / (hi - lo) * _PLOT_W

        parts.append(f'<text x="{px + _LABEL_W:.2f}" y="{py + 12:.2f}" font-weight="bold">{title}</text>')
        x0 = x_of(0.0)
        top = py + _TITLE_H
        bottom = top + len(protocols) * _ROW_H
        parts.append(
            f'<line x1="{x0:.2f}" y1="{top:.2f}" x2="{x0:.2f}" y2="{bottom:.2f}" '
            f'stroke="#888" stroke-width="0.8"/>'
        )
        for row_i, name in enumerate(protocols):
            y = top + row_i * _ROW_H
            cy = y + _ROW_H / 2
            parts.append(
                f'<text x="{px + _LABEL_W - 6:.2f}" y="{cy + 3:.2f}" text-anchor="end">{name}</text>'
            )
            cell = stats[name]
            if cell is None:
                parts.append(f'<text x="{x0 + 5:.2f}" y="{cy + 3:.2f}" fill="#999">n/a</text>')
                continue
            mean, vmin, vmax = cell
            bx = min(x0, x_of(mean))
            bw = abs(x_of(mean) - x0)
            parts.append(
                f'<rect x="{bx:.2f}" y="{y + 3:.2f}" width="{bw:.2f}" height="{_ROW_H - 6:.2f}" '
                f'fill="#4878a8"/>'
            )
            parts.append(
                f'<line x1="{x_of(vmin):.2f}" y1="{cy:.2f}" x2="{x_of(vmax):.2f}" y2="{cy:.2f}" '
                f'stroke="#222" stroke-width="1"/>'
            )
            for v in (vmin, vmax):
                parts.append(
                    f'<line x1="{x_of(v):.2f}" y1="{cy - 3:.2f}" x2="{x_of(v):.2f}" y2="{cy + 3:.2f}" '
                    f'stroke="#222" stroke-width="1"/>'
                )
        ticks_y = bottom + 12
        for v in (lo, 0.0, hi):
            parts.append(
                f'<text x="{x_of(v):.2f}" y="{ticks_y:.2f}" text-anchor="middle" fill="#444">{v:.3g}</text>'
            )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(parts) + "\n")
