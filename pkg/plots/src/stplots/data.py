"""Loading and pivoting of the benchmark CSV schema:
backend,size_bytes,ranks,iterations,mean_ns,metric,value
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass

EXPECTED_COLUMNS = ["backend", "size_bytes", "ranks", "iterations",
                    "mean_ns", "metric", "value"]


class PlotDataError(ValueError):
    """Bad or missing benchmark data; the message names what is absent."""


@dataclass(frozen=True)
class Row:
    backend: str
    size_bytes: int
    ranks: int
    iterations: int
    mean_ns: float
    metric: str
    value: float


def load_rows(paths: list[str]) -> list[Row]:
    rows: list[Row] = []
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in EXPECTED_COLUMNS if c not in header]
            if missing:
                raise PlotDataError(
                    f"{path}: missing column(s) {', '.join(missing)}")
            for record in reader:
                rows.append(Row(
                    backend=record["backend"],
                    size_bytes=int(record["size_bytes"]),
                    ranks=int(record["ranks"]),
                    iterations=int(record["iterations"]),
                    mean_ns=float(record["mean_ns"]),
                    metric=record["metric"],
                    value=float(record["value"]),
                ))
    if not rows:
        raise PlotDataError(f"no data rows in {', '.join(paths)}")
    return rows


def backends(rows: list[Row]) -> list[str]:
    return sorted({r.backend for r in rows})


def series(rows: list[Row], metric: str, x_field: str):
    """Group metric values: {backend: [(x, [replicate values...]), ...]}.

    Replicate rows (same backend and x) stack into one sample list.
    """
    grouped: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r.metric == metric:
            grouped[r.backend][getattr(r, x_field)].append(r.value)
    if not grouped:
        raise PlotDataError(f"no rows for metric {metric!r}")
    out = {}
    for backend in sorted(grouped):
        out[backend] = sorted(grouped[backend].items())
    return out


def near_square_grid(ranks: int) -> tuple[int, int]:
    """Factor a rank count into the most nearly square R x C pair."""
    best = (1, ranks)
    for r in range(1, int(math.isqrt(ranks)) + 1):
        if ranks % r == 0:
            best = (ranks // r, r)
    return best


def edge_bytes_lookup(rows: list[Row]) -> dict[int, float]:
    """Average halo edge bytes per rank count.

    Prefers the benchmark-emitted edge_bytes rows; falls back to the
    decomposition arithmetic (problem bytes over total perimeter cells,
    assuming a near-square rank grid)."""
    table: dict[int, float] = {}
    for r in rows:
        if r.metric == "edge_bytes":
            table[r.ranks] = r.value
    if table:
        return table
    for r in rows:
        if r.metric == "speedup" and r.ranks not in table:
            n = math.isqrt(r.size_bytes)
            R, C = near_square_grid(r.ranks)
            table[r.ranks] = r.size_bytes / (2 * n * (R + C))
    if not table:
        raise PlotDataError("no edge_bytes or speedup rows to derive "
                            "edge sizes from")
    return table
