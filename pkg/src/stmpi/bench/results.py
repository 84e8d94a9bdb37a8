"""Benchmark result records and the CSV schema shared with the plotting
tools: backend,size_bytes,ranks,iterations,mean_ns,metric,value."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

CSV_HEADER = "backend,size_bytes,ranks,iterations,mean_ns,metric,value"


@dataclass(frozen=True)
class BenchKnobs:
    """Bench-level modeling knobs (the cost model covers the NIC/GPU/host
    latencies; these cover kernel work the sources don't quantify)."""

    gpu_copy_bytes_per_ns: float = 100.0
    life_cells_per_ns: float = 1.0

    def copy_ns(self, nbytes: int) -> int:
        return math.ceil(nbytes / self.gpu_copy_bytes_per_ns)

    def life_step_ns(self, cells: int) -> int:
        return math.ceil(cells / self.life_cells_per_ns)


@dataclass
class BenchResult:
    backend: str
    size_bytes: int
    ranks: int
    iterations: int
    mean_ns: float
    metrics: dict[str, float] = field(default_factory=dict)

    def rows(self) -> list[str]:
        return [
            f"{self.backend},{self.size_bytes},{self.ranks},"
            f"{self.iterations},{self.mean_ns:.3f},{metric},{value:.6f}"
            for metric, value in self.metrics.items()
        ]


def write_csv(path: str, results: list[BenchResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for result in results:
            for row in result.rows():
                fh.write(row + "\n")


def format_results(results: list[BenchResult]) -> str:
    lines = [CSV_HEADER]
    for result in results:
        lines.extend(result.rows())
    return "\n".join(lines)
