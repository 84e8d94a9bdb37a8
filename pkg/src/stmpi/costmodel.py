"""Parametric latency/bandwidth model shared by the GPU, NIC and host layers.

All times are integer virtual nanoseconds.  Defaults put the CPU-driven
per-message overhead (launches + barrier + setup beyond the stream-triggered
path) in the low-microsecond band typical of GPU-aware MPI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class CostModel:
    kernel_launch_ns: int = 1000
    gpu_barrier_ns: int = 1000
    match_setup_ns: int = 3000
    wire_latency_ns: int = 2000
    bandwidth_bytes_per_ns: float = 25.0
    atomic_ns: int = 500
    eager_threshold_bytes: int = 8192
    dwq_pool_capacity: int = 500

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")
        if self.bandwidth_bytes_per_ns <= 0:
            raise ValueError("bandwidth_bytes_per_ns must be > 0")

    def serialization_ns(self, nbytes: int) -> int:
        """Time for nbytes on the wire, excluding latency."""
        if nbytes < 0:
            raise ValueError("nbytes must be >= 0")
        return math.ceil(nbytes / self.bandwidth_bytes_per_ns)

    def transfer_time(self, nbytes: int) -> int:
        """One-way wire time: latency plus ceil(len / bandwidth)."""
        return self.wire_latency_ns + self.serialization_ns(nbytes)

    def is_eager(self, nbytes: int) -> bool:
        return nbytes < self.eager_threshold_bytes

    def baseline_transport_ns(self, nbytes: int) -> int:
        """One-way latency of a CPU-driven (host MPI) message.

        Eager messages pay matching/setup plus the wire; rendezvous messages
        additionally pay the RTS/CTS round trip (two extra wire crossings).
        """
        extra = 0 if self.is_eager(nbytes) else 2 * self.wire_latency_ns
        return self.match_setup_ns + extra + self.transfer_time(nbytes)

    def baseline_pingpong_hop_ns(
        self, nbytes: int, pack_ns: int = 0, unpack_ns: int = 0
    ) -> int:
        """Closed-form per-hop latency of the CPU-driven GPU ping-pong.

        One hop = unpack of the previous message + pack of this one (a kernel
        launch each) + a stream synchronization barrier + the host-MPI send
        path.  The simulated baseline benchmark must reproduce this exactly.
        """
        return (
            2 * self.kernel_launch_ns
            + pack_ns
            + unpack_ns
            + self.gpu_barrier_ns
            + self.baseline_transport_ns(nbytes)
        )

    def with_overrides(self, **kwargs) -> "CostModel":
        return replace(self, **kwargs)


_FIELD_TYPES = {
    "kernel_launch_ns": int,
    "gpu_barrier_ns": int,
    "match_setup_ns": int,
    "wire_latency_ns": int,
    "bandwidth_bytes_per_ns": float,
    "atomic_ns": int,
    "eager_threshold_bytes": int,
    "dwq_pool_capacity": int,
}


def parse_overrides(pairs: dict[str, str]) -> dict[str, int | float]:
    out: dict[str, int | float] = {}
    for key, raw in pairs.items():
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown cost model key: {key!r}")
        out[key] = _FIELD_TYPES[key](raw)
    return out


def load_cost_model(path: str, base: CostModel | None = None) -> CostModel:
    """Read a flat key=value config file; keys are the CostModel field names."""
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            pairs[key.strip()] = value.strip()
    base = base if base is not None else CostModel()
    return base.with_overrides(**parse_overrides(pairs))
