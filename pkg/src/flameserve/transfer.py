"""Input packing and an analytic host-to-device transfer cost model.

Many small per-array transfers each pay a launch overhead; packing them into
one contiguous buffer pays it once. Pageable transfers pay an extra host-side
copy hop into a staging area before crossing the bus; pinned transfers skip
it. Both effects are modeled analytically from a bandwidth table rather than
performed, so results are hardware independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

ALIGNMENT = 8


class CorruptBatchError(ValueError):
    """The segment table of a packed batch is inconsistent with its buffer."""


class TransferMode(Enum):
    PINNED = "pinned"
    PAGEABLE = "pageable"


@dataclass(frozen=True)
class PackedBatch:
    buffer: bytes
    segments: tuple[tuple[str, int, int], ...]  # (name, offset, length)
    total_bytes: int


@dataclass(frozen=True)
class BandwidthTable:
    network_bytes_per_s: float = 1.25e9
    host_copy_bytes_per_s: float = 8.0e9
    staging_bus_bytes_per_s: float = 12.0e9
    per_transfer_overhead_s: float = 1e-5

    def __post_init__(self) -> None:
        for name in ("network_bytes_per_s", "host_copy_bytes_per_s", "staging_bus_bytes_per_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.per_transfer_overhead_s < 0:
            raise ValueError("per_transfer_overhead_s must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "BandwidthTable":
        return cls(
            network_bytes_per_s=float(d.get("network_Bps", cls.network_bytes_per_s)),
            host_copy_bytes_per_s=float(d.get("host_copy_Bps", cls.host_copy_bytes_per_s)),
            staging_bus_bytes_per_s=float(d.get("staging_bus_Bps", cls.staging_bus_bytes_per_s)),
            per_transfer_overhead_s=float(
                d.get("per_transfer_overhead_s", cls.per_transfer_overhead_s)
            ),
        )


@dataclass(frozen=True)
class TransferReport:
    mode: TransferMode
    bytes: int
    modeled_time_s: float
    hop_breakdown: tuple[tuple[str, float], ...]


def _align(offset: int) -> int:
    return (offset + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def pack_inputs(named_arrays: list[tuple[str, bytes]]) -> PackedBatch:
    """Concatenate named byte arrays into one buffer with 8-byte aligned segments."""
    names = [name for name, _ in named_arrays]
    if len(set(names)) != len(names):
        raise ValueError("segment names must be unique")
    buf = bytearray()
    segments = []
    for name, data in named_arrays:
        offset = _align(len(buf))
        buf += b"\x00" * (offset - len(buf))
        buf += data
        segments.append((name, offset, len(data)))
    return PackedBatch(bytes(buf), tuple(segments), len(buf))


def unpack(batch: PackedBatch) -> list[tuple[str, bytes]]:
    """Exact inverse of pack_inputs; rejects corrupted segment tables."""
    if len(batch.buffer) != batch.total_bytes:
        raise CorruptBatchError(
            f"buffer is {len(batch.buffer)} bytes but total_bytes says {batch.total_bytes}"
        )
    end = 0
    out = []
    for name, offset, length in batch.segments:
        if offset % ALIGNMENT != 0:
            raise CorruptBatchError(f"segment {name!r} offset {offset} is unaligned")
        if length < 0 or offset < end:
            raise CorruptBatchError(f"segment {name!r} overlaps its predecessor")
        if offset - end >= ALIGNMENT:
            raise CorruptBatchError(f"gap before segment {name!r} exceeds alignment padding")
        if offset + length > batch.total_bytes:
            raise CorruptBatchError(f"segment {name!r} runs past the buffer")
        out.append((name, batch.buffer[offset : offset + length]))
        end = offset + length
    if batch.segments and end != batch.total_bytes:
        raise CorruptBatchError("segments do not cover the buffer tail")
    if not batch.segments and batch.total_bytes != 0:
        raise CorruptBatchError("non-empty buffer with no segments")
    return out


def simulate_transfer(
    batch: PackedBatch, mode: TransferMode, table: BandwidthTable
) -> TransferReport:
    """Model the host-to-device time of one transfer.

    Pinned crosses the staging bus directly; pageable first copies into a
    staging area on the host. Every transfer pays the fixed launch overhead.
    """
    hops: list[tuple[str, float]] = []
    if mode is TransferMode.PAGEABLE:
        hops.append(("host_copy", batch.total_bytes / table.host_copy_bytes_per_s))
    hops.append(("staging_bus", batch.total_bytes / table.staging_bus_bytes_per_s))
    time_s = sum(t for _, t in hops) + table.per_transfer_overhead_s
    return TransferReport(mode, batch.total_bytes, time_s, tuple(hops))
