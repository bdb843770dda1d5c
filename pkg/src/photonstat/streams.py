"""Time-tag streams and their on-disk formats.

A :class:`TimeTagStream` is a strictly increasing list of picosecond
detection timestamps on one channel; it is the interchange between the
simulator and every analysis routine.

PTAG v1 file format (binary, little-endian):
  16-byte header: magic ``PTAG`` | version u32 = 1 | record_count u64,
  then record_count 16-byte records: timestamp_ps u64 | channel u8 |
  7 reserved zero bytes.  Records are sorted by timestamp, ties by channel.
A CSV mirror (``timestamp_ps,channel``) is accepted on input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CHANNEL_CODES",
    "TimeTagStream",
    "intensity_trace",
    "write_ptag",
    "read_ptag",
    "read_stream_csv",
    "read_streams",
]

PTAG_MAGIC = b"PTAG"
PTAG_VERSION = 1
CHANNEL_CODES = {"A": 0, "B": 1, "SYNC": 2}
CODE_CHANNELS = {v: k for k, v in CHANNEL_CODES.items()}


@dataclass(frozen=True)
class TimeTagStream:
    """Sorted photon detection timestamps on one channel.

    timestamps are int64 picoseconds, strictly increasing, all within
    [0, duration_ps].  metadata carries generator provenance (seed,
    config hash, rng algorithm).
    """

    channel: str
    timestamps: np.ndarray
    duration_ps: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.channel not in CHANNEL_CODES:
            raise ValueError(f"channel must be one of {sorted(CHANNEL_CODES)}")
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if ts.ndim != 1:
            raise ValueError("timestamps must be a 1-d array")
        if ts.size and (ts[0] < 0 or ts[-1] > self.duration_ps):
            raise ValueError("timestamps must lie within [0, duration_ps]")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        ts.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "duration_ps", int(self.duration_ps))

    def __len__(self) -> int:
        return self.timestamps.size


def intensity_trace(stream: TimeTagStream, bin_ms: float) -> np.ndarray:
    """Counts per consecutive time bin; the sum equals the total tag count.

    Tags exactly at duration land in the last bin.
    """
    if bin_ms <= 0:
        raise ValueError("bin width must be > 0")
    bin_ps = int(round(bin_ms * 1e9))
    n_bins = max(1, -(-stream.duration_ps // bin_ps))  # ceil division
    if len(stream) == 0:
        return np.zeros(n_bins, dtype=np.int64)
    idx = np.minimum(stream.timestamps // bin_ps, n_bins - 1)
    return np.bincount(idx, minlength=n_bins).astype(np.int64)


def _merge_records(streams) -> tuple[np.ndarray, np.ndarray]:
    ts = np.concatenate([s.timestamps for s in streams]) if streams else np.empty(0, np.int64)
    ch = np.concatenate(
        [np.full(len(s), CHANNEL_CODES[s.channel], dtype=np.uint8) for s in streams]
    ) if streams else np.empty(0, np.uint8)
    # Sort by timestamp, ties by channel code.
    order = np.lexsort((ch, ts))
    return ts[order], ch[order]


def write_ptag(path, *streams: TimeTagStream):
    """Write one or more channels to a PTAG v1 file."""
    ts, ch = _merge_records(list(streams))
    rec = np.zeros(ts.size, dtype=[("t", "<u8"), ("c", "u1"), ("pad", "u1", 7)])
    rec["t"] = ts.astype(np.uint64)
    rec["c"] = ch
    with open(path, "wb") as fh:
        fh.write(PTAG_MAGIC)
        fh.write(struct.pack("<IQ", PTAG_VERSION, ts.size))
        fh.write(rec.tobytes())


def read_ptag(path) -> dict[str, np.ndarray]:
    """Read a PTAG v1 file into per-channel sorted timestamp arrays."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:4] != PTAG_MAGIC:
            raise ValueError(f"{path}: not a PTAG file (bad magic)")
        version, count = struct.unpack("<IQ", head[4:])
        if version != PTAG_VERSION:
            raise ValueError(f"{path}: unsupported PTAG version {version}")
        raw = fh.read(16 * count)
        if len(raw) != 16 * count:
            raise ValueError(f"{path}: truncated PTAG file")
    rec = np.frombuffer(raw, dtype=[("t", "<u8"), ("c", "u1"), ("pad", "u1", 7)])
    out = {}
    for name, code in CHANNEL_CODES.items():
        mask = rec["c"] == code
        if mask.any():
            out[name] = np.sort(rec["t"][mask].astype(np.int64))
    return out


def read_stream_csv(path) -> dict[str, np.ndarray]:
    """Read the CSV mirror: header ``timestamp_ps,channel`` then rows."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "timestamp_ps,channel":
            raise ValueError(f"{path}: expected header 'timestamp_ps,channel'")
        ts, codes = [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t_str, c_str = line.split(",")
            ts.append(int(t_str))
            c = c_str.strip().upper()
            if c in CHANNEL_CODES:
                codes.append(CHANNEL_CODES[c])
            else:
                codes.append(int(c))
    ts = np.asarray(ts, dtype=np.int64)
    codes = np.asarray(codes, dtype=np.uint8)
    out = {}
    for name, code in CHANNEL_CODES.items():
        mask = codes == code
        if mask.any():
            out[name] = np.sort(ts[mask])
    return out


def read_streams(path) -> dict[str, np.ndarray]:
    """Read PTAG or its CSV mirror, sniffing by magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == PTAG_MAGIC:
        return read_ptag(path)
    return read_stream_csv(path)
