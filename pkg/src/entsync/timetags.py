"""Time-tag stream generation and detector/clock models.

Timestamps are integer picoseconds throughout: analysis bins are 16 ps, and
integers keep multi-hundred-second runs free of float accumulation error.
Gaussian jitter is drawn in double precision and rounded once.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StreamFormatError

PS_PER_S = 1_000_000_000_000
MAX_TIMESTAMP_PS = 1 << 62

# Detection channel labels.
CH_ALICE_LOCAL = 0
CH_ALICE_REMOTE = 1
CH_BOB_LOCAL = 2
CH_BOB_REMOTE = 3


@dataclass(frozen=True)
class TimeTagStream:
    """Sorted detection timestamps (integer ps) with per-event channel labels."""

    timestamps_ps: np.ndarray
    channels: np.ndarray

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps_ps, dtype=np.int64)
        ch = np.ascontiguousarray(self.channels, dtype=np.uint32)
        if ts.shape != ch.shape or ts.ndim != 1:
            raise ValueError("timestamps and channels must be 1-d arrays of equal length")
        if ts.size and np.any(np.diff(ts) < 0):
            raise StreamFormatError("stream is not sorted by timestamp")
        if ts.size and int(np.abs(ts).max()) >= MAX_TIMESTAMP_PS:
            raise OverflowError("timestamp magnitude exceeds 2**62 ps")
        ts.flags.writeable = False
        ch.flags.writeable = False
        object.__setattr__(self, "timestamps_ps", ts)
        object.__setattr__(self, "channels", ch)

    def __len__(self) -> int:
        return int(self.timestamps_ps.size)

    def with_channel(self, channel: int) -> "TimeTagStream":
        return TimeTagStream(self.timestamps_ps, np.full(len(self), channel, dtype=np.uint32))

    def window(self, t0_ps: int, t1_ps: int) -> "TimeTagStream":
        """Events with t0_ps <= t < t1_ps."""
        lo, hi = np.searchsorted(self.timestamps_ps, [t0_ps, t1_ps])
        return TimeTagStream(self.timestamps_ps[lo:hi], self.channels[lo:hi])

    @staticmethod
    def empty() -> "TimeTagStream":
        return TimeTagStream(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.uint32))

    @staticmethod
    def from_timestamps(timestamps_ps: np.ndarray, channel: int = 0) -> "TimeTagStream":
        ts = np.sort(np.asarray(timestamps_ps, dtype=np.int64))
        return TimeTagStream(ts, np.full(ts.size, channel, dtype=np.uint32))


def merge_streams(*streams: TimeTagStream) -> TimeTagStream:
    """Merge sorted streams into one; ties are ordered by channel label."""
    ts = np.concatenate([s.timestamps_ps for s in streams])
    ch = np.concatenate([s.channels for s in streams])
    order = np.lexsort((ch, ts))
    return TimeTagStream(ts[order], ch[order])


@dataclass(frozen=True)
class PairSourceModel:
    """Photon-pair source: Poisson emission with per-photon timing spread."""

    pair_rate_hz: float
    emission_jitter_sigma_ps: float = 0.0
    heralding_efficiency: float = 1.0

    def validate(self, field_prefix: str = "source"):
        if not math.isfinite(self.pair_rate_hz) or self.pair_rate_hz < 0:
            raise ConfigError(f"{field_prefix}.pair_rate_hz must be finite and >= 0")
        if not math.isfinite(self.emission_jitter_sigma_ps) or self.emission_jitter_sigma_ps < 0:
            raise ConfigError(f"{field_prefix}.emission_jitter_sigma_ps must be finite and >= 0")
        if not 0.0 <= self.heralding_efficiency <= 1.0:
            raise ConfigError(f"{field_prefix}.heralding_efficiency must be in [0, 1]")


@dataclass(frozen=True)
class DetectorModel:
    """Detection efficiency, timing jitter, dark counts, and dead time."""

    jitter_sigma_ps: float = 0.0
    efficiency: float = 1.0
    dark_rate_hz: float = 0.0
    dead_time_ps: int = 0

    def validate(self, field_prefix: str = "detector"):
        if not math.isfinite(self.jitter_sigma_ps) or self.jitter_sigma_ps < 0:
            raise ConfigError(f"{field_prefix}.jitter_sigma_ps must be finite and >= 0")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError(f"{field_prefix}.efficiency must be in [0, 1]")
        if not math.isfinite(self.dark_rate_hz) or self.dark_rate_hz < 0:
            raise ConfigError(f"{field_prefix}.dark_rate_hz must be finite and >= 0")
        if self.dead_time_ps < 0:
            raise ConfigError(f"{field_prefix}.dead_time_ps must be >= 0")


@dataclass(frozen=True)
class ClockModel:
    """Local clock: reading = ideal * (1 + drift_ppb * 1e-9) + offset_ps."""

    offset_ps: int = 0
    drift_ppb: float = 0.0

    def validate(self, field_prefix: str = "clock"):
        if not math.isfinite(self.drift_ppb):
            raise ConfigError(f"{field_prefix}.drift_ppb must be finite")
        if abs(int(self.offset_ps)) >= MAX_TIMESTAMP_PS:
            raise ConfigError(f"{field_prefix}.offset_ps magnitude must be < 2**62")


def _poisson_arrivals_ps(rng: np.random.Generator, rate_hz: float, duration_ps: float) -> np.ndarray:
    """Homogeneous Poisson arrival times in [0, duration_ps), integer ps, sorted."""
    if rate_hz == 0.0 or duration_ps <= 0:
        return np.empty(0, dtype=np.int64)
    mean_gap_ps = PS_PER_S / rate_hz
    expected = duration_ps / mean_gap_ps
    chunk = max(1024, int(expected + 6.0 * math.sqrt(expected + 1.0)))
    pieces = []
    t = 0.0
    while t < duration_ps:
        gaps = rng.exponential(mean_gap_ps, size=chunk)
        times = t + np.cumsum(gaps)
        pieces.append(times)
        t = float(times[-1])
    times = np.concatenate(pieces)
    times = times[times < duration_ps]
    return np.rint(times).astype(np.int64)


def generate_pairs(
    source: PairSourceModel, duration_s: float, seed: int
) -> tuple[TimeTagStream, TimeTagStream]:
    """Simulate one pair source over [0, duration_s).

    Pair emission times follow a homogeneous Poisson process; each pair
    contributes one event to the local stream and one to the remote stream at
    the common emission time plus independent Gaussian jitter. Each arm is
    thinned independently by the heralding efficiency. Deterministic per seed.
    """
    source.validate()
    if not math.isfinite(duration_s) or duration_s <= 0:
        raise ConfigError("duration_s must be finite and > 0")
    rng = np.random.default_rng(seed)
    emission = _poisson_arrivals_ps(rng, source.pair_rate_hz, duration_s * PS_PER_S)
    n = emission.size

    sigma = source.emission_jitter_sigma_ps
    if sigma > 0:
        local = emission + np.rint(rng.normal(0.0, sigma, n)).astype(np.int64)
        remote = emission + np.rint(rng.normal(0.0, sigma, n)).astype(np.int64)
    else:
        local = emission.copy()
        remote = emission.copy()

    eff = source.heralding_efficiency
    if eff < 1.0:
        local = local[rng.random(n) < eff]
        remote = remote[rng.random(n) < eff]

    return TimeTagStream.from_timestamps(local), TimeTagStream.from_timestamps(remote)


def _dead_time_filter(timestamps: np.ndarray, dead_time_ps: int) -> np.ndarray:
    """Keep events separated by >= dead_time_ps from the previous retained one."""
    keep = np.ones(timestamps.size, dtype=bool)
    last = None
    for i, t in enumerate(timestamps):
        if last is not None and t - last < dead_time_ps:
            keep[i] = False
        else:
            last = t
    return keep


def apply_detector(
    stream: TimeTagStream, det: DetectorModel, duration_s: float, seed: int
) -> TimeTagStream:
    """Pass a single-detector stream through efficiency, jitter, darks, dead time.

    Dark counts are Poissonian over [0, duration_s) and merged with the signal
    before dead-time filtering: dead time acts on the physical detector, not
    per event origin.
    """
    det.validate()
    if not math.isfinite(duration_s) or duration_s < 0:
        raise ConfigError("duration_s must be finite and >= 0")
    rng = np.random.default_rng(seed)

    ts = stream.timestamps_ps
    ch = stream.channels
    if det.efficiency < 1.0:
        keep = rng.random(ts.size) < det.efficiency
        ts, ch = ts[keep], ch[keep]
    if det.jitter_sigma_ps > 0 and ts.size:
        ts = ts + np.rint(rng.normal(0.0, det.jitter_sigma_ps, ts.size)).astype(np.int64)

    if det.dark_rate_hz > 0:
        n_dark = rng.poisson(det.dark_rate_hz * duration_s)
        dark_ts = np.rint(rng.random(n_dark) * duration_s * PS_PER_S).astype(np.int64)
        dark_ch = np.full(n_dark, ch[0] if ch.size else 0, dtype=np.uint32)
        ts = np.concatenate([ts, dark_ts])
        ch = np.concatenate([ch, dark_ch])

    order = np.lexsort((ch, ts))
    ts, ch = ts[order], ch[order]

    if det.dead_time_ps > 0 and ts.size:
        keep = _dead_time_filter(ts, det.dead_time_ps)
        ts, ch = ts[keep], ch[keep]

    return TimeTagStream(ts, ch)


def apply_clock(stream: TimeTagStream, clock: ClockModel) -> TimeTagStream:
    """Map ideal timestamps to this clock's readings.

    reading = round(t * (1 + drift_ppb * 1e-9)) + offset_ps. With zero drift
    the mapping is an exact integer translation.
    """
    clock.validate()
    ts = stream.timestamps_ps
    offset = np.int64(clock.offset_ps)
    if clock.drift_ppb == 0.0:
        out = ts + offset
    else:
        scaled = np.rint(ts.astype(np.float64) * (1.0 + clock.drift_ppb * 1e-9))
        if np.any(np.abs(scaled) >= float(MAX_TIMESTAMP_PS)):
            raise OverflowError("clock transform overflows the 2**62 ps timestamp bound")
        out = scaled.astype(np.int64) + offset
    if out.size and int(np.abs(out).max()) >= MAX_TIMESTAMP_PS:
        raise OverflowError("clock transform overflows the 2**62 ps timestamp bound")
    return TimeTagStream(out, stream.channels)


# --- file formats --------------------------------------------------------
#
# Binary: little-endian 16-byte records (int64 timestamp_ps, uint32 channel,
# uint32 reserved == 0). CSV: header line "timestamp_ps,channel".

RECORD_DTYPE = np.dtype([("timestamp_ps", "<i8"), ("channel", "<u4"), ("reserved", "<u4")])


def _atomic_write_bytes(path, payload: bytes):
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_tags_binary(stream: TimeTagStream, path):
    rec = np.zeros(len(stream), dtype=RECORD_DTYPE)
    rec["timestamp_ps"] = stream.timestamps_ps
    rec["channel"] = stream.channels
    _atomic_write_bytes(path, rec.tobytes())


def read_tags_binary(path) -> TimeTagStream:
    with open(path, "rb") as fh:
        payload = fh.read()
    if len(payload) % RECORD_DTYPE.itemsize:
        offset = len(payload) - len(payload) % RECORD_DTYPE.itemsize
        raise StreamFormatError(f"truncated record at byte offset {offset} in {path}")
    rec = np.frombuffer(payload, dtype=RECORD_DTYPE)
    return TimeTagStream(rec["timestamp_ps"].copy(), rec["channel"].copy())


def write_tags_csv(stream: TimeTagStream, path):
    lines = ["timestamp_ps,channel"]
    lines.extend(f"{int(t)},{int(c)}" for t, c in zip(stream.timestamps_ps, stream.channels))
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def read_tags_csv(path) -> TimeTagStream:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "timestamp_ps,channel":
            raise StreamFormatError(f"bad CSV header at line 1 in {path}: {header!r}")
        ts, ch = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                ts.append(int(parts[0]))
                ch.append(int(parts[1]))
            except (IndexError, ValueError):
                raise StreamFormatError(f"malformed record at line {lineno} in {path}: {line!r}")
    return TimeTagStream(
        np.asarray(ts, dtype=np.int64), np.asarray(ch, dtype=np.uint32)
    )


def read_tags(path) -> TimeTagStream:
    """Dispatch on extension: .csv is text, anything else is the binary format."""
    if str(path).lower().endswith(".csv"):
        return read_tags_csv(path)
    return read_tags_binary(path)
