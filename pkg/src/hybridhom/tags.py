"""Time-tag streams: the common currency between every stage."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from hybridhom.errors import ContractError

TIME_DTYPE = np.int64
MAX_TIME_PS = np.iinfo(np.int64).max


class Origin(enum.IntEnum):
    """Diagnostic label of where a tag came from. Never read by analysis code."""

    SFWM_SIGNAL = 0
    SFWM_IDLER = 1
    QD = 2
    DARK = 3


@dataclass(frozen=True)
class TagStream:
    """Sorted detection (or emission) times on one channel.

    ``times`` holds integer picoseconds since run start. ``origin`` is an
    optional per-tag :class:`Origin` array kept for debugging only.
    """

    times: np.ndarray
    channel: int = 0
    origin: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=TIME_DTYPE)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        if self.origin is not None:
            origin = np.ascontiguousarray(self.origin, dtype=np.uint8)
            if origin.shape != times.shape:
                raise ContractError("origin array must match times in length")
            origin.setflags(write=False)
            object.__setattr__(self, "origin", origin)

    def __len__(self):
        return self.times.size

    @classmethod
    def empty(cls, channel=0):
        return cls(np.empty(0, dtype=TIME_DTYPE), channel, np.empty(0, dtype=np.uint8))

    @classmethod
    def from_unsorted(cls, times, channel=0, origin=None):
        times = np.asarray(times, dtype=TIME_DTYPE)
        order = np.argsort(times, kind="stable")
        if origin is not None:
            origin = np.asarray(origin)[order]
        return cls(times[order], channel, origin)

    def is_sorted(self):
        return bool(np.all(np.diff(self.times) >= 0))

    def check_sorted(self, name="stream"):
        if not self.is_sorted():
            raise ContractError(f"{name} is not sorted in time")

    def stripped(self):
        """Copy without the diagnostic origin labels."""
        return TagStream(self.times, self.channel, None)

    def with_channel(self, channel):
        return TagStream(self.times, channel, self.origin)

    def shifted(self, offset_ps):
        return TagStream(self.times + TIME_DTYPE(offset_ps), self.channel, self.origin)

    def select(self, mask):
        origin = None if self.origin is None else self.origin[mask]
        return TagStream(self.times[mask], self.channel, origin)

    def rate_hz(self, duration_ps):
        if duration_ps <= 0:
            return 0.0
        return len(self) / (duration_ps * 1e-12)


def as_times(stream):
    """Return the int64 time array of a stream or array-like."""
    if isinstance(stream, TagStream):
        return stream.times
    return np.ascontiguousarray(stream, dtype=TIME_DTYPE)


def merge(*streams, channel=0):
    """Merge several streams into one sorted stream."""
    if not streams:
        return TagStream.empty(channel)
    times = np.concatenate([s.times for s in streams])
    if all(s.origin is not None for s in streams):
        origin = np.concatenate([s.origin for s in streams])
    else:
        origin = None
    return TagStream.from_unsorted(times, channel, origin)


def concat_sorted(chunks, channel=0):
    """Join streams that cover consecutive, non-overlapping time spans."""
    if not chunks:
        return TagStream.empty(channel)
    times = np.concatenate([c.times for c in chunks])
    if all(c.origin is not None for c in chunks):
        origin = np.concatenate([c.origin for c in chunks])
    else:
        origin = None
    out = TagStream(times, channel, origin)
    out.check_sorted("concatenated stream")
    return out
