"""Binary time-tag files.

Layout (little-endian): ``b"PTAG"``, version u16, channel count u16,
duration_ps u64, then 12-byte records ``(time_ps u64, channel u32)`` sorted
by time.
"""

from __future__ import annotations

import struct

import numpy as np

from hybridhom.errors import MissingChannelError, SchemaMismatchError, UnsortedFileError
from hybridhom.tags import TIME_DTYPE, TagStream

MAGIC = b"PTAG"
VERSION = 1
HEADER = struct.Struct("<4sHHQ")
RECORD = np.dtype([("time", "<u8"), ("channel", "<u4")])


def encode(streams, duration_ps, channel_count=None):
    streams = list(streams)
    channels = [s.channel for s in streams]
    if channel_count is None:
        channel_count = max(channels, default=-1) + 1
    if any(c < 0 or c >= channel_count for c in channels):
        raise SchemaMismatchError("stream channel outside the declared channel count")
    n = sum(len(s) for s in streams)
    rec = np.empty(n, dtype=RECORD)
    if n:
        times = np.concatenate([s.times for s in streams])
        chans = np.concatenate([np.full(len(s), s.channel, dtype=np.uint32) for s in streams])
        if times.min() < 0:
            raise SchemaMismatchError("negative times cannot be stored")
        order = np.lexsort((chans, times))
        rec["time"] = times[order]
        rec["channel"] = chans[order]
    return HEADER.pack(MAGIC, VERSION, channel_count, int(duration_ps)) + rec.tobytes()


def write_tagfile(path, streams, duration_ps, channel_count=None):
    if isinstance(streams, TagStream):
        streams = [streams]
    data = encode(streams, duration_ps, channel_count)
    with open(path, "wb") as fh:
        fh.write(data)


def decode(data, name="<bytes>"):
    """Parse file bytes into ``(duration_ps, channel_count, {channel: TagStream})``."""
    if len(data) < HEADER.size:
        raise SchemaMismatchError(f"{name}: file shorter than the header")
    magic, version, count, duration = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SchemaMismatchError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise SchemaMismatchError(f"{name}: unsupported version {version}")
    body = len(data) - HEADER.size
    if body % RECORD.itemsize:
        raise SchemaMismatchError(f"{name}: truncated record ({body} bytes after header)")
    rec = np.frombuffer(data, dtype=RECORD, offset=HEADER.size)
    times = rec["time"]
    if times.size and times.max() > np.iinfo(np.int64).max:
        raise SchemaMismatchError(f"{name}: time exceeds the signed 64-bit range")
    times = times.astype(TIME_DTYPE)
    chans = rec["channel"]
    if times.size > 1:
        bad = np.flatnonzero(np.diff(times) < 0)
        if bad.size:
            raise UnsortedFileError(f"{name}: record {bad[0] + 1} goes back in time")
    if chans.size and int(chans.max()) >= count:
        raise SchemaMismatchError(f"{name}: channel {int(chans.max())} not declared (count {count})")
    streams = {}
    for c in range(count):
        streams[c] = TagStream(times[chans == c], c)
    return int(duration), int(count), streams


def read_tagfile(path, channel=None):
    """Read a tag file. With ``channel`` given, return just that stream."""
    with open(path, "rb") as fh:
        data = fh.read()
    duration, count, streams = decode(data, str(path))
    if channel is None:
        return duration, streams
    if channel not in streams:
        raise MissingChannelError(f"{path}: channel {channel} not present (file declares {count})")
    return duration, streams[channel]
