import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridhom.errors import ContractError, MissingChannelError, SchemaMismatchError, UnsortedFileError
from hybridhom.tagfile import HEADER, RECORD, decode, encode, read_tagfile, write_tagfile
from hybridhom.tags import MAX_TIME_PS, TagStream, concat_sorted, merge


times_lists = st.lists(st.integers(min_value=0, max_value=2**62), max_size=200)


def test_from_unsorted_sorts_and_keeps_origin():
    s = TagStream.from_unsorted([5, 1, 3], 2, origin=[0, 1, 2])
    assert s.times.tolist() == [1, 3, 5]
    assert s.origin.tolist() == [1, 2, 0]
    assert s.channel == 2


def test_times_are_read_only():
    s = TagStream(np.array([1, 2, 3]))
    with pytest.raises(ValueError):
        s.times[0] = 9


def test_check_sorted_rejects_unsorted():
    with pytest.raises(ContractError):
        TagStream(np.array([3, 1])).check_sorted()


def test_merge_and_concat():
    a = TagStream(np.array([1, 10]), 0)
    b = TagStream(np.array([5]), 1)
    assert merge(a, b, channel=3).times.tolist() == [1, 5, 10]
    joined = concat_sorted([a, b.shifted(100)], channel=4)
    assert joined.times.tolist() == [1, 10, 105]
    with pytest.raises(ContractError):
        concat_sorted([b, a])


def test_rate_hz():
    s = TagStream(np.arange(1000))
    assert s.rate_hz(10**12) == pytest.approx(1000.0)
    assert s.rate_hz(0) == 0.0


def test_max_time_constant():
    assert MAX_TIME_PS == np.iinfo(np.int64).max


@settings(max_examples=50, deadline=None)
@given(times_lists, times_lists, st.integers(min_value=0, max_value=2**63 - 1))
def test_round_trip_reproduces_streams(t0, t1, duration):
    streams = [TagStream.from_unsorted(t0, 0), TagStream.from_unsorted(t1, 1)]
    dur, count, back = decode(encode(streams, duration))
    assert dur == duration
    assert count == 2
    for s in streams:
        np.testing.assert_array_equal(back[s.channel].times, s.times)


def test_file_round_trip(tmp_path):
    s = TagStream(np.array([0, 7, 7, 2**40]), 3)
    path = tmp_path / "x.ptag"
    write_tagfile(path, s, 2**41, 4)
    dur, back = read_tagfile(path, 3)
    assert dur == 2**41
    np.testing.assert_array_equal(back.times, s.times)
    assert path.stat().st_size == HEADER.size + 4 * RECORD.itemsize


def test_empty_file_is_valid(tmp_path):
    path = tmp_path / "e.ptag"
    write_tagfile(path, TagStream.empty(0), 0, 1)
    dur, streams = read_tagfile(path)
    assert dur == 0 and len(streams[0]) == 0


def test_missing_channel(tmp_path):
    path = tmp_path / "m.ptag"
    write_tagfile(path, TagStream(np.array([1]), 0), 10, 1)
    with pytest.raises(MissingChannelError):
        read_tagfile(path, 5)


def test_unsorted_file_detected():
    rec = np.zeros(2, dtype=RECORD)
    rec["time"] = [10, 5]
    data = HEADER.pack(b"PTAG", 1, 1, 100) + rec.tobytes()
    with pytest.raises(UnsortedFileError, match="record 1"):
        decode(data)


@pytest.mark.parametrize(
    "data, message",
    [
        (b"PT", "shorter"),
        (HEADER.pack(b"XXXX", 1, 1, 0), "magic"),
        (HEADER.pack(b"PTAG", 9, 1, 0), "version"),
        (HEADER.pack(b"PTAG", 1, 1, 0) + b"\0" * 5, "truncated"),
    ],
)
def test_schema_mismatch(data, message):
    with pytest.raises(SchemaMismatchError, match=message):
        decode(data)


def test_undeclared_channel_rejected():
    rec = np.zeros(1, dtype=RECORD)
    rec["channel"] = 4
    with pytest.raises(SchemaMismatchError, match="not declared"):
        decode(HEADER.pack(b"PTAG", 1, 2, 0) + rec.tobytes())


def test_encode_rejects_negative_times():
    with pytest.raises(SchemaMismatchError):
        encode([TagStream(np.array([-1]), 0)], 10)


def test_distinct_error_kinds_are_distinct():
    assert len({MissingChannelError, UnsortedFileError, SchemaMismatchError}) == 3
    assert not issubclass(MissingChannelError, SchemaMismatchError)
