import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from telemafuse.errors import EmptyInputError, ParseError, ValidationError
from telemafuse.ingest import (CHANNELS, HEADER, BinaryLabel, TripStream, downsample_to_1hz,
                               parse_trip_csv, validate_stream, write_trip_csv)

from conftest import make_stream


def _row(trip, driver, g, t, speed=50.0, heading=90.0):
    return f"{trip},{driver},{g},{t},{speed},0.1,0.2,0.0,0.0,0.0,{heading}"


def _write(tmp_path, rows, header=",".join(HEADER)):
    p = tmp_path / "trips.csv"
    p.write_text("\n".join([header, *rows]) + "\n")
    return p


def test_two_trips_thirty_rows_each(tmp_path):
    rows = [_row("A", "D1", "M", i / 15) for i in range(30)]
    rows += [_row("B", "D2", "F", i / 15) for i in range(30)]
    trips = parse_trip_csv(_write(tmp_path, rows))
    assert [s.trip_id for s in trips] == ["A", "B"]
    assert [len(s) for s in trips] == [30, 30]
    assert trips[1].label is BinaryLabel.FEMALE
    assert trips[0].rate_hz == 15


def test_heading_360_is_rejected(tmp_path):
    rows = [_row("A", "D1", "M", 0), _row("A", "D1", "M", 1, heading=360.0)]
    with pytest.raises(ParseError, match="line 3"):
        parse_trip_csv(_write(tmp_path, rows))


def test_duplicate_timestamps_name_the_trip(tmp_path):
    rows = [_row("trip-42", "D1", "M", t) for t in (0, 1, 1, 2)]
    with pytest.raises(ValidationError, match="trip-42"):
        parse_trip_csv(_write(tmp_path, rows))


@pytest.mark.parametrize("rows, header, exc", [
    ([], None, EmptyInputError),
    (["A,D1,M,0,1,2"], None, ParseError),
    ([_row("A", "D1", "X", 0)], None, ParseError),
    ([_row("A", "D1", "M", 0, speed="fast")], None, ParseError),
    ([_row("A", "D1", "M", -1)], None, ParseError),
    ([_row("A", "D1", "M", 0), _row("A", "D2", "M", 1)], None, ParseError),
    ([_row("A", "D1", "M", 0)], "trip,driver", ParseError),
])
def test_malformed_inputs(tmp_path, rows, header, exc):
    kw = {} if header is None else {"header": header}
    with pytest.raises(exc):
        parse_trip_csv(_write(tmp_path, rows, **kw))


def test_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(EmptyInputError):
        parse_trip_csv(p)


def test_unknown_label_is_allowed(tmp_path):
    trips = parse_trip_csv(_write(tmp_path, [_row("A", "D1", "?", 0), _row("A", "D1", "?", 1)]))
    assert trips[0].label is None


def test_write_then_parse_is_exact(tmp_path):
    streams = [make_stream(40, rate=15, trip="X", seed=1),
               make_stream(20, rate=15, trip="Y", driver="D2", label=BinaryLabel.FEMALE, seed=2)]
    p = tmp_path / "rt.csv"
    write_trip_csv(streams, p)
    back = parse_trip_csv(p)
    for a, b in zip(streams, back):
        assert a.trip_id == b.trip_id and a.label == b.label
        np.testing.assert_array_equal(a.t, b.t)
        np.testing.assert_array_equal(a.values, b.values)


def test_downsample_constant_second():
    s = make_stream(15, rate=15)
    s.values[:, 0] = 50.0
    out = downsample_to_1hz(s)
    assert len(out) == 1
    assert out.values[0, 0] == 50.0
    assert out.rate_hz == 1


def test_downsample_circular_heading():
    s = make_stream(2, rate=2)
    s.values[:, 6] = [350.0, 10.0]
    out = downsample_to_1hz(s)
    # unit-vector mean computed directly
    ang = np.deg2rad([350.0, 10.0])
    expected = math.degrees(math.atan2(np.sin(ang).mean(), np.cos(ang).mean()))
    gap = (out.values[0, 6] - expected + 180.0) % 360.0 - 180.0
    assert abs(gap) < 1e-9
    assert out.values[0, 6] == pytest.approx(0.0, abs=1e-9)
    assert 0.0 <= out.values[0, 6] < 360.0


def test_downsample_bucket_count():
    assert len(downsample_to_1hz(make_stream(45, rate=15))) == 3


def test_downsample_matches_bucket_oracle():
    s = make_stream(15 * 7 + 4, rate=15, seed=3)
    out = downsample_to_1hz(s)
    for k in range(len(out)):
        mask = np.floor(s.t) == k
        np.testing.assert_allclose(out.values[k, :6], s.values[mask, :6].mean(axis=0), rtol=1e-12)


def test_downsample_too_short():
    with pytest.raises(EmptyInputError):
        downsample_to_1hz(make_stream(3, rate=15))


def test_downsample_already_1hz_is_identity():
    s = make_stream(10, rate=1)
    assert downsample_to_1hz(s) is s


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 359.999, allow_nan=False), min_size=1, max_size=15))
def test_downsampled_heading_in_range(headings):
    s = make_stream(15, rate=15)
    s.values[:len(headings), 6] = headings
    out = downsample_to_1hz(s)
    assert ((out.values[:, 6] >= 0) & (out.values[:, 6] < 360)).all()


def test_validate_clean():
    assert validate_stream(make_stream(30)).ok


def test_validate_nan_at_index_7():
    s = make_stream(30)
    s.values[7, CHANNELS.index("accel_x")] = np.nan
    rep = validate_stream(s)
    assert [(v.index, v.channel) for v in rep.violations] == [(7, "accel_x")]


def test_validate_negative_speed():
    s = make_stream(30)
    s.values[2, 0] = -3.0
    rep = validate_stream(s)
    assert len(rep.violations) == 1
    assert rep.violations[0].kind == "negative speed"
    assert rep.violations[0].index == 2


def test_validate_does_not_modify():
    s = make_stream(30)
    s.values[4, 0] = -1.0
    before = s.values.copy()
    validate_stream(s)
    np.testing.assert_array_equal(s.values, before)


def test_label_codes():
    assert BinaryLabel.from_code("M") is BinaryLabel.MALE
    assert BinaryLabel.from_code("F").text == "female"
    assert BinaryLabel.from_code("?") is None
    with pytest.raises(ValueError):
        BinaryLabel.from_code("x")
