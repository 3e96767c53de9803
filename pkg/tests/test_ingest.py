import numpy as np
import pytest

from hvacdisagg.building import PointBinding, PointRole
from hvacdisagg.errors import IngestError
from hvacdisagg.ingest import (
    format_timestamp,
    parse_timestamp,
    read_reference_year,
    read_trends,
    write_reference_year,
    write_trends,
)
from hvacdisagg.timeseries import TimeSeries, Unit

GRID = 900
T0 = 1_750_000_000 // GRID * GRID


def binding_for(points):
    """points: list of (equip, role, point_id, unit)"""
    return PointBinding(
        bindings={(e, r): pid for e, r, pid, _ in points},
        unresolved=(),
        units={pid: u for _, _, pid, u in points},
    )


class TestTimestamps:
    def test_offset_becomes_utc_epoch(self):
        # 00:15 at UTC-7 is 07:15 UTC
        a = parse_timestamp("2015-06-01T00:15:00-07:00")
        b = parse_timestamp("2015-06-01T07:15:00+00:00")
        assert a == b

    def test_zulu_suffix(self):
        assert parse_timestamp("2015-06-01T07:15:00Z") == parse_timestamp(
            "2015-06-01T07:15:00+00:00"
        )

    def test_naive_rejected(self):
        with pytest.raises(ValueError, match="offset"):
            parse_timestamp("2015-06-01T07:15:00")

    def test_format_round_trip(self):
        assert parse_timestamp(format_timestamp(T0)) == T0


class TestReadTrends:
    def test_basic_read_and_grid(self, tmp_path):
        p = tmp_path / "t.csv"
        rows = ["timestamp,point,value"]
        for i, v in enumerate([55.2, 55.4, 55.6]):
            rows.append(f"{format_timestamp(T0 + i * GRID)},AH1.SAT,{v}")
        p.write_text("\n".join(rows) + "\n")
        b = binding_for([("AH1", PointRole.AHU_SUPPLY_AIR_TEMP, "AH1.SAT", Unit.DEG_F)])
        series, stats = read_trends(str(p), b)
        s = series[("AH1", PointRole.AHU_SUPPLY_AIR_TEMP)]
        assert s.start == T0
        np.testing.assert_allclose(s.values, [55.2, 55.4, 55.6])
        assert stats.rows == 3 and stats.skipped == 0

    def test_subinterval_samples_averaged(self, tmp_path):
        p = tmp_path / "t.csv"
        rows = ["timestamp,point,value"]
        for i, v in enumerate([1, 3, 5, 7, 9, 11]):
            rows.append(f"{format_timestamp(T0 + i * 300)},P,{v}")
        p.write_text("\n".join(rows) + "\n")
        b = binding_for([("V1", PointRole.ZONE_TEMP, "P", Unit.DEG_F)])
        series, _ = read_trends(str(p), b)
        np.testing.assert_allclose(series[("V1", PointRole.ZONE_TEMP)].values, [3.0, 9.0])

    def test_percent_normalized_to_fraction(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(
            "timestamp,point,value\n"
            f"{format_timestamp(T0)},D,35.0\n"
            f"{format_timestamp(T0 + GRID)},D,100.0\n"
        )
        b = binding_for([("AH1", PointRole.ECONOMIZER_DAMPER_POS, "D", Unit.PERCENT)])
        series, _ = read_trends(str(p), b)
        s = series[("AH1", PointRole.ECONOMIZER_DAMPER_POS)]
        np.testing.assert_allclose(s.values, [0.35, 1.0])
        assert s.unit is Unit.FRACTION

    def test_bool_coerced_last_wins_in_bucket(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(
            "timestamp,point,value\n"
            f"{format_timestamp(T0)},OCC,0\n"
            f"{format_timestamp(T0 + 60)},OCC,3.0\n"
            f"{format_timestamp(T0 + GRID)},OCC,0\n"
        )
        b = binding_for([("V1", PointRole.OCCUPIED_CMD, "OCC", Unit.BOOL)])
        series, _ = read_trends(str(p), b)
        np.testing.assert_array_equal(series[("V1", PointRole.OCCUPIED_CMD)].values, [1.0, 0.0])

    def test_duplicate_timestamp_last_occurrence_wins(self, tmp_path):
        p = tmp_path / "t.csv"
        ts = format_timestamp(T0)
        p.write_text(f"timestamp,point,value\n{ts},P,1.0\n{ts},P,2.0\n")
        b = binding_for([("V1", PointRole.ZONE_TEMP, "P", Unit.DEG_F)])
        series, stats = read_trends(str(p), b)
        assert series[("V1", PointRole.ZONE_TEMP)].values[0] == 2.0
        assert stats.duplicates == 1

    def test_gaps_stay_gaps(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(
            "timestamp,point,value\n"
            f"{format_timestamp(T0)},P,1.0\n"
            f"{format_timestamp(T0 + 3 * GRID)},P,4.0\n"
        )
        b = binding_for([("V1", PointRole.ZONE_TEMP, "P", Unit.DEG_F)])
        series, _ = read_trends(str(p), b)
        vals = series[("V1", PointRole.ZONE_TEMP)].values
        assert len(vals) == 4
        assert np.isnan(vals[1]) and np.isnan(vals[2])

    def test_unknown_points_counted(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(
            "timestamp,point,value\n"
            f"{format_timestamp(T0)},KNOWN,1.0\n"
            f"{format_timestamp(T0)},MYSTERY,9.9\n"
        )
        b = binding_for([("V1", PointRole.ZONE_TEMP, "KNOWN", Unit.DEG_F)])
        _, stats = read_trends(str(p), b)
        assert stats.unknown_points == 1

    def test_lenient_skips_bad_rows(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(
            "timestamp,point,value\n"
            f"not-a-time,P,1.0\n"
            f"{format_timestamp(T0)},P,not-a-number\n"
            f"{format_timestamp(T0)},P,2.5\n"
        )
        b = binding_for([("V1", PointRole.ZONE_TEMP, "P", Unit.DEG_F)])
        series, stats = read_trends(str(p), b)
        assert stats.skipped == 2
        assert series[("V1", PointRole.ZONE_TEMP)].values[0] == 2.5

    def test_strict_raises_with_line_number(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(f"timestamp,point,value\n{format_timestamp(T0)},P,oops\n")
        b = binding_for([("V1", PointRole.ZONE_TEMP, "P", Unit.DEG_F)])
        with pytest.raises(IngestError, match=":2:"):
            read_trends(str(p), b, strict=True)

    def test_missing_file_is_os_error(self):
        b = binding_for([("V1", PointRole.ZONE_TEMP, "P", Unit.DEG_F)])
        with pytest.raises(OSError):
            read_trends("/nonexistent/trends.csv", b)


class TestRoundTrip:
    def test_write_read_identity(self, tmp_path):
        rng = np.random.default_rng(5)
        vals = rng.normal(0.0, 50.0, 200)
        vals[rng.random(200) < 0.15] = np.nan
        original = TimeSeries("B1.P1", T0, GRID, Unit.DEG_F, vals)
        path = tmp_path / "out.csv"
        write_trends([original], str(path))
        b = binding_for([("V1", PointRole.ZONE_TEMP, "B1.P1", Unit.DEG_F)])
        series, _ = read_trends(str(path), b)
        got = series[("V1", PointRole.ZONE_TEMP)]
        assert got.start == original.start
        # trailing gaps cannot survive (no rows to mark them), interior ones must
        np.testing.assert_array_equal(got.values, original.values[: len(got.values)])

    def test_written_file_byte_stable(self, tmp_path):
        s1 = TimeSeries("A", T0, GRID, Unit.CFM, np.array([1.5, 2.5]))
        s2 = TimeSeries("B", T0, GRID, Unit.CFM, np.array([3.5]))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trends([s1, s2], str(p1))
        write_trends([s2, s1], str(p2))  # input order must not matter
        assert p1.read_bytes() == p2.read_bytes()

    def test_fraction_series_round_trips_exactly(self, tmp_path):
        vals = np.array([0.37, 0.123456789012345, 1.0, 0.0])
        original = TimeSeries("VLV", T0, GRID, Unit.FRACTION, vals)
        path = tmp_path / "v.csv"
        write_trends([original], str(path))
        b = binding_for([("AH1", PointRole.AHU_COOLING_VALVE_CMD, "VLV", Unit.FRACTION)])
        series, _ = read_trends(str(path), b)
        np.testing.assert_array_equal(
            series[("AH1", PointRole.AHU_COOLING_VALVE_CMD)].values, vals
        )


class TestReferenceYear:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        oat = rng.normal(55, 15, 365)
        p = tmp_path / "ref.csv"
        write_reference_year(oat, str(p))
        np.testing.assert_array_equal(read_reference_year(str(p)), oat)

    def test_incomplete_year_rejected(self, tmp_path):
        p = tmp_path / "ref.csv"
        p.write_text("day_of_year,oat_f\n1,50.0\n2,51.0\n")
        with pytest.raises(IngestError, match="incomplete"):
            read_reference_year(str(p))

    def test_out_of_range_day_rejected(self, tmp_path):
        p = tmp_path / "ref.csv"
        p.write_text("day_of_year,oat_f\n0,50.0\n")
        with pytest.raises(IngestError, match="out of range"):
            read_reference_year(str(p))
