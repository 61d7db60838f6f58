import io
import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from envclass.ingest import (
    DEFAULT_RANGES, CleaningSummary, GpsFix, IngestError, Label, LteObservation, NrObservation,
    ParseError, RawRecord, RecordingSession, SimOperator, WifiObservation, clean_record,
    dump_json_export, label_minutes, label_shares, load_dataset, make_session, parse_json_export,
    parse_timestamp, read_dataset_csv, read_labels, write_dataset_csv,
)

DOCS = Path(__file__).resolve().parents[1] / "docs"
T0 = datetime(2024, 3, 1, 12, 0, tzinfo=timezone.utc)


def entry(**kw):
    base = {
        "timestamp": "2024-03-01T12:00:00Z",
        "sim": "Verizon",
        "gps": {"longitude_deg": -86.2, "latitude_deg": 41.7, "altitude_m": 220.0,
                "horizontal_accuracy_m": 5.0, "vertical_accuracy_m": 8.0},
        "lte": [{"pci": 1, "frequency_khz": 739000, "rsrp_dbm": -100.0, "rsrq_db": -12.0, "rssi_dbm": -70.0},
                {"pci": 2, "frequency_khz": 2132500, "rsrp_dbm": -95.0, "rsrq_db": -10.0}],
        "nr": [],
        "wifi": [{"bssid": f"ap{i}", "frequency_mhz": 5180, "rssi_dbm": -60.0 - i} for i in range(5)],
    }
    base.update(kw)
    return base


def rec(i=0, **kw):
    fields = dict(timestamp=T0 + timedelta(seconds=5 * i),
                  wifi=(WifiObservation("a", 2437, -60.0),), sim_operator=SimOperator.VERIZON)
    fields.update(kw)
    return RawRecord(**fields)


class TestParse:
    def test_counts_pass_through(self):
        [r] = parse_json_export(json.dumps([entry()]))
        assert len(r.lte) == 2 and len(r.wifi) == 5 and r.gps is not None
        assert r.timestamp == T0
        assert r.sim_operator is SimOperator.VERIZON

    def test_null_wifi_frequency_drops_that_observation(self):
        e = entry()
        e["wifi"][2]["frequency_mhz"] = None
        [r] = parse_json_export(json.dumps([e]))
        assert len(r.wifi) == 4
        assert "ap2" not in {o.bssid for o in r.wifi}

    @pytest.mark.parametrize("doc", ["", "   ", b"", "[]"])
    def test_empty_document(self, doc):
        assert parse_json_export(doc) == []

    def test_malformed_json_reports_byte_offset(self):
        text = '[{"timestamp": "2024-03-01T12:00:00Z"}, {"timestamp": }]'
        with pytest.raises(ParseError) as exc:
            parse_json_export(text.encode())
        assert exc.value.offset == text.index("}]")

    def test_offset_counts_bytes_not_characters(self):
        text = '[{"device": "é", "x": ]'
        with pytest.raises(ParseError) as exc:
            parse_json_export(text)
        assert exc.value.offset == len(text[:text.index("]")].encode())

    def test_top_level_must_be_array(self):
        with pytest.raises(ParseError):
            parse_json_export('{"timestamp": "x"}')

    def test_entry_without_timestamp_is_rejected_not_fatal(self):
        rejects = []
        records = parse_json_export(json.dumps([entry(), {"lte": []}, 5]), rejects)
        assert len(records) == 1
        assert [r.index for r in rejects] == [1, 2]

    def test_documented_example_parses(self):
        records = parse_json_export((DOCS / "example_export.json").read_bytes())
        assert len(records) == 2
        assert records[1].gps is None
        assert all(clean_record(r) is r for r in records)

    @pytest.mark.parametrize("raw, want", [
        ("Verizon", SimOperator.VERIZON), ("AT&T", SimOperator.ATT), ("T-Mobile", SimOperator.TMOBILE),
        ("tmobile", SimOperator.TMOBILE), ("Mint", SimOperator.UNKNOWN), (None, SimOperator.UNKNOWN),
    ])
    def test_sim_aliases(self, raw, want):
        assert SimOperator.parse(raw) is want

    def test_naive_timestamp_is_utc(self):
        assert parse_timestamp("2024-03-01T12:00:00") == T0
        assert parse_timestamp("2024-03-01T13:00:00+01:00") == T0

    def test_json_round_trip(self):
        records = parse_json_export((DOCS / "example_export.json").read_bytes())
        assert parse_json_export(dump_json_export(records)) == records


class TestClean:
    def test_rsrp_below_floor_removed(self):
        r = rec(lte=(LteObservation(1, 739000, -150.0, -10.0), LteObservation(2, 739000, -100.0, -10.0)))
        summary = CleaningSummary()
        out = clean_record(r, DEFAULT_RANGES, summary)
        assert [o.pci for o in out.lte] == [2]
        assert summary.lte_dropped == 1

    def test_range_endpoints_are_valid(self):
        r = rec(lte=(LteObservation(1, 739000, -140.0, 3.0), LteObservation(2, 739000, -20.0, -34.0)))
        assert clean_record(r) is r

    def test_single_valid_ap_retained(self):
        r = rec()
        assert clean_record(r) is r

    def test_all_invalid_record_absent(self):
        r = rec(wifi=(WifiObservation("a", 2437, -120.0),), nr=(NrObservation(1, 3700020, -100.0, -10.0, 99.0),))
        summary = CleaningSummary()
        assert clean_record(r, DEFAULT_RANGES, summary) is None
        assert summary.records_dropped == 1

    def test_invalid_gps_becomes_missing(self):
        r = rec(gps=GpsFix(-86.0, 41.0, 200.0, 0.0, 5.0))
        assert clean_record(r).gps is None

    @given(st.lists(st.floats(-200, 50, allow_nan=False), max_size=6),
           st.lists(st.floats(-150, 10, allow_nan=False), max_size=6))
    def test_idempotent(self, rsrps, rssis):
        r = rec(lte=tuple(LteObservation(i, 739000, v, -10.0) for i, v in enumerate(rsrps)),
                wifi=tuple(WifiObservation(str(i), 5180, v) for i, v in enumerate(rssis)))
        once = clean_record(r)
        if once is None:
            return
        assert clean_record(once) == once
        for o in once.lte:
            assert -140.0 <= o.rsrp_dbm <= -20.0
        for o in once.wifi:
            assert -100.0 <= o.rssi_dbm <= 0.0


class TestSessions:
    def test_twelve_records_make_one_minute(self):
        s = make_session("s", [rec(i) for i in range(12)], Label.O)
        assert s.minutes == pytest.approx(1.0)

    def test_sorting_and_duplicates(self):
        records = [rec(2), rec(0), rec(1), rec(1)]
        s = make_session("s", records, Label.O)
        assert [r.timestamp for r in s.records] == [T0 + timedelta(seconds=5 * i) for i in range(3)]
        assert all(r.label is Label.O for r in s.records)

    def test_label_shares(self):
        sessions = [RecordingSession("a", tuple(rec(i) for i in range(12)), Label.O),
                    RecordingSession("b", tuple(rec(i) for i in range(36)), Label.II)]
        assert label_minutes(sessions) == {Label.O: pytest.approx(1.0), Label.II: pytest.approx(3.0)}
        assert label_shares(sessions)[Label.O] == pytest.approx(0.25)


class TestLoadDataset:
    def _write(self, tmp_path, name, entries):
        p = tmp_path / name
        p.write_text(json.dumps(entries))
        return p

    def test_labels_and_dataset(self, tmp_path):
        a = self._write(tmp_path, "a.json", [entry(timestamp=f"2024-03-01T12:00:{5 * i:02d}Z") for i in range(4)])
        b = self._write(tmp_path, "b.json", [entry(sim="Mint")])
        (tmp_path / "labels.csv").write_text("path,label,location\na.json,O,yard\nb.json,II,\n")
        labels = read_labels(tmp_path / "labels.csv")
        sessions = load_dataset([a, b], labels)
        by_id = {s.id: s for s in sessions}
        assert len(by_id["a"].records) == 4 and by_id["a"].location_tag == "yard"
        assert by_id["b"].records == ()  # unknown carrier dropped
        assert len(load_dataset([b], labels, include_unknown_sim=True)[0].records) == 1

    def test_file_labeled_twice_is_an_error(self, tmp_path):
        (tmp_path / "labels.csv").write_text("path,label\na.json,O\na.json,II\n")
        with pytest.raises(IngestError, match="conflicting"):
            read_labels(tmp_path / "labels.csv")

    def test_record_label_conflicting_with_file(self, tmp_path):
        a = self._write(tmp_path, "a.json", [entry(label="II")])
        with pytest.raises(IngestError):
            load_dataset([a], {str(a): Label.O})

    def test_unlabeled_file(self, tmp_path):
        a = self._write(tmp_path, "a.json", [entry()])
        with pytest.raises(IngestError, match="no label"):
            load_dataset([a], {})


class TestTabular:
    def test_round_trip(self, small_sessions):
        buf = io.StringIO()
        write_dataset_csv(small_sessions, buf)
        buf.seek(0)
        back = read_dataset_csv(buf)
        assert back == small_sessions

    def test_optional_fields_round_trip(self):
        s = RecordingSession("x", (rec(0, lte=(LteObservation(3, 739000, -90.5, -9.5),), gps=None,
                                        device="dev;ice", label=Label.INW),), Label.INW, "loc")
        buf = io.StringIO()
        write_dataset_csv([s], buf)
        buf.seek(0)
        assert read_dataset_csv(buf) == [s]

    def test_missing_column(self):
        with pytest.raises(ParseError):
            read_dataset_csv(io.StringIO("session_id,label\nx,O\n"))
