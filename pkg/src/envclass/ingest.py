"""Parsing, validation and cleaning of raw measurement records.

Two on-disk formats are understood: the JSON export (one array of record
objects, see ``docs/json_schema.md``) and the tabular CSV interchange format
(one row per record, see ``docs/tabular_format.md``).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

SAMPLE_PERIOD_S = 5.0


class IngestError(Exception):
    """Raised for unrecoverable input problems (bad files, label conflicts)."""


class ParseError(IngestError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class Label(str, Enum):
    O = "O"
    II = "II"
    INW = "INW"
    # merged indoor class used by two-class classification
    I = "I"  # noqa: E741


class SimOperator(str, Enum):
    VERIZON = "Verizon"
    ATT = "ATT"
    TMOBILE = "TMobile"
    UNKNOWN = "Unknown"

    @classmethod
    def parse(cls, value: str | None) -> "SimOperator":
        if not value:
            return cls.UNKNOWN
        key = "".join(ch for ch in value.lower() if ch.isalnum())
        return _SIM_ALIASES.get(key, cls.UNKNOWN)


_SIM_ALIASES = {
    "verizon": SimOperator.VERIZON,
    "verizonwireless": SimOperator.VERIZON,
    "att": SimOperator.ATT,
    "attt": SimOperator.ATT,
    "tmobile": SimOperator.TMOBILE,
    "tmobileus": SimOperator.TMOBILE,
}


@dataclass(frozen=True)
class LteObservation:
    pci: int
    frequency_khz: int
    rsrp_dbm: float
    rsrq_db: float
    bandwidth_khz: int | None = None
    band_number: int | None = None
    rssi_dbm: float | None = None


@dataclass(frozen=True)
class NrObservation:
    pci: int
    frequency_khz: int
    rsrp_dbm: float
    rsrq_db: float
    sinr_db: float


@dataclass(frozen=True)
class WifiObservation:
    bssid: str
    frequency_mhz: int
    rssi_dbm: float
    bandwidth_mhz: int | None = None


@dataclass(frozen=True)
class GpsFix:
    longitude_deg: float
    latitude_deg: float
    altitude_m: float
    horizontal_accuracy_m: float
    vertical_accuracy_m: float


@dataclass(frozen=True)
class RawRecord:
    timestamp: datetime
    lte: tuple[LteObservation, ...] = ()
    nr: tuple[NrObservation, ...] = ()
    wifi: tuple[WifiObservation, ...] = ()
    gps: GpsFix | None = None
    sim_operator: SimOperator = SimOperator.UNKNOWN
    device: str | None = None
    label: Label | None = None

    def is_empty(self) -> bool:
        return not (self.lte or self.nr or self.wifi)


@dataclass(frozen=True)
class RecordingSession:
    id: str
    records: tuple[RawRecord, ...]
    label: Label | None = None
    location_tag: str = ""

    @property
    def minutes(self) -> float:
        return len(self.records) * SAMPLE_PERIOD_S / 60.0

    @property
    def sim_operator(self) -> SimOperator:
        return self.records[0].sim_operator if self.records else SimOperator.UNKNOWN

    def with_records(self, records: Iterable[RawRecord], label: Label | None = None) -> "RecordingSession":
        records = tuple(records)
        if label is not None:
            records = tuple(dataclasses.replace(r, label=label) for r in records)
        return dataclasses.replace(
            self, records=records, label=label if label is not None else self.label
        )


@dataclass(frozen=True)
class ValidityRanges:
    """Closed value ranges an observation must satisfy to survive cleaning."""

    rsrp_dbm: tuple[float, float] = (-140.0, -20.0)
    rsrq_db: tuple[float, float] = (-34.0, 3.0)
    lte_rssi_dbm: tuple[float, float] = (-120.0, -10.0)
    wifi_rssi_dbm: tuple[float, float] = (-100.0, 0.0)
    sinr_db: tuple[float, float] = (-23.0, 40.0)
    # lower bound is exclusive: accuracies must be strictly positive
    gps_accuracy_m: tuple[float, float] = (0.0, 10000.0)


DEFAULT_RANGES = ValidityRanges()


@dataclass
class CleaningSummary:
    lte_dropped: int = 0
    nr_dropped: int = 0
    wifi_dropped: int = 0
    gps_dropped: int = 0
    records_dropped: int = 0

    def merge(self, other: "CleaningSummary") -> None:
        for f in dataclasses.fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))


@dataclass
class Reject:
    index: int
    reason: str


def _within(value: float | None, bounds: tuple[float, float]) -> bool:
    return value is not None and bounds[0] <= value <= bounds[1]


def _valid_lte(obs: LteObservation, ranges: ValidityRanges) -> bool:
    if obs.frequency_khz <= 0:
        return False
    if not (_within(obs.rsrp_dbm, ranges.rsrp_dbm) and _within(obs.rsrq_db, ranges.rsrq_db)):
        return False
    return obs.rssi_dbm is None or _within(obs.rssi_dbm, ranges.lte_rssi_dbm)


def _valid_nr(obs: NrObservation, ranges: ValidityRanges) -> bool:
    return (
        obs.frequency_khz > 0
        and _within(obs.rsrp_dbm, ranges.rsrp_dbm)
        and _within(obs.rsrq_db, ranges.rsrq_db)
        and _within(obs.sinr_db, ranges.sinr_db)
    )


def _valid_wifi(obs: WifiObservation, ranges: ValidityRanges) -> bool:
    return obs.frequency_mhz > 0 and _within(obs.rssi_dbm, ranges.wifi_rssi_dbm)


def _valid_gps(gps: GpsFix, ranges: ValidityRanges) -> bool:
    lo, hi = ranges.gps_accuracy_m
    return (
        -90.0 <= gps.latitude_deg <= 90.0
        and -180.0 <= gps.longitude_deg <= 180.0
        and math.isfinite(gps.altitude_m)
        and lo < gps.horizontal_accuracy_m <= hi
        and lo < gps.vertical_accuracy_m <= hi
    )


def clean_record(
    record: RawRecord,
    ranges: ValidityRanges = DEFAULT_RANGES,
    summary: CleaningSummary | None = None,
) -> RawRecord | None:
    """Drop out-of-range observations and invalid GPS fixes.

    Returns ``None`` when no cellular or Wi-Fi observation survives. Drop
    counts are added to ``summary`` when one is given.
    """
    lte = tuple(o for o in record.lte if _valid_lte(o, ranges))
    nr = tuple(o for o in record.nr if _valid_nr(o, ranges))
    wifi = tuple(o for o in record.wifi if _valid_wifi(o, ranges))
    gps = record.gps if record.gps is not None and _valid_gps(record.gps, ranges) else None

    if summary is not None:
        summary.lte_dropped += len(record.lte) - len(lte)
        summary.nr_dropped += len(record.nr) - len(nr)
        summary.wifi_dropped += len(record.wifi) - len(wifi)
        summary.gps_dropped += int(record.gps is not None and gps is None)

    if not (lte or nr or wifi):
        if summary is not None:
            summary.records_dropped += 1
        return None
    if (
        len(lte) == len(record.lte)
        and len(nr) == len(record.nr)
        and len(wifi) == len(record.wifi)
        and gps is record.gps
    ):
        return record
    return dataclasses.replace(record, lte=lte, nr=nr, wifi=wifi, gps=gps)


# --------------------------------------------------------------------------
# JSON export
# --------------------------------------------------------------------------

def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 string; naive values are taken as UTC."""
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _opt_int(value) -> int | None:
    if value is None:
        return None
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return int(value)
    return int(value)


def _opt_float(value) -> float | None:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _build(cls, obj: Mapping, required: Sequence[str], ints: Sequence[str], optional_ints=(), optional_floats=()):
    """Build an observation; ``None`` when a required field is missing."""
    kwargs = {}
    for name in required:
        value = obj.get(name)
        if name in ints:
            value = _opt_int(value)
        elif name == "bssid":
            value = None if value is None else str(value)
        else:
            value = _opt_float(value)
        if value is None:
            return None
        kwargs[name] = value
    for name in optional_ints:
        kwargs[name] = _opt_int(obj.get(name))
    for name in optional_floats:
        kwargs[name] = _opt_float(obj.get(name))
    return cls(**kwargs)


def _lte_from(obj: Mapping) -> LteObservation | None:
    return _build(
        LteObservation, obj,
        required=("pci", "frequency_khz", "rsrp_dbm", "rsrq_db"),
        ints=("pci", "frequency_khz"),
        optional_ints=("bandwidth_khz", "band_number"),
        optional_floats=("rssi_dbm",),
    )


def _nr_from(obj: Mapping) -> NrObservation | None:
    return _build(
        NrObservation, obj,
        required=("pci", "frequency_khz", "rsrp_dbm", "rsrq_db", "sinr_db"),
        ints=("pci", "frequency_khz"),
    )


def _wifi_from(obj: Mapping) -> WifiObservation | None:
    return _build(
        WifiObservation, obj,
        required=("bssid", "frequency_mhz", "rssi_dbm"),
        ints=("frequency_mhz",),
        optional_ints=("bandwidth_mhz",),
    )


def _gps_from(obj: Mapping | None) -> GpsFix | None:
    if not obj:
        return None
    return _build(
        GpsFix, obj,
        required=("longitude_deg", "latitude_deg", "altitude_m",
                  "horizontal_accuracy_m", "vertical_accuracy_m"),
        ints=(),
    )


def _observations(entry: Mapping, key: str, builder) -> tuple:
    out = []
    for obj in entry.get(key) or ():
        if isinstance(obj, Mapping):
            obs = builder(obj)
            if obs is not None:
                out.append(obs)
    return tuple(out)


def record_from_json(entry: Mapping) -> RawRecord:
    """Build one record from a decoded JSON object.

    Raises ``ValueError`` if the timestamp is missing or unparseable.
    """
    ts = entry.get("timestamp")
    if not isinstance(ts, str) or not ts:
        raise ValueError("missing timestamp")
    label = entry.get("label")
    return RawRecord(
        timestamp=parse_timestamp(ts),
        lte=_observations(entry, "lte", _lte_from),
        nr=_observations(entry, "nr", _nr_from),
        wifi=_observations(entry, "wifi", _wifi_from),
        gps=_gps_from(entry.get("gps")),
        sim_operator=SimOperator.parse(entry.get("sim")),
        device=entry.get("device"),
        label=Label(label) if label else None,
    )


def parse_json_export(data: bytes | str, rejects: list[Reject] | None = None) -> list[RawRecord]:
    """Parse a JSON export into records.

    Observations with a missing mandatory field (e.g. a null frequency) are
    dropped; the record is kept. Entries that cannot become a record at all
    are appended to ``rejects``.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("input is not UTF-8", offset=exc.start) from exc
    else:
        text = data
    if not text.strip():
        return []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", offset=len(text[: exc.pos].encode("utf-8"))) from exc
    if not isinstance(doc, list):
        raise ParseError("top level must be an array", offset=0)

    records = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, Mapping):
            if rejects is not None:
                rejects.append(Reject(i, "entry is not an object"))
            continue
        try:
            records.append(record_from_json(entry))
        except ValueError as exc:
            if rejects is not None:
                rejects.append(Reject(i, str(exc)))
    return records


def record_to_json(record: RawRecord) -> dict:
    def obs(o):
        return {k: v for k, v in dataclasses.asdict(o).items() if v is not None}

    out = {
        "timestamp": format_timestamp(record.timestamp),
        "lte": [obs(o) for o in record.lte],
        "nr": [obs(o) for o in record.nr],
        "wifi": [obs(o) for o in record.wifi],
        "sim": record.sim_operator.value,
    }
    if record.gps is not None:
        out["gps"] = dataclasses.asdict(record.gps)
    if record.device is not None:
        out["device"] = record.device
    if record.label is not None:
        out["label"] = record.label.value
    return out


def dump_json_export(records: Iterable[RawRecord]) -> str:
    return json.dumps([record_to_json(r) for r in records], indent=1)


# --------------------------------------------------------------------------
# sessions and dataset loading
# --------------------------------------------------------------------------

@dataclass
class SessionReport:
    session_id: str
    label: Label | None
    records: int
    minutes: float
    rejected: int = 0
    reordered: int = 0
    duplicates: int = 0
    cleaning: CleaningSummary = field(default_factory=CleaningSummary)


def make_session(
    session_id: str,
    records: Iterable[RawRecord],
    label: Label | None = None,
    location_tag: str = "",
    report: SessionReport | None = None,
) -> RecordingSession:
    """Sort records by timestamp, drop duplicate instants, attach the label."""
    records = list(records)
    reordered = sum(1 for a, b in zip(records, records[1:]) if b.timestamp < a.timestamp)
    if reordered:
        logger.warning("session %s: %d out-of-order records sorted", session_id, reordered)
    records.sort(key=lambda r: r.timestamp)
    unique: list[RawRecord] = []
    for r in records:
        if unique and r.timestamp == unique[-1].timestamp:
            continue
        unique.append(r if label is None or r.label == label else dataclasses.replace(r, label=label))
    if report is not None:
        report.reordered += reordered
        report.duplicates += len(records) - len(unique)
        report.records = len(unique)
        report.minutes = len(unique) * SAMPLE_PERIOD_S / 60.0
    return RecordingSession(id=session_id, records=tuple(unique), label=label, location_tag=location_tag)


def read_labels(path: str | Path, base: str | Path | None = None) -> dict[str, tuple[Label, str]]:
    """Read a ``path,label[,location]`` CSV.

    Relative paths are resolved against ``base`` (default: the labels
    file's directory). A path listed twice with different labels is an error.
    """
    path = Path(path)
    base = path.parent if base is None else Path(base)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read labels file {path}: {exc}") from exc
    out: dict[str, tuple[Label, str]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        raw = (row.get("path") or "").strip()
        if not raw:
            continue
        try:
            label = Label((row.get("label") or "").strip())
        except ValueError:
            raise IngestError(f"{path}: unknown label {row.get('label')!r} for {raw}") from None
        location = (row.get("location") or "").strip()
        target = Path(raw)
        if not target.is_absolute():
            target = base / target
        key = str(target)
        if key in out and out[key][0] != label:
            raise IngestError(f"conflicting labels for {raw}: {out[key][0].value} and {label.value}")
        out[key] = (label, location)
    return out


def load_dataset(
    paths: Iterable[str | Path],
    label_assignments: Mapping[str, Label | tuple[Label, str]],
    ranges: ValidityRanges = DEFAULT_RANGES,
    include_unknown_sim: bool = False,
    reports: list[SessionReport] | None = None,
) -> list[RecordingSession]:
    """Load one labeled session per JSON export file.

    Records are cleaned; records whose SIM operator is not one of the three
    known carriers are dropped unless ``include_unknown_sim`` is set.
    """
    assignments = {}
    for key, value in label_assignments.items():
        label, location = value if isinstance(value, tuple) else (value, "")
        assignments[str(Path(key))] = (Label(label), location)

    sessions = []
    for p in sorted(Path(p) for p in paths):
        key = str(p)
        if key not in assignments:
            raise IngestError(f"no label assigned for {p}")
        label, location = assignments[key]
        try:
            data = p.read_bytes()
        except OSError as exc:
            raise IngestError(f"cannot read {p}: {exc}") from exc
        rejects: list[Reject] = []
        try:
            parsed = parse_json_export(data, rejects)
        except ParseError as exc:
            raise ParseError(f"{p}: {exc}") from exc
        report = SessionReport(p.stem, label, 0, 0.0, rejected=len(rejects))
        kept = []
        for r in parsed:
            if r.label is not None and r.label != label:
                raise IngestError(f"{p}: record labeled {r.label.value} in a file labeled {label.value}")
            if r.sim_operator is SimOperator.UNKNOWN and not include_unknown_sim:
                report.rejected += 1
                continue
            cleaned = clean_record(r, ranges, report.cleaning)
            if cleaned is not None:
                kept.append(cleaned)
        sessions.append(make_session(p.stem, kept, label, location, report))
        if reports is not None:
            reports.append(report)
    sessions.sort(key=lambda s: (s.records[0].timestamp if s.records else datetime.max.replace(tzinfo=timezone.utc), s.id))
    return sessions


def label_minutes(sessions: Iterable[RecordingSession]) -> dict[Label, float]:
    """Cumulative minutes of data per label."""
    totals: dict[Label, float] = {}
    for s in sessions:
        for r in s.records:
            lab = r.label if r.label is not None else s.label
            if lab is not None:
                totals[lab] = totals.get(lab, 0.0) + SAMPLE_PERIOD_S / 60.0
    return totals


def label_shares(sessions: Iterable[RecordingSession]) -> dict[Label, float]:
    minutes = label_minutes(sessions)
    total = sum(minutes.values())
    return {k: v / total for k, v in minutes.items()} if total else {}


# --------------------------------------------------------------------------
# tabular CSV interchange
# --------------------------------------------------------------------------

TABULAR_COLUMNS = (
    "session_id", "location_tag", "timestamp", "label", "sim", "device",
    "gps_longitude_deg", "gps_latitude_deg", "gps_altitude_m",
    "gps_horizontal_accuracy_m", "gps_vertical_accuracy_m",
    "lte", "nr", "wifi",
)

# per-observation tuple layouts for the list-valued columns
LTE_TUPLE = ("pci", "frequency_khz", "bandwidth_khz", "band_number", "rsrp_dbm", "rsrq_db", "rssi_dbm")
NR_TUPLE = ("pci", "frequency_khz", "rsrp_dbm", "rsrq_db", "sinr_db")
WIFI_TUPLE = ("bssid", "frequency_mhz", "bandwidth_mhz", "rssi_dbm")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _encode_list(observations, fields: Sequence[str]) -> str:
    return "|".join(";".join(_fmt(getattr(o, f)) for f in fields) for o in observations)


def _decode_list(text: str, cls, fields: Sequence[str], ints: set[str]) -> tuple:
    if not text:
        return ()
    out = []
    for chunk in text.split("|"):
        parts = chunk.split(";")
        if len(parts) != len(fields):
            raise ParseError(f"bad {cls.__name__} tuple {chunk!r}")
        kwargs = {}
        for name, raw in zip(fields, parts):
            if raw == "":
                kwargs[name] = None
            elif name == "bssid":
                kwargs[name] = raw
            elif name in ints:
                kwargs[name] = int(raw)
            else:
                kwargs[name] = float(raw)
        out.append(cls(**kwargs))
    return tuple(out)


def write_dataset_csv(sessions: Iterable[RecordingSession], path_or_file) -> None:
    """Write sessions as the tabular interchange format."""
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", encoding="utf-8", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABULAR_COLUMNS)
        for s in sessions:
            for r in s.records:
                g = r.gps
                label = r.label if r.label is not None else s.label
                writer.writerow([
                    s.id, s.location_tag, format_timestamp(r.timestamp),
                    label.value if label is not None else "",
                    r.sim_operator.value, r.device or "",
                    *(("",) * 5 if g is None else (
                        _fmt(g.longitude_deg), _fmt(g.latitude_deg), _fmt(g.altitude_m),
                        _fmt(g.horizontal_accuracy_m), _fmt(g.vertical_accuracy_m))),
                    _encode_list(r.lte, LTE_TUPLE),
                    _encode_list(r.nr, NR_TUPLE),
                    _encode_list(r.wifi, WIFI_TUPLE),
                ])
    finally:
        if own:
            fh.close()


def read_dataset_csv(path_or_file) -> list[RecordingSession]:
    """Read the tabular interchange format back into sessions.

    Rows are grouped by ``session_id`` in order of first appearance.
    """
    own = isinstance(path_or_file, (str, Path))
    try:
        fh = open(path_or_file, encoding="utf-8", newline="") if own else path_or_file
    except OSError as exc:
        raise IngestError(f"cannot read dataset {path_or_file}: {exc}") from exc
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = set(TABULAR_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise ParseError(f"dataset header lacks columns: {sorted(missing)}")
        groups: dict[str, list[RawRecord]] = {}
        meta: dict[str, tuple[str, Label | None]] = {}
        for row in reader:
            sid = row["session_id"]
            label = Label(row["label"]) if row["label"] else None
            gps = None
            if row["gps_longitude_deg"]:
                gps = GpsFix(
                    float(row["gps_longitude_deg"]), float(row["gps_latitude_deg"]),
                    float(row["gps_altitude_m"]), float(row["gps_horizontal_accuracy_m"]),
                    float(row["gps_vertical_accuracy_m"]),
                )
            rec = RawRecord(
                timestamp=parse_timestamp(row["timestamp"]),
                lte=_decode_list(row["lte"], LteObservation, LTE_TUPLE,
                                 {"pci", "frequency_khz", "bandwidth_khz", "band_number"}),
                nr=_decode_list(row["nr"], NrObservation, NR_TUPLE, {"pci", "frequency_khz"}),
                wifi=_decode_list(row["wifi"], WifiObservation, WIFI_TUPLE, {"frequency_mhz", "bandwidth_mhz"}),
                gps=gps,
                sim_operator=SimOperator(row["sim"]) if row["sim"] else SimOperator.UNKNOWN,
                device=row["device"] or None,
                label=label,
            )
            groups.setdefault(sid, []).append(rec)
            if sid not in meta:
                meta[sid] = (row["location_tag"], label)
            elif meta[sid][1] != label:
                meta[sid] = (meta[sid][0], None)
    finally:
        if own:
            fh.close()
    return [
        RecordingSession(id=sid, records=tuple(recs), label=meta[sid][1], location_tag=meta[sid][0])
        for sid, recs in groups.items()
    ]
