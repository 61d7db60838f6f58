"""Feature extraction, min-max normalization and feature-set projection."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ingest import Label, RawRecord, RecordingSession, SimOperator


class FeatureError(ValueError):
    pass


class Technology(str, Enum):
    CELLULAR = "cellular"
    WIFI = "wifi"


class BandGroup(str, Enum):
    CELL_LOW = "low"
    CELL_MID = "mid"
    WIFI_24 = "wifi24"
    WIFI_5 = "wifi5"
    WIFI_6 = "wifi6"


# (lower, upper, lower inclusive) in MHz; upper bounds are inclusive
BAND_RANGES_MHZ = {
    BandGroup.CELL_LOW: (0.0, 1000.0, False),
    BandGroup.CELL_MID: (1000.0, 10000.0, True),
    BandGroup.WIFI_24: (2400.0, 2500.0, True),
    BandGroup.WIFI_5: (5150.0, 5875.0, True),
    BandGroup.WIFI_6: (5925.0, 7125.0, True),
}

_CELL_BANDS = (BandGroup.CELL_LOW, BandGroup.CELL_MID)
_WIFI_BANDS = (BandGroup.WIFI_24, BandGroup.WIFI_5, BandGroup.WIFI_6)


def classify_band(frequency_mhz: float, technology: Technology) -> BandGroup | None:
    """Return the band group containing ``frequency_mhz`` or ``None``."""
    if technology is Technology.CELLULAR:
        # low band is open on both ends: (0, 1000)
        if 0.0 < frequency_mhz < 1000.0:
            return BandGroup.CELL_LOW
        if 1000.0 <= frequency_mhz <= 10000.0:
            return BandGroup.CELL_MID
        return None
    for band in _WIFI_BANDS:
        lo, hi, _ = BAND_RANGES_MHZ[band]
        if lo <= frequency_mhz <= hi:
            return band
    return None


# --------------------------------------------------------------------------
# summary statistics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryStats:
    min: float
    max: float
    avg: float
    std: float
    count: int


def summarize(values: Sequence[float] | np.ndarray, sentinel: float = math.nan) -> SummaryStats:
    """Min, max, mean and population standard deviation of ``values``.

    An empty input yields ``count == 0``, ``std == 0`` and ``sentinel`` for
    min, max and avg.
    """
    arr = np.asarray(values, dtype=np.float64)
    n = arr.size
    if n == 0:
        return SummaryStats(sentinel, sentinel, sentinel, 0.0, 0)
    avg = float(arr.mean())
    std = float(np.sqrt(np.mean((arr - avg) ** 2)))
    return SummaryStats(float(arr.min()), float(arr.max()), avg, std, n)


# --------------------------------------------------------------------------
# layouts
# --------------------------------------------------------------------------

class FeatureSetId(str, Enum):
    ALL72 = "all72"
    NO6GHZ67 = "no6ghz67"
    NO6GHZ_NONR40 = "no6ghz-nonr40"
    BEST4 = "best4"


STATS = ("min", "max", "avg", "std")
LTE_METRICS = ("rssi", "rsrp", "rsrq")
NR_METRICS = ("rsrp", "rsrq", "sinr")

# floors substituted for stats of an empty observation pool
SENTINELS = {
    ("lte", "rssi"): -120.0,
    ("lte", "rsrp"): -140.0,
    ("lte", "rsrq"): -34.0,
    ("nr", "rsrp"): -140.0,
    ("nr", "rsrq"): -34.0,
    ("nr", "sinr"): -23.0,
    ("wifi", "rssi"): -100.0,
}
GPS_MISSING = {"horizontal_accuracy": -1.0, "vertical_accuracy": -1.0, "altitude": 0.0}

SIM_CODES = {
    SimOperator.VERIZON: 0.0,
    SimOperator.ATT: 1.0,
    SimOperator.TMOBILE: 2.0,
    SimOperator.UNKNOWN: 3.0,
}


def _build_all72() -> tuple[str, ...]:
    names = []
    for band in ("low", "mid"):
        for metric in LTE_METRICS:
            names += [f"lte_{band}_{metric}_{s}" for s in STATS]
    names += ["lte_low_unique_pci", "lte_mid_unique_pci"]
    for band in ("low", "mid"):
        for metric in NR_METRICS:
            names += [f"nr_{band}_{metric}_{s}" for s in STATS]
    names += ["nr_low_unique_pci", "nr_mid_unique_pci", "nr_present"]
    for band in ("wifi24", "wifi5", "wifi6"):
        names += [f"{band}_rssi_{s}" for s in STATS]
    names += ["wifi24_unique_bssid", "wifi5_unique_bssid", "wifi6_unique_bssid"]
    names += ["horizontal_accuracy", "vertical_accuracy", "altitude", "sim_code"]
    return tuple(names)


ALL72_NAMES = _build_all72()
_NO6 = tuple(n for n in ALL72_NAMES if not n.startswith("wifi6_"))
_NO6_NONR = tuple(n for n in _NO6 if not n.startswith("nr_"))

LAYOUTS: dict[FeatureSetId, tuple[str, ...]] = {
    FeatureSetId.ALL72: ALL72_NAMES,
    FeatureSetId.NO6GHZ67: _NO6,
    FeatureSetId.NO6GHZ_NONR40: _NO6_NONR,
    FeatureSetId.BEST4: ("vertical_accuracy", "horizontal_accuracy", "wifi5_unique_bssid", "wifi5_rssi_max"),
}

_INDEX72 = {name: i for i, name in enumerate(ALL72_NAMES)}


@dataclass(frozen=True)
class FeatureLayout:
    id: FeatureSetId
    names: tuple[str, ...]

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


def layout(layout_id: FeatureSetId | str) -> FeatureLayout:
    layout_id = FeatureSetId(layout_id)
    return FeatureLayout(layout_id, LAYOUTS[layout_id])


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout_id: FeatureSetId
    label: Label | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (len(LAYOUTS[self.layout_id]),):
            raise FeatureError(
                f"{self.layout_id.value} vector needs {len(LAYOUTS[self.layout_id])} values, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise FeatureError("feature vector contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


# --------------------------------------------------------------------------
# extraction
# --------------------------------------------------------------------------

def _stats_into(out: np.ndarray, start: int, values: list[float], sentinel: float) -> None:
    s = summarize(values, sentinel)
    out[start:start + 4] = (s.min, s.max, s.avg, s.std)


def extract_all72(records: Sequence[RawRecord]) -> np.ndarray:
    """Raw (unnormalized) All72 values for a pool of one or more records."""
    if not records:
        raise FeatureError("cannot extract features from an empty record pool")
    sims = {r.sim_operator for r in records}
    if len(sims) > 1:
        raise FeatureError(f"mixed SIM operators in one pool: {sorted(s.value for s in sims)}")

    lte = {b: {"rssi": [], "rsrp": [], "rsrq": [], "pci": set()} for b in _CELL_BANDS}
    nr = {b: {"rsrp": [], "rsrq": [], "sinr": [], "pci": set()} for b in _CELL_BANDS}
    wifi = {b: {"rssi": [], "bssid": set()} for b in _WIFI_BANDS}
    nr_seen = False
    horiz, vert, alt = [], [], []

    for r in records:
        for o in r.lte:
            band = classify_band(o.frequency_khz / 1000.0, Technology.CELLULAR)
            if band is None:
                continue
            pool = lte[band]
            if o.rssi_dbm is not None:
                pool["rssi"].append(o.rssi_dbm)
            pool["rsrp"].append(o.rsrp_dbm)
            pool["rsrq"].append(o.rsrq_db)
            pool["pci"].add(o.pci)
        for o in r.nr:
            nr_seen = True
            band = classify_band(o.frequency_khz / 1000.0, Technology.CELLULAR)
            if band is None:
                continue
            pool = nr[band]
            pool["rsrp"].append(o.rsrp_dbm)
            pool["rsrq"].append(o.rsrq_db)
            pool["sinr"].append(o.sinr_db)
            pool["pci"].add(o.pci)
        for o in r.wifi:
            band = classify_band(o.frequency_mhz, Technology.WIFI)
            if band is None:
                continue
            wifi[band]["rssi"].append(o.rssi_dbm)
            wifi[band]["bssid"].add(o.bssid)
        if r.gps is not None:
            horiz.append(r.gps.horizontal_accuracy_m)
            vert.append(r.gps.vertical_accuracy_m)
            alt.append(r.gps.altitude_m)

    out = np.empty(len(ALL72_NAMES), dtype=np.float64)
    i = 0
    for band in _CELL_BANDS:
        for metric in LTE_METRICS:
            _stats_into(out, i, lte[band][metric], SENTINELS[("lte", metric)])
            i += 4
    for band in _CELL_BANDS:
        out[i] = len(lte[band]["pci"])
        i += 1
    for band in _CELL_BANDS:
        for metric in NR_METRICS:
            _stats_into(out, i, nr[band][metric], SENTINELS[("nr", metric)])
            i += 4
    for band in _CELL_BANDS:
        out[i] = len(nr[band]["pci"])
        i += 1
    out[i] = 1.0 if nr_seen else 0.0
    i += 1
    for band in _WIFI_BANDS:
        _stats_into(out, i, wifi[band]["rssi"], SENTINELS[("wifi", "rssi")])
        i += 4
    for band in _WIFI_BANDS:
        out[i] = len(wifi[band]["bssid"])
        i += 1
    out[i] = float(np.mean(horiz)) if horiz else GPS_MISSING["horizontal_accuracy"]
    out[i + 1] = float(np.mean(vert)) if vert else GPS_MISSING["vertical_accuracy"]
    out[i + 2] = float(np.mean(alt)) if alt else GPS_MISSING["altitude"]
    out[i + 3] = SIM_CODES[next(iter(sims))]
    assert i + 4 == len(ALL72_NAMES)
    return out


def extract_features(
    records: RawRecord | Sequence[RawRecord],
    layout_id: FeatureSetId | str = FeatureSetId.ALL72,
) -> FeatureVector:
    """Extract one feature vector from a record or a pooled group of records.

    With several records all observations are pooled per technology and
    band before summarizing, so e.g. the max 5 GHz RSSI of the pool is the
    max over every record.
    """
    if isinstance(records, RawRecord):
        records = [records]
    labels = {r.label for r in records}
    label = labels.pop() if len(labels) == 1 else None
    full = FeatureVector(extract_all72(records), FeatureSetId.ALL72, label)
    return project(full, layout_id)


# --------------------------------------------------------------------------
# projection
# --------------------------------------------------------------------------

def projection_indices(source: FeatureSetId | str, target: FeatureSetId | str) -> np.ndarray:
    src = LAYOUTS[FeatureSetId(source)]
    pos = {n: i for i, n in enumerate(src)}
    try:
        return np.array([pos[n] for n in LAYOUTS[FeatureSetId(target)]], dtype=np.intp)
    except KeyError as exc:
        raise FeatureError(f"{FeatureSetId(target).value} needs feature {exc.args[0]} absent from {FeatureSetId(source).value}") from None


def project(vector: FeatureVector, target: FeatureSetId | str) -> FeatureVector:
    target = FeatureSetId(target)
    if target is vector.layout_id:
        return vector
    idx = projection_indices(vector.layout_id, target)
    return FeatureVector(vector.values[idx], target, vector.label)


# --------------------------------------------------------------------------
# normalization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationParams:
    layout_id: FeatureSetId
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.array(self.mins, dtype=np.float64)
        maxs = np.array(self.maxs, dtype=np.float64)
        dim = len(LAYOUTS[self.layout_id])
        if mins.shape != (dim,) or maxs.shape != (dim,):
            raise FeatureError(f"normalizer for {self.layout_id.value} needs {dim} min/max pairs")
        if np.any(maxs < mins):
            raise FeatureError("normalizer has max < min")
        mins.setflags(write=False)
        maxs.setflags(write=False)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def degenerate(self) -> np.ndarray:
        return self.maxs == self.mins

    @property
    def dim(self) -> int:
        return self.mins.size

    def to_json(self) -> dict:
        return {
            "format": "envclass-normalizer",
            "version": 1,
            "layout": self.layout_id.value,
            "features": [
                {"name": n, "min": float(lo), "max": float(hi)}
                for n, lo, hi in zip(LAYOUTS[self.layout_id], self.mins, self.maxs)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NormalizationParams":
        if obj.get("format") != "envclass-normalizer" or obj.get("version") != 1:
            raise FeatureError("unsupported normalizer document")
        layout_id = FeatureSetId(obj["layout"])
        names = [f["name"] for f in obj["features"]]
        if tuple(names) != LAYOUTS[layout_id]:
            raise FeatureError("normalizer feature names do not match the layout")
        return cls(layout_id, [f["min"] for f in obj["features"]], [f["max"] for f in obj["features"]])


def fit_normalizer(vectors, layout_id: FeatureSetId | str | None = None) -> NormalizationParams:
    """Per-feature min/max over training vectors (sequence or 2-D array)."""
    if isinstance(vectors, np.ndarray):
        if layout_id is None:
            raise FeatureError("layout_id is required when fitting on a bare matrix")
        matrix = np.asarray(vectors, dtype=np.float64)
        layout_id = FeatureSetId(layout_id)
    else:
        vectors = list(vectors)
        if not vectors:
            raise FeatureError("fit_normalizer needs at least 2 vectors")
        ids = {v.layout_id for v in vectors}
        if len(ids) != 1:
            raise FeatureError("cannot fit a normalizer across layouts")
        layout_id = ids.pop()
        matrix = np.stack([v.values for v in vectors])
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise FeatureError("fit_normalizer needs at least 2 vectors")
    return NormalizationParams(layout_id, matrix.min(axis=0), matrix.max(axis=0))


def normalize_matrix(matrix: np.ndarray, params: NormalizationParams) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[-1] != params.dim:
        raise FeatureError(f"matrix has {matrix.shape[-1]} columns, normalizer expects {params.dim}")
    span = params.maxs - params.mins
    safe = np.where(span > 0, span, 1.0)
    # tiny spans may overflow to inf; the clamp maps that to the right endpoint
    with np.errstate(over="ignore"):
        out = np.clip((matrix - params.mins) / safe, 0.0, 1.0)
    out[..., span <= 0] = 0.0
    return out


def apply_normalizer(vector: FeatureVector, params: NormalizationParams) -> FeatureVector:
    """Scale into [0, 1]; out-of-range values clamp, degenerate features map to 0."""
    if vector.layout_id is not params.layout_id:
        raise FeatureError(f"layout mismatch: vector {vector.layout_id.value}, normalizer {params.layout_id.value}")
    return FeatureVector(normalize_matrix(vector.values, params), vector.layout_id, vector.label)


def save_normalizer(params: NormalizationParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_json(), indent=1) + "\n", encoding="utf-8")


def load_normalizer(path: str | Path) -> NormalizationParams:
    return NormalizationParams.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# --------------------------------------------------------------------------
# matrices
# --------------------------------------------------------------------------

@dataclass
class FeatureMatrix:
    """A batch of raw feature vectors with their provenance."""

    layout_id: FeatureSetId
    values: np.ndarray
    labels: list[Label | None]
    session_ids: list[str]
    record_index: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return LAYOUTS[self.layout_id]

    def project(self, target: FeatureSetId | str) -> "FeatureMatrix":
        idx = projection_indices(self.layout_id, target)
        return FeatureMatrix(FeatureSetId(target), self.values[:, idx], list(self.labels),
                             list(self.session_ids), list(self.record_index))

    def subset(self, rows: Sequence[int]) -> "FeatureMatrix":
        rows = list(rows)
        return FeatureMatrix(
            self.layout_id, self.values[rows], [self.labels[i] for i in rows],
            [self.session_ids[i] for i in rows], [self.record_index[i] for i in rows],
        )


def extract_matrix(sessions: Iterable[RecordingSession], layout_id: FeatureSetId | str = FeatureSetId.ALL72) -> FeatureMatrix:
    """Per-record feature vectors for every record of every session."""
    layout_id = FeatureSetId(layout_id)
    rows, labels, sids, idx = [], [], [], []
    for s in sessions:
        for i, r in enumerate(s.records):
            rows.append(extract_all72([r]))
            labels.append(r.label if r.label is not None else s.label)
            sids.append(s.id)
            idx.append(i)
    values = np.stack(rows) if rows else np.empty((0, len(ALL72_NAMES)))
    full = FeatureMatrix(FeatureSetId.ALL72, values, labels, sids, idx)
    return full if layout_id is FeatureSetId.ALL72 else full.project(layout_id)


def write_matrix_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*matrix.names, "label", "session_id", "record_index"])
        for row, lab, sid, ri in zip(matrix.values, matrix.labels, matrix.session_ids, matrix.record_index):
            writer.writerow([*(repr(float(v)) for v in row), lab.value if lab else "", sid, ri])


def read_matrix_csv(path: str | Path) -> FeatureMatrix:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = tuple(header[:-3])
        if header[-3:] != ["label", "session_id", "record_index"]:
            raise FeatureError(f"{path}: matrix header must end with label,session_id,record_index")
        for lid, lnames in LAYOUTS.items():
            if lnames == names:
                layout_id = lid
                break
        else:
            raise FeatureError(f"{path}: header does not match any known layout")
        rows, labels, sids, idx = [], [], [], []
        for rec in reader:
            rows.append([float(v) for v in rec[:-3]])
            labels.append(Label(rec[-3]) if rec[-3] else None)
            sids.append(rec[-2])
            idx.append(int(rec[-1]))
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return FeatureMatrix(layout_id, values, labels, sids, idx)
