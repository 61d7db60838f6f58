"""Seeded synthetic measurement sessions with per-environment contrasts.

All randomness comes from ``numpy.random.Generator`` with the PCG64 bit
generator, seeded through ``SeedSequence(seed).spawn(n_sessions)`` in
session order, so datasets are reproducible across platforms.

Outdoor (O) and indoor-interior (II) profiles are set directly; the
indoor-near-window (INW) profile blends the two with extra spread.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import ALL72_NAMES, extract_all72
from .ingest import (
    DEFAULT_RANGES,
    GpsFix,
    Label,
    LteObservation,
    NrObservation,
    RawRecord,
    RecordingSession,
    SimOperator,
    ValidityRanges,
    WifiObservation,
)

Gauss = tuple[float, float]

LTE_LOW_KHZ = (739000, 751000, 869000)
LTE_MID_KHZ = (1932500, 2132500, 2355000)
NR_LOW_KHZ = (627000, 632000)
NR_MID_KHZ = (3700020, 3840000)
WIFI24_MHZ = (2412, 2437, 2462)
WIFI5_MHZ = (5180, 5240, 5500, 5745, 5805)
WIFI6_MHZ = (5955, 6115, 6435, 6755, 7015)


@dataclass(frozen=True)
class EnvProfile:
    """Distribution parameters for one environment.

    Counts are Poisson means; ``Gauss`` fields are (mean, standard deviation).
    """

    lte_low_cells: float = 3.0
    lte_mid_cells: float = 4.0
    lte_rsrp: Gauss = (-95.0, 8.0)
    lte_rsrq: Gauss = (-12.0, 2.5)
    lte_rssi: Gauss = (-70.0, 8.0)
    nr_prob: float = 0.7
    nr_cells: float = 2.0
    nr_rsrp: Gauss = (-100.0, 8.0)
    nr_rsrq: Gauss = (-12.0, 2.5)
    nr_sinr: Gauss = (8.0, 5.0)
    wifi24_aps: float = 6.0
    wifi24_rssi: Gauss = (-70.0, 8.0)
    wifi5_aps: float = 6.0
    wifi5_rssi: Gauss = (-70.0, 8.0)
    wifi6_prob: float = 0.3
    wifi6_aps: float = 2.0
    wifi6_rssi: Gauss = (-75.0, 8.0)
    horizontal_accuracy: Gauss = (8.0, 3.0)
    vertical_accuracy: Gauss = (6.0, 2.0)

    def blend(self, other: "EnvProfile", weight: float = 0.5, extra_spread: float = 0.0) -> "EnvProfile":
        """Interpolate parameters; ``extra_spread`` widens every standard deviation."""
        kw = {}
        for f in dataclasses.fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, tuple):
                kw[f.name] = ((1 - weight) * a[0] + weight * b[0],
                              ((1 - weight) * a[1] + weight * b[1]) * (1.0 + extra_spread))
            else:
                kw[f.name] = (1 - weight) * a + weight * b
        return EnvProfile(**kw)


OUTDOOR = EnvProfile(
    lte_low_cells=4.0, lte_mid_cells=4.5,
    lte_rsrp=(-90.0, 9.0), lte_rsrq=(-10.5, 3.0), lte_rssi=(-64.0, 9.0),
    nr_prob=0.8, nr_cells=2.0, nr_rsrp=(-94.0, 9.0), nr_rsrq=(-11.0, 3.0), nr_sinr=(11.0, 6.0),
    wifi24_aps=4.0, wifi24_rssi=(-78.0, 7.0),
    wifi5_aps=3.0, wifi5_rssi=(-80.0, 7.0),
    wifi6_prob=0.05, wifi6_aps=1.0, wifi6_rssi=(-86.0, 5.0),
    horizontal_accuracy=(10.0, 4.0), vertical_accuracy=(4.0, 2.0),
)

INDOOR_INTERIOR = EnvProfile(
    lte_low_cells=3.0, lte_mid_cells=3.5,
    lte_rsrp=(-104.0, 9.0), lte_rsrq=(-13.5, 3.0), lte_rssi=(-77.0, 9.0),
    nr_prob=0.5, nr_cells=1.5, nr_rsrp=(-108.0, 9.0), nr_rsrq=(-14.0, 3.0), nr_sinr=(4.0, 6.0),
    wifi24_aps=9.0, wifi24_rssi=(-64.0, 8.0),
    wifi5_aps=10.0, wifi5_rssi=(-62.0, 8.0),
    wifi6_prob=0.5, wifi6_aps=3.0, wifi6_rssi=(-66.0, 8.0),
    horizontal_accuracy=(6.0, 2.5), vertical_accuracy=(11.0, 4.0),
)

INW_BLEND = 0.5
INW_EXTRA_SPREAD = 0.15


def default_profiles(invert_horizontal_accuracy: bool = False) -> dict[Label, EnvProfile]:
    o, ii = OUTDOOR, INDOOR_INTERIOR
    if invert_horizontal_accuracy:
        o, ii = (dataclasses.replace(o, horizontal_accuracy=ii.horizontal_accuracy),
                 dataclasses.replace(ii, horizontal_accuracy=o.horizontal_accuracy))
    return {Label.O: o, Label.II: ii, Label.INW: o.blend(ii, INW_BLEND, INW_EXTRA_SPREAD)}


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int
    sessions_per_label: int = 50
    records_per_session: int = 60
    profiles: dict[Label, EnvProfile] = field(default_factory=default_profiles)
    labels: tuple[Label, ...] = (Label.O, Label.II, Label.INW)
    start: datetime = datetime(2024, 3, 1, 12, 0, 0, tzinfo=timezone.utc)
    ranges: ValidityRanges = DEFAULT_RANGES

    def __post_init__(self):
        if self.records_per_session < 6:
            raise ValueError("records_per_session must be at least 6")
        if self.sessions_per_label < 1:
            raise ValueError("sessions_per_label must be at least 1")


def load_profile_overrides(path: str | Path) -> dict[Label, EnvProfile]:
    """Read a JSON override file (see ``docs/synth_config.md``)."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    profiles = default_profiles(bool(doc.get("invert_horizontal_accuracy", False)))
    blend_inw = "INW" not in doc
    for key in ("O", "II", "INW"):
        if key in doc:
            fields = {k: tuple(v) if isinstance(v, list) else v for k, v in doc[key].items()}
            profiles[Label(key)] = dataclasses.replace(profiles[Label(key)], **fields)
    if blend_inw:
        profiles[Label.INW] = profiles[Label.O].blend(
            profiles[Label.II], doc.get("inw_blend", INW_BLEND), doc.get("inw_extra_spread", INW_EXTRA_SPREAD))
    return profiles


def _clip(x, bounds: tuple[float, float], decimals: int = 0):
    return np.round(np.clip(x, bounds[0], bounds[1]), decimals)


def _accuracy(rng, g: Gauss, bounds: tuple[float, float]) -> float:
    lo = max(bounds[0], 0.0) + 0.5
    return float(np.round(np.clip(rng.normal(g[0], g[1]), lo, bounds[1]), 1))


# sources per session relative to the mean visible count
POOL_FACTOR = 1.3
# per-record jitter around a source's base level, dB
JITTER_DB = 3.0


@dataclass
class _SourcePool:
    """Transmitters near one session: ids, carrier frequency and base levels.

    Every record sees each source with probability ``visibility``; measured
    values are the source's base level plus per-record jitter.
    """

    ids: list
    freqs: list[int]
    base: dict[str, np.ndarray]
    visibility: float

    @classmethod
    def draw(cls, rng, mean_count: float, ids, freqs: Sequence[int], levels: dict[str, Gauss]) -> "_SourcePool":
        size = max(1, int(round(mean_count * POOL_FACTOR)) + 1)
        size = min(size, len(ids))
        chosen = rng.choice(len(ids), size=size, replace=False)
        pool_ids = [ids[int(c)] for c in chosen]
        pool_freqs = [int(freqs[int(rng.integers(len(freqs)))]) for _ in range(size)]
        base = {k: rng.normal(g[0], g[1], size) for k, g in levels.items()}
        return cls(pool_ids, pool_freqs, base, min(0.95, mean_count / size))

    def observe(self, rng, jitter: float = JITTER_DB):
        visible = np.flatnonzero(rng.random(len(self.ids)) < self.visibility)
        noise = {k: rng.normal(0.0, jitter, visible.size) for k in self.base}
        return [(self.ids[j], self.freqs[j], {k: self.base[k][j] + noise[k][n] for k in self.base})
                for n, j in enumerate(visible)]


def _session(rng: np.random.Generator, sid: str, label: Label, prof: EnvProfile,
             n_records: int, start: datetime, ranges: ValidityRanges) -> RecordingSession:
    sim = (SimOperator.VERIZON, SimOperator.ATT, SimOperator.TMOBILE)[int(rng.integers(3))]
    device = ("Pixel 5", "Pixel 6", "Galaxy S21", "Galaxy S22", "Galaxy A23")[int(rng.integers(5))]
    lat0 = 41.70 + rng.uniform(-0.01, 0.01)
    lon0 = -86.24 + rng.uniform(-0.01, 0.01)
    alt0 = 220.0 + rng.uniform(-5, 20)

    lte_pci = list(range(504))
    lte_pools = [
        _SourcePool.draw(rng, prof.lte_low_cells, lte_pci, LTE_LOW_KHZ,
                         {"rsrp": (prof.lte_rsrp[0] + 4.0, prof.lte_rsrp[1]), "rsrq": prof.lte_rsrq,
                          "rssi": (prof.lte_rssi[0] + 4.0, prof.lte_rssi[1])}),
        _SourcePool.draw(rng, prof.lte_mid_cells, lte_pci, LTE_MID_KHZ,
                         {"rsrp": prof.lte_rsrp, "rsrq": prof.lte_rsrq, "rssi": prof.lte_rssi}),
    ]
    nr_pool = _SourcePool.draw(rng, prof.nr_cells, list(range(1008)), NR_LOW_KHZ + NR_MID_KHZ,
                               {"rsrp": prof.nr_rsrp, "rsrq": prof.nr_rsrq, "sinr": prof.nr_sinr})
    macs = [f"{int(x):012x}" for x in rng.integers(0, 2**48, size=120)]
    wifi_pools = [
        (_SourcePool.draw(rng, prof.wifi24_aps, macs[:40], WIFI24_MHZ, {"rssi": prof.wifi24_rssi}), 20, 1.0),
        (_SourcePool.draw(rng, prof.wifi5_aps, macs[40:80], WIFI5_MHZ, {"rssi": prof.wifi5_rssi}), 80, 1.0),
        (_SourcePool.draw(rng, prof.wifi6_aps, macs[80:], WIFI6_MHZ, {"rssi": prof.wifi6_rssi}), 160,
         prof.wifi6_prob),
    ]

    records = []
    for i in range(n_records):
        lte = []
        for pool in lte_pools:
            for pci, f, v in pool.observe(rng):
                lte.append(LteObservation(
                    int(pci), f, float(_clip(v["rsrp"], ranges.rsrp_dbm)), float(_clip(v["rsrq"], ranges.rsrq_db, 1)),
                    bandwidth_khz=10000 if f < 1000000 else 20000,
                    rssi_dbm=float(_clip(v["rssi"], ranges.lte_rssi_dbm))))
        nr = []
        if rng.random() < prof.nr_prob:
            for pci, f, v in nr_pool.observe(rng):
                nr.append(NrObservation(int(pci), f, float(_clip(v["rsrp"], ranges.rsrp_dbm)),
                                        float(_clip(v["rsrq"], ranges.rsrq_db, 1)),
                                        float(_clip(v["sinr"], ranges.sinr_db, 1))))
        wifi = []
        for pool, bw, presence in wifi_pools:
            if presence < 1.0 and rng.random() >= presence:
                continue
            for mac, f, v in pool.observe(rng):
                wifi.append(WifiObservation(mac, f, float(_clip(v["rssi"], ranges.wifi_rssi_dbm)), bandwidth_mhz=bw))
        if not (lte or nr or wifi):
            # a record needs at least one observation
            mac, f, v = lte_pools[1].ids[0], lte_pools[1].freqs[0], lte_pools[1].base
            lte.append(LteObservation(int(mac), f, float(_clip(v["rsrp"][0], ranges.rsrp_dbm)),
                                      float(_clip(v["rsrq"][0], ranges.rsrq_db, 1)), bandwidth_khz=20000,
                                      rssi_dbm=float(_clip(v["rssi"][0], ranges.lte_rssi_dbm))))
        gps = GpsFix(
            longitude_deg=float(np.round(lon0 + rng.normal(0, 2e-5) * i ** 0.5, 7)),
            latitude_deg=float(np.round(lat0 + rng.normal(0, 2e-5) * i ** 0.5, 7)),
            altitude_m=float(np.round(alt0 + rng.normal(0, 1.0), 1)),
            horizontal_accuracy_m=_accuracy(rng, prof.horizontal_accuracy, ranges.gps_accuracy_m),
            vertical_accuracy_m=_accuracy(rng, prof.vertical_accuracy, ranges.gps_accuracy_m),
        )
        records.append(RawRecord(
            timestamp=start + timedelta(seconds=5 * i),
            lte=tuple(lte), nr=tuple(nr), wifi=tuple(wifi), gps=gps,
            sim_operator=sim, device=device, label=label,
        ))
    return RecordingSession(sid, tuple(records), label, "SYN")


def generate_dataset(config: GeneratorConfig) -> list[RecordingSession]:
    """Generate ``sessions_per_label`` labeled sessions for every label."""
    n_total = config.sessions_per_label * len(config.labels)
    seeds = np.random.SeedSequence(config.seed).spawn(n_total)
    sessions = []
    k = 0
    for label in config.labels:
        prof = config.profiles[label]
        for j in range(config.sessions_per_label):
            rng = np.random.Generator(np.random.PCG64(seeds[k]))
            # sessions are laid end to end in time, one hour apart
            start = config.start + timedelta(hours=k)
            sessions.append(_session(rng, f"{label.value}-{j:03d}", label, prof,
                                     config.records_per_session, start, config.ranges))
            k += 1
    return sessions


def emit_cdf_report(sessions: Sequence[RecordingSession], features: Sequence[str],
                    labels: Sequence[Label] = (Label.O, Label.II, Label.INW)) -> str:
    """Per-label empirical CDFs of per-record features as CSV text.

    One row per (feature, value) on the union of observed values, with a
    ``cdf_<label>`` column per label.
    """
    unknown = [f for f in features if f not in ALL72_NAMES]
    if unknown:
        raise KeyError(f"unknown feature(s): {', '.join(unknown)}")
    cols = [ALL72_NAMES.index(f) for f in features]
    per_label: dict[Label, list[np.ndarray]] = {lab: [] for lab in labels}
    for s in sessions:
        for r in s.records:
            lab = r.label if r.label is not None else s.label
            if lab in per_label:
                per_label[lab].append(extract_all72([r])[cols])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "value", *(f"cdf_{lab.value}" for lab in labels)])
    data = {lab: (np.stack(v) if v else np.empty((0, len(cols)))) for lab, v in per_label.items()}
    for j, name in enumerate(features):
        sorted_vals = {lab: np.sort(d[:, j]) for lab, d in data.items()}
        grid = np.unique(np.concatenate(list(sorted_vals.values())))
        for v in grid:
            row = [name, repr(float(v))]
            for lab in labels:
                sv = sorted_vals[lab]
                row.append(repr(float(np.searchsorted(sv, v, side="right") / sv.size)) if sv.size else "")
            w.writerow(row)
    return buf.getvalue()
