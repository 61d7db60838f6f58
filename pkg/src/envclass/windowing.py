"""Extended windowing: one decision per six consecutive records.

Majority voting (MV) classifies every record and takes the modal class;
data aggregation (DA) pools the observations of the six records and
classifies the pooled feature vector once.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .features import ALL72_NAMES, FeatureSetId, extract_all72, projection_indices
from .ingest import Label, RawRecord, RecordingSession
from .models.bundle import ModelBundle

WINDOW_SIZE = 6
MAX_SPAN_S = 45.0

# preference among tied MV candidates: outdoor-leaning first
CONSERVATIVE_ORDER = (Label.O, Label.INW, Label.I, Label.II)


class Technique(str, Enum):
    NONE = "none"
    MV = "mv"
    DA = "da"


@dataclass(frozen=True)
class Window:
    session_id: str
    records: tuple[RawRecord, ...]
    index: int
    label: Label | None = None


class WindowPartition(NamedTuple):
    windows: list[Window]
    discarded: int
    gapped: int


def partition_windows(
    session: RecordingSession, size: int = WINDOW_SIZE, max_span_s: float = MAX_SPAN_S
) -> WindowPartition:
    """Split a session into non-overlapping windows of ``size`` records.

    Windows spanning more than ``max_span_s`` seconds are rejected; their
    records are counted in ``discarded`` together with the trailing remainder.
    """
    records = session.records
    windows = []
    gapped = 0
    n_full = len(records) // size
    for w in range(n_full):
        chunk = records[w * size:(w + 1) * size]
        span = (chunk[-1].timestamp - chunk[0].timestamp).total_seconds()
        if span > max_span_s:
            gapped += 1
            continue
        windows.append(Window(session.id, tuple(chunk), w, session.label))
    discarded = len(records) - size * len(windows)
    return WindowPartition(windows, discarded, gapped)


def majority_vote(votes: Sequence[int], probabilities: np.ndarray, classes: Sequence[Label]) -> tuple[int, bool]:
    """Modal class index and whether a tie had to be broken.

    Tied modes are resolved by the highest summed probability over all
    records, then by the conservative order O > INW > I > II.
    """
    k = len(classes)
    counts = np.bincount(np.asarray(votes, dtype=np.intp), minlength=k)
    top = np.flatnonzero(counts == counts.max())
    if top.size == 1:
        return int(top[0]), False
    sums = np.asarray(probabilities, dtype=np.float64).sum(axis=0)
    best = sums[top].max()
    top = [int(c) for c in top if sums[c] == best]
    if len(top) > 1:
        top.sort(key=lambda c: CONSERVATIVE_ORDER.index(classes[c]))
    return top[0], True


@dataclass(frozen=True)
class WindowDecision:
    predicted: Label
    technique: Technique
    votes: tuple[Label, ...] | None = None
    aggregated: np.ndarray | None = None
    tie: bool = False


def _rows_for(bundle: ModelBundle, raw72: np.ndarray) -> np.ndarray:
    return raw72[:, projection_indices(FeatureSetId.ALL72, bundle.layout_id)]


def classify_window_mv(window: Window, bundle: ModelBundle) -> WindowDecision:
    raw = _rows_for(bundle, np.stack([extract_all72([r]) for r in window.records]))
    probs = bundle.predict_proba(raw)
    votes = bundle.predict(raw)
    idx, tie = majority_vote(votes, probs, bundle.classes)
    return WindowDecision(bundle.classes[idx], Technique.MV,
                          votes=tuple(bundle.classes[v] for v in votes), tie=tie)


def classify_window_da(window: Window, bundle: ModelBundle) -> WindowDecision:
    raw = _rows_for(bundle, extract_all72(window.records)[None, :])
    idx = int(bundle.predict(raw)[0])
    return WindowDecision(bundle.classes[idx], Technique.DA, aggregated=raw[0])


# --------------------------------------------------------------------------
# batched evaluation units
# --------------------------------------------------------------------------

@dataclass
class DecisionUnits:
    """Precomputed All72 rows for every decision of one technique.

    For ``none`` and ``da`` each unit owns one row; for ``mv`` each unit owns
    the six per-record rows of its window.
    """

    technique: Technique
    session_ids: list[str]
    indices: list[int]
    truths: list[Label | None]
    pools: list[tuple[RawRecord, ...]]
    rows: np.ndarray
    owner: np.ndarray

    def __len__(self) -> int:
        return len(self.session_ids)


def build_units(sessions: Iterable[RecordingSession], technique: Technique | str) -> DecisionUnits:
    technique = Technique(technique)
    sids, idx, truths, pools, rows, owner = [], [], [], [], [], []
    for s in sessions:
        if technique is Technique.NONE:
            groups = [((r,), i) for i, r in enumerate(s.records)]
        else:
            groups = [(w.records, w.index) for w in partition_windows(s).windows]
        for recs, i in groups:
            u = len(sids)
            sids.append(s.id)
            idx.append(i)
            labels = {r.label if r.label is not None else s.label for r in recs}
            truths.append(labels.pop() if len(labels) == 1 else None)
            pools.append(recs)
            if technique is Technique.DA:
                rows.append(extract_all72(recs))
                owner.append(u)
            else:
                for r in recs:
                    rows.append(extract_all72([r]))
                    owner.append(u)
    matrix = np.stack(rows) if rows else np.empty((0, len(ALL72_NAMES)))
    return DecisionUnits(technique, sids, idx, truths, pools, matrix, np.asarray(owner, dtype=np.intp))


def decide_units(
    units: DecisionUnits,
    choose: Callable[[int], ModelBundle],
) -> tuple[list[Label], list[FeatureSetId]]:
    """Predicted label and routed layout for every unit.

    ``choose(u)`` picks the bundle for unit ``u``; units sharing a bundle are
    predicted in one batch.
    """
    n = len(units)
    chosen = [choose(u) for u in range(n)]
    preds: list[Label | None] = [None] * n
    by_bundle: dict[int, list[int]] = {}
    for u, b in enumerate(chosen):
        by_bundle.setdefault(id(b), []).append(u)
    starts = np.searchsorted(units.owner, np.arange(n + 1))
    for members in by_bundle.values():
        bundle = chosen[members[0]]
        row_sel = np.concatenate([np.arange(starts[u], starts[u + 1]) for u in members])
        raw = _rows_for(bundle, units.rows[row_sel])
        probs = bundle.predict_proba(raw)
        votes = bundle.predict(raw)
        pos = 0
        for u in members:
            m = starts[u + 1] - starts[u]
            if units.technique is Technique.MV:
                c, _ = majority_vote(votes[pos:pos + m], probs[pos:pos + m], bundle.classes)
            else:
                c = int(votes[pos])
            preds[u] = bundle.classes[c]
            pos += m
    return preds, [b.layout_id for b in chosen]
