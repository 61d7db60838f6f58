"""Versioned, checksummed model bundle files.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"ENVCBNDL"
    8       2     format version (uint16)
    10      2     reserved, zero
    12      8     payload length in bytes (uint64)
    20      32    SHA-256 of the payload
    52      n     payload: UTF-8 JSON document

Arrays inside the payload are objects ``{"dtype", "shape", "data"}`` with
``data`` the base64 of the raw little-endian buffer, so floats round-trip
bit-for-bit.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..features import FeatureSetId, NormalizationParams, normalize_matrix
from ..ingest import Label
from .dnn import DnnModel
from .forest import RandomForestModel
from .tree import DecisionTreeModel, ModelError, TreeParams

MAGIC = b"ENVCBNDL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHHQ32s")

Model = Union[DecisionTreeModel, RandomForestModel, DnnModel]
MODEL_KINDS = ("dt", "rf", "dnn")

THREE_CLASSES = (Label.O, Label.II, Label.INW)
TWO_CLASSES = (Label.O, Label.I)


class BundleError(ModelError):
    pass


class BundleVersionError(BundleError):
    pass


class BundleChecksumError(BundleError):
    pass


def class_mapping(n_classes: int) -> tuple[Label, ...]:
    if n_classes == 3:
        return THREE_CLASSES
    if n_classes == 2:
        return TWO_CLASSES
    raise BundleError(f"class count must be 2 or 3, got {n_classes}")


def model_kind(model: Model) -> str:
    if isinstance(model, DecisionTreeModel):
        return "dt"
    if isinstance(model, RandomForestModel):
        return "rf"
    if isinstance(model, DnnModel):
        return "dnn"
    raise BundleError(f"unsupported model type {type(model).__name__}")


def fingerprint(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(y, dtype="<i8").tobytes())
    return h.hexdigest()


@dataclass
class ModelBundle:
    model: Model
    layout_id: FeatureSetId
    normalizer: NormalizationParams
    classes: tuple[Label, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layout_id = FeatureSetId(self.layout_id)
        self.classes = tuple(Label(c) for c in self.classes)
        if self.normalizer.layout_id is not self.layout_id:
            raise BundleError("normalizer layout differs from bundle layout")
        if self.normalizer.dim != self.model.n_features:
            raise BundleError(
                f"normalizer has {self.normalizer.dim} features but the model expects {self.model.n_features}")
        if len(self.classes) != self.model.n_classes:
            raise BundleError(f"{len(self.classes)} class names for a {self.model.n_classes}-class model")

    @property
    def kind(self) -> str:
        return model_kind(self.model)

    def class_index(self, label: Label) -> int:
        return self.classes.index(label)

    def predict_proba(self, raw: np.ndarray) -> np.ndarray:
        """Probabilities for raw (unnormalized) feature rows."""
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        return self.model.predict_proba(normalize_matrix(raw, self.normalizer))

    def predict(self, raw: np.ndarray) -> np.ndarray:
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        return self.model.predict(normalize_matrix(raw, self.normalizer))


# --------------------------------------------------------------------------
# encoding
# --------------------------------------------------------------------------

def _arr(a: np.ndarray) -> dict:
    a = np.asarray(a)
    dtype = "<f8" if a.dtype.kind == "f" else "<i8"
    return {"dtype": dtype, "shape": list(a.shape),
            "data": base64.b64encode(np.ascontiguousarray(a, dtype=dtype).tobytes()).decode("ascii")}


def _unarr(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    a = np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"])
    return a.astype(np.float64 if obj["dtype"] == "<f8" else np.intp)


def _tree_to(t: DecisionTreeModel) -> dict:
    return {
        "feature": _arr(t.feature), "threshold": _arr(t.threshold),
        "left": _arr(t.left), "right": _arr(t.right), "counts": _arr(t.counts),
        "n_features": t.n_features,
        "params": {"max_depth": t.params.max_depth, "min_samples_leaf": t.params.min_samples_leaf,
                   "max_features": t.params.max_features},
    }


def _tree_from(obj: dict) -> DecisionTreeModel:
    counts = _unarr(obj["counts"]).astype(np.int64)
    return DecisionTreeModel(
        _unarr(obj["feature"]), _unarr(obj["threshold"]), _unarr(obj["left"]), _unarr(obj["right"]),
        counts, int(obj["n_features"]), TreeParams(**obj["params"]),
    )


def _model_to(model: Model) -> dict:
    kind = model_kind(model)
    if kind == "dt":
        return _tree_to(model)
    if kind == "rf":
        return {"trees": [_tree_to(t) for t in model.trees], "seeds": model.seeds,
                "max_features": model.max_features, "feature_mode": model.feature_mode}
    return {"weights": [_arr(w) for w in model.weights], "biases": [_arr(b) for b in model.biases],
            "activation": model.activation, "history": model.history}


def _model_from(kind: str, obj: dict) -> Model:
    if kind == "dt":
        return _tree_from(obj)
    if kind == "rf":
        return RandomForestModel([_tree_from(t) for t in obj["trees"]], list(obj["seeds"]),
                                 obj["max_features"], obj["feature_mode"])
    if kind == "dnn":
        return DnnModel([_unarr(w) for w in obj["weights"]], [_unarr(b) for b in obj["biases"]],
                        obj["activation"], dict(obj.get("history", {})))
    raise BundleError(f"unknown model kind {kind!r}")


def dumps_bundle(bundle: ModelBundle) -> bytes:
    payload = json.dumps({
        "kind": bundle.kind,
        "layout": bundle.layout_id.value,
        "classes": [c.value for c in bundle.classes],
        "normalizer": bundle.normalizer.to_json(),
        "metadata": bundle.metadata,
        "model": _model_to(bundle.model),
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(MAGIC, FORMAT_VERSION, 0, len(payload), hashlib.sha256(payload).digest()) + payload


def loads_bundle(data: bytes) -> ModelBundle:
    if len(data) < _HEADER.size:
        raise BundleChecksumError("bundle truncated inside the header")
    magic, version, _, length, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BundleError("not a model bundle (bad magic)")
    if version != FORMAT_VERSION:
        raise BundleVersionError(f"bundle format version {version}, this build reads version {FORMAT_VERSION}")
    payload = data[_HEADER.size:]
    if len(payload) != length or hashlib.sha256(payload).digest() != digest:
        raise BundleChecksumError("bundle checksum mismatch (truncated or corrupted)")
    doc = json.loads(payload.decode("utf-8"))
    model = _model_from(doc["kind"], doc["model"])
    normalizer = NormalizationParams.from_json(doc["normalizer"])
    return ModelBundle(model, FeatureSetId(doc["layout"]), normalizer,
                       tuple(Label(c) for c in doc["classes"]), doc.get("metadata", {}))


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    Path(path).write_bytes(dumps_bundle(bundle))


def load_bundle(path: str | Path) -> ModelBundle:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise BundleError(f"cannot read bundle {path}: {exc}") from exc
    return loads_bundle(data)


def predict_labels(bundle: ModelBundle, raw: np.ndarray) -> Sequence[Label]:
    return [bundle.classes[i] for i in bundle.predict(raw)]
