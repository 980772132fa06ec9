"""Shared model container, label encoding and JSON serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..errors import EmptyTrainSet, SchemaVersionMismatch, SingleClassTrainSet
from ..features import Normalizer

SCHEMA_VERSION = 1
KINDS = ("KNN", "SVM", "MLP", "MAHALANOBIS")


@dataclass
class TrainedModel:
    kind: str
    class_set: Tuple[str, str]
    params: Dict[str, object]
    normalizer: Normalizer
    schema_version: int = SCHEMA_VERSION
    info: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "class_set": list(self.class_set),
            "normalizer": self.normalizer.to_dict(),
            "params": {k: _encode(v) for k, v in self.params.items()},
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"model schema {d.get('schema_version')!r}, expected {SCHEMA_VERSION}")
        return cls(d["kind"], tuple(d["class_set"]), {k: _decode(v) for k, v in d["params"].items()},
                   Normalizer.from_dict(d["normalizer"]), d["schema_version"], d.get("info", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Prediction:
    """``score`` is kind-specific, see the predict function of each classifier."""
    label: str
    score: float


def _encode(v):
    if isinstance(v, np.ndarray):
        return {"__array__": v.tolist(), "dtype": str(v.dtype), "shape": list(v.shape)}
    if isinstance(v, (list, tuple)) and v and isinstance(v[0], np.ndarray):
        return {"__arrays__": [_encode(a) for a in v]}
    if isinstance(v, np.generic):
        return v.item()
    return v


def _decode(v):
    if isinstance(v, dict) and "__array__" in v:
        return np.array(v["__array__"], dtype=v["dtype"]).reshape(v["shape"])
    if isinstance(v, dict) and "__arrays__" in v:
        return [_decode(a) for a in v["__arrays__"]]
    return v


def encode_labels(y: Sequence, class_set: Optional[Sequence[str]] = None, need_both=True):
    """Map labels to {0, 1} by position in ``class_set`` (sorted labels when omitted)."""
    y = [getattr(v, "value", v) for v in y]
    if not y:
        raise EmptyTrainSet("empty training set")
    if class_set is None:
        class_set = sorted(set(y))
        if len(class_set) == 1 and not need_both:
            raise SingleClassTrainSet("pass class_set explicitly for a single-class training set")
    class_set = tuple(getattr(c, "value", c) for c in class_set)
    if need_both and len(set(y)) < 2:
        raise SingleClassTrainSet(f"training set contains only class {y[0]!r}")
    if len(class_set) != 2:
        raise SingleClassTrainSet(f"need a pair of classes, got {class_set}")
    index = {c: i for i, c in enumerate(class_set)}
    unknown = set(y) - set(index)
    if unknown:
        raise ValueError(f"labels {sorted(unknown)} not in class set {class_set}")
    return np.array([index[v] for v in y], dtype=int), class_set


def as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X[None, :] if X.ndim == 1 else X
