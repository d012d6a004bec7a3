"""Core containers: feature matrices, labels, the softmax head, and the
magnitude/angle decomposition of final-layer activations.

All containers are immutable after construction and every operation here is
a pure function, so everything in this module is safe to share across
threads. Feature files may store float32; arrays are widened to float64 on
load and all arithmetic is done in 64-bit.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DegenerateWeightError, DimensionError, NumericalError

__all__ = [
    "FeatureMatrix",
    "LabelVector",
    "SoftmaxHead",
    "AngleDecomposition",
    "softmax",
    "logits",
    "decompose",
    "load_features",
    "save_features",
    "load_head",
    "save_head",
]

_FEAT_MAGIC = b"FEAT"
_FEAT_VERSION = 1


def _as_f64(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericalError("array contains non-finite entries")
    return arr


@dataclass(frozen=True)
class FeatureMatrix:
    """N x H matrix of final-layer activations."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_f64(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"features must be a 2-D N x H matrix, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelVector:
    """Length-N integer class labels in [0, k)."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.int64)
        if arr.ndim != 1:
            raise DimensionError("labels must be a 1-D vector")
        if self.k < 1:
            raise DimensionError("k must be >= 1")
        if arr.size and (arr.min() < 0 or arr.max() >= self.k):
            raise DataFormatError(f"label out of range [0, {self.k})")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class SoftmaxHead:
    """Final-layer weights w (H x K, columns are per-class vectors) and bias b.

    The bias is kept explicit: logit_i = w_i . z + b_i.
    """

    w: np.ndarray
    b: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = _as_f64(self.w)
        b = _as_f64(self.b)
        if w.ndim != 2:
            raise DimensionError("head weights must be an H x K matrix")
        if b.ndim != 1 or b.shape[0] != w.shape[1]:
            raise DimensionError("bias length must equal the number of classes")
        if w.shape[1] < 2:
            raise DimensionError("a softmax head needs at least 2 classes")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def h(self) -> int:
        return self.w.shape[0]

    @property
    def k(self) -> int:
        return self.w.shape[1]

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.w, axis=0)


@dataclass(frozen=True)
class AngleDecomposition:
    """||z||, the cosine of z against every weight column, and the argmax class.

    For z = 0 all cosines are defined to be 0.
    """

    z_norm: float
    cos_theta: np.ndarray
    argmax_class: int


def logits(head: SoftmaxHead, z: np.ndarray) -> np.ndarray:
    z = _as_f64(z)
    if z.shape != (head.h,):
        raise DimensionError(f"expected z of shape ({head.h},), got {z.shape}")
    return head.w.T @ z + head.b


def softmax(head: SoftmaxHead, z: np.ndarray) -> np.ndarray:
    """Softmax probabilities for one activation vector.

    Uses max-logit subtraction for numerical stability.
    """
    ell = logits(head, z)
    ell = ell - ell.max()
    e = np.exp(ell)
    return e / e.sum()


def softmax_from_logits(ell: np.ndarray) -> np.ndarray:
    ell = np.asarray(ell, dtype=np.float64)
    shifted = ell - ell.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def decompose(head: SoftmaxHead, z: np.ndarray) -> AngleDecomposition:
    """Split w_i . z into ||z|| ||w_i|| cos(theta) terms.

    Argmax ties are broken toward the lowest class index. Cosines ignore the
    bias; the argmax class is taken over the full logits.
    """
    z = _as_f64(z)
    if z.shape != (head.h,):
        raise DimensionError(f"expected z of shape ({head.h},), got {z.shape}")
    w_norms = head.column_norms()
    if np.any(w_norms == 0.0):
        raise DegenerateWeightError("head has a zero-norm weight column")
    z_norm = float(np.linalg.norm(z))
    if z_norm == 0.0:
        cos = np.zeros(head.k)
    else:
        cos = (head.w.T @ z) / (w_norms * z_norm)
        cos = np.clip(cos, -1.0, 1.0)
    argmax = int(np.argmax(head.w.T @ z + head.b))
    return AngleDecomposition(z_norm=z_norm, cos_theta=cos, argmax_class=argmax)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def save_features(path, features: FeatureMatrix, labels: LabelVector | None = None,
                  fmt: str = "csv") -> None:
    if labels is not None and labels.n != features.n:
        raise DimensionError("label count does not match feature count")
    if fmt == "csv":
        _save_features_csv(path, features, labels)
    elif fmt == "binary":
        _save_features_binary(path, features, labels)
    else:
        raise DataFormatError(f"unknown feature format {fmt!r}")


def load_features(path, fmt: str = "csv", k: int | None = None):
    """Read features (and labels, when present) from a CSV or binary file.

    Returns (FeatureMatrix, LabelVector | None). ``k`` bounds the label
    range; when omitted it is inferred as max(label) + 1.
    """
    if fmt == "csv":
        return _load_features_csv(path, k)
    if fmt == "binary":
        return _load_features_binary(path, k)
    raise DataFormatError(f"unknown feature format {fmt!r}")


def _save_features_csv(path, features, labels):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = [f"h{i}" for i in range(features.h)]
        if labels is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(features.n):
            row = [repr(float(v)) for v in features.data[i]]
            if labels is not None:
                row.append(str(int(labels.labels[i])))
            writer.writerow(row)


def _load_features_csv(path, k):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty feature file")
        has_labels = bool(header) and header[-1] == "label"
        h = len(header) - (1 if has_labels else 0)
        expected = [f"h{i}" for i in range(h)]
        if header[:h] != expected:
            raise DataFormatError("malformed feature header, expected h0..h{H-1}[,label]")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(f"row {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(v) for v in row[:h]])
                if has_labels:
                    labels.append(int(row[h]))
            except ValueError as e:
                raise DataFormatError(f"row {lineno}: non-numeric field") from e
    features = FeatureMatrix(np.array(rows, dtype=np.float64))
    if has_labels:
        kk = k if k is not None else (max(labels) + 1 if labels else 1)
        return features, LabelVector(np.array(labels), k=kk)
    return features, None


def _save_features_binary(path, features, labels):
    data32 = features.data.astype("<f4")
    with open(path, "wb") as f:
        f.write(_FEAT_MAGIC)
        f.write(struct.pack("<IIIB", _FEAT_VERSION, features.n, features.h,
                            1 if labels is not None else 0))
        f.write(data32.tobytes(order="C"))
        if labels is not None:
            f.write(labels.labels.astype("<u4").tobytes())


def _load_features_binary(path, k):
    with open(path, "rb") as f:
        raw = f.read()
    buf = io.BytesIO(raw)
    if buf.read(4) != _FEAT_MAGIC:
        raise DataFormatError("bad magic bytes, not a feature file")
    version, n, h, has_labels = struct.unpack("<IIIB", buf.read(13))
    if version != _FEAT_VERSION:
        raise DataFormatError(f"unsupported feature file version {version}")
    body = buf.read(4 * n * h)
    if len(body) != 4 * n * h:
        raise DataFormatError("truncated feature payload")
    data = np.frombuffer(body, dtype="<f4").reshape(n, h).astype(np.float64)
    features = FeatureMatrix(data)
    if has_labels:
        lbl_raw = buf.read(4 * n)
        if len(lbl_raw) != 4 * n:
            raise DataFormatError("truncated label payload")
        labels = np.frombuffer(lbl_raw, dtype="<u4").astype(np.int64)
        kk = k if k is not None else int(labels.max()) + 1 if n else 1
        return features, LabelVector(labels, k=kk)
    return features, None


def save_head(path, head: SoftmaxHead) -> None:
    """Head file: H rows x K columns of weights, one trailing row for b."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in head.w:
            writer.writerow([repr(float(v)) for v in row])
        writer.writerow([repr(float(v)) for v in head.b])


def load_head(path) -> SoftmaxHead:
    with open(path, newline="") as f:
        try:
            rows = [[float(v) for v in row] for row in csv.reader(f) if row]
        except ValueError as e:
            raise DataFormatError("non-numeric field in head file") from e
    if len(rows) < 2:
        raise DataFormatError("head file needs at least one weight row plus a bias row")
    arr = np.array(rows, dtype=np.float64)
    return SoftmaxHead(w=arr[:-1], b=arr[-1])
