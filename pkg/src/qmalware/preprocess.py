"""Feature preparation: byte images, PCA, range scaling, CSV ingestion and
synthetic stand-in datasets."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from qmalware.errors import DatasetSizeError, SchemaError

IMAGE_SIDE = 64
MAX_BINARY_BYTES = 16 * 1024 * 1024
CLASS_DIRS = {"benign": 0, "malicious": 1}


@dataclass
class Dataset:
    samples: np.ndarray
    labels: np.ndarray
    ids: list
    feature_names: Optional[list] = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        self.ids = [str(i) for i in self.ids]
        if not (len(self.samples) == len(self.labels) == len(self.ids)):
            raise ValueError("samples, labels and ids must have equal lengths")

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.samples[idx], self.labels[idx], [self.ids[i] for i in idx], self.feature_names)

    def with_samples(self, samples) -> "Dataset":
        return Dataset(samples, self.labels, self.ids, None)

    def to_csv(self, path) -> None:
        names = self.feature_names or [f"f{j}" for j in range(self.n_features)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", *names, "label"])
            for sid, x, lbl in zip(self.ids, self.samples, self.labels):
                w.writerow([sid, *(repr(float(v)) for v in x), int(lbl)])


# -- grayscale images --------------------------------------------------------------


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) matrix averaging input cells over each output cell."""
    edges_in = np.arange(n_in + 1, dtype=float)
    edges_out = np.linspace(0.0, n_in, n_out + 1)
    lo = np.maximum(edges_out[:-1, None], edges_in[None, :-1])
    hi = np.minimum(edges_out[1:, None], edges_in[None, 1:])
    W = np.clip(hi - lo, 0.0, None)
    return W / W.sum(axis=1, keepdims=True)


def byte_grid(data: bytes) -> np.ndarray:
    """Row-major square-ish grid of the bytes, zero-padded on the last row."""
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    width = math.isqrt(buf.size)
    if width * width < buf.size:
        width += 1
    height = -(-buf.size // width)
    grid = np.zeros(width * height, dtype=np.uint8)
    grid[: buf.size] = buf
    return grid.reshape(height, width)


def binary_to_image(data: bytes, side: int = IMAGE_SIDE) -> np.ndarray:
    """Grayscale ``side x side`` image of a byte sequence, area-averaged."""
    if len(data) == 0:
        raise ValueError("cannot image an empty byte sequence")
    if len(data) > MAX_BINARY_BYTES:
        raise ValueError(f"binary larger than {MAX_BINARY_BYTES} bytes")
    grid = byte_grid(data)
    Wr = _area_weights(grid.shape[0], side)
    Wc = _area_weights(grid.shape[1], side)
    # contract rows in chunks so large files are never upcast whole
    rows = np.zeros((side, grid.shape[1]))
    step = 256
    for start in range(0, grid.shape[0], step):
        rows += Wr[:, start : start + step] @ grid[start : start + step].astype(float)
    return np.clip(rows @ Wc.T, 0.0, 255.0)


def load_binaries_dir(path, side: int = IMAGE_SIDE) -> Dataset:
    """Flattened images of every file under ``benign/`` and ``malicious/``."""
    root = Path(path)
    samples, labels, ids = [], [], []
    found = False
    for name, label in sorted(CLASS_DIRS.items(), key=lambda kv: kv[1]):
        sub = root / name
        if not sub.is_dir():
            continue
        found = True
        for file in sorted(p for p in sub.rglob("*") if p.is_file()):
            samples.append(binary_to_image(file.read_bytes(), side).reshape(-1))
            labels.append(label)
            ids.append(file.relative_to(root).as_posix())
    if not found:
        raise SchemaError(f"{root}: expected 'benign/' and/or 'malicious/' subdirectories")
    if not samples:
        raise SchemaError(f"{root}: no files found")
    return Dataset(np.array(samples), labels, ids)


# -- PCA ---------------------------------------------------------------------------


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "PcaModel":
        return cls(np.asarray(d["mean"]), np.asarray(d["components"]), np.asarray(d["explained_variance"]))


def pca_fit(X, k: int) -> PcaModel:
    """Top-``k`` right singular vectors of the centred data.

    Each component's sign is fixed so its largest-magnitude entry is
    positive.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least two samples")
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k must be in [1, {min(n, d)}], got {k}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = vt[:k]
    pivot = np.abs(comps).argmax(axis=1)
    comps = comps * np.sign(comps[np.arange(k), pivot])[:, None]
    return PcaModel(mean, comps, s[:k] ** 2 / (n - 1))


def pca_transform(model: PcaModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.mean.size:
        raise ValueError(f"expected {model.mean.size} features, got {X.shape[1]}")
    return (X - model.mean) @ model.components.T


# -- scaling -----------------------------------------------------------------------


@dataclass
class ScalerModel:
    """Constant features map to the midpoint of ``[lo, hi]``."""

    data_min: np.ndarray
    data_max: np.ndarray
    lo: float
    hi: float

    def to_dict(self) -> dict:
        return {"data_min": self.data_min.tolist(), "data_max": self.data_max.tolist(), "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d) -> "ScalerModel":
        return cls(np.asarray(d["data_min"]), np.asarray(d["data_max"]), float(d["lo"]), float(d["hi"]))


def scale_fit(X, lo: float = 0.0, hi: float = np.pi / 2) -> ScalerModel:
    if not hi > lo:
        raise ValueError(f"target range needs hi > lo, got [{lo}, {hi}]")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return ScalerModel(X.min(axis=0), X.max(axis=0), float(lo), float(hi))


def scale_transform(model: ScalerModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.data_min.size:
        raise ValueError(f"expected {model.data_min.size} features, got {X.shape[1]}")
    span = model.data_max - model.data_min
    const = span <= 0
    safe = np.where(const, 1.0, span)
    out = model.lo + (X - model.data_min) / safe * (model.hi - model.lo)
    out[:, const] = 0.5 * (model.lo + model.hi)
    return np.clip(out, model.lo, model.hi)


# -- CSV ---------------------------------------------------------------------------


def load_csv(path, label_column: str = "label", id_column: str = "id") -> Dataset:
    """Headered numeric CSV with a ``{0, 1}`` label column.

    Row order is preserved. Ids come from ``id_column`` when present and
    are the zero-based row index otherwise.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise SchemaError(f"{path}: missing label column '{label_column}'")
        li = header.index(label_column)
        ii = header.index(id_column) if id_column in header else None
        feat_idx = [k for k in range(len(header)) if k not in (li, ii)]
        samples, labels, ids = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}: row {rownum} has {len(row)} fields, expected {len(header)}")
            try:
                label = float(row[li])
            except ValueError:
                raise SchemaError(f"{path}: row {rownum}: label {row[li]!r} is not numeric") from None
            if label not in (0.0, 1.0):
                raise SchemaError(f"{path}: row {rownum}: label {row[li]!r} not in {{0, 1}}")
            try:
                samples.append([float(row[k]) for k in feat_idx])
            except ValueError as exc:
                raise SchemaError(f"{path}: row {rownum}: {exc}") from None
            labels.append(int(label))
            ids.append(row[ii] if ii is not None else str(len(ids)))
    if not samples:
        raise SchemaError(f"{path}: no data rows")
    return Dataset(np.array(samples), labels, ids, [header[k] for k in feat_idx])


# -- synthetic data ----------------------------------------------------------------


class SyntheticKind(str, enum.Enum):
    ANGULAR_BLOBS = "angular_blobs"
    NOISY_XOR = "noisy_xor"


BLOB_CENTERS = (0.45, 1.12)
BLOB_SIGMA = 0.2
BLOB_MARGIN = 0.3


def _class_counts(n: int) -> tuple:
    return n // 2, n - n // 2


def _angular_blobs(n: int, d: int, rng: np.random.Generator) -> tuple:
    """Clusters around ``c * (1, ..., 1)`` for the two centres.

    Points are rejection-sampled to stay in ``[0, pi/2]^d`` and at least
    ``BLOB_MARGIN / 2`` from the bisecting hyperplane on their own side.
    """
    w = np.ones(d) / np.sqrt(d)
    mid = 0.5 * sum(BLOB_CENTERS) * np.sqrt(d)
    X, y = [], []
    for label, count in enumerate(_class_counts(n)):
        centre = np.full(d, BLOB_CENTERS[label])
        sign = -1.0 if label == 0 else 1.0
        got = 0
        while got < count:
            batch = centre + BLOB_SIGMA * rng.standard_normal((4 * count, d))
            inside = np.all((batch >= 0) & (batch <= np.pi / 2), axis=1)
            side = sign * (batch @ w - mid) >= BLOB_MARGIN / 2
            keep = batch[inside & side][: count - got]
            X.append(keep)
            y.extend([label] * len(keep))
            got += len(keep)
    return np.vstack(X), np.array(y)


def _noisy_xor(n: int, rng: np.random.Generator, noise: float = 0.05) -> tuple:
    half = np.pi / 4
    X, y = [], []
    for label, count in enumerate(_class_counts(n)):
        # class 0 in quadrants (low, low)/(high, high), class 1 in the mixed ones
        quad = rng.integers(0, 2, size=count)
        hi0 = quad.astype(bool)
        hi1 = hi0 ^ bool(label)
        u = rng.uniform(0, half, size=(count, 2))
        u[:, 0] += half * hi0
        u[:, 1] += half * hi1
        X.append(u)
        y.extend([label] * count)
    X, y = np.vstack(X), np.array(y)
    flips = int(round(noise * n / 2))
    for label in (0, 1):
        members = np.flatnonzero(y == label)
        y[rng.choice(members, size=min(flips, members.size), replace=False)] = 1 - label
    return X, y


def generate_synthetic(kind, n: int, seed: int = 0, n_features: int = 2) -> Dataset:
    """Deterministic, class-balanced toy data inside ``[0, pi/2]^d``.

    ``noisy_xor`` always has two features; label noise flips the same
    number of samples in each class so the split stays balanced.
    """
    kind = SyntheticKind(kind)
    if n < 4:
        raise ValueError(f"need at least 4 samples, got {n}")
    rng = np.random.default_rng(seed)
    if kind is SyntheticKind.ANGULAR_BLOBS:
        if n_features < 1:
            raise ValueError("n_features must be >= 1")
        X, y = _angular_blobs(n, n_features, rng)
    else:
        X, y = _noisy_xor(n, rng)
    order = rng.permutation(n)
    X, y = X[order], y[order]
    return Dataset(X, y, [str(i) for i in range(n)], [f"x{j}" for j in range(X.shape[1])])


# -- splitting ---------------------------------------------------------------------


def stratified_split(labels, train_size: int, test_size: int, seed: int) -> tuple:
    """Seeded shuffle then per-class prefix split.

    Each class contributes to train and test in proportion to its share of
    the dataset (largest-remainder rounding). Returned index arrays are in
    shuffled order.
    """
    labels = np.asarray(labels)
    n = labels.size
    if train_size < 1 or test_size < 0:
        raise ValueError("train_size must be >= 1 and test_size >= 0")
    if train_size + test_size > n:
        raise DatasetSizeError(f"train {train_size} + test {test_size} exceeds {n} samples")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    classes = np.unique(labels)
    pools = {c: perm[labels[perm] == c] for c in classes}

    def allocate(total, available):
        pool = sum(len(v) for v in available.values())
        share = {c: total * len(available[c]) / pool for c in classes}
        base = {c: min(int(np.floor(share[c])), len(available[c])) for c in classes}
        rest = total - sum(base.values())
        for c in sorted(classes, key=lambda c: (-(share[c] - np.floor(share[c])), c)):
            if rest == 0:
                break
            if base[c] < len(available[c]):
                base[c] += 1
                rest -= 1
        for c in classes:
            while rest and base[c] < len(available[c]):
                base[c] += 1
                rest -= 1
        return base

    n_train = allocate(train_size, pools)
    train_mask = np.zeros(n, dtype=bool)
    for c in classes:
        train_mask[pools[c][: n_train[c]]] = True
    remaining = {c: pools[c][n_train[c] :] for c in classes}
    n_test = allocate(test_size, {c: remaining[c] for c in classes})
    test_mask = np.zeros(n, dtype=bool)
    for c in classes:
        test_mask[remaining[c][: n_test[c]]] = True
    train_idx = perm[train_mask[perm]]
    test_idx = perm[test_mask[perm]]
    return train_idx, test_idx
