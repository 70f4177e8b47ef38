"""Kernel classifiers: fidelity kernels, classical baselines, an SMO dual
solver and the accuracy/F1 metrics used in the reports."""

from __future__ import annotations

import csv
import enum
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from qmalware.errors import DegenerateLabelsError, SchemaError
from qmalware.featuremaps import FeatureMapConfig, build_encoding_circuit, encode_state
from qmalware.simcore import overlap_probability, run_circuit, sample_measurements

log = logging.getLogger(__name__)

MODEL_FORMAT = "qmalware-svm"
MODEL_VERSION = 1


@dataclass
class KernelMatrix:
    values: np.ndarray
    row_ids: list
    col_ids: list

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self, path) -> None:
        """Write with a header row of column ids and a leading id column."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + [str(c) for c in self.col_ids])
            for rid, row in zip(self.row_ids, self.values):
                w.writerow([str(rid)] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "KernelMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:1] != ["id"]:
            raise SchemaError(f"{path}: missing 'id' header")
        col_ids = rows[0][1:]
        row_ids = [r[0] for r in rows[1:]]
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
        return cls(values.reshape(len(row_ids), len(col_ids)), row_ids, col_ids)


# -- quantum kernels ---------------------------------------------------------------


def quantum_kernel(
    config: FeatureMapConfig,
    x: Sequence[float],
    y: Sequence[float],
    shots: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Fidelity ``|<phi(x)|phi(y)>|^2``.

    With ``shots`` set, the value is instead estimated as the frequency of
    the all-zero outcome of ``U(y)^dagger U(x)|0>``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size or x.size != config.n_features:
        raise ValueError(
            f"kernel inputs must both have {config.n_features} features, got {x.size} and {y.size}"
        )
    if shots is None:
        return overlap_probability(encode_state(config, x), encode_state(config, y))
    circuit = build_encoding_circuit(config, x)
    circuit.extend(build_encoding_circuit(config, y).inverse().gates)
    counts = sample_measurements(run_circuit(circuit), shots, seed)
    return counts.get("0" * config.n_qubits, 0) / shots


def _encode_all(config, X, workers):
    X = [np.asarray(x, dtype=float) for x in X]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            states = list(pool.map(lambda x: encode_state(config, x), X))
    else:
        states = [encode_state(config, x) for x in X]
    return np.array([s.amplitudes for s in states])


def _as_samples(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    return X


def gram_matrix(
    config: FeatureMapConfig, X, ids: Optional[Sequence] = None, workers: int = 1
) -> KernelMatrix:
    """Training Gram matrix; only the upper triangle is evaluated."""
    X = _as_samples(X, "X")
    if X.shape[1] != config.n_features:
        raise ValueError(f"expected {config.n_features} features, got {X.shape[1]}")
    amps = _encode_all(config, X, workers)
    m = len(amps)
    G = np.empty((m, m))
    for i in range(m):
        row = np.abs(amps[i:] @ amps[i].conj()) ** 2
        G[i, i:] = row
        G[i:, i] = row
    # encoded states are unit-norm, so self-fidelity is exactly 1
    np.fill_diagonal(G, 1.0)
    ids = list(range(m)) if ids is None else list(ids)
    return KernelMatrix(np.minimum(G, 1.0), ids, ids)


def cross_gram(
    config: FeatureMapConfig,
    X_test,
    X_train,
    test_ids: Optional[Sequence] = None,
    train_ids: Optional[Sequence] = None,
    workers: int = 1,
) -> KernelMatrix:
    X_test = _as_samples(X_test, "X_test")
    X_train = _as_samples(X_train, "X_train")
    for X in (X_test, X_train):
        if X.shape[1] != config.n_features:
            raise ValueError(f"expected {config.n_features} features, got {X.shape[1]}")
    a = _encode_all(config, X_test, workers)
    b = _encode_all(config, X_train, workers)
    K = np.minimum(np.abs(a.conj() @ b.T) ** 2, 1.0)
    test_ids = list(range(len(a))) if test_ids is None else list(test_ids)
    train_ids = list(range(len(b))) if train_ids is None else list(train_ids)
    return KernelMatrix(K, test_ids, train_ids)


# -- classical kernels -------------------------------------------------------------


class ClassicalKernelKind(str, enum.Enum):
    LINEAR = "linear"
    POLY = "poly"
    RBF = "rbf"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class ClassicalKernelSpec:
    """``gamma=None`` resolves to ``1 / n_features`` at evaluation time."""

    kind: ClassicalKernelKind
    degree: int = 3
    gamma: Optional[float] = None
    coef0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ClassicalKernelKind(self.kind))
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")

    def resolved_gamma(self, n_features: int) -> float:
        return 1.0 / n_features if self.gamma is None else float(self.gamma)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "degree": self.degree, "gamma": self.gamma, "coef0": self.coef0}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassicalKernelSpec":
        return cls(
            kind=d["kind"],
            degree=int(d.get("degree", 3)),
            gamma=d.get("gamma"),
            coef0=float(d.get("coef0", 0.0)),
        )


def _classical_block(spec: ClassicalKernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if spec.kind is ClassicalKernelKind.LINEAR:
        return A @ B.T
    gamma = spec.resolved_gamma(A.shape[1])
    if spec.kind is ClassicalKernelKind.POLY:
        return (gamma * (A @ B.T) + spec.coef0) ** spec.degree
    if spec.kind is ClassicalKernelKind.RBF:
        sq = (A**2).sum(1)[:, None] + (B**2).sum(1)[None, :] - 2 * A @ B.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    return np.tanh(gamma * (A @ B.T) + spec.coef0)


def classical_kernel(spec: ClassicalKernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    if x.shape != y.shape:
        raise ValueError(f"kernel inputs differ in length: {x.shape[1]} vs {y.shape[1]}")
    return float(_classical_block(spec, x, y)[0, 0])


def classical_gram(spec: ClassicalKernelSpec, X, Y=None, row_ids=None, col_ids=None) -> KernelMatrix:
    X = _as_samples(X, "X")
    Y = X if Y is None else _as_samples(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError("sample sets differ in feature count")
    K = _classical_block(spec, X, Y)
    if Y is X:
        K = np.triu(K) + np.triu(K, 1).T
    row_ids = list(range(len(X))) if row_ids is None else list(row_ids)
    col_ids = list(range(len(Y))) if col_ids is None else list(col_ids)
    return KernelMatrix(K, row_ids, col_ids)


# -- SVM ---------------------------------------------------------------------------


@dataclass
class SvmModel:
    alphas: np.ndarray
    bias: float
    labels: np.ndarray
    C: float
    kernel: Optional[dict] = None
    dual_history: list = field(default_factory=list)
    converged: bool = True

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > 0)

    @property
    def dual_coef(self) -> np.ndarray:
        return self.alphas * self.labels

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "alphas": [float(a) for a in self.alphas],
            "bias": float(self.bias),
            "labels": [int(v) for v in self.labels],
            "C": float(self.C),
            "kernel": self.kernel,
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise SchemaError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} document")
        return cls(
            alphas=np.array(d["alphas"], dtype=float),
            bias=float(d["bias"]),
            labels=np.array(d["labels"], dtype=int),
            C=float(d["C"]),
            kernel=d.get("kernel"),
            converged=bool(d.get("converged", True)),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SvmModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def dual_objective(alphas: np.ndarray, labels: np.ndarray, K: np.ndarray) -> float:
    ay = alphas * labels
    return float(alphas.sum() - 0.5 * ay @ K @ ay)


def svm_fit(
    K,
    labels,
    C: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 50,
    max_sweeps: int = 10_000,
) -> SvmModel:
    """Soft-margin dual SVM by sequential minimal optimisation.

    Each sweep visits every KKT violator ``i`` and pairs it with the ``j``
    maximising ``|E_i - E_j|``, falling back to the remaining indices in
    that order. Training stops after ``max_passes`` consecutive sweeps
    without an update. The dual objective after each sweep is kept in
    ``dual_history``.
    """
    K = np.asarray(K.values if isinstance(K, KernelMatrix) else K, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(-1)
    n = y.size
    if K.shape != (n, n):
        raise ValueError(f"kernel shape {K.shape} does not match {n} labels")
    if C <= 0:
        raise ValueError(f"C must be > 0, got {C}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    if np.unique(y).size < 2:
        raise DegenerateLabelsError("training labels contain a single class")

    alpha = np.zeros(n)
    f = np.zeros(n)  # K @ (alpha * y), kept incrementally
    b = 0.0
    history = [dual_objective(alpha, y, K)]

    def take_step(i, j, Ei, Ej):
        nonlocal b
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            lo, hi = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            lo, hi = max(0.0, ai + aj - C), min(C, ai + aj)
        if hi - lo < 1e-14:
            return False
        eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
        if eta >= -1e-14:
            return False
        aj_new = min(hi, max(lo, aj - y[j] * (Ei - Ej) / eta))
        if abs(aj_new - aj) < 1e-10:
            return False
        ai_new = ai + y[i] * y[j] * (aj - aj_new)
        di, dj = y[i] * (ai_new - ai), y[j] * (aj_new - aj)
        b1 = b - Ei - di * K[i, i] - dj * K[i, j]
        b2 = b - Ej - di * K[i, j] - dj * K[j, j]
        if 0.0 < ai_new < C:
            b = b1
        elif 0.0 < aj_new < C:
            b = b2
        else:
            b = 0.5 * (b1 + b2)
        alpha[i], alpha[j] = ai_new, aj_new
        f[:] += di * K[:, i] + dj * K[:, j]
        return True

    passes = sweeps = 0
    while passes < max_passes and sweeps < max_sweeps:
        changed = 0
        for i in range(n):
            Ei = f[i] + b - y[i]
            if not ((y[i] * Ei < -tol and alpha[i] < C) or (y[i] * Ei > tol and alpha[i] > 0)):
                continue
            E = f + b - y
            for j in np.argsort(-np.abs(Ei - E), kind="stable"):
                if j != i and take_step(i, j, Ei, E[j]):
                    changed += 1
                    break
        sweeps += 1
        history.append(dual_objective(alpha, y, K))
        passes = passes + 1 if changed == 0 else 0

    alpha = np.clip(alpha, 0.0, C)
    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    sv = alpha > 1e-12
    pick = free if free.any() else sv
    if pick.any():
        b = float(np.mean(y[pick] - f[pick]))
    converged = passes >= max_passes
    if not converged:
        log.warning("SMO stopped after %d sweeps without reaching tolerance %g", sweeps, tol)
    return SvmModel(alpha, float(b), y.astype(int), float(C), dual_history=history, converged=converged)


def svm_decision(model: SvmModel, K_rows) -> np.ndarray:
    K_rows = np.asarray(K_rows.values if isinstance(K_rows, KernelMatrix) else K_rows, dtype=float)
    K_rows = np.atleast_2d(K_rows)
    if K_rows.shape[1] != model.alphas.size:
        raise ValueError(
            f"kernel row has {K_rows.shape[1]} entries, model was trained on {model.alphas.size}"
        )
    return K_rows @ model.dual_coef + model.bias


def svm_predict(model: SvmModel, k_row) -> tuple:
    """Return ``(label, decision_value)``; a decision of exactly 0 maps to +1."""
    k_row = np.asarray(k_row, dtype=float).reshape(-1)
    value = float(svm_decision(model, k_row[None, :])[0])
    return (1 if value >= 0 else -1), value


def svm_predict_many(model: SvmModel, K_rows) -> np.ndarray:
    values = svm_decision(model, K_rows)
    return np.where(values >= 0, 1, -1)


# -- metrics -----------------------------------------------------------------------


def evaluate_metrics(predictions, labels) -> dict:
    """Accuracy and F1 with label ``1`` (malicious) as the positive class.

    Any other label value counts as negative, so both ``{0, 1}`` and
    ``{-1, +1}`` encodings work.
    """
    p = np.asarray(predictions).reshape(-1)
    t = np.asarray(labels).reshape(-1)
    if p.size == 0 or p.size != t.size:
        raise ValueError(f"need equal, nonzero lengths; got {p.size} and {t.size}")
    pp, tp_mask = p == 1, t == 1
    tp = int(np.sum(pp & tp_mask))
    precision = tp / int(pp.sum()) if pp.any() else 0.0
    recall = tp / int(tp_mask.sum()) if tp_mask.any() else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {
        "accuracy": float(np.mean((p == 1) == tp_mask)),
        "precision": float(precision),
        "recall": float(recall),
        "f1": float(f1),
    }
