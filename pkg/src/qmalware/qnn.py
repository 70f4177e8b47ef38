"""Variational two-ancilla classifier.

Register layout: data qubits ``0..N-1``, ancilla 0 at ``N`` and ancilla 1
at ``N+1``. An encoding block (``H`` then ``INPUT_PREP(x_j)`` on every
data qubit) is followed by ``L`` trainable layers, each made of
``RY(theta_j)`` on the data qubits, the CNOT entangler, and
``RY-RZ-RY`` on both ancillas. With ``reupload=True`` the encoding block is
repeated in front of every layer. Class ``c`` is read from ``<Z>`` on
ancilla ``c``.

Gradients come either from the two-point shift rule on the ancilla
expectations (chained analytically through the probability map and the
cross entropy) or from the simultaneous-perturbation estimator, which costs
two loss evaluations per sample whatever the parameter count.
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from qmalware.errors import DomainError, NumericError, SchemaError
from qmalware.simcore import Gate, GateKind, StateVector, apply_gates, expectation_z, zero_state

PROB_FLOOR = 1e-12
SHIFT = np.pi / 2
MODEL_FORMAT = "qmalware-qnn"
MODEL_VERSION = 1


def default_entangler(n_data: int) -> tuple:
    """CNOT chain data_0 -> ... -> data_{N-1} -> ancilla_0 -> ancilla_1."""
    return tuple((q, q + 1) for q in range(n_data + 1))


@dataclass(frozen=True)
class QnnConfig:
    """``entangle_pattern=None`` selects :func:`default_entangler`; an empty
    sequence means no CNOTs at all."""

    n_data_qubits: int
    n_layers: int = 1
    reupload: bool = False
    entangle_pattern: Optional[tuple] = None

    def __post_init__(self):
        if self.n_data_qubits < 1:
            raise ValueError(f"n_data_qubits must be >= 1, got {self.n_data_qubits}")
        if self.n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {self.n_layers}")
        pattern = self.entangle_pattern
        if pattern is None:
            pattern = default_entangler(self.n_data_qubits)
        pattern = tuple((int(c), int(t)) for c, t in pattern)
        for c, t in pattern:
            if not (0 <= c < self.n_qubits and 0 <= t < self.n_qubits):
                raise IndexError(f"CNOT ({c}, {t}) outside a {self.n_qubits}-qubit register")
            if c == t:
                raise ValueError(f"CNOT ({c}, {t}) needs distinct qubits")
        object.__setattr__(self, "entangle_pattern", pattern)

    @property
    def n_qubits(self) -> int:
        return self.n_data_qubits + 2

    @property
    def ancillas(self) -> tuple:
        return (self.n_data_qubits, self.n_data_qubits + 1)

    @property
    def n_params(self) -> int:
        return self.n_layers * (self.n_data_qubits + 6)

    def to_dict(self) -> dict:
        return {
            "n_data_qubits": self.n_data_qubits,
            "n_layers": self.n_layers,
            "reupload": self.reupload,
            "entangle_pattern": [list(p) for p in self.entangle_pattern],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QnnConfig":
        pattern = d.get("entangle_pattern")
        return cls(
            n_data_qubits=int(d["n_data_qubits"]),
            n_layers=int(d.get("n_layers", 1)),
            reupload=bool(d.get("reupload", False)),
            entangle_pattern=None if pattern is None else tuple(tuple(p) for p in pattern),
        )


@dataclass
class QnnParams:
    data_angles: np.ndarray  # (N, L)
    ancilla_angles: np.ndarray  # (2, L, 3): Y, Z, Y per ancilla per layer

    def __post_init__(self):
        self.data_angles = np.asarray(self.data_angles, dtype=float)
        self.ancilla_angles = np.asarray(self.ancilla_angles, dtype=float)
        if self.data_angles.ndim != 2:
            raise ValueError("data_angles must be an (N, L) array")
        n_layers = self.data_angles.shape[1]
        if self.ancilla_angles.shape != (2, n_layers, 3):
            raise ValueError(
                f"ancilla_angles must have shape (2, {n_layers}, 3), got {self.ancilla_angles.shape}"
            )

    @property
    def size(self) -> int:
        return self.data_angles.size + self.ancilla_angles.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.data_angles.ravel(), self.ancilla_angles.ravel()])

    @classmethod
    def from_flat(cls, config: QnnConfig, theta) -> "QnnParams":
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != config.n_params:
            raise ValueError(f"expected {config.n_params} parameters, got {theta.size}")
        k = config.n_data_qubits * config.n_layers
        return cls(
            theta[:k].reshape(config.n_data_qubits, config.n_layers),
            theta[k:].reshape(2, config.n_layers, 3),
        )

    @classmethod
    def zeros(cls, config: QnnConfig) -> "QnnParams":
        return cls.from_flat(config, np.zeros(config.n_params))

    def check(self, config: QnnConfig) -> None:
        if self.data_angles.shape != (config.n_data_qubits, config.n_layers):
            raise ValueError(
                f"data_angles shape {self.data_angles.shape} does not match "
                f"({config.n_data_qubits}, {config.n_layers})"
            )
        if self.size != config.n_params:
            raise ValueError(f"expected {config.n_params} parameters, got {self.size}")


def init_params(config: QnnConfig, rng: np.random.Generator, scale: float = 0.1) -> QnnParams:
    """Angles uniform in ``[-scale, scale]``."""
    return QnnParams.from_flat(config, rng.uniform(-scale, scale, config.n_params))


class TrainMethod(str, enum.Enum):
    PARAMETER_SHIFT = "parameter_shift"
    SPSB = "spsb"


@dataclass(frozen=True)
class TrainConfig:
    """``batch_size=None`` means 1 for the shift rule and 32 for SPSB."""

    learning_rate: float = 0.1
    epochs: int = 1
    batch_size: Optional[int] = None
    gradient_method: TrainMethod = TrainMethod.PARAMETER_SHIFT
    spsb_epsilon: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gradient_method", TrainMethod(self.gradient_method))
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.spsb_epsilon <= 0:
            raise ValueError(f"spsb_epsilon must be > 0, got {self.spsb_epsilon}")

    @property
    def effective_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 32 if self.gradient_method is TrainMethod.SPSB else 1

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "gradient_method": self.gradient_method.value,
            "spsb_epsilon": self.spsb_epsilon,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# -- circuit -----------------------------------------------------------------------


def _check_input(x, n_data: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n_data:
        raise ValueError(f"expected {n_data} features, got {x.size}")
    if np.any(x < -1e-12) or np.any(x > np.pi / 2 + 1e-12):
        raise DomainError(f"QNN inputs must lie in [0, pi/2], got {x.tolist()}")
    return x


def encoding_block(x: np.ndarray) -> list:
    gates = [Gate(GateKind.H, (j,)) for j in range(len(x))]
    gates += [Gate(GateKind.INPUT_PREP, (j,), xj) for j, xj in enumerate(x)]
    return gates


def prepare_input_state(x, total_qubits: int) -> StateVector:
    """Data qubit ``j`` in ``cos(x_j)|0> + sin(x_j)|1>``, others in ``|0>``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if total_qubits < x.size:
        raise ValueError(f"{x.size} features do not fit {total_qubits} qubits")
    x = _check_input(x, x.size)
    return apply_gates(zero_state(total_qubits), encoding_block(x))


def circuit_gates(config: QnnConfig, params: QnnParams, x) -> tuple:
    """Gate list for one input, plus the gate index of every flat parameter."""
    params.check(config)
    x = _check_input(x, config.n_data_qubits)
    N, L = config.n_data_qubits, config.n_layers
    gates = []
    where = np.empty(config.n_params, dtype=int)
    encode = encoding_block(x)
    anc_offset = N * L
    for layer in range(L):
        if layer == 0 or config.reupload:
            gates.extend(encode)
        for j in range(N):
            where[j * L + layer] = len(gates)
            gates.append(Gate(GateKind.RY, (j,), params.data_angles[j, layer]))
        gates.extend(Gate(GateKind.CNOT, pair) for pair in config.entangle_pattern)
        for a, qubit in enumerate(config.ancillas):
            for r, kind in enumerate((GateKind.RY, GateKind.RZ, GateKind.RY)):
                where[anc_offset + (a * L + layer) * 3 + r] = len(gates)
                gates.append(Gate(kind, (qubit,), params.ancilla_angles[a, layer, r]))
    return gates, where


def _readout(config: QnnConfig, gates) -> tuple:
    state = apply_gates(zero_state(config.n_qubits), gates)
    a0, a1 = config.ancillas
    return expectation_z(state, a0), expectation_z(state, a1)


def qnn_forward(config: QnnConfig, params: QnnParams, x) -> tuple:
    """Ancilla expectations ``(<Z_a0>, <Z_a1>)``."""
    gates, _ = circuit_gates(config, params, x)
    return _readout(config, gates)


# -- loss --------------------------------------------------------------------------


def class_probabilities(z0: float, z1: float) -> tuple:
    """Map ancilla expectations to ``(p_benign, p_malicious)``.

    ``q_c = (1 + z_c) / 2`` renormalised; uniform if both ``q`` vanish.
    """
    for z in (z0, z1):
        if not -1 - 1e-9 <= z <= 1 + 1e-9:
            raise NumericError(f"expectation {z} outside [-1, 1]")
    q0 = (1 + min(1.0, max(-1.0, z0))) / 2
    q1 = (1 + min(1.0, max(-1.0, z1))) / 2
    s = q0 + q1
    if s < 1e-12:
        return 0.5, 0.5
    return q0 / s, q1 / s


def cross_entropy(probs, label: int) -> float:
    return float(-np.log(max(probs[label], PROB_FLOOR)))


def sample_loss(z0: float, z1: float, label: int) -> float:
    return cross_entropy(class_probabilities(z0, z1), label)


def _loss_grad_z(z0: float, z1: float, label: int) -> np.ndarray:
    """d loss / d (z0, z1), zero wherever the guards are active."""
    q = np.array([(1 + z0) / 2, (1 + z1) / 2])
    s = q.sum()
    if s < 1e-12 or q[label] / s < PROB_FLOOR:
        return np.zeros(2)
    # loss = -ln q_label + ln s
    g = np.full(2, 1.0 / s)
    g[label] -= 1.0 / q[label]
    return 0.5 * g


def _unpack_batch(batch) -> tuple:
    batch = list(batch)
    if not batch:
        raise ValueError("batch is empty")
    X = [np.asarray(x, dtype=float) for x, _ in batch]
    y = [int(lbl) for _, lbl in batch]
    for lbl in y:
        if lbl not in (0, 1):
            raise ValueError(f"labels must be 0 or 1, got {lbl}")
    return X, y


def batch_loss(config: QnnConfig, params: QnnParams, batch) -> float:
    X, y = _unpack_batch(batch)
    return float(np.mean([sample_loss(*qnn_forward(config, params, x), lbl) for x, lbl in zip(X, y)]))


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _shift_rule_sample(config: QnnConfig, params: QnnParams, x, label: int) -> np.ndarray:
    gates, where = circuit_gates(config, params, x)
    dl_dz = _loss_grad_z(*_readout(config, gates), label)
    grad = np.zeros(config.n_params)
    if not dl_dz.any():
        return grad
    for k, pos in enumerate(where):
        base = gates[pos]
        gates[pos] = base.shifted(SHIFT)
        plus = np.array(_readout(config, gates))
        gates[pos] = base.shifted(-SHIFT)
        minus = np.array(_readout(config, gates))
        gates[pos] = base
        grad[k] = dl_dz @ (plus - minus) / 2
    return grad


def gradient_parameter_shift(config: QnnConfig, params: QnnParams, batch, workers: int = 1) -> QnnParams:
    """Batch-averaged loss gradient; two shifted circuits per parameter plus
    one unshifted circuit per sample."""
    X, y = _unpack_batch(batch)
    grads = _map(lambda item: _shift_rule_sample(config, params, *item), list(zip(X, y)), workers)
    return QnnParams.from_flat(config, np.mean(grads, axis=0))


def rademacher(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape) * 2.0 - 1.0


def spsb_estimate(loss: Callable[[np.ndarray], float], theta, delta, epsilon: float) -> np.ndarray:
    """``(f(theta + eps*delta) - f(theta - eps*delta)) / (2 eps) * delta``.

    ``delta`` has +-1 entries, so it is its own element-wise inverse.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    theta = np.asarray(theta, dtype=float)
    delta = np.asarray(delta, dtype=float)
    return (loss(theta + epsilon * delta) - loss(theta - epsilon * delta)) / (2 * epsilon) * delta


def gradient_spsb(
    config: QnnConfig,
    params: QnnParams,
    batch,
    epsilon: float,
    rng: np.random.Generator,
    workers: int = 1,
) -> QnnParams:
    """One random direction per sample, averaged over the batch."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    X, y = _unpack_batch(batch)
    theta = params.flat()
    deltas = rademacher(rng, (len(X), theta.size))

    def one(k):
        def loss(t):
            return sample_loss(*qnn_forward(config, QnnParams.from_flat(config, t), X[k]), y[k])

        return spsb_estimate(loss, theta, deltas[k], epsilon)

    grads = _map(one, range(len(X)), workers)
    return QnnParams.from_flat(config, np.mean(grads, axis=0))


# -- training ----------------------------------------------------------------------


def predict_proba(config: QnnConfig, params: QnnParams, X, workers: int = 1) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.array(_map(lambda x: class_probabilities(*qnn_forward(config, params, x)), list(X), workers))


def predict(config: QnnConfig, params: QnnParams, X, workers: int = 1) -> np.ndarray:
    """Argmax class; a tie goes to class 0."""
    p = predict_proba(config, params, X, workers)
    return (p[:, 1] > p[:, 0]).astype(int)


def evaluate(config: QnnConfig, params: QnnParams, X, y, workers: int = 1) -> dict:
    p = predict_proba(config, params, X, workers)
    y = np.asarray(y, dtype=int)
    losses = [-np.log(max(p[i, y[i]], PROB_FLOOR)) for i in range(len(y))]
    preds = (p[:, 1] > p[:, 0]).astype(int)
    return {"loss": float(np.mean(losses)), "accuracy": float(np.mean(preds == y))}


class TrainResult(NamedTuple):
    params: QnnParams
    history: list


def train(
    config: QnnConfig,
    train_config: TrainConfig,
    X,
    y,
    init: Optional[QnnParams] = None,
    workers: int = 1,
) -> TrainResult:
    """Plain SGD, ``theta <- theta - lr * grad`` once per mini-batch.

    ``history`` has one entry per epoch with the loss and accuracy over the
    whole training set measured after that epoch.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).reshape(-1)
    if len(X) == 0 or len(X) != len(y):
        raise ValueError("dataset must be nonempty with one label per sample")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    y = y.astype(int)
    rng = np.random.default_rng(train_config.seed)
    params = init_params(config, rng) if init is None else QnnParams.from_flat(config, init.flat())
    bs = train_config.effective_batch_size
    lr = train_config.learning_rate
    history = []
    for epoch in range(train_config.epochs):
        order = rng.permutation(len(X))
        for step, start in enumerate(range(0, len(X), bs)):
            idx = order[start : start + bs]
            batch = [(X[i], y[i]) for i in idx]
            if train_config.gradient_method is TrainMethod.SPSB:
                step_rng = np.random.default_rng([train_config.seed, epoch, step])
                grad = gradient_spsb(config, params, batch, train_config.spsb_epsilon, step_rng, workers)
            else:
                grad = gradient_parameter_shift(config, params, batch, workers)
            params = QnnParams.from_flat(config, params.flat() - lr * grad.flat())
        stats = evaluate(config, params, X, y, workers)
        history.append({"epoch": epoch + 1, **stats})
    return TrainResult(params, history)


# -- persistence -------------------------------------------------------------------


def model_to_dict(config: QnnConfig, params: QnnParams, seed: int, history: Sequence) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": config.to_dict(),
        "data_angles": params.data_angles.tolist(),
        "ancilla_angles": params.ancilla_angles.tolist(),
        "seed": int(seed),
        "history": list(history),
    }


def model_from_dict(doc: dict) -> tuple:
    """Inverse of :func:`model_to_dict`; returns ``(config, params, seed, history)``."""
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise SchemaError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} document")
    config = QnnConfig.from_dict(doc["config"])
    params = QnnParams(doc["data_angles"], doc["ancilla_angles"])
    params.check(config)
    return config, params, int(doc.get("seed", 0)), list(doc.get("history", []))


def save_model(path, config: QnnConfig, params: QnnParams, seed: int, history: Sequence) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(config, params, seed, history), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
