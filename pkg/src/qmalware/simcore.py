"""Dense statevector simulator.

Qubit 0 is the least-significant bit of the amplitude index. Gates are
applied by contracting a 2x2 or 4x4 block against the amplitude tensor, so
a gate costs O(2^n) rather than the O(4^n) of a full matrix product.

Rotation conventions:

* ``RX``/``RY``/``RZ`` are the usual ``exp(-i theta P / 2)``.
* ``PX``/``PY``/``PZ`` are feature-map phase terms ``exp(+i phi P)``.
* ``ZZ`` is ``exp(+i phi Z x Z)``: ``e^{i phi}`` on |00>, |11> and
  ``e^{-i phi}`` on |01>, |10>.
* ``INPUT_PREP`` is the real rotation
  ``[[cos(pi/4 - x), sin(pi/4 - x)], [-sin(pi/4 - x), cos(pi/4 - x)]]``,
  which maps ``H|0>`` to ``cos(x)|0> + sin(x)|1>``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from qmalware.errors import CapacityError

MAX_QUBITS = 24

_SQRT_HALF = 1.0 / np.sqrt(2.0)


class GateKind(str, enum.Enum):
    H = "h"
    RX = "rx"
    RY = "ry"
    RZ = "rz"
    PX = "px"
    PY = "py"
    PZ = "pz"
    ZZ = "zz"
    CNOT = "cnot"
    INPUT_PREP = "input_prep"


_ONE_QUBIT = {
    GateKind.H,
    GateKind.RX,
    GateKind.RY,
    GateKind.RZ,
    GateKind.PX,
    GateKind.PY,
    GateKind.PZ,
    GateKind.INPUT_PREP,
}
_PARAMETRIC = _ONE_QUBIT - {GateKind.H} | {GateKind.ZZ}


@dataclass(frozen=True)
class Gate:
    """A single gate acting on one or two qubits.

    For two-qubit gates the first listed qubit is the high bit of the local
    4x4 block, so ``Gate(CNOT, (c, t))`` has control ``c`` and target ``t``.
    """

    kind: GateKind
    qubits: tuple
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "angle", float(self.angle))
        arity = 1 if self.kind in _ONE_QUBIT else 2
        if len(qubits) != arity:
            raise ValueError(f"{self.kind.value} acts on {arity} qubit(s), got {qubits}")
        if any(q < 0 for q in qubits):
            raise IndexError(f"negative qubit index in {qubits}")
        if arity == 2 and qubits[0] == qubits[1]:
            raise ValueError(f"{self.kind.value} needs two distinct qubits, got {qubits}")

    @property
    def n_targets(self) -> int:
        return len(self.qubits)

    @property
    def is_parametric(self) -> bool:
        return self.kind in _PARAMETRIC

    def matrix(self) -> np.ndarray:
        """Local 2x2 or 4x4 unitary."""
        k, a = self.kind, self.angle
        if k is GateKind.H:
            return np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT_HALF
        if k is GateKind.RX:
            c, s = np.cos(a / 2), np.sin(a / 2)
            return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
        if k is GateKind.RY:
            c, s = np.cos(a / 2), np.sin(a / 2)
            return np.array([[c, -s], [s, c]], dtype=complex)
        if k is GateKind.RZ:
            return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])
        if k is GateKind.PX:
            c, s = np.cos(a), np.sin(a)
            return np.array([[c, 1j * s], [1j * s, c]], dtype=complex)
        if k is GateKind.PY:
            c, s = np.cos(a), np.sin(a)
            return np.array([[c, s], [-s, c]], dtype=complex)
        if k is GateKind.PZ:
            return np.diag([np.exp(1j * a), np.exp(-1j * a)])
        if k is GateKind.INPUT_PREP:
            c, s = np.cos(np.pi / 4 - a), np.sin(np.pi / 4 - a)
            return np.array([[c, s], [-s, c]], dtype=complex)
        if k is GateKind.ZZ:
            p, m = np.exp(1j * a), np.exp(-1j * a)
            return np.diag([p, m, m, p])
        if k is GateKind.CNOT:
            return np.array(
                [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
            )
        raise AssertionError(k)

    def inverse(self) -> "Gate":
        if self.kind in (GateKind.H, GateKind.CNOT):
            return self
        if self.kind is GateKind.INPUT_PREP:
            # transpose of a rotation by (pi/4 - x) is a rotation by (pi/4 - (pi/2 - x))
            return Gate(self.kind, self.qubits, np.pi / 2 - self.angle)
        return Gate(self.kind, self.qubits, -self.angle)

    def shifted(self, delta: float) -> "Gate":
        return Gate(self.kind, self.qubits, self.angle + delta)


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        gates, self.gates = list(self.gates), []
        for g in gates:
            self.append(g)

    def append(self, gate: Gate) -> "Circuit":
        if max(gate.qubits) >= self.n_qubits:
            raise IndexError(f"gate on {gate.qubits} does not fit {self.n_qubits} qubits")
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def inverse(self) -> "Circuit":
        return Circuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)])

    def count(self, kind: Optional[GateKind] = None) -> int:
        if kind is None:
            return len(self.gates)
        kind = GateKind(kind)
        return sum(1 for g in self.gates if g.kind is kind)

    def count_two_qubit(self) -> int:
        return sum(1 for g in self.gates if g.n_targets == 2)

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state of ``n_qubits`` qubits. The amplitude array is read-only."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2**self.n_qubits:
            raise ValueError(
                f"{self.n_qubits} qubits need {2**self.n_qubits} amplitudes, got {amps.size}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def _check_register(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise CapacityError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")


def zero_state(n_qubits: int) -> StateVector:
    _check_register(n_qubits)
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def basis_state(n_qubits: int, index: int) -> StateVector:
    _check_register(n_qubits)
    if not 0 <= index < 2**n_qubits:
        raise IndexError(f"basis index {index} out of range")
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[index] = 1.0
    return StateVector(n_qubits, amps)


def _apply_inplace(psi: np.ndarray, n: int, gate: Gate) -> np.ndarray:
    """Apply ``gate`` to a (2,)*n tensor; returns the new tensor."""
    axes = [n - 1 - q for q in gate.qubits]
    u = gate.matrix()
    if gate.n_targets == 1:
        out = np.tensordot(u, psi, axes=([1], axes))
        return np.moveaxis(out, 0, axes[0])
    out = np.tensordot(u.reshape(2, 2, 2, 2), psi, axes=([2, 3], axes))
    return np.moveaxis(out, [0, 1], axes)


def _check_gate(n: int, gate: Gate) -> None:
    if max(gate.qubits) >= n:
        raise IndexError(f"gate on {gate.qubits} does not fit {n} qubits")


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    _check_gate(state.n_qubits, gate)
    n = state.n_qubits
    psi = _apply_inplace(state.amplitudes.reshape((2,) * n), n, gate)
    return StateVector(n, np.ascontiguousarray(psi).reshape(-1))


def apply_gates(state: StateVector, gates: Sequence[Gate]) -> StateVector:
    n = state.n_qubits
    psi = state.amplitudes.reshape((2,) * n)
    for g in gates:
        _check_gate(n, g)
        psi = _apply_inplace(psi, n, g)
    return StateVector(n, np.ascontiguousarray(psi).reshape(-1))


def run_circuit(circuit: Circuit, initial: Optional[StateVector] = None) -> StateVector:
    state = zero_state(circuit.n_qubits) if initial is None else initial
    if state.n_qubits != circuit.n_qubits:
        raise ValueError("initial state and circuit disagree on qubit count")
    return apply_gates(state, circuit.gates)


def _z_signs(n: int, qubit: int) -> np.ndarray:
    bits = (np.arange(2**n) >> qubit) & 1
    return 1.0 - 2.0 * bits


def expectation_z(state: StateVector, qubit: int) -> float:
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    value = float(np.dot(state.probabilities(), _z_signs(state.n_qubits, qubit)))
    return min(1.0, max(-1.0, value))


def overlap_probability(a: StateVector, b: StateVector) -> float:
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"cannot overlap {a.n_qubits}- and {b.n_qubits}-qubit states")
    value = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    return min(1.0, float(value))


def sample_measurements(state: StateVector, shots: int, seed: int) -> dict:
    """Draw ``shots`` computational-basis samples.

    Keys are bitstrings written with qubit ``n-1`` first; only observed
    outcomes appear.
    """
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    probs = state.probabilities()
    probs = probs / probs.sum()
    counts = np.random.default_rng(seed).multinomial(shots, probs)
    n = state.n_qubits
    return {format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c}
