"""Data-encoding circuits for the kernel classifiers.

One layer of every map is ``H`` on all qubits, then first-order phase terms
``exp(i phi_j(x) P_j)``, then (except for the Z map) second-order terms
``exp(i phi_jk(x) Z_j Z_k)`` over the entanglement pairs. The layer is
repeated ``depth`` times. Inputs are expected to be scaled already.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qmalware.simcore import Circuit, Gate, GateKind, StateVector, run_circuit


class DataMapping(str, enum.Enum):
    DEFAULT = "default"
    SIN = "sin"


class FeatureMapKind(str, enum.Enum):
    ZZ = "zz"
    PAULI = "pauli"
    ZZPHI = "zzphi"
    Z = "z"


class Entanglement(str, enum.Enum):
    LINEAR = "linear"
    FULL = "full"


@dataclass(frozen=True)
class FeatureMapConfig:
    kind: FeatureMapKind
    n_features: int
    depth: int = 2
    entanglement: Entanglement = Entanglement.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureMapKind(self.kind))
        object.__setattr__(self, "entanglement", Entanglement(self.entanglement))
        if self.n_features < 1:
            raise ValueError(f"n_features must be >= 1, got {self.n_features}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")

    @property
    def mapping(self) -> DataMapping:
        return DataMapping.SIN if self.kind is FeatureMapKind.ZZPHI else DataMapping.DEFAULT

    @property
    def n_qubits(self) -> int:
        return self.n_features

    def pairs(self) -> list:
        """Qubit pairs receiving a ZZ term; empty for the Z map."""
        n = self.n_features
        if self.kind is FeatureMapKind.Z:
            return []
        if self.entanglement is Entanglement.LINEAR:
            return [(j, j + 1) for j in range(n - 1)]
        return [(j, k) for j in range(n) for k in range(j + 1, n)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "n_features": self.n_features,
            "depth": self.depth,
            "entanglement": self.entanglement.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMapConfig":
        return cls(
            kind=d["kind"],
            n_features=int(d["n_features"]),
            depth=int(d.get("depth", 2)),
            entanglement=d.get("entanglement", "linear"),
        )


def phi_value(mapping: DataMapping, subset: Sequence[int], x: Sequence[float]) -> float:
    """Evaluate the data map on a singleton ``{j}`` or a pair ``{j, k}``."""
    mapping = DataMapping(mapping)
    subset = tuple(subset)
    if len(subset) not in (1, 2):
        raise ValueError(f"subset must have 1 or 2 indices, got {len(subset)}")
    if any(not 0 <= i < len(x) for i in subset):
        raise IndexError(f"subset {subset} out of range for {len(x)} features")
    if len(subset) == 1:
        return float(x[subset[0]])
    a, b = np.pi - x[subset[0]], np.pi - x[subset[1]]
    if mapping is DataMapping.SIN:
        return float(np.sin(a) * np.sin(b))
    return float(a * b)


def _first_order_paulis(kind: FeatureMapKind) -> tuple:
    if kind is FeatureMapKind.PAULI:
        # X terms are applied before Y terms: the displayed product acts right to left
        return (GateKind.PX, GateKind.PY)
    return (GateKind.PZ,)


def build_encoding_circuit(config: FeatureMapConfig, x: Sequence[float]) -> Circuit:
    x = np.asarray(x, dtype=float).reshape(-1)
    n = config.n_features
    if x.size != n:
        raise ValueError(f"expected {n} features, got {x.size}")
    singles = [phi_value(config.mapping, (j,), x) for j in range(n)]
    pairs = [(j, k, phi_value(config.mapping, (j, k), x)) for j, k in config.pairs()]
    layer = [Gate(GateKind.H, (j,)) for j in range(n)]
    for pauli in _first_order_paulis(config.kind):
        layer.extend(Gate(pauli, (j,), singles[j]) for j in range(n))
    layer.extend(Gate(GateKind.ZZ, (j, k), phi) for j, k, phi in pairs)
    return Circuit(n, layer * config.depth)


def encode_state(config: FeatureMapConfig, x: Sequence[float]) -> StateVector:
    return run_circuit(build_encoding_circuit(config, x))
