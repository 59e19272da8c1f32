"""Dataset generators: noisy phase states, disordered states, entanglement classes.

All generators take an explicit ``numpy.random.Generator`` and are
sequential per seed, so identical seeds give bit-identical datasets.
Probability-amplitude noise keeps every amplitude real and nonnegative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .statevec import QuantumState, fidelity

REJECTION_BUDGET = 100_000


class DatasetGenerationError(RuntimeError):
    pass


def crystalline_pattern(period: int, offset: int, length: int) -> str:
    """Bit pattern with one excitation every ``period`` sites."""
    return "".join("1" if (i - offset) % period == 0 else "0" for i in range(length))


def phase_patterns(phase: str, length: int = 8) -> list:
    """Degenerate bit patterns of a crystalline phase (Z2, Z3, Z4)."""
    if not (phase.startswith("Z") and phase[1:].isdigit()):
        raise ValueError(f"unknown phase {phase!r}")
    period = int(phase[1:])
    if period < 2 or period > length:
        raise ValueError(f"period {period} invalid for chain length {length}")
    return [crystalline_pattern(period, off, length) for off in range(period)]


# Entanglement class registries keyed by input-qubit count.  Each class is
# a list of representative states; each state is an equal-weight
# superposition of the listed bit strings.
ENTANGLEMENT_CLASSES = {
    8: {
        "separable": [["00000000"]],
        "tri_separable": [
            ["00000000", "00111111"],
            ["00000000", "10011111"],
            ["00000000", "11001111"],
            ["00000000", "11100111"],
            ["00000000", "11110011"],
            ["00000000", "11111001"],
            ["00000000", "11111100"],
        ],
        "bi_separable": [
            ["10000000", "11111111"],
            ["01000000", "11111111"],
            ["00100000", "11111111"],
            ["00010000", "11111111"],
            ["00001000", "11111111"],
            ["00000100", "11111111"],
            ["00000010", "11111111"],
        ],
        "inseparable": [
            ["00000000", "11111111"],
            ["10000000", "01000000", "00100000", "00010000",
             "00001000", "00000100", "00000010", "00000001"],
        ],
    },
    4: {
        "separable": [["0000"]],
        "tri_separable": [
            ["0000", "1100"],
            ["0000", "1001"],
            ["0000", "0011"],
        ],
        "bi_separable": [
            ["1000", "1111"],
            ["0100", "1111"],
            ["0010", "1111"],
            ["0001", "1111"],
        ],
        "inseparable": [
            ["0000", "1111"],
            ["0001", "0010", "0100", "1000"],
        ],
    },
    3: {
        "separable": [["000"]],
        "bi_separable": [
            ["001", "111"],
            ["010", "111"],
            ["100", "111"],
        ],
        "w": [["001", "010", "100"]],
        "ghz": [["000", "111"]],
    },
}

# Fixed class -> label-pair assignment, recorded in dataset metadata.
ENTANGLEMENT_LABELS = {
    "separable": (-1, -1),
    "tri_separable": (-1, 1),
    "bi_separable": (1, -1),
    "inseparable": (1, 1),
    "w": (-1, 1),
    "ghz": (1, 1),
}


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model for dataset generation.

    kind 'amplitude_error' replaces ideal bits with sqrt(r)|0> + sqrt(1-r)|1>
    (mirrored for bit 1), r ~ U[1-p, 1).  kind 'disordered' draws r ~ U[0, 1).
    kind 'fidelity_window' applies per-qubit noise with r ~ U[r_min, 1) and
    rejection-samples until the state fidelity lands in [lo, hi].
    """

    kind: str
    p: float = 0.0
    lo: float = 0.0
    hi: float = 1.0
    r_min: float = 0.99

    def __post_init__(self):
        if self.kind not in ("amplitude_error", "disordered", "fidelity_window"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.p < 1.0:
            raise ValueError("amplitude error level p must lie in [0, 1)")
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ValueError("fidelity window must satisfy 0 <= lo <= hi <= 1")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "lo": self.lo, "hi": self.hi,
                "r_min": self.r_min}


@dataclass
class LabeledDataset:
    """Samples of (state, label vector in {-1,+1}^k) plus generation metadata."""

    samples: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples:
            n = self.samples[0][0].num_qubits
            for state, label in self.samples:
                if state.num_qubits != n:
                    raise ValueError("all states in a dataset must have equal size")
                if not np.all(np.isin(np.asarray(label), (-1, 1))):
                    raise ValueError("labels must be +/-1 vectors")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_qubits(self) -> int:
        return self.samples[0][0].num_qubits

    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.samples], dtype=int)


def noisy_qubit(bit: int, r: float) -> np.ndarray:
    """Single-qubit amplitudes with probability-amplitude error.

    Bit 0 becomes sqrt(r)|0> + sqrt(1-r)|1>; bit 1 the mirrored
    sqrt(1-r)|0> + sqrt(r)|1>, so the fidelity to the ideal bit is r.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r!r}")
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    hi, lo = np.sqrt(r), np.sqrt(1.0 - r)
    return np.array([hi, lo] if bit == 0 else [lo, hi], dtype=complex)


def phase_state(pattern: str, p: float, rng) -> QuantumState:
    """Product state of per-qubit noisy bits, r_i ~ U[1-p, 1) independently."""
    if not pattern or any(c not in "01" for c in pattern):
        raise ValueError(f"invalid bit pattern {pattern!r}")
    if p == 0.0:
        return QuantumState.from_bits(pattern)
    rs = rng.uniform(1.0 - p, 1.0, size=len(pattern))
    return QuantumState.product_state(
        noisy_qubit(int(c), r) for c, r in zip(pattern, rs)
    )


def disordered_state(num_qubits: int, rng) -> QuantumState:
    """Product of sqrt(r)|0> + sqrt(1-r)|1> with r ~ U[0, 1) per qubit."""
    rs = rng.uniform(0.0, 1.0, size=num_qubits)
    return QuantumState.product_state(noisy_qubit(0, r) for r in rs)


def _superposition_state(branches, per_qubit_r=None) -> QuantumState:
    """Equal-weight superposition of product branches, renormalized."""
    total = None
    for k, bits in enumerate(branches):
        if per_qubit_r is None:
            chi = [noisy_qubit(int(c), 1.0) for c in bits]
        else:
            chi = [noisy_qubit(int(c), per_qubit_r[k][q]) for q, c in enumerate(bits)]
        branch = QuantumState.product_state(chi).amplitudes
        total = branch if total is None else total + branch
    return QuantumState.from_amplitudes(total, normalize=True)


def pure_class_state(branches) -> QuantumState:
    """Ideal (noise-free) equal superposition of the listed bit strings."""
    return _superposition_state(branches)


def entangled_state(branches, window, r_min: float, rng,
                    max_attempts: int = REJECTION_BUDGET) -> QuantumState:
    """Noisy superposition state rejection-sampled into a fidelity window.

    Every qubit of every branch is replaced by a noisy qubit with
    r ~ U[r_min, 1); the state is accepted once its fidelity to the pure
    class state falls inside [lo, hi].
    """
    lo, hi = window
    ideal = pure_class_state(branches)
    n = len(branches[0])
    for _ in range(max_attempts):
        rs = rng.uniform(r_min, 1.0, size=(len(branches), n))
        candidate = _superposition_state(branches, rs)
        if lo <= fidelity(ideal, candidate) <= hi:
            return candidate
    raise DatasetGenerationError(
        f"could not hit fidelity window [{lo}, {hi}] for class state "
        f"{'+'.join(branches)} with r_min={r_min} after {max_attempts} attempts"
    )


def build_phase_dataset(classes, per_class: int, noise: NoiseSpec, rng,
                        length: int = 8) -> LabeledDataset:
    """Balanced two-class dataset of noisy phase / disordered states.

    ``classes`` is a pair of names from {Z2, Z3, Z4, disordered}; the first
    is labeled -1 and the second +1.  Patterns within a crystalline class
    are sampled uniformly over its degenerate offsets.
    """
    if len(classes) != 2:
        raise ValueError("phase classification needs exactly two classes")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    samples = []
    for label, name in zip((-1, 1), classes):
        if name == "disordered":
            for _ in range(per_class):
                samples.append((disordered_state(length, rng), np.array([label])))
        else:
            patterns = phase_patterns(name, length)
            for _ in range(per_class):
                pattern = patterns[rng.integers(len(patterns))]
                samples.append((phase_state(pattern, noise.p, rng), np.array([label])))
    metadata = {
        "generator": "phase",
        "classes": list(classes),
        "class_labels": {name: [label] for label, name in zip((-1, 1), classes)},
        "per_class": per_class,
        "noise": noise.to_dict(),
        "length": length,
    }
    return LabeledDataset(samples, metadata)


def build_entanglement_dataset(num_inputs: int, per_class: int, window,
                               r_min: float, rng,
                               classes=None) -> LabeledDataset:
    """Balanced multiclass dataset of fidelity-windowed noisy superpositions.

    Uses the registered class tables for 3-, 4-, or 8-input systems; the
    representative state within a class is sampled uniformly per draw.
    Labels are the fixed class -> label-pair assignment recorded in the
    metadata.
    """
    if num_inputs not in ENTANGLEMENT_CLASSES:
        raise ValueError(
            f"no entanglement classes registered for {num_inputs} inputs "
            f"(available: {sorted(ENTANGLEMENT_CLASSES)})"
        )
    registry = ENTANGLEMENT_CLASSES[num_inputs]
    names = list(classes) if classes is not None else list(registry)
    for name in names:
        if name not in registry:
            raise ValueError(f"unknown entanglement class {name!r}")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    samples = []
    for name in names:
        label = np.array(ENTANGLEMENT_LABELS[name])
        members = registry[name]
        for _ in range(per_class):
            branches = members[rng.integers(len(members))]
            state = entangled_state(branches, window, r_min, rng)
            samples.append((state, label))
    metadata = {
        "generator": "entanglement",
        "classes": names,
        "class_labels": {name: list(ENTANGLEMENT_LABELS[name]) for name in names},
        "per_class": per_class,
        "noise": {"kind": "fidelity_window", "lo": window[0], "hi": window[1],
                  "r_min": r_min},
        "length": num_inputs,
    }
    return LabeledDataset(samples, metadata)


# --- serialization ---------------------------------------------------------
#
# Text format, one record per line.  First line: JSON metadata header with
# num_qubits and label width.  Each sample line: num_qubits, TAB,
# comma-separated labels, TAB, space-separated "re,im" amplitude pairs in
# basis order.  Floats are written with repr so round trips are bit-exact.

FORMAT_NAME = "qperc-dataset"
FORMAT_VERSION = 1


def save_dataset(dataset: LabeledDataset, path):
    with open(path, "w") as fh:
        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "num_qubits": dataset.num_qubits,
            "num_labels": int(len(dataset.samples[0][1])),
            "metadata": dataset.metadata,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for state, label in dataset.samples:
            labels = ",".join(str(int(v)) for v in np.atleast_1d(label))
            amps = " ".join(
                f"{float(a.real)!r},{float(a.imag)!r}" for a in state.amplitudes
            )
            fh.write(f"{state.num_qubits}\t{labels}\t{amps}\n")


def load_dataset(path) -> LabeledDataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != FORMAT_NAME:
            raise ValueError(f"{path}: not a {FORMAT_NAME} file")
        samples = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            n_str, label_str, amp_str = line.split("\t")
            label = np.array([int(v) for v in label_str.split(",")])
            amps = np.array(
                [complex(float(p.split(",")[0]), float(p.split(",")[1]))
                 for p in amp_str.split(" ")]
            )
            samples.append((QuantumState(int(n_str), amps), label))
    return LabeledDataset(samples, header.get("metadata", {}))
