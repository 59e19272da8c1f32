"""Hamiltonian builders, Rydberg-to-perceptron mappings, and atom layouts.

All builders return dense complex Hermitian matrices in the shared basis
convention (qubit 0 = most significant bit, output qubits trailing).
Constant energy shifts produced by the mappings are returned explicitly,
never dropped, so energy traces stay reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .statevec import input_sign_table

MAPPING_TOL = 1e-9


class MappingInfeasibleError(ValueError):
    """Raised when Rydberg parameters violate the perceptron mapping condition."""


def _as_vector(values, n: int, name: str) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got {v.shape}")
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class PerceptronParams:
    """Single-output perceptron couplings.

    ``delta_o`` enters the Hamiltonian as -delta_o * sigma_z on the output,
    ``omega_o`` as +omega_o * sigma_x, ``couplings[i]`` as sigma_z^i
    sigma_z^o, and ``input_drives[i]`` as sigma_x^i (the transverse input
    terms of the modified model; zero for the plain model).
    """

    num_inputs: int
    delta_o: float
    omega_o: float
    couplings: np.ndarray
    input_drives: np.ndarray = None

    def __post_init__(self):
        if self.num_inputs < 1:
            raise ValueError("num_inputs must be >= 1")
        object.__setattr__(
            self, "couplings", _as_vector(self.couplings, self.num_inputs, "couplings")
        )
        drives = self.input_drives if self.input_drives is not None else np.zeros(self.num_inputs)
        object.__setattr__(
            self, "input_drives", _as_vector(drives, self.num_inputs, "input_drives")
        )


@dataclass(frozen=True)
class TwoOutputParams:
    """Two independent single-output perceptrons sharing the inputs.

    Output 1 is qubit ``num_inputs`` and output 2 is qubit
    ``num_inputs + 1``; detunings follow the same -delta * sigma_z sign
    placement as :class:`PerceptronParams`.
    """

    num_inputs: int
    delta_o1: float
    omega_o1: float
    delta_o2: float
    omega_o2: float
    couplings_1: np.ndarray
    couplings_2: np.ndarray
    input_drives: np.ndarray = None

    def __post_init__(self):
        if self.num_inputs < 1:
            raise ValueError("num_inputs must be >= 1")
        for name in ("couplings_1", "couplings_2"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), self.num_inputs, name))
        drives = self.input_drives if self.input_drives is not None else np.zeros(self.num_inputs)
        object.__setattr__(
            self, "input_drives", _as_vector(drives, self.num_inputs, "input_drives")
        )


@dataclass(frozen=True)
class RydbergParams:
    """Driven Rydberg array: Rabi drives, detunings, pair interactions."""

    num_atoms: int
    omegas: np.ndarray
    detunings: np.ndarray
    interactions: np.ndarray

    def __post_init__(self):
        n = self.num_atoms
        if n < 1:
            raise ValueError("num_atoms must be >= 1")
        object.__setattr__(self, "omegas", _as_vector(self.omegas, n, "omegas"))
        object.__setattr__(self, "detunings", _as_vector(self.detunings, n, "detunings"))
        v = np.asarray(self.interactions, dtype=float)
        if v.shape != (n, n):
            raise ValueError(f"interactions must be {n}x{n}, got {v.shape}")
        if np.max(np.abs(v - v.T)) > 0:
            raise ValueError("interaction matrix must be symmetric")
        if np.any(np.diag(v) != 0):
            raise ValueError("interaction matrix must have zero diagonal")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "interactions", v)


def perceptron_mask(num_inputs: int) -> frozenset:
    """Input-output pairs only: the single-output perceptron topology."""
    return frozenset((i, num_inputs) for i in range(num_inputs))


def two_output_mask(num_inputs: int) -> frozenset:
    """Input-output pairs for both trailing output qubits."""
    pairs = [(i, num_inputs) for i in range(num_inputs)]
    pairs += [(i, num_inputs + 1) for i in range(num_inputs)]
    return frozenset(pairs)


def all_pairs_mask(num_atoms: int) -> frozenset:
    return frozenset((i, j) for i in range(num_atoms) for j in range(i + 1, num_atoms))


def _qubit_signs(num_qubits: int, qubit: int) -> np.ndarray:
    b = np.arange(1 << num_qubits)
    return 1.0 - 2.0 * ((b >> (num_qubits - 1 - qubit)) & 1).astype(float)


def _add_flip(h: np.ndarray, num_qubits: int, qubit: int, coefficient: float):
    """Add coefficient * sigma_x^qubit (a bit-flip permutation) to h."""
    if coefficient == 0.0:
        return
    b = np.arange(1 << num_qubits)
    h[b ^ (1 << (num_qubits - 1 - qubit)), b] += coefficient


def build_perceptron(params: PerceptronParams) -> np.ndarray:
    """Dense (N+1)-qubit perceptron Hamiltonian, output qubit last."""
    n = params.num_inputs + 1
    s_out = _qubit_signs(n, n - 1)
    diag = -params.delta_o * s_out
    for i in range(params.num_inputs):
        diag = diag + params.couplings[i] * _qubit_signs(n, i) * s_out
    h = np.diag(diag.astype(complex))
    _add_flip(h, n, n - 1, params.omega_o)
    for i in range(params.num_inputs):
        _add_flip(h, n, i, params.input_drives[i])
    return h


def build_learning_perceptron(omega_o: float, delta_o: float, couplings) -> np.ndarray:
    """Per-layer training Hamiltonian: omega sigma_x^o + (-delta + sum J_i sigma_z^i) sigma_z^o."""
    couplings = np.asarray(couplings, dtype=float).reshape(-1)
    return build_perceptron(
        PerceptronParams(couplings.size, delta_o, omega_o, couplings)
    )


def build_two_output(params: TwoOutputParams) -> np.ndarray:
    """Sum of two independent single-output perceptrons sharing the inputs."""
    n = params.num_inputs + 2
    s1 = _qubit_signs(n, n - 2)
    s2 = _qubit_signs(n, n - 1)
    diag = -params.delta_o1 * s1 - params.delta_o2 * s2
    for i in range(params.num_inputs):
        s_in = _qubit_signs(n, i)
        diag = diag + params.couplings_1[i] * s_in * s1 + params.couplings_2[i] * s_in * s2
    h = np.diag(diag.astype(complex))
    _add_flip(h, n, n - 2, params.omega_o1)
    _add_flip(h, n, n - 1, params.omega_o2)
    for i in range(params.num_inputs):
        _add_flip(h, n, i, params.input_drives[i])
    return h


def build_rydberg(params: RydbergParams, interaction_mask) -> np.ndarray:
    """Dense Rydberg Hamiltonian with only the masked V_ij pairs active.

    Implements sum Omega_i/2 sigma_x^i - sum Delta_i n_i + sum_masked
    V_ij n_i n_j with n = |r><r| = (I - sigma_z)/2, i.e. n is diagonal
    (0, 1) and |1> is the Rydberg state.
    """
    n = params.num_atoms
    dim = 1 << n
    mask = set()
    for pair in interaction_mask:
        i, j = pair
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"invalid interaction pair {pair!r} for {n} atoms")
        mask.add((min(i, j), max(i, j)))
    b = np.arange(dim)
    occ = [((b >> (n - 1 - q)) & 1).astype(float) for q in range(n)]
    diag = np.zeros(dim)
    for q in range(n):
        diag -= params.detunings[q] * occ[q]
    for i, j in sorted(mask):
        diag += params.interactions[i, j] * occ[i] * occ[j]
    h = np.diag(diag.astype(complex))
    for q in range(n):
        _add_flip(h, n, q, params.omegas[q] / 2.0)
    return h


def build_two_output_rydberg(params: RydbergParams) -> np.ndarray:
    """Rydberg Hamiltonian restricted to the two-output perceptron topology."""
    return build_rydberg(params, two_output_mask(params.num_atoms - 2))


def build_xy_perceptron(couplings) -> np.ndarray:
    """Flip-flop Hamiltonian sum J_i (sx^i sx^o + sy^i sy^o), output last."""
    j = np.asarray(couplings, dtype=float).reshape(-1)
    n = j.size + 1
    dim = 1 << n
    h = np.zeros((dim, dim), dtype=complex)
    b = np.arange(dim)
    out_bit = (b & 1).astype(bool)  # output qubit is least significant
    for i in range(j.size):
        if j[i] == 0.0:
            continue
        in_bit = ((b >> (n - 1 - i)) & 1).astype(bool)
        anti = in_bit != out_bit
        flip = (1 << (n - 1 - i)) | 1
        rows = b[anti] ^ flip
        h[rows, b[anti]] += 2.0 * j[i]
    return h


def map_single_output_coefficients(omega_o: float, delta_o: float, interactions):
    """Scalar relations of the single-output mapping: J = V/4, etc."""
    v = np.asarray(interactions, dtype=float).reshape(-1)
    couplings = v / 4.0
    delta_prime = float(np.sum(v) / 4.0 - delta_o / 2.0)
    omega_prime = omega_o / 2.0
    return omega_prime, delta_prime, couplings


def map_rydberg_to_perceptron(params: RydbergParams, tol: float = MAPPING_TOL):
    """Map a perceptron-topology Rydberg array onto perceptron couplings.

    Atoms 0..N-1 are inputs and atom N is the output.  Feasibility demands
    V_i = 2 Delta_i for every input (within ``tol`` relative); the scalar
    identity shift absorbed by the mapping is returned alongside the
    parameters.
    """
    n_in = params.num_atoms - 1
    if n_in < 1:
        raise ValueError("need at least one input atom")
    v = params.interactions[:n_in, n_in]
    deltas = params.detunings[:n_in]
    bad = [
        i
        for i in range(n_in)
        if abs(v[i] - 2.0 * deltas[i]) > tol * max(abs(v[i]), 1.0)
    ]
    if bad:
        detail = ", ".join(
            f"atom {i}: V={v[i]!r}, 2*Delta={2.0 * deltas[i]!r}" for i in bad
        )
        raise MappingInfeasibleError(
            f"mapping requires V_i = 2*Delta_i on every input; violated at {detail}"
        )
    omega_prime, delta_prime, couplings = map_single_output_coefficients(
        params.omegas[n_in], params.detunings[n_in], v
    )
    shift = float(
        -np.sum(deltas) / 2.0 - params.detunings[n_in] / 2.0 + np.sum(v) / 4.0
    )
    mapped = PerceptronParams(
        n_in,
        delta_prime,
        omega_prime,
        couplings,
        input_drives=params.omegas[:n_in] / 2.0,
    )
    return mapped, shift


def map_two_output(params: RydbergParams, tol: float = MAPPING_TOL):
    """Two-output mapping; feasibility demands 2 Delta_i = V_i + V'_i."""
    n_in = params.num_atoms - 2
    if n_in < 1:
        raise ValueError("need at least one input atom")
    v1 = params.interactions[:n_in, n_in]
    v2 = params.interactions[:n_in, n_in + 1]
    deltas = params.detunings[:n_in]
    bad = [
        i
        for i in range(n_in)
        if abs(2.0 * deltas[i] - (v1[i] + v2[i])) > tol * max(abs(v1[i] + v2[i]), 1.0)
    ]
    if bad:
        detail = ", ".join(
            f"atom {i}: 2*Delta={2.0 * deltas[i]!r}, V+V'={v1[i] + v2[i]!r}" for i in bad
        )
        raise MappingInfeasibleError(
            f"mapping requires 2*Delta_i = V_i + V'_i on every input; violated at {detail}"
        )
    om1, d1, j1 = map_single_output_coefficients(params.omegas[n_in], params.detunings[n_in], v1)
    om2, d2, j2 = map_single_output_coefficients(
        params.omegas[n_in + 1], params.detunings[n_in + 1], v2
    )
    shift = float(
        -np.sum(deltas) / 2.0
        - params.detunings[n_in] / 2.0
        - params.detunings[n_in + 1] / 2.0
        + np.sum(v1) / 4.0
        + np.sum(v2) / 4.0
    )
    mapped = TwoOutputParams(
        n_in,
        d1,
        om1,
        d2,
        om2,
        j1,
        j2,
        input_drives=params.omegas[:n_in] / 2.0,
    )
    return mapped, shift


def verify_mapping(h_a: np.ndarray, h_b: np.ndarray) -> float:
    """Max-element residual of H_a - H_b up to the best identity shift."""
    h_a = np.asarray(h_a, dtype=complex)
    h_b = np.asarray(h_b, dtype=complex)
    if h_a.shape != h_b.shape:
        raise ValueError(f"shape mismatch: {h_a.shape} vs {h_b.shape}")
    diff = h_a - h_b
    c = np.trace(diff) / h_a.shape[0]
    return float(np.max(np.abs(diff - c * np.eye(h_a.shape[0]))))


# --- atom layouts and geometric couplings -------------------------------

MAGIC_ANGLE = float(np.arccos(1.0 / np.sqrt(3.0)))

# Relative van der Waals strengths for Rb/Cs dual-species arrays
# (intra- and inter-species ratios, Rb-Rb normalized to 1).
RB_CS_C6_RATIOS = {
    ("Rb", "Rb"): 1.0,
    ("Cs", "Cs"): 0.77,
    ("Cs", "Rb"): 21.9,
}


@dataclass(frozen=True)
class AtomLayout:
    """Atom positions, species tags, and interaction constants.

    ``c6_per_pair`` maps unordered species pairs to C6 coefficients (any
    consistent units; ratios are what matter for dual-species arrays).
    ``dipole`` is the transition dipole moment entering the flip-flop
    coupling.
    """

    positions: np.ndarray
    species: tuple
    quantization_axis: np.ndarray
    c6_per_pair: dict = field(default_factory=lambda: dict(RB_CS_C6_RATIOS))
    dipole: float = 1.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (num_atoms, 3), got {pos.shape}")
        if len(self.species) != pos.shape[0]:
            raise ValueError("one species tag per atom required")
        axis = np.asarray(self.quantization_axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ValueError("quantization axis cannot be zero")
        axis = axis / norm
        pos.flags.writeable = False
        axis.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "quantization_axis", axis)

    @property
    def num_atoms(self) -> int:
        return self.positions.shape[0]

    def c6(self, species_a: str, species_b: str) -> float:
        key = (species_a, species_b)
        if key in self.c6_per_pair:
            return float(self.c6_per_pair[key])
        rkey = (species_b, species_a)
        if rkey in self.c6_per_pair:
            return float(self.c6_per_pair[rkey])
        raise KeyError(f"no C6 entry for species pair {key}")

    @classmethod
    def from_json(cls, path) -> "AtomLayout":
        """Load a layout file (schema documented in the README)."""
        data = json.loads(Path(path).read_text())
        c6 = {}
        for entry in data.get("c6_per_pair", []):
            c6[(entry["species"][0], entry["species"][1])] = float(entry["value"])
        return cls(
            positions=np.asarray(data["positions"], dtype=float),
            species=tuple(data["species"]),
            quantization_axis=np.asarray(data["quantization_axis"], dtype=float),
            c6_per_pair=c6 or dict(RB_CS_C6_RATIOS),
            dipole=float(data.get("dipole", 1.0)),
        )

    def to_json(self, path):
        data = {
            "positions": self.positions.tolist(),
            "species": list(self.species),
            "quantization_axis": self.quantization_axis.tolist(),
            "c6_per_pair": [
                {"species": list(k), "value": v} for k, v in sorted(self.c6_per_pair.items())
            ],
            "dipole": self.dipole,
        }
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def layout_to_couplings(layout: AtomLayout):
    """Geometric coupling matrices (van der Waals, flip-flop) from a layout.

    vdw_ij = C6(species_i, species_j) / R_ij^6 and flipflop_ij =
    d^2 (3 cos^2 theta_ij - 1) / R_ij^3 with theta_ij measured from the
    quantization axis; the flip-flop coupling vanishes at the magic angle
    arccos(1/sqrt(3)).
    """
    n = layout.num_atoms
    vdw = np.zeros((n, n))
    flipflop = np.zeros((n, n))
    d2 = layout.dipole**2
    for i in range(n):
        for j in range(i + 1, n):
            r_vec = layout.positions[j] - layout.positions[i]
            r = np.linalg.norm(r_vec)
            if r == 0.0:
                raise ValueError(f"atoms {i} and {j} are coincident")
            cos_theta = np.dot(r_vec, layout.quantization_axis) / r
            vdw[i, j] = vdw[j, i] = layout.c6(layout.species[i], layout.species[j]) / r**6
            flipflop[i, j] = flipflop[j, i] = d2 * (3.0 * cos_theta**2 - 1.0) / r**3
    return vdw, flipflop
