"""Dense state vectors, gates, expectations, and time evolution.

Basis convention used across the whole package: qubit 0 is the *most
significant* bit of the basis index, so basis index ``b`` carries qubit
``k``'s bit at position ``num_qubits - 1 - k``.  Perceptron output qubits
are always the trailing (least significant) qubits.  All Hamiltonian
coefficients are angular frequencies with hbar = 1; times are
dimensionless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

NORM_TOL = 1e-10
UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-10

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)


@dataclass(frozen=True)
class QuantumState:
    """Normalized pure state of ``num_qubits`` qubits.

    ``amplitudes`` has length ``2**num_qubits`` and unit 2-norm; the array
    is marked read-only so states can be shared freely between threads.
    """

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=complex)
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")
        if amps.shape != (2**self.num_qubits,):
            raise ValueError(
                f"expected {2**self.num_qubits} amplitudes for "
                f"{self.num_qubits} qubits, got shape {amps.shape}"
            )
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {norm!r} deviates from 1 by more than {NORM_TOL}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, *, normalize: bool = False) -> "QuantumState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.size)))
        if 2**n != amps.size:
            raise ValueError(f"amplitude count {amps.size} is not a power of two")
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise ValueError("cannot normalize the zero vector")
            amps = amps / norm
        return cls(n, amps)

    @classmethod
    def zero_state(cls, num_qubits: int) -> "QuantumState":
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def from_bits(cls, bits: str) -> "QuantumState":
        """Computational basis state from a bit string, qubit 0 first."""
        if not bits or any(c not in "01" for c in bits):
            raise ValueError(f"invalid bit pattern {bits!r}")
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(len(bits), amps)

    @classmethod
    def product_state(cls, single_qubit_states) -> "QuantumState":
        """Kronecker product of per-qubit 2-vectors (qubit 0 first)."""
        amps = np.asarray([1.0], dtype=complex)
        for chi in single_qubit_states:
            amps = np.kron(amps, np.asarray(chi, dtype=complex).reshape(2))
        return cls.from_amplitudes(amps)


def _check_qubit(state: QuantumState, qubit: int):
    if not 0 <= qubit < state.num_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.num_qubits}-qubit state")


def apply_single_qubit(state: QuantumState, qubit: int, gate: np.ndarray) -> QuantumState:
    """Apply a 2x2 unitary to one qubit; rejects non-unitary gates."""
    _check_qubit(state, qubit)
    gate = np.asarray(gate, dtype=complex)
    if gate.shape != (2, 2):
        raise ValueError(f"gate must be 2x2, got {gate.shape}")
    residual = np.max(np.abs(gate.conj().T @ gate - IDENTITY_2))
    if residual > UNITARY_TOL:
        raise ValueError(f"gate is not unitary: max |U^dag U - I| = {residual:.3e}")
    n = state.num_qubits
    block = 1 << (n - 1 - qubit)
    view = state.amplitudes.reshape(-1, 2, block)
    out = np.matmul(gate, view)
    return QuantumState(n, out.reshape(-1))


def expectation_observable(state: QuantumState, qubit: int, obs: np.ndarray) -> float:
    """<psi| O_qubit |psi> for a Hermitian 2x2 observable on one qubit."""
    _check_qubit(state, qubit)
    obs = np.asarray(obs, dtype=complex)
    if np.max(np.abs(obs - obs.conj().T)) > HERMITIAN_TOL:
        raise ValueError("observable must be Hermitian")
    n = state.num_qubits
    block = 1 << (n - 1 - qubit)
    v = state.amplitudes.reshape(-1, 2, block)
    v0, v1 = v[:, 0, :], v[:, 1, :]
    p0 = float(np.sum(np.abs(v0) ** 2))
    p1 = float(np.sum(np.abs(v1) ** 2))
    cross = complex(np.sum(v0.conj() * v1))
    return float(obs[0, 0].real * p0 + obs[1, 1].real * p1 + 2.0 * (obs[0, 1] * cross).real)


def expectation_z(state: QuantumState, qubit: int) -> float:
    """<sigma_z> of one qubit; always in [-1, 1]."""
    _check_qubit(state, qubit)
    n = state.num_qubits
    block = 1 << (n - 1 - qubit)
    v = state.amplitudes.reshape(-1, 2, block)
    val = float(np.sum(np.abs(v[:, 0, :]) ** 2) - np.sum(np.abs(v[:, 1, :]) ** 2))
    return min(1.0, max(-1.0, val))


def prob_zero(state: QuantumState, qubit: int) -> float:
    """P(|0>) of one qubit, the affine companion of ``expectation_z``."""
    return 0.5 * (1.0 + expectation_z(state, qubit))


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """|<a|b>|^2 between two pure states of equal size."""
    if a.num_qubits != b.num_qubits:
        raise ValueError(
            f"state sizes differ: {a.num_qubits} vs {b.num_qubits} qubits"
        )
    overlap = np.vdot(a.amplitudes, b.amplitudes)
    return float(min(1.0, abs(overlap) ** 2))


def _check_hermitian(hamiltonian: np.ndarray) -> np.ndarray:
    h = np.asarray(hamiltonian, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"Hamiltonian must be square, got shape {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h))))
    asym = float(np.max(np.abs(h - h.conj().T)))
    if asym > HERMITIAN_TOL * scale:
        raise ValueError(f"Hamiltonian is not Hermitian: max |H - H^dag| = {asym:.3e}")
    return h


def propagator(hamiltonian: np.ndarray, tau: float) -> np.ndarray:
    """exp(-i tau H) via scaling-and-squaring (scipy Pade expm)."""
    h = _check_hermitian(hamiltonian)
    return expm(-1.0j * tau * h)


def propagator_eig(hamiltonian: np.ndarray, tau: float) -> np.ndarray:
    """exp(-i tau H) via eigendecomposition; the cross-check route."""
    h = _check_hermitian(hamiltonian)
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1.0j * tau * evals)) @ evecs.conj().T


def evolve_dense(hamiltonian: np.ndarray, tau: float, state: QuantumState) -> QuantumState:
    """Evolve |psi> -> exp(-i tau H)|psi> with a dense Hermitian H."""
    h = _check_hermitian(hamiltonian)
    if h.shape[0] != state.amplitudes.size:
        raise ValueError(
            f"dimension mismatch: H is {h.shape[0]}x{h.shape[0]}, "
            f"state has {state.amplitudes.size} amplitudes"
        )
    if tau == 0.0:
        return state
    return QuantumState(state.num_qubits, propagator(h, tau) @ state.amplitudes)


def block_propagators(a_values: np.ndarray, omega: float, tau: float) -> np.ndarray:
    """Per-configuration 2x2 propagators exp(-i tau (a sigma_z + omega sigma_x)).

    Evaluated in closed form: cos(tau w) I - i sin(tau w) (a sigma_z +
    omega sigma_x)/w with w = sqrt(a^2 + omega^2); w == 0 yields the exact
    identity.  ``a_values`` is one scalar per input configuration.
    """
    a = np.asarray(a_values, dtype=float)
    w = np.sqrt(a * a + omega * omega)
    safe = np.where(w == 0.0, 1.0, w)
    c = np.cos(tau * w)
    s = np.sin(tau * w) / safe
    u = np.empty(a.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1.0j * s * a
    u[..., 1, 1] = c + 1.0j * s * a
    u[..., 0, 1] = -1.0j * s * omega
    u[..., 1, 0] = -1.0j * s * omega
    u[w == 0.0] = IDENTITY_2
    return u


def input_sign_table(num_inputs: int) -> np.ndarray:
    """(2^N, N) table of sigma_z eigenvalues per input configuration."""
    z = np.arange(1 << num_inputs)
    bits = (z[:, None] >> (num_inputs - 1 - np.arange(num_inputs))) & 1
    return 1.0 - 2.0 * bits.astype(float)


def evolve_perceptron_blocks(params, tau: float, state: QuantumState) -> QuantumState:
    """Analytic block evolution under a perceptron Hamiltonian.

    Valid only when the Hamiltonian has no transverse terms on the input
    qubits: the evolution is then block diagonal over input configurations
    and each output qubit sees a 2x2 propagator per configuration.
    Accepts single-output and two-output parameter sets.
    """
    from .hamiltonians import PerceptronParams, TwoOutputParams

    if isinstance(params, PerceptronParams):
        drives = params.input_drives
        n_out = 1
    elif isinstance(params, TwoOutputParams):
        drives = params.input_drives
        n_out = 2
    else:
        raise TypeError(f"unsupported parameter type {type(params).__name__}")
    if np.any(np.asarray(drives) != 0.0):
        raise ValueError(
            "block evolution requires zero input drives; "
            "use evolve_dense for transverse input terms"
        )
    n_in = params.num_inputs
    if state.num_qubits != n_in + n_out:
        raise ValueError(
            f"state has {state.num_qubits} qubits, expected {n_in + n_out}"
        )
    if tau == 0.0:
        return state
    signs = input_sign_table(n_in)
    if n_out == 1:
        a = -params.delta_o + signs @ np.asarray(params.couplings, dtype=float)
        u = block_propagators(a, params.omega_o, tau)
        psi = state.amplitudes.reshape(-1, 2)
        out = np.einsum("zij,zj->zi", u, psi)
    else:
        a1 = -params.delta_o1 + signs @ np.asarray(params.couplings_1, dtype=float)
        a2 = -params.delta_o2 + signs @ np.asarray(params.couplings_2, dtype=float)
        u1 = block_propagators(a1, params.omega_o1, tau)
        u2 = block_propagators(a2, params.omega_o2, tau)
        psi = state.amplitudes.reshape(-1, 2, 2)
        out = np.einsum("zac,zbd,zcd->zab", u1, u2, psi)
    return QuantumState(state.num_qubits, out.reshape(-1))


def attach_output_qubits(state: QuantumState, num_outputs: int) -> QuantumState:
    """Append ``num_outputs`` trailing qubits in |0>."""
    if num_outputs < 0:
        raise ValueError("num_outputs must be >= 0")
    if num_outputs == 0:
        return state
    n = state.num_qubits + num_outputs
    amps = np.zeros(2**n, dtype=complex)
    amps[:: 1 << num_outputs] = state.amplitudes
    return QuantumState(n, amps)
