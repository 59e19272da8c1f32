"""Layered variational circuits: Euler rotations, block evolution, optimizers.

The circuit alternates per-qubit Euler rotations with entangling evolution
under a per-layer perceptron Hamiltonian for a fixed time tau.  This module
is the readable reference path (dense, complex128); the training engine in
:mod:`qperc.classify` reproduces it with batched kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import hamiltonians, statevec
from .statevec import QuantumState

FD_STEP = 1e-4


def rotation_z(theta: float) -> np.ndarray:
    """exp(-i theta sigma_z) — full angle in the exponent."""
    return np.array([[np.exp(-1.0j * theta), 0.0], [0.0, np.exp(1.0j * theta)]])


def rotation_x(theta: float) -> np.ndarray:
    """exp(-i theta sigma_x) — full angle in the exponent."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -1.0j * s], [-1.0j * s, c]])


def euler_rotation(gamma: float, beta: float, alpha: float) -> np.ndarray:
    """Single-qubit unitary exp(-i gamma sz) exp(-i beta sx) exp(-i alpha sz)."""
    return rotation_z(gamma) @ rotation_x(beta) @ rotation_z(alpha)


@dataclass(frozen=True)
class CircuitParams:
    """All variational parameters of a depth-L circuit.

    ``angles`` has shape (L, 2, num_qubits, 3) holding (gamma, beta, alpha)
    for the two rotation layers of each circuit layer.  ``output_omega`` /
    ``output_delta`` / ``couplings`` hold the per-layer entangling
    Hamiltonian coefficients, shaped (L, k) and (L, k, N) for k output
    qubits.  In the mapped-Rydberg training mode these slots carry the
    array-side quantities (Omega_o, Delta_o, V) instead and are mapped to
    perceptron coefficients layer by layer.  ``tau`` is the shared
    evolution time; it is swept over a grid, never trained.
    """

    angles: np.ndarray
    output_omega: np.ndarray
    output_delta: np.ndarray
    couplings: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        om = np.asarray(self.output_omega, dtype=float)
        de = np.asarray(self.output_delta, dtype=float)
        j = np.asarray(self.couplings, dtype=float)
        if angles.ndim != 4 or angles.shape[1] != 2 or angles.shape[3] != 3:
            raise ValueError(f"angles must be (L, 2, num_qubits, 3), got {angles.shape}")
        depth = angles.shape[0]
        if om.shape != de.shape or om.ndim != 2 or om.shape[0] != depth:
            raise ValueError("output_omega/output_delta must be (L, num_outputs)")
        if j.ndim != 3 or j.shape[:2] != om.shape:
            raise ValueError("couplings must be (L, num_outputs, num_inputs)")
        if om.shape[1] + j.shape[2] != angles.shape[2]:
            raise ValueError("angles qubit count must equal num_inputs + num_outputs")
        for name, arr in (("angles", angles), ("output_omega", om),
                          ("output_delta", de), ("couplings", j)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def depth(self) -> int:
        return self.angles.shape[0]

    @property
    def num_qubits(self) -> int:
        return self.angles.shape[2]

    @property
    def num_outputs(self) -> int:
        return self.output_omega.shape[1]

    @property
    def num_inputs(self) -> int:
        return self.couplings.shape[2]

    @classmethod
    def zeros(cls, depth: int, num_inputs: int, num_outputs: int = 1,
              tau: float = 1.0) -> "CircuitParams":
        nq = num_inputs + num_outputs
        return cls(
            np.zeros((depth, 2, nq, 3)),
            np.zeros((depth, num_outputs)),
            np.zeros((depth, num_outputs)),
            np.zeros((depth, num_outputs, num_inputs)),
            tau,
        )

    @classmethod
    def random(cls, depth: int, num_inputs: int, num_outputs: int, rng,
               scale: float = 0.1, scale_ham: float = None,
               tau: float = 1.0) -> "CircuitParams":
        """Uniform [-scale, scale] initialization; Hamiltonian coefficients
        may use their own scale (entangling dynamics need J*tau = O(1) to
        imprint the inputs on the outputs within the probed tau grid)."""
        if scale_ham is None:
            scale_ham = scale
        nq = num_inputs + num_outputs
        u = lambda s, shape: rng.uniform(-s, s, size=shape)
        return cls(
            u(scale, (depth, 2, nq, 3)),
            u(scale_ham, (depth, num_outputs)),
            u(scale_ham, (depth, num_outputs)),
            u(scale_ham, (depth, num_outputs, num_inputs)),
            tau,
        )

    def pack(self) -> np.ndarray:
        """Flatten all trainable scalars (tau excluded) into one vector."""
        return np.concatenate(
            [
                self.angles.ravel(),
                self.output_omega.ravel(),
                self.output_delta.ravel(),
                self.couplings.ravel(),
            ]
        )

    def with_packed(self, vector: np.ndarray) -> "CircuitParams":
        vector = np.asarray(vector, dtype=float)
        sizes = [self.angles.size, self.output_omega.size,
                 self.output_delta.size, self.couplings.size]
        if vector.size != sum(sizes):
            raise ValueError(f"packed vector must have {sum(sizes)} entries")
        parts = np.split(vector, np.cumsum(sizes)[:-1])
        return CircuitParams(
            parts[0].reshape(self.angles.shape),
            parts[1].reshape(self.output_omega.shape),
            parts[2].reshape(self.output_delta.shape),
            parts[3].reshape(self.couplings.shape),
            self.tau,
        )

    def with_tau(self, tau: float) -> "CircuitParams":
        return replace(self, tau=tau)


def layer_coefficients(params: CircuitParams, layer: int, model: str = "perceptron"):
    """Entangling coefficients (omega, delta, J arrays over outputs) of one layer.

    For the mapped-Rydberg model the stored per-layer values are array-side
    drives/detunings/interactions and are pushed through the mapping
    relations first, so training exercises the mapping end to end.
    """
    om = params.output_omega[layer]
    de = params.output_delta[layer]
    j = params.couplings[layer]
    if model == "perceptron":
        return om.copy(), de.copy(), j.copy()
    if model == "mapped-rydberg":
        oms, des, js = [], [], []
        for k in range(om.size):
            o, d, jj = hamiltonians.map_single_output_coefficients(om[k], de[k], j[k])
            oms.append(o)
            des.append(d)
            js.append(jj)
        return np.array(oms), np.array(des), np.stack(js)
    raise ValueError(f"unknown Hamiltonian model {model!r}")


def _layer_block_params(params: CircuitParams, layer: int, model: str):
    om, de, j = layer_coefficients(params, layer, model)
    if params.num_outputs == 1:
        return hamiltonians.PerceptronParams(params.num_inputs, de[0], om[0], j[0])
    return hamiltonians.TwoOutputParams(
        params.num_inputs, de[0], om[0], de[1], om[1], j[0], j[1]
    )


def _apply_rotation_layer(state: QuantumState, angles_2d: np.ndarray) -> QuantumState:
    for q in range(state.num_qubits):
        g, b, a = angles_2d[q]
        state = statevec.apply_single_qubit(state, q, euler_rotation(g, b, a))
    return state


def forward(params: CircuitParams, state: QuantumState, model: str = "perceptron") -> QuantumState:
    """Run the layered circuit on a full input+output register state.

    Each layer applies rotation layer 1, block evolution for time tau
    under that layer's entangling Hamiltonian, then rotation layer 2.
    ``model`` selects how the stored coefficients are interpreted
    ('perceptron', 'mapped-rydberg', or 'xy').
    """
    if state.num_qubits != params.num_qubits:
        raise ValueError(
            f"state has {state.num_qubits} qubits, circuit expects {params.num_qubits}"
        )
    for layer in range(params.depth):
        state = _apply_rotation_layer(state, params.angles[layer, 0])
        if model == "xy":
            h = hamiltonians.build_xy_perceptron(params.couplings[layer, 0])
            state = statevec.evolve_dense(h, params.tau, state)
        else:
            block = _layer_block_params(params, layer, model)
            state = statevec.evolve_perceptron_blocks(block, params.tau, state)
        state = _apply_rotation_layer(state, params.angles[layer, 1])
    return state


def fd_gradient(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    probe = x.copy()
    for i in range(x.size):
        probe[i] = x[i] + step
        up = f(probe)
        probe[i] = x[i] - step
        down = f(probe)
        probe[i] = x[i]
        grad[i] = (up - down) / (2.0 * step)
    return grad


# --- optimizers -----------------------------------------------------------


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 300
    loss_tolerance: float = 1e-8
    patience: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.kind not in ("gradient_descent", "adam", "adagrad"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")

    def build(self):
        if self.kind == "gradient_descent":
            return GradientDescent(self.learning_rate)
        if self.kind == "adam":
            return Adam(self.learning_rate, self.beta1, self.beta2, self.epsilon)
        return Adagrad(self.learning_rate, self.epsilon)


class GradientDescent:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.learning_rate * grad


class Adam:
    """Bias-corrected adaptive moment estimation."""

    def __init__(self, learning_rate=0.05, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


class Adagrad:
    """Per-parameter learning rates from accumulated squared gradients."""

    def __init__(self, learning_rate=0.05, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.epsilon = epsilon
        self.accum = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.accum is None:
            self.accum = np.zeros_like(params)
        self.accum = self.accum + grad**2
        return params - self.learning_rate * grad / (np.sqrt(self.accum) + self.epsilon)


def optimizer_step(optimizer, params: np.ndarray, grad: np.ndarray):
    """Functional wrapper: returns (optimizer, updated params)."""
    return optimizer, optimizer.step(params, grad)
