"""Random cosine-feature circuits and the square-root error-scaling benchmark.

An n-block circuit prepares a uniform superposition over every fourth
basis index, applies one 4x4 block U1(i) (x) U2(i) per branch, and reads
out the residue-class probabilities P^m of the measured index mod 4.  The
affine readout R - 2R (P^1 + P^2) collapses to a weighted cosine sum
(1/n) sum_i R cos(gamma_i) cos(b_i + a_i . x), which is the oracle
identity pinning all gate conventions: rotations here are the standard
half-angle exp(-i theta sigma/2) family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuits import OptimizerConfig, fd_gradient
from .statevec import HADAMARD, IDENTITY_2


def rz(theta: float) -> np.ndarray:
    """exp(-i theta sigma_z / 2)."""
    return np.array([[np.exp(-0.5j * theta), 0.0], [0.0, np.exp(0.5j * theta)]])


def rx(theta: float) -> np.ndarray:
    """exp(-i theta sigma_x / 2)."""
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -1.0j * s], [-1.0j * s, c]])


def ry(theta: float) -> np.ndarray:
    """exp(-i theta sigma_y / 2)."""
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]])


CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


@dataclass(frozen=True)
class ApproxSpec:
    """Parameters of an n-block cosine-feature circuit on log2(4n) qubits.

    ``frequencies`` is (n, d), ``phases`` (n,), ``mixing_angles`` (n,) in
    [0, 2 pi]; ``scale`` is the readout range R.
    """

    frequencies: np.ndarray
    phases: np.ndarray
    mixing_angles: np.ndarray
    scale: float

    def __post_init__(self):
        freq = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        ph = np.asarray(self.phases, dtype=float).reshape(-1)
        mix = np.asarray(self.mixing_angles, dtype=float).reshape(-1)
        n = freq.shape[0]
        if ph.shape != (n,) or mix.shape != (n,):
            raise ValueError("phases and mixing_angles must have one entry per block")
        if n < 1 or (4 * n) & (4 * n - 1) != 0:
            raise ValueError(f"4n must be a power of two, got n={n}")
        if self.scale < 0:
            raise ValueError("scale R must be nonnegative")
        for name, arr in (("frequencies", freq), ("phases", ph), ("mixing_angles", mix)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_blocks(self) -> int:
        return self.frequencies.shape[0]

    @property
    def input_dim(self) -> int:
        return self.frequencies.shape[1]

    @property
    def num_qubits(self) -> int:
        return int(round(np.log2(4 * self.num_blocks)))


def composite_angle(spec: ApproxSpec, block: int, x: np.ndarray) -> float:
    """l_i(x) = b_i + a_i . x, the angle carried by block i."""
    return float(spec.phases[block] + spec.frequencies[block] @ np.asarray(x, dtype=float))


def u1_gate(frequency: np.ndarray, phase: float, x) -> np.ndarray:
    """H Rz(-b) Rz(-a_d x_d) ... Rz(-a_1 x_1) H, an x-rotation by -(b + a.x)."""
    l = float(phase + np.asarray(frequency, dtype=float) @ np.asarray(x, dtype=float))
    return rx(-l)


def u2_gate(mixing_angle: float) -> np.ndarray:
    return ry(mixing_angle)


def v_prep(num_qubits: int) -> np.ndarray:
    """Hadamards on the first n-2 qubits: |0...0> -> uniform over index 4i."""
    if num_qubits < 2:
        raise ValueError("the preparation unitary needs at least 2 qubits")
    v = np.eye(1, dtype=complex)
    for _ in range(num_qubits - 2):
        v = np.kron(v, HADAMARD)
    return np.kron(v, np.eye(4, dtype=complex))


def block_unitary(spec: ApproxSpec, x) -> np.ndarray:
    """Block-diagonal unitary with the i-th 4x4 block u1(i) (x) u2(i)."""
    n = spec.num_blocks
    u = np.zeros((4 * n, 4 * n), dtype=complex)
    for i in range(n):
        block = np.kron(
            u1_gate(spec.frequencies[i], spec.phases[i], x),
            u2_gate(spec.mixing_angles[i]),
        )
        u[4 * i : 4 * i + 4, 4 * i : 4 * i + 4] = block
    return u


def circuit_probabilities(spec: ApproxSpec, x) -> np.ndarray:
    """(P^0, P^1, P^2, P^3): measured-index residues mod 4 after the circuit.

    Uses the block structure directly: after preparation the state is
    1/sqrt(n) on every index 4i, so branch i contributes the first column
    of its block.
    """
    n = spec.num_blocks
    amps = np.empty((n, 4), dtype=complex)
    for i in range(n):
        col = np.kron(
            u1_gate(spec.frequencies[i], spec.phases[i], x)[:, 0],
            u2_gate(spec.mixing_angles[i])[:, 0],
        )
        amps[i] = col / np.sqrt(n)
    return np.sum(np.abs(amps) ** 2, axis=0)


def f_circuit(spec: ApproxSpec, x) -> float:
    """R - 2R (P^1 + P^2), the circuit's scalar readout."""
    p = circuit_probabilities(spec, x)
    return float(spec.scale - 2.0 * spec.scale * (p[1] + p[2]))


def f_cosine(spec: ApproxSpec, x) -> float:
    """Closed form (1/n) sum_i R cos(gamma_i) cos(b_i + a_i . x)."""
    x = np.asarray(x, dtype=float)
    l = spec.phases + spec.frequencies @ x
    return float(
        spec.scale * np.mean(np.cos(spec.mixing_angles) * np.cos(l))
    )


def f_cosine_batch(spec: ApproxSpec, xs: np.ndarray) -> np.ndarray:
    """Closed form over a (num_points, d) batch of inputs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    l = spec.phases[None, :] + xs @ spec.frequencies.T
    weights = spec.scale * np.cos(spec.mixing_angles) / spec.num_blocks
    return np.cos(l) @ weights


# --- conditional-gate realization --------------------------------------------


def controlled_rotation_decomposition(angle: float, axis: str):
    """CZ-sandwich factors realizing a controlled rotation.

    Returns the 4x4 factors (applied right to left) whose product equals
    controlled-Rx(2*angle) for axis 'x' (controlled-Ry(2*angle) for 'y'):
    CZ . [I (x) R(-angle)] . CZ . [I (x) R(angle)].
    """
    rot = {"x": rx, "y": ry}.get(axis)
    if rot is None:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    return [CZ, np.kron(IDENTITY_2, rot(-angle)), CZ, np.kron(IDENTITY_2, rot(angle))]


def compose_gate_sequence(factors) -> np.ndarray:
    """Matrix product of factors listed left to right (rightmost acts first)."""
    out = np.eye(factors[0].shape[0], dtype=complex)
    for f in factors:
        out = out @ f
    return out


def controlled_gate(u: np.ndarray, num_qubits: int, control: int, target: int) -> np.ndarray:
    """Single-qubit u on ``target`` applied when ``control`` reads |1>."""
    dim = 1 << num_qubits
    out = np.zeros((dim, dim), dtype=complex)
    c_bit = 1 << (num_qubits - 1 - control)
    t_bit = 1 << (num_qubits - 1 - target)
    for b in range(dim):
        if not b & c_bit:
            out[b, b] = 1.0
            continue
        t = (b & t_bit) >> (num_qubits - 1 - target)
        for t_new in (0, 1):
            b_new = (b & ~t_bit) | (t_new << (num_qubits - 1 - target))
            out[b_new, b] = u[t_new, t]
    return out


def pauli_x_on(num_qubits: int, qubit: int) -> np.ndarray:
    dim = 1 << num_qubits
    out = np.zeros((dim, dim), dtype=complex)
    b = np.arange(dim)
    out[b ^ (1 << (num_qubits - 1 - qubit)), b] = 1.0
    return out


def realize_circuit_3q(spec: ApproxSpec, x) -> np.ndarray:
    """Gate-level 3-qubit circuit from preparation plus conditional rotations.

    For the two-block case the input qubit selects which block hits the two
    output qubits: block 1 under control |0> (conjugated with X), block 2
    under control |1>.  Each conditional rotation comes from the CZ
    decomposition, so the product reproduces the block-diagonal circuit.
    """
    if spec.num_blocks != 2:
        raise ValueError("the gate-level realization is built for the 2-block case")
    gates = [v_prep(3)]
    x_gate = pauli_x_on(3, 0)
    for block, conjugate in ((0, True), (1, False)):
        l = composite_angle(spec, block, x)
        cu1 = compose_gate_sequence(controlled_rotation_decomposition(-l / 2.0, "x"))
        cu2 = compose_gate_sequence(
            controlled_rotation_decomposition(spec.mixing_angles[block] / 2.0, "y")
        )
        seq = [
            _embed_pair(cu1, 3, 0, 1),
            _embed_pair(cu2, 3, 0, 2),
        ]
        if conjugate:
            seq = [x_gate] + seq + [x_gate]
        gates.extend(seq)
    return compose_gate_sequence(list(reversed(gates)))


def _embed_pair(u4: np.ndarray, num_qubits: int, control: int, target: int) -> np.ndarray:
    """Embed a (control, target) two-qubit gate into the full register."""
    dim = 1 << num_qubits
    out = np.zeros((dim, dim), dtype=complex)
    c_shift = num_qubits - 1 - control
    t_shift = num_qubits - 1 - target
    rest_mask = (dim - 1) ^ (1 << c_shift) ^ (1 << t_shift)
    for b in range(dim):
        c = (b >> c_shift) & 1
        t = (b >> t_shift) & 1
        col = 2 * c + t
        for row in range(4):
            c_new, t_new = row >> 1, row & 1
            b_new = (b & rest_mask) | (c_new << c_shift) | (t_new << t_shift)
            out[b_new, b] += u4[row, col]
    return out


# --- targets and the error-scaling benchmark ---------------------------------


@dataclass(frozen=True)
class TargetFunction:
    """A real target with known Fourier-transform L1 norm.

    ``sample_frequency(rng, size)`` draws (frequencies (size, d), phases
    (size,), sign_angles (size,)) from the |f-hat|-proportional density;
    ``sample_input`` draws from the evaluation measure mu.
    """

    name: str
    input_dim: int
    evaluate: callable
    fourier_l1: float
    sample_frequency: callable
    sample_input: callable


def gaussian_target(input_dim: int = 1) -> TargetFunction:
    """f(x) = exp(-pi |x|^2): self-dual under the Fourier transform, L1 = 1.

    The normalized frequency density exp(-pi |xi|^2) is a centered normal
    with variance 1/(2 pi) per coordinate; all phases vanish.
    """
    d = input_dim

    def evaluate(xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return np.exp(-np.pi * np.sum(xs**2, axis=1))

    def sample_frequency(rng, size):
        xi = rng.normal(0.0, 1.0 / np.sqrt(2.0 * np.pi), size=(size, d))
        return 2.0 * np.pi * xi, np.zeros(size), np.zeros(size)

    def sample_input(rng, size):
        return rng.normal(0.0, 1.0, size=(size, d))

    return TargetFunction(f"gaussian-d{d}", d, evaluate, 1.0, sample_frequency, sample_input)


def cosine_target(frequency, phase: float = 0.0, amplitude: float = 1.0) -> TargetFunction:
    """f(x) = A cos(c . x + b): a single spectral line, L1 = |A|."""
    c = np.asarray(frequency, dtype=float).reshape(-1)
    d = c.size

    def evaluate(xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return amplitude * np.cos(xs @ c + phase)

    def sample_frequency(rng, size):
        freq = np.tile(c, (size, 1))
        phases = np.full(size, phase)
        signs = np.zeros(size) if amplitude >= 0 else np.full(size, np.pi)
        return freq, phases, signs

    def sample_input(rng, size):
        return rng.uniform(-np.pi, np.pi, size=(size, d))

    return TargetFunction(f"cosine-d{d}", d, evaluate, abs(amplitude),
                          sample_frequency, sample_input)


def multi_cosine_target(components) -> TargetFunction:
    """f(x) = sum_k A_k cos(c_k . x + b_k); lines sampled proportional to |A_k|."""
    comps = [(np.asarray(c, dtype=float).reshape(-1), float(b), float(a))
             for c, b, a in components]
    d = comps[0][0].size
    weights = np.array([abs(a) for _, _, a in comps])
    l1 = float(np.sum(weights))

    def evaluate(xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        out = np.zeros(xs.shape[0])
        for c, b, a in comps:
            out += a * np.cos(xs @ c + b)
        return out

    def sample_frequency(rng, size):
        idx = rng.choice(len(comps), size=size, p=weights / l1)
        freq = np.stack([comps[i][0] for i in idx])
        phases = np.array([comps[i][1] for i in idx])
        signs = np.array([0.0 if comps[i][2] >= 0 else np.pi for i in idx])
        return freq, phases, signs

    def sample_input(rng, size):
        return rng.uniform(-np.pi, np.pi, size=(size, d))

    return TargetFunction(f"multi-cosine-d{d}", d, evaluate, l1,
                          sample_frequency, sample_input)


TARGETS = {
    "gaussian": gaussian_target,
    "cosine": cosine_target,
}


def sample_barron_features(target: TargetFunction, num_blocks: int, rng) -> ApproxSpec:
    """Monte-Carlo feature draw: frequencies from the |f-hat| density.

    With R = L1[f-hat] and mixing angles encoding component signs, the
    feature average is an unbiased estimate of the target, giving the
    square-root-in-n error decay.
    """
    if target.fourier_l1 == 0.0:
        n = num_blocks
        return ApproxSpec(np.zeros((n, target.input_dim)), np.zeros(n), np.zeros(n), 0.0)
    freq, phases, signs = target.sample_frequency(rng, num_blocks)
    return ApproxSpec(freq, phases, signs, target.fourier_l1)


def fit_refine(spec: ApproxSpec, target: TargetFunction, sample_budget: int,
               optimizer_config: OptimizerConfig, rng,
               epochs: int = 50, fd_step: float = 1e-4) -> ApproxSpec:
    """Polish a feature draw by minimizing empirical squared error over mu.

    Frequencies, phases, and mixing angles are trained with the shared
    optimizers; R stays fixed.
    """
    xs = target.sample_input(rng, sample_budget)
    ys = target.evaluate(xs)
    n, d = spec.num_blocks, spec.input_dim

    def unpack(v):
        return ApproxSpec(
            v[: n * d].reshape(n, d), v[n * d : n * d + n], v[n * d + n :], spec.scale
        )

    def loss(v):
        residual = f_cosine_batch(unpack(v), xs) - ys
        return 0.5 * float(np.mean(residual**2))

    vec = np.concatenate([spec.frequencies.ravel(), spec.phases, spec.mixing_angles])
    opt = optimizer_config.build()
    for _ in range(epochs):
        vec = opt.step(vec, fd_gradient(loss, vec, fd_step))
    return unpack(vec)


@dataclass
class ErrorCurveRow:
    num_blocks: int
    median_rmse: float
    bound: float
    rmse_per_draw: list = field(default_factory=list)


def error_curve(target: TargetFunction, n_list, draws: int, mu_samples: int, rng,
                evaluator: str = "cosine"):
    """Median RMSE versus block count, with the L1/sqrt(n) reference bound.

    Returns (rows, fitted log-log slope).  ``evaluator`` picks the cosine
    closed form (default) or the explicit circuit readout; the two agree
    to 1e-9, which the test suite pins separately.
    """
    if list(n_list) != sorted(n_list):
        raise ValueError("n_list must be ascending")
    eval_fn = {
        "cosine": f_cosine_batch,
        "circuit": lambda spec, xs: np.array([f_circuit(spec, x) for x in xs]),
    }[evaluator]
    rows = []
    for n in n_list:
        rmses = []
        for _ in range(draws):
            spec = sample_barron_features(target, n, rng)
            xs = target.sample_input(rng, mu_samples)
            residual = eval_fn(spec, xs) - target.evaluate(xs)
            rmses.append(float(np.sqrt(np.mean(residual**2))))
        rows.append(ErrorCurveRow(n, float(np.median(rmses)),
                                  target.fourier_l1 / np.sqrt(n), rmses))
    slope = float(np.polyfit(np.log([r.num_blocks for r in rows]),
                             np.log([max(r.median_rmse, 1e-300) for r in rows]), 1)[0])
    return rows, slope
