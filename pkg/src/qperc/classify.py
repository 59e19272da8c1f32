"""Feature extraction, tanh readout, and end-to-end classifier training.

A trained classifier is a layered circuit probed at every time in a tau
grid: each probe contributes the output-qubit expectation values to a
feature vector r(psi), and the prediction is tanh(w . r).  Circuit
parameters and readout weights are trained jointly against the MSE loss
with central finite differences.

The hot path (finite-difference probes, one full feature evaluation per
perturbed scalar) runs on the batched kernels with per-stage state
caching: a probe replays only the pipeline downstream of the parameter it
perturbs.  Probe results are scalars assembled by index, so gradients and
training runs are bit-identical for any worker count.
"""

from __future__ import annotations

import math
import multiprocessing
import os
import threading
from dataclasses import dataclass, field

import numpy as np

from . import kernels, statevec
from .circuits import CircuitParams, OptimizerConfig, euler_rotation, layer_coefficients
from .datasets import LabeledDataset
from .statevec import QuantumState, block_propagators, input_sign_table

DEFAULT_TAU_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))

_OBSERVABLE_BASE = {
    "sigma_z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    "p0": np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex),
}


@dataclass(frozen=True)
class FeatureConfig:
    """Shape and interpretation of the feature map.

    ``model`` selects the entangling Hamiltonian: 'mapped-rydberg' trains
    array-side parameters pushed through the mapping relations,
    'perceptron' trains the perceptron coefficients directly, and 'xy'
    uses the flip-flop Hamiltonian (dense reference path only).  With
    ``share_tau_params`` the same circuit is probed at every tau; the
    ablation flag gives each tau its own parameter set.
    """

    num_inputs: int
    num_outputs: int = 1
    depth: int = 2
    tau_grid: tuple = DEFAULT_TAU_GRID
    model: str = "mapped-rydberg"
    observable: str = "sigma_z"
    dtype: str = "float64"
    share_tau_params: bool = True

    def __post_init__(self):
        if self.model not in ("mapped-rydberg", "perceptron", "xy"):
            raise ValueError(f"unknown Hamiltonian model {self.model!r}")
        if self.observable not in _OBSERVABLE_BASE:
            raise ValueError(f"unknown observable {self.observable!r}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be 'float64' or 'float32'")
        if len(self.tau_grid) < 1:
            raise ValueError("tau grid cannot be empty")

    @property
    def num_qubits(self) -> int:
        return self.num_inputs + self.num_outputs

    @property
    def num_params_sets(self) -> int:
        return 1 if self.share_tau_params else len(self.tau_grid)

    @property
    def num_features(self) -> int:
        return len(self.tau_grid) * self.num_outputs

    @property
    def complex_dtype(self):
        return np.complex128 if self.dtype == "float64" else np.complex64


def dataset_batch(dataset: LabeledDataset, num_outputs: int, dtype) -> np.ndarray:
    """(dim, num_samples) column batch with output qubits attached in |0>."""
    n_in = dataset.num_qubits
    dim = 1 << (n_in + num_outputs)
    batch = np.zeros((dim, len(dataset)), dtype=dtype)
    stride = 1 << num_outputs
    for s, (state, _) in enumerate(dataset.samples):
        batch[::stride, s] = state.amplitudes
    return batch


def states_batch(states, num_outputs: int, dtype) -> np.ndarray:
    n_in = states[0].num_qubits
    dim = 1 << (n_in + num_outputs)
    batch = np.zeros((dim, len(states)), dtype=dtype)
    stride = 1 << num_outputs
    for s, state in enumerate(states):
        if state.num_qubits != n_in:
            raise ValueError("all states must have the same qubit count")
        batch[::stride, s] = state.amplitudes
    return batch


def _layer_tables(raw_omega, raw_delta, raw_j, taus, signs, model, cdtype):
    """Per-configuration block propagator tables for one layer, all taus.

    Returns a list over taus of (2^N, m, m) arrays, m = 2 or 4.
    """
    k = raw_omega.size
    coeff = []
    for o in range(k):
        if model == "mapped-rydberg":
            from .hamiltonians import map_single_output_coefficients

            om, de, j = map_single_output_coefficients(raw_omega[o], raw_delta[o], raw_j[o])
        else:
            om, de, j = raw_omega[o], raw_delta[o], raw_j[o]
        coeff.append((om, -de + signs @ j))
    tables = []
    for tau in taus:
        per_out = [block_propagators(a, om, tau) for om, a in coeff]
        if k == 1:
            tab = per_out[0]
        else:
            tab = np.einsum("zij,zkl->zikjl", per_out[0], per_out[1]).reshape(-1, 4, 4)
        tables.append(np.ascontiguousarray(tab.astype(cdtype)))
    return tables


def _xy_layer_unitaries(couplings, taus, cdtype):
    """Dense flip-flop propagators per tau; the xy model has no block path."""
    from .hamiltonians import build_xy_perceptron
    from .statevec import propagator

    h = build_xy_perceptron(couplings)
    return [np.ascontiguousarray(propagator(h, tau).astype(cdtype)) for tau in taus]


def _fuse_rotation_stage(mats, cdtype):
    """Pair up adjacent per-qubit 2x2s into 4x4 passes (leftover stays 2x2)."""
    passes = []
    q = 0
    n = len(mats)
    while q + 1 < n:
        passes.append((q, np.ascontiguousarray(np.kron(mats[q], mats[q + 1]).astype(cdtype))))
        q += 2
    if q < n:
        passes.append((q, np.ascontiguousarray(mats[q].astype(cdtype))))
    return passes


def _folded_observable(angles_final, base_obs):
    """Hermitian 2x2 seen through the final rotation of one output qubit."""
    u = euler_rotation(*angles_final)
    return u.conj().T @ base_obs @ u


class FeatureEngine:
    """Batched feature evaluator with per-stage caches for cheap FD probes.

    The circuit pipeline is compiled into 2L ops: merged rotation stages
    P_0..P_{L-1} interleaved with block evolutions B_1..B_L; the final
    rotation layer only touches the measured observables, so it is folded
    into them.  ``caches[i][t]`` holds the batch state after the first i
    ops at tau index t, letting a probe of a stage-j parameter start from
    ``caches[j]``.
    """

    def __init__(self, config: FeatureConfig, batch: np.ndarray, threads: int = 1):
        self.config = config
        self.cdtype = config.complex_dtype
        self.batch = np.ascontiguousarray(batch, dtype=self.cdtype)
        self.threads = max(1, threads)
        self.num_qubits = config.num_qubits
        if self.batch.shape[0] != 1 << self.num_qubits:
            raise ValueError(
                f"batch has {self.batch.shape[0]} rows, config expects "
                f"{1 << self.num_qubits}"
            )
        self.num_samples = self.batch.shape[1]
        self.signs = input_sign_table(config.num_inputs)
        self.taus = list(config.tau_grid)
        self._local = threading.local()
        self.params_list = None

    # --- compilation -----------------------------------------------------

    def set_params(self, params_list):
        self.params_list = list(params_list)
        if len(self.params_list) != self.config.num_params_sets:
            raise ValueError("wrong number of parameter sets for this config")
        depth = self.config.depth
        cfg = self.config
        self._qubit_mats = []  # [p_idx][stage][qubit] -> 2x2 complex128
        self._stages = []      # [p_idx][stage] -> fused pass list
        self._tables = []      # [p_idx][layer] -> list over taus of tables
        self._obs = []         # [p_idx][output] -> folded 2x2
        for params in self.params_list:
            if params.depth != depth or params.num_qubits != cfg.num_qubits:
                raise ValueError("parameter shapes do not match the feature config")
            stage_mats = []
            for s in range(depth):
                mats = []
                for q in range(cfg.num_qubits):
                    m = euler_rotation(*params.angles[s, 0, q])
                    if s > 0:
                        m = m @ euler_rotation(*params.angles[s - 1, 1, q])
                    mats.append(m)
                stage_mats.append(mats)
            self._qubit_mats.append(stage_mats)
            self._stages.append(
                [_fuse_rotation_stage(mats, self.cdtype) for mats in stage_mats]
            )
            if cfg.model == "xy":
                self._tables.append(
                    [_xy_layer_unitaries(params.couplings[l, 0], self.taus, self.cdtype)
                     for l in range(depth)]
                )
            else:
                self._tables.append(
                    [
                        _layer_tables(
                            params.output_omega[l], params.output_delta[l],
                            params.couplings[l], self.taus, self.signs, cfg.model,
                            self.cdtype,
                        )
                        for l in range(depth)
                    ]
                )
            base = _OBSERVABLE_BASE[cfg.observable]
            self._obs.append(
                [
                    _folded_observable(params.angles[depth - 1, 1, cfg.num_inputs + o], base)
                    for o in range(cfg.num_outputs)
                ]
            )
        self._build_caches()

    def _params_index(self, tau_index: int) -> int:
        return 0 if self.config.share_tau_params else tau_index

    def _ops(self, p_idx: int, tau_index: int):
        """The 2L (kind, payload) ops of the compiled pipeline at one tau."""
        entangle = "dense" if self.config.model == "xy" else "block"
        ops = []
        for l in range(self.config.depth):
            ops.append(("rot", self._stages[p_idx][l]))
            ops.append((entangle, self._tables[p_idx][l][tau_index]))
        return ops

    def _apply_op(self, psi, op):
        kind, payload = op
        if kind == "rot":
            for q, mat in payload:
                if mat.shape[0] == 4:
                    kernels.apply_gate_pair(psi, q, self.num_qubits, mat)
                else:
                    kernels.apply_gate(psi, q, self.num_qubits, mat)
        elif kind == "dense":
            np.copyto(psi, np.matmul(payload, psi))
        else:
            kernels.apply_block_diag(psi, payload)

    def _build_caches(self):
        n_ops = 2 * self.config.depth
        self.caches = [[None] * len(self.taus) for _ in range(n_ops + 1)]
        for t in range(len(self.taus)):
            psi = self.batch.copy()
            self.caches[0][t] = psi.copy()
            for j, op in enumerate(self._ops(self._params_index(t), t)):
                self._apply_op(psi, op)
                self.caches[j + 1][t] = psi.copy()

    # --- evaluation --------------------------------------------------------

    def _measure(self, psi, obs_list):
        cfg = self.config
        out = np.empty((cfg.num_outputs, self.num_samples))
        buf = np.empty(self.num_samples)
        for o in range(cfg.num_outputs):
            obs = obs_list[o]
            kernels.expect_obs(
                psi, cfg.num_inputs + o, self.num_qubits,
                float(obs[0, 0].real), float(obs[1, 1].real),
                float(obs[0, 1].real), float(obs[0, 1].imag), buf,
            )
            out[o] = buf
        return out

    def base_features(self) -> np.ndarray:
        """(num_samples, T*k) features at the compiled parameters."""
        cfg = self.config
        feats = np.empty((self.num_samples, cfg.num_features))
        for t in range(len(self.taus)):
            p_idx = self._params_index(t)
            vals = self._measure(self.caches[-1][t], self._obs[p_idx])
            for o in range(cfg.num_outputs):
                feats[:, t * cfg.num_outputs + o] = vals[o]
        return feats

    def _scratch(self):
        buf = getattr(self._local, "buf", None)
        if buf is None or buf.shape != self.batch.shape or buf.dtype != self.cdtype:
            buf = np.empty_like(self.batch)
            self._local.buf = buf
        return buf

    def features_with_probe(self, base_feats: np.ndarray, probe) -> np.ndarray:
        """Features with one pipeline piece replaced, replayed from caches.

        ``probe`` is (p_idx, op_index, payload): op_index 2l = rotation
        stage l (payload: fused pass list), 2l+1 = block layer l (payload:
        per-tau tables), 2L = folded observables (payload: obs list).
        """
        cfg = self.config
        p_idx, op_index, payload = probe
        n_ops = 2 * cfg.depth
        feats = base_feats.copy()
        taus = range(len(self.taus)) if cfg.share_tau_params else None
        if taus is None:
            taus = [t for t in range(len(self.taus)) if self._params_index(t) == p_idx]
        for t in taus:
            if op_index == n_ops:  # observable-only probe
                vals = self._measure(self.caches[-1][t], payload)
            else:
                psi = self._scratch()
                np.copyto(psi, self.caches[op_index][t])
                ops = self._ops(self._params_index(t), t)
                if op_index % 2 == 0:
                    ops[op_index] = ("rot", payload)
                else:
                    kind = "dense" if cfg.model == "xy" else "block"
                    ops[op_index] = (kind, payload[t])
                for op in ops[op_index:]:
                    self._apply_op(psi, op)
                vals = self._measure(psi, self._obs[p_idx])
            for o in range(cfg.num_outputs):
                feats[:, t * cfg.num_outputs + o] = vals[o]
        return feats

    # --- probe payload builders -------------------------------------------

    def rotation_probe(self, p_idx, stage, qubit, perturbed_angles_per_layer):
        """Rebuild the fused pass list of one stage with one qubit's matrix replaced.

        ``perturbed_angles_per_layer`` is the (possibly perturbed) pair of
        Euler triples feeding that stage's per-qubit matrix.
        """
        m = euler_rotation(*perturbed_angles_per_layer[0])
        if stage > 0:
            m = m @ euler_rotation(*perturbed_angles_per_layer[1])
        mats = list(self._qubit_mats[p_idx][stage])
        mats[qubit] = m
        return (p_idx, 2 * stage, _fuse_rotation_stage(mats, self.cdtype))

    def block_probe(self, p_idx, layer, raw_omega, raw_delta, raw_j):
        if self.config.model == "xy":
            tables = _xy_layer_unitaries(raw_j[0], self.taus, self.cdtype)
        else:
            tables = _layer_tables(
                raw_omega, raw_delta, raw_j, self.taus, self.signs,
                self.config.model, self.cdtype,
            )
        return (p_idx, 2 * layer + 1, tables)

    def observable_probe(self, p_idx, output, perturbed_angles):
        obs = list(self._obs[p_idx])
        obs[output] = _folded_observable(perturbed_angles, _OBSERVABLE_BASE[self.config.observable])
        return (p_idx, 2 * self.config.depth, obs)


# --- readout and loss -------------------------------------------------------


def readout(w: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Elementwise tanh(w . r); accepts one feature vector or a batch."""
    w = np.asarray(w, dtype=float)
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        return np.tanh(w @ features)
    return np.tanh(features @ w.T)


def predicted_labels(outputs: np.ndarray) -> np.ndarray:
    """Sign labels with the 0 -> +1 tie-break."""
    return np.where(np.asarray(outputs) >= 0.0, 1, -1)


def mse_loss(outputs: np.ndarray, labels: np.ndarray) -> float:
    """Half the summed squared residuals; permutation-invariant via fsum."""
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    per_sample = np.sum((outputs - labels) ** 2, axis=1)
    return 0.5 * math.fsum(per_sample.tolist())


# --- parameter packing -------------------------------------------------------


@dataclass(frozen=True)
class _ParamLoc:
    """Where one packed scalar lives in the compiled pipeline."""

    p_idx: int
    kind: str          # 'angle' | 'ham'
    layer: int
    block: int = 0     # rotation layer within the circuit layer (angles)
    qubit: int = 0
    component: int = 0
    output: int = 0
    ham_field: str = ""   # 'omega' | 'delta' | 'coupling'
    input_index: int = 0


def _circuit_locations(config: FeatureConfig, params_list):
    locs = []
    for p_idx, params in enumerate(params_list):
        L, _, nq, _ = params.angles.shape
        k, n = params.couplings.shape[1:]
        for l in range(L):
            for blk in range(2):
                for q in range(nq):
                    for c in range(3):
                        locs.append(_ParamLoc(p_idx, "angle", l, blk, q, c))
        for l in range(L):
            for o in range(k):
                locs.append(_ParamLoc(p_idx, "ham", l, output=o, ham_field="omega"))
        for l in range(L):
            for o in range(k):
                locs.append(_ParamLoc(p_idx, "ham", l, output=o, ham_field="delta"))
        for l in range(L):
            for o in range(k):
                for i in range(n):
                    locs.append(
                        _ParamLoc(p_idx, "ham", l, output=o, ham_field="coupling",
                                  input_index=i)
                    )
    return locs


def _is_structurally_dead(loc: _ParamLoc, config: FeatureConfig) -> bool:
    """Parameters whose gradient vanishes identically.

    Final-layer second-rotation angles on input qubits never reach the
    measured output observables; the outer z-angle of the final output
    rotation commutes with both supported observables.  The inner z-angle
    of the very first rotation on an output qubit only rephases its |0>
    initial state.
    """
    if loc.kind == "ham":
        return config.model == "xy" and loc.ham_field in ("omega", "delta")
    if loc.kind != "angle":
        return False
    is_output = loc.qubit >= config.num_inputs
    if loc.block == 1 and loc.layer == config.depth - 1:
        if not is_output:
            return True
        if loc.component == 0:  # outer z-rotation
            return True
    if loc.block == 0 and loc.layer == 0 and is_output and loc.component == 2:
        return True
    return False


def pack_parameters(params_list, w: np.ndarray) -> np.ndarray:
    return np.concatenate([p.pack() for p in params_list] + [np.asarray(w, dtype=float).ravel()])


def unpack_parameters(vector: np.ndarray, params_list, w_shape):
    vector = np.asarray(vector, dtype=float)
    new_params = []
    pos = 0
    for p in params_list:
        size = p.pack().size
        new_params.append(p.with_packed(vector[pos : pos + size]))
        pos += size
    w = vector[pos:].reshape(w_shape)
    return new_params, w


# --- public feature / loss / gradient ops -----------------------------------


def extract_features(states, params_list, config: FeatureConfig,
                     threads: int = 1) -> np.ndarray:
    """(num_states, num_features) features in fixed (tau, output) order."""
    batch = states_batch(states, config.num_outputs, config.complex_dtype)
    engine = FeatureEngine(config, batch, threads)
    engine.set_params(params_list)
    return engine.base_features()


def feature_vector(state: QuantumState, params_list, config: FeatureConfig) -> np.ndarray:
    """Feature vector r(psi) of a single input state (outputs attached in |0>)."""
    if isinstance(params_list, CircuitParams):
        params_list = [params_list]
    return extract_features([state], params_list, config)[0]


def training_loss(params_list, w, dataset: LabeledDataset, config: FeatureConfig,
                  threads: int = 1) -> float:
    """MSE loss of the tanh readout over a dataset."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    feats = extract_features([s for s, _ in dataset.samples], params_list, config, threads)
    return mse_loss(readout(w, feats), dataset.labels())


def gradient(params_list, w, dataset: LabeledDataset, config: FeatureConfig,
             fd_step: float = 1e-4, threads: int = 1) -> np.ndarray:
    """Central-difference gradient over all trainable scalars.

    Ordered like :func:`pack_parameters`: circuit parameters first, then
    readout weights.  Structurally dead circuit parameters are reported as
    exact zeros without probing.
    """
    if isinstance(params_list, CircuitParams):
        params_list = [params_list]
    batch = dataset_batch(dataset, config.num_outputs, config.complex_dtype)
    engine = FeatureEngine(config, batch, threads)
    engine.set_params(params_list)
    labels = dataset.labels()
    w = np.asarray(w, dtype=float)
    base_feats = engine.base_features()
    circuit_grad = _circuit_gradient(engine, params_list, w, labels, base_feats,
                                     fd_step, threads)
    w_grad = _readout_gradient(w, labels, base_feats, fd_step)
    return np.concatenate([circuit_grad, w_grad.ravel()])


def _probe_payload(engine: FeatureEngine, params_list, loc: _ParamLoc, value: float):
    params = params_list[loc.p_idx]
    cfg = engine.config
    if loc.kind == "angle":
        angles = params.angles.copy()
        angles[loc.layer, loc.block, loc.qubit, loc.component] = value
        if loc.block == 1 and loc.layer == cfg.depth - 1:
            return engine.observable_probe(
                loc.p_idx, loc.qubit - cfg.num_inputs,
                angles[loc.layer, 1, loc.qubit],
            )
        stage = loc.layer if loc.block == 0 else loc.layer + 1
        pair = (angles[stage, 0, loc.qubit],
                angles[stage - 1, 1, loc.qubit] if stage > 0 else None)
        return engine.rotation_probe(loc.p_idx, stage, loc.qubit, pair)
    om = params.output_omega[loc.layer].copy()
    de = params.output_delta[loc.layer].copy()
    j = params.couplings[loc.layer].copy()
    if loc.ham_field == "omega":
        om[loc.output] = value
    elif loc.ham_field == "delta":
        de[loc.output] = value
    else:
        j[loc.output, loc.input_index] = value
    return engine.block_probe(loc.p_idx, loc.layer, om, de, j)


def _loc_value(params_list, loc):
    p = params_list[loc.p_idx]
    if loc.kind == "angle":
        return p.angles[loc.layer, loc.block, loc.qubit, loc.component]
    if loc.ham_field == "omega":
        return p.output_omega[loc.layer, loc.output]
    if loc.ham_field == "delta":
        return p.output_delta[loc.layer, loc.output]
    return p.couplings[loc.layer, loc.output, loc.input_index]


def _probe_derivative(engine, params_list, w, labels, base_feats, fd_step, loc):
    v0 = _loc_value(params_list, loc)
    losses = []
    for v in (v0 + fd_step, v0 - fd_step):
        payload = _probe_payload(engine, params_list, loc, v)
        feats = engine.features_with_probe(base_feats, payload)
        losses.append(mse_loss(readout(w, feats), labels))
    return (losses[0] - losses[1]) / (2.0 * fd_step)


# Probe state inherited by forked gradient workers (copy-on-write).
_FORK_STATE = {}


def _fork_probe_worker(worker_index):
    st = _FORK_STATE
    out = []
    for idx, loc in st["live"][worker_index :: st["workers"]]:
        out.append(
            (idx, _probe_derivative(st["engine"], st["params_list"], st["w"],
                                    st["labels"], st["base_feats"],
                                    st["fd_step"], loc))
        )
    return out


def _circuit_gradient(engine, params_list, w, labels, base_feats, fd_step, threads):
    """FD derivatives of the loss for every live circuit scalar.

    Probes are independent scalar computations assembled by index, so the
    gradient is bit-identical for any worker count.  On POSIX the probes
    fork worker processes that share the engine caches copy-on-write.
    """
    cfg = engine.config
    locs = _circuit_locations(cfg, params_list)
    grad = np.zeros(len(locs))
    live = [(i, loc) for i, loc in enumerate(locs)
            if not _is_structurally_dead(loc, cfg)]
    workers = min(threads, len(live))
    use_fork = workers > 1 and hasattr(os, "fork")
    if use_fork:
        ctx = multiprocessing.get_context("fork")
        _FORK_STATE.update(
            engine=engine, params_list=params_list, w=w, labels=labels,
            base_feats=base_feats, fd_step=fd_step, live=live, workers=workers,
        )
        try:
            with ctx.Pool(processes=workers) as pool:
                for chunk in pool.map(_fork_probe_worker, range(workers)):
                    for idx, g in chunk:
                        grad[idx] = g
        finally:
            _FORK_STATE.clear()
    else:
        for idx, loc in live:
            grad[idx] = _probe_derivative(engine, params_list, w, labels,
                                          base_feats, fd_step, loc)
    return grad


def _readout_gradient(w, labels, feats, fd_step):
    w = np.asarray(w, dtype=float)
    grad = np.zeros_like(w)
    probe = w.copy()
    for idx in np.ndindex(w.shape):
        probe[idx] = w[idx] + fd_step
        up = mse_loss(readout(probe, feats), labels)
        probe[idx] = w[idx] - fd_step
        down = mse_loss(readout(probe, feats), labels)
        probe[idx] = w[idx]
        grad[idx] = (up - down) / (2.0 * fd_step)
    return grad


# --- training loop -----------------------------------------------------------


@dataclass
class TrainConfig:
    feature: FeatureConfig
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    warmup_epochs: int = 150
    fd_step: float = None
    init_scale: float = 0.1
    init_scale_ham: float = None
    init_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.fd_step is None:
            self.fd_step = 1e-4 if self.feature.dtype == "float64" else 1e-2
        if self.init_scale_ham is None:
            self.init_scale_ham = self.init_scale


@dataclass
class ExperimentResult:
    train_accuracy: float
    test_accuracy: float
    train_confusion: np.ndarray
    test_confusion: np.ndarray
    loss_history: list
    final_loss: float
    converged: bool
    params_list: list
    readout_weights: np.ndarray
    init_seed: int
    class_names: list
    train_predictions: np.ndarray = None
    test_predictions: np.ndarray = None
    train_features: np.ndarray = None
    test_features: np.ndarray = None

    def to_dict(self) -> dict:
        return {
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "train_confusion": self.train_confusion.tolist(),
            "test_confusion": self.test_confusion.tolist(),
            "loss_history": [float(x) for x in self.loss_history],
            "final_loss": float(self.final_loss),
            "converged": self.converged,
            "circuit_params": [p.pack().tolist() for p in self.params_list],
            "readout_weights": self.readout_weights.tolist(),
            "init_seed": self.init_seed,
            "class_names": self.class_names,
        }


def _class_table(metadata: dict):
    """Ordered (name, label tuple) pairs for confusion-matrix indexing."""
    class_labels = metadata.get("class_labels")
    if not class_labels:
        return [("-1", (-1,)), ("+1", (1,))]
    return [(name, tuple(class_labels[name])) for name in metadata["classes"]]


def accuracy_and_confusion(predictions: np.ndarray, labels: np.ndarray, classes):
    """Exact counts; label vectors index classes through the class table."""
    label_to_idx = {lab: i for i, (_, lab) in enumerate(classes)}
    n_classes = len(classes)
    confusion = np.zeros((n_classes, n_classes), dtype=int)
    hits = 0
    for pred, true in zip(np.atleast_2d(predictions), np.atleast_2d(labels)):
        ti = label_to_idx[tuple(int(v) for v in true)]
        pi = label_to_idx.get(tuple(int(v) for v in pred))
        if pi is not None:
            confusion[ti, pi] += 1
        if np.array_equal(pred, true):
            hits += 1
    return hits / len(np.atleast_2d(labels)), confusion


def evaluate(params_list, w, dataset: LabeledDataset, config: FeatureConfig,
             threads: int = 1):
    """(accuracy, confusion, predictions, features) of a trained model."""
    feats = extract_features([s for s, _ in dataset.samples], params_list, config, threads)
    preds = predicted_labels(readout(w, feats))
    acc, confusion = accuracy_and_confusion(preds, dataset.labels(), _class_table(dataset.metadata))
    return acc, confusion, preds, feats


def _converged(history, tolerance, patience):
    if len(history) < patience + 1:
        return False
    recent = history[-(patience + 1):]
    return all(abs(recent[i + 1] - recent[i]) < tolerance for i in range(patience))


def train_classifier(train: LabeledDataset, test: LabeledDataset,
                     config: TrainConfig) -> ExperimentResult:
    """Jointly train circuit parameters and readout weights on MSE loss.

    A readout-only warmup phase (circuit frozen, features cached) precedes
    the joint phase in which every live circuit scalar is probed by
    central differences each epoch.  Runs that hit the epoch cap without
    meeting the loss tolerance still return a result, flagged via
    ``converged``.
    """
    cfg = config.feature
    rng = np.random.default_rng(config.init_seed)
    params_list = [
        CircuitParams.random(cfg.depth, cfg.num_inputs, cfg.num_outputs, rng,
                             scale=config.init_scale,
                             scale_ham=config.init_scale_ham)
        for _ in range(cfg.num_params_sets)
    ]
    w = np.zeros((cfg.num_outputs, cfg.num_features))
    labels = train.labels()

    batch = dataset_batch(train, cfg.num_outputs, cfg.complex_dtype)
    engine = FeatureEngine(cfg, batch, config.threads)
    engine.set_params(params_list)
    feats = engine.base_features()

    # One optimizer instance spans both phases: the readout reaches the
    # joint phase with a mature accumulator (gentle steps) while circuit
    # parameters still take full-size first steps.
    opt = config.optimizer.build()
    n_circuit = pack_parameters(params_list, w).size - w.size
    history = []
    # Readout warmup: circuit frozen (its gradient is exactly zero while
    # w = 0 anyway), features cached, so these epochs are nearly free.
    for _ in range(config.warmup_epochs):
        history.append(mse_loss(readout(w, feats), labels))
        if _converged(history, config.optimizer.loss_tolerance,
                      config.optimizer.patience):
            break
        w_grad = _readout_gradient(w, labels, feats, config.fd_step)
        packed = opt.step(pack_parameters(params_list, w),
                          np.concatenate([np.zeros(n_circuit), w_grad.ravel()]))
        params_list, w = unpack_parameters(packed, params_list, w.shape)

    converged = False
    for _ in range(config.optimizer.max_epochs):
        engine.set_params(params_list)
        feats = engine.base_features()
        history.append(mse_loss(readout(w, feats), labels))
        if _converged(history, config.optimizer.loss_tolerance,
                      config.optimizer.patience):
            converged = True
            break
        circ_grad = _circuit_gradient(engine, params_list, w, labels, feats,
                                      config.fd_step, config.threads)
        w_grad = _readout_gradient(w, labels, feats, config.fd_step)
        packed = pack_parameters(params_list, w)
        packed = opt.step(packed, np.concatenate([circ_grad, w_grad.ravel()]))
        params_list, w = unpack_parameters(packed, params_list, w.shape)

    final_loss = training_loss(params_list, w, train, cfg, config.threads)
    history.append(final_loss)

    classes = _class_table(train.metadata)
    train_acc, train_conf, train_preds, train_feats = evaluate(
        params_list, w, train, cfg, config.threads
    )
    test_acc, test_conf, test_preds, test_feats = evaluate(
        params_list, w, test, cfg, config.threads
    )
    return ExperimentResult(
        train_accuracy=train_acc,
        test_accuracy=test_acc,
        train_confusion=train_conf,
        test_confusion=test_conf,
        loss_history=history,
        final_loss=final_loss,
        converged=converged,
        params_list=params_list,
        readout_weights=w,
        init_seed=config.init_seed,
        class_names=[name for name, _ in classes],
        train_predictions=train_preds,
        test_predictions=test_preds,
        train_features=train_feats,
        test_features=test_feats,
    )
