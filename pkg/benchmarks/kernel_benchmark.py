"""Benchmark the compiled kernels against the NumPy fallback.

Times the primitive batched operations and a full training-gradient epoch
on representative workloads (the phase-classification and entanglement
experiment shapes).  Run from the repository root:

    python3 benchmarks/kernel_benchmark.py [--quick]
"""

import argparse
import time

import numpy as np

from qperc.circuits import CircuitParams
from qperc.classify import FeatureConfig, FeatureEngine, _circuit_gradient, dataset_batch
from qperc.datasets import NoiseSpec, build_phase_dataset
from qperc.kernels import available_backends, get_backend


def time_call(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_primitives(backend_name, repeats):
    k = get_backend(backend_name)
    rng = np.random.default_rng(0)
    rows = []
    for num_qubits, num_states in ((9, 720), (10, 1440)):
        dim = 1 << num_qubits
        psi = np.ascontiguousarray(
            (rng.normal(size=(dim, num_states)) + 1j * rng.normal(size=(dim, num_states)))
            .astype(np.complex64)
        )
        gate2 = np.ascontiguousarray(np.linalg.qr(rng.normal(size=(2, 2))
                                                  + 1j * rng.normal(size=(2, 2)))[0]
                                     .astype(np.complex64))
        gate4 = np.ascontiguousarray(np.kron(gate2, gate2))
        table = np.ascontiguousarray(
            np.tile(np.eye(2, dtype=np.complex64), (dim // 2, 1, 1))
        )
        out = np.empty(num_states)
        rows.append((f"gate 2x2   ({dim}x{num_states})",
                     time_call(lambda: k.apply_gate(psi, 3, num_qubits, gate2), repeats)))
        rows.append((f"gate 4x4   ({dim}x{num_states})",
                     time_call(lambda: k.apply_gate_pair(psi, 3, num_qubits, gate4), repeats)))
        rows.append((f"block diag ({dim}x{num_states})",
                     time_call(lambda: k.apply_block_diag(psi, table), repeats)))
        rows.append((f"expect     ({dim}x{num_states})",
                     time_call(lambda: k.expect_obs(psi, num_qubits - 1, num_qubits,
                                                    1.0, -1.0, 0.0, 0.0, out), repeats)))
    return rows


def bench_gradient_epoch(backend_name, quick):
    import qperc.classify as classify
    import qperc.kernels as kernels_mod

    saved = (kernels_mod.apply_gate, kernels_mod.apply_gate_pair,
             kernels_mod.apply_block_diag, kernels_mod.expect_obs)
    k = get_backend(backend_name)
    kernels_mod.apply_gate = k.apply_gate
    kernels_mod.apply_gate_pair = k.apply_gate_pair
    kernels_mod.apply_block_diag = k.apply_block_diag
    kernels_mod.expect_obs = k.expect_obs
    try:
        cfg = FeatureConfig(num_inputs=8, num_outputs=1, depth=2, dtype="float32")
        ds = build_phase_dataset(("Z2", "Z3"), 12 if quick else 36,
                                 NoiseSpec("amplitude_error", p=0.3),
                                 np.random.default_rng(5))
        params = [CircuitParams.random(2, 8, 1, np.random.default_rng(0), 0.1, 2.0)]
        w = np.zeros((1, cfg.num_features))
        engine = FeatureEngine(cfg, dataset_batch(ds, 1, cfg.complex_dtype), 1)
        engine.set_params(params)
        feats = engine.base_features()
        t0 = time.perf_counter()
        _circuit_gradient(engine, params, w, ds.labels(), feats, 1e-2, 1)
        return time.perf_counter() - t0
    finally:
        (kernels_mod.apply_gate, kernels_mod.apply_gate_pair,
         kernels_mod.apply_block_diag, kernels_mod.expect_obs) = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()
    repeats = 5 if args.quick else 20
    backends = available_backends()
    print(f"available backends: {', '.join(backends)}\n")

    results = {name: bench_primitives(name, repeats) for name in backends}
    labels = [label for label, _ in results[backends[0]]]
    header = f"{'primitive':<28}" + "".join(f"{name:>12}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for i, label in enumerate(labels):
        times = [results[name][i][1] for name in backends]
        line = f"{label:<28}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
        if len(times) == 2:
            line += f"{times[1] / times[0]:>9.1f}x"
        print(line)

    print("\nfull gradient epoch (phase-classification shape):")
    epoch_times = {}
    for name in backends:
        epoch_times[name] = bench_gradient_epoch(name, args.quick)
        print(f"  {name:>8}: {epoch_times[name]:.2f} s")
    if len(backends) == 2:
        print(f"  speedup: {epoch_times['numpy'] / epoch_times['cython']:.1f}x")


if __name__ == "__main__":
    main()
