"""NumPy implementations of the batched state-vector kernels.

Same contracts as the compiled extension: state batches are C-contiguous
(dim, num_states) complex arrays mutated in place, gates/tables must
already match the batch dtype.  Used whenever the extension is missing or
explicitly disabled.
"""

import numpy as np

NAME = "numpy"


def apply_gate(psi, qubit, num_qubits, gate):
    """In-place 2x2 gate on one qubit of every column state."""
    view = psi.reshape((1 << qubit), 2, -1)
    view[...] = np.matmul(gate, view)


def apply_gate_pair(psi, qubit_hi, num_qubits, gate4):
    """In-place 4x4 gate on the adjacent qubit pair (qubit_hi, qubit_hi+1)."""
    view = psi.reshape((1 << qubit_hi), 4, -1)
    view[...] = np.matmul(gate4, view)


def apply_block_diag(psi, table):
    """In-place per-configuration block gate on the trailing qubits.

    ``table`` has shape (num_configs, m, m) with m = 2^(trailing qubits);
    block z acts on the contiguous amplitude chunk of configuration z.
    """
    z, m, _ = table.shape
    view = psi.reshape(z, m, -1)
    view[...] = np.matmul(table, view)


def expect_obs(psi, qubit, num_qubits, o00, o11, o01re, o01im, out):
    """Per-column <O> for a Hermitian 2x2 observable on one qubit."""
    s = psi.shape[1]
    v = psi.reshape((1 << qubit), 2, -1, s)
    v0 = v[:, 0]
    v1 = v[:, 1]
    p0 = np.einsum("abs,abs->s", v0.real, v0.real) + np.einsum("abs,abs->s", v0.imag, v0.imag)
    p1 = np.einsum("abs,abs->s", v1.real, v1.real) + np.einsum("abs,abs->s", v1.imag, v1.imag)
    cross = np.einsum("abs,abs->s", np.conj(v0), v1)
    out[:] = o00 * p0 + o11 * p1 + 2.0 * (o01re * cross.real - o01im * cross.imag)
