# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched state-vector kernels.

State batches are C-contiguous (dim, num_states) complex arrays mutated in
place; the inner loops run over the contiguous sample axis so they
vectorize.  Every column is computed independently with a fixed reduction order, so
results do not depend on how callers batch or parallelize.  Single and
double precision variants are generated from one fused-type source.  All
heavy loops release the GIL.
"""

import numpy as np

NAME = "cython"

ctypedef fused cplx:
    float complex
    double complex


cdef void _gate1(cplx[:, ::1] psi, Py_ssize_t qubit, cplx g00, cplx g01,
                 cplx g10, cplx g11, Py_ssize_t s0, Py_ssize_t s1) noexcept nogil:
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t blocks = 1 << qubit
    cdef Py_ssize_t width = dim >> (qubit + 1)
    cdef Py_ssize_t a, b, s, r0, r1
    cdef cplx x0, x1
    for a in range(blocks):
        for b in range(width):
            r0 = (a * 2) * width + b
            r1 = r0 + width
            for s in range(s0, s1):
                x0 = psi[r0, s]
                x1 = psi[r1, s]
                psi[r0, s] = g00 * x0 + g01 * x1
                psi[r1, s] = g10 * x0 + g11 * x1


cdef void _gate2(cplx[:, ::1] psi, Py_ssize_t qubit_hi, cplx[:, ::1] g,
                 Py_ssize_t s0, Py_ssize_t s1) noexcept nogil:
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t blocks = 1 << qubit_hi
    cdef Py_ssize_t width = dim >> (qubit_hi + 2)
    cdef Py_ssize_t a, b, s, base, r0, r1, r2, r3
    cdef cplx x0, x1, x2, x3
    cdef cplx g00 = g[0, 0], g01 = g[0, 1], g02 = g[0, 2], g03 = g[0, 3]
    cdef cplx g10 = g[1, 0], g11 = g[1, 1], g12 = g[1, 2], g13 = g[1, 3]
    cdef cplx g20 = g[2, 0], g21 = g[2, 1], g22 = g[2, 2], g23 = g[2, 3]
    cdef cplx g30 = g[3, 0], g31 = g[3, 1], g32 = g[3, 2], g33 = g[3, 3]
    for a in range(blocks):
        for b in range(width):
            base = (a * 4) * width + b
            r0 = base
            r1 = base + width
            r2 = base + 2 * width
            r3 = base + 3 * width
            for s in range(s0, s1):
                x0 = psi[r0, s]
                x1 = psi[r1, s]
                x2 = psi[r2, s]
                x3 = psi[r3, s]
                psi[r0, s] = g00 * x0 + g01 * x1 + g02 * x2 + g03 * x3
                psi[r1, s] = g10 * x0 + g11 * x1 + g12 * x2 + g13 * x3
                psi[r2, s] = g20 * x0 + g21 * x1 + g22 * x2 + g23 * x3
                psi[r3, s] = g30 * x0 + g31 * x1 + g32 * x2 + g33 * x3


cdef void _block2(cplx[:, ::1] psi, cplx[:, :, ::1] table,
                  Py_ssize_t s0, Py_ssize_t s1) noexcept nogil:
    cdef Py_ssize_t nz = table.shape[0]
    cdef Py_ssize_t z, s, r0, r1
    cdef cplx x0, x1, u00, u01, u10, u11
    for z in range(nz):
        u00 = table[z, 0, 0]
        u01 = table[z, 0, 1]
        u10 = table[z, 1, 0]
        u11 = table[z, 1, 1]
        r0 = 2 * z
        r1 = r0 + 1
        for s in range(s0, s1):
            x0 = psi[r0, s]
            x1 = psi[r1, s]
            psi[r0, s] = u00 * x0 + u01 * x1
            psi[r1, s] = u10 * x0 + u11 * x1


cdef void _block4(cplx[:, ::1] psi, cplx[:, :, ::1] table,
                  Py_ssize_t s0, Py_ssize_t s1) noexcept nogil:
    cdef Py_ssize_t nz = table.shape[0]
    cdef Py_ssize_t z, s, base
    cdef cplx x0, x1, x2, x3
    for z in range(nz):
        base = 4 * z
        for s in range(s0, s1):
            x0 = psi[base, s]
            x1 = psi[base + 1, s]
            x2 = psi[base + 2, s]
            x3 = psi[base + 3, s]
            psi[base, s] = (table[z, 0, 0] * x0 + table[z, 0, 1] * x1
                            + table[z, 0, 2] * x2 + table[z, 0, 3] * x3)
            psi[base + 1, s] = (table[z, 1, 0] * x0 + table[z, 1, 1] * x1
                                + table[z, 1, 2] * x2 + table[z, 1, 3] * x3)
            psi[base + 2, s] = (table[z, 2, 0] * x0 + table[z, 2, 1] * x1
                                + table[z, 2, 2] * x2 + table[z, 2, 3] * x3)
            psi[base + 3, s] = (table[z, 3, 0] * x0 + table[z, 3, 1] * x1
                                + table[z, 3, 2] * x2 + table[z, 3, 3] * x3)


cdef void _expect(cplx[:, ::1] psi, Py_ssize_t qubit, double o00, double o11,
                  double o01re, double o01im, double[::1] out,
                  Py_ssize_t s0, Py_ssize_t s1) noexcept nogil:
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t blocks = 1 << qubit
    cdef Py_ssize_t width = dim >> (qubit + 1)
    cdef Py_ssize_t a, b, s, r0, r1
    cdef cplx x0, x1
    cdef double cre, cim
    for s in range(s0, s1):
        out[s] = 0.0
    for a in range(blocks):
        for b in range(width):
            r0 = (a * 2) * width + b
            r1 = r0 + width
            for s in range(s0, s1):
                x0 = psi[r0, s]
                x1 = psi[r1, s]
                cre = x0.real * x1.real + x0.imag * x1.imag
                cim = x0.real * x1.imag - x0.imag * x1.real
                out[s] += (o00 * (x0.real * x0.real + x0.imag * x0.imag)
                           + o11 * (x1.real * x1.real + x1.imag * x1.imag)
                           + 2.0 * (o01re * cre - o01im * cim))


def apply_gate(cplx[:, ::1] psi, Py_ssize_t qubit, Py_ssize_t num_qubits,
               cplx[:, ::1] gate):
    cdef cplx g00 = gate[0, 0]
    cdef cplx g01 = gate[0, 1]
    cdef cplx g10 = gate[1, 0]
    cdef cplx g11 = gate[1, 1]
    with nogil:
        _gate1(psi, qubit, g00, g01, g10, g11, 0, psi.shape[1])


def apply_gate_pair(cplx[:, ::1] psi, Py_ssize_t qubit_hi, Py_ssize_t num_qubits,
                    cplx[:, ::1] gate4):
    with nogil:
        _gate2(psi, qubit_hi, gate4, 0, psi.shape[1])


def apply_block_diag(cplx[:, ::1] psi, cplx[:, :, ::1] table):
    if table.shape[1] == 2:
        with nogil:
            _block2(psi, table, 0, psi.shape[1])
    elif table.shape[1] == 4:
        with nogil:
            _block4(psi, table, 0, psi.shape[1])
    else:
        raise ValueError("block tables must be 2x2 or 4x4")


def expect_obs(cplx[:, ::1] psi, Py_ssize_t qubit, Py_ssize_t num_qubits,
               double o00, double o11, double o01re, double o01im,
               double[::1] out):
    with nogil:
        _expect(psi, qubit, o00, o11, o01re, o01im, out, 0, psi.shape[1])
