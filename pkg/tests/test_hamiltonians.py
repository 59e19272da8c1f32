"""Hamiltonian builders, mapping relations, and geometric couplings."""

import numpy as np
import pytest

from qperc.hamiltonians import (
    AtomLayout,
    MAGIC_ANGLE,
    MappingInfeasibleError,
    PerceptronParams,
    RB_CS_C6_RATIOS,
    RydbergParams,
    TwoOutputParams,
    all_pairs_mask,
    build_learning_perceptron,
    build_perceptron,
    build_rydberg,
    build_two_output,
    build_two_output_rydberg,
    build_xy_perceptron,
    layout_to_couplings,
    map_rydberg_to_perceptron,
    map_two_output,
    perceptron_mask,
    two_output_mask,
    verify_mapping,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)
NUM = np.diag([0.0, 1.0]).astype(complex)


def kron_chain(ops):
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def pauli_on(n, qubit, op):
    ops = [I2] * n
    ops[qubit] = op
    return kron_chain(ops)


def kron_perceptron_oracle(params: PerceptronParams):
    """Term-by-term Kronecker construction, independent of the builder."""
    n = params.num_inputs + 1
    h = -params.delta_o * pauli_on(n, n - 1, SZ) + params.omega_o * pauli_on(n, n - 1, SX)
    for i in range(params.num_inputs):
        h = h + params.couplings[i] * pauli_on(n, i, SZ) @ pauli_on(n, n - 1, SZ)
        h = h + params.input_drives[i] * pauli_on(n, i, SX)
    return h


def kron_rydberg_oracle(params: RydbergParams, mask):
    n = params.num_atoms
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        h += params.omegas[i] / 2.0 * pauli_on(n, i, SX)
        h -= params.detunings[i] * pauli_on(n, i, NUM)
    for i, j in mask:
        i, j = min(i, j), max(i, j)
        h += params.interactions[i, j] * pauli_on(n, i, NUM) @ pauli_on(n, j, NUM)
    return h


def random_feasible_rydberg(rng, n_inputs, two_output=False, coeff=10.0):
    n = n_inputs + (2 if two_output else 1)
    v = np.zeros((n, n))
    det = np.zeros(n)
    om = rng.uniform(-coeff, coeff, n)
    if two_output:
        for i in range(n_inputs):
            v[i, n - 2] = v[n - 2, i] = rng.uniform(-coeff, coeff)
            v[i, n - 1] = v[n - 1, i] = rng.uniform(-coeff, coeff)
            det[i] = (v[i, n - 2] + v[i, n - 1]) / 2.0
    else:
        for i in range(n_inputs):
            v[i, n - 1] = v[n - 1, i] = rng.uniform(-coeff, coeff)
            det[i] = v[i, n - 1] / 2.0
    det[n_inputs:] = rng.uniform(-coeff, coeff, n - n_inputs)
    return RydbergParams(n, om, det, v)


class TestBuilders:
    def test_zero_perceptron_is_zero_matrix(self):
        params = PerceptronParams(1, 0.0, 0.0, [0.0])
        np.testing.assert_array_equal(build_perceptron(params), np.zeros((4, 4)))

    def test_single_coupling_spectrum(self):
        params = PerceptronParams(1, 0.0, 0.0, [1.0])
        np.testing.assert_allclose(build_perceptron(params), np.diag([1, -1, -1, 1]))

    def test_matches_kron_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(1, 5))
            params = PerceptronParams(
                n, rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5, n),
                input_drives=rng.uniform(-5, 5, n),
            )
            np.testing.assert_allclose(
                build_perceptron(params), kron_perceptron_oracle(params), atol=1e-14
            )

    def test_learning_form_zero(self):
        np.testing.assert_array_equal(
            build_learning_perceptron(0.0, 0.0, [0.0, 0.0]), np.zeros((8, 8))
        )

    def test_learning_form_pure_drive(self):
        h = build_learning_perceptron(1.0, 0.0, [0.0])
        np.testing.assert_allclose(h, np.kron(I2, SX))

    def test_learning_form_block_eigenvalues(self):
        # for each input configuration the 2x2 block has eigenvalues
        # +/- sqrt(omega^2 + (-delta + J.s)^2)
        rng = np.random.default_rng(1)
        omega, delta = rng.uniform(-3, 3), rng.uniform(-3, 3)
        j = rng.uniform(-3, 3, 3)
        h = build_learning_perceptron(omega, delta, j)
        for z in range(8):
            bits = np.array([(z >> (2 - i)) & 1 for i in range(3)])
            a = -delta + np.sum(j * (1 - 2 * bits))
            block = h[2 * z : 2 * z + 2, 2 * z : 2 * z + 2]
            expected = np.sqrt(omega**2 + a**2)
            np.testing.assert_allclose(
                np.sort(np.linalg.eigvalsh(block)), [-expected, expected], atol=1e-12
            )

    def test_rydberg_zero(self):
        params = RydbergParams(2, [0, 0], [0, 0], np.zeros((2, 2)))
        np.testing.assert_array_equal(
            build_rydberg(params, perceptron_mask(1)), np.zeros((4, 4))
        )

    def test_rydberg_single_atom_number_operator(self):
        params = RydbergParams(1, [0.0], [2.0], np.zeros((1, 1)))
        np.testing.assert_allclose(build_rydberg(params, []), np.diag([0.0, -2.0]))

    def test_rydberg_matches_kron_oracle(self):
        rng = np.random.default_rng(2)
        n = 3
        v = rng.uniform(-5, 5, (n, n))
        v = np.triu(v, 1) + np.triu(v, 1).T
        params = RydbergParams(n, rng.uniform(-5, 5, n), rng.uniform(-5, 5, n), v)
        mask = all_pairs_mask(n)
        np.testing.assert_allclose(
            build_rydberg(params, mask), kron_rydberg_oracle(params, mask), atol=1e-14
        )

    def test_rydberg_rejects_bad_mask(self):
        params = RydbergParams(2, [0, 0], [0, 0], np.zeros((2, 2)))
        with pytest.raises(ValueError, match="invalid interaction pair"):
            build_rydberg(params, [(0, 2)])

    def test_two_output_zero(self):
        params = TwoOutputParams(1, 0, 0, 0, 0, [0.0], [0.0])
        np.testing.assert_array_equal(build_two_output(params), np.zeros((8, 8)))

    def test_two_output_decoupled_limit(self):
        rng = np.random.default_rng(3)
        n = 2
        d1, o1 = rng.uniform(-2, 2, 2)
        j1 = rng.uniform(-2, 2, n)
        params = TwoOutputParams(n, d1, o1, 0.0, 0.0, j1, np.zeros(n))
        single = build_perceptron(PerceptronParams(n, d1, o1, j1))
        np.testing.assert_allclose(build_two_output(params), np.kron(single, I2), atol=1e-14)

    def test_two_output_parts_commute(self):
        rng = np.random.default_rng(4)
        n = 3
        d1, o1, d2, o2 = rng.uniform(-2, 2, 4)
        j1, j2 = rng.uniform(-2, 2, n), rng.uniform(-2, 2, n)
        h1 = build_two_output(TwoOutputParams(n, d1, o1, 0, 0, j1, np.zeros(n)))
        h2 = build_two_output(TwoOutputParams(n, 0, 0, d2, o2, np.zeros(n), j2))
        total = build_two_output(TwoOutputParams(n, d1, o1, d2, o2, j1, j2))
        np.testing.assert_allclose(total, h1 + h2, atol=1e-13)
        assert np.max(np.abs(h1 @ h2 - h2 @ h1)) < 1e-12

    def test_xy_zero(self):
        np.testing.assert_array_equal(build_xy_perceptron([0.0]), np.zeros((4, 4)))

    def test_xy_flip_flop_element(self):
        h = build_xy_perceptron([1.0])
        assert h[1, 2] == pytest.approx(2.0)  # <01|H|10> = 2
        assert np.max(np.abs(np.diag(h))) == 0.0

    def test_xy_matches_kron_oracle(self):
        rng = np.random.default_rng(5)
        j = rng.uniform(-3, 3, 3)
        n = 4
        oracle = np.zeros((16, 16), dtype=complex)
        for i in range(3):
            oracle += j[i] * (
                pauli_on(n, i, SX) @ pauli_on(n, 3, SX)
                + pauli_on(n, i, SY) @ pauli_on(n, 3, SY)
            )
        np.testing.assert_allclose(build_xy_perceptron(j), oracle, atol=1e-13)

    def test_xy_conserves_excitation_number(self):
        rng = np.random.default_rng(6)
        j = rng.uniform(-3, 3, 3)
        h = build_xy_perceptron(j)
        n_total = sum(pauli_on(4, q, NUM) for q in range(4))
        assert np.max(np.abs(h @ n_total - n_total @ h)) < 1e-12

    def test_all_builders_hermitian(self):
        rng = np.random.default_rng(7)
        n = 3
        p = PerceptronParams(n, 1.2, -0.7, rng.uniform(-3, 3, n), rng.uniform(-3, 3, n))
        t = TwoOutputParams(n, 1.0, 2.0, -1.0, 0.5, rng.uniform(-3, 3, n), rng.uniform(-3, 3, n))
        r = random_feasible_rydberg(rng, n)
        for h in (build_perceptron(p), build_two_output(t),
                  build_rydberg(r, perceptron_mask(n)), build_xy_perceptron([1.0, -2.0])):
            assert np.max(np.abs(h - h.conj().T)) < 1e-12


class TestMappings:
    def test_worked_example(self):
        # V=(4,8), Delta=(2,4), Delta_o=6, Omega_o=2 -> J=(1,2), delta'=0, omega'=1
        v = np.zeros((3, 3))
        v[0, 2] = v[2, 0] = 4.0
        v[1, 2] = v[2, 1] = 8.0
        params = RydbergParams(3, [0.0, 0.0, 2.0], [2.0, 4.0, 6.0], v)
        mapped, shift = map_rydberg_to_perceptron(params)
        np.testing.assert_allclose(mapped.couplings, [1.0, 2.0])
        assert mapped.delta_o == pytest.approx(0.0)
        assert mapped.omega_o == pytest.approx(1.0)
        assert shift == pytest.approx(-3.0)  # -Delta_o/2 under feasibility

    def test_infeasible_raises_with_atom_names(self):
        v = np.zeros((2, 2))
        v[0, 1] = v[1, 0] = 4.0
        params = RydbergParams(2, [0.0, 0.0], [1.0, 0.0], v)
        with pytest.raises(MappingInfeasibleError, match="atom 0"):
            map_rydberg_to_perceptron(params)

    def test_all_zero_params(self):
        params = RydbergParams(2, [0, 0], [0, 0], np.zeros((2, 2)))
        mapped, shift = map_rydberg_to_perceptron(params)
        assert shift == 0.0
        assert np.all(mapped.couplings == 0.0)
        assert mapped.delta_o == 0.0 and mapped.omega_o == 0.0

    def test_roundtrip_residual_single_output(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            n = int(rng.integers(1, 7))
            params = random_feasible_rydberg(rng, n)
            mapped, _ = map_rydberg_to_perceptron(params)
            residual = verify_mapping(
                build_rydberg(params, perceptron_mask(n)), build_perceptron(mapped)
            )
            assert residual < 1e-10

    def test_two_output_direct_substitution(self):
        v = np.zeros((3, 3))
        v[0, 1] = v[1, 0] = 4.0  # input 0 <-> output 1
        v[0, 2] = v[2, 0] = 4.0  # input 0 <-> output 2
        params = RydbergParams(3, [0, 0, 0], [4.0, 0.0, 0.0], v)
        mapped, _ = map_two_output(params)
        np.testing.assert_allclose(mapped.couplings_1, [1.0])
        np.testing.assert_allclose(mapped.couplings_2, [1.0])

    def test_two_output_infeasible(self):
        v = np.zeros((3, 3))
        v[0, 1] = v[1, 0] = 4.0
        params = RydbergParams(3, [0, 0, 0], [1.0, 0.0, 0.0], v)
        with pytest.raises(MappingInfeasibleError):
            map_two_output(params)

    def test_roundtrip_residual_two_output(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = int(rng.integers(1, 7))
            params = random_feasible_rydberg(rng, n, two_output=True)
            mapped, _ = map_two_output(params)
            residual = verify_mapping(build_two_output_rydberg(params), build_two_output(mapped))
            assert residual < 1e-10

    def test_verify_mapping_identical(self):
        h = np.diag([1.0, 2.0, 3.0, 4.0])
        assert verify_mapping(h, h) == 0.0

    def test_verify_mapping_identity_shift_invisible(self):
        h = np.diag([1.0, 2.0, 3.0, 4.0])
        assert verify_mapping(h, h + 3.0 * np.eye(4)) == pytest.approx(0.0, abs=1e-14)

    def test_verify_mapping_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            verify_mapping(np.eye(2), np.eye(4))


class TestLayout:
    def make_layout(self, positions, species=None, axis=(0, 0, 1.0)):
        positions = np.asarray(positions, dtype=float)
        species = species or ["Rb"] * len(positions)
        return AtomLayout(positions, species, axis, {("Rb", "Rb"): 1.0}, dipole=1.0)

    def test_magic_angle_kills_flip_flop(self):
        direction = np.array([np.sin(MAGIC_ANGLE), 0.0, np.cos(MAGIC_ANGLE)])
        layout = self.make_layout([[0, 0, 0], direction * 2.0])
        _, flipflop = layout_to_couplings(layout)
        assert abs(flipflop[0, 1]) < 1e-12

    def test_axis_aligned_pair(self):
        layout = self.make_layout([[0, 0, 0], [0, 0, 1.0]])
        vdw, flipflop = layout_to_couplings(layout)
        assert flipflop[0, 1] == pytest.approx(2.0)  # 3cos^2(0) - 1
        assert vdw[0, 1] == pytest.approx(1.0)

    def test_dual_species_ratio(self):
        # inter/intra ratio 21.9 / 0.77 at equal spacing
        layout = AtomLayout(
            [[0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]],
            ["Cs", "Cs", "Rb"],
            (0, 0, 1.0),
            dict(RB_CS_C6_RATIOS),
        )
        vdw, _ = layout_to_couplings(layout)
        assert vdw[0, 2] / vdw[0, 1] == pytest.approx(21.9 / 0.77, rel=1e-12)
        assert vdw[0, 2] / vdw[0, 1] == pytest.approx(28.44, rel=1e-2)

    def test_global_rotation_invariance(self):
        rng = np.random.default_rng(10)
        positions = rng.uniform(-2, 2, (4, 3))
        axis = np.array([0.3, -0.5, 0.8])
        theta = 0.77
        rot = np.array([
            [np.cos(theta), -np.sin(theta), 0],
            [np.sin(theta), np.cos(theta), 0],
            [0, 0, 1.0],
        ])
        a = self.make_layout(positions, axis=axis)
        b = self.make_layout(positions @ rot.T, axis=rot @ (axis / np.linalg.norm(axis)))
        for x, y in zip(layout_to_couplings(a), layout_to_couplings(b)):
            assert np.max(np.abs(x - y)) < 1e-10

    def test_coincident_atoms_rejected(self):
        layout = self.make_layout([[0, 0, 0], [0, 0, 0]])
        with pytest.raises(ValueError, match="coincident"):
            layout_to_couplings(layout)

    def test_json_roundtrip(self, tmp_path):
        layout = AtomLayout(
            [[0, 0, 0], [1.5, 0, 0]], ["Rb", "Cs"], (0, 0, 1.0),
            dict(RB_CS_C6_RATIOS), dipole=2.5,
        )
        path = tmp_path / "layout.json"
        layout.to_json(path)
        loaded = AtomLayout.from_json(path)
        np.testing.assert_array_equal(loaded.positions, layout.positions)
        assert loaded.species == layout.species
        assert loaded.dipole == layout.dipole
        vdw_a, _ = layout_to_couplings(layout)
        vdw_b, _ = layout_to_couplings(loaded)
        np.testing.assert_array_equal(vdw_a, vdw_b)

    def test_mask_helpers(self):
        assert perceptron_mask(2) == {(0, 2), (1, 2)}
        assert two_output_mask(2) == {(0, 2), (1, 2), (0, 3), (1, 3)}
