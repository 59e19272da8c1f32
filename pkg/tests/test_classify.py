"""Feature extraction engine, readout, loss/gradient, and training loop."""

import numpy as np
import pytest

from qperc import statevec
from qperc.circuits import CircuitParams, OptimizerConfig, fd_gradient
from qperc.classify import (
    FeatureConfig,
    TrainConfig,
    accuracy_and_confusion,
    evaluate,
    extract_features,
    feature_vector,
    gradient,
    mse_loss,
    pack_parameters,
    predicted_labels,
    readout,
    train_classifier,
    training_loss,
    unpack_parameters,
)
from qperc.datasets import LabeledDataset, NoiseSpec, build_phase_dataset
from qperc.statevec import QuantumState


def random_states(num_qubits, count, rng):
    out = []
    for _ in range(count):
        amps = rng.normal(size=2**num_qubits) + 1j * rng.normal(size=2**num_qubits)
        out.append(QuantumState.from_amplitudes(amps, normalize=True))
    return out


def dense_reference_features(states, params, config):
    """Independent recomputation through the dense circuit pipeline."""
    from qperc import circuits

    feats = np.empty((len(states), config.num_features))
    for s, state in enumerate(states):
        full = statevec.attach_output_qubits(state, config.num_outputs)
        for t, tau in enumerate(config.tau_grid):
            evolved = circuits.forward(params.with_tau(tau), full, model=config.model)
            for o in range(config.num_outputs):
                feats[s, t * config.num_outputs + o] = statevec.expectation_z(
                    evolved, config.num_inputs + o
                )
    return feats


class TestFeatures:
    def test_zero_params_give_unit_features(self):
        cfg = FeatureConfig(num_inputs=3, num_outputs=1, depth=2)
        params = CircuitParams.zeros(2, 3)
        state = QuantumState.from_bits("101")
        feats = feature_vector(state, params, cfg)
        np.testing.assert_allclose(feats, np.ones(len(cfg.tau_grid)))

    def test_default_grid_gives_ten_features(self):
        cfg = FeatureConfig(num_inputs=4, num_outputs=1, depth=2)
        assert cfg.num_features == 10
        assert cfg.tau_grid == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

    @pytest.mark.parametrize("model", ["perceptron", "mapped-rydberg"])
    @pytest.mark.parametrize("num_outputs", [1, 2])
    def test_engine_matches_dense_pipeline(self, model, num_outputs):
        rng = np.random.default_rng(0)
        cfg = FeatureConfig(num_inputs=4, num_outputs=num_outputs, depth=2,
                            tau_grid=(0.3, 0.8), model=model)
        params = CircuitParams.random(2, 4, num_outputs, rng, scale=0.7)
        states = random_states(4, 3, rng)
        fast = extract_features(states, [params], cfg)
        ref = dense_reference_features(states, params, cfg)
        assert np.max(np.abs(fast - ref)) < 1e-10
        assert np.all(np.abs(fast) <= 1.0 + 1e-12)

    def test_float32_engine_close_to_float64(self):
        rng = np.random.default_rng(1)
        params = CircuitParams.random(2, 5, 1, rng, scale=0.5, scale_ham=2.0)
        states = random_states(5, 4, rng)
        cfg64 = FeatureConfig(num_inputs=5, num_outputs=1, depth=2, dtype="float64")
        cfg32 = FeatureConfig(num_inputs=5, num_outputs=1, depth=2, dtype="float32")
        f64 = extract_features(states, [params], cfg64)
        f32 = extract_features(states, [params], cfg32)
        assert np.max(np.abs(f64 - f32)) < 1e-4

    def test_p0_observable(self):
        rng = np.random.default_rng(2)
        cfg_z = FeatureConfig(num_inputs=3, num_outputs=1, depth=1, tau_grid=(0.5,))
        cfg_p = FeatureConfig(num_inputs=3, num_outputs=1, depth=1, tau_grid=(0.5,),
                              observable="p0")
        params = CircuitParams.random(1, 3, 1, rng, scale=0.6)
        state = random_states(3, 1, rng)[0]
        fz = feature_vector(state, params, cfg_z)
        fp = feature_vector(state, params, cfg_p)
        assert fp[0] == pytest.approx((1 + fz[0]) / 2, abs=1e-10)

    def test_independent_tau_parameters(self):
        rng = np.random.default_rng(3)
        cfg = FeatureConfig(num_inputs=3, num_outputs=1, depth=1, tau_grid=(0.4, 0.9),
                            share_tau_params=False)
        params = [CircuitParams.random(1, 3, 1, rng, scale=0.5) for _ in range(2)]
        state = random_states(3, 1, rng)[0]
        feats = feature_vector(state, params, cfg)
        for t, tau in enumerate(cfg.tau_grid):
            solo = FeatureConfig(num_inputs=3, num_outputs=1, depth=1, tau_grid=(tau,))
            assert feats[t] == pytest.approx(
                feature_vector(state, params[t], solo)[0], abs=1e-12
            )

    def test_xy_model_features(self):
        rng = np.random.default_rng(4)
        cfg = FeatureConfig(num_inputs=2, num_outputs=1, depth=1, tau_grid=(0.3,),
                            model="xy")
        params = CircuitParams.random(1, 2, 1, rng, scale=0.4)
        state = random_states(2, 1, rng)[0]
        feats = feature_vector(state, params, cfg)
        assert -1.0 <= feats[0] <= 1.0


class TestReadout:
    def test_zero_weights(self):
        out = readout(np.zeros((1, 3)), np.array([0.2, -0.1, 0.9]))
        assert out[0] == 0.0
        assert predicted_labels(out)[0] == 1  # tie-break to +1

    def test_saturation(self):
        out = readout(np.array([[100.0]]), np.array([1.0]))
        assert out[0] == pytest.approx(1.0)

    def test_hand_example(self):
        out = readout(np.array([[1.0, -1.0]]), np.array([0.5, 0.25]))
        assert out[0] == pytest.approx(np.tanh(0.25))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            readout(np.ones((1, 3)), np.ones(4))


class TestLoss:
    def test_perfect_predictions(self):
        assert mse_loss(np.array([[1.0], [-1.0]]), np.array([[1], [-1]])) == 0.0

    def test_single_sample_definition(self):
        assert mse_loss(np.array([[0.0]]), np.array([[1]])) == pytest.approx(0.5)

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(5)
        outputs = rng.uniform(-1, 1, (10, 2))
        labels = rng.choice([-1, 1], (10, 2))
        direct = 0.5 * float(np.sum((outputs - labels) ** 2))
        assert mse_loss(outputs, labels) == pytest.approx(direct, rel=1e-12)

    def test_permutation_invariance_exact(self):
        rng = np.random.default_rng(6)
        outputs = rng.uniform(-1, 1, (30, 1))
        labels = rng.choice([-1, 1], (30, 1))
        perm = rng.permutation(30)
        assert mse_loss(outputs, labels) == mse_loss(outputs[perm], labels[perm])

    def test_empty_dataset_rejected(self):
        cfg = FeatureConfig(num_inputs=2, num_outputs=1, depth=1)
        with pytest.raises(ValueError, match="empty"):
            training_loss([CircuitParams.zeros(1, 2)], np.zeros((1, 10)),
                          LabeledDataset([]), cfg)


class TestGradient:
    def make_instance(self, seed, num_outputs=1):
        rng = np.random.default_rng(seed)
        n, depth = 3, 2
        cfg = FeatureConfig(num_inputs=n, num_outputs=num_outputs, depth=depth,
                            tau_grid=(0.2, 0.7), dtype="float64")
        ds = build_phase_dataset(("Z2", "Z3"), 3, NoiseSpec("amplitude_error", p=0.2),
                                 rng, length=n)
        if num_outputs == 2:
            ds = LabeledDataset(
                [(s, np.array([l[0], -l[0]])) for s, l in ds.samples], ds.metadata
            )
        params = CircuitParams.random(depth, n, num_outputs, rng, scale=0.4, scale_ham=1.0)
        w = rng.normal(size=(num_outputs, cfg.num_features)) * 0.3
        return cfg, ds, params, w

    @pytest.mark.parametrize("num_outputs", [1, 2])
    def test_matches_naive_fd(self, num_outputs):
        cfg, ds, params, w = self.make_instance(7, num_outputs)
        fast = gradient([params], w, ds, cfg, fd_step=1e-4)

        def loss_fn(vec):
            pl, ww = unpack_parameters(vec, [params], w.shape)
            return training_loss(pl, ww, ds, cfg)

        naive = fd_gradient(loss_fn, pack_parameters([params], w), 1e-4)
        assert np.max(np.abs(fast - naive)) < 1e-9

    def test_saturated_readout_gives_tiny_gradient(self):
        cfg, ds, params, w = self.make_instance(8)
        labels = ds.labels()
        feats = extract_features([s for s, _ in ds.samples], [params], cfg)
        # scale w so every prediction saturates at the correct label
        big_w = 50.0 * labels[0, 0] * np.sign(feats[0]).reshape(1, -1)
        ds_matched = LabeledDataset(
            [(s, predicted_labels(readout(big_w, feats[i])))
             for i, (s, _) in enumerate(ds.samples)],
            ds.metadata,
        )
        grad = gradient([params], big_w, ds_matched, cfg, fd_step=1e-4)
        assert np.max(np.abs(grad)) < 1e-8

    def test_xy_model_gradient_matches_naive_fd(self):
        rng = np.random.default_rng(14)
        cfg = FeatureConfig(num_inputs=3, num_outputs=1, depth=1, tau_grid=(0.4,),
                            model="xy", dtype="float64")
        ds = build_phase_dataset(("Z2", "Z3"), 2, NoiseSpec("amplitude_error", p=0.1),
                                 rng, length=3)
        params = CircuitParams.random(1, 3, 1, rng, scale=0.4)
        w = rng.normal(size=(1, 1)) * 0.3
        fast = gradient([params], w, ds, cfg, fd_step=1e-4)

        def loss_fn(vec):
            pl, ww = unpack_parameters(vec, [params], w.shape)
            return training_loss(pl, ww, ds, cfg)

        naive = fd_gradient(loss_fn, pack_parameters([params], w), 1e-4)
        assert np.max(np.abs(fast - naive)) < 1e-9
        # drive and detuning slots never enter the flip-flop Hamiltonian
        n_angles = params.angles.size
        np.testing.assert_array_equal(fast[n_angles : n_angles + 2], [0.0, 0.0])

    def test_richardson_agreement(self):
        # step-halved Richardson reference on a small random instance
        cfg, ds, params, w = self.make_instance(9)

        def loss_fn(vec):
            pl, ww = unpack_parameters(vec, [params], w.shape)
            return training_loss(pl, ww, ds, cfg)

        x0 = pack_parameters([params], w)
        g_h = fd_gradient(loss_fn, x0, 1e-4)
        g_h2 = fd_gradient(loss_fn, x0, 5e-5)
        richardson = (4.0 * g_h2 - g_h) / 3.0
        fast = gradient([params], w, ds, cfg, fd_step=1e-4)
        err = np.abs(fast - richardson)
        tol = np.maximum(1e-4 * np.abs(richardson), 1e-7)
        assert np.all(err <= tol)


class TestEvaluate:
    def test_perfect_predictions_diagonal_confusion(self):
        classes = [("a", (-1,)), ("b", (1,))]
        preds = np.array([[-1], [1], [1]])
        labels = np.array([[-1], [1], [1]])
        acc, conf = accuracy_and_confusion(preds, labels, classes)
        assert acc == 1.0
        np.testing.assert_array_equal(conf, [[1, 0], [0, 2]])

    def test_constant_predictor_on_balanced_set(self):
        classes = [("a", (-1,)), ("b", (1,))]
        preds = np.ones((10, 1), dtype=int)
        labels = np.array([[-1]] * 5 + [[1]] * 5)
        acc, conf = accuracy_and_confusion(preds, labels, classes)
        assert acc == 0.5
        assert conf[0, 1] == 5 and conf[1, 1] == 5

    def test_confusion_rows_sum_to_class_counts(self):
        rng = np.random.default_rng(10)
        classes = [("a", (-1, -1)), ("b", (-1, 1)), ("c", (1, -1)), ("d", (1, 1))]
        labels = np.array([classes[i % 4][1] for i in range(20)])
        preds = np.array([classes[rng.integers(4)][1] for _ in range(20)])
        _, conf = accuracy_and_confusion(preds, labels, classes)
        np.testing.assert_array_equal(conf.sum(axis=1), [5, 5, 5, 5])

    def test_label_permutation_consistency(self):
        rng = np.random.default_rng(11)
        classes = [("a", (-1,)), ("b", (1,))]
        labels = rng.choice([-1, 1], (12, 1))
        preds = rng.choice([-1, 1], (12, 1))
        acc1, conf1 = accuracy_and_confusion(preds, labels, classes)
        flipped = [("b", (1,)), ("a", (-1,))]
        acc2, conf2 = accuracy_and_confusion(preds, labels, flipped)
        assert acc1 == acc2
        np.testing.assert_array_equal(conf2, conf1[::-1, ::-1])


class TestTraining:
    def toy_config(self, joint_epochs=60, threads=1, seed=3):
        feature = FeatureConfig(num_inputs=3, num_outputs=1, depth=1,
                                tau_grid=(0.25, 0.5, 0.75, 1.0), dtype="float64",
                                model="perceptron")
        return TrainConfig(
            feature=feature,
            optimizer=OptimizerConfig(kind="adam", learning_rate=0.1,
                                      max_epochs=joint_epochs),
            warmup_epochs=0,
            init_scale=0.1,
            init_scale_ham=1.0,
            init_seed=seed,
            threads=threads,
        )

    def toy_datasets(self):
        samples = [
            (QuantumState.from_bits("000"), np.array([-1])),
            (QuantumState.from_bits("111"), np.array([1])),
        ]
        meta = {"classes": ["zeros", "ones"],
                "class_labels": {"zeros": [-1], "ones": [1]}}
        ds = LabeledDataset(samples, meta)
        return ds, ds

    def test_separable_toy_reaches_perfect_accuracy(self):
        train, test = self.toy_datasets()
        result = train_classifier(train, test, self.toy_config(100))
        assert result.test_accuracy == 1.0
        assert len(result.loss_history) <= 102

    def test_warmup_phase_trains_readout_only(self):
        train, test = self.toy_datasets()
        cfg = self.toy_config(0)
        cfg.warmup_epochs = 80
        result = train_classifier(train, test, cfg)
        # circuit parameters stay at their initialization during warmup
        rng = np.random.default_rng(cfg.init_seed)
        init = CircuitParams.random(cfg.feature.depth, cfg.feature.num_inputs,
                                    cfg.feature.num_outputs, rng,
                                    scale=cfg.init_scale, scale_ham=cfg.init_scale_ham)
        np.testing.assert_array_equal(result.params_list[0].angles, init.angles)
        assert np.any(result.readout_weights != 0.0)
        assert result.loss_history[-1] < result.loss_history[0]

    def test_loss_history_finite_and_decreasing_overall(self):
        train, test = self.toy_datasets()
        result = train_classifier(train, test, self.toy_config(40))
        hist = np.array(result.loss_history)
        assert np.all(np.isfinite(hist))
        assert hist[-1] <= hist[0]

    def test_trained_accuracy_beats_zero_parameter_baseline(self):
        rng = np.random.default_rng(12)
        train = build_phase_dataset(("Z2", "Z3"), 6, NoiseSpec("amplitude_error", p=0.2),
                                    rng, length=3)
        test = build_phase_dataset(("Z2", "Z3"), 6, NoiseSpec("amplitude_error", p=0.2),
                                   np.random.default_rng(13), length=3)
        cfg = self.toy_config(50)
        result = train_classifier(train, test, cfg)
        # zero-parameter baseline predicts +1 everywhere: accuracy 1/2
        assert result.train_accuracy >= 0.5

    def test_determinism_and_thread_independence(self):
        train, test = self.toy_datasets()
        r1 = train_classifier(train, test, self.toy_config(10, threads=1))
        r2 = train_classifier(train, test, self.toy_config(10, threads=1))
        r3 = train_classifier(train, test, self.toy_config(10, threads=2))
        assert r1.loss_history == r2.loss_history == r3.loss_history
        np.testing.assert_array_equal(r1.readout_weights, r3.readout_weights)

    def test_seed_changes_trajectory(self):
        train, test = self.toy_datasets()
        r1 = train_classifier(train, test, self.toy_config(10, seed=1))
        r2 = train_classifier(train, test, self.toy_config(10, seed=2))
        assert r1.loss_history != r2.loss_history

    def test_result_invariants(self):
        train, test = self.toy_datasets()
        result = train_classifier(train, test, self.toy_config(15))
        assert 0.0 <= result.train_accuracy <= 1.0
        assert 0.0 <= result.test_accuracy <= 1.0
        np.testing.assert_array_equal(result.test_confusion.sum(axis=1), [1, 1])
        d = result.to_dict()
        assert d["class_names"] == ["zeros", "ones"]
        assert isinstance(d["loss_history"][0], float)

    def test_evaluate_recount_matches(self):
        train, test = self.toy_datasets()
        cfg = self.toy_config(20)
        result = train_classifier(train, test, cfg)
        acc, conf, preds, _ = evaluate(result.params_list, result.readout_weights,
                                       test, cfg.feature)
        assert acc == result.test_accuracy
        np.testing.assert_array_equal(conf, result.test_confusion)
