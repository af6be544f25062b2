import copy

import numpy as np
import pytest

from diffsub import autodiff as ad
from diffsub.autodiff import Tape
from diffsub.datagen import gen_dataset, gen_random_instance, gen_world, qualitative_instance
from diffsub.dcsg import DcsgConfig
from diffsub.dol import (
    LinearModel,
    MlpModel,
    TrainConfig,
    TrainingDiverged,
    dol_loss,
    evaluate_regret,
    load_model,
    mean_dol_loss,
    mse_loss,
    normalized_regret,
    predict,
    save_model,
    train,
    write_history,
)
from diffsub.maximize import csg


@pytest.fixture
def table():
    return qualitative_instance()


class TestPredict:
    def test_positive_for_random_inputs(self):
        model = MlpModel([6, 40, 15], seed=0)
        rng = np.random.default_rng(0)
        for _ in range(1000):
            w = predict(model, rng.uniform(-1, 1, 6))
            assert np.all(w.w > 0)

    def test_zero_final_layer_gives_constant(self):
        model = MlpModel([4, 8, 3], seed=1)
        model.weights[-1][:] = 0.0
        a = model.forward(np.zeros(4))
        b = model.forward(np.random.default_rng(1).uniform(-1, 1, 4))
        assert a == pytest.approx(b)
        assert np.all(a > 0)

    def test_input_sensitivity(self):
        model = MlpModel([3, 10, 2], seed=2)
        z = np.array([0.1, -0.2, 0.4])
        z2 = z.copy()
        z2[0] += 0.5
        assert np.any(model.forward(z) != model.forward(z2))

    def test_dimension_mismatch(self):
        model = MlpModel([3, 4, 2], seed=0)
        with pytest.raises(ValueError):
            model.forward(np.zeros(5))

    def test_taped_forward_matches_numpy(self):
        for sizes, act in ([(5, 8, 4), "tanh"], [(5, 8, 8, 4), "relu"], [(5, 4), "tanh"]):
            model = MlpModel(sizes, activation=act, seed=3)
            z = np.random.default_rng(4).uniform(-1, 1, sizes[0])
            tape = Tape()
            nodes = model.forward_on_tape(tape, model.record_params(tape), z)
            taped = np.array([tape.value(i) for i in nodes])
            assert taped == pytest.approx(model.forward(z), abs=1e-12)


class TestMseLoss:
    def test_identical_vectors(self):
        tape = Tape()
        pred = ad.const_vec(tape, [1.0, 2.0])
        assert tape.value(mse_loss(tape, [1.0, 2.0], pred)) == 0.0

    def test_hand_value(self):
        tape = Tape()
        pred = ad.const_vec(tape, [0.0, 0.0])
        assert tape.value(mse_loss(tape, [3.0, 4.0], pred)) == pytest.approx(12.5)

    def test_gradient_matches_fd(self):
        w = np.array([1.0, 0.5, 2.0])
        p0 = np.array([0.7, 1.1, 1.9])
        tape = Tape()
        pred = ad.const_vec(tape, p0)
        node = mse_loss(tape, w, pred)
        grad = tape.backward(node)[np.array(pred)]
        assert grad == pytest.approx(2 * (p0 - w) / 3, abs=1e-12)


class TestDolLoss:
    def test_near_zero_at_true_costs(self, table):
        w = np.array([2.0, 2.0, 1.0])
        tape = Tape()
        pred = ad.const_vec(tape, w)
        node = dol_loss(table, w, pred, DcsgConfig(tau=0.01), tape)
        ref = csg(table, w).objective_g
        assert abs(tape.value(node)) <= 0.05 * abs(ref)

    def test_adversarial_prediction_positive_loss(self, table):
        w_true = np.array([2.0, 2.0, 1.0])
        w_bad = np.array([0.1, 5.0, 1.0])  # steers the pick to {s1, s3}
        tape = Tape()
        pred = ad.const_vec(tape, w_bad)
        node = dol_loss(table, w_true, pred, DcsgConfig(tau=0.01), tape)
        assert tape.value(node) > 0.5

    def test_lambda_zero_gradient_is_zero(self):
        inst = gen_random_instance(5, 2, 0.0, seed=6)
        w = np.random.default_rng(6).uniform(0.5, 2, 5)
        tape = Tape()
        pred = ad.const_vec(tape, w * 1.3)
        node = dol_loss(inst, w, pred, DcsgConfig(tau=0.5), tape)
        grad = tape.backward(node)[np.array(pred)]
        assert np.all(grad == 0.0)

    def test_reference_term_has_no_gradient(self, table):
        # scaling the reference away does not change the gradient
        w = np.array([2.0, 2.0, 1.0])
        tape = Tape()
        pred = ad.const_vec(tape, [1.5, 2.5, 1.0])
        node = dol_loss(table, w, pred, DcsgConfig(tau=0.5), tape)
        grad = tape.backward(node)[np.array(pred)]

        def loss_at(wp):
            t2 = Tape()
            p2 = ad.const_vec(t2, wp)
            return t2.value(dol_loss(table, w, p2, DcsgConfig(tau=0.5), t2))

        h = 1e-6
        for j in range(3):
            wp = np.array([1.5, 2.5, 1.0])
            wm = wp.copy()
            wp[j] += h
            wm[j] -= h
            fd = (loss_at(wp) - loss_at(wm)) / (2 * h)
            assert abs(grad[j] - fd) / max(1.0, abs(fd)) < 1e-3


class TestNormalizedRegret:
    def test_zero_at_true_prediction(self, table):
        w = np.array([2.0, 2.0, 1.0])
        assert normalized_regret(table, w, w) == 0.0

    def test_flip_example(self, table):
        w_true = np.array([2.0, 2.0, 1.0])
        w_pred = np.array([0.1, 5.0, 1.0])
        assert normalized_regret(table, w_true, w_pred) == pytest.approx(1 / 35)

    def test_scaling_not_invariant_in_general(self):
        # doubling predicted costs can flip the chosen set
        rng = np.random.default_rng(1)
        changed = False
        for _ in range(80):
            seed = int(rng.integers(0, 2**31))
            inst = gen_random_instance(8, 3, 1.0, seed=seed)
            w = np.random.default_rng([seed, 1]).uniform(0, 2, 8)
            if csg(inst, w).subset != csg(inst, 2 * w).subset:
                changed = True
                break
        assert changed

    def test_nonpositive_reference_raises(self):
        inst = gen_random_instance(4, 2, 1.0, seed=3)
        huge = np.full(4, 100.0)
        with pytest.raises(ValueError):
            normalized_regret(inst, huge, huge)

    def test_evaluate_regret_excludes_flagged(self):
        inst = gen_random_instance(4, 2, 1.0, seed=3)
        model = MlpModel([2, 4], seed=0)
        entries = [(np.zeros(2), np.full(4, 100.0)), (np.zeros(2), np.full(4, 0.1))]
        mean, _, excluded = evaluate_regret(model, inst, entries)
        assert excluded == 1
        assert np.isfinite(mean)


class TestTraining:
    def test_two_stage_mse_decreases(self):
        # full-batch descent on a realizable quadratic: strictly monotone
        world = gen_world("qualitative-linear", noise_std=0.1)
        ds = gen_dataset(world, 40, seed=0)
        model = LinearModel(1, 3, seed=0)
        hist = train(model, None, ds, "two-stage",
                     TrainConfig(epochs=20, learning_rate=0.01, batch_size=32,
                                 rng_seed=0))
        losses = [l for _, mode, l in hist if mode == "mse"]
        assert len(losses) == 20
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_dol_curve_starts_with_warm_gap(self, table):
        world = gen_world("qualitative-linear", noise_std=0.25)
        ds = gen_dataset(world, 24, seed=1)
        model = LinearModel(1, 3, seed=1)
        cfg = TrainConfig(epochs=2, warm_start_epochs=3, learning_rate=0.005,
                          rng_seed=1, dcsg=DcsgConfig(tau=0.5))
        hist = train(model, table, ds, "dol", cfg)
        modes = [m for _, m, _ in hist]
        assert modes == ["mse", "mse", "mse", "dol", "dol", "dol"]
        epochs = [e for e, m, _ in hist if m == "dol"]
        assert epochs == [0, 1, 2]
        # epoch-0 entry equals the warm model's mean decision gap: retrain
        # the warm phase alone and evaluate it
        model2 = LinearModel(1, 3, seed=1)
        train(model2, None, ds, "two-stage",
              TrainConfig(epochs=3, learning_rate=0.005, rng_seed=1))
        gap = mean_dol_loss(model2, table, ds.train_entries(), DcsgConfig(tau=0.5))
        assert hist[3][2] == pytest.approx(gap, abs=1e-12)

    def test_determinism_bitwise(self, table):
        world = gen_world("qualitative-linear", noise_std=0.25)
        ds = gen_dataset(world, 20, seed=2)
        runs = []
        for _ in range(2):
            model = LinearModel(1, 3, seed=2)
            hist = train(model, table, ds, "dol",
                         TrainConfig(epochs=3, warm_start_epochs=2, rng_seed=2,
                                     dcsg=DcsgConfig(tau=0.5)))
            runs.append((tuple(l for _, _, l in hist), model.weights[0].copy()))
        assert runs[0][0] == runs[1][0]
        assert np.array_equal(runs[0][1], runs[1][1])

    def test_gradient_through_model_matches_fd(self, table):
        # d(mean dol loss)/d(theta) for a few parameters against FD
        world = gen_world("qualitative-linear", noise_std=0.25)
        ds = gen_dataset(world, 6, seed=3)
        model = LinearModel(1, 3, seed=3)
        pairs = ds.train_entries()[:3]
        cfg = DcsgConfig(tau=0.5)

        def mean_loss():
            return mean_dol_loss(model, table, pairs, cfg)

        tape = Tape()
        pnodes = model.record_params(tape)
        losses = [
            dol_loss(table, w, model.forward_on_tape(tape, pnodes, z), cfg, tape)
            for z, w in pairs
        ]
        root = ad.lincomb(tape, losses, [1 / 3] * 3)
        adj = tape.backward(root)
        wn, bn = pnodes[0]
        h = 1e-6
        for idx in [(0, 0), (1, 0), (2, 0)]:
            orig = model.weights[0][idx]
            model.weights[0][idx] = orig + h
            up = mean_loss()
            model.weights[0][idx] = orig - h
            dn = mean_loss()
            model.weights[0][idx] = orig
            fd = (up - dn) / (2 * h)
            assert abs(adj[wn[idx]] - fd) / max(1.0, abs(fd)) < 1e-3

    def test_divergence_reports_location(self, table):
        world = gen_world("qualitative-linear", noise_std=0.25)
        ds = gen_dataset(world, 16, seed=4)
        model = LinearModel(1, 3, seed=4)
        model.weights[0][:] = 1e308  # forces non-finite forward values
        with np.errstate(all="ignore"):
            with pytest.raises((TrainingDiverged, ArithmeticError, OverflowError)):
                train(model, table, ds, "dol",
                      TrainConfig(epochs=1, warm_start_epochs=0, rng_seed=4))

    def test_momentum_optimizer_runs(self):
        world = gen_world("qualitative-linear", noise_std=0.1)
        ds = gen_dataset(world, 20, seed=5)
        model = LinearModel(1, 3, seed=5)
        hist = train(model, None, ds, "two-stage",
                     TrainConfig(epochs=10, learning_rate=0.005, optimizer="momentum",
                                 rng_seed=5))
        losses = [l for _, _, l in hist]
        assert losses[-1] < losses[0]

    def test_empty_dataset_rejected(self, table):
        model = LinearModel(1, 3)
        with pytest.raises(ValueError):
            train(model, table, [], "dol", TrainConfig())

    def test_unknown_mode_rejected(self, table):
        model = LinearModel(1, 3)
        with pytest.raises(ValueError):
            train(model, table, [(np.zeros(1), np.ones(3))], "one-shot", TrainConfig())


class TestCheckpointAndHistory:
    def test_model_roundtrip(self, tmp_path):
        model = MlpModel([4, 8, 3], activation="relu", seed=7)
        path = tmp_path / "model.json"
        save_model(model, path)
        back = load_model(path)
        z = np.random.default_rng(7).uniform(-1, 1, 4)
        assert back.forward(z) == pytest.approx(model.forward(z), abs=1e-15)
        assert back.activation == "relu"

    def test_linear_roundtrip(self, tmp_path):
        model = LinearModel(2, 3, seed=8)
        path = tmp_path / "linear.json"
        save_model(model, path)
        back = load_model(path)
        z = np.array([0.3, -0.7])
        assert back.forward(z) == pytest.approx(model.forward(z), abs=1e-15)

    def test_history_csv(self, tmp_path):
        path = tmp_path / "curve.csv"
        write_history(path, [(0, "mse", 0.5), (1, "dol", -0.25)])
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,mode,mean_loss"
        assert lines[1] == "0,mse,0.5"
        assert lines[2] == "1,dol,-0.25"
