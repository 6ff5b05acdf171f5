import numpy as np
import pytest

from sonoforge.nn import GeometryError, ModelSpec, build_model
from sonoforge.training import (
    ClipSet,
    EpochRecord,
    ReportFormatError,
    RunReport,
    TrainConfig,
    TrainingDivergedError,
    early_stopping,
    evaluate,
    reduce_lr_on_plateau,
    report_from_text,
    split_dataset,
    train,
)


class TestSplitDataset:
    def test_canonical_2000_item_split(self):
        train_items, val_items = split_dataset(range(2000), seed=0)
        assert len(train_items) == 1600
        assert len(val_items) == 400

    def test_same_seed_gives_identical_partition(self):
        a = split_dataset(range(100), seed=7)
        b = split_dataset(range(100), seed=7)
        assert a == b

    def test_different_seed_gives_different_partition(self):
        a = split_dataset(range(100), seed=7)
        b = split_dataset(range(100), seed=8)
        assert a != b

    def test_ten_items_split_eight_two(self):
        train_items, val_items = split_dataset(range(10), seed=3)
        assert len(train_items) == 8 and len(val_items) == 2
        assert set(train_items).isdisjoint(val_items)
        assert set(train_items) | set(val_items) == set(range(10))

    def test_stratified_preserves_class_sizes(self):
        labels = [i % 4 for i in range(40)]
        train_items, val_items = split_dataset(
            range(40), seed=1, labels=labels, stratified=True
        )
        assert len(train_items) == 32 and len(val_items) == 8
        for cls in range(4):
            assert sum(1 for i in val_items if i % 4 == cls) == 2

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            split_dataset([])

    def test_stratified_without_labels_rejected(self):
        with pytest.raises(ValueError):
            split_dataset(range(10), stratified=True)


class TestReduceLrOnPlateau:
    def test_two_flat_epochs_halve_the_rate(self):
        assert reduce_lr_on_plateau([3.0, 3.0, 3.0], 1e-3, factor=0.5) == 5e-4

    def test_strictly_decreasing_leaves_rate_alone(self):
        history = [5.0, 4.0, 3.0, 2.0, 1.0]
        for k in range(1, len(history) + 1):
            assert reduce_lr_on_plateau(history[:k], 1e-3) == 1e-3

    def test_min_lr_clamps(self):
        assert reduce_lr_on_plateau([3.0, 3.0, 3.0], 1e-5, min_lr=1e-5) == 1e-5

    def test_reduction_restarts_the_countdown(self):
        # streak 2 cuts, streak 3 must not cut again, streak 4 cuts
        assert reduce_lr_on_plateau([3.0] * 4, 5e-4) == 5e-4
        assert reduce_lr_on_plateau([3.0] * 5, 5e-4) == 2.5e-4

    def test_epoch_by_epoch_walk(self):
        history = []
        lr = 1e-3
        seen = []
        for value in [3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0]:
            history.append(value)
            lr = reduce_lr_on_plateau(history, lr)
            seen.append(lr)
        # cuts land after epochs 3, 5, 7 (two fresh plateau epochs each)
        assert seen == [1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4, 2.5e-4, 1.25e-4]

    def test_tiny_improvement_counts_as_plateau(self):
        # 2.99995 misses the 1e-4 improvement threshold
        assert reduce_lr_on_plateau([3.0, 2.99995, 2.99995], 1e-3) == 5e-4

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            reduce_lr_on_plateau([], 1e-3)


class TestEarlyStopping:
    def test_six_flat_epochs_after_best_stop(self):
        history = [5, 4, 4, 4, 4, 4, 4, 4]
        for k in range(1, 8):
            assert not early_stopping(history[:k])
        assert early_stopping(history)

    def test_strictly_decreasing_never_stops(self):
        history = list(np.linspace(10.0, 1.0, 40))
        for k in range(1, len(history) + 1):
            assert not early_stopping(history[:k])

    def test_late_non_beating_dips_do_not_reset(self):
        # best is 2 at epoch 2; 2.5, 2.4, 2.3 never beat it
        history = [3, 2, 3, 3, 3, 2.5, 2.4, 2.3]
        for k in range(1, 8):
            assert not early_stopping(history[:k])
        assert early_stopping(history)

    def test_real_improvement_resets(self):
        history = [3, 3, 3, 3, 3, 2.0, 3, 3, 3, 3, 3]
        assert not early_stopping(history)
        assert early_stopping(history + [3])


def make_clips(rng, n, height, width, n_classes):
    return ClipSet(
        rng.standard_normal((n, height, width)).astype(np.float32),
        rng.integers(0, n_classes, n),
    )


class SequentialLogitModel:
    """Serves precomputed logit rows in request order; geometry only."""

    def __init__(self, logits, height, width):
        self.spec = ModelSpec(height, width, logits.shape[1])
        self._logits = logits
        self._served = 0

    def forward(self, x, train=False, rng=None):
        assert not train
        out = self._logits[self._served : self._served + x.shape[0]]
        self._served += x.shape[0]
        return out


class TestEvaluate:
    def test_perfect_model_scores_one(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 4, 10)
        logits = 50.0 * np.eye(4)[labels]
        clips = ClipSet(rng.standard_normal((10, 2, 3)), labels)
        loss, acc = evaluate(SequentialLogitModel(logits, 2, 3), clips, batch_size=4)
        assert acc == 1.0
        assert loss < 1e-6

    def test_adversarial_labels_score_zero(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 4, 10)
        logits = 50.0 * np.eye(4)[(labels + 1) % 4]
        clips = ClipSet(rng.standard_normal((10, 2, 3)), labels)
        _, acc = evaluate(SequentialLogitModel(logits, 2, 3), clips, batch_size=4)
        assert acc == 0.0

    def test_zeroed_network_gives_uniform_loss(self):
        model = build_model(ModelSpec(12, 20, 50))
        for name, p in model.params().items():
            model.set_param(name, np.zeros_like(p))
        clips = make_clips(np.random.default_rng(1), 20, 12, 20, 50)
        loss, acc = evaluate(model, clips)
        assert loss == pytest.approx(np.log(50.0), abs=1e-6)
        assert 0.0 <= acc <= 0.2  # chance-level, small sample

    def test_geometry_mismatch_rejected(self):
        model = build_model(ModelSpec(12, 20, 5))
        clips = make_clips(np.random.default_rng(0), 4, 13, 20, 5)
        with pytest.raises(GeometryError):
            evaluate(model, clips)

    def test_loss_is_sample_weighted_over_batches(self):
        rng = np.random.default_rng(2)
        labels = rng.integers(0, 4, 7)
        logits = rng.standard_normal((7, 4))
        clips = ClipSet(rng.standard_normal((7, 2, 3)), labels)
        # batch_size 3 gives uneven batches; compare against one big batch
        loss_a, acc_a = evaluate(SequentialLogitModel(logits, 2, 3), clips, batch_size=3)
        loss_b, acc_b = evaluate(SequentialLogitModel(logits, 2, 3), clips, batch_size=7)
        assert loss_a == pytest.approx(loss_b, abs=1e-12)
        assert acc_a == acc_b


class TestTrainLoop:
    def small_run(self, max_epochs=3, seed=0):
        rng = np.random.default_rng(4)
        train_set = make_clips(rng, 12, 8, 9, 3)
        val_set = make_clips(rng, 6, 8, 9, 3)
        model = build_model(ModelSpec(8, 9, 3), np.random.default_rng(seed))
        config = TrainConfig(
            "mel", batch_size=4, max_epochs=max_epochs, seed=seed
        )
        return train(model, train_set, val_set, config)

    def test_records_every_epoch(self):
        report = self.small_run()
        assert report.n_epochs == 3
        for e in report.epochs:
            assert 0.0 <= e.train_acc <= 1.0
            assert 0.0 <= e.val_acc <= 1.0
            assert np.isfinite(e.train_loss) and np.isfinite(e.val_loss)

    def test_identical_runs_agree_byte_for_byte(self):
        a = self.small_run().to_text()
        b = self.small_run().to_text()
        assert a == b
        assert a.encode() == b.encode()

    def test_different_seeds_differ(self):
        assert self.small_run(seed=0).to_text() != self.small_run(seed=1).to_text()

    def test_report_is_self_consistent(self):
        report = self.small_run(max_epochs=25)
        losses = [e.val_loss for e in report.epochs]
        config = report.config
        # the run must not have continued past a stop signal, nor stopped early
        for k in range(1, report.n_epochs):
            assert not early_stopping(losses[:k], config.stop_patience)
        if report.n_epochs < config.max_epochs:
            assert early_stopping(losses, config.stop_patience)
        # the recorded lr trajectory must replay from the val losses
        lr = config.initial_lr
        for i, e in enumerate(report.epochs):
            assert e.lr == lr
            lr = reduce_lr_on_plateau(
                losses[: i + 1], lr, config.lr_patience, config.lr_factor,
                config.min_lr,
            )
        recorded = [e.lr for e in report.epochs]
        assert recorded == sorted(recorded, reverse=True)
        assert recorded[-1] >= config.min_lr

    def test_poisoned_weights_abort_with_diagnostic(self):
        rng = np.random.default_rng(4)
        train_set = make_clips(rng, 8, 8, 9, 3)
        val_set = make_clips(rng, 4, 8, 9, 3)
        model = build_model(ModelSpec(8, 9, 3))
        bad = np.full(3, np.nan, dtype=np.float32)
        model.set_param("dense2/bias", bad)
        with pytest.raises(TrainingDivergedError, match="epoch 1"):
            train(model, train_set, val_set, TrainConfig("mel", batch_size=4))

    def test_shape_disagreement_rejected(self):
        rng = np.random.default_rng(4)
        train_set = make_clips(rng, 8, 8, 9, 3)
        val_set = make_clips(rng, 4, 8, 10, 3)
        model = build_model(ModelSpec(8, 9, 3))
        with pytest.raises(GeometryError):
            train(model, train_set, val_set, TrainConfig("mel"))


class TestConfigAndReport:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig("sawtooth")
        with pytest.raises(ValueError):
            TrainConfig("mel", batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig("mel", lr_factor=1.0)
        with pytest.raises(ValueError):
            TrainConfig("mel", lr_patience=6, stop_patience=6)
        with pytest.raises(ValueError):
            TrainConfig("mel", max_epochs=0)

    def test_clipset_validation(self):
        with pytest.raises(ValueError):
            ClipSet(np.zeros((3, 4)), np.zeros(3, dtype=int))
        with pytest.raises(ValueError):
            ClipSet(np.zeros((3, 4, 5)), np.zeros(4, dtype=int))
        with pytest.raises(ValueError):
            ClipSet(np.zeros((3, 4, 5)), np.array([0, -1, 2]))

    def test_report_round_trips_through_text(self):
        config = TrainConfig("chroma_cens", max_epochs=5, seed=11)
        epochs = [
            EpochRecord(3.1, 0.25, 3.3, 0.125, 1e-3),
            EpochRecord(2.7, 0.5, 3.0, 0.25, 1e-3),
        ]
        report = RunReport(config, epochs)
        text = report.to_text()
        parsed = report_from_text(text)
        assert parsed.config == config
        assert parsed.epochs == epochs
        assert parsed.to_text() == text

    def test_accuracy_bounds_enforced(self):
        with pytest.raises(ValueError):
            EpochRecord(1.0, 1.5, 1.0, 0.5, 1e-3)

    def test_epoch_count_bounded_by_config(self):
        config = TrainConfig("mel", max_epochs=1)
        records = [EpochRecord(1.0, 0.5, 1.0, 0.5, 1e-3)] * 2
        with pytest.raises(ValueError):
            RunReport(config, records)

    @pytest.mark.parametrize(
        "mangle",
        [
            lambda t: t.replace("sonoforge run report v1", "v2 report"),
            lambda t: t.replace("epoch 2 ", "epoch 3 "),
            lambda t: t.replace("epochs: 2", "epochs: 5"),
            lambda t: t.replace(" val_acc=0.25", ""),
            lambda t: t.replace("batch_size: 32", ""),
        ],
    )
    def test_mangled_report_text_rejected(self, mangle):
        config = TrainConfig("mel")
        epochs = [
            EpochRecord(3.1, 0.25, 3.3, 0.125, 1e-3),
            EpochRecord(2.7, 0.5, 3.0, 0.25, 1e-3),
        ]
        text = RunReport(config, epochs).to_text()
        with pytest.raises(ReportFormatError):
            report_from_text(mangle(text))
