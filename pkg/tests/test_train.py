import json
import math

import numpy as np
import pytest

from src.modules.utils import (
    ConfigurationError,
    DatasetSplit,
    FallDetectorNet,
    ParameterError,
    TrainConfig,
    TrainingAbortedError,
    load_checkpoint,
    lr_at,
    make_split,
    ntu_topology,
    train,
)
from src.modules.utils._tensor import Parameter
from src.modules.utils._train import SGD, BalancedBatchSampler, ShuffledBatchSampler, sgd_step, train_step


def quick_config(**overrides):
    settings = dict(epochs=2, batch_size=8, window=24, max_frames=32, seed=1)
    settings.update(overrides)
    return TrainConfig(**settings)


def scalar(value, grad=None, name="p"):
    param = Parameter(np.array([value]), name=name)
    if grad is not None:
        param.grad = np.array([grad])
    return param


class TestSchedule:
    @pytest.mark.parametrize("epoch,expected", [(0, 0.05), (9, 0.05), (10, 0.045), (19, 0.045), (29, 0.0405)])
    def test_step_decay(self, epoch, expected):
        assert lr_at(epoch, TrainConfig()) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("epoch", [-1, 30])
    def test_outside_run(self, epoch):
        with pytest.raises(ParameterError):
            lr_at(epoch, TrainConfig())

    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.epochs, cfg.batch_size, cfg.lr0, cfg.momentum, cfg.weight_decay) == (30, 64, 0.05, 0.9, 0.0005)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize(
        "overrides",
        [{"epochs": 0}, {"lr0": -0.1}, {"momentum": -0.5}, {"window": 400}, {"batch_size": 1}],
    )
    def test_invalid(self, overrides):
        with pytest.raises(ParameterError):
            TrainConfig(**overrides)


class TestSgdStep:
    def test_vanilla(self):
        param = scalar(1.0, 0.5)
        sgd_step([param], TrainConfig(momentum=0.0, weight_decay=0.0), 0, {}, lr=1.0)
        assert param.data.tolist() == [0.5]
        assert param.grad is None

    def test_momentum_closed_form(self):
        cfg = TrainConfig(momentum=0.9, weight_decay=0.0)
        param, velocity, lr, g = scalar(2.0), {}, 0.1, 0.3
        for _ in range(2):
            param.grad = np.array([g])
            sgd_step([param], cfg, 0, velocity, lr=lr)
        expected = 2.0 - lr * g - lr * (0.9 * g + g)
        assert abs(param.data[0] - expected) < 1e-12
        assert abs(velocity["p"][0] - 1.9 * g) < 1e-12

    def test_weight_decay_scalar_oracle(self):
        cfg = TrainConfig()
        param, velocity = scalar(1.0), {}
        p, v = 1.0, 0.0
        for epoch in range(5):
            sgd_step([param], cfg, epoch, velocity)
            v = cfg.momentum * v + cfg.weight_decay * p
            p = p - lr_at(epoch, cfg) * v
        assert abs(param.data[0] - p) < 1e-15
        assert param.data[0] < 1.0

    def test_decay_applies_to_every_parameter(self, small_config):
        net = FallDetectorNet(small_config, ntu_topology())
        before = {name: p.data.copy() for name, p in net.named_parameters()}
        optimizer = SGD(net.parameters(), TrainConfig())
        optimizer.step(0)
        for name, param in net.named_parameters():
            expected = before[name] - 0.05 * 0.0005 * before[name]
            assert np.allclose(param.data, expected, rtol=0, atol=1e-15), name

    def test_zero_lr_changes_nothing(self, small_config):
        net = FallDetectorNet(small_config, ntu_topology())
        before = [p.data.copy() for p in net.parameters()]
        rng = np.random.default_rng(0)
        for param in net.parameters():
            param.grad = rng.standard_normal(param.shape)
        sgd_step(net.parameters(), TrainConfig(), 0, {}, lr=0.0)
        assert all(np.array_equal(a, p.data) for a, p in zip(before, net.parameters()))

    def test_non_finite_gradient_aborts(self):
        param = scalar(1.0, float("nan"))
        with pytest.raises(TrainingAbortedError, match="p"):
            sgd_step([param], TrainConfig(), 0, {})
        assert param.data.tolist() == [1.0]


class TestSamplers:
    @pytest.fixture
    def labels(self):
        labels = np.zeros(300, dtype=int)
        labels[np.random.default_rng(0).choice(300, 10, replace=False)] = 1
        return labels

    def test_half_positive(self, labels):
        sampler = BalancedBatchSampler(labels, 64, seed=0)
        batches = sampler.batches(0)
        assert len(batches) == len(sampler) == 10
        for batch in batches:
            assert len(batch) == 64
            assert labels[batch].sum() == 32

    def test_odd_batch(self, labels):
        for batch in BalancedBatchSampler(labels, 5).batches(0):
            assert labels[batch].sum() in (2, 3)

    def test_epoch_coverage(self, labels):
        batches = BalancedBatchSampler(labels, 64).batches(3)
        drawn = np.concatenate(batches)
        assert set(drawn[labels[drawn] == 0]) == set(np.flatnonzero(labels == 0))
        assert set(drawn[labels[drawn] == 1]) == set(np.flatnonzero(labels == 1))
        # 290 negatives fill nine batches of 32 without repetition
        early = np.concatenate(batches[:9])
        early_negatives = early[labels[early] == 0]
        assert len(early_negatives) == len(set(early_negatives)) == 288

    def test_deterministic_per_epoch(self, labels):
        first = BalancedBatchSampler(labels, 64, seed=4)
        second = BalancedBatchSampler(labels, 64, seed=4)
        assert all(np.array_equal(a, b) for a, b in zip(first.batches(2), second.batches(2)))
        assert not all(np.array_equal(a, b) for a, b in zip(first.batches(2), first.batches(3)))

    def test_single_class(self):
        with pytest.raises(ConfigurationError):
            BalancedBatchSampler(np.zeros(10, dtype=int), 4)

    def test_shuffled_covers_everything(self):
        batches = ShuffledBatchSampler(list(range(10)), 4, seed=0).batches(0)
        assert [len(b) for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches)) == list(range(10))


class TestTraining:
    def test_first_loss_near_uniform(self, small_config, synthetic_dataset):
        net = FallDetectorNet(small_config, ntu_topology())
        labels = synthetic_dataset.labels
        batch_idx = BalancedBatchSampler(labels, 16, seed=0).batches(0)[0]
        stats = synthetic_dataset.norm_stats()
        batch = synthetic_dataset.batch(batch_idx, stats, 32, 24, training=True)
        loss, _ = train_step(net, SGD(net.parameters(), quick_config()), batch, 0)
        assert abs(loss - math.log(2)) < 0.2

    def test_nan_input_aborts(self, small_config, synthetic_dataset):
        net = FallDetectorNet(small_config, ntu_topology())
        joints, velocity, labels = synthetic_dataset.batch([0, 1], synthetic_dataset.norm_stats(), 32, 24)
        joints[0, 0, 0, 0, 0] = np.nan
        with pytest.raises(TrainingAbortedError):
            train_step(net, SGD(net.parameters(), quick_config()), (joints, velocity, labels), 0)

    def test_artifacts(self, tmp_path, small_config, synthetic_dataset):
        split = make_split("xview60", synthetic_dataset.ids)
        result = train(FallDetectorNet(small_config, ntu_topology()), synthetic_dataset, split, quick_config(), tmp_path)

        history = [json.loads(line) for line in (tmp_path / "history.jsonl").read_text().splitlines()]
        assert [record["epoch"] for record in history] == [0, 1]
        assert history[0]["lr"] == 0.05
        assert set(history[0]["validation"]["metrics"]) == {"f1", "sensitivity", "specificity", "auc", "fp_rate", "accuracy"}
        assert json.loads((tmp_path / "config.json").read_text())["train"]["epochs"] == 2
        assert len((tmp_path / "split" / "train.txt").read_text().splitlines()) == len(split.train_ids)

        last = load_checkpoint(tmp_path / "last.ckpt")
        best = load_checkpoint(tmp_path / "best.ckpt")
        assert last.epoch == 1 and best.epoch == result.best_epoch
        assert not result.net.training

    def test_deterministic(self, small_config, synthetic_dataset):
        split = make_split("xview60", synthetic_dataset.ids)
        runs = [
            train(FallDetectorNet(small_config, ntu_topology()), synthetic_dataset, split, quick_config()).history
            for _ in range(2)
        ]
        assert [r["loss"] for r in runs[0]] == [r["loss"] for r in runs[1]]
        assert [r["validation"] for r in runs[0]] == [r["validation"] for r in runs[1]]

    def test_single_class_training_side(self, small_config, synthetic_dataset):
        negatives = tuple(i for i, label in zip(synthetic_dataset.ids, synthetic_dataset.labels) if not label)
        split = DatasetSplit("xview60", negatives[:10], negatives[10:])
        with pytest.raises(ConfigurationError):
            train(FallDetectorNet(small_config, ntu_topology()), synthetic_dataset, split, quick_config())

    def test_joint_count_mismatch(self, tiny_config, path_topology, synthetic_dataset):
        split = make_split("xview60", synthetic_dataset.ids)
        with pytest.raises(ConfigurationError):
            train(FallDetectorNet(tiny_config, path_topology), synthetic_dataset, split, quick_config())
