import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src import LOGGER
from src.modules.utils._checkpoint import save_checkpoint
from src.modules.utils._data import DatasetSplit
from src.modules.utils._dataset import SkeletonDataset
from src.modules.utils._errors import ConfigurationError, ParameterError, TrainingAbortedError
from src.modules.utils._files import atomic_write_json, atomic_write_text
from src.modules.utils._metrics import MetricsReport, evaluate_indices
from src.modules.utils._model import FallDetectorNet
from src.modules.utils._ops import softmax_cross_entropy
from src.modules.utils._tensor import Parameter


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr0: float = 0.05
    lr_decay: float = 0.9
    decay_every: int = 10
    momentum: float = 0.9
    weight_decay: float = 0.0005
    seed: int = 0
    window: int = 250
    max_frames: int = 300
    balanced: bool = True

    def __post_init__(self) -> None:
        for name in ("epochs", "batch_size", "lr0", "lr_decay", "decay_every", "window", "max_frames"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"train.{name} must be positive, got {getattr(self, name)}")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ParameterError("train.momentum and train.weight_decay must be >= 0")
        if self.window > self.max_frames:
            raise ParameterError(f"train.window {self.window} exceeds train.max_frames {self.max_frames}")
        if self.balanced and self.batch_size < 2:
            raise ParameterError("balanced batches need batch_size >= 2")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "TrainConfig":
        return cls(**payload)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Step schedule: ``lr0`` multiplied by ``lr_decay`` once every ``decay_every`` epochs."""
    if not 0 <= epoch < cfg.epochs:
        raise ParameterError(f"epoch {epoch} outside 0..{cfg.epochs - 1}")
    return cfg.lr0 * cfg.lr_decay ** (epoch // cfg.decay_every)


def sgd_step(
    params: Sequence[Parameter],
    cfg: TrainConfig,
    epoch: int,
    velocity: Dict[str, np.ndarray],
    lr: Optional[float] = None,
) -> float:
    """
    One momentum SGD update with L2 weight decay on every parameter:
    ``v = m * v + (g + wd * p)``, ``p = p - lr * v``. Gradients are cleared.

    ``velocity`` holds the momentum buffers keyed by parameter name and is
    updated in place. Returns the learning rate used.
    """
    for param in params:
        if param.grad is not None and not np.isfinite(param.grad).all():
            raise TrainingAbortedError(f"non-finite gradient in {param.name or 'unnamed parameter'} at epoch {epoch}")
    lr = lr_at(epoch, cfg) if lr is None else lr
    for index, param in enumerate(params):
        key = param.name or f"#{index}"
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        step = grad + cfg.weight_decay * param.data
        if key in velocity:
            velocity[key] *= cfg.momentum
            velocity[key] += step
        else:
            velocity[key] = step.copy()
        param.data -= lr * velocity[key]
        param.zero_grad()
    return lr


class SGD:
    def __init__(self, params: Iterable[Parameter], cfg: TrainConfig) -> None:
        self.params: List[Parameter] = list(params)
        self.cfg = cfg
        self.velocity: Dict[str, np.ndarray] = {}

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self, epoch: int) -> float:
        return sgd_step(self.params, self.cfg, epoch, self.velocity)


class BalancedBatchSampler:
    """
    Batches of ``batch_size // 2`` positives and the rest negatives.

    Negatives are drawn without replacement and reshuffled once exhausted;
    positives are cycled the same way, so an epoch covers every negative once
    and every positive at least once.
    """

    def __init__(self, labels: Sequence[int], batch_size: int = 64, seed: int = 0) -> None:
        labels = np.asarray(labels, dtype=np.int64)
        self.positives = np.flatnonzero(labels == 1)
        self.negatives = np.flatnonzero(labels == 0)
        if self.positives.size == 0 or self.negatives.size == 0:
            raise ConfigurationError(
                f"balanced batches need both classes, got {self.positives.size} positive / {self.negatives.size} negative"
            )
        self.batch_size = batch_size
        self.n_pos = batch_size // 2
        self.n_neg = batch_size - self.n_pos
        self.seed = seed

    def __len__(self) -> int:
        return max(-(-self.negatives.size // self.n_neg), -(-self.positives.size // self.n_pos))

    @staticmethod
    def _stream(pool: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
        rounds = -(-count // pool.size)
        return np.concatenate([rng.permutation(pool) for _ in range(rounds)])[:count]

    def batches(self, epoch: int) -> List[np.ndarray]:
        rng = np.random.default_rng([self.seed, epoch])
        n = len(self)
        positives = self._stream(self.positives, n * self.n_pos, rng)
        negatives = self._stream(self.negatives, n * self.n_neg, rng)
        out = []
        for b in range(n):
            batch = np.concatenate([
                positives[b * self.n_pos:(b + 1) * self.n_pos],
                negatives[b * self.n_neg:(b + 1) * self.n_neg],
            ])
            out.append(rng.permutation(batch))
        return out


class ShuffledBatchSampler:
    """Plain shuffled batches, used when ``balanced`` is off."""

    def __init__(self, labels: Sequence[int], batch_size: int = 64, seed: int = 0) -> None:
        self.size = len(labels)
        self.batch_size = batch_size
        self.seed = seed

    def __len__(self) -> int:
        return -(-self.size // self.batch_size)

    def batches(self, epoch: int) -> List[np.ndarray]:
        order = np.random.default_rng([self.seed, epoch]).permutation(self.size)
        return [order[i:i + self.batch_size] for i in range(0, self.size, self.batch_size)]


@dataclass
class TrainResult:
    net: FallDetectorNet
    history: List[Dict[str, Any]] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_report: Optional[MetricsReport] = None


def train_step(
    net: FallDetectorNet,
    optimizer: SGD,
    batch: Tuple[np.ndarray, np.ndarray, np.ndarray],
    epoch: int,
) -> Tuple[float, int]:
    """Forward, cross-entropy, backward and one optimizer step. Returns (loss, correct)."""
    joints, velocity, labels = batch
    logits = net(joints, velocity)
    loss = softmax_cross_entropy(logits, labels)
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingAbortedError(f"loss became {value} at epoch {epoch}")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step(epoch)
    correct = int((logits.data.argmax(axis=1) == labels).sum())
    return value, correct


def train(
    net: FallDetectorNet,
    dataset: SkeletonDataset,
    split: DatasetSplit,
    cfg: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    run_config: Optional[Dict[str, Any]] = None,
) -> TrainResult:
    """
    Train on ``split.train_ids`` and validate on ``split.test_ids`` after
    every epoch. With ``out_dir`` set, ``last.ckpt``, ``best.ckpt`` (best
    validation F1), ``history.jsonl``, ``config.json`` and the split id
    lists are written there as training progresses.
    """
    if dataset.joint_count != net.config.joints:
        raise ConfigurationError(f"dataset has {dataset.joint_count} joints, network expects {net.config.joints}")
    train_idx = dataset.indices(split.train_ids)
    test_idx = dataset.indices(split.test_ids)
    if not train_idx:
        raise ConfigurationError(f"split {split.name} has no training samples in this dataset")
    train_labels = dataset.labels[train_idx]
    sampler_cls = BalancedBatchSampler if cfg.balanced else ShuffledBatchSampler
    sampler = sampler_cls(train_labels, cfg.batch_size, cfg.seed)
    stats = dataset.norm_stats(train_idx)
    optimizer = SGD([param for _, param in net.named_parameters()], cfg)
    echo = run_config or {"train": cfg.to_dict(), "model": net.config.to_dict()}

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_json(out / "config.json", echo)
        split.export(out / "split")

    LOGGER.info(
        f"training on {len(train_idx)} samples ({int(train_labels.sum())} falls), "
        f"validating on {len(test_idx)}, {len(sampler)} batches per epoch"
    )
    result = TrainResult(net=net)
    best_f1 = -1.0
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        lr = lr_at(epoch, cfg)
        net.train()
        losses, correct, seen = [], 0, 0
        for positions in sampler.batches(epoch):
            indices = [train_idx[p] for p in positions]
            batch = dataset.batch(indices, stats, cfg.max_frames, cfg.window, cfg.seed, epoch, training=True)
            loss, hits = train_step(net, optimizer, batch, epoch)
            losses.append(loss)
            correct += hits
            seen += len(indices)

        record: Dict[str, Any] = {
            "epoch": epoch,
            "lr": lr,
            "loss": float(np.mean(losses)),
            "train_accuracy": correct / seen,
            "seconds": None,
            "validation": None,
        }
        report = None
        if test_idx:
            report = evaluate_indices(net, dataset, test_idx, stats, cfg.window, cfg.max_frames, cfg.batch_size)
            record["validation"] = report.to_dict()
        record["seconds"] = round(time.perf_counter() - started, 3)
        result.history.append(record)

        f1 = report.f1 if report is not None and report.f1 is not None else -1.0
        improved = result.best_epoch is None or f1 > best_f1
        if improved:
            best_f1, result.best_epoch, result.best_report = f1, epoch, report
        if out is not None:
            save_checkpoint(out / "last.ckpt", net, stats, echo, epoch)
            if improved:
                save_checkpoint(out / "best.ckpt", net, stats, echo, epoch)
            atomic_write_text(
                out / "history.jsonl", "".join(json.dumps(r, sort_keys=True) + "\n" for r in result.history)
            )

        LOGGER.info(
            f"epoch {epoch + 1}/{cfg.epochs} lr={lr:.5f} loss={record['loss']:.4f} "
            f"train_acc={record['train_accuracy']:.4f}"
            + (f" val_f1={report.format('f1')} val_acc={report.format('accuracy')}" if report else "")
        )
    net.eval()
    return result
