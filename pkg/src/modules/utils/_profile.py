import time
from dataclasses import asdict, dataclass
from typing import Any, Dict

import numpy as np

from src import LOGGER
from src.modules.utils._errors import ParameterError
from src.modules.utils._model import FallDetectorNet, count_params, estimate_flops
from src.modules.utils._train import SGD, TrainConfig, train_step

XSUB60_TRAIN_SAMPLES = 40091


@dataclass(frozen=True)
class ProfileReport:
    params: int
    flops: int
    mean_inference_ms: float
    train_min_per_epoch_estimate: float
    runs: int
    window: int
    epoch_samples: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_text(self) -> str:
        return (
            f"parameters:          {self.params / 1e6:.2f}M ({self.params})\n"
            f"FLOPs:               {self.flops / 1e9:.2f}G\n"
            f"inference:           {self.mean_inference_ms:.2f} ms (mean of {self.runs})\n"
            f"training (estimate): {self.train_min_per_epoch_estimate:.2f} min/epoch "
            f"for {self.epoch_samples} samples\n"
        )


def _random_input(net: FallDetectorNet, batch: int, window: int, rng: np.random.Generator):
    shape = (batch, net.config.in_channels, window, net.config.joints, net.config.bodies)
    joints = rng.standard_normal(shape)
    velocity = np.zeros_like(joints)
    velocity[:, :, 1:] = joints[:, :, 1:] - joints[:, :, :-1]
    return joints, velocity


def profile(
    net: FallDetectorNet,
    window: int = 250,
    runs: int = 10,
    epoch_samples: int = XSUB60_TRAIN_SAMPLES,
    train_batch: int = 2,
    seed: int = 0,
) -> ProfileReport:
    """
    Wall-clock single-sample inference (one warm-up forward excluded) plus a
    training-time estimate scaled from one measured optimizer step.

    The network is restored to its exact state afterwards.
    """
    if runs < 1 or window < 1 or train_batch < 1:
        raise ParameterError("runs, window and train_batch must be positive")
    rng = np.random.default_rng(seed)
    params = {name: param.data.copy() for name, param in net.named_parameters()}
    buffers = {name: array.copy() for name, array in net.named_buffers()}
    was_training = net.training

    net.eval()
    joints, velocity = _random_input(net, 1, window, rng)
    net(joints, velocity)
    timings = []
    for _ in range(runs):
        started = time.perf_counter()
        net(joints, velocity)
        timings.append(time.perf_counter() - started)

    net.train()
    joints, velocity = _random_input(net, train_batch, window, rng)
    labels = np.arange(train_batch) % 2
    optimizer = SGD(net.parameters(), TrainConfig(window=window, max_frames=max(window, 300)))
    started = time.perf_counter()
    train_step(net, optimizer, (joints, velocity, labels), epoch=0)
    per_sample = (time.perf_counter() - started) / train_batch

    for name, param in net.named_parameters():
        param.data[...] = params[name]
        param.zero_grad()
    for name, array in net.named_buffers():
        array[...] = buffers[name]
    net.train(was_training)

    report = ProfileReport(
        params=count_params(net),
        flops=estimate_flops(net, window),
        mean_inference_ms=1000.0 * float(np.mean(timings)),
        train_min_per_epoch_estimate=per_sample * epoch_samples / 60.0,
        runs=runs,
        window=window,
        epoch_samples=epoch_samples,
    )
    LOGGER.info(f"profiled: {report.params} params, {report.flops / 1e9:.2f} GFLOPs, {report.mean_inference_ms:.2f} ms")
    return report
