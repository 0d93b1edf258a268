import argparse

from src import LOGGER
from src.modules.utils import (
    Command,
    ConfigurationError,
    FallDetectorNet,
    RunConfig,
    SkeletonDataset,
    apply_overrides,
    load_run_config,
    make_split,
    resolve_topology,
    train,
)


def effective_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    return apply_overrides(
        cfg,
        **{name: getattr(args, name, None) for name in (
            "seed", "epochs", "batch_size", "lr", "window", "hops", "data_dir", "split", "topology", "dataset",
        )},
    )


@Command.register(
    "train",
    "Train a fall detector and write checkpoints, history and split lists to --out.",
    "config", "data_dir", "split", "out", "seed", "epochs", "batch_size", "lr", "window", "hops", "topology", "dataset",
)
def train_cmd(args: argparse.Namespace) -> int:
    cfg = effective_config(args)
    if not cfg.data.data_dir:
        raise ConfigurationError("no data directory: pass --data-dir or set data.data_dir")
    topology = resolve_topology(cfg.data.topology, cfg.data.dataset)
    cfg = cfg.with_joints(topology.joint_count)

    dataset = SkeletonDataset.from_directory(cfg.data.data_dir, topology, cfg.data.dataset, cfg.model.bodies)
    split = make_split(cfg.data.split, dataset.ids)
    net = FallDetectorNet(cfg.model, topology)
    result = train(net, dataset, split, cfg.train, args.out, cfg.to_dict())
    LOGGER.info(f"best epoch {None if result.best_epoch is None else result.best_epoch + 1}, artifacts in {args.out}")
    return 0
