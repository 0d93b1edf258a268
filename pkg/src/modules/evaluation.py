import argparse
from pathlib import Path

from src import LOGGER
from src.modules.utils import (
    Command,
    ConfigurationError,
    FallDetectorNet,
    RunConfig,
    SkeletonDataset,
    TopologyMismatchError,
    apply_overrides,
    arg,
    atomic_write_json,
    atomic_write_text,
    evaluate,
    load_checkpoint,
    load_run_config,
    make_split,
    profile,
    resolve_topology,
)


def _write_report(out: str, document: dict, text: str) -> None:
    path = Path(out)
    atomic_write_json(path, document)
    atomic_write_text(path.with_suffix(".txt"), text)
    LOGGER.info(f"report written to {path}")


def _run_evaluation(args: argparse.Namespace, mode: str) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    net = checkpoint.net
    echo = checkpoint.config
    trained = echo.get("data", {})
    dataset_name = args.dataset or trained.get("dataset", "ntu60")
    topology = resolve_topology(args.topology, dataset_name) if args.topology or args.dataset else checkpoint.topology
    if topology.joint_count != net.config.joints:
        raise TopologyMismatchError(
            f"checkpoint was trained on {net.config.joints} joints, topology has {topology.joint_count}"
        )
    if not args.data_dir:
        raise ConfigurationError("no data directory: pass --data-dir")

    settings = echo.get("train", {})
    window = args.window or settings.get("window", 250)
    max_frames = max(window, settings.get("max_frames", 300))
    batch_size = args.batch_size or settings.get("batch_size", 64)

    dataset = SkeletonDataset.from_directory(args.data_dir, topology, dataset_name, net.config.bodies)
    split_name = args.split or (trained.get("split") if mode == "standard" else None)
    split = make_split(split_name, dataset.ids) if split_name else None
    report = evaluate(net, dataset, split, checkpoint.norm_stats, mode, window, max_frames, batch_size)

    document = {
        "mode": mode,
        "checkpoint": str(args.checkpoint),
        "data_dir": str(args.data_dir),
        "dataset": dataset_name,
        "split": split_name,
        "window": window,
        "report": report.to_dict(),
        "config": echo,
    }
    _write_report(args.out, document, report.to_text())
    return 0


EVAL_FLAGS = ("data_dir", "split", "out", "window", "batch_size", "topology", "dataset")


@Command.register(
    "eval",
    "Evaluate a checkpoint on the test side of a split (first window of each sample).",
    arg("--checkpoint", required=True, help="checkpoint file written by train"),
    *EVAL_FLAGS,
)
def eval_cmd(args: argparse.Namespace) -> int:
    return _run_evaluation(args, "standard")


@Command.register(
    "transfer-eval",
    "Evaluate a checkpoint on another dataset without any parameter or statistic update.",
    arg("--checkpoint", required=True, help="checkpoint file written by train"),
    *EVAL_FLAGS,
)
def transfer_eval_cmd(args: argparse.Namespace) -> int:
    return _run_evaluation(args, "transfer")


@Command.register(
    "profile",
    "Report parameters, FLOPs, inference time and a training-time estimate.",
    "checkpoint", "config", "out", "window", "hops", "topology", "dataset",
    arg("--runs", type=int, default=10, help="timed single-sample forwards"),
)
def profile_cmd(args: argparse.Namespace) -> int:
    if args.checkpoint:
        checkpoint = load_checkpoint(args.checkpoint)
        net, echo = checkpoint.net, checkpoint.config
    else:
        cfg = load_run_config(args.config) if args.config else RunConfig()
        cfg = apply_overrides(cfg, hops=args.hops, topology=args.topology, dataset=args.dataset)
        topology = resolve_topology(cfg.data.topology, cfg.data.dataset)
        cfg = cfg.with_joints(topology.joint_count)
        net = FallDetectorNet(cfg.model, topology)
        echo = cfg.to_dict()
    window = args.window or echo.get("train", {}).get("window", 250)
    report = profile(net, window=window, runs=args.runs)
    _write_report(args.out, {"profile": report.to_dict(), "config": echo}, report.to_text())
    return 0
