import argparse

import numpy as np

from src.modules.utils import (
    Command,
    SyntheticSpec,
    arg,
    binarize_label,
    parse_skeleton_file,
    resolve_topology,
    write_synthetic_corpus,
)


@Command.register(
    "synth",
    "Write a deterministic synthetic corpus in the NTU skeleton format.",
    "out",
    arg("--seed", type=int, default=0, help="generator seed"),
    arg("--n-fall", type=int, default=SyntheticSpec.n_fall, help="number of fall samples"),
    arg("--n-other", type=int, default=SyntheticSpec.n_other, help="number of non-fall samples"),
    arg("--noise", type=float, default=SyntheticSpec.noise_std, help="joint noise standard deviation in meters"),
)
def synth_cmd(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(n_fall=args.n_fall, n_other=args.n_other, noise_std=args.noise, seed=args.seed)
    write_synthetic_corpus(spec, args.out)
    return 0


@Command.register(
    "inspect",
    "Print a summary of one .skeleton file.",
    arg("path", help="skeleton file"),
    "topology",
    "dataset",
)
def inspect_cmd(args: argparse.Namespace) -> int:
    dataset = args.dataset or "ntu60"
    topology = resolve_topology(args.topology, dataset)
    sample = parse_skeleton_file(args.path, topology.joint_count)
    data = sample.data
    present = np.any(data != 0, axis=(0, 2))
    lines = [
        f"sample:      {sample.id}",
        f"setup:       {sample.setup_id}",
        f"camera:      {sample.camera_id}",
        f"subject:     {sample.subject_id}",
        f"action:      {sample.action_class} (fall label {binarize_label(sample.action_class, dataset)})",
        f"frames:      {data.shape[1]}",
        f"joints:      {data.shape[2]}",
        f"bodies:      {len(sample.body_ids)} kept",
    ]
    for m, body in enumerate(sample.body_ids):
        lines.append(f"  body {m} ({body}): present in {int(present[:, m].sum())} frames")
    if present.any():
        values = data.transpose(0, 1, 3, 2)[:, present]
        for axis, name in enumerate("xyz"):
            lines.append(f"{name} range:     {values[axis].min():.3f} .. {values[axis].max():.3f} m")
    print("\n".join(lines))
    return 0
