import argparse
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Tuple

Handler = Callable[[argparse.Namespace], int]
Argument = Tuple[Tuple[str, ...], Dict[str, Any]]


def arg(*flags: str, **kwargs: Any) -> Argument:
    """Deferred ``add_argument`` call."""
    return flags, kwargs


# Flags shared by several subcommands, declared once so help text stays consistent.
SHARED: Dict[str, Argument] = {
    "config": arg("--config", help="run configuration (JSON, schema_version 1)"),
    "data_dir": arg("--data-dir", help="directory of .skeleton files"),
    "split": arg("--split", help="evaluation protocol: xsub60, xview60, xsub120, xset120, uwa_val3, uwa_val4"),
    "checkpoint": arg("--checkpoint", help="checkpoint file written by train"),
    "out": arg("--out", required=True, help="output file or directory"),
    "seed": arg("--seed", type=int, help="random seed"),
    "epochs": arg("--epochs", type=int, help="training epochs"),
    "batch_size": arg("--batch-size", type=int, help="samples per batch"),
    "lr": arg("--lr", type=float, help="initial learning rate"),
    "window": arg("--window", type=int, help="frames per input window"),
    "hops": arg("--hops", type=int, help="hop limit of the adjacency"),
    "topology": arg("--topology", help="skeleton topology edge-list file"),
    "dataset": arg("--dataset", help="label space of the data: ntu60, ntu120, uwa3d"),
}


@dataclass
class Command:
    name: str
    handler: Handler
    help: str
    arguments: List[Argument] = field(default_factory=list)

    registry = {}  # type: Dict[str, Command]

    @classmethod
    def register(cls, name: str, help: str, *arguments) -> Callable[[Handler], Handler]:
        """
        Register a subcommand handler.

        ``arguments`` mixes names from :data:`SHARED` and explicit :func:`arg`
        tuples. The handler receives the parsed namespace and returns the exit code.
        """

        def decorator(func: Handler) -> Handler:
            resolved = [SHARED[item] if isinstance(item, str) else item for item in arguments]
            cls.registry[name] = cls(name=name, handler=func, help=help, arguments=resolved)
            return func

        return decorator

    def attach(self, subparsers) -> None:
        parser = subparsers.add_parser(self.name, help=self.help, description=self.help)
        for flags, kwargs in self.arguments:
            parser.add_argument(*flags, **kwargs)
        parser.set_defaults(handler=self.handler)
