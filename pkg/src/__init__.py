import argparse
import importlib
import logging
import pkgutil
import sys
from datetime import datetime
from typing import List, Optional

from src import config

logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL, logging.INFO),
    format="[%(asctime)s - %(levelname)s] - %(name)s - %(filename)s:%(lineno)d - %(message)s",
    datefmt="%d-%b-%y %H:%M:%S",
    handlers=[logging.StreamHandler()],
)


LOGGER = logging.getLogger("SkelFall")

__version__ = "0.1.0"
StartTime = datetime.now()


class SkelFall:
    """Command-line application. Subcommands live in the plugin modules of ``src.modules``."""

    def __init__(self, plugins: str = "src.modules") -> None:
        self.plugins = plugins
        self._loaded = False

    def load_plugins(self) -> None:
        if self._loaded:
            return
        package = importlib.import_module(self.plugins)
        for module in pkgutil.iter_modules(package.__path__):
            if not module.ispkg and not module.name.startswith("_"):
                importlib.import_module(f"{self.plugins}.{module.name}")
        self._loaded = True

    def build_parser(self) -> argparse.ArgumentParser:
        from src.modules.utils import Command

        self.load_plugins()
        parser = argparse.ArgumentParser(
            prog="skelfall", description="Skeleton-based fall detection with a spatio-temporal graph network."
        )
        parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
        for command in Command.registry.values():
            command.attach(subparsers)
        return parser

    def run(self, argv: Optional[List[str]] = None) -> int:
        from src.modules.utils import SkelFallError

        args = self.build_parser().parse_args(argv)
        try:
            code = args.handler(args)
        except SkelFallError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return exc.code
        except KeyboardInterrupt:
            print("error: Interrupted: stopped by user", file=sys.stderr)
            return 130
        except Exception as exc:
            LOGGER.debug("unhandled error", exc_info=True)
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        LOGGER.debug(f"{args.command} finished in {datetime.now() - StartTime}")
        return code


app: SkelFall = SkelFall()
