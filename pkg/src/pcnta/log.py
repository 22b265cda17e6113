"""
Logging setup shared by the CLI and tools.
Library modules only call logging.getLogger(__name__); handlers are
installed here, once, by the entry point.
"""

import logging
import sys

LOG_FORMAT = "[pcnta] %(message)s"
DEBUG_FORMAT = "[pcnta] %(levelname)s %(name)s: %(message)s"


def configure_logging(verbose: bool = False) -> None:
    """
    Route pcnta loggers to stderr.

    Args:
        verbose: DEBUG level with logger names when set, INFO otherwise
    """
    root = logging.getLogger("pcnta")
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(DEBUG_FORMAT if verbose else LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False
