"""Loggers for the avatar.talking package.

Library modules get a logger from :func:`null_logger`. Only the command line entry
point installs a real handler, through :func:`configure_cli_logging`.
"""

import logging
from typing import Final

PACKAGE_LOGGER: Final = "avatar.talking"


def null_logger(name: str) -> logging.Logger:
    """Return the logger for ``name`` with a NullHandler attached.

    Training loops, samplers and resource managers log through this logger. Nothing
    reaches the console unless the host application (or the CLI) configures logging.

    Args:
        name: Logger name, normally the ``__name__`` of the calling module.

    Returns:
        The configured logger.
    """
    logger = logging.getLogger(name)
    logger.addHandler(logging.NullHandler())
    return logger


def configure_cli_logging(verbosity: int = 0) -> logging.Logger:
    """Attach a stream handler to the package logger for command line use.

    Args:
        verbosity: 0 for warnings only, 1 for info, 2 or more for debug.

    Returns:
        The package root logger.
    """
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.setLevel(level)
    if not any(isinstance(h, logging.StreamHandler) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        logger.addHandler(handler)
    return logger
