# Copyright (c) 2024 SceneKit Contributors
# Licensed under the MIT License

"""Process-wide logging setup.

Library modules only call ``logging.getLogger(__name__)``; entry points call
:func:`configure_logging` once to route every record through structlog's
formatter (console or JSON lines).
"""

import logging
import sys

import structlog

from libs.common.config import MonitoringSettings

_configured = False


def configure_logging(settings: MonitoringSettings, force: bool = False) -> None:
    """Install a structlog-rendered handler on the root logger"""

    global _configured
    if _configured and not force:
        return

    shared_processors: list[structlog.types.Processor] = [
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
    ]

    if settings.format == "json":
        renderer: structlog.types.Processor = structlog.processors.JSONRenderer(sort_keys=True)
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=False)

    formatter = structlog.stdlib.ProcessorFormatter(
        foreign_pre_chain=shared_processors,
        processors=[
            structlog.stdlib.ProcessorFormatter.remove_processors_meta,
            renderer,
        ],
    )

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.file:
        handlers.append(logging.FileHandler(settings.file, encoding="utf-8"))

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.setLevel(settings.level.upper())

    _configured = True
