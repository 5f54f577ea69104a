"""
Distribution LMP Volatility Toolkit
Nodal prices across a transmission and distribution network, half hour by
half hour, with the statistics that compare them across voltage levels.

init_app() follows the application-factory pattern:
- One YAML configuration per capacity case
- Logging configured once, from the config
- Overrides for testing
"""

import logging
import os
from typing import Optional

from dotenv import load_dotenv

__version__ = '1.0.0'

_LOGGING_CONFIGURED = False


def init_app(case: Optional[str] = None, config_override: Optional[dict] = None) -> dict:
    """
    Load configuration and set up logging.

    Args:
        case: Capacity case ('current' or 'future'). If None, uses DLMP_CASE env var or 'current'
        config_override: Optional dict deep-merged over the loaded config (useful for testing)

    Returns:
        Configuration dictionary
    """
    load_dotenv()

    case = case or os.environ.get('DLMP_CASE', 'current')

    from dlmp.config import deep_merge, load_config
    config = load_config(case)

    if config_override:
        config = deep_merge(config, config_override)

    _configure_logging(config.get('logging', {}))
    return config


def _configure_logging(settings: dict):
    """Configure the root logger once per process."""
    global _LOGGING_CONFIGURED
    level = str(settings.get('level') or 'INFO').upper()
    if _LOGGING_CONFIGURED:
        logging.getLogger().setLevel(level)
        return
    logging.basicConfig(
        level=level,
        format=settings.get('format', '%(asctime)s %(levelname)s %(name)s: %(message)s'),
    )
    _LOGGING_CONFIGURED = True
