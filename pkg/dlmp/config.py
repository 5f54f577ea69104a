"""
Configuration loader for the LMP toolkit.
Loads default config and merges with capacity-case settings.
"""

import os
import re
import yaml
from pathlib import Path
from typing import Dict, Any

CASES = ('current', 'future')


def get_config_path() -> Path:
    """Get the path to the config directory."""
    # Check for environment variable first
    if 'DLMP_CONFIG_PATH' in os.environ:
        return Path(os.environ['DLMP_CONFIG_PATH'])

    # Default to config directory relative to project root
    return Path(__file__).parent.parent / 'config'


def load_yaml(filepath: Path) -> Dict[str, Any]:
    """Load a YAML file and return as dictionary."""
    if not filepath.exists():
        return {}

    with open(filepath, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f) or {}


def deep_merge(base: Dict, override: Dict) -> Dict:
    """
    Deep merge two dictionaries.
    Values in override take precedence over base.
    """
    result = base.copy()

    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value

    return result


def resolve_env_vars(config: Dict) -> Dict:
    """
    Resolve environment variable placeholders in config.
    Supports ${VAR_NAME} and ${VAR_NAME:-default} syntax.
    """
    pattern = re.compile(r'\$\{([^}:]+)(?::-([^}]*))?\}')

    def resolve_value(value):
        if isinstance(value, str):
            whole = pattern.fullmatch(value)
            if whole:
                # A lone placeholder keeps YAML typing of its default
                name, default = whole.groups()
                raw = os.environ.get(name, default if default is not None else '')
                return yaml.safe_load(raw) if raw != '' else None
            return pattern.sub(lambda m: os.environ.get(m.group(1), m.group(2) or ''), value)
        elif isinstance(value, dict):
            return {k: resolve_value(v) for k, v in value.items()}
        elif isinstance(value, list):
            return [resolve_value(item) for item in value]
        return value

    return resolve_value(config)


def load_config(case: str = 'current') -> Dict[str, Any]:
    """
    Load configuration for a capacity case.

    Args:
        case: Capacity case name, 'current' or 'future'

    Returns:
        Merged configuration dictionary
    """
    config_path = get_config_path()

    # Load default config
    default_config = load_yaml(config_path / 'default.yaml')

    # Load case-specific config
    case_config = load_yaml(config_path / 'cases' / f'{case.lower()}.yaml')

    # Merge configs (case overrides default)
    merged = deep_merge(default_config, case_config)

    # Resolve environment variables
    resolved = resolve_env_vars(merged)
    resolved['case'] = case.lower()

    return resolved


def get_output_path(config: Dict, override: str = None) -> Path:
    """Get the run output directory from config or an explicit override."""
    out = override or config.get('output', {}).get('path', 'runs')

    # If relative path, make it relative to the working directory
    return Path(out)
