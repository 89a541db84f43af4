"""
Configuration loader for the Ricci flow toolkit.
Loads and validates YAML configuration files.
"""

import copy
import logging
import yaml
from pathlib import Path
from typing import Dict, Any


class ConfigError(Exception):
    """Custom exception for configuration errors"""
    pass


DEFAULT_CONFIG: Dict[str, Any] = {
    'flow': {
        'step_length': 0.5,
        'threshold': 1e-6,
        'max_iterations': 200,
        'method': 'newton',
        'surgery': 'off',
        'backtracking': True,
        'max_halvings': 20,
        'gradient_fallback': True,
        'hessian_route': 'analytic',
    },
    'solver': {
        'tol': 1e-10,
        'max_iter': None,
    },
    'oracle': {
        'step': 1e-6,
        'rel_tol': 1e-5,
        'samples': 50,
        'seed': 0,
    },
    'audit': {
        'gauss_bonnet_tol': 1e-9,
        'flat_tol': 1e-4,
        'histogram_bins': 20,
    },
    'logging': {
        'level': 'INFO',
        'file': '',
    },
}

REQUIRED_FIELDS = {
    'flow': ['step_length', 'threshold', 'max_iterations', 'method'],
    'solver': ['tol'],
    'oracle': ['step', 'rel_tol', 'samples'],
    'audit': ['gauss_bonnet_tol', 'flat_tol'],
    'logging': ['level'],
}


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def default_config() -> Dict[str, Any]:
    return copy.deepcopy(DEFAULT_CONFIG)


def validate_config(config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Validate sections, required fields, types and ranges.

    Raises:
        ConfigError: on the first problem found
    """
    if not isinstance(config, dict):
        raise ConfigError("Configuration must be a mapping")

    # Validate required sections
    for section in REQUIRED_FIELDS:
        if section not in config or not isinstance(config[section], dict):
            raise ConfigError(f"Missing required configuration section: {section}")

    # Validate required fields in each section
    for section, fields in REQUIRED_FIELDS.items():
        for field in fields:
            if field not in config[section]:
                raise ConfigError(f"Missing required field '{field}' in section '{section}'")

    # Validate data types and ranges
    flow = config['flow']
    if not _is_number(flow['step_length']) or not (0 < flow['step_length'] <= 1):
        raise ConfigError("flow.step_length must be a number in (0, 1]")
    if not _is_number(flow['threshold']) or flow['threshold'] <= 0:
        raise ConfigError("flow.threshold must be a positive number")
    if not isinstance(flow['max_iterations'], int) or flow['max_iterations'] < 1:
        raise ConfigError("flow.max_iterations must be a positive integer")
    if flow['method'] not in ('newton', 'gradient'):
        raise ConfigError("flow.method must be 'newton' or 'gradient'")
    if flow.get('surgery', 'off') not in ('off', 'delaunay_e2'):
        raise ConfigError("flow.surgery must be 'off' or 'delaunay_e2'")

    solver = config['solver']
    if not _is_number(solver['tol']) or solver['tol'] <= 0:
        raise ConfigError("solver.tol must be a positive number")
    if solver.get('max_iter') is not None and (not isinstance(solver['max_iter'], int) or solver['max_iter'] < 1):
        raise ConfigError("solver.max_iter must be a positive integer or null")

    oracle = config['oracle']
    if not _is_number(oracle['step']) or oracle['step'] <= 0:
        raise ConfigError("oracle.step must be a positive number")
    if not _is_number(oracle['rel_tol']) or oracle['rel_tol'] <= 0:
        raise ConfigError("oracle.rel_tol must be a positive number")
    if not isinstance(oracle['samples'], int) or oracle['samples'] < 1:
        raise ConfigError("oracle.samples must be a positive integer")

    audit = config['audit']
    for field in ('gauss_bonnet_tol', 'flat_tol'):
        if not _is_number(audit[field]) or audit[field] <= 0:
            raise ConfigError(f"audit.{field} must be a positive number")

    level = config['logging']['level']
    if not isinstance(level, str) or not isinstance(logging.getLevelName(level.upper()), int):
        raise ConfigError(f"logging.level must be a logging level name, got {level!r}")

    return config


def load_config(config_path: str) -> Dict[str, Any]:
    """
    Load and validate configuration from YAML file.

    Args:
        config_path: Path to the configuration YAML file

    Returns:
        Dictionary containing configuration values, with defaults filled in
        for optional fields

    Raises:
        ConfigError: If config file doesn't exist or is invalid
    """
    config_file = Path(config_path)

    if not config_file.exists():
        raise ConfigError(f"Configuration file not found: {config_path}")

    try:
        with open(config_file, 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in configuration file: {e}")
    except (IOError, PermissionError) as e:
        raise ConfigError(f"Error reading configuration file: {e}")

    validate_config(config)

    merged = default_config()
    for section, values in config.items():
        if isinstance(values, dict) and section in merged:
            merged[section].update(values)
        else:
            merged[section] = values
    return merged
