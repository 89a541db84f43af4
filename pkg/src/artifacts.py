"""JSON documents, target files and iteration logs written by the flow and CLI"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np


logger = logging.getLogger(__name__)

ITERATION_FIELDS = ['iteration', 'max_error', 'step_used', 'flips']


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.floating):
        return _plain(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def dumps(payload: Dict[str, Any]) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats, NaN as null"""
    return json.dumps(_plain(payload), ensure_ascii=False, indent=2, sort_keys=True)


def write_json(path: str, payload: Dict[str, Any]):
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps(payload) + "\n", encoding='utf-8')
    logger.info(f"Wrote {out}")


def read_json(path: str) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def load_target(path: str) -> np.ndarray:
    """
    Per-vertex target curvature from a JSON array.

    Raises:
        ValueError: unreadable file or not a flat numeric array
    """
    try:
        data = read_json(path)
    except (IOError, json.JSONDecodeError) as e:
        raise ValueError(f"Cannot read target file {path}: {e}")
    if not isinstance(data, list) or not all(isinstance(x, (int, float)) for x in data):
        raise ValueError(f"Target file {path} must hold a JSON array of numbers")
    return np.asarray(data, dtype=float)


def write_iteration_log(path: str, rows: Sequence[Dict[str, Any]]):
    """CSV with columns iteration, max_error, step_used, flips"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=ITERATION_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _plain(row.get(k)) for k in ITERATION_FIELDS})


def read_iteration_log(path: str) -> List[Dict[str, str]]:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))
