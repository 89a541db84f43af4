import pytest
import json
import tempfile
import numpy as np
from pathlib import Path
from src.artifacts import dumps, load_target, read_iteration_log, read_json, write_iteration_log, write_json


def test_dumps_converts_numpy_and_nan():
    """numpy scalars and arrays become plain JSON; non-finite floats become null"""
    payload = {'b': np.float64(0.1), 'a': np.arange(3), 'c': float('nan'), 'd': [np.int64(2), np.inf]}
    text = dumps(payload)
    data = json.loads(text)
    assert data == {'a': [0, 1, 2], 'b': 0.1, 'c': None, 'd': [2, None]}
    assert text.index('"a"') < text.index('"b"')


def test_float_round_trip():
    """Shortest repr floats survive exactly"""
    values = np.random.default_rng(0).normal(size=20)
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "nested" / "values.json"
        write_json(str(path), {'values': values})
        assert read_json(str(path))['values'] == values.tolist()


def test_load_target():
    """JSON arrays of numbers only"""
    with tempfile.TemporaryDirectory() as tmpdir:
        good = Path(tmpdir) / "target.json"
        good.write_text("[0, 1.5, -2]")
        assert np.array_equal(load_target(str(good)), [0.0, 1.5, -2.0])

        bad = Path(tmpdir) / "bad.json"
        bad.write_text('{"K": [1, 2]}')
        with pytest.raises(ValueError, match="JSON array"):
            load_target(str(bad))

        broken = Path(tmpdir) / "broken.json"
        broken.write_text("[1, 2")
        with pytest.raises(ValueError, match="Cannot read"):
            load_target(str(broken))

        with pytest.raises(ValueError):
            load_target(str(Path(tmpdir) / "missing.json"))


def test_iteration_log():
    """Header plus one row per entry, extra keys ignored"""
    rows = [
        {'iteration': 0, 'max_error': 0.2, 'step_used': 0.0, 'flips': 0},
        {'iteration': 1, 'max_error': np.float64(0.1), 'step_used': 0.5, 'flips': 2, 'note': 'x'},
    ]
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "log.csv"
        write_iteration_log(str(path), rows)
        assert path.read_text().splitlines()[0] == "iteration,max_error,step_used,flips"
        loaded = read_iteration_log(str(path))
        assert len(loaded) == 2
        assert loaded[1] == {'iteration': '1', 'max_error': '0.1', 'step_used': '0.5', 'flips': '2'}
