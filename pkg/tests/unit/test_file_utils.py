import math
from enum import Enum

import numpy as np

from nikolskii_lb.utils.file_utils import FileUtils, to_jsonable


class Color(Enum):
    RED = "red"


def test_to_jsonable_converts_special_values():
    payload = {"q": math.inf, "low": -math.inf, "bad": math.nan, "color": Color.RED,
               "count": np.int64(3), "arr": np.array([1.0, 2.0]), 1: (np.float64(0.5),)}
    assert to_jsonable(payload) == {"q": "inf", "low": "-inf", "bad": "nan", "color": "red",
                                    "count": 3, "arr": [1.0, 2.0], "1": [0.5]}
    assert type(to_jsonable(np.int64(3))) is int


def test_config_hash_ignores_key_order():
    first = FileUtils.config_hash({"a": 1, "b": [1, 2]})
    second = FileUtils.config_hash({"b": [1, 2], "a": 1})
    assert first == second
    assert len(first) == 12
    assert FileUtils.config_hash({"a": 2, "b": [1, 2]}) != first
    assert len(FileUtils.config_hash({"a": 1}, length=8)) == 8


def test_json_is_sorted_and_stable(tmp_path):
    path = tmp_path / "out" / "report.json"
    FileUtils.write_json(str(path), {"b": 1, "a": math.inf})
    text = FileUtils.read_file(str(path))
    assert text == '{\n  "a": "inf",\n  "b": 1\n}\n'
    assert text == FileUtils.dumps_json({"a": math.inf, "b": 1})


def test_csv_keeps_full_float_precision(tmp_path):
    path = tmp_path / "table.csv"
    FileUtils.write_csv(str(path), ["n", "value", "q"], [[10, 0.1 + 0.2, math.inf]])
    lines = FileUtils.read_file(str(path)).splitlines()
    assert lines == ["n,value,q", "10,0.30000000000000004,inf"]


def test_ensure_dir_creates_parents(tmp_path):
    path = FileUtils.ensure_dir(str(tmp_path / "x" / "y"))
    assert path.is_dir()
