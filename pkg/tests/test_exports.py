import json
from pathlib import Path

import numpy as np
import pytest

from timecoding_qkd import __version__
from timecoding_qkd.qkd.events import Origin
from timecoding_qkd.qkd.exports import csv_text
from timecoding_qkd.qkd.exports import format_cell
from timecoding_qkd.qkd.exports import json_text
from timecoding_qkd.qkd.exports import metadata
from timecoding_qkd.qkd.exports import read_json_data
from timecoding_qkd.qkd.exports import to_plain
from timecoding_qkd.qkd.exports import write_csv
from timecoding_qkd.qkd.exports import write_json
from timecoding_qkd.qkd.security import AttackKind


@pytest.mark.parametrize(
    ("value", "expected"),
    [
        (None, ""),
        (True, "true"),
        (np.bool_(False), "false"),
        (AttackKind.TWO_SLOT, "two_slot"),
        (float("nan"), "nan"),
        (0.1 + 0.2, "0.3"),
        (np.float64(1e-12), "1e-12"),
        (np.int64(7), "7"),
    ],
)
def test_format_cell(value, expected: str):
    assert format_cell(value) == expected


def test_csv_text():
    rows = [{"Q": 0.0162, "attack": AttackKind.MAX_COHERENCE}, {"Q": 0.033, "attack": AttackKind.TWO_SLOT}]
    assert csv_text(rows) == "Q,attack\n0.0162,max_coherence\n0.033,two_slot\n"
    assert csv_text([], columns=["a", "b"]) == "a,b\n"
    assert csv_text(rows, columns=["attack"]).splitlines()[1] == "max_coherence"


def test_write_csv_uses_lf(tmp_path: Path):
    path = write_csv(tmp_path / "nested" / "rows.csv", [{"origin": Origin.DARK}])
    assert path.read_bytes() == b"origin\n2\n"


def test_to_plain():
    plain = to_plain({AttackKind.IMPROVED: (np.float32(0.5), np.inf), "n": np.int32(4), "ok": np.bool_(True)})
    assert plain == {"improved": [0.5, None], "n": 4, "ok": True}
    assert to_plain(0.1 + 0.2) == 0.3


def test_json_text_sorted():
    text = json_text({"b": 1, "a": [0.25]})
    assert text == '{\n  "a": [\n    0.25\n  ],\n  "b": 1\n}\n'


def test_write_json(tmp_path: Path):
    path = write_json(tmp_path / "report.json", {"Q": 0.0162}, metadata("simulate", seed=3))
    document = json.loads(path.read_text(encoding="utf-8"))
    assert document["data"] == {"Q": 0.0162}
    assert document["metadata"]["command"] == "simulate"
    assert document["metadata"]["seed"] == 3
    assert document["metadata"]["version"] == __version__
    assert read_json_data(path) == {"Q": 0.0162}
