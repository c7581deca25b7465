"""Tests for the filesystem artifact store and canonical serialization."""

import json

import numpy as np
import pytest

from lab.storage import FilesystemStore
from lab.storage.filesystem import canonical_json, format_csv
from lab.storage.interface import sha256_hex


def test_canonical_json_is_sorted_and_strict():
    """Test sorted keys, numpy conversion and non-finite floats as strings."""
    payload = {"b": 1, "a": np.float64(0.5), "c": np.array([1, 2]), "d": float("inf"), "e": float("nan")}
    text = canonical_json(payload, indent=None)
    assert text == '{"a": 0.5, "b": 1, "c": [1, 2], "d": "inf", "e": "nan"}'


def test_format_csv_fills_missing_keys():
    """Test that absent keys are written empty and extra keys are dropped."""
    text = format_csv([{"a": 1, "b": 2}, {"a": 3, "z": 9}], ["a", "b"])
    assert text == "a,b\n1,2\n3,\n"


def test_write_csv_returns_file_checksum(tmp_path):
    """Test that the returned digest is the SHA-256 of the bytes on disk."""
    store = FilesystemStore(tmp_path / "run")
    digest = store.write_csv("trials.csv", [{"trial": 0, "hit": True}])
    assert digest == sha256_hex((tmp_path / "run" / "trials.csv").read_bytes())
    assert store.checksum("trials.csv") == digest
    assert store.checksums == {"trials.csv": digest}


def test_write_json_and_jsonl(tmp_path):
    """Test two-space canonical JSON and one object per line."""
    store = FilesystemStore(tmp_path)
    store.write_json("summary.json", {"z": 1, "a": [1.5]})
    assert (tmp_path / "summary.json").read_text() == '{\n  "a": [\n    1.5\n  ],\n  "z": 1\n}\n'
    store.write_jsonl("verdicts.jsonl", [{"trial": 0}, {"trial": 1}])
    lines = (tmp_path / "verdicts.jsonl").read_text().splitlines()
    assert [json.loads(line)["trial"] for line in lines] == [0, 1]
    assert set(store.checksums) == {"summary.json", "verdicts.jsonl"}


def test_write_text_creates_parents(tmp_path):
    """Test that nested artifact names create their directories."""
    store = FilesystemStore(tmp_path)
    store.write_text("dumps/field.txt", "1 0.5\n")
    assert store.read_bytes("dumps/field.txt") == b"1 0.5\n"


def test_read_missing_artifact(tmp_path):
    """Test that reading an unwritten artifact raises FileNotFoundError."""
    with pytest.raises(FileNotFoundError):
        FilesystemStore(tmp_path).read_bytes("absent.csv")


def test_identical_payloads_identical_bytes(tmp_path):
    """Test that the same rows always serialize to the same digest."""
    rows = [{"trial": i, "statistic": 0.1 * i} for i in range(5)]
    first = FilesystemStore(tmp_path / "a").write_csv("t.csv", rows)
    second = FilesystemStore(tmp_path / "b").write_csv("t.csv", list(rows))
    assert first == second
