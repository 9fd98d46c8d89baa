import math

import numpy as np
import pytest

from pisa.errors import ConfigError, DataError
from pisa.serialize import (dump_document, format_float, load_document,
                            load_model_document, matrix_from_lists,
                            matrix_to_lists, save_model_document, write_csv,
                            write_manifest)


def test_float_round_trip_bit_exact():
    rng = np.random.default_rng(3001)
    specials = [0.0, -0.0, 1.0, 1 / 3, math.pi, 1e-300, 1e300, 5e-324,
                np.nextafter(1.0, 2.0)]
    samples = list(rng.standard_normal(500) * np.exp(rng.uniform(-300, 300, 500)))
    for x in specials + samples:
        x = float(x)
        y = float(format_float(x))
        assert x == y and math.copysign(1, x) == math.copysign(1, y)


def test_document_round_trip_matrices():
    rng = np.random.default_rng(3003)
    mat = rng.standard_normal((4, 3)) * 1e-7
    doc = {"b": matrix_to_lists(mat), "a": 3, "c": "text", "d": None,
           "e": [True, False]}
    loaded = load_document(dump_document(doc))
    assert (matrix_from_lists(loaded["b"], (4, 3)) == mat).all()
    assert loaded["a"] == 3 and loaded["d"] is None


def test_document_keys_are_alphabetical():
    text = dump_document({"zeta": 1, "alpha": 2, "mid": {"y": 0, "x": 1}})
    assert text.index('"alpha"') < text.index('"mid"') < text.index('"zeta"')
    assert text.index('"x"') < text.index('"y"')


def test_document_rejects_non_finite():
    with pytest.raises(ValueError):
        dump_document({"x": float("nan")})


def test_matrix_shape_check():
    with pytest.raises(DataError):
        matrix_from_lists([[1.0, 2.0]], shape=(2, 1))


def test_model_document_version_and_kind_checks(tmp_path):
    path = tmp_path / "m.model"
    save_model_document(path, "content", {"lstm_hidden": 8},
                        {"params": {"w": [[1.0]]}})
    doc = load_model_document(path, expected_kind="content")
    assert doc["dims"]["lstm_hidden"] == 8

    with pytest.raises(DataError):
        load_model_document(path, expected_kind="baseline")

    bad = tmp_path / "bad.model"
    bad.write_text(dump_document({"format_version": 99, "model_kind": "content"}))
    with pytest.raises(ConfigError):
        load_model_document(bad)


def test_csv_and_manifest(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 0.5], [2, float("inf")]])
    text = (tmp_path / "t.csv").read_text()
    assert text == "a,b\n1,0.5\n2,inf\n"
    write_manifest(tmp_path)
    manifest = (tmp_path / "MANIFEST.txt").read_text()
    assert "t.csv" in manifest and len(manifest.split()[0]) == 64


def test_same_document_same_bytes():
    doc = {"m": matrix_to_lists(np.linspace(0, 1, 7)), "k": 2}
    assert dump_document(doc) == dump_document(dict(reversed(list(doc.items()))))
