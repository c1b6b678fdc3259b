import json

import numpy as np
import pytest

from sparsebeat.classify import ClassifierModel
from sparsebeat.dictlearn import LearningTrace
from sparsebeat.modelio import (
    ModelFormatError,
    load_dictionary,
    load_model,
    save_dictionary,
    save_model,
)
from sparsebeat.pursuit import Dictionary


def _dict(label, seed=0, n=16, m=24):
    a = np.random.default_rng(seed).standard_normal((n, m))
    return Dictionary(a / np.linalg.norm(a, axis=0), label=label)


def test_dictionary_roundtrip_is_lossless(tmp_path):
    d = _dict("N")
    trace = LearningTrace([3.5, 3.1], [1.0, 0.5], [0.2, 0.01], [0, 1], True, None)
    save_dictionary(tmp_path / "m.json", d, "oomp", 9.0, trace, {"seed": 4})
    back, meta = load_dictionary(tmp_path / "m.json")
    np.testing.assert_array_equal(back.atoms, d.atoms)
    assert back.label == "N"
    assert meta["algorithm"] == "oomp" and meta["prdn_target"] == 9.0
    assert meta["learn_trace"] == trace
    assert meta["config"] == {"seed": 4}
    doc = json.loads((tmp_path / "m.json").read_text())
    assert set(doc) >= {"format_version", "n_q", "m", "class_label", "algorithm", "prdn_target", "atoms", "learn_trace"}
    assert len(doc["atoms"]) == 24 and len(doc["atoms"][0]) == 16


def test_rejects_bad_documents(tmp_path):
    (tmp_path / "a.json").write_text("{not json")
    with pytest.raises(ModelFormatError):
        load_dictionary(tmp_path / "a.json")
    save_dictionary(tmp_path / "b.json", _dict("N"), "mp", 9.0)
    doc = json.loads((tmp_path / "b.json").read_text())
    doc["m"] = 5
    (tmp_path / "b.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="shape"):
        load_dictionary(tmp_path / "b.json")
    doc["format_version"] = 99
    (tmp_path / "b.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="format_version"):
        load_dictionary(tmp_path / "b.json")


def test_classifier_model_roundtrip(tmp_path):
    model = ClassifierModel(_dict("N", 1), _dict("V", 2), "omp", 7.5, "Ib", max_iterations=10)
    save_model(tmp_path / "c.json", model, config={"x": 1})
    back, cfg = load_model(tmp_path / "c.json")
    assert back.config() == model.config()
    np.testing.assert_array_equal(back.dict_b.atoms, model.dict_b.atoms)
    assert cfg == {"x": 1}
