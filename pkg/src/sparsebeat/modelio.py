"""JSON persistence for learned dictionaries and classifier models."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from sparsebeat.classify import ClassifierModel
from sparsebeat.dictlearn import LearningTrace
from sparsebeat.pursuit import Algorithm, Dictionary

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def dictionary_to_dict(
    dictionary: Dictionary,
    algorithm: Algorithm | str,
    prdn_target: float,
    trace: LearningTrace | None = None,
    config: dict | None = None,
) -> dict:
    # float -> JSON goes through repr, which round-trips exactly
    return {
        "format_version": FORMAT_VERSION,
        "n_q": dictionary.n_q,
        "m": dictionary.m,
        "class_label": dictionary.label,
        "algorithm": Algorithm.parse(algorithm).value,
        "prdn_target": float(prdn_target),
        "atoms": [col.tolist() for col in dictionary.atoms.T],
        "learn_trace": trace.to_dict() if trace is not None else None,
        "config": config or {},
    }


def dictionary_from_dict(doc: dict) -> tuple[Dictionary, dict]:
    """Returns the dictionary and the remaining metadata."""
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format_version {version!r}")
    for key in ("n_q", "m", "atoms"):
        if key not in doc:
            raise ModelFormatError(f"model document lacks {key!r}")
    atoms = np.asarray(doc["atoms"], dtype=np.float64)
    if atoms.shape != (doc["m"], doc["n_q"]):
        raise ModelFormatError(
            f"atoms array has shape {atoms.shape}, header says m={doc['m']}, n_q={doc['n_q']}"
        )
    dictionary = Dictionary(atoms.T.copy(), label=doc.get("class_label"))
    meta = {k: v for k, v in doc.items() if k != "atoms"}
    if meta.get("learn_trace") is not None:
        meta["learn_trace"] = LearningTrace.from_dict(meta["learn_trace"])
    return dictionary, meta


def save_dictionary(path, dictionary: Dictionary, algorithm, prdn_target, trace=None, config=None) -> None:
    doc = dictionary_to_dict(dictionary, algorithm, prdn_target, trace, config)
    Path(path).write_text(json.dumps(doc) + "\n")


def load_dictionary(path) -> tuple[Dictionary, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None
    return dictionary_from_dict(doc)


def save_model(path, model: ClassifierModel, traces=(None, None), config: dict | None = None) -> None:
    """A classifier model is the pair of class dictionaries plus decision settings."""
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "classifier",
        "classifier": model.config(),
        "config": config or {},
        "dictionaries": [
            dictionary_to_dict(d, model.algorithm, model.prdn_target, t)
            for d, t in zip((model.dict_a, model.dict_b), traces)
        ],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path) -> tuple[ClassifierModel, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("kind") != "classifier" or doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: not a classifier model document")
    (da, _), (db, _) = (dictionary_from_dict(d) for d in doc["dictionaries"])
    c = doc["classifier"]
    model = ClassifierModel(
        da, db,
        algorithm=c["algorithm"],
        prdn_target=c["prdn_target"],
        criterion=c["criterion"],
        max_iterations=c.get("max_iterations"),
    )
    return model, doc.get("config", {})
