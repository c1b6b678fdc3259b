import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsebeat.beats import TrainingSet
from sparsebeat.pursuit import Dictionary
from sparsebeat.screen import apply_screening, screen_training_set, screening_window


def _set_with_k(ks, n=12):
    """Beats whose OOMP complexity on the identity dictionary is exactly k."""
    cols = []
    for q, k in enumerate(ks):
        f = np.zeros(n)
        # descending magnitudes on k coordinates, zero mean impossible to exploit
        f[:k] = np.linspace(2.0, 1.0, k) * (1 + 0.01 * q)
        cols.append(f)
    beats = np.column_stack(cols)
    return TrainingSet(beats, ["N"] * len(ks), ["r1"] * len(ks), np.arange(len(ks)) * 10)


def test_window_values():
    mean, std, lo, hi = screening_window(np.array([2, 4, 4, 4, 5, 5, 7, 9]), 2.0)
    assert (mean, std) == (5.0, 2.0)
    assert (lo, hi) == (1.0, 9.0)
    assert screening_window(np.array([3, 3, 3]), 3.0)[2:] == (2.0, 4.0)
    assert screening_window(np.array([1, 1, 1, 9]), 3.0)[2] == 0.0


def test_identical_beats_nothing_rejected():
    ts = TrainingSet.from_beats(np.tile(np.arange(12.0)[:, None], (1, 6)), "N")
    report = screen_training_set(ts, Dictionary(np.eye(12)), prdn_target=1.0, std_multiplier=3.0)
    assert report.std_k == 0.0
    assert report.rejected.size == 0


def test_outlier_rejected_with_provenance():
    ks = [3] * 20 + [4] * 20 + [11]
    ts = _set_with_k(ks)
    report = screen_training_set(ts, Dictionary(np.eye(12)), prdn_target=0.1, std_multiplier=2.0)
    np.testing.assert_array_equal(report.k_values, ks)
    np.testing.assert_array_equal(report.rejected, [40])
    assert report.rejected_provenance == [("r1", 400)]
    assert report.rejection_fraction == pytest.approx(100 / 41)
    kept = apply_screening(ts, report)
    assert kept.size == 40


def test_rejected_are_exactly_outside_open_window():
    rng = np.random.default_rng(2)
    ks = rng.integers(1, 12, size=60)
    report = screen_training_set(_set_with_k(ks), Dictionary(np.eye(12)), prdn_target=0.1, std_multiplier=1.0)
    lo, hi = report.window
    expect = np.flatnonzero((ks <= lo) | (ks >= hi))
    np.testing.assert_array_equal(report.rejected, expect)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=3, max_size=30), st.floats(0.5, 3.0), st.floats(0.0, 2.0))
def test_rejection_monotone_in_multiplier(ks, s, extra):
    ts = _set_with_k(ks)
    d = Dictionary(np.eye(12))
    a = screen_training_set(ts, d, prdn_target=0.1, std_multiplier=s)
    b = screen_training_set(ts, d, prdn_target=0.1, std_multiplier=s + extra)
    assert set(b.rejected.tolist()) <= set(a.rejected.tolist())


def test_failed_beat_auto_rejected():
    ts = _set_with_k([3, 3, 4, 4])
    beats = ts.beats.copy()
    beats[:, 1] = 0.0  # constant beat: prdn undefined
    ts = TrainingSet(beats, ts.labels, ts.records, ts.samples)
    report = screen_training_set(ts, Dictionary(np.eye(12)), prdn_target=0.1)
    assert 1 in report.rejected
    assert "approximation failed" in report.failures[1]


def test_report_exports(tmp_path):
    ts = _set_with_k([2, 3, 3, 4, 9])
    report = screen_training_set(ts, Dictionary(np.eye(12)), prdn_target=0.1, std_multiplier=1.0)
    report.write_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["total"] == 5
    assert sum(doc["histogram"]["count"]) == 5
    assert [r["index"] for r in doc["rejected"]] == report.rejected.tolist()
    report.write_histogram_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "k,count"


def test_deterministic():
    ts = _set_with_k([2, 3, 5, 3, 4])
    d = Dictionary(np.eye(12))
    a = screen_training_set(ts, d, prdn_target=0.1)
    b = screen_training_set(ts, d, prdn_target=0.1, n_jobs=2)
    np.testing.assert_array_equal(a.k_values, b.k_values)


def test_errors():
    d = Dictionary(np.eye(12))
    with pytest.raises(ValueError):
        screen_training_set(TrainingSet.empty(12), d)
    with pytest.raises(ValueError):
        screen_training_set(_set_with_k([2]), d, prdn_target=0.0)
