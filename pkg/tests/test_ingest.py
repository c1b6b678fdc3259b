import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsebeat.beats import TrainingSet
from sparsebeat.ingest import (
    ANNOTATION_CODES,
    BeatAnnotation,
    BeatClass,
    EcgRecord,
    FormatError,
    SegmentationConfig,
    decode_212,
    encode_212,
    encode_annotations_mit,
    load_record,
    map_symbol,
    parse_annotations,
    parse_annotations_csv,
    parse_annotations_mit,
    parse_format212,
    parse_header,
    read_beat_cache,
    read_signal_csv,
    segment_beats,
    write_beat_cache,
    write_format212,
)

from .oracles import decode_212_reference

HEADER = """100 2 360 4
100.dat 212 200 11 1024 995 -22131 0 MLII
100.dat 212 200 11 1024 1011 20052 0 V5
"""


def test_worked_triplet():
    np.testing.assert_array_equal(decode_212(bytes([0xE8, 0x3F, 0x10]), 2), [[-24, 784]])
    assert decode_212_reference(bytes([0xE8, 0x3F, 0x10])) == [(-24, 784)]
    np.testing.assert_array_equal(decode_212(bytes(3), 2), [[0, 0]])
    assert decode_212(b"", 2).shape == (0, 2)


def test_truncated_triplet_reports_offset():
    with pytest.raises(FormatError, match="byte offset 3"):
        decode_212(bytes(5))


def test_decoder_matches_reference_on_random_bytes():
    data = np.random.default_rng(0).integers(0, 256, 3 * 500, dtype=np.uint8).tobytes()
    np.testing.assert_array_equal(decode_212(data, 2), np.array(decode_212_reference(data)))


@settings(max_examples=100)
@given(st.lists(st.integers(-2048, 2047), min_size=0, max_size=40).filter(lambda v: len(v) % 2 == 0))
def test_sample_roundtrip(values):
    out = decode_212(encode_212(np.array(values, dtype=np.int64)), 2).reshape(-1)
    np.testing.assert_array_equal(out, values)


def test_encode_range_check():
    with pytest.raises(ValueError):
        encode_212(np.array([2048, 0]))


def test_parse_header_fields():
    h = parse_header(HEADER)
    assert (h.record_id, h.n_signals, h.sampling_rate, h.n_samples) == ("100", 2, 360.0, 4)
    s = h.signals[0]
    assert (s.fmt, s.gain, s.baseline, s.adc_zero, s.checksum, s.description) == ("212", 200.0, 1024, 1024, -22131, "MLII")
    h2 = parse_header("x 1 250\nx.dat 212 100(-5)/mV 12 0 0 0 0 II\n")
    assert (h2.signals[0].gain, h2.signals[0].baseline) == (100.0, -5)
    with pytest.raises(FormatError):
        parse_header("x 2 250\nx.dat 212\n")


def test_parse_format212_physical_units():
    samples = np.array([[1024, 1024], [1224, 824], [1124, 1024], [1024, 1024]])
    rec = EcgRecord("100", 360.0, samples, np.array([200.0, 200.0]), np.array([1024.0, 1024.0]), ["a", "b"])
    hdr = "100 2 360 4\n100.dat 212 200 11 1024 1024 0 0 a\n100.dat 212 200 11 1024 1024 0 0 b\n"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        parsed = parse_format212(hdr, encode_212(samples))
    assert any("checksum" in str(w.message) for w in caught)
    np.testing.assert_array_equal(parsed.signals, samples)
    np.testing.assert_allclose(parsed.physical(0), [0.0, 1.0, 0.5, 0.0])
    np.testing.assert_allclose(rec.physical(1), [0.0, -1.0, 0.0, 0.0])


def test_empty_data_gives_empty_record():
    rec = parse_format212("e 2 360\ne.dat 212 200 11 0 0 0 0 a\ne.dat 212 200 11 0 0 0 0 b\n", b"")
    assert rec.n_samples == 0


def test_format212_requires_two_channels():
    with pytest.raises(FormatError):
        parse_format212("x 1 360\nx.dat 16 200 16 0 0 0 0 a\n", b"")


def test_against_wfdb_writer(tmp_path):
    wfdb = pytest.importorskip("wfdb")
    rng = np.random.default_rng(1)
    d = rng.integers(-2000, 2000, size=(1001, 2)).astype(np.int64)
    wfdb.wrsamp("rec1", fs=360, units=["mV", "mV"], sig_name=["MLII", "V5"], d_signal=d,
                fmt=["212", "212"], adc_gain=[200.0, 200.0], baseline=[1024, 1024], write_dir=str(tmp_path))
    ours = parse_format212((tmp_path / "rec1.hea").read_text(), (tmp_path / "rec1.dat").read_bytes())
    ref = wfdb.rdrecord(str(tmp_path / "rec1"), physical=False)
    np.testing.assert_array_equal(ours.signals, ref.d_signal)
    assert ours.channel_names == ["MLII", "V5"]
    np.testing.assert_allclose(ours.physical(0), (ref.d_signal[:, 0] - 1024) / 200.0)


def test_our_writer_read_by_wfdb(tmp_path):
    wfdb = pytest.importorskip("wfdb")
    samples = np.random.default_rng(2).integers(-2048, 2048, size=(500, 2))
    rec = EcgRecord("r2", 360.0, samples, np.array([200.0, 100.0]), np.array([0.0, 5.0]), ["MLII", "V1"])
    write_format212(tmp_path, rec)
    ref = wfdb.rdrecord(str(tmp_path / "r2"), physical=False)
    np.testing.assert_array_equal(ref.d_signal, samples)
    np.testing.assert_array_equal(ref.adc_gain, [200.0, 100.0])
    np.testing.assert_array_equal(ref.baseline, [0, 5])


def test_annotation_mapping():
    assert [map_symbol(s) for s in "NLRVEA"] == [BeatClass.N] * 3 + [BeatClass.V] * 2 + [BeatClass.OTHER]
    for s in ANNOTATION_CODES.values():
        assert map_symbol(s) in BeatClass


def test_annotations_csv():
    anns = parse_annotations_csv("sample_index,symbol\n300,V\n77,N\n120,L\n500,A\n")
    assert [a.sample_index for a in anns] == [77, 120, 300, 500]
    assert [a.mapped_class for a in anns] == [BeatClass.N, BeatClass.N, BeatClass.V, BeatClass.OTHER]
    with pytest.raises(FormatError, match="line 3"):
        parse_annotations_csv("1,N\n2,V\nx,N\n")
    anns = parse_annotations_csv("5,Z\n")
    assert anns.unknown_symbols == 1 and anns.annotations[0].mapped_class is BeatClass.OTHER


def test_mit_annotation_roundtrip_with_skip():
    anns = [BeatAnnotation(18, "N"), BeatAnnotation(400, "V"), BeatAnnotation(5000, "E"), BeatAnnotation(5001, "A")]
    data = encode_annotations_mit(anns)
    assert parse_annotations_mit(data).annotations == anns
    assert parse_annotations(data).annotations == anns


def test_mit_annotations_against_wfdb(tmp_path):
    wfdb = pytest.importorskip("wfdb")
    samples = np.array([10, 370, 900, 2500, 70000, 70001])
    symbols = ["N", "V", "L", "+", "R", "E"]
    aux = ["", "", "", "(N", "", ""]
    wfdb.wrann("a1", "atr", samples, symbol=symbols, aux_note=aux, write_dir=str(tmp_path))
    ours = parse_annotations((tmp_path / "a1.atr").read_bytes())
    ref = wfdb.rdann(str(tmp_path / "a1"), "atr")
    assert [a.sample_index for a in ours] == ref.sample.tolist()
    assert [a.symbol for a in ours] == ref.symbol


def test_mit_annotation_truncated():
    with pytest.raises(FormatError):
        parse_annotations_mit(b"\x00")


def _record(n=1000, seed=0):
    sig = np.random.default_rng(seed).integers(-500, 500, size=(n, 2))
    return EcgRecord("200", 360.0, sig, np.array([200.0, 200.0]), np.array([10.0, 0.0]), ["MLII", "V1"])


def test_segment_window_and_skips():
    rec = _record()
    anns = [BeatAnnotation(50, "N"), BeatAnnotation(200, "N"), BeatAnnotation(400, "A"),
            BeatAnnotation(600, "V"), BeatAnnotation(900, "N")]
    beats, stats = segment_beats(rec, anns)
    assert beats.size == 2 and beats.n_q == 256
    np.testing.assert_array_equal(beats.labels, ["N", "V"])
    np.testing.assert_allclose(beats.beats[:, 0], rec.physical(0)[90:346])
    assert beats.provenance(1) == ("200", 600)
    assert (stats.skipped_boundary, stats.skipped_other) == (2, 1)
    assert stats.kept == {"N": 1, "V": 1}
    assert np.all(np.isfinite(beats.beats))
    other, _ = segment_beats(rec, anns, SegmentationConfig(channel=1))
    np.testing.assert_allclose(other.beats[:, 0], rec.physical(1)[90:346])
    with pytest.raises(ValueError):
        segment_beats(rec, anns, SegmentationConfig(channel=2))


def test_segmentation_config_length():
    assert SegmentationConfig().n_q == 256


def test_beat_cache_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    ts = TrainingSet(rng.standard_normal((256, 5)), list("NNVNV"), ["100", "100", "101", "2030", "x"],
                     [300, 800, 9, 123456789, 0])
    write_beat_cache(tmp_path / "c.sbts", ts)
    assert (tmp_path / "c.sbts").read_bytes()[:4] == b"SBTS"
    back = read_beat_cache(tmp_path / "c.sbts")
    np.testing.assert_array_equal(back.beats, ts.beats)
    np.testing.assert_array_equal(back.labels, ts.labels)
    np.testing.assert_array_equal(back.records, ts.records)
    np.testing.assert_array_equal(back.samples, ts.samples)
    raw = (tmp_path / "c.sbts").read_bytes()
    (tmp_path / "bad.sbts").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        read_beat_cache(tmp_path / "bad.sbts")
    (tmp_path / "bad2.sbts").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        read_beat_cache(tmp_path / "bad2.sbts")


def test_csv_record_fallback(tmp_path):
    sig = np.sin(np.arange(600) / 20.0)
    (tmp_path / "r7.csv").write_text("MLII\n" + "\n".join(repr(float(v)) for v in sig) + "\n")
    (tmp_path / "r7_ann.csv").write_text("sample_index,symbol\n200,N\n300,N\n400,N\n")
    rec, anns = load_record(tmp_path, "r7")
    assert rec.channel_names == ["MLII"]
    beats, _ = segment_beats(rec, anns)
    assert beats.size == 3
    np.testing.assert_array_equal(beats.beats[:, 0], sig[90:346])
    with pytest.raises(FileNotFoundError):
        load_record(tmp_path, "nope")


def test_signal_csv_rejects_text():
    with pytest.raises(FormatError):
        read_signal_csv("a\n1\nfoo\n", "r")
