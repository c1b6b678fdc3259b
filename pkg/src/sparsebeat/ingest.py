"""ECG record ingestion: format-212 signals, beat annotations, segmentation.

Supports the binary record layout used by the MIT-BIH Arrhythmia database
(``.hea`` header, ``.dat`` format-212 signal, ``.atr`` annotations) and a
portable CSV fallback for both signals and annotations.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sparsebeat.beats import TrainingSet

log = logging.getLogger(__name__)


class FormatError(ValueError):
    pass


class BeatClass(str, enum.Enum):
    N = "N"
    V = "V"
    OTHER = "other"


CLASS_MAP = {"N": BeatClass.N, "L": BeatClass.N, "R": BeatClass.N, "V": BeatClass.V, "E": BeatClass.V}


def map_symbol(symbol: str) -> BeatClass:
    return CLASS_MAP.get(symbol, BeatClass.OTHER)


# ---------------------------------------------------------------------------
# format 212


def decode_212(data: bytes | np.ndarray, n_channels: int = 2) -> np.ndarray:
    """Decode packed 12-bit samples; returns an ``(n_samples, n_channels)`` int array.

    Every 3 bytes hold two samples: the first is ``b0 | (b1 & 0x0F) << 8``, the
    second ``b2 | (b1 & 0xF0) << 4``; both are 12-bit two's complement.
    """
    raw = np.frombuffer(bytes(data), dtype=np.uint8) if not isinstance(data, np.ndarray) else data
    if raw.size % 3:
        offset = raw.size - raw.size % 3
        raise FormatError(f"truncated format-212 triplet at byte offset {offset}")
    trip = raw.reshape(-1, 3).astype(np.int32)
    out = np.empty((trip.shape[0], 2), dtype=np.int32)
    out[:, 0] = trip[:, 0] | ((trip[:, 1] & 0x0F) << 8)
    out[:, 1] = trip[:, 2] | ((trip[:, 1] & 0xF0) << 4)
    out[out > 2047] -= 4096
    flat = out.reshape(-1)
    usable = flat.size - flat.size % n_channels
    return flat[:usable].reshape(-1, n_channels)


def encode_212(samples: np.ndarray) -> bytes:
    """Inverse of :func:`decode_212`; an odd total sample count is zero-padded."""
    flat = np.asarray(samples, dtype=np.int64).reshape(-1)
    if flat.size and (flat.min() < -2048 or flat.max() > 2047):
        raise ValueError("format-212 samples must fit in 12 bits")
    if flat.size % 2:
        flat = np.append(flat, 0)
    u = (flat & 0xFFF).reshape(-1, 2)
    trip = np.empty((u.shape[0], 3), dtype=np.uint8)
    trip[:, 0] = u[:, 0] & 0xFF
    trip[:, 1] = ((u[:, 0] >> 8) & 0x0F) | ((u[:, 1] >> 4) & 0xF0)
    trip[:, 2] = u[:, 1] & 0xFF
    return trip.tobytes()


# ---------------------------------------------------------------------------
# header


@dataclass
class SignalSpec:
    filename: str
    fmt: str
    gain: float = 200.0
    baseline: int = 0
    units: str = "mV"
    adc_resolution: int = 12
    adc_zero: int = 0
    initial_value: int = 0
    checksum: int | None = None
    description: str = ""


@dataclass
class Header:
    record_id: str
    n_signals: int
    sampling_rate: float
    n_samples: int | None
    signals: list[SignalSpec] = field(default_factory=list)


def _parse_gain(token: str) -> tuple[float, int | None, str]:
    units = "mV"
    if "/" in token:
        token, units = token.split("/", 1)
    baseline = None
    if "(" in token:
        token, rest = token.split("(", 1)
        baseline = int(rest.rstrip(")"))
    gain = float(token)
    return (gain if gain != 0 else 200.0), baseline, units


def parse_header(text: str | bytes) -> Header:
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError("empty header")
    rec = lines[0].split()
    if len(rec) < 2:
        raise FormatError("record line must give a name and a signal count")
    record_id = rec[0].split("/")[0]
    n_signals = int(rec[1])
    fs = float(rec[2].split("/")[0]) if len(rec) > 2 else 250.0
    n_samples = int(rec[3]) if len(rec) > 3 else None
    if len(lines) < 1 + n_signals:
        raise FormatError(f"header declares {n_signals} signals but lists {len(lines) - 1}")
    specs = []
    for ln in lines[1 : 1 + n_signals]:
        tok = ln.split()
        if len(tok) < 2:
            raise FormatError(f"malformed signal line: {ln!r}")
        fmt = tok[1].split("x")[0].split(":")[0].split("+")[0]
        spec = SignalSpec(filename=tok[0], fmt=fmt)
        baseline = None
        if len(tok) > 2:
            spec.gain, baseline, spec.units = _parse_gain(tok[2])
        if len(tok) > 3:
            spec.adc_resolution = int(tok[3])
        if len(tok) > 4:
            spec.adc_zero = int(tok[4])
        if len(tok) > 5:
            spec.initial_value = int(tok[5])
        if len(tok) > 6:
            spec.checksum = int(tok[6])
        if len(tok) > 8:
            spec.description = " ".join(tok[8:])
        spec.baseline = spec.adc_zero if baseline is None else baseline
        specs.append(spec)
    return Header(record_id, n_signals, fs, n_samples, specs)


def format_header(header: Header) -> str:
    lines = [f"{header.record_id} {header.n_signals} {header.sampling_rate:g}"
             + (f" {header.n_samples}" if header.n_samples is not None else "")]
    for s in header.signals:
        lines.append(
            f"{s.filename} {s.fmt} {s.gain:g}({s.baseline})/{s.units} {s.adc_resolution} "
            f"{s.adc_zero} {s.initial_value} {s.checksum if s.checksum is not None else 0} 0 "
            f"{s.description}".rstrip()
        )
    return "\n".join(lines) + "\n"


def signal_checksum(samples: np.ndarray) -> int:
    total = int(np.asarray(samples, dtype=np.int64).sum()) & 0xFFFF
    return total - 0x10000 if total > 0x7FFF else total


# ---------------------------------------------------------------------------
# records


@dataclass
class EcgRecord:
    record_id: str
    sampling_rate: float
    signals: np.ndarray  # (n_samples, n_channels) integer ADC units
    gains: np.ndarray
    baselines: np.ndarray
    channel_names: list[str]

    def __post_init__(self):
        if not self.sampling_rate > 0:
            raise ValueError("sampling_rate must be positive")
        self.signals = np.asarray(self.signals).reshape(-1, len(self.channel_names))

    @property
    def n_samples(self) -> int:
        return self.signals.shape[0]

    def physical(self, channel: int = 0) -> np.ndarray:
        return (self.signals[:, channel].astype(np.float64) - self.baselines[channel]) / self.gains[channel]


def parse_format212(header: str | bytes, data: bytes) -> EcgRecord:
    hdr = parse_header(header)
    if hdr.n_signals != 2 or any(s.fmt != "212" for s in hdr.signals):
        raise FormatError("expected a two-channel format-212 record")
    samples = decode_212(data, n_channels=2)
    if hdr.n_samples is not None and samples.shape[0] > hdr.n_samples:
        samples = samples[: hdr.n_samples]
    for ch, spec in enumerate(hdr.signals):
        if spec.checksum is not None and samples.shape[0] and hdr.n_samples == samples.shape[0]:
            got = signal_checksum(samples[:, ch])
            if got != spec.checksum:
                warnings.warn(
                    f"record {hdr.record_id} channel {ch}: checksum {got} != header {spec.checksum}",
                    stacklevel=2,
                )
    return EcgRecord(
        record_id=hdr.record_id,
        sampling_rate=hdr.sampling_rate,
        signals=samples,
        gains=np.array([s.gain for s in hdr.signals]),
        baselines=np.array([s.baseline for s in hdr.signals], dtype=np.float64),
        channel_names=[s.description or f"ch{i}" for i, s in enumerate(hdr.signals)],
    )


def write_format212(directory, record: EcgRecord) -> None:
    """Write ``<id>.hea`` and ``<id>.dat`` for a two-channel record."""
    directory = Path(directory)
    dat = f"{record.record_id}.dat"
    specs = [
        SignalSpec(dat, "212", gain=float(record.gains[c]), baseline=int(record.baselines[c]),
                   adc_zero=int(record.baselines[c]),
                   initial_value=int(record.signals[0, c]) if record.n_samples else 0,
                   checksum=signal_checksum(record.signals[:, c]),
                   description=record.channel_names[c])
        for c in range(2)
    ]
    hdr = Header(record.record_id, 2, record.sampling_rate, record.n_samples, specs)
    (directory / f"{record.record_id}.hea").write_text(format_header(hdr))
    (directory / dat).write_bytes(encode_212(record.signals))


def read_signal_csv(source, record_id: str, sampling_rate: float = 360.0) -> EcgRecord:
    """One sample time per line, comma-separated channels, optional header row.

    Values are taken as physical units (gain 1, baseline 0).
    """
    text = _read_text(source)
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    names = None
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            names = [c.strip() for c in rows[0]]
            rows = rows[1:]
    try:
        values = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"record {record_id}: non-numeric signal CSV entry ({exc})") from None
    n_ch = values.shape[1] if values.ndim == 2 and values.size else len(names or [0])
    values = values.reshape(-1, n_ch)
    return EcgRecord(
        record_id=record_id,
        sampling_rate=sampling_rate,
        signals=values,
        gains=np.ones(n_ch),
        baselines=np.zeros(n_ch),
        channel_names=names or [f"ch{i}" for i in range(n_ch)],
    )


# ---------------------------------------------------------------------------
# annotations

# MIT annotation codes for the symbols handled here (subset of the standard table)
ANNOTATION_CODES = {
    1: "N", 2: "L", 3: "R", 4: "a", 5: "V", 6: "F", 7: "J", 8: "A", 9: "S", 10: "E",
    11: "j", 12: "/", 13: "Q", 14: "~", 16: "|", 18: "s", 19: "T", 20: "*", 21: "D",
    22: '"', 23: "=", 24: "p", 25: "B", 26: "^", 27: "t", 28: "+", 29: "u", 30: "?",
    31: "!", 32: "[", 33: "]", 34: "e", 35: "x", 36: "f", 37: "(", 38: ")", 39: "r",
}
SYMBOL_CODES = {v: k for k, v in ANNOTATION_CODES.items()}
_SKIP, _NUM, _SUB, _CHAN, _AUX = 59, 60, 61, 62, 63


@dataclass(frozen=True)
class BeatAnnotation:
    sample_index: int
    symbol: str

    @property
    def mapped_class(self) -> BeatClass:
        return map_symbol(self.symbol)


@dataclass
class AnnotationSet:
    annotations: list[BeatAnnotation]
    unknown_symbols: int = 0

    def __iter__(self):
        return iter(self.annotations)

    def __len__(self) -> int:
        return len(self.annotations)


def parse_annotations_mit(data: bytes) -> AnnotationSet:
    """Decode the MIT binary annotation format (16-bit little-endian words)."""
    raw = np.frombuffer(bytes(data), dtype=np.uint8)
    if raw.size % 2:
        raise FormatError(f"odd annotation byte count; truncated at byte offset {raw.size - 1}")
    words = raw[0::2].astype(np.int64) | (raw[1::2].astype(np.int64) << 8)
    out: list[BeatAnnotation] = []
    unknown = 0
    t = 0
    i = 0
    n = words.size
    while i < n:
        w = int(words[i])
        code, value = w >> 10, w & 0x3FF
        if w == 0:
            break
        if code == _SKIP:
            if i + 2 >= n:
                raise FormatError(f"truncated SKIP at byte offset {2 * i}")
            hi, lo = int(words[i + 1]), int(words[i + 2])
            interval = (hi << 16) | lo
            if interval >= 1 << 31:
                interval -= 1 << 32
            t += interval
            i += 3
        elif code in (_NUM, _SUB, _CHAN):
            i += 1
        elif code == _AUX:
            i += 1 + (value + 1) // 2
        elif code == 0:
            # a NOTQRS word only carries a time increment
            t += value
            i += 1
        else:
            t += value
            symbol = ANNOTATION_CODES.get(code)
            if symbol is None:
                symbol = f"[{code}]"
                unknown += 1
            out.append(BeatAnnotation(t, symbol))
            i += 1
    out.sort(key=lambda a: a.sample_index)
    if unknown:
        log.warning("%d annotations with unknown codes", unknown)
    return AnnotationSet(out, unknown)


def encode_annotations_mit(annotations) -> bytes:
    words: list[int] = []
    t = 0
    for ann in sorted(annotations, key=lambda a: a.sample_index):
        code = SYMBOL_CODES.get(ann.symbol)
        if code is None:
            raise ValueError(f"symbol {ann.symbol!r} has no MIT annotation code")
        delta = ann.sample_index - t
        if delta < 0:
            raise ValueError("annotation times must be nonnegative")
        if delta > 0x3FF:
            words += [_SKIP << 10, (delta >> 16) & 0xFFFF, delta & 0xFFFF]
            delta = 0
        words.append((code << 10) | delta)
        t = ann.sample_index
    words.append(0)
    return np.asarray(words, dtype="<u2").tobytes()


def parse_annotations_csv(source) -> AnnotationSet:
    """Lines of ``sample_index,symbol``; a non-numeric first line is a header."""
    text = _read_text(source)
    out: list[BeatAnnotation] = []
    unknown = 0
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip():
            continue
        if len(row) < 2:
            raise FormatError(f"annotation CSV line {lineno}: expected sample_index,symbol")
        try:
            idx = int(row[0].strip())
        except ValueError:
            if lineno == 1:
                continue
            raise FormatError(f"annotation CSV line {lineno}: bad sample index {row[0]!r}") from None
        sym = row[1].strip()
        if not sym:
            raise FormatError(f"annotation CSV line {lineno}: empty symbol")
        if sym not in SYMBOL_CODES:
            unknown += 1
        out.append(BeatAnnotation(idx, sym))
    out.sort(key=lambda a: a.sample_index)
    if unknown:
        log.warning("%d annotations with unrecognised symbols", unknown)
    return AnnotationSet(out, unknown)


def parse_annotations(source) -> AnnotationSet:
    """Dispatch on content: bytes that decode as ``index,symbol`` text use the CSV reader."""
    data = Path(source).read_bytes() if isinstance(source, (str, Path)) else bytes(source)
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        return parse_annotations_mit(data)
    first = next((ln for ln in text.splitlines() if ln.strip()), "")
    if "," in first and first.isprintable():
        return parse_annotations_csv(text)
    return parse_annotations_mit(data)


def _read_text(source) -> str:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        return Path(source).read_text()
    if isinstance(source, bytes):
        return source.decode()
    return str(source)


# ---------------------------------------------------------------------------
# segmentation


@dataclass(frozen=True)
class SegmentationConfig:
    left_samples: int = 110
    right_samples: int = 145
    channel: int = 0

    @property
    def n_q(self) -> int:
        return self.left_samples + self.right_samples + 1


@dataclass
class SegmentationStats:
    kept: dict[str, int] = field(default_factory=dict)
    skipped_boundary: int = 0
    skipped_other: int = 0


def segment_beats(
    record: EcgRecord, annotations, config: SegmentationConfig | None = None
) -> tuple[TrainingSet, SegmentationStats]:
    """Cut ``[peak - left, peak + right]`` around every N- or V-class annotation."""
    config = config or SegmentationConfig()
    if not 0 <= config.channel < record.signals.shape[1]:
        raise ValueError(f"record {record.record_id} has no channel {config.channel}")
    signal = record.physical(config.channel)
    stats = SegmentationStats()
    cols, labels, samples = [], [], []
    for ann in annotations:
        cls = ann.mapped_class
        if cls is BeatClass.OTHER:
            stats.skipped_other += 1
            continue
        lo, hi = ann.sample_index - config.left_samples, ann.sample_index + config.right_samples
        if lo < 0 or hi >= signal.size:
            stats.skipped_boundary += 1
            continue
        cols.append(signal[lo : hi + 1])
        labels.append(cls.value)
        samples.append(ann.sample_index)
        stats.kept[cls.value] = stats.kept.get(cls.value, 0) + 1
    beats = np.column_stack(cols) if cols else np.zeros((config.n_q, 0))
    return TrainingSet(beats, labels, [record.record_id] * len(cols), samples), stats


# ---------------------------------------------------------------------------
# beat cache

CACHE_MAGIC = b"SBTS"
CACHE_VERSION = 1


def write_beat_cache(path, beats: TrainingSet) -> None:
    """Little-endian layout: magic, u16 version, u32 n_q, u32 q, labels, provenance, samples.

    Labels and record ids are u16-length-prefixed UTF-8; sample indices are
    i64; beat samples are float64 stored beat after beat.
    """
    buf = io.BytesIO()
    buf.write(CACHE_MAGIC)
    buf.write(struct.pack("<HII", CACHE_VERSION, beats.n_q, beats.size))
    for label in beats.labels:
        b = str(label).encode()
        buf.write(struct.pack("<H", len(b)) + b)
    for rec, smp in zip(beats.records, beats.samples):
        b = str(rec).encode()
        buf.write(struct.pack("<H", len(b)) + b + struct.pack("<q", int(smp)))
    buf.write(np.ascontiguousarray(beats.beats.T, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_beat_cache(path) -> TrainingSet:
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise FormatError("not a beat cache (bad magic)")
    version, n_q, q = struct.unpack_from("<HII", data, 4)
    if version != CACHE_VERSION:
        raise FormatError(f"unsupported beat cache version {version}")
    pos = 4 + struct.calcsize("<HII")

    def take_str():
        nonlocal pos
        (length,) = struct.unpack_from("<H", data, pos)
        s = data[pos + 2 : pos + 2 + length].decode()
        pos += 2 + length
        return s

    labels = [take_str() for _ in range(q)]
    records, samples = [], []
    for _ in range(q):
        records.append(take_str())
        samples.append(struct.unpack_from("<q", data, pos)[0])
        pos += 8
    need = pos + 8 * n_q * q
    if len(data) != need:
        raise FormatError(f"beat cache size mismatch: expected {need} bytes, found {len(data)}")
    beats = np.frombuffer(data, dtype="<f8", count=n_q * q, offset=pos).reshape(q, n_q).T
    return TrainingSet(beats.astype(np.float64), labels, records, samples)


# ---------------------------------------------------------------------------
# directory loading


def load_record(directory, record_id: str, csv_fallback: bool = True, sampling_rate: float = 360.0):
    """Load ``record_id`` from ``directory`` as (EcgRecord, AnnotationSet).

    Binary files (``.hea``/``.dat``/``.atr``) take precedence; with
    ``csv_fallback`` the pair ``<id>.csv`` / ``<id>_ann.csv`` is used instead.
    """
    directory = Path(directory)
    hea, atr = directory / f"{record_id}.hea", directory / f"{record_id}.atr"
    if hea.exists():
        hdr = parse_header(hea.read_text())
        dat = directory / hdr.signals[0].filename
        record = parse_format212(hea.read_text(), dat.read_bytes())
        ann_path = atr if atr.exists() else directory / f"{record_id}_ann.csv"
        return record, parse_annotations(ann_path)
    sig_csv, ann_csv = directory / f"{record_id}.csv", directory / f"{record_id}_ann.csv"
    if csv_fallback and sig_csv.exists() and ann_csv.exists():
        return read_signal_csv(sig_csv, record_id, sampling_rate), parse_annotations_csv(ann_csv)
    raise FileNotFoundError(f"no record files for {record_id!r} in {directory}")
