"""Accelerometer and profiler CSV logs.

Accelerometer log::

    t_ms,ax,ay,az
    1000,0.0,0.0,9.81

Profiler log::

    t_ms,chainage_m,iri
    1000,0.0,2.5

Timestamps are integer milliseconds since the epoch, accelerations m/s²,
chainage metres from route start and IRI m/km.  Parsed streams are held
column-wise in read-only numpy arrays; iterating a stream yields the
per-row records.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

import numpy as np

ACCEL_HEADER = ("t_ms", "ax", "ay", "az")
IRI_HEADER = ("t_ms", "chainage_m", "iri")

ACCEL_BOUND = 200.0  # m/s², ~20 g
IRI_SPACING_M = 5.0
IRI_SPACING_TOL_M = 0.5
GAP_FILL_PERIODS = 5

Source = Union[str, os.PathLike, bytes, IO[bytes], IO[str]]


class IngestError(ValueError):
    """A log could not be turned into a valid record stream."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MalformedRowError(IngestError):
    pass


class OrderingError(IngestError):
    pass


class SpacingError(IngestError):
    pass


class BoundsError(IngestError):
    pass


class EmptyLogError(IngestError):
    pass


@dataclass(frozen=True)
class AccelSample:
    t_ms: int
    ax: float
    ay: float
    az: float


@dataclass(frozen=True)
class IriRecord:
    t_ms: int
    chainage_m: float
    iri: float


@dataclass(frozen=True)
class StreamMeta:
    device_label: str
    source_path: str
    sample_count: int
    t_start_ms: int
    t_end_ms: int


@dataclass(frozen=True)
class Gap:
    """A hole in an accelerometer stream too long to interpolate across."""

    t_before_ms: int
    t_after_ms: int

    @property
    def duration_ms(self) -> int:
        return self.t_after_ms - self.t_before_ms


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AccelStream:
    t_ms: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    az: np.ndarray
    meta: StreamMeta
    gaps: tuple = field(default=())

    def __len__(self) -> int:
        return len(self.t_ms)

    def __iter__(self) -> Iterator[AccelSample]:
        for t, x, y, z in zip(self.t_ms.tolist(), self.ax.tolist(), self.ay.tolist(), self.az.tolist()):
            yield AccelSample(t, x, y, z)

    def __getitem__(self, i: int) -> AccelSample:
        return AccelSample(int(self.t_ms[i]), float(self.ax[i]), float(self.ay[i]), float(self.az[i]))

    @classmethod
    def from_arrays(cls, t_ms, ax, ay, az, device_label="", source_path="", gaps=()):
        t_ms = _frozen(t_ms, np.int64)
        n = len(t_ms)
        meta = StreamMeta(
            device_label=device_label,
            source_path=source_path,
            sample_count=n,
            t_start_ms=int(t_ms[0]) if n else 0,
            t_end_ms=int(t_ms[-1]) if n else 0,
        )
        return cls(t_ms, _frozen(ax, float), _frozen(ay, float), _frozen(az, float), meta, tuple(gaps))

    @classmethod
    def from_samples(cls, samples: Iterable[AccelSample], device_label="", source_path=""):
        samples = list(samples)
        return cls.from_arrays(
            [s.t_ms for s in samples],
            [s.ax for s in samples],
            [s.ay for s in samples],
            [s.az for s in samples],
            device_label=device_label,
            source_path=source_path,
        )


@dataclass(frozen=True, eq=False)
class IriStream:
    t_ms: np.ndarray
    chainage_m: np.ndarray
    iri: np.ndarray
    meta: StreamMeta

    def __len__(self) -> int:
        return len(self.t_ms)

    def __iter__(self) -> Iterator[IriRecord]:
        for t, c, v in zip(self.t_ms.tolist(), self.chainage_m.tolist(), self.iri.tolist()):
            yield IriRecord(t, c, v)

    def __getitem__(self, i: int) -> IriRecord:
        return IriRecord(int(self.t_ms[i]), float(self.chainage_m[i]), float(self.iri[i]))

    @classmethod
    def from_arrays(cls, t_ms, chainage_m, iri, device_label="", source_path=""):
        t_ms = _frozen(t_ms, np.int64)
        n = len(t_ms)
        meta = StreamMeta(
            device_label=device_label,
            source_path=source_path,
            sample_count=n,
            t_start_ms=int(t_ms.min()) if n else 0,
            t_end_ms=int(t_ms.max()) if n else 0,
        )
        return cls(t_ms, _frozen(chainage_m, float), _frozen(iri, float), meta)

    @classmethod
    def from_records(cls, records: Iterable[IriRecord], device_label="", source_path=""):
        records = list(records)
        return cls.from_arrays(
            [r.t_ms for r in records],
            [r.chainage_m for r in records],
            [r.iri for r in records],
            device_label=device_label,
            source_path=source_path,
        )


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _open_text(source: Source):
    """Return (text stream, cleanup callable)."""
    if isinstance(source, (str, os.PathLike)):
        fh = open(source, "r", encoding="utf-8-sig", newline="")
        return fh, fh.close
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8-sig"), newline=""), lambda: None
    if isinstance(source, io.TextIOBase):
        return source, lambda: None
    wrapper = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
    # leave the caller's binary stream open
    return wrapper, wrapper.detach


def _rows(source: Source, header: tuple[str, ...]):
    """Yield (line number, fields) for every data row after checking the header."""
    fh, cleanup = _open_text(source)
    try:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise EmptyLogError("empty file")
        if tuple(c.strip() for c in first) != header:
            raise MalformedRowError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", 1)
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise MalformedRowError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            yield reader.line_num, row
    finally:
        cleanup()


def _label_of(source: Source) -> str:
    if isinstance(source, (str, os.PathLike)):
        return str(source)
    if isinstance(source, bytes):
        return "<bytes>"
    return str(getattr(source, "name", "<stream>"))


def _int_field(text: str, name: str, line: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise MalformedRowError(f"{name} must be an integer, got {text!r}", line) from None


def _float_field(text: str, name: str, line: int) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise MalformedRowError(f"{name} must be a number, got {text!r}", line) from None
    if not math.isfinite(value):
        raise BoundsError(f"{name} is not finite", line)
    return value


def parse_accel_log(
    source: Source, *, sort: bool = False, device_label: str | None = None
) -> AccelStream:
    """Parse an accelerometer CSV log.

    Rows must arrive in strictly increasing ``t_ms`` order unless ``sort`` is
    set, in which case they are reordered; duplicate timestamps are an error
    either way.
    """
    t, xs, ys, zs, lines = [], [], [], [], []
    for line, row in _rows(source, ACCEL_HEADER):
        t_ms = _int_field(row[0], "t_ms", line)
        vals = [_float_field(v, n, line) for v, n in zip(row[1:], ACCEL_HEADER[1:])]
        for v, n in zip(vals, ACCEL_HEADER[1:]):
            if abs(v) > ACCEL_BOUND:
                raise BoundsError(f"|{n}| = {abs(v)} exceeds {ACCEL_BOUND} m/s²", line)
        if not sort and t and t_ms <= t[-1]:
            kind = "duplicate" if t_ms == t[-1] else "non-monotonic"
            raise OrderingError(f"{kind} timestamp {t_ms} after {t[-1]}", line)
        t.append(t_ms)
        xs.append(vals[0])
        ys.append(vals[1])
        zs.append(vals[2])
        lines.append(line)
    if not t:
        raise EmptyLogError("log has a header but no samples")
    t_arr = np.array(t, dtype=np.int64)
    if sort:
        order = np.argsort(t_arr, kind="stable")
        t_arr = t_arr[order]
        dup = np.flatnonzero(np.diff(t_arr) == 0)
        if dup.size:
            raise OrderingError(f"duplicate timestamp {t_arr[dup[0]]}", lines[order[dup[0] + 1]])
        xs, ys, zs = (np.asarray(v)[order] for v in (xs, ys, zs))
    label = _label_of(source)
    if device_label is None:
        device_label = Path(label).stem if not label.startswith("<") else ""
    return AccelStream.from_arrays(t_arr, xs, ys, zs, device_label=device_label, source_path=label)


def parse_iri_log(
    source: Source, *, sort: bool = False, device_label: str | None = None
) -> IriStream:
    """Parse a profiler CSV log and check the 5 m record spacing."""
    t, ch, iri, lines = [], [], [], []
    for line, row in _rows(source, IRI_HEADER):
        t_ms = _int_field(row[0], "t_ms", line)
        chainage = _float_field(row[1], "chainage_m", line)
        value = _float_field(row[2], "iri", line)
        if chainage < 0:
            raise BoundsError(f"negative chainage {chainage}", line)
        if value < 0:
            raise BoundsError(f"negative IRI {value}", line)
        t.append(t_ms)
        ch.append(chainage)
        iri.append(value)
        lines.append(line)
    if not t:
        raise EmptyLogError("log has a header but no records")
    ch_arr = np.array(ch)
    order = np.arange(len(ch_arr))
    if sort:
        order = np.argsort(ch_arr, kind="stable")
        ch_arr = ch_arr[order]
    steps = np.diff(ch_arr)
    bad = np.flatnonzero(steps <= 0)
    if bad.size:
        k = bad[0] + 1
        raise OrderingError(
            f"chainage {ch_arr[k]} does not increase past {ch_arr[k - 1]}", lines[order[k]]
        )
    bad = np.flatnonzero(np.abs(steps - IRI_SPACING_M) > IRI_SPACING_TOL_M)
    if bad.size:
        k = bad[0] + 1
        raise SpacingError(
            f"chainage step {steps[k - 1]:g} m outside {IRI_SPACING_M:g} ± {IRI_SPACING_TOL_M:g} m",
            lines[order[k]],
        )
    label = _label_of(source)
    if device_label is None:
        device_label = Path(label).stem if not label.startswith("<") else ""
    return IriStream.from_arrays(
        np.asarray(t, dtype=np.int64)[order],
        ch_arr,
        np.asarray(iri)[order],
        device_label=device_label,
        source_path=label,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _write(dest, header, columns) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(cells) for cells in zip(*columns))
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        dest.write(text)


def write_accel_log(stream, dest) -> None:
    """Write samples (an AccelStream or iterable of AccelSample) as CSV.

    Floats use ``repr`` so that parsing the output restores them bit-for-bit.
    """
    if not isinstance(stream, AccelStream):
        stream = AccelStream.from_samples(stream)
    _write(
        dest,
        ACCEL_HEADER,
        [
            map(str, stream.t_ms.tolist()),
            map(repr, stream.ax.tolist()),
            map(repr, stream.ay.tolist()),
            map(repr, stream.az.tolist()),
        ],
    )


def write_iri_log(stream, dest) -> None:
    if not isinstance(stream, IriStream):
        stream = IriStream.from_records(stream)
    _write(
        dest,
        IRI_HEADER,
        [
            map(str, stream.t_ms.tolist()),
            map(repr, stream.chainage_m.tolist()),
            map(repr, stream.iri.tolist()),
        ],
    )


# ---------------------------------------------------------------------------
# Gap handling
# ---------------------------------------------------------------------------


def resample_gaps(stream: AccelStream, nominal_hz: float = 100.0) -> AccelStream:
    """Fill short dropouts by linear interpolation.

    A hole of fewer than 5 nominal periods gets the missing samples inserted
    at evenly spaced (rounded) millisecond timestamps.  Longer holes are left
    alone and reported in ``gaps``.  Existing samples are never modified.
    """
    if nominal_hz <= 0:
        raise ValueError("nominal_hz must be positive")
    period = 1000.0 / nominal_hz
    t = stream.t_ms
    if len(t) < 2:
        return stream
    dt = np.diff(t)
    missing = np.rint(dt / period).astype(np.int64) - 1
    holes = np.flatnonzero(missing >= 1)
    if holes.size == 0:
        return stream

    cols = [t, stream.ax, stream.ay, stream.az]
    pieces = [[] for _ in cols]
    gaps = list(stream.gaps)
    start = 0
    for i in holes:
        for acc, col in zip(pieces, cols):
            acc.append(col[start : i + 1])
        start = i + 1
        t0, t1 = int(t[i]), int(t[i + 1])
        if dt[i] >= GAP_FILL_PERIODS * period:
            gaps.append(Gap(t0, t1))
            continue
        m = int(missing[i])
        frac = np.arange(1, m + 1) / (m + 1)
        new_t = np.rint(t0 + frac * (t1 - t0)).astype(np.int64)
        # interpolate at the rounded timestamps actually stored
        w = (new_t - t0) / (t1 - t0)
        pieces[0].append(new_t)
        for acc, col in zip(pieces[1:], cols[1:]):
            acc.append(col[i] + w * (col[i + 1] - col[i]))
    for acc, col in zip(pieces, cols):
        acc.append(col[start:])
    merged = [np.concatenate(p) for p in pieces]
    return AccelStream.from_arrays(
        *merged,
        device_label=stream.meta.device_label,
        source_path=stream.meta.source_path,
        gaps=sorted(gaps, key=lambda g: g.t_before_ms),
    )
