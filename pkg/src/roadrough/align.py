"""Join per-second acceleration features with the IRI records of the same second."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .ingest import IriStream
from .signal import SecondFeature


@dataclass(frozen=True)
class PairedSample:
    second_index: int
    accel_feature: float
    iri_mean: float
    n_iri: int
    chainage_start_m: float


@dataclass(frozen=True)
class SurveyGeometry:
    speed_mps: float = 15.0
    iri_spacing_m: float = 5.0

    def __post_init__(self):
        if not self.speed_mps > 0:
            raise ValueError("speed_mps must be positive")
        if not self.iri_spacing_m > 0:
            raise ValueError("iri_spacing_m must be positive")


@dataclass(frozen=True)
class Pairing:
    """Paired seconds plus how many seconds on each side found no partner."""

    pairs: tuple
    unpaired_feature_seconds: int = 0
    unpaired_iri_seconds: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[PairedSample]:
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]


class AlignmentError(ValueError):
    pass


def _mean(values) -> float:
    # fsum is correctly rounded, so both pairing paths agree to the last bit
    return math.fsum(values) / len(values)


def _group_means(keys: np.ndarray, values: np.ndarray):
    """Mean of ``values`` per run of equal ``keys`` (keys sorted)."""
    starts = np.flatnonzero(np.r_[True, np.diff(keys) != 0])
    counts = np.diff(np.r_[starts, len(keys)])
    means = [_mean(values[s : s + c]) for s, c in zip(starts, counts)]
    return keys[starts], means, counts, starts


def pair_by_time(
    features: Sequence[SecondFeature],
    iri: IriStream,
    epoch_origin_ms: int,
    offset_ms: int = 0,
) -> Pairing:
    """Pair on the shared clock.

    An IRI record stamped ``t`` belongs to second
    ``floor((t + offset_ms - epoch_origin_ms) / 1000)``; ``offset_ms``
    corrects residual skew of the profiler clock.  ``chainage_start_m`` is
    the chainage of the first record in the second.
    """
    if len(iri) == 0 or len(features) == 0:
        raise AlignmentError("no overlap between acceleration and IRI streams")
    t = np.asarray(iri.t_ms, dtype=np.int64)
    order = np.argsort(t, kind="stable")
    sec = (t[order] + offset_ms - epoch_origin_ms) // 1000
    vals = np.asarray(iri.iri, dtype=float)[order]
    chain = np.asarray(iri.chainage_m, dtype=float)[order]
    keys, means, counts, starts = _group_means(sec, vals)
    by_second = {int(k): (m, int(c), float(chain[s])) for k, m, c, s in zip(keys, means, counts, starts)}

    pairs = []
    for f in features:
        hit = by_second.get(f.second_index)
        if hit is None:
            continue
        mean, count, chainage = hit
        pairs.append(PairedSample(f.second_index, f.mean_magnitude, float(mean), count, chainage))
    if not pairs:
        raise AlignmentError("no overlap between acceleration and IRI streams")
    return Pairing(
        tuple(pairs),
        unpaired_feature_seconds=len(features) - len(pairs),
        unpaired_iri_seconds=len(by_second) - len(pairs),
    )


def pair_by_chainage(
    features: Sequence[SecondFeature],
    iri: IriStream,
    geom: SurveyGeometry = SurveyGeometry(),
) -> Pairing:
    """Pair assuming constant speed: second ``k`` spans chainage ``[k·v, (k+1)·v)``.

    Seconds whose window holds no IRI record are dropped and counted.
    """
    chain = np.asarray(iri.chainage_m, dtype=float)
    vals = np.asarray(iri.iri, dtype=float)
    if np.any(np.diff(chain) <= 0):
        raise ValueError("IRI records must be sorted by chainage")
    pairs = []
    empty = 0
    used = np.zeros(len(chain), dtype=bool)
    for f in features:
        lo = f.second_index * geom.speed_mps
        hi = (f.second_index + 1) * geom.speed_mps
        i0, i1 = np.searchsorted(chain, [lo, hi], side="left")
        if i1 <= i0:
            empty += 1
            continue
        used[i0:i1] = True
        pairs.append(
            PairedSample(f.second_index, f.mean_magnitude, _mean(vals[i0:i1]), int(i1 - i0), float(lo))
        )
    if not pairs:
        raise AlignmentError("no second of acceleration data covers any IRI chainage")
    return Pairing(tuple(pairs), unpaired_feature_seconds=empty, unpaired_iri_seconds=int((~used).sum()))


def split_by_distance(pairs: Sequence[PairedSample], geom: SurveyGeometry, train_km: float):
    """Split into the first ``floor(train_km·1000 / speed)`` pairs and the rest.

    Asking for the whole route returns the full sequence as both halves,
    i.e. training and evaluating on the same data.
    """
    pairs = list(pairs)
    route_m = len(pairs) * geom.speed_mps
    train_m = train_km * 1000.0
    if not train_m > 0:
        raise ValueError("train_km must be positive")
    tol = 1e-9 * max(route_m, 1.0)
    if train_m > route_m + tol:
        raise ValueError(f"train_km={train_km} exceeds route length {route_m / 1000.0:g} km")
    if train_m >= route_m - tol:
        return pairs, pairs
    # guard against 0.015 * 1000 / 15 landing a hair under 1
    n_train = math.floor(train_m / geom.speed_mps + 1e-9)
    return pairs[:n_train], pairs[n_train:]


PAIRS_HEADER = ("second_index", "accel_feature", "iri_mean", "n_iri", "chainage_start_m")


def write_pairs_csv(pairs, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIRS_HEADER)
        for p in pairs:
            w.writerow([p.second_index, repr(p.accel_feature), repr(p.iri_mean), p.n_iri, repr(p.chainage_start_m)])


def read_pairs_csv(path) -> list[PairedSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PAIRS_HEADER:
            raise ValueError(f"{path}: expected header {','.join(PAIRS_HEADER)}")
        out = []
        for row in reader:
            if not row:
                continue
            try:
                out.append(
                    PairedSample(int(row[0]), float(row[1]), float(row[2]), int(row[3]), float(row[4]))
                )
            except (ValueError, IndexError):
                raise ValueError(f"{path}: line {reader.line_num}: malformed pair row") from None
    return out
