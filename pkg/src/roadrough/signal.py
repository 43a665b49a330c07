"""Vibration magnitude, per-second features and pre-survey sensor checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import AccelStream

STANDSTILL_BAND = (9.4, 10.0)
SHAKE_BAND = (4.0, 6.5)
MIN_VALIDATION_SECONDS = 5


def rms_magnitude(ax, ay, az):
    """Vector magnitude ``sqrt(ax² + ay² + az²)`` of 3-axis acceleration.

    Works elementwise on arrays.  Note this is the norm of one sample, not a
    root-mean-square over time.
    """
    out = np.sqrt(np.square(ax) + np.square(ay) + np.square(az))
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class SecondFeature:
    second_index: int
    mean_magnitude: float
    mean_ax: float
    mean_ay: float
    mean_az: float
    n_samples: int


@dataclass(frozen=True)
class ValidationVerdict:
    kind: str
    observed_min: float
    observed_max: float
    band: tuple[float, float]
    passed: bool


class TooFewFeaturesError(ValueError):
    pass


def per_second_features(stream: AccelStream, epoch_origin_ms: int | None = None) -> list[SecondFeature]:
    """Bucket samples into whole seconds and average them.

    Second ``k`` covers ``[origin + 1000k, origin + 1000(k+1))`` ms, with the
    origin defaulting to the first sample.  ``mean_magnitude`` is the mean of
    per-sample magnitudes; the per-axis means are kept alongside.  Seconds
    with no samples are omitted.
    """
    t = np.asarray(stream.t_ms, dtype=np.int64)
    if len(t) == 0:
        return []
    if epoch_origin_ms is None:
        epoch_origin_ms = int(t[0])
    k = (t - epoch_origin_ms) // 1000
    if np.any(np.diff(k) < 0):
        raise ValueError("samples must be sorted by t_ms")
    starts = np.flatnonzero(np.r_[True, np.diff(k) != 0])
    counts = np.diff(np.r_[starts, len(k)])
    mag = rms_magnitude(stream.ax, stream.ay, stream.az)
    sums = [np.add.reduceat(np.asarray(v, dtype=float), starts) for v in (mag, stream.ax, stream.ay, stream.az)]
    means = [s / counts for s in sums]
    return [
        SecondFeature(int(k[s]), float(m), float(x), float(y), float(z), int(c))
        for s, m, x, y, z, c in zip(starts, *means, counts)
    ]


def _validate(features: Sequence[SecondFeature], band, kind) -> ValidationVerdict:
    if len(features) < MIN_VALIDATION_SECONDS:
        raise TooFewFeaturesError(
            f"{kind} check needs at least {MIN_VALIDATION_SECONDS} seconds, got {len(features)}"
        )
    lo, hi = band
    if lo > hi:
        raise ValueError(f"band minimum {lo} exceeds maximum {hi}")
    mags = np.array([f.mean_magnitude for f in features])
    obs_min, obs_max = float(mags.min()), float(mags.max())
    return ValidationVerdict(kind, obs_min, obs_max, (lo, hi), bool(obs_min >= lo and obs_max <= hi))


def validate_standstill(features, band=STANDSTILL_BAND) -> ValidationVerdict:
    """Pass iff every second's mean magnitude lies in ``band`` (gravity, inclusive)."""
    return _validate(features, band, "standstill")


def validate_shake(features, band=SHAKE_BAND) -> ValidationVerdict:
    """Pass iff every second's mean magnitude lies in the manual-shake ``band``."""
    return _validate(features, band, "shake")
