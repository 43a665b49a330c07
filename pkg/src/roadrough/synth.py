"""Synthetic survey datasets with a known acceleration/IRI relationship.

A scenario fixes the survey geometry (route length, speed, profiler spacing,
sampling rate) and how acceleration relates to roughness:

``none``
    Per-second features are i.i.d. noise around a constant level; IRI is an
    independent random walk.
``linear``
    ``feature = intercept + slope * IRI + noise``.
``tansig_network``
    Features are drawn i.i.d. from ``feature_range`` and the IRI of each
    second is produced by a tansig network applied to the trailing window of
    clean features, optionally blended with a random walk (``strength``).
    The generating network is returned so it can serve as an oracle.

Raw 100 Hz samples are synthesised so that each second's mean magnitude
equals the intended feature, which makes generate -> parse -> align
round-trips exact up to float rounding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ingest import AccelStream, IriStream, write_accel_log, write_iri_log
from .model import TansigRegressor, trailing_windows

COUPLINGS = ("none", "linear", "tansig_network")
DEFAULT_ORIGIN_MS = 1_557_900_000_000  # mid-May 2019, any fixed value works


@dataclass(frozen=True)
class SynthScenario:
    route_km: float = 9.0
    speed_mps: float = 15.0
    iri_spacing_m: float = 5.0
    accel_hz: int = 100
    coupling: str = "none"
    coupling_params: dict = field(default_factory=dict)
    noise_sigma: float = 0.05
    seed: int = 42
    iri_bounds: tuple = (0.5, 8.0)
    feature_bounds: tuple | None = None
    origin_ms: int = DEFAULT_ORIGIN_MS

    def __post_init__(self):
        for name in ("route_km", "speed_mps", "iri_spacing_m", "accel_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"unknown coupling {self.coupling!r}; expected one of {COUPLINGS}")
        lo, hi = self.iri_bounds
        if not 0 <= lo < hi:
            raise ValueError("iri_bounds must satisfy 0 <= low < high")
        p = self.coupling_params
        if self.coupling == "linear" and not {"intercept", "slope"} <= set(p):
            raise ValueError("linear coupling needs 'intercept' and 'slope'")
        if self.coupling == "tansig_network":
            s = p.get("strength", 1.0)
            if not 0 <= s <= 1:
                raise ValueError("strength must lie in [0, 1]")
            f_lo, f_hi = p.get("feature_range", (0.8, 1.2))
            if not 0 <= f_lo < f_hi:
                raise ValueError("feature_range must satisfy 0 <= low < high")

    @property
    def n_seconds(self) -> int:
        return int(round(self.route_km * 1000.0 / self.speed_mps))

    @property
    def n_iri_records(self) -> int:
        return int(round(self.route_km * 1000.0 / self.iri_spacing_m))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    second_index: np.ndarray
    iri: np.ndarray
    feature: np.ndarray
    clean_feature: np.ndarray
    generator: TansigRegressor | None
    scenario: SynthScenario


def paper_like_scenario(seed: int = 42) -> SynthScenario:
    """9 km at 15 m/s, 5 m profiler spacing, 100 Hz, features in 0.8-1.2 m/s².

    IRI is half random walk, half an even tansig function of the recent
    acceleration history.  The same-second linear correlation is therefore
    near zero while a windowed nonlinear model can recover part of the
    signal.
    """
    return SynthScenario(
        coupling="tansig_network",
        coupling_params={"strength": 0.5, "feature_range": (0.8, 1.2), "symmetric": True},
        noise_sigma=0.02,
        feature_bounds=(0.8, 1.2),
        seed=seed,
    )


def scenario_preset(name: str, seed: int = 42) -> SynthScenario:
    if name == "paper-like":
        return paper_like_scenario(seed)
    if name == "none":
        return SynthScenario(coupling="none", coupling_params={"level": 1.0}, noise_sigma=0.05, seed=seed)
    if name == "linear":
        return SynthScenario(
            coupling="linear",
            coupling_params={"intercept": 0.8, "slope": 0.05},
            noise_sigma=0.02,
            seed=seed,
        )
    if name == "tansig":
        return SynthScenario(
            coupling="tansig_network",
            coupling_params={"strength": 1.0, "feature_range": (0.8, 1.2)},
            noise_sigma=0.0,
            seed=seed,
        )
    raise ValueError(f"unknown scenario {name!r}")


def smooth_random_walk(rng: np.random.Generator, n: int, bounds, persistence=0.95, step_frac=0.01):
    """Random walk with correlated increments, reflected into ``bounds``."""
    lo, hi = bounds
    span = hi - lo
    x = rng.uniform(lo + 0.25 * span, hi - 0.25 * span)
    v = 0.0
    kicks = rng.normal(0.0, step_frac * span, size=n)
    out = np.empty(n)
    for i in range(n):
        v = persistence * v + kicks[i]
        x += v
        if x < lo:
            x, v = 2 * lo - x, -v
        elif x > hi:
            x, v = 2 * hi - x, -v
        out[i] = min(max(x, lo), hi)
    return out


def random_generator_network(
    rng, window_n=5, hidden_units=8, feature_range=(0.8, 1.2), symmetric=False
) -> TansigRegressor:
    """Tansig network with random parameters over normalized inputs.

    By default every parameter is drawn from U[-0.5, 0.5].  With
    ``symmetric`` the hidden units come in mirrored pairs (input weights
    ``W`` and ``-W``, shared bias and output weight), which makes the
    network an even function of the centred window: it has no linear
    correlation with any single input, only a curved dependence.
    """
    if symmetric:
        if hidden_units % 2:
            raise ValueError("symmetric generator needs an even number of hidden units")
        half = hidden_units // 2
        w = rng.uniform(-1.0, 1.0, size=(half, window_n))
        b = rng.choice([-1.0, 1.0], size=half) * rng.uniform(0.3, 1.0, size=half)
        v = rng.uniform(-0.5, 0.5, size=half)
        w1, b1, w2 = np.r_[w, -w], np.r_[b, b], np.r_[v, v][None, :]
    else:
        w1 = rng.uniform(-0.5, 0.5, size=(hidden_units, window_n))
        b1 = rng.uniform(-0.5, 0.5, size=hidden_units)
        w2 = rng.uniform(-0.5, 0.5, size=(1, hidden_units))
    b2 = rng.uniform(-0.5, 0.5, size=1)
    lo, hi = feature_range
    scale = 2.0 / (hi - lo)
    return TansigRegressor.from_params(
        [w1, w2], [b1, b2], input_norm=(np.full(window_n, scale), np.full(window_n, -1.0 - lo * scale))
    )


def _padded_windows(values: np.ndarray, window_n: int) -> np.ndarray:
    padded = np.r_[np.full(window_n - 1, values[0]), values]
    X, _ = trailing_windows(np.arange(len(padded)), padded, window_n)
    return X


def _features_and_iri(scenario: SynthScenario, rng_walk, rng_feat, rng_net):
    n = scenario.n_seconds
    p = scenario.coupling_params
    walk = smooth_random_walk(rng_walk, n, scenario.iri_bounds)
    generator = None
    if scenario.coupling == "none":
        clean = np.full(n, float(p.get("level", 1.0)))
        iri = walk
    elif scenario.coupling == "linear":
        iri = walk
        clean = p["intercept"] + p["slope"] * iri
    else:
        f_lo, f_hi = p.get("feature_range", (0.8, 1.2))
        window_n = int(p.get("window_n", 5))
        clean = rng_feat.uniform(f_lo, f_hi, size=n)
        generator = random_generator_network(
            rng_net, window_n, int(p.get("hidden_units", 8)), (f_lo, f_hi), bool(p.get("symmetric", False))
        )
        X = _padded_windows(clean, window_n)
        z = generator.decision_function_norm(X)
        lo, hi = scenario.iri_bounds
        # choose the output mapping so the generator emits IRI directly
        scale = (z.max() - z.min()) / (hi - lo)
        generator.output_scale_ = float(scale)
        generator.output_offset_ = float(z.min() - lo * scale)
        net_iri = np.clip(generator.predict(X), lo, hi)
        s = float(p.get("strength", 1.0))
        iri = net_iri if s == 1.0 else (1.0 - s) * walk + s * net_iri
    feature = clean + rng_feat.normal(0.0, scenario.noise_sigma, size=n) if scenario.noise_sigma else clean.copy()
    if scenario.feature_bounds is not None:
        feature = np.clip(feature, *scenario.feature_bounds)
    feature = np.maximum(feature, 1e-3)
    return feature, clean, iri, generator


def _raw_samples(rng, features: np.ndarray, hz: int):
    """Per-sample 3-axis acceleration whose per-second mean magnitude is ``features``."""
    n = len(features)
    jitter = rng.uniform(-0.3, 0.3, size=(n, hz))
    jitter -= jitter.mean(axis=1, keepdims=True)
    mags = features[:, None] * (1.0 + jitter)
    mags += features[:, None] - mags.mean(axis=1, keepdims=True)
    dirs = rng.normal(size=(n, hz, 3))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    xyz = mags[:, :, None] * dirs
    return xyz.reshape(n * hz, 3)


def generate(scenario: SynthScenario):
    """Build ``(accel stream, IRI stream, ground truth)`` for a scenario."""
    seqs = np.random.SeedSequence(scenario.seed).spawn(5)
    rng_walk, rng_feat, rng_net, rng_raw, rng_iri = (np.random.default_rng(s) for s in seqs)
    feature, clean, iri, generator = _features_and_iri(scenario, rng_walk, rng_feat, rng_net)
    n = scenario.n_seconds
    hz = int(scenario.accel_hz)
    origin = int(scenario.origin_ms)

    xyz = _raw_samples(rng_raw, feature, hz)
    j = np.arange(n * hz)
    t_ms = origin + (j // hz) * 1000 + np.floor((j % hz) * 1000.0 / hz).astype(np.int64)
    accel = AccelStream.from_arrays(t_ms, xyz[:, 0], xyz[:, 1], xyz[:, 2], device_label=f"synth-{scenario.seed}")

    chainage = np.arange(scenario.n_iri_records) * float(scenario.iri_spacing_m)
    rel_ms = np.floor(chainage * 1000.0 / scenario.speed_mps + 1e-6).astype(np.int64)
    sec = rel_ms // 1000
    inside = sec < n
    chainage, rel_ms, sec = chainage[inside], rel_ms[inside], sec[inside]
    jitter = rng_iri.uniform(-0.2, 0.2, size=len(sec))
    counts = np.bincount(sec, minlength=n)
    jitter -= (np.bincount(sec, weights=jitter, minlength=n) / np.maximum(counts, 1))[sec]
    values = np.maximum(iri[sec] + jitter, 0.0)
    iri_stream = IriStream.from_arrays(origin + rel_ms, chainage, values, device_label=f"synth-{scenario.seed}")

    truth = GroundTruth(
        second_index=np.arange(n),
        iri=iri,
        feature=feature,
        clean_feature=clean,
        generator=generator,
        scenario=scenario,
    )
    return accel, iri_stream, truth


def constant_magnitude_stream(
    magnitude: float, seconds: int = 10, hz: int = 100, seed: int = 0, origin_ms: int = DEFAULT_ORIGIN_MS
) -> AccelStream:
    """Stream whose every sample has the same magnitude in a random direction."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(seconds * hz, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    xyz = magnitude * dirs
    j = np.arange(seconds * hz)
    t_ms = origin_ms + (j // hz) * 1000 + np.floor((j % hz) * 1000.0 / hz).astype(np.int64)
    return AccelStream.from_arrays(t_ms, xyz[:, 0], xyz[:, 1], xyz[:, 2])


def write_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["second_index", "iri_true", "accel_feature", "accel_feature_clean"])
        for row in zip(truth.second_index.tolist(), truth.iri.tolist(), truth.feature.tolist(), truth.clean_feature.tolist()):
            w.writerow([row[0], *map(repr, row[1:])])


def write_dataset(scenario: SynthScenario, out_dir) -> dict:
    """Generate a scenario and write ``accel.csv``, ``iri.csv`` and ``truth.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    accel, iri, truth = generate(scenario)
    paths = {"accel": out / "accel.csv", "iri": out / "iri.csv", "truth": out / "truth.csv"}
    write_accel_log(accel, paths["accel"])
    write_iri_log(iri, paths["iri"])
    write_truth(truth, paths["truth"])
    return paths


def with_seed(scenario: SynthScenario, seed: int) -> SynthScenario:
    return replace(scenario, seed=seed)
