"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time
from pathlib import Path

import numpy as np
import pytest
from mpmath import mp, mpf

from roadrough.align import SurveyGeometry, pair_by_time, split_by_distance
from roadrough.cli import main, run_pipeline
from roadrough.ingest import parse_accel_log, parse_iri_log, write_accel_log
from roadrough.metrics import ML_FULL, ML_PARTIAL, RMS, r_squared
from roadrough.model import TansigRegressor, TrainConfig, gradient_check, tansig, trailing_windows, train
from roadrough.signal import per_second_features, rms_magnitude, validate_shake, validate_standstill
from roadrough.synth import constant_magnitude_stream, generate, paper_like_scenario, scenario_preset, write_dataset

GEOM = SurveyGeometry()
DEVICE_SEEDS = (42, 43, 44)


@pytest.fixture
def verdict(capsys, request):
    def emit(ok, detail):
        name = request.node.name.replace("test_", "", 1)
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, detail

    return emit


def _pairs_for(scenario):
    accel, iri, truth = generate(scenario)
    feats = per_second_features(accel)
    return list(pair_by_time(feats, iri, int(accel.t_ms[0]))), truth


def _holdout(model, test_pairs, window_n):
    X, ends = trailing_windows(
        [p.second_index for p in test_pairs], [p.accel_feature for p in test_pairs], window_n
    )
    y = np.array([test_pairs[i].iri_mean for i in ends])
    return X, y


def test_c1_formula_fidelity(verdict):
    t0 = time.perf_counter()
    mp.dps = 40
    oracle = float(2 / (1 + mp.exp(-2 * mpf(1))) - 1)
    err1 = abs(tansig(1.0) - oracle)

    rng = np.random.default_rng(2024)
    # float64 rounds tansig to exactly +-1 past |a| ~ 19, so the open range is checked inside that
    a = rng.uniform(-18.0, 18.0, 1_000_000)
    y = tansig(a)
    odd = bool(np.all(tansig(-a) == -y))
    inside = bool(np.all(np.abs(y) < 1.0))
    wide = tansig(rng.normal(0, 1e3, 1_000_000))
    closed = bool(np.all(np.abs(wide) <= 1.0) and np.all(np.isfinite(wide)))

    v = rng.normal(size=(100_000, 3)) * rng.uniform(0.01, 100, (100_000, 1))
    k = rng.uniform(-50, 50, 100_000)
    base = rms_magnitude(v[:, 0], v[:, 1], v[:, 2])
    homo = np.max(np.abs(rms_magnitude(*(k[:, None] * v).T) - np.abs(k) * base) / (np.abs(k) * base))
    perm_err = 0.0
    for p in ([1, 2, 0], [2, 0, 1], [0, 2, 1]):
        s = rng.choice([-1.0, 1.0], size=(100_000, 3))
        w = v[:, p] * s
        perm_err = max(perm_err, float(np.max(np.abs(rms_magnitude(*w.T) - base) / base)))
    elapsed = time.perf_counter() - t0
    ok = err1 <= 1e-12 and odd and inside and closed and homo <= 1e-14 and perm_err <= 1e-15 and elapsed < 5
    verdict(ok, f"|tansig(1)-oracle|={err1:.1e} odd={odd} range={inside and closed} "
                f"homog={homo:.1e} perm={perm_err:.1e} t={elapsed:.2f}s")


def test_c2_gradient_correctness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 8))
        hidden = int(rng.integers(0, 9))
        sizes = [(1, n)] if hidden == 0 else [(hidden, n), (1, hidden)]
        model = TansigRegressor.from_params(
            [rng.uniform(-1, 1, s) for s in sizes],
            [rng.uniform(-1, 1, s[0]) for s in sizes],
            input_norm=(rng.uniform(0.5, 5, n), rng.uniform(-1, 1, n)),
            output_norm=(rng.uniform(0.2, 2), rng.uniform(-1, 1)),
        )
        # draw in the normalized domain the trainer works in, then map back to raw units
        window = (rng.uniform(-1, 1, n) - model.input_offset_) / model.input_scale_
        target = float(model.denormalize_target(rng.uniform(-0.9, 0.9)))
        worst = max(worst, gradient_check(model, window, target))
    elapsed = time.perf_counter() - t0
    verdict(worst <= 1e-5 and elapsed < 10, f"max rel err={worst:.2e} over 100 triples t={elapsed:.2f}s")


def test_c3_geometry(verdict, tmp_path):
    t0 = time.perf_counter()
    paths = write_dataset(paper_like_scenario(42), tmp_path)
    accel = parse_accel_log(paths["accel"])
    iri = parse_iri_log(paths["iri"])
    pairing = pair_by_time(per_second_features(accel), iri, int(accel.t_ms[0]))
    train_p, test_p = split_by_distance(pairing, GEOM, 2.0)
    elapsed = time.perf_counter() - t0
    n_iri = {p.n_iri for p in pairing}
    ok = len(pairing) == 600 and n_iri == {3} and (len(train_p), len(test_p)) == (133, 467) and elapsed < 5
    verdict(ok, f"pairs={len(pairing)} n_iri={sorted(n_iri)} split={len(train_p)}/{len(test_p)} t={elapsed:.2f}s")


def test_c4_oracle_recovery(verdict):
    t0 = time.perf_counter()
    pairs, _ = _pairs_for(scenario_preset("tansig", seed=42))
    train_p, test_p = split_by_distance(pairs, GEOM, 2.0)
    cfg = TrainConfig()
    model, _ = train(train_p, cfg)
    X, y = _holdout(model, test_p, cfg.window_n)
    r2 = r_squared(model.predict(X), y)
    nmse = float(np.mean((model.decision_function_norm(X) - model.normalize_target(y)) ** 2))
    elapsed = time.perf_counter() - t0
    verdict(r2 >= 0.95 and nmse <= 1e-3 and elapsed < 60,
            f"held-out r2={r2:.4f} normalized MSE={nmse:.2e} t={elapsed:.1f}s")


def test_c5_null_coupling(verdict):
    t0 = time.perf_counter()
    cfg = TrainConfig()
    scores = []
    for seed in range(20):
        pairs, _ = _pairs_for(scenario_preset("none", seed=seed))
        train_p, test_p = split_by_distance(pairs, GEOM, 2.0)
        model, _ = train(train_p, cfg)
        X, y = _holdout(model, test_p, cfg.window_n)
        scores.append(r_squared(model.predict(X), y))
    elapsed = time.perf_counter() - t0
    verdict(max(scores) < 0.1 and elapsed < 300,
            f"max held-out r2={max(scores):.4f} mean={np.mean(scores):.4f} over 20 seeds t={elapsed:.1f}s")


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("three_devices")
    devices = []
    for seed in DEVICE_SEEDS:
        paths = write_dataset(paper_like_scenario(seed), root / f"dev{seed}")
        devices.append(f'[[devices]]\nlabel = "phone{seed}"\naccel = "{paths["accel"]}"\niri = "{paths["iri"]}"\n')
    runs = []
    for out in ("run_a", "run_b"):
        cfg = root / f"{out}.toml"
        cfg.write_text(f'seed = 42\nout_dir = "{out}"\ntrain_km = [2, 9]\n\n' + "\n".join(devices))
        report = run_pipeline(cfg)
        runs.append((report, root / out))
    return runs


def test_c6_method_ordering(verdict, pipeline_runs):
    report, _ = pipeline_runs[0]
    lines = []
    ok = True
    for seed in DEVICE_SEEDS:
        dev = f"phone{seed}"
        rms = report.get(RMS, dev).r_squared
        part = report.get(ML_PARTIAL, dev).r_squared
        full = report.get(ML_FULL, dev).r_squared
        ok &= part >= rms and full >= rms and full >= part
        lines.append(f"{dev} RMS={rms:.3f} 2km={part:.3f} 9km={full:.3f}")
    verdict(ok, "; ".join(lines))


def test_c7_validation_bands(verdict, tmp_path):
    results = {}
    codes = {}
    for mag in (9.81, 5.0):
        stream = constant_magnitude_stream(mag, seconds=10)
        feats = per_second_features(stream)
        results[mag] = (validate_standstill(feats).passed, validate_shake(feats).passed)
        log = tmp_path / f"const_{mag}.csv"
        write_accel_log(stream, log)
        for kind in ("standstill", "shake"):
            codes[(mag, kind)] = main(["validate", kind, str(log), "--manifest", str(tmp_path / "m.json")])
    ok = (
        results == {9.81: (True, False), 5.0: (False, True)}
        and codes == {(9.81, "standstill"): 0, (9.81, "shake"): 2, (5.0, "standstill"): 2, (5.0, "shake"): 0}
    )
    verdict(ok, f"verdicts={results} exit codes={codes}")


def test_c8_determinism(verdict, pipeline_runs):
    (_, a), (_, b) = pipeline_runs
    names = ["report.csv", "report.txt"] + sorted(p.name for p in a.glob("model_*.txt"))
    same = [n for n in names if (a / n).read_bytes() == (b / n).read_bytes()]
    verdict(len(same) == len(names) and len(names) == 2 + 2 * len(DEVICE_SEEDS),
            f"{len(same)}/{len(names)} report and model files byte-identical")


def test_c9_round_trip(verdict, tmp_path):
    scenario = paper_like_scenario(42)
    paths = write_dataset(scenario, tmp_path)
    accel = parse_accel_log(paths["accel"])
    iri = parse_iri_log(paths["iri"])
    pairing = pair_by_time(per_second_features(accel), iri, int(accel.t_ms[0]))
    _, _, truth = generate(scenario)
    got = np.array([p.accel_feature for p in pairing])
    err = float(np.max(np.abs(got - truth.feature[[p.second_index for p in pairing]])))
    verdict(len(pairing) == scenario.n_seconds and err <= 1e-9,
            f"max |feature - truth|={err:.2e} over {len(pairing)} seconds")
