from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from roadrough.align import PairedSample
from roadrough.metrics import (
    ML_FULL,
    ML_PARTIAL,
    RMS,
    CorrelationReport,
    UndefinedCorrelationError,
    build_report,
    pearson_r,
    r_squared,
    read_report_csv,
    write_scatter,
)

# sxy = 149, sxx = 5, syy = 7205 as exact fractions; r = 149 / sqrt(36025)
PEARSON_OUTLIER = 0.7850264209630100471315038


def _exact_r2(x, y):
    x = [Fraction(v) for v in x]
    y = [Fraction(v) for v in y]
    mx, my = sum(x) / len(x), sum(y) / len(y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy * sxy / (sxx * syy)


def test_pearson_examples():
    assert pearson_r([1, 2, 3, 4], [1, 2, 3, 100]) == pytest.approx(PEARSON_OUTLIER, rel=1e-15)
    assert pearson_r([1, 2, 3], [3, 2, 1]) == -1.0
    assert pearson_r([1, 2, 3, 4], [1, -1, -1, 1]) == 0.0


def test_pearson_constant_raises():
    with pytest.raises(UndefinedCorrelationError):
        pearson_r([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        r_squared([1, 2, 3], [5, 5, 5])


def test_pearson_shape_errors():
    with pytest.raises(ValueError):
        pearson_r([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        pearson_r([1], [2])


vec = st.lists(st.integers(-1000, 1000), min_size=3, max_size=40)


@given(vec, st.data())
def test_pearson_matches_fraction_oracle(x, data):
    y = data.draw(st.lists(st.integers(-1000, 1000), min_size=len(x), max_size=len(x)))
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    assert r_squared(x, y) == pytest.approx(float(_exact_r2(x, y)), abs=1e-12)


@given(vec, st.data())
def test_pearson_symmetric(x, data):
    y = data.draw(st.lists(st.integers(-1000, 1000), min_size=len(x), max_size=len(x)))
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    r = pearson_r(x, y)
    assert -1.0 <= r <= 1.0
    assert pearson_r(y, x) == r


@given(vec, st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_line(x, a, c):
    assume(len(set(x)) > 1)
    xs = np.array(x, dtype=float)
    assert pearson_r(xs, a * xs + c) == pytest.approx(1.0, abs=1e-12)
    assert pearson_r(xs, -a * xs + c) == pytest.approx(-1.0, abs=1e-12)


@given(vec, st.data(), st.floats(0.1, 10) | st.floats(-10, -0.1), st.floats(-50, 50))
@settings(max_examples=60)
def test_r_squared_affine_invariant(x, data, a, c):
    y = data.draw(st.lists(st.integers(-1000, 1000), min_size=len(x), max_size=len(x)))
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    xs = np.array(x, dtype=float)
    assert r_squared(a * xs + c, y) == pytest.approx(r_squared(xs, y), abs=1e-9)


def _pairs(n, seed=0):
    rng = np.random.default_rng(seed)
    f, iri = rng.uniform(0.8, 1.2, n), rng.uniform(1, 5, n)
    return [PairedSample(i, float(a), float(b), 3, 15.0 * i) for i, (a, b) in enumerate(zip(f, iri))]


def test_build_report_rows():
    pairs = _pairs(20)
    iri = np.array([p.iri_mean for p in pairs])
    part = np.where(np.arange(20) >= 5, iri * 2 + 1, np.nan)
    rep = build_report(pairs, {ML_PARTIAL: part, ML_FULL: iri + 0.0}, "dev1")
    assert [r.method for r in rep.rows] == [RMS, ML_PARTIAL, ML_FULL]
    assert rep.get(ML_PARTIAL, "dev1").n_pairs == 15
    assert rep.get(ML_PARTIAL, "dev1").r_squared == pytest.approx(1.0)
    assert rep.get(RMS, "dev1").n_pairs == 20
    with pytest.raises(KeyError):
        rep.get(ML_FULL, "dev2")


@given(st.integers(1, 4), st.integers(0, 3), st.booleans())
@settings(max_examples=20, deadline=None)
def test_report_row_count(n_dev, n_ml, rms):
    rep = CorrelationReport()
    for d in range(n_dev):
        pairs = _pairs(12, seed=d)
        preds = {f"m{k}": np.random.default_rng(k).normal(size=12) for k in range(n_ml)}
        if not preds and not rms:
            continue
        rep.extend(build_report(pairs, preds, f"d{d}", include_rms=rms))
    n_methods = n_ml + int(rms)
    assert len(rep.rows) == (n_methods * n_dev if n_methods else 0)
    assert all(0.0 <= r.r_squared <= 1.0 for r in rep.rows)


def test_build_report_errors():
    pairs = _pairs(5)
    with pytest.raises(ValueError):
        build_report(pairs, {"m": [1.0, 2.0]}, "d")
    with pytest.raises(ValueError):
        build_report(pairs, {"m": [np.nan] * 4 + [1.0]}, "d")


def test_report_csv_and_text(tmp_path):
    rep = build_report(_pairs(30), {ML_FULL: np.arange(30.0)}, "phone-a", metadata={"seed": 42})
    rep.extend(build_report(_pairs(30, 1), {ML_FULL: np.arange(30.0)}, "phone-b"))
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "method,device,r,r_squared,n_pairs"
    path = tmp_path / "report.csv"
    path.write_text(csv_text)
    assert read_report_csv(path).rows == rep.rows
    text = rep.to_text().splitlines()
    assert text[0].split() == ["method", "phone-a", "phone-b"]
    assert text[1].split()[0] == RMS
    assert "# seed: 42" in text


def test_scatter_outputs_are_reproducible(tmp_path):
    pairs = _pairs(15)
    a = write_scatter(pairs, tmp_path / "a", "dev")
    b = write_scatter(pairs, tmp_path / "b", "dev")
    assert [p.name for p in a] == ["scatter_dev.csv", "scatter_dev.svg"]
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()
